#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "adcrowd/graph.hpp"
#include "adcrowd/rng.hpp"
#include "adcrowd/tensor.hpp"

// Central-difference oracle, 64-bit only. The numeric side never touches the
// backward pass: it re-runs the forward at x +/- h, so a broken backward
// cannot certify itself.

namespace adcrowd {

// Max relative error between `analytic` and (f(x+h)-f(x-h))/(2h) per element
// of x. `eval` is a pure scalar function of the tensor.
template <typename F>
double fd_max_rel_err(const Tensor64& x, const Tensor64& analytic, F eval, double h) {
  Tensor64 xp = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    xp.v[i] = x.v[i] + h;
    const double fp = eval(xp);
    xp.v[i] = x.v[i] - h;
    const double fm = eval(xp);
    xp.v[i] = x.v[i];
    const double num = (fp - fm) / (2.0 * h);
    const double a = analytic.v[i];
    const double err = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-8});
    worst = std::max(worst, err);
  }
  return worst;
}

// f builds a scalar loss from (graph, input var). Analytic gradients come
// from one backward pass through a fresh graph; the finite-difference side
// rebuilds the graph per probe.
inline double grad_check(const std::function<Var(Graph64&, Var)>& f, const Tensor64& x,
                         double h) {
  Graph64 g;
  const Var xi = g.leaf(x, true);
  const Var loss = f(g, xi);
  g.backward(loss);
  const Tensor64 analytic = g.grad(xi);
  auto eval = [&f](const Tensor64& xp) {
    Graph64 g2;
    const Var v = g2.leaf(xp, false);
    return g2.val(f(g2, v)).v[0];
  };
  return fd_max_rel_err(x, analytic, eval, h);
}

// Deterministic probe weights so a scalar loss exercises every output
// element of a map-valued op: loss = sum(out * probe).
template <typename T>
TensorT<T> probe_weights(const std::vector<int>& shape, std::uint64_t seed) {
  SplitMix64 rng(mix64(seed ^ fnv1a64("gradcheck.probe")));
  TensorT<T> t(shape);
  for (auto& v : t.v) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return t;
}

}  // namespace adcrowd
