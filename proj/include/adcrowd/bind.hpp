#pragma once

#include <string>
#include <vector>

#include "adcrowd/graph.hpp"
#include "adcrowd/params.hpp"

namespace adcrowd {

// Parameter tensors bound as graph leaves, one per entry in order. Lookup is
// by name; networks are small enough that linear search never shows up.
template <typename T>
struct BoundParamsT {
  const NetworkParamsT<T>* params = nullptr;
  std::vector<Var> vars;

  Var operator[](const std::string& name) const {
    for (std::size_t i = 0; i < params->entries.size(); ++i)
      if (params->entries[i].name == name) return vars[i];
    throw std::invalid_argument("unbound parameter: " + name);
  }
};

template <typename T>
BoundParamsT<T> bind_params(GraphT<T>& g, const NetworkParamsT<T>& p, bool needs_grad) {
  BoundParamsT<T> b;
  b.params = &p;
  b.vars.reserve(p.entries.size());
  for (const auto& e : p.entries) b.vars.push_back(g.leaf(e.tensor, needs_grad));
  return b;
}

// Adds the leaf gradients into the entries (so several graphs can contribute
// to one optimizer step) and marks them populated.
template <typename T>
void harvest_grads(GraphT<T>& g, const BoundParamsT<T>& b, NetworkParamsT<T>& p) {
  for (std::size_t i = 0; i < p.entries.size(); ++i) {
    const TensorT<T>& src = g.grad(b.vars[i]);
    auto& dst = p.entries[i].grad;
    for (std::int64_t j = 0; j < dst.numel(); ++j) dst.v[j] += src.v[j];
    p.entries[i].has_grad = true;
  }
}

}  // namespace adcrowd
