#include "adcrowd/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "adcrowd/amg.hpp"
#include "adcrowd/bind.hpp"
#include "adcrowd/deform.hpp"
#include "adcrowd/dme.hpp"
#include "adcrowd/gradcheck.hpp"
#include "adcrowd/graph.hpp"
#include "adcrowd/kernels.hpp"
#include "adcrowd/rng.hpp"

namespace adcrowd {

namespace {

constexpr double kTol = 1e-4;

Tensor64 rand_tensor(const std::vector<int>& shape, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
  SplitMix64 rng = rng_for(seed, "gradcheck.probe", 0);
  Tensor64 t(shape);
  for (auto& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

// values pushed away from zero so the relu kink never sits within an FD step
Tensor64 rand_tensor_nonzero(const std::vector<int>& shape, std::uint64_t seed) {
  Tensor64 t = rand_tensor(shape, seed);
  for (auto& v : t.v) v = (v < 0 ? -1.0 : 1.0) * (0.1 + 0.9 * std::abs(v));
  return t;
}

// probe-weighted sum turns a map-valued op into a scalar that still sees
// every output element
Var probe_loss(Graph64& g, Var out, std::uint64_t seed) {
  const Var probe = g.leaf(rand_tensor(g.val(out).shape, seed ^ 0x9e37u), false);
  return g.sum_all(g.elementwise_mul(out, probe));
}

// worst error across three seeds
template <typename MakeCheck>
OpCheck over_seeds(const std::string& name, MakeCheck mk) {
  OpCheck c{name, 0.0, false};
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    c.max_rel_err = std::max(c.max_rel_err, mk(seed));
  c.pass = c.max_rel_err <= kTol;
  return c;
}

double check_conv_input(std::uint64_t seed, int stride, int pad, int dil) {
  const Tensor64 x = rand_tensor({1, 2, 6, 6}, seed);
  const Tensor64 w = rand_tensor({3, 2, 3, 3}, seed + 10);
  const Tensor64 b = rand_tensor({3}, seed + 20);
  return grad_check(
      [&](Graph64& g, Var xi) {
        const Var y = g.conv2d(xi, g.leaf(w), g.leaf(b), stride, pad, dil);
        return probe_loss(g, y, seed);
      },
      x, 1e-3);
}

double check_conv_weight(std::uint64_t seed) {
  const Tensor64 x = rand_tensor({1, 2, 6, 6}, seed);
  const Tensor64 b = rand_tensor({3}, seed + 20);
  return grad_check(
      [&](Graph64& g, Var wi) {
        const Var y = g.conv2d(g.leaf(x), wi, g.leaf(b), 1, 1, 1);
        return probe_loss(g, y, seed);
      },
      rand_tensor({3, 2, 3, 3}, seed + 10), 1e-3);
}

double check_conv_bias(std::uint64_t seed) {
  const Tensor64 x = rand_tensor({1, 2, 6, 6}, seed);
  const Tensor64 w = rand_tensor({3, 2, 3, 3}, seed + 10);
  return grad_check(
      [&](Graph64& g, Var bi) {
        const Var y = g.conv2d(g.leaf(x), g.leaf(w), bi, 1, 1, 1);
        return probe_loss(g, y, seed);
      },
      rand_tensor({3}, seed + 20), 1e-3);
}

double check_max_pool(std::uint64_t seed) {
  return grad_check(
      [&](Graph64& g, Var xi) { return probe_loss(g, g.max_pool2(xi), seed); },
      rand_tensor({1, 2, 6, 6}, seed), 1e-5);
}

double check_gap(std::uint64_t seed) {
  return grad_check(
      [&](Graph64& g, Var xi) { return probe_loss(g, g.global_avg_pool(xi), seed); },
      rand_tensor({2, 3, 4, 4}, seed), 1e-4);
}

double check_softmax(std::uint64_t seed) {
  return grad_check(
      [&](Graph64& g, Var xi) { return probe_loss(g, g.softmax(xi), seed); },
      rand_tensor({3, 4}, seed), 1e-4);
}

double check_resize(std::uint64_t seed, int oh, int ow) {
  return grad_check(
      [&](Graph64& g, Var xi) { return probe_loss(g, g.bilinear_resize(xi, oh, ow), seed); },
      rand_tensor({1, 2, 5, 7}, seed), 1e-4);
}

double check_relu(std::uint64_t seed) {
  return grad_check(
      [&](Graph64& g, Var xi) { return probe_loss(g, g.relu(xi), seed); },
      rand_tensor_nonzero({1, 3, 5, 5}, seed), 1e-5);
}

double check_cross_entropy(std::uint64_t seed) {
  const std::vector<int> labels{0, 1, 1, 0};
  return grad_check(
      [&](Graph64& g, Var xi) { return g.cross_entropy_2class(xi, labels); },
      rand_tensor({4, 2}, seed), 1e-4);
}

// direct kernel-level audit of the sampler's spatial derivative
double check_sample_coords(std::uint64_t seed) {
  const int h = 8, w = 8;
  const Tensor64 plane = rand_tensor({1, 1, h, w}, seed);
  const double pts[][2] = {{1.3, 2.7}, {0.35, 6.55}, {6.45, 0.85}, {7.4, 7.3}, {3.6, 4.4}};
  const double step = 1e-5;
  double worst = 0.0;
  for (const auto& pt : pts) {
    double dy, dx;
    kern::bilinear_sample_spatial_grad(plane.data(), h, w, pt[0], pt[1], dy, dx);
    const double ny = (kern::bilinear_sample(plane.data(), h, w, pt[0] + step, pt[1]) -
                       kern::bilinear_sample(plane.data(), h, w, pt[0] - step, pt[1])) /
                      (2 * step);
    const double nx = (kern::bilinear_sample(plane.data(), h, w, pt[0], pt[1] + step) -
                       kern::bilinear_sample(plane.data(), h, w, pt[0], pt[1] - step)) /
                      (2 * step);
    worst = std::max(worst,
                     std::abs(dy - ny) / std::max({std::abs(dy), std::abs(ny), 1e-8}));
    worst = std::max(worst,
                     std::abs(dx - nx) / std::max({std::abs(dx), std::abs(nx), 1e-8}));
  }
  return worst;
}

double check_sample_feature(std::uint64_t seed) {
  const int h = 8, w = 8;
  const Tensor64 plane = rand_tensor({1, 1, h, w}, seed);
  const double pts[][2] = {{1.3, 2.7}, {0.35, 6.55}, {6.45, 0.85}, {7.4, 7.3}, {3.6, 4.4}};
  const double coef[] = {0.7, -1.1, 0.4, 0.9, -0.6};
  auto eval = [&](const Tensor64& p) {
    double s = 0.0;
    for (int i = 0; i < 5; ++i)
      s += coef[i] * kern::bilinear_sample(p.data(), h, w, pts[i][0], pts[i][1]);
    return s;
  };
  Tensor64 analytic({1, 1, h, w});
  for (int i = 0; i < 5; ++i)
    kern::bilinear_sample_scatter(analytic.data(), h, w, pts[i][0], pts[i][1], coef[i]);
  return fd_max_rel_err(plane, analytic, eval, 1e-5);
}

// A small deform layer with offsets biased into (0.1, 0.4): every sampling
// position stays a safe distance from the integer lattice, where the
// bilinear map is smooth, so central differences are valid.
struct DeformFixture {
  Tensor64 x, w, b, ow_, ob;
  int k, pad;
};

DeformFixture deform_fixture(std::uint64_t seed, int k) {
  DeformFixture f;
  f.k = k;
  f.pad = 0;
  f.x = rand_tensor({1, 2, 8, 8}, seed);
  f.w = rand_tensor({2, 2, k, k}, seed + 1);
  f.b = rand_tensor({2}, seed + 2);
  f.ow_ = rand_tensor({2 * k * k, 2, k, k}, seed + 3, -0.01, 0.01);
  f.ob = rand_tensor({2 * k * k}, seed + 4, 0.1, 0.4);
  return f;
}

Var deform_loss(Graph64& g, const DeformFixture& f, Var x, Var w, Var b, Var ow, Var ob,
                std::uint64_t seed) {
  const Var y = deform_conv2d_graph(g, x, w, b, ow, ob, 1, f.pad);
  return probe_loss(g, y, seed);
}

double check_deform(std::uint64_t seed, int which) {
  const DeformFixture f = deform_fixture(seed, 3);
  const Tensor64* probed[] = {&f.x, &f.w, &f.b, &f.ow_, &f.ob};
  return grad_check(
      [&](Graph64& g, Var v) {
        Var vars[5];
        for (int i = 0; i < 5; ++i)
          vars[i] = (i == which) ? v : g.leaf(*probed[i]);
        return deform_loss(g, f, vars[0], vars[1], vars[2], vars[3], vars[4], seed);
      },
      *probed[which], 1e-5);
}

double check_density_loss(std::uint64_t seed) {
  const Tensor64 gt = rand_tensor({2, 1, 4, 4}, seed + 7, 0.0, 1.0);
  return grad_check(
      [&](Graph64& g, Var pred) { return density_loss_graph(g, pred, g.leaf(gt), 2); },
      rand_tensor({2, 1, 4, 4}, seed), 1e-4);
}

double check_inject_features(std::uint64_t seed) {
  const Tensor64 att = rand_tensor({1, 1, 8, 8}, seed + 5, 0.0, 1.0);
  return grad_check(
      [&](Graph64& g, Var feat) {
        const Var a = g.bilinear_resize(g.leaf(att), 4, 4);
        return probe_loss(g, g.broadcast_mul_channels(feat, a), seed);
      },
      rand_tensor({1, 3, 4, 4}, seed), 1e-4);
}

double check_inject_attention_side(std::uint64_t seed) {
  const Tensor64 feat = rand_tensor({1, 3, 4, 4}, seed);
  return grad_check(
      [&](Graph64& g, Var att) {
        const Var a = g.bilinear_resize(att, 4, 4);
        return probe_loss(g, g.broadcast_mul_channels(g.leaf(feat), a), seed);
      },
      rand_tensor({1, 1, 8, 8}, seed + 5, 0.0, 1.0), 1e-4);
}

// full classifier path: front end, inception, head, GAP, softmax via the
// cross-entropy loss, differentiated w.r.t. the image
double check_amg_path() {
  const AmgNetT<double> net = build_amg<double>(17);
  const std::vector<int> labels{1};
  const Tensor64 x = rand_tensor({1, 1, 16, 16}, 5, 0.0, 1.0);
  return grad_check(
      [&](Graph64& g, Var xi) {
        const BoundParamsT<double> p = bind_params(g, net.params, false);
        const auto out = amg_graph_forward(g, p, xi);
        return g.cross_entropy_2class(g.swap_cols2(out.logits), labels);
      },
      x, 1e-4);
}

// density loss w.r.t. DME parameters through the whole estimator
double check_dme_path(const std::string& pname) {
  const DmeNetT<double> net = build_dme<double>(23);
  const Tensor64 x = rand_tensor({1, 1, 16, 16}, 6, 0.0, 1.0);
  const Tensor64 gt = rand_tensor({1, 1, 4, 4}, 7, 0.0, 1.0);
  const Tensor64 start = net.params.at(pname).tensor;
  return grad_check(
      [&](Graph64& g, Var pv) {
        BoundParamsT<double> p = bind_params(g, net.params, false);
        for (std::size_t i = 0; i < net.params.entries.size(); ++i)
          if (net.params.entries[i].name == pname) p.vars[i] = pv;
        const Var pred = dme_graph_forward(g, p, g.leaf(x));
        return density_loss_graph(g, pred, g.leaf(gt), 1);
      },
      start, 1e-4);
}

}  // namespace

std::vector<OpCheck> gradcheck_suite(bool with_corrupt_fixture) {
  std::vector<OpCheck> out;
  out.push_back(over_seeds("conv2d.input", [](std::uint64_t s) {
    return check_conv_input(s, 1, 1, 1);
  }));
  out.push_back(over_seeds("conv2d.input.s2d2", [](std::uint64_t s) {
    return check_conv_input(s, 2, 2, 2);
  }));
  out.push_back(over_seeds("conv2d.weight", check_conv_weight));
  out.push_back(over_seeds("conv2d.bias", check_conv_bias));
  out.push_back(over_seeds("max_pool2", check_max_pool));
  out.push_back(over_seeds("global_avg_pool", check_gap));
  out.push_back(over_seeds("softmax", check_softmax));
  out.push_back(over_seeds("bilinear_resize.up", [](std::uint64_t s) {
    return check_resize(s, 10, 13);
  }));
  out.push_back(over_seeds("bilinear_resize.down", [](std::uint64_t s) {
    return check_resize(s, 3, 4);
  }));
  out.push_back(over_seeds("relu", check_relu));
  out.push_back(over_seeds("cross_entropy_2class", check_cross_entropy));
  out.push_back(over_seeds("bilinear_sample.coords", check_sample_coords));
  out.push_back(over_seeds("bilinear_sample.feature", check_sample_feature));
  out.push_back(over_seeds("deform_conv2d.input", [](std::uint64_t s) {
    return check_deform(s, 0);
  }));
  out.push_back(over_seeds("deform_conv2d.weight", [](std::uint64_t s) {
    return check_deform(s, 1);
  }));
  out.push_back(over_seeds("deform_conv2d.bias", [](std::uint64_t s) {
    return check_deform(s, 2);
  }));
  out.push_back(over_seeds("deform_conv2d.offset_weight", [](std::uint64_t s) {
    return check_deform(s, 3);
  }));
  out.push_back(over_seeds("deform_conv2d.offset_bias", [](std::uint64_t s) {
    return check_deform(s, 4);
  }));
  out.push_back(over_seeds("density_loss", check_density_loss));
  out.push_back(over_seeds("inject_attention.features", check_inject_features));
  out.push_back(over_seeds("inject_attention.attention", check_inject_attention_side));

  {
    OpCheck c{"amg.classification_path", check_amg_path(), false};
    c.pass = c.max_rel_err <= kTol;
    out.push_back(c);
  }
  {
    OpCheck c{"dme.params.head", check_dme_path("dme.head.weight"), false};
    c.pass = c.max_rel_err <= kTol;
    out.push_back(c);
  }
  {
    OpCheck c{"dme.params.back_bias", check_dme_path("dme.back.b2.c1.bias"), false};
    c.pass = c.max_rel_err <= kTol;
    out.push_back(c);
  }

  if (with_corrupt_fixture) {
    // scaled analytic gradient: the harness must flag it
    const Tensor64 x = rand_tensor({1, 1, 4, 4}, 99);
    Graph64 g;
    const Var xi = g.leaf(x, true);
    g.backward(g.sum_squares(xi));
    Tensor64 analytic = g.grad(xi);
    for (auto& v : analytic.v) v *= 1.1;
    auto eval = [](const Tensor64& p) {
      double s = 0.0;
      for (double v : p.v) s += v * v;
      return s;
    };
    OpCheck c{"corrupt_fixture", fd_max_rel_err(x, analytic, eval, 1e-4), false};
    c.pass = c.max_rel_err <= kTol;
    out.push_back(c);
  }
  return out;
}

bool gradcheck_all_pass(const std::vector<OpCheck>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const OpCheck& c) { return c.pass; });
}

std::string gradcheck_table(const std::vector<OpCheck>& checks) {
  std::string out = "operation                        max_rel_err   status\n";
  char buf[96];
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof(buf), "%-32s %11.3e   %s\n", c.name.c_str(), c.max_rel_err,
                  c.pass ? "ok" : "FAIL");
    out += buf;
  }
  return out;
}

}  // namespace adcrowd
