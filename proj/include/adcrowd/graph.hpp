#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "adcrowd/kernels.hpp"
#include "adcrowd/tensor.hpp"

// Reverse-mode tape. Ops append nodes holding the forward value plus a
// closure that pushes this node's gradient into its inputs; backward() walks
// the tape once in reverse. Gradients accumulate additively, so a tensor
// feeding several consumers gets the sum of the branch gradients.

namespace adcrowd {

using Var = int;

template <typename T>
class GraphT {
 public:
  GraphT() = default;
  GraphT(const GraphT&) = delete;
  GraphT& operator=(const GraphT&) = delete;

  Var leaf(TensorT<T> v, bool needs_grad = false) {
    return push(std::move(v), needs_grad, nullptr);
  }

  const TensorT<T>& val(Var i) const { return nodes_[i].value; }
  TensorT<T>& val_mut(Var i) { return nodes_[i].value; }
  const TensorT<T>& grad(Var i) const { return nodes_[i].grad; }
  bool needs_grad(Var i) const { return nodes_[i].needs_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // -------------------------------------------------------------------------

  Var conv2d(Var x, Var w, Var b, int stride, int pad, int dil) {
    const auto& xs = val(x).shape;
    const auto& ws = val(w).shape;
    const auto& bs = val(b).shape;
    check_shape(xs.size() == 4 && ws.size() == 4 && bs.size() == 1,
                "conv2d: input must be rank 4, weight rank 4, bias rank 1");
    check_shape(ws[2] % 2 == 1 && ws[3] % 2 == 1, "conv2d: kernel dims must be odd");
    check_shape(xs[1] == ws[1], "conv2d: input channels " + std::to_string(xs[1]) +
                                    " vs weight channels " + std::to_string(ws[1]));
    check_shape(bs[0] == ws[0], "conv2d: bias length " + std::to_string(bs[0]) +
                                    " vs filter count " + std::to_string(ws[0]));
    check_shape(stride >= 1 && dil >= 1 && pad >= 0, "conv2d: bad stride/pad/dilation");
    kern::ConvDims d{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, pad, dil};
    check_shape(d.oh() >= 1 && d.ow() >= 1, "conv2d: output would be empty for input " +
                                                shape_str(xs));
    TensorT<T> cols({d.n, d.c * d.kh * d.kw, d.oh() * d.ow()});
    kern::conv2d_im2col(val(x).data(), cols.data(), d);
    TensorT<T> out({d.n, d.o, d.oh(), d.ow()});
    kern::conv2d_forward_cols(cols.data(), val(w).data(), val(b).data(), out.data(), d);
    const bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
    Var y = push(std::move(out), ng, nullptr);
    if (ng) {
      auto cache = std::make_shared<TensorT<T>>(std::move(cols));
      nodes_[y].back = [x, w, b, y, d, cache](GraphT& g) {
        const T* go = g.grad(y).data();
        if (g.needs_grad(x)) {
          TensorT<T> gcol(cache->shape);
          kern::conv2d_backward_input_cols(go, g.val(w).data(), gcol.data(),
                                           g.grad_mut(x).data(), d);
        }
        if (g.needs_grad(w))
          kern::conv2d_backward_weight_cols(go, cache->data(), g.grad_mut(w).data(), d);
        if (g.needs_grad(b)) kern::conv2d_backward_bias(go, g.grad_mut(b).data(), d);
      };
    }
    return y;
  }

  Var max_pool2(Var x) {
    const auto& xs = val(x).shape;
    check_shape(xs.size() == 4, "max_pool2: input must be rank 4");
    check_shape(xs[2] % 2 == 0 && xs[3] % 2 == 0,
                "max_pool2: H and W must be even, got " + shape_str(xs));
    const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    TensorT<T> out({n, c, h / 2, w / 2});
    std::vector<std::int32_t> argmax(out.numel());
    kern::max_pool2_forward(val(x).data(), out.data(), argmax.data(), n, c, h, w);
    const bool ng = needs_grad(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [x, y, n, c, h, w, am = std::move(argmax)](GraphT& g) {
        kern::max_pool2_backward(g.grad(y).data(), am.data(), g.grad_mut(x).data(), n, c,
                                 h, w);
      };
    return y;
  }

  Var global_avg_pool(Var x) {
    const auto& xs = val(x).shape;
    check_shape(xs.size() == 4, "global_avg_pool: input must be rank 4");
    const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    TensorT<T> out({n, c});
    const T inv = T(1) / static_cast<T>(h * w);
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch) {
        const T* p = val(x).data() + (static_cast<std::int64_t>(b) * c + ch) * h * w;
        T acc = T(0);
        for (int i = 0; i < h * w; ++i) acc += p[i];
        out.v[b * c + ch] = acc * inv;
      }
    const bool ng = needs_grad(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [x, y, n, c, h, w, inv](GraphT& g) {
        T* gx = g.grad_mut(x).data();
        const T* go = g.grad(y).data();
        for (int b = 0; b < n; ++b)
          for (int ch = 0; ch < c; ++ch) {
            const T v = go[b * c + ch] * inv;
            T* p = gx + (static_cast<std::int64_t>(b) * c + ch) * h * w;
            for (int i = 0; i < h * w; ++i) p[i] += v;
          }
      };
    return y;
  }

  // rowwise softmax on [N, K], max-subtracted
  Var softmax(Var x) {
    const auto& xs = val(x).shape;
    check_shape(xs.size() == 2 && xs[1] >= 2, "softmax: input must be [N, K], K >= 2");
    const int n = xs[0], k = xs[1];
    TensorT<T> out({n, k});
    for (int b = 0; b < n; ++b) {
      const T* row = val(x).data() + b * k;
      T mx = row[0];
      for (int i = 1; i < k; ++i) mx = std::max(mx, row[i]);
      T sum = T(0);
      for (int i = 0; i < k; ++i) {
        out.v[b * k + i] = std::exp(row[i] - mx);
        sum += out.v[b * k + i];
      }
      for (int i = 0; i < k; ++i) out.v[b * k + i] /= sum;
    }
    const bool ng = needs_grad(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [x, y, n, k](GraphT& g) {
        const T* p = g.val(y).data();
        const T* go = g.grad(y).data();
        T* gx = g.grad_mut(x).data();
        for (int b = 0; b < n; ++b) {
          T dot = T(0);
          for (int i = 0; i < k; ++i) dot += go[b * k + i] * p[b * k + i];
          for (int i = 0; i < k; ++i)
            gx[b * k + i] += p[b * k + i] * (go[b * k + i] - dot);
        }
      };
    return y;
  }

  Var bilinear_resize(Var x, int oh, int ow) {
    const auto& xs = val(x).shape;
    check_shape(xs.size() == 4, "bilinear_resize: input must be rank 4");
    check_shape(oh >= 1 && ow >= 1, "bilinear_resize: target dims must be >= 1");
    const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    TensorT<T> out({n, c, oh, ow});
    kern::bilinear_resize_forward(val(x).data(), out.data(), n, c, h, w, oh, ow);
    const bool ng = needs_grad(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [x, y, n, c, h, w, oh, ow](GraphT& g) {
        kern::bilinear_resize_backward(g.grad(y).data(), g.grad_mut(x).data(), n, c, h, w,
                                       oh, ow);
      };
    return y;
  }

  Var relu(Var x) {
    TensorT<T> out = val(x);
    for (auto& v : out.v) v = std::max(v, T(0));
    const bool ng = needs_grad(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [x, y](GraphT& g) {
        const T* xin = g.val(x).data();
        const T* go = g.grad(y).data();
        T* gx = g.grad_mut(x).data();
        const std::int64_t n = g.val(x).numel();
        for (std::int64_t i = 0; i < n; ++i)
          if (xin[i] > T(0)) gx[i] += go[i];
      };
    return y;
  }

  Var elementwise_mul(Var a, Var b) {
    check_shape(val(a).same_shape(val(b)), "elementwise_mul: shapes " +
                                               shape_str(val(a).shape) + " vs " +
                                               shape_str(val(b).shape));
    TensorT<T> out = val(a);
    const T* pb = val(b).data();
    for (std::int64_t i = 0; i < out.numel(); ++i) out.v[i] *= pb[i];
    const bool ng = needs_grad(a) || needs_grad(b);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [a, b, y](GraphT& g) {
        const T* go = g.grad(y).data();
        const std::int64_t n = g.val(a).numel();
        if (g.needs_grad(a)) {
          T* ga = g.grad_mut(a).data();
          const T* vb = g.val(b).data();
          for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i] * vb[i];
        }
        if (g.needs_grad(b)) {
          T* gb = g.grad_mut(b).data();
          const T* va = g.val(a).data();
          for (std::int64_t i = 0; i < n; ++i) gb[i] += go[i] * va[i];
        }
      };
    return y;
  }

  // x [N,C,h,w] * m [N,1,h,w], m broadcast across channels
  Var broadcast_mul_channels(Var x, Var m) {
    const auto& xs = val(x).shape;
    const auto& ms = val(m).shape;
    check_shape(xs.size() == 4 && ms.size() == 4, "broadcast_mul_channels: rank 4 only");
    check_shape(ms[1] == 1 && ms[0] == xs[0] && ms[2] == xs[2] && ms[3] == xs[3],
                "broadcast_mul_channels: mask " + shape_str(ms) + " does not broadcast over " +
                    shape_str(xs));
    const int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    TensorT<T> out = val(x);
    for (int b = 0; b < n; ++b) {
      const T* mp = val(m).data() + b * hw;
      for (int ch = 0; ch < c; ++ch) {
        T* op = out.data() + (static_cast<std::int64_t>(b) * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) op[i] *= mp[i];
      }
    }
    const bool ng = needs_grad(x) || needs_grad(m);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [x, m, y, n, c, hw](GraphT& g) {
        const T* go = g.grad(y).data();
        if (g.needs_grad(x)) {
          T* gx = g.grad_mut(x).data();
          for (int b = 0; b < n; ++b) {
            const T* mp = g.val(m).data() + b * hw;
            for (int ch = 0; ch < c; ++ch) {
              const std::int64_t base = (static_cast<std::int64_t>(b) * c + ch) * hw;
              for (std::int64_t i = 0; i < hw; ++i) gx[base + i] += go[base + i] * mp[i];
            }
          }
        }
        if (g.needs_grad(m)) {
          T* gm = g.grad_mut(m).data();
          const T* vx = g.val(x).data();
          for (int b = 0; b < n; ++b)
            for (int ch = 0; ch < c; ++ch) {
              const std::int64_t base = (static_cast<std::int64_t>(b) * c + ch) * hw;
              for (std::int64_t i = 0; i < hw; ++i)
                gm[b * hw + i] += go[base + i] * vx[base + i];
            }
        }
      };
    return y;
  }

  Var concat_channels(const std::vector<Var>& parts) {
    check_shape(!parts.empty(), "concat_channels: empty list");
    const auto& s0 = val(parts[0]).shape;
    check_shape(s0.size() == 4, "concat_channels: rank 4 only");
    int ctot = 0;
    bool ng = false;
    for (Var p : parts) {
      const auto& s = val(p).shape;
      check_shape(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
                  "concat_channels: N/H/W mismatch, " + shape_str(s) + " vs " + shape_str(s0));
      ctot += s[1];
      ng = ng || needs_grad(p);
    }
    const int n = s0[0], h = s0[2], w = s0[3];
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    TensorT<T> out({n, ctot, h, w});
    std::int64_t coff = 0;
    for (Var p : parts) {
      const int pc = val(p).shape[1];
      for (int b = 0; b < n; ++b)
        std::copy_n(val(p).data() + static_cast<std::int64_t>(b) * pc * hw, pc * hw,
                    out.data() + (static_cast<std::int64_t>(b) * ctot + coff) * hw);
      coff += pc;
    }
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [parts, y, n, ctot, hw](GraphT& g) {
        const T* go = g.grad(y).data();
        std::int64_t coff = 0;
        for (Var p : parts) {
          const int pc = g.val(p).shape[1];
          if (g.needs_grad(p)) {
            T* gp = g.grad_mut(p).data();
            for (int b = 0; b < n; ++b) {
              const T* src = go + (static_cast<std::int64_t>(b) * ctot + coff) * hw;
              T* dst = gp + static_cast<std::int64_t>(b) * pc * hw;
              for (std::int64_t i = 0; i < pc * hw; ++i) dst[i] += src[i];
            }
          }
          coff += pc;
        }
      };
    return y;
  }

  // mean over the batch of -log softmax(logits)[label]; label 1 = crowd
  Var cross_entropy_2class(Var logits, const std::vector<int>& labels) {
    const auto& ls = val(logits).shape;
    check_shape(ls.size() == 2 && ls[1] == 2, "cross_entropy_2class: logits must be [N, 2]");
    check_shape(static_cast<int>(labels.size()) == ls[0],
                "cross_entropy_2class: label count " + std::to_string(labels.size()) +
                    " vs batch " + std::to_string(ls[0]));
    for (int l : labels)
      check_shape(l == 0 || l == 1, "cross_entropy_2class: label " + std::to_string(l) +
                                        " outside {0,1}");
    const int n = ls[0];
    TensorT<T> probs({n, 2});
    T loss = T(0);
    for (int b = 0; b < n; ++b) {
      const T* row = val(logits).data() + 2 * b;
      const T mx = std::max(row[0], row[1]);
      const T e0 = std::exp(row[0] - mx), e1 = std::exp(row[1] - mx);
      const T z = e0 + e1;
      probs.v[2 * b] = e0 / z;
      probs.v[2 * b + 1] = e1 / z;
      loss -= std::log(probs.v[2 * b + labels[b]]);
    }
    TensorT<T> out({1});
    out.v[0] = loss / static_cast<T>(n);
    const bool ng = needs_grad(logits);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [logits, y, n, labels, p = std::move(probs)](GraphT& g) {
        const T go = g.grad(y).data()[0];
        T* gl = g.grad_mut(logits).data();
        for (int b = 0; b < n; ++b)
          for (int k = 0; k < 2; ++k)
            gl[2 * b + k] +=
                go * (p.v[2 * b + k] - (k == labels[b] ? T(1) : T(0))) / static_cast<T>(n);
      };
    return y;
  }

  Var add(Var a, Var b) {
    check_shape(val(a).same_shape(val(b)),
                "add: shapes " + shape_str(val(a).shape) + " vs " + shape_str(val(b).shape));
    TensorT<T> out = val(a);
    const T* pb = val(b).data();
    for (std::int64_t i = 0; i < out.numel(); ++i) out.v[i] += pb[i];
    const bool ng = needs_grad(a) || needs_grad(b);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [a, b, y](GraphT& g) {
        const T* go = g.grad(y).data();
        const std::int64_t n = g.val(a).numel();
        if (g.needs_grad(a)) {
          T* ga = g.grad_mut(a).data();
          for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i];
        }
        if (g.needs_grad(b)) {
          T* gb = g.grad_mut(b).data();
          for (std::int64_t i = 0; i < n; ++i) gb[i] += go[i];
        }
      };
    return y;
  }

  Var sub(Var a, Var b) {
    check_shape(val(a).same_shape(val(b)),
                "sub: shapes " + shape_str(val(a).shape) + " vs " + shape_str(val(b).shape));
    TensorT<T> out = val(a);
    const T* pb = val(b).data();
    for (std::int64_t i = 0; i < out.numel(); ++i) out.v[i] -= pb[i];
    const bool ng = needs_grad(a) || needs_grad(b);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [a, b, y](GraphT& g) {
        const T* go = g.grad(y).data();
        const std::int64_t n = g.val(a).numel();
        if (g.needs_grad(a)) {
          T* ga = g.grad_mut(a).data();
          for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i];
        }
        if (g.needs_grad(b)) {
          T* gb = g.grad_mut(b).data();
          for (std::int64_t i = 0; i < n; ++i) gb[i] -= go[i];
        }
      };
    return y;
  }

  Var sum_all(Var x) {
    TensorT<T> out({1});
    T acc = T(0);
    for (const T v : val(x).v) acc += v;
    out.v[0] = acc;
    const bool ng = needs_grad(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [x, y](GraphT& g) {
        const T go = g.grad(y).data()[0];
        T* gx = g.grad_mut(x).data();
        const std::int64_t n = g.val(x).numel();
        for (std::int64_t i = 0; i < n; ++i) gx[i] += go;
      };
    return y;
  }

  Var sum_squares(Var x) {
    TensorT<T> out({1});
    T acc = T(0);
    for (const T v : val(x).v) acc += v * v;
    out.v[0] = acc;
    const bool ng = needs_grad(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [x, y](GraphT& g) {
        const T go = g.grad(y).data()[0];
        const T* vx = g.val(x).data();
        T* gx = g.grad_mut(x).data();
        const std::int64_t n = g.val(x).numel();
        for (std::int64_t i = 0; i < n; ++i) gx[i] += go * T(2) * vx[i];
      };
    return y;
  }

  Var scale(Var x, T c) {
    TensorT<T> out = val(x);
    for (auto& v : out.v) v *= c;
    const bool ng = needs_grad(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [x, y, c](GraphT& g) {
        const T* go = g.grad(y).data();
        T* gx = g.grad_mut(x).data();
        const std::int64_t n = g.val(x).numel();
        for (std::int64_t i = 0; i < n; ++i) gx[i] += go[i] * c;
      };
    return y;
  }

  // [N,2] -> [N,2] with the two columns exchanged
  Var swap_cols2(Var x) {
    const auto& xs = val(x).shape;
    check_shape(xs.size() == 2 && xs[1] == 2, "swap_cols2: input must be [N, 2]");
    const int n = xs[0];
    TensorT<T> out({n, 2});
    for (int b = 0; b < n; ++b) {
      out.v[2 * b] = val(x).v[2 * b + 1];
      out.v[2 * b + 1] = val(x).v[2 * b];
    }
    const bool ng = needs_grad(x);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [x, y, n](GraphT& g) {
        const T* go = g.grad(y).data();
        T* gx = g.grad_mut(x).data();
        for (int b = 0; b < n; ++b) {
          gx[2 * b] += go[2 * b + 1];
          gx[2 * b + 1] += go[2 * b];
        }
      };
    return y;
  }

  // Deformable convolution: the offset map is a separate graph node (made by
  // conv2d on the same input), so offset-branch gradients flow on their own.
  Var deform_apply(Var x, Var offsets, Var w, Var b, int stride, int pad) {
    const auto& xs = val(x).shape;
    const auto& ws = val(w).shape;
    const auto& os = val(offsets).shape;
    check_shape(xs.size() == 4 && ws.size() == 4 && val(b).shape.size() == 1,
                "deform_apply: bad ranks");
    check_shape(ws[2] == ws[3], "deform_apply: kernel must be square");
    check_shape(ws[1] == xs[1], "deform_apply: input channels " + std::to_string(xs[1]) +
                                    " vs weight channels " + std::to_string(ws[1]));
    const int k = ws[2];
    kern::DeformDims d{xs[0], xs[1], xs[2], xs[3], ws[0], k, stride, pad};
    check_shape(os.size() == 4 && os[0] == d.n && os[1] == 2 * k * k && os[2] == d.oh() &&
                    os[3] == d.ow(),
                "deform_apply: offsets " + shape_str(os) + " do not match, want [" +
                    std::to_string(d.n) + "," + std::to_string(2 * k * k) + "," +
                    std::to_string(d.oh()) + "," + std::to_string(d.ow()) + "]");
    TensorT<T> out({d.n, d.o, d.oh(), d.ow()});
    TensorT<T> cols({d.n, d.c * k * k, d.oh() * d.ow()});
    kern::deform_conv2d_forward(val(x).data(), val(offsets).data(), val(w).data(),
                                val(b).data(), out.data(), cols.data(), d);
    const bool ng =
        needs_grad(x) || needs_grad(offsets) || needs_grad(w) || needs_grad(b);
    Var y = push(std::move(out), ng, nullptr);
    if (ng)
      nodes_[y].back = [x, offsets, w, b, y, d, cc = std::move(cols)](GraphT& g) {
        TensorT<T> gcol(cc.shape);
        kern::deform_conv2d_backward(
            g.val(x).data(), g.val(offsets).data(), g.val(w).data(), cc.data(),
            g.grad(y).data(), g.needs_grad(x) ? g.grad_mut(x).data() : nullptr,
            g.needs_grad(offsets) ? g.grad_mut(offsets).data() : nullptr,
            g.needs_grad(w) ? g.grad_mut(w).data() : nullptr,
            g.needs_grad(b) ? g.grad_mut(b).data() : nullptr, gcol.data(), d);
      };
    return y;
  }

  // -------------------------------------------------------------------------

  void backward(Var loss) {
    check_shape(val(loss).numel() == 1,
                "backward: loss must be scalar, got " + shape_str(val(loss).shape));
    if (!nodes_[loss].needs_grad) return;
    nodes_[loss].grad.v[0] = T(1);
    for (int i = loss; i >= 0; --i)
      if (nodes_[i].back && nodes_[i].needs_grad) nodes_[i].back(*this);
  }

  TensorT<T>& grad_mut(Var i) { return nodes_[i].grad; }

 private:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;
    bool needs_grad = false;
    std::function<void(GraphT&)> back;
  };

  Var push(TensorT<T> v, bool ng, std::function<void(GraphT&)> back) {
    Node n;
    n.needs_grad = ng;
    if (ng) n.grad = TensorT<T>(v.shape);
    n.value = std::move(v);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

using Graph = GraphT<float>;
using Graph64 = GraphT<double>;

}  // namespace adcrowd
