#pragma once

#include <cstdint>
#include <string>

#include "adcrowd/graph.hpp"
#include "adcrowd/params.hpp"
#include "adcrowd/tensor.hpp"

namespace adcrowd {

// Deformable convolution layer: a k x k convolution whose per-tap sampling
// positions are displaced by offsets predicted by a companion standard
// convolution on the same input. The companion starts at exactly zero, so a
// fresh layer behaves like plain conv2d.
template <typename T>
struct DeformConvLayerT {
  TensorT<T> weight;         // [O, C, k, k]
  TensorT<T> bias;           // [O]
  TensorT<T> offset_weight;  // [2k², C, k, k]
  TensorT<T> offset_bias;    // [2k²]
  int stride = 1;
  int padding = 0;

  int k() const { return weight.shape[2]; }
};

template <typename T>
DeformConvLayerT<T> make_deform_layer(SplitMix64& rng, int o, int c, int k, int stride,
                                      int padding) {
  check_shape(k % 2 == 1, "deform layer: kernel size must be odd");
  DeformConvLayerT<T> l;
  l.weight = he_conv_weight<T>(rng, o, c, k, k);
  l.bias = TensorT<T>({o});
  l.offset_weight = TensorT<T>({2 * k * k, c, k, k});
  l.offset_bias = TensorT<T>({2 * k * k});
  l.stride = stride;
  l.padding = padding;
  return l;
}

// Forward-only evaluation, no tape.
template <typename T>
TensorT<T> deform_conv2d(const TensorT<T>& input, const DeformConvLayerT<T>& l) {
  const auto& xs = input.shape;
  check_shape(xs.size() == 4, "deform_conv2d: input must be rank 4");
  check_shape(xs[1] == l.weight.shape[1],
              "deform_conv2d: input channels " + std::to_string(xs[1]) +
                  " vs weight channels " + std::to_string(l.weight.shape[1]));
  const int k = l.k();
  kern::ConvDims od{xs[0], xs[1], xs[2], xs[3], 2 * k * k, k, k, l.stride, l.padding, 1};
  TensorT<T> offsets({od.n, od.o, od.oh(), od.ow()});
  kern::conv2d_forward(input.data(), l.offset_weight.data(), l.offset_bias.data(),
                       offsets.data(), od);
  kern::DeformDims d{xs[0], xs[1], xs[2], xs[3], l.weight.shape[0], k, l.stride,
                     l.padding};
  TensorT<T> out({d.n, d.o, d.oh(), d.ow()});
  TensorT<T> cols({d.n, d.c * k * k, d.oh() * d.ow()});
  kern::deform_conv2d_forward(input.data(), offsets.data(), l.weight.data(),
                              l.bias.data(), out.data(), cols.data(), d);
  return out;
}

// Tape composite: offsets by conv2d on the same input, then the deformable
// application. Gradients flow to input, weight, bias and both offset params.
template <typename T>
Var deform_conv2d_graph(GraphT<T>& g, Var x, Var w, Var b, Var offset_w, Var offset_b,
                        int stride, int padding) {
  const Var offsets = g.conv2d(x, offset_w, offset_b, stride, padding, 1);
  return g.deform_apply(x, offsets, w, b, stride, padding);
}

// Parameter registration under "<layer>.weight", "<layer>.bias",
// "<layer>.offset_weight", "<layer>.offset_bias".
template <typename T>
void add_deform_params(NetworkParamsT<T>& params, const std::string& layer,
                       DeformConvLayerT<T> l) {
  params.add(layer + ".weight", std::move(l.weight));
  params.add(layer + ".bias", std::move(l.bias));
  params.add(layer + ".offset_weight", std::move(l.offset_weight));
  params.add(layer + ".offset_bias", std::move(l.offset_bias));
}

}  // namespace adcrowd
