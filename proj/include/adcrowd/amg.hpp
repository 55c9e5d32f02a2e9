#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "adcrowd/bind.hpp"
#include "adcrowd/graph.hpp"
#include "adcrowd/params.hpp"
#include "adcrowd/synthdata.hpp"
#include "adcrowd/tensor.hpp"

namespace adcrowd {

// Attention Map Generator: crowd/background classifier whose fused class
// feature maps become the attention map.
//
// front:  Conv3-16, Conv3-16, MaxPool, Conv3-32, Conv3-32, MaxPool (ReLU
//         after each conv), downsampling factor 4
// back:   parallel Conv1-8-1 / Conv3-8-1 / Conv3-8-2 / Conv3-8-3 branches,
//         channel-concatenated
// head:   Conv1-2-1, channel 0 = crowd (Fc), channel 1 = background (Fb)
template <typename T>
struct AmgNetT {
  NetworkParamsT<T> params;
};

using AmgNet = AmgNetT<float>;

template <typename T>
AmgNetT<T> build_amg(std::uint64_t rng_seed) {
  AmgNetT<T> net;
  SplitMix64 rng = rng_for(rng_seed, "amg.init", 0);
  auto conv = [&](const std::string& name, int o, int c, int k, double gain = 1.0) {
    net.params.add(name + ".weight", he_conv_weight<T>(rng, o, c, k, k, gain));
    net.params.add(name + ".bias", TensorT<T>({o}));
  };
  // trunk gain > 1 amplifies activations so the head sees large features;
  // head gain << 1 keeps initial logits near zero
  conv("amg.front.conv1", 16, 1, 3, 2.3);
  conv("amg.front.conv2", 16, 16, 3, 2.3);
  conv("amg.front.conv3", 32, 16, 3, 2.3);
  conv("amg.front.conv4", 32, 32, 3, 2.3);
  conv("amg.incep.b0", 8, 32, 1, 2.3);
  conv("amg.incep.b1", 8, 32, 3, 2.3);
  conv("amg.incep.b2", 8, 32, 3, 2.3);
  conv("amg.incep.b3", 8, 32, 3, 2.3);
  conv("amg.head", 2, 32, 1, 0.05);
  return net;
}

struct AmgGraphOut {
  Var class_maps;  // [N, 2, H/4, W/4], channel 0 = Fc, 1 = Fb
  Var logits;      // [N, 2] = (Wc, Wb) rows
};

template <typename T>
AmgGraphOut amg_graph_forward(GraphT<T>& g, const BoundParamsT<T>& p, Var image) {
  const auto& s = g.val(image).shape;
  check_shape(s.size() == 4 && s[1] == 1, "amg: input must be [N,1,H,W]");
  check_shape(s[2] % 4 == 0 && s[3] % 4 == 0 && s[2] >= 16 && s[3] >= 16,
              "amg: H and W must be multiples of 4 and at least 16, got " + shape_str(s));
  auto cvr = [&](Var x, const std::string& name, int pad, int dil) {
    return g.relu(g.conv2d(x, p[name + ".weight"], p[name + ".bias"], 1, pad, dil));
  };
  Var x = cvr(image, "amg.front.conv1", 1, 1);
  x = cvr(x, "amg.front.conv2", 1, 1);
  x = g.max_pool2(x);
  x = cvr(x, "amg.front.conv3", 1, 1);
  x = cvr(x, "amg.front.conv4", 1, 1);
  x = g.max_pool2(x);
  const Var b0 = g.conv2d(x, p["amg.incep.b0.weight"], p["amg.incep.b0.bias"], 1, 0, 1);
  const Var b1 = g.conv2d(x, p["amg.incep.b1.weight"], p["amg.incep.b1.bias"], 1, 1, 1);
  const Var b2 = g.conv2d(x, p["amg.incep.b2.weight"], p["amg.incep.b2.bias"], 1, 2, 2);
  const Var b3 = g.conv2d(x, p["amg.incep.b3.weight"], p["amg.incep.b3.bias"], 1, 3, 3);
  const Var cat = g.concat_channels({b0, b1, b2, b3});
  AmgGraphOut out;
  out.class_maps = g.conv2d(cat, p["amg.head.weight"], p["amg.head.bias"], 1, 0, 1);
  out.logits = g.global_avg_pool(out.class_maps);
  return out;
}

struct AttentionBundle {
  Tensor fc;  // [1,1,h,w]
  Tensor fb;
  float wc = 0, wb = 0;  // GAP of fc, fb
  float pc = 0, pb = 0;  // softmax of (wc, wb)
  Tensor attention;      // [1,1,H,W], values in [0,1]
};

// Full inference pass on one image: class maps, confidence scores, and the
// min-max normalized attention map at input resolution (all ones when the
// fused map is spatially constant).
AttentionBundle amg_forward(const AmgNet& net, const Tensor& image);

// argmax of (Pc, Pb) with its score; the Pc == Pb tie goes to crowd.
std::pair<SceneLabel, float> classify(const AmgNet& net, const Tensor& image);

// values < t -> 0, values >= t -> 1
Tensor binarize_attention(const Tensor& attention, float t);

// Cross-entropy training on crowd positives and background negatives.
// Returns per-epoch mean loss.
std::vector<double> train_amg(AmgNet& net, const std::vector<SceneSample>& positives,
                              const std::vector<SceneSample>& negatives,
                              const TrainConfig& config);

}  // namespace adcrowd
