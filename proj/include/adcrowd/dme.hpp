#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adcrowd/amg.hpp"
#include "adcrowd/bind.hpp"
#include "adcrowd/deform.hpp"
#include "adcrowd/density_map.hpp"
#include "adcrowd/graph.hpp"
#include "adcrowd/params.hpp"
#include "adcrowd/synthdata.hpp"

namespace adcrowd {

// Density Map Estimator.
//
// front:  same topology as the AMG front end, independent parameters
// back:   two blocks of parallel Dconv3-8-1 / Dconv5-8-1 / Conv1-8-1
//         branches (24 channels concatenated), ReLU between the blocks
// head:   Conv1-1-1, no nonlinearity (early predictions may dip below zero)
template <typename T>
struct DmeNetT {
  NetworkParamsT<T> params;
};

using DmeNet = DmeNetT<float>;

enum class VariantKind { DME, AMG_DME, AMG_bAttn_DME, AMG_attn_DME };

struct PipelineVariant {
  VariantKind kind = VariantKind::DME;
  float threshold = 0.1f;  // used only by AMG-bAttn-DME
};

const char* variant_name(VariantKind kind);
VariantKind variant_from_name(const std::string& name);
inline bool variant_needs_amg(VariantKind k) { return k != VariantKind::DME; }

template <typename T>
DmeNetT<T> build_dme(std::uint64_t rng_seed) {
  DmeNetT<T> net;
  SplitMix64 rng = rng_for(rng_seed, "dme.init", 0);
  auto conv = [&](const std::string& name, int o, int c, int k) {
    net.params.add(name + ".weight", he_conv_weight<T>(rng, o, c, k, k));
    net.params.add(name + ".bias", TensorT<T>({o}));
  };
  conv("dme.front.conv1", 16, 1, 3);
  conv("dme.front.conv2", 16, 16, 3);
  conv("dme.front.conv3", 32, 16, 3);
  conv("dme.front.conv4", 32, 32, 3);
  for (const char* blk : {"dme.back.b1", "dme.back.b2"}) {
    const int c = (std::string(blk) == "dme.back.b1") ? 32 : 24;
    add_deform_params(net.params, std::string(blk) + ".d3",
                      make_deform_layer<T>(rng, 8, c, 3, 1, 1));
    add_deform_params(net.params, std::string(blk) + ".d5",
                      make_deform_layer<T>(rng, 8, c, 5, 1, 2));
    conv(std::string(blk) + ".c1", 8, c, 1);
  }
  conv("dme.head", 1, 24, 1);
  return net;
}

// attention < 0 means none; otherwise a [N,1,H,W] var that is resized to the
// front-end output and broadcast-multiplied into the features (the
// AMG-attn-DME injection point).
template <typename T>
Var dme_graph_forward(GraphT<T>& g, const BoundParamsT<T>& p, Var input,
                      Var attention = -1) {
  const auto& s = g.val(input).shape;
  check_shape(s.size() == 4 && s[1] == 1, "dme: input must be [N,1,H,W]");
  check_shape(s[2] % 4 == 0 && s[3] % 4 == 0 && s[2] >= 16 && s[3] >= 16,
              "dme: H and W must be multiples of 4 and at least 16, got " + shape_str(s));
  auto cvr = [&](Var x, const std::string& name) {
    return g.relu(g.conv2d(x, p[name + ".weight"], p[name + ".bias"], 1, 1, 1));
  };
  Var x = cvr(input, "dme.front.conv1");
  x = cvr(x, "dme.front.conv2");
  x = g.max_pool2(x);
  x = cvr(x, "dme.front.conv3");
  x = cvr(x, "dme.front.conv4");
  x = g.max_pool2(x);
  if (attention >= 0) {
    const auto& fs = g.val(x).shape;
    const Var att = g.bilinear_resize(attention, fs[2], fs[3]);
    x = g.broadcast_mul_channels(x, att);
  }
  auto block = [&](Var in, const std::string& blk) {
    const Var d3 = deform_conv2d_graph(g, in, p[blk + ".d3.weight"], p[blk + ".d3.bias"],
                                       p[blk + ".d3.offset_weight"],
                                       p[blk + ".d3.offset_bias"], 1, 1);
    const Var d5 = deform_conv2d_graph(g, in, p[blk + ".d5.weight"], p[blk + ".d5.bias"],
                                       p[blk + ".d5.offset_weight"],
                                       p[blk + ".d5.offset_bias"], 1, 2);
    const Var c1 = g.conv2d(in, p[blk + ".c1.weight"], p[blk + ".c1.bias"], 1, 0, 1);
    return g.concat_channels({d3, d5, c1});
  };
  x = g.relu(block(x, "dme.back.b1"));
  x = block(x, "dme.back.b2");
  return g.conv2d(x, p["dme.head.weight"], p["dme.head.bias"], 1, 0, 1);
}

// L(theta) = 1/(2N) * sum over all map elements of (pred - gt)^2
template <typename T>
Var density_loss_graph(GraphT<T>& g, Var pred, Var gt, int batch_size) {
  check_shape(batch_size >= 1, "density_loss: batch size must be >= 1");
  return g.scale(g.sum_squares(g.sub(pred, gt)), T(1) / (T(2) * static_cast<T>(batch_size)));
}

// Standalone Eq.-2 value for two density maps.
Tensor density_loss(const DensityMap& pred, const DensityMap& gt, int batch_size);

// pixel-wise product, equal shapes
Tensor apply_attention(const Tensor& image, const Tensor& attention);

// attention resized to the feature grid and broadcast across channels
Tensor inject_attention_features(const Tensor& features, const Tensor& attention);

// One image through the chosen variant; amg may be null only for kind DME.
DensityMap dme_forward(const DmeNet& net, const Tensor& input, const PipelineVariant& variant,
                       const AmgNet* amg);

// Patch-level training (synthdata.crop_patches, GT block-pooled to scale 4).
// The AMG is applied as frozen preprocessing. Returns per-epoch mean loss.
std::vector<double> train_dme(DmeNet& net, const std::vector<SceneSample>& dataset,
                              const PipelineVariant& variant, const AmgNet* amg,
                              const TrainConfig& config);

}  // namespace adcrowd
