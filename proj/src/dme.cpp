#include "adcrowd/dme.hpp"

#include <algorithm>
#include <numeric>

#include "adcrowd/kernels.hpp"

namespace adcrowd {

const char* variant_name(VariantKind kind) {
  switch (kind) {
    case VariantKind::DME: return "dme";
    case VariantKind::AMG_DME: return "amg-dme";
    case VariantKind::AMG_bAttn_DME: return "amg-battn-dme";
    case VariantKind::AMG_attn_DME: return "amg-attn-dme";
  }
  return "dme";
}

VariantKind variant_from_name(const std::string& name) {
  if (name == "dme") return VariantKind::DME;
  if (name == "amg-dme") return VariantKind::AMG_DME;
  if (name == "amg-battn-dme") return VariantKind::AMG_bAttn_DME;
  if (name == "amg-attn-dme") return VariantKind::AMG_attn_DME;
  throw std::invalid_argument("unknown variant '" + name +
                              "' (want dme, amg-dme, amg-battn-dme or amg-attn-dme)");
}

Tensor density_loss(const DensityMap& pred, const DensityMap& gt, int batch_size) {
  check_shape(pred.grid.same_shape(gt.grid),
              "density_loss: shapes " + shape_str(pred.grid.shape) + " vs " +
                  shape_str(gt.grid.shape));
  check_shape(pred.scale == gt.scale, "density_loss: scale " + std::to_string(pred.scale) +
                                          " vs " + std::to_string(gt.scale));
  Graph g;
  const Var p = g.leaf(pred.grid, false);
  const Var t = g.leaf(gt.grid, false);
  return g.val(density_loss_graph(g, p, t, batch_size));
}

Tensor apply_attention(const Tensor& image, const Tensor& attention) {
  check_shape(image.same_shape(attention),
              "apply_attention: shapes " + shape_str(image.shape) + " vs " +
                  shape_str(attention.shape));
  Tensor out = image;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= attention.v[i];
  return out;
}

Tensor inject_attention_features(const Tensor& features, const Tensor& attention) {
  const auto& fs = features.shape;
  const auto& as = attention.shape;
  check_shape(fs.size() == 4 && as.size() == 4 && as[0] == fs[0] && as[1] == 1,
              "inject_attention_features: want features [N,C,h,w] and attention [N,1,H,W]");
  Tensor att({fs[0], 1, fs[2], fs[3]});
  kern::bilinear_resize_forward(attention.data(), att.data(), as[0], 1, as[2], as[3],
                                fs[2], fs[3]);
  Tensor out = features;
  const std::int64_t hw = static_cast<std::int64_t>(fs[2]) * fs[3];
  for (int n = 0; n < fs[0]; ++n)
    for (int c = 0; c < fs[1]; ++c) {
      float* op = out.data() + (static_cast<std::int64_t>(n) * fs[1] + c) * hw;
      const float* ap = att.data() + n * hw;
      for (std::int64_t i = 0; i < hw; ++i) op[i] *= ap[i];
    }
  return out;
}

namespace {

// Attention-variant preprocessing: what the DME graph actually consumes for
// one input image, with the AMG frozen.
struct PreparedInput {
  Tensor image;      // possibly attention-multiplied
  Tensor attention;  // non-empty only for the feature-injection variant
};

PreparedInput prepare_input(const Tensor& image, const PipelineVariant& variant,
                            const AmgNet* amg) {
  if (variant.kind == VariantKind::DME) return {image, {}};
  check_shape(amg != nullptr, std::string("variant ") + variant_name(variant.kind) +
                                  " requires an AMG network");
  const AttentionBundle b = amg_forward(*amg, image);
  switch (variant.kind) {
    case VariantKind::AMG_DME:
      return {apply_attention(image, b.attention), {}};
    case VariantKind::AMG_bAttn_DME:
      return {apply_attention(image, binarize_attention(b.attention, variant.threshold)), {}};
    case VariantKind::AMG_attn_DME:
      return {image, b.attention};
    default:
      return {image, {}};
  }
}

}  // namespace

DensityMap dme_forward(const DmeNet& net, const Tensor& input, const PipelineVariant& variant,
                       const AmgNet* amg) {
  const PreparedInput in = prepare_input(input, variant, amg);
  Graph g;
  const BoundParamsT<float> p = bind_params(g, net.params, false);
  const Var img = g.leaf(in.image, false);
  Var att = -1;
  if (!in.attention.v.empty()) att = g.leaf(in.attention, false);
  const Var out = dme_graph_forward(g, p, img, att);
  return DensityMap{g.val(out), 4};
}

std::vector<double> train_dme(DmeNet& net, const std::vector<SceneSample>& dataset,
                              const PipelineVariant& variant, const AmgNet* amg,
                              const TrainConfig& config) {
  check_shape(!dataset.empty(), "train_dme: dataset must be non-empty");
  if (variant_needs_amg(variant.kind))
    check_shape(amg != nullptr, std::string("train_dme: variant ") +
                                    variant_name(variant.kind) + " requires a trained AMG");

  // Patches and their frozen-AMG preprocessing are fixed across epochs.
  struct Item {
    Tensor image;
    Tensor attention;  // feature-injection variant only
    Tensor gt4;        // [1,1,hp/4,wp/4]
  };
  std::vector<Item> items;
  for (const auto& scene : dataset) {
    for (auto& patch : crop_patches(scene)) {
      Item it;
      const PreparedInput in = prepare_input(patch.image, variant, amg);
      it.image = in.image;
      it.attention = in.attention;
      it.gt4 = downsample_density(patch.gt_density, 4).grid;
      items.push_back(std::move(it));
    }
  }
  const int hp = items[0].image.shape[2], wp = items[0].image.shape[3];
  const int h4 = hp / 4, w4 = wp / 4;

  std::vector<int> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    SplitMix64 rng = rng_for(config.rng_seed, "dme.epoch", static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);

    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(config.batch_size)) {
      const int bs = static_cast<int>(
          std::min(static_cast<std::size_t>(config.batch_size), order.size() - pos));
      Tensor batch({bs, 1, hp, wp});
      Tensor gt({bs, 1, h4, w4});
      Tensor att;
      const bool with_att = !items[0].attention.v.empty();
      if (with_att) att = Tensor({bs, 1, hp, wp});
      for (int b = 0; b < bs; ++b) {
        const Item& it = items[static_cast<std::size_t>(order[pos + b])];
        std::copy_n(it.image.data(), static_cast<std::size_t>(hp) * wp,
                    batch.data() + static_cast<std::size_t>(b) * hp * wp);
        std::copy_n(it.gt4.data(), static_cast<std::size_t>(h4) * w4,
                    gt.data() + static_cast<std::size_t>(b) * h4 * w4);
        if (with_att)
          std::copy_n(it.attention.data(), static_cast<std::size_t>(hp) * wp,
                      att.data() + static_cast<std::size_t>(b) * hp * wp);
      }
      Graph g;
      const BoundParamsT<float> bp = bind_params(g, net.params, true);
      const Var img = g.leaf(std::move(batch), false);
      Var att_var = -1;
      if (with_att) att_var = g.leaf(std::move(att), false);
      const Var pred = dme_graph_forward(g, bp, img, att_var);
      const Var loss = density_loss_graph(g, pred, g.leaf(std::move(gt), false), bs);
      g.backward(loss);
      harvest_grads(g, bp, net.params);
      adam_step(net.params, config);
      epoch_loss += g.val(loss).v[0];
      ++batches;
    }
    history.push_back(epoch_loss / std::max(1, batches));
  }
  return history;
}

}  // namespace adcrowd
