#include "adcrowd/amg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adcrowd/kernels.hpp"

namespace adcrowd {

AttentionBundle amg_forward(const AmgNet& net, const Tensor& image) {
  Graph g;
  const BoundParamsT<float> p = bind_params(g, net.params, false);
  const Var img = g.leaf(image, false);
  const AmgGraphOut out = amg_graph_forward(g, p, img);

  const auto& maps = g.val(out.class_maps);
  check_shape(maps.shape[0] == 1, "amg_forward: one image at a time");
  const int h = maps.shape[2], w = maps.shape[3];
  const int H = image.shape[2], W = image.shape[3];

  AttentionBundle b;
  b.fc = Tensor({1, 1, h, w});
  b.fb = Tensor({1, 1, h, w});
  std::copy_n(maps.data(), h * w, b.fc.data());
  std::copy_n(maps.data() + h * w, h * w, b.fb.data());
  b.wc = g.val(out.logits).v[0];
  b.wb = g.val(out.logits).v[1];
  const float mx = std::max(b.wc, b.wb);
  const float ec = std::exp(b.wc - mx), eb = std::exp(b.wb - mx);
  b.pc = ec / (ec + eb);
  b.pb = eb / (ec + eb);

  Tensor fused({1, 1, h, w});
  for (int i = 0; i < h * w; ++i) fused.v[i] = b.pc * b.fc.v[i] + b.pb * b.fb.v[i];
  b.attention = Tensor({1, 1, H, W});
  kern::bilinear_resize_forward(fused.data(), b.attention.data(), 1, 1, h, w, H, W);
  const auto [mn_it, mx_it] = std::minmax_element(b.attention.v.begin(), b.attention.v.end());
  const float mn = *mn_it, amx = *mx_it;
  if (amx == mn) {
    std::fill(b.attention.v.begin(), b.attention.v.end(), 1.0f);
  } else {
    const float inv = 1.0f / (amx - mn);
    for (auto& v : b.attention.v) v = (v - mn) * inv;
  }
  return b;
}

std::pair<SceneLabel, float> classify(const AmgNet& net, const Tensor& image) {
  const AttentionBundle b = amg_forward(net, image);
  if (b.pc >= b.pb) return {SceneLabel::crowd, b.pc};
  return {SceneLabel::background, b.pb};
}

Tensor binarize_attention(const Tensor& attention, float t) {
  check_shape(t >= 0.0f && t <= 1.0f,
              "binarize_attention: threshold " + std::to_string(t) + " outside [0,1]");
  Tensor out = attention;
  for (auto& v : out.v) v = (v < t) ? 0.0f : 1.0f;
  return out;
}

std::vector<double> train_amg(AmgNet& net, const std::vector<SceneSample>& positives,
                              const std::vector<SceneSample>& negatives,
                              const TrainConfig& config) {
  check_shape(!positives.empty() && !negatives.empty(),
              "train_amg: both classes must be non-empty");
  struct Item {
    const SceneSample* s;
    int label;  // 1 = crowd
  };
  std::vector<Item> items;
  items.reserve(positives.size() + negatives.size());
  for (const auto& s : positives) items.push_back({&s, 1});
  for (const auto& s : negatives) items.push_back({&s, 0});
  const int H = items[0].s->image.shape[2], W = items[0].s->image.shape[3];

  std::vector<int> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    SplitMix64 rng = rng_for(config.rng_seed, "amg.epoch", static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);

    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(config.batch_size)) {
      const int bs = static_cast<int>(
          std::min(static_cast<std::size_t>(config.batch_size), order.size() - pos));
      Tensor batch({bs, 1, H, W});
      std::vector<int> labels(static_cast<std::size_t>(bs));
      for (int b = 0; b < bs; ++b) {
        const Item& it = items[static_cast<std::size_t>(order[pos + b])];
        std::copy_n(it.s->image.data(), static_cast<std::size_t>(H) * W,
                    batch.data() + static_cast<std::size_t>(b) * H * W);
        labels[static_cast<std::size_t>(b)] = it.label;
      }
      Graph g;
      const BoundParamsT<float> bp = bind_params(g, net.params, true);
      const Var img = g.leaf(std::move(batch), false);
      const AmgGraphOut out = amg_graph_forward(g, bp, img);
      // logits rows are (Wc, Wb); the loss indexes columns by class label
      // (0 = background, 1 = crowd), so swap into (Wb, Wc) order.
      const Var loss = g.cross_entropy_2class(g.swap_cols2(out.logits), labels);
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
