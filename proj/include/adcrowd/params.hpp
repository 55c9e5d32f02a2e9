#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "adcrowd/rng.hpp"
#include "adcrowd/tensor.hpp"

namespace adcrowd {

struct TrainConfig {
  double learning_rate = 1e-5;
  int batch_size = 1;
  int epochs = 1;
  std::uint64_t rng_seed = 0;
  int precision_bits = 32;  // 64 exists only for gradient checking
};

template <typename T>
struct ParamEntryT {
  std::string name;
  TensorT<T> tensor;
  TensorT<T> grad;
  TensorT<T> adam_m;
  TensorT<T> adam_v;
  bool has_grad = false;
};

template <typename T>
struct NetworkParamsT {
  std::vector<ParamEntryT<T>> entries;
  std::int64_t step_count = 0;

  ParamEntryT<T>& add(const std::string& name, TensorT<T> t) {
    if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    ParamEntryT<T> e;
    e.name = name;
    e.grad = TensorT<T>(t.shape);
    e.adam_m = TensorT<T>(t.shape);
    e.adam_v = TensorT<T>(t.shape);
    e.tensor = std::move(t);
    entries.push_back(std::move(e));
    return entries.back();
  }

  ParamEntryT<T>* find(const std::string& name) {
    for (auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }

  const ParamEntryT<T>* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }

  ParamEntryT<T>& at(const std::string& name) {
    if (auto* e = find(name)) return *e;
    throw std::invalid_argument("unknown parameter name: " + name);
  }

  const ParamEntryT<T>& at(const std::string& name) const {
    if (const auto* e = find(name)) return *e;
    throw std::invalid_argument("unknown parameter name: " + name);
  }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries) n += e.tensor.numel();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries) {
      std::fill(e.grad.v.begin(), e.grad.v.end(), T(0));
      e.has_grad = false;
    }
  }
};

// Standard Adam with bias correction; gradients are consumed (zeroed) by the
// step. Moments persist in the entries but are never checkpointed.
template <typename T>
void adam_step(NetworkParamsT<T>& params, const TrainConfig& cfg) {
  for (const auto& e : params.entries)
    if (!e.has_grad)
      throw std::runtime_error("adam_step: gradient not populated for " + e.name);
  const T b1 = T(0.9), b2 = T(0.999), eps = T(1e-8);
  const std::int64_t t = ++params.step_count;
  const T bc1 = T(1) - static_cast<T>(std::pow(0.9, static_cast<double>(t)));
  const T bc2 = T(1) - static_cast<T>(std::pow(0.999, static_cast<double>(t)));
  const T lr = static_cast<T>(cfg.learning_rate);
  for (auto& e : params.entries) {
    const std::int64_t n = e.tensor.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      const T g = e.grad.v[i];
      e.adam_m.v[i] = b1 * e.adam_m.v[i] + (T(1) - b1) * g;
      e.adam_v.v[i] = b2 * e.adam_v.v[i] + (T(1) - b2) * g * g;
      const T mhat = e.adam_m.v[i] / bc1;
      const T vhat = e.adam_v.v[i] / bc2;
      e.tensor.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    std::fill(e.grad.v.begin(), e.grad.v.end(), T(0));
    e.has_grad = false;
  }
}

// He-style fan-in normal initialization for conv weights.
template <typename T>
TensorT<T> he_conv_weight(SplitMix64& rng, int o, int c, int kh, int kw,
                          double gain = 1.0) {
  TensorT<T> t({o, c, kh, kw});
  const double std = gain * std::sqrt(2.0 / (static_cast<double>(c) * kh * kw));
  for (auto& v : t.v) v = static_cast<T>(rng.normal() * std);
  return t;
}

}  // namespace adcrowd
