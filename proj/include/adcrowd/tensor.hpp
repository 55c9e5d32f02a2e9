#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace adcrowd {

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// Dense row-major tensor, rank 1..4. Rank-4 convention is
// [batch, channels, height, width].
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> v;

  TensorT() = default;

  // zero-filled
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<std::size_t>(numel()), T(0));
  }

  TensorT(std::vector<int> s, std::vector<T> values)
      : shape(std::move(s)), v(std::move(values)) {
    if (numel() != static_cast<std::int64_t>(v.size()))
      throw std::invalid_argument("tensor shape " + shape_str(shape) +
                                  " does not match value count " +
                                  std::to_string(v.size()));
  }

  static TensorT zeros(std::vector<int> s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return TensorT(std::move(s), std::vector<T>(static_cast<std::size_t>(n), T(0)));
  }

  static TensorT full(std::vector<int> s, T value) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return TensorT(std::move(s), std::vector<T>(static_cast<std::size_t>(n), value));
  }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  // 4-D accessor, valid only for rank-4 tensors.
  T& at(int n, int c, int y, int x) {
    return v[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x)];
  }
  const T& at(int n, int c, int y, int x) const {
    return v[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x)];
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<U>(v[i]);
    return TensorT<U>(shape, std::move(out));
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

inline void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace adcrowd
