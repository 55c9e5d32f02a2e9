// Timing + agreement harness: OpenMP kernels vs the serial reference.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "adcrowd/kernels.hpp"
#include "adcrowd/ref_kernels.hpp"
#include "adcrowd/rng.hpp"
#include "adcrowd/tensor.hpp"

using namespace adcrowd;

namespace {

Tensor randt(const std::vector<int>& shape, std::uint64_t seed) {
  SplitMix64 rng(mix64(seed));
  Tensor t(shape);
  for (auto& v : t.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.v[i]) - b.v[i]));
  return m;
}

template <typename F>
double time_best_ms(F fn, int reps) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void bench_conv(int c, int o, int hw, int k) {
  kern::ConvDims d{1, c, hw, hw, o, k, k, 1, k / 2, 1};
  const Tensor x = randt({1, c, hw, hw}, 1);
  const Tensor w = randt({o, c, k, k}, 2);
  const Tensor b = randt({o}, 3);
  Tensor out({1, o, d.oh(), d.ow()});
  Tensor out_ref = out;

  const double ms_omp = time_best_ms(
      [&] { kern::conv2d_forward(x.data(), w.data(), b.data(), out.data(), d); }, 5);
  const double ms_ref = time_best_ms(
      [&] { ref::conv2d_forward(x.data(), w.data(), b.data(), out_ref.data(), d); }, 3);

  const double flops = 2.0 * o * c * k * k * d.oh() * d.ow();
  std::printf("conv2d  c=%-3d o=%-3d %3dx%-3d k=%d   omp %7.2f ms (%5.2f GF/s)"
              "   ref %7.2f ms   speedup %4.2fx   diff %.2e\n",
              c, o, hw, hw, k, ms_omp, flops / ms_omp * 1e-6, ms_ref, ms_ref / ms_omp,
              max_abs_diff(out, out_ref));
}

void bench_deform(int c, int o, int hw, int k) {
  kern::DeformDims d{1, c, hw, hw, o, k, 1, k / 2};
  const Tensor x = randt({1, c, hw, hw}, 4);
  const Tensor w = randt({o, c, k, k}, 5);
  const Tensor b = randt({o}, 6);
  Tensor offsets = randt({1, 2 * k * k, d.oh(), d.ow()}, 7);
  for (auto& v : offsets.v) v *= 0.5f;
  Tensor out({1, o, d.oh(), d.ow()});
  Tensor out_ref = out;
  Tensor cols({1, c * k * k, d.oh() * d.ow()});
  Tensor cols_ref = cols;

  const double ms_omp = time_best_ms(
      [&] {
        kern::deform_conv2d_forward(x.data(), offsets.data(), w.data(), b.data(),
                                    out.data(), cols.data(), d);
      },
      5);
  const double ms_ref = time_best_ms(
      [&] {
        ref::deform_conv2d_forward(x.data(), offsets.data(), w.data(), b.data(),
                                   out_ref.data(), cols_ref.data(), d);
      },
      3);

  std::printf("deform  c=%-3d o=%-3d %3dx%-3d k=%d   omp %7.2f ms"
              "                ref %7.2f ms   speedup %4.2fx   diff %.2e\n",
              c, o, hw, hw, k, ms_omp, ms_ref, ms_ref / ms_omp,
              max_abs_diff(out, out_ref));
}

}  // namespace

int main() {
  bench_conv(16, 16, 64, 3);
  bench_conv(16, 32, 128, 3);
  bench_conv(32, 32, 64, 3);
  bench_conv(32, 8, 64, 1);
  bench_deform(32, 8, 32, 3);
  bench_deform(32, 8, 32, 5);
  return 0;
}
