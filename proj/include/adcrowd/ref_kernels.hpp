#pragma once

#include <cstdint>

#include "adcrowd/kernels.hpp"

// Serial reference kernels: the same math as adcrowd::kern written as plain
// per-element loops with no pragmas and no row tricks. Used by the tests to
// pin down the parallel kernels and by the benchmark tool as the baseline.

namespace adcrowd::ref {

using kern::ConvDims;
using kern::DeformDims;

template <typename T>
void conv2d_forward(const T* in, const T* w, const T* b, T* out,
                    const ConvDims& d) {
  const int OH = d.oh(), OW = d.ow();
  for (int n = 0; n < d.n; ++n)
    for (int o = 0; o < d.o; ++o)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          T acc = b[o];
          for (int c = 0; c < d.c; ++c)
            for (int ky = 0; ky < d.kh; ++ky)
              for (int kx = 0; kx < d.kw; ++kx) {
                const int iy = oy * d.stride - d.pad + ky * d.dil;
                const int ix = ox * d.stride - d.pad + kx * d.dil;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                acc += w[((static_cast<std::int64_t>(o) * d.c + c) * d.kh + ky) * d.kw + kx] *
                       in[((static_cast<std::int64_t>(n) * d.c + c) * d.h + iy) * d.w + ix];
              }
          out[((static_cast<std::int64_t>(n) * d.o + o) * OH + oy) * OW + ox] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const T* gout, const T* w, T* gin,
                           const ConvDims& d) {
  const int OH = d.oh(), OW = d.ow();
  for (int n = 0; n < d.n; ++n)
    for (int o = 0; o < d.o; ++o)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          const T g = gout[((static_cast<std::int64_t>(n) * d.o + o) * OH + oy) * OW + ox];
          for (int c = 0; c < d.c; ++c)
            for (int ky = 0; ky < d.kh; ++ky)
              for (int kx = 0; kx < d.kw; ++kx) {
                const int iy = oy * d.stride - d.pad + ky * d.dil;
                const int ix = ox * d.stride - d.pad + kx * d.dil;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                gin[((static_cast<std::int64_t>(n) * d.c + c) * d.h + iy) * d.w + ix] +=
                    g * w[((static_cast<std::int64_t>(o) * d.c + c) * d.kh + ky) * d.kw + kx];
              }
        }
}

template <typename T>
void conv2d_backward_weight(const T* gout, const T* in, T* gw,
                            const ConvDims& d) {
  const int OH = d.oh(), OW = d.ow();
  for (int n = 0; n < d.n; ++n)
    for (int o = 0; o < d.o; ++o)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          const T g = gout[((static_cast<std::int64_t>(n) * d.o + o) * OH + oy) * OW + ox];
          for (int c = 0; c < d.c; ++c)
            for (int ky = 0; ky < d.kh; ++ky)
              for (int kx = 0; kx < d.kw; ++kx) {
                const int iy = oy * d.stride - d.pad + ky * d.dil;
                const int ix = ox * d.stride - d.pad + kx * d.dil;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                gw[((static_cast<std::int64_t>(o) * d.c + c) * d.kh + ky) * d.kw + kx] +=
                    g * in[((static_cast<std::int64_t>(n) * d.c + c) * d.h + iy) * d.w + ix];
              }
        }
}

template <typename T>
void conv2d_backward_bias(const T* gout, T* gb, const ConvDims& d) {
  const int OH = d.oh(), OW = d.ow();
  for (int n = 0; n < d.n; ++n)
    for (int o = 0; o < d.o; ++o)
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i)
        gb[o] += gout[(static_cast<std::int64_t>(n) * d.o + o) * OH * OW + i];
}

template <typename T>
void deform_conv2d_forward(const T* in, const T* offsets, const T* w,
                           const T* b, T* out, T* cols, const DeformDims& d) {
  const int OH = d.oh(), OW = d.ow();
  const int kk = d.k * d.k;
  const std::int64_t np = static_cast<std::int64_t>(OH) * OW;
  for (int n = 0; n < d.n; ++n)
    for (int c = 0; c < d.c; ++c)
      for (int t = 0; t < kk; ++t)
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox) {
            const std::int64_t p = static_cast<std::int64_t>(oy) * OW + ox;
            const T* offy = offsets + (static_cast<std::int64_t>(n) * 2 * kk + 2 * t) * np;
            const T* offx = offsets + (static_cast<std::int64_t>(n) * 2 * kk + 2 * t + 1) * np;
            const T y = static_cast<T>(oy * d.stride - d.pad + t / d.k) + offy[p];
            const T x = static_cast<T>(ox * d.stride - d.pad + t % d.k) + offx[p];
            cols[((static_cast<std::int64_t>(n) * d.c + c) * kk + t) * np + p] =
                kern::bilinear_sample(in + (static_cast<std::int64_t>(n) * d.c + c) * d.h * d.w,
                                      d.h, d.w, y, x);
          }
  for (int n = 0; n < d.n; ++n)
    for (int o = 0; o < d.o; ++o)
      for (std::int64_t p = 0; p < np; ++p) {
        T acc = b[o];
        for (int c = 0; c < d.c; ++c)
          for (int t = 0; t < kk; ++t)
            acc += w[(static_cast<std::int64_t>(o) * d.c + c) * kk + t] *
                   cols[((static_cast<std::int64_t>(n) * d.c + c) * kk + t) * np + p];
        out[(static_cast<std::int64_t>(n) * d.o + o) * np + p] = acc;
      }
}

}  // namespace adcrowd::ref
