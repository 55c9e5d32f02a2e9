#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

// Parallel compute kernels. Every kernel is written gather-style: each
// output element is produced by exactly one iteration with a fixed inner
// accumulation order, so results do not depend on the OpenMP schedule or
// thread count. Backward kernels accumulate (+=) into pre-zeroed buffers.
// A plain serial mirror of these lives in ref_kernels.hpp for testing.

namespace adcrowd::kern {

struct ConvDims {
  int n, c, h, w;   // input  [n, c, h, w]
  int o, kh, kw;    // weight [o, c, kh, kw]
  int stride = 1, pad = 0, dil = 1;

  int oh() const { return (h + 2 * pad - dil * (kh - 1) - 1) / stride + 1; }
  int ow() const { return (w + 2 * pad - dil * (kw - 1) - 1) / stride + 1; }
};

// ---------------------------------------------------------------------------
// conv2d (cross-correlation)

template <typename T>
void conv2d_forward(const T* in, const T* w, const T* b, T* out,
                    const ConvDims& d) {
  const int OH = d.oh(), OW = d.ow();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int o = 0; o < d.o; ++o) {
      const T* in_n = in + static_cast<std::int64_t>(n) * d.c * d.h * d.w;
      T* out_p = out + (static_cast<std::int64_t>(n) * d.o + o) * OH * OW;
      if (d.stride == 1) {
        // Row accumulator: out row += w * shifted input row. The (c, ky, kx)
        // accumulation order matches the generic path below.
        for (int oy = 0; oy < OH; ++oy) {
          T* orow = out_p + static_cast<std::int64_t>(oy) * OW;
          for (int ox = 0; ox < OW; ++ox) orow[ox] = b[o];
          for (int c = 0; c < d.c; ++c) {
            for (int ky = 0; ky < d.kh; ++ky) {
              const int iy = oy - d.pad + ky * d.dil;
              if (iy < 0 || iy >= d.h) continue;
              const T* irow = in_n + (static_cast<std::int64_t>(c) * d.h + iy) * d.w;
              const T* wrow = w + ((static_cast<std::int64_t>(o) * d.c + c) * d.kh + ky) * d.kw;
              for (int kx = 0; kx < d.kw; ++kx) {
                const int shift = kx * d.dil - d.pad;  // ix = ox + shift
                const int lo = std::max(0, -shift);
                const int hi = std::min(OW, d.w - shift);
                const T wv = wrow[kx];
                const T* src = irow + shift;
                for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * src[ox];
              }
            }
          }
        }
      } else {
        for (int oy = 0; oy < OH; ++oy) {
          for (int ox = 0; ox < OW; ++ox) {
            T acc = b[o];
            for (int c = 0; c < d.c; ++c) {
              for (int ky = 0; ky < d.kh; ++ky) {
                const int iy = oy * d.stride - d.pad + ky * d.dil;
                if (iy < 0 || iy >= d.h) continue;
                const T* irow = in_n + (static_cast<std::int64_t>(c) * d.h + iy) * d.w;
                const T* wrow = w + ((static_cast<std::int64_t>(o) * d.c + c) * d.kh + ky) * d.kw;
                for (int kx = 0; kx < d.kw; ++kx) {
                  const int ix = ox * d.stride - d.pad + kx * d.dil;
                  if (ix < 0 || ix >= d.w) continue;
                  acc += wrow[kx] * irow[ix];
                }
              }
            }
            out_p[static_cast<std::int64_t>(oy) * OW + ox] = acc;
          }
        }
      }
    }
  }
}

// grad wrt input, gathered per input element (stride 1) or per plane.
template <typename T>
void conv2d_backward_input(const T* gout, const T* w, T* gin,
                           const ConvDims& d) {
  const int OH = d.oh(), OW = d.ow();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      T* gin_p = gin + (static_cast<std::int64_t>(n) * d.c + c) * d.h * d.w;
      const T* gout_n = gout + static_cast<std::int64_t>(n) * d.o * OH * OW;
      if (d.stride == 1) {
        for (int iy = 0; iy < d.h; ++iy) {
          T* grow = gin_p + static_cast<std::int64_t>(iy) * d.w;
          for (int o = 0; o < d.o; ++o) {
            for (int ky = 0; ky < d.kh; ++ky) {
              const int oy = iy + d.pad - ky * d.dil;
              if (oy < 0 || oy >= OH) continue;
              const T* gorow = gout_n + (static_cast<std::int64_t>(o) * OH + oy) * OW;
              const T* wrow = w + ((static_cast<std::int64_t>(o) * d.c + c) * d.kh + ky) * d.kw;
              for (int kx = 0; kx < d.kw; ++kx) {
                const int shift = d.pad - kx * d.dil;  // ox = ix + shift
                const int lo = std::max(0, -shift);
                const int hi = std::min(d.w, OW - shift);
                const T wv = wrow[kx];
                const T* src = gorow + shift;
                for (int ix = lo; ix < hi; ++ix) grow[ix] += wv * src[ix];
              }
            }
          }
        }
      } else {
        for (int iy = 0; iy < d.h; ++iy) {
          for (int ix = 0; ix < d.w; ++ix) {
            T acc = T(0);
            for (int o = 0; o < d.o; ++o) {
              for (int ky = 0; ky < d.kh; ++ky) {
                const int num_y = iy + d.pad - ky * d.dil;
                if (num_y < 0 || num_y % d.stride != 0) continue;
                const int oy = num_y / d.stride;
                if (oy >= OH) continue;
                for (int kx = 0; kx < d.kw; ++kx) {
                  const int num_x = ix + d.pad - kx * d.dil;
                  if (num_x < 0 || num_x % d.stride != 0) continue;
                  const int ox = num_x / d.stride;
                  if (ox >= OW) continue;
                  acc += w[((static_cast<std::int64_t>(o) * d.c + c) * d.kh + ky) * d.kw + kx] *
                         gout_n[(static_cast<std::int64_t>(o) * OH + oy) * OW + ox];
                }
              }
            }
            gin_p[static_cast<std::int64_t>(iy) * d.w + ix] += acc;
          }
        }
      }
    }
  }
}

// grad wrt weight, gathered per (o, c) filter slice.
template <typename T>
void conv2d_backward_weight(const T* gout, const T* in, T* gw,
                            const ConvDims& d) {
  const int OH = d.oh(), OW = d.ow();
#pragma omp parallel for collapse(2) schedule(static)
  for (int o = 0; o < d.o; ++o) {
    for (int c = 0; c < d.c; ++c) {
      for (int ky = 0; ky < d.kh; ++ky) {
        for (int kx = 0; kx < d.kw; ++kx) {
          T acc = T(0);
          for (int n = 0; n < d.n; ++n) {
            const T* in_p = in + (static_cast<std::int64_t>(n) * d.c + c) * d.h * d.w;
            const T* gout_p = gout + (static_cast<std::int64_t>(n) * d.o + o) * OH * OW;
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * d.stride - d.pad + ky * d.dil;
              if (iy < 0 || iy >= d.h) continue;
              const T* irow = in_p + static_cast<std::int64_t>(iy) * d.w;
              const T* gorow = gout_p + static_cast<std::int64_t>(oy) * OW;
              if (d.stride == 1) {
                const int shift = kx * d.dil - d.pad;  // ix = ox + shift
                const int lo = std::max(0, -shift);
                const int hi = std::min(OW, d.w - shift);
                const T* src = irow + shift;
                for (int ox = lo; ox < hi; ++ox) acc += gorow[ox] * src[ox];
              } else {
                for (int ox = 0; ox < OW; ++ox) {
                  const int ix = ox * d.stride - d.pad + kx * d.dil;
                  if (ix < 0 || ix >= d.w) continue;
                  acc += gorow[ox] * irow[ix];
                }
              }
            }
          }
          gw[((static_cast<std::int64_t>(o) * d.c + c) * d.kh + ky) * d.kw + kx] += acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_bias(const T* gout, T* gb, const ConvDims& d) {
  const int OH = d.oh(), OW = d.ow();
#pragma omp parallel for schedule(static)
  for (int o = 0; o < d.o; ++o) {
    T acc = T(0);
    for (int n = 0; n < d.n; ++n) {
      const T* p = gout + (static_cast<std::int64_t>(n) * d.o + o) * OH * OW;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) acc += p[i];
    }
    gb[o] += acc;
  }
}

// ---------------------------------------------------------------------------
// im2col convolution path. The columns matrix [n, c*kh*kw, oh*ow] turns the
// convolution into saxpy/dot sweeps over whole output maps, which vectorizes
// far better than row accumulation on small maps; the graph caches it so the
// backward pass reuses the gathered patches. Row index (c*kh + ky)*kw + kx
// keeps the (c, ky, kx) accumulation order of conv2d_forward, so both paths
// agree bit for bit.

template <typename T>
void conv2d_im2col(const T* in, T* cols, const ConvDims& d) {
  const int OH = d.oh(), OW = d.ow();
  const std::int64_t np = static_cast<std::int64_t>(OH) * OW;
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      const T* plane = in + (static_cast<std::int64_t>(n) * d.c + c) * d.h * d.w;
      T* base = cols + (static_cast<std::int64_t>(n) * d.c + c) * d.kh * d.kw * np;
      for (int ky = 0; ky < d.kh; ++ky) {
        for (int kx = 0; kx < d.kw; ++kx) {
          T* col = base + (static_cast<std::int64_t>(ky) * d.kw + kx) * np;
          for (int oy = 0; oy < OH; ++oy) {
            T* crow = col + static_cast<std::int64_t>(oy) * OW;
            const int iy = oy * d.stride - d.pad + ky * d.dil;
            if (iy < 0 || iy >= d.h) {
              for (int ox = 0; ox < OW; ++ox) crow[ox] = T(0);
              continue;
            }
            const T* irow = plane + static_cast<std::int64_t>(iy) * d.w;
            if (d.stride == 1) {
              const int shift = kx * d.dil - d.pad;  // ix = ox + shift
              const int lo = std::min(OW, std::max(0, -shift));
              const int hi = std::max(lo, std::min(OW, d.w - shift));
              for (int ox = 0; ox < lo; ++ox) crow[ox] = T(0);
              for (int ox = lo; ox < hi; ++ox) crow[ox] = irow[ox + shift];
              for (int ox = hi; ox < OW; ++ox) crow[ox] = T(0);
            } else {
              for (int ox = 0; ox < OW; ++ox) {
                const int ix = ox * d.stride - d.pad + kx * d.dil;
                crow[ox] = (ix >= 0 && ix < d.w) ? irow[ix] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward_cols(const T* cols, const T* w, const T* b, T* out,
                         const ConvDims& d) {
  const std::int64_t np = static_cast<std::int64_t>(d.oh()) * d.ow();
  const int ck = d.c * d.kh * d.kw;
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int o = 0; o < d.o; ++o) {
      T* op = out + (static_cast<std::int64_t>(n) * d.o + o) * np;
      const T* cp = cols + static_cast<std::int64_t>(n) * ck * np;
      for (std::int64_t p = 0; p < np; ++p) op[p] = b[o];
      const T* wrow = w + static_cast<std::int64_t>(o) * ck;
      for (int r = 0; r < ck; ++r) {
        const T wv = wrow[r];
        const T* col = cp + static_cast<std::int64_t>(r) * np;
        for (std::int64_t p = 0; p < np; ++p) op[p] += wv * col[p];
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight_cols(const T* gout, const T* cols, T* gw,
                                 const ConvDims& d) {
  const std::int64_t np = static_cast<std::int64_t>(d.oh()) * d.ow();
  const int ck = d.c * d.kh * d.kw;
#pragma omp parallel for collapse(2) schedule(static)
  for (int o = 0; o < d.o; ++o) {
    for (int r = 0; r < ck; ++r) {
      T acc = T(0);
      for (int n = 0; n < d.n; ++n) {
        const T* gop = gout + (static_cast<std::int64_t>(n) * d.o + o) * np;
        const T* col = cols + (static_cast<std::int64_t>(n) * ck + r) * np;
        for (std::int64_t p = 0; p < np; ++p) acc += gop[p] * col[p];
      }
      gw[static_cast<std::int64_t>(o) * ck + r] += acc;
    }
  }
}

// gcol = W^T * gout, then the columns are scattered back onto the input
// planes (col2im). gcol is caller scratch shaped like cols.
template <typename T>
void conv2d_backward_input_cols(const T* gout, const T* w, T* gcol, T* gin,
                                const ConvDims& d) {
  const int OH = d.oh(), OW = d.ow();
  const std::int64_t np = static_cast<std::int64_t>(OH) * OW;
  const int ck = d.c * d.kh * d.kw;
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int r = 0; r < ck; ++r) {
      T* gc = gcol + (static_cast<std::int64_t>(n) * ck + r) * np;
      for (std::int64_t p = 0; p < np; ++p) gc[p] = T(0);
      for (int o = 0; o < d.o; ++o) {
        const T wv = w[static_cast<std::int64_t>(o) * ck + r];
        const T* gop = gout + (static_cast<std::int64_t>(n) * d.o + o) * np;
        for (std::int64_t p = 0; p < np; ++p) gc[p] += wv * gop[p];
      }
    }
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      T* plane = gin + (static_cast<std::int64_t>(n) * d.c + c) * d.h * d.w;
      const T* base = gcol + (static_cast<std::int64_t>(n) * d.c + c) * d.kh * d.kw * np;
      for (int ky = 0; ky < d.kh; ++ky) {
        for (int kx = 0; kx < d.kw; ++kx) {
          const T* col = base + (static_cast<std::int64_t>(ky) * d.kw + kx) * np;
          for (int oy = 0; oy < OH; ++oy) {
            const int iy = oy * d.stride - d.pad + ky * d.dil;
            if (iy < 0 || iy >= d.h) continue;
            T* grow = plane + static_cast<std::int64_t>(iy) * d.w;
            const T* crow = col + static_cast<std::int64_t>(oy) * OW;
            if (d.stride == 1) {
              const int shift = kx * d.dil - d.pad;
              const int lo = std::min(OW, std::max(0, -shift));
              const int hi = std::max(lo, std::min(OW, d.w - shift));
              for (int ox = lo; ox < hi; ++ox) grow[ox + shift] += crow[ox];
            } else {
              for (int ox = 0; ox < OW; ++ox) {
                const int ix = ox * d.stride - d.pad + kx * d.dil;
                if (ix >= 0 && ix < d.w) grow[ix] += crow[ox];
              }
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Ties go to the first element in scan order.

template <typename T>
void max_pool2_forward(const T* in, T* out, std::int32_t* argmax, int n, int c,
                       int h, int w) {
  const int oh = h / 2, ow = w / 2;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* ip = in + (static_cast<std::int64_t>(b) * c + ch) * h * w;
      T* op = out + (static_cast<std::int64_t>(b) * c + ch) * oh * ow;
      std::int32_t* ap = argmax + (static_cast<std::int64_t>(b) * c + ch) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          int best = (2 * oy) * w + 2 * ox;
          T bv = ip[best];
          const int cand[3] = {(2 * oy) * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                               (2 * oy + 1) * w + 2 * ox + 1};
          for (int k = 0; k < 3; ++k)
            if (ip[cand[k]] > bv) {
              bv = ip[cand[k]];
              best = cand[k];
            }
          op[oy * ow + ox] = bv;
          ap[oy * ow + ox] = best;
        }
      }
    }
  }
}

template <typename T>
void max_pool2_backward(const T* gout, const std::int32_t* argmax, T* gin,
                        int n, int c, int h, int w) {
  const int oh = h / 2, ow = w / 2;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* gp = gout + (static_cast<std::int64_t>(b) * c + ch) * oh * ow;
      const std::int32_t* ap = argmax + (static_cast<std::int64_t>(b) * c + ch) * oh * ow;
      T* gi = gin + (static_cast<std::int64_t>(b) * c + ch) * h * w;
      for (int i = 0; i < oh * ow; ++i) gi[ap[i]] += gp[i];
    }
  }
}

// ---------------------------------------------------------------------------
// bilinear resize, align-corners convention

template <typename T>
void bilinear_resize_forward(const T* in, T* out, int n, int c, int h, int w,
                             int oh, int ow) {
  const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
  const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* ip = in + (static_cast<std::int64_t>(b) * c + ch) * h * w;
      T* op = out + (static_cast<std::int64_t>(b) * c + ch) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const double fy = oy * sy;
        const int y0 = std::min(static_cast<int>(fy), h - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const T ry = static_cast<T>(fy - y0);
        for (int ox = 0; ox < ow; ++ox) {
          const double fx = ox * sx;
          const int x0 = std::min(static_cast<int>(fx), w - 1);
          const int x1 = std::min(x0 + 1, w - 1);
          const T rx = static_cast<T>(fx - x0);
          const T top = ip[y0 * w + x0] * (T(1) - rx) + ip[y0 * w + x1] * rx;
          const T bot = ip[y1 * w + x0] * (T(1) - rx) + ip[y1 * w + x1] * rx;
          op[oy * ow + ox] = top * (T(1) - ry) + bot * ry;
        }
      }
    }
  }
}

// Scatter form, one thread per (n, c) plane.
template <typename T>
void bilinear_resize_backward(const T* gout, T* gin, int n, int c, int h,
                              int w, int oh, int ow) {
  const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
  const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* gp = gout + (static_cast<std::int64_t>(b) * c + ch) * oh * ow;
      T* gi = gin + (static_cast<std::int64_t>(b) * c + ch) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        const double fy = oy * sy;
        const int y0 = std::min(static_cast<int>(fy), h - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const T ry = static_cast<T>(fy - y0);
        for (int ox = 0; ox < ow; ++ox) {
          const double fx = ox * sx;
          const int x0 = std::min(static_cast<int>(fx), w - 1);
          const int x1 = std::min(x0 + 1, w - 1);
          const T rx = static_cast<T>(fx - x0);
          const T g = gp[oy * ow + ox];
          gi[y0 * w + x0] += g * (T(1) - ry) * (T(1) - rx);
          gi[y0 * w + x1] += g * (T(1) - ry) * rx;
          gi[y1 * w + x0] += g * ry * (T(1) - rx);
          gi[y1 * w + x1] += g * ry * rx;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// bilinear point sampling (deformable convolution support)

// Value at fractional (y, x) with zero padding: locations strictly outside
// [-1, H] x [-1, W] contribute nothing; missing neighbors count as zero.
template <typename T>
T bilinear_sample(const T* plane, int h, int w, T y, T x) {
  if (y <= T(-1) || y >= T(h) || x <= T(-1) || x >= T(w)) return T(0);
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = y0 + 1, x1 = x0 + 1;
  const T fy = y - y0, fx = x - x0;
  const T v00 = (y0 >= 0 && x0 >= 0) ? plane[y0 * w + x0] : T(0);
  const T v01 = (y0 >= 0 && x1 < w) ? plane[y0 * w + x1] : T(0);
  const T v10 = (y1 < h && x0 >= 0) ? plane[y1 * w + x0] : T(0);
  const T v11 = (y1 < h && x1 < w) ? plane[y1 * w + x1] : T(0);
  return (v00 * (T(1) - fx) + v01 * fx) * (T(1) - fy) +
         (v10 * (T(1) - fx) + v11 * fx) * fy;
}

// d(sample)/dy and d(sample)/dx at (y, x).
template <typename T>
void bilinear_sample_spatial_grad(const T* plane, int h, int w, T y, T x,
                                  T& dy, T& dx) {
  dy = T(0);
  dx = T(0);
  if (y <= T(-1) || y >= T(h) || x <= T(-1) || x >= T(w)) return;
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = y0 + 1, x1 = x0 + 1;
  const T fy = y - y0, fx = x - x0;
  const T v00 = (y0 >= 0 && x0 >= 0) ? plane[y0 * w + x0] : T(0);
  const T v01 = (y0 >= 0 && x1 < w) ? plane[y0 * w + x1] : T(0);
  const T v10 = (y1 < h && x0 >= 0) ? plane[y1 * w + x0] : T(0);
  const T v11 = (y1 < h && x1 < w) ? plane[y1 * w + x1] : T(0);
  dy = (v10 * (T(1) - fx) + v11 * fx) - (v00 * (T(1) - fx) + v01 * fx);
  dx = (v01 * (T(1) - fy) + v11 * fy) - (v00 * (T(1) - fy) + v10 * fy);
}

// Scatter g into the four neighbors of (y, x).
template <typename T>
void bilinear_sample_scatter(T* plane, int h, int w, T y, T x, T g) {
  if (y <= T(-1) || y >= T(h) || x <= T(-1) || x >= T(w)) return;
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = y0 + 1, x1 = x0 + 1;
  const T fy = y - y0, fx = x - x0;
  if (y0 >= 0 && x0 >= 0) plane[y0 * w + x0] += g * (T(1) - fy) * (T(1) - fx);
  if (y0 >= 0 && x1 < w) plane[y0 * w + x1] += g * (T(1) - fy) * fx;
  if (y1 < h && x0 >= 0) plane[y1 * w + x0] += g * fy * (T(1) - fx);
  if (y1 < h && x1 < w) plane[y1 * w + x1] += g * fy * fx;
}

// ---------------------------------------------------------------------------
// deformable convolution (square kernel, dilation 1)
//
// Offsets are a [n, 2*k*k, oh, ow] map: channel 2*t is the y displacement
// and 2*t+1 the x displacement of tap t, taps in row-major kernel order.
// The sampled values are cached in cols [n, c*k*k, oh*ow] for the backward
// pass.

struct DeformDims {
  int n, c, h, w;  // input
  int o, k;        // weight [o, c, k, k]
  int stride = 1, pad = 0;

  int oh() const { return (h + 2 * pad - (k - 1) - 1) / stride + 1; }
  int ow() const { return (w + 2 * pad - (k - 1) - 1) / stride + 1; }
};

template <typename T>
void deform_conv2d_forward(const T* in, const T* offsets, const T* w,
                           const T* b, T* out, T* cols, const DeformDims& d) {
  const int OH = d.oh(), OW = d.ow();
  const int kk = d.k * d.k;
  const std::int64_t np = static_cast<std::int64_t>(OH) * OW;
  // sample columns
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      const T* plane = in + (static_cast<std::int64_t>(n) * d.c + c) * d.h * d.w;
      const T* off_n = offsets + static_cast<std::int64_t>(n) * 2 * kk * np;
      for (int t = 0; t < kk; ++t) {
        const int ky = t / d.k, kx = t % d.k;
        T* col = cols + ((static_cast<std::int64_t>(n) * d.c + c) * kk + t) * np;
        const T* offy = off_n + static_cast<std::int64_t>(2 * t) * np;
        const T* offx = off_n + static_cast<std::int64_t>(2 * t + 1) * np;
        for (int oy = 0; oy < OH; ++oy) {
          for (int ox = 0; ox < OW; ++ox) {
            const std::int64_t p = static_cast<std::int64_t>(oy) * OW + ox;
            const T y = static_cast<T>(oy * d.stride - d.pad + ky) + offy[p];
            const T x = static_cast<T>(ox * d.stride - d.pad + kx) + offx[p];
            col[p] = bilinear_sample(plane, d.h, d.w, y, x);
          }
        }
      }
    }
  }
  // out[n, o, :] = b[o] + sum_{c, t} w[o, c, t] * cols[n, c, t, :]
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int o = 0; o < d.o; ++o) {
      T* op = out + (static_cast<std::int64_t>(n) * d.o + o) * np;
      for (std::int64_t p = 0; p < np; ++p) op[p] = b[o];
      for (int c = 0; c < d.c; ++c) {
        for (int t = 0; t < kk; ++t) {
          const T wv = w[(static_cast<std::int64_t>(o) * d.c + c) * kk + t];
          const T* col = cols + ((static_cast<std::int64_t>(n) * d.c + c) * kk + t) * np;
          for (std::int64_t p = 0; p < np; ++p) op[p] += wv * col[p];
        }
      }
    }
  }
}

// Backward for all five gradient targets. Null pointers skip that target.
// gcol is scratch of the same size as cols.
template <typename T>
void deform_conv2d_backward(const T* in, const T* offsets, const T* w,
                            const T* cols, const T* gout, T* gin,
                            T* goffsets, T* gw, T* gb, T* gcol,
                            const DeformDims& d) {
  const int OH = d.oh(), OW = d.ow();
  const int kk = d.k * d.k;
  const std::int64_t np = static_cast<std::int64_t>(OH) * OW;

  // gcol[n, c, t, :] = sum_o w[o, c, t] * gout[n, o, :]
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      for (int t = 0; t < kk; ++t) {
        T* gc = gcol + ((static_cast<std::int64_t>(n) * d.c + c) * kk + t) * np;
        for (std::int64_t p = 0; p < np; ++p) gc[p] = T(0);
        for (int o = 0; o < d.o; ++o) {
          const T wv = w[(static_cast<std::int64_t>(o) * d.c + c) * kk + t];
          const T* gop = gout + (static_cast<std::int64_t>(n) * d.o + o) * np;
          for (std::int64_t p = 0; p < np; ++p) gc[p] += wv * gop[p];
        }
      }
    }
  }

  if (gw) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int o = 0; o < d.o; ++o) {
      for (int c = 0; c < d.c; ++c) {
        for (int t = 0; t < kk; ++t) {
          T acc = T(0);
          for (int n = 0; n < d.n; ++n) {
            const T* gop = gout + (static_cast<std::int64_t>(n) * d.o + o) * np;
            const T* col = cols + ((static_cast<std::int64_t>(n) * d.c + c) * kk + t) * np;
            for (std::int64_t p = 0; p < np; ++p) acc += gop[p] * col[p];
          }
          gw[(static_cast<std::int64_t>(o) * d.c + c) * kk + t] += acc;
        }
      }
    }
  }

  if (gb) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < d.o; ++o) {
      T acc = T(0);
      for (int n = 0; n < d.n; ++n) {
        const T* gop = gout + (static_cast<std::int64_t>(n) * d.o + o) * np;
        for (std::int64_t p = 0; p < np; ++p) acc += gop[p];
      }
      gb[o] += acc;
    }
  }

  if (goffsets) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n) {
      for (int t = 0; t < kk; ++t) {
        const int ky = t / d.k, kx = t % d.k;
        const T* off_n = offsets + static_cast<std::int64_t>(n) * 2 * kk * np;
        const T* offy = off_n + static_cast<std::int64_t>(2 * t) * np;
        const T* offx = off_n + static_cast<std::int64_t>(2 * t + 1) * np;
        T* goy = goffsets + (static_cast<std::int64_t>(n) * 2 * kk + 2 * t) * np;
        T* gox = goffsets + (static_cast<std::int64_t>(n) * 2 * kk + 2 * t + 1) * np;
        for (int oy = 0; oy < OH; ++oy) {
          for (int ox = 0; ox < OW; ++ox) {
            const std::int64_t p = static_cast<std::int64_t>(oy) * OW + ox;
            const T y = static_cast<T>(oy * d.stride - d.pad + ky) + offy[p];
            const T x = static_cast<T>(ox * d.stride - d.pad + kx) + offx[p];
            T ay = T(0), ax = T(0);
            for (int c = 0; c < d.c; ++c) {
              const T* plane = in + (static_cast<std::int64_t>(n) * d.c + c) * d.h * d.w;
              T dy, dx;
              bilinear_sample_spatial_grad(plane, d.h, d.w, y, x, dy, dx);
              const T g = gcol[((static_cast<std::int64_t>(n) * d.c + c) * kk + t) * np + p];
              ay += g * dy;
              ax += g * dx;
            }
            goy[p] += ay;
            gox[p] += ax;
          }
        }
      }
    }
  }

  if (gin) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n) {
      for (int c = 0; c < d.c; ++c) {
        T* gplane = gin + (static_cast<std::int64_t>(n) * d.c + c) * d.h * d.w;
        const T* off_n = offsets + static_cast<std::int64_t>(n) * 2 * kk * np;
        for (int t = 0; t < kk; ++t) {
          const int ky = t / d.k, kx = t % d.k;
          const T* offy = off_n + static_cast<std::int64_t>(2 * t) * np;
          const T* offx = off_n + static_cast<std::int64_t>(2 * t + 1) * np;
          const T* gc = gcol + ((static_cast<std::int64_t>(n) * d.c + c) * kk + t) * np;
          for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
              const std::int64_t p = static_cast<std::int64_t>(oy) * OW + ox;
              const T y = static_cast<T>(oy * d.stride - d.pad + ky) + offy[p];
              const T x = static_cast<T>(ox * d.stride - d.pad + kx) + offx[p];
              bilinear_sample_scatter(gplane, d.h, d.w, y, x, gc[p]);
            }
          }
        }
      }
    }
  }
}

}  // namespace adcrowd::kern
