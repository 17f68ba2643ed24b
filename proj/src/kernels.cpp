#include "anchor/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace anchor::kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = std::size_t{1} << 15;

constexpr std::size_t kRowBlock = 4;

void check_dims(DenseDims d, std::size_t x, std::size_t w, std::size_t y) {
  assert(x == d.rows * d.in);
  assert(w == d.out * d.in);
  assert(y == d.rows * d.out);
  (void)d, (void)x, (void)w, (void)y;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void affine_forward(DenseDims d, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b,
                    std::span<double> y) {
  check_dims(d, x.size(), w.size(), y.size());
  const std::size_t in = d.in;
  const std::size_t out = d.out;
  const auto blocks =
      static_cast<std::int64_t>((d.rows + kRowBlock - 1) / kRowBlock);
  const bool parallel = d.rows * in * out >= kParallelWork;

  // Four input rows share each pass over a weight row.
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * kRowBlock;
    const std::size_t nr = std::min(kRowBlock, d.rows - r0);
    const double* xr = x.data() + r0 * in;
    double* yr = y.data() + r0 * out;
    if (nr == kRowBlock) {
      const double* x0 = xr;
      const double* x1 = xr + in;
      const double* x2 = xr + 2 * in;
      const double* x3 = xr + 3 * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double* wo = w.data() + o * in;
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
#pragma omp simd reduction(+ : a0, a1, a2, a3)
        for (std::size_t i = 0; i < in; ++i) {
          a0 += x0[i] * wo[i];
          a1 += x1[i] * wo[i];
          a2 += x2[i] * wo[i];
          a3 += x3[i] * wo[i];
        }
        yr[o] = a0 + b[o];
        yr[out + o] = a1 + b[o];
        yr[2 * out + o] = a2 + b[o];
        yr[3 * out + o] = a3 + b[o];
      }
    } else {
      for (std::size_t r = 0; r < nr; ++r) {
        const double* xi = xr + r * in;
        for (std::size_t o = 0; o < out; ++o) {
          const double* wo = w.data() + o * in;
          double acc = 0.0;
#pragma omp simd reduction(+ : acc)
          for (std::size_t i = 0; i < in; ++i) acc += xi[i] * wo[i];
          yr[r * out + o] = acc + b[o];
        }
      }
    }
  }
}

void affine_backward_input(DenseDims d, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  check_dims(d, dx.size(), w.size(), dy.size());
  const std::size_t in = d.in;
  const std::size_t out = d.out;
  const auto rows = static_cast<std::int64_t>(d.rows);
  const bool parallel = d.rows * in * out >= kParallelWork;

#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t r = 0; r < rows; ++r) {
    double* dxr = dx.data() + static_cast<std::size_t>(r) * in;
    const double* dyr = dy.data() + static_cast<std::size_t>(r) * out;
    std::fill(dxr, dxr + in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      const double* wo = w.data() + o * in;
#pragma omp simd
      for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wo[i];
    }
  }
}

void affine_backward_params(DenseDims d, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> db) {
  check_dims(d, x.size(), dw.size(), dy.size());
  assert(db.size() == d.out);
  const std::size_t in = d.in;
  const std::size_t out = d.out;
  const auto outs = static_cast<std::int64_t>(out);
  const bool parallel = d.rows * in * out >= kParallelWork;

#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t oi = 0; oi < outs; ++oi) {
    const auto o = static_cast<std::size_t>(oi);
    double* dwo = dw.data() + o * in;
    double bsum = 0.0;
    for (std::size_t r = 0; r < d.rows; ++r) {
      const double g = dy[r * out + o];
      bsum += g;
      if (g == 0.0) continue;
      const double* xr = x.data() + r * in;
#pragma omp simd
      for (std::size_t i = 0; i < in; ++i) dwo[i] += g * xr[i];
    }
    db[o] += bsum;
  }
}

}  // namespace anchor::kernels
