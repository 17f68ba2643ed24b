#pragma once

#include <cstddef>
#include <span>

// Dense-layer kernels used by every forward/backward pass.
//
// Matrices are row-major. A layer with `in` inputs and `out` outputs stores
// its weights as an (out x in) matrix, so a batch of `rows` inputs X (rows x in)
// maps to Y = X * W^T + b (rows x out).
//
// Two implementations share these signatures: the OpenMP kernels in
// `anchor::kernels` (used everywhere) and the plain loops in
// `anchor::kernels::serial`, kept as the reference the tests and the
// benchmark compare against. Parallel work is split over independent output
// elements only, so results do not depend on the thread count.

namespace anchor::kernels {

struct DenseDims {
  std::size_t rows = 0;
  std::size_t in = 0;
  std::size_t out = 0;
};

/// y = x * w^T + b
void affine_forward(DenseDims d, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b,
                    std::span<double> y);

/// dx = dy * w
void affine_backward_input(DenseDims d, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);

/// dw += dy^T * x, db += column sums of dy
void affine_backward_params(DenseDims d, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> db);

/// Number of threads the parallel kernels will use.
int max_threads();

namespace serial {

void affine_forward(DenseDims d, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b,
                    std::span<double> y);

void affine_backward_input(DenseDims d, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);

void affine_backward_params(DenseDims d, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> db);

}  // namespace serial
}  // namespace anchor::kernels
