#include "anchor/kernels.hpp"

namespace anchor::kernels::serial {

void affine_forward(DenseDims d, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b,
                    std::span<double> y) {
  for (std::size_t r = 0; r < d.rows; ++r) {
    for (std::size_t o = 0; o < d.out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d.in; ++i) acc += x[r * d.in + i] * w[o * d.in + i];
      y[r * d.out + o] = acc + b[o];
    }
  }
}

void affine_backward_input(DenseDims d, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  for (std::size_t r = 0; r < d.rows; ++r) {
    for (std::size_t i = 0; i < d.in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < d.out; ++o) acc += dy[r * d.out + o] * w[o * d.in + i];
      dx[r * d.in + i] = acc;
    }
  }
}

void affine_backward_params(DenseDims d, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> db) {
  for (std::size_t o = 0; o < d.out; ++o) {
    for (std::size_t i = 0; i < d.in; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < d.rows; ++r) acc += dy[r * d.out + o] * x[r * d.in + i];
      dw[o * d.in + i] += acc;
    }
    double bsum = 0.0;
    for (std::size_t r = 0; r < d.rows; ++r) bsum += dy[r * d.out + o];
    db[o] += bsum;
  }
}

}  // namespace anchor::kernels::serial
