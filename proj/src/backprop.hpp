#pragma once

// Shared forward/backward machinery behind the public nn-core functions.

#include <span>
#include <vector>

#include "anchor/network.hpp"

namespace anchor::detail {

/// act[0] is the input, act[l] the output of layer l (ReLU'd for hidden
/// layers, raw logits for the last).
struct ForwardCache {
  std::size_t rows = 0;
  std::vector<std::vector<double>> act;
};

void forward_cached(const Network& net, std::span<const double> inputs,
                    std::size_t rows, ForwardCache& cache);

/// Backpropagates `upstream` (the gradient w.r.t. act[from]) down to the
/// input. Parameter gradients are accumulated into `grad` when non-null and
/// the input gradient is written to `dinput` when non-null.
void backward(const Network& net, const ForwardCache& cache, std::size_t from,
              std::vector<double> upstream, Gradient* grad,
              std::vector<double>* dinput);

}  // namespace anchor::detail
