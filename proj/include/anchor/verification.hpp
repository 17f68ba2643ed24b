#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "anchor/batch.hpp"
#include "anchor/network.hpp"
#include "anchor/rng.hpp"

namespace anchor {

// ---------------------------------------------------------------- gradient checks

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;  // coordinates with |FD| above the floor
  std::size_t skipped = 0;  // coordinates whose FD stencil crossed a ReLU kink
};

/// Compares batch_loss_and_grad against central differences of an
/// independent extended-precision forward pass.
GradCheck check_param_gradient(const Network& net, const Batch& batch, double h = 1e-5,
                               double floor = 1e-8);

/// Same for input_grad.
GradCheck check_input_gradient(const Network& net, std::span<const double> input,
                               std::size_t label, int task_id, double h = 1e-5,
                               double floor = 1e-8);

// ---------------------------------------------------------------- Hessian-vector products

using GradFn = std::function<std::vector<double>(std::span<const double>)>;

/// (grad(theta + h v/|v|) - grad(theta - h v/|v|)) / (2h) * |v|.
/// Throws std::invalid_argument for v = 0 or h <= 0.
std::vector<double> hvp(const GradFn& grad, std::span<const double> theta,
                        std::span<const double> v, double h = 1e-4);

/// Mean cross-entropy on a batch.
struct CrossEntropyLoss {
  Batch batch;
};

/// Sum over anchors of ||f(e) - target||^2 with frozen targets.
struct AnchorL2Loss {
  Batch anchors;
  std::vector<double> targets;
};

using LossSpec = std::variant<CrossEntropyLoss, AnchorL2Loss>;

/// theta -> gradient of the chosen loss for a network with net's architecture.
GradFn loss_gradient(const Network& net, LossSpec spec);

std::vector<double> hvp(const Network& net, const LossSpec& spec, std::span<const double> v,
                        double h = 1e-4);

/// Anchor L2 loss whose targets are the logits at `net` plus N(0, offset^2)
/// noise, so its gradient at `net` is non-zero.
AnchorL2Loss frozen_anchor_loss(const Network& net, Batch anchors, double offset, Rng& rng);

// ---------------------------------------------------------------- anchoring gradient

/// d/d theta0 of l_L2(theta0 - alpha * grad l_ce(theta0)), computed as
/// (I - alpha H_ce) l_L2'(theta1).
std::vector<double> anchoring_gradient(const Network& net, const Batch& replay,
                                       const AnchorL2Loss& anchors, double alpha,
                                       double h = 1e-4);

struct TaylorReport {
  std::vector<double> alphas;
  std::vector<double> residuals;     // |g_anc - (g1 - alpha (H1 g0 + H0 g1))|
  std::vector<double> g_anc_norms;
  std::vector<double> orders;        // log2(r(a_i) / r(a_{i+1}))
  /// True where the one-step update flips a ReLU on the replay batch or the
  /// anchors; the expansion assumes a smooth loss along that step.
  std::vector<bool> pattern_changed;
  double mean_order = 0.0;
  bool pass = false;                 // mean_order in [1.7, 2.3]
};

/// Requires at least three strictly decreasing alphas.
TaylorReport taylor_residual_sweep(const Network& net, const Batch& replay,
                                   const AnchorL2Loss& anchors,
                                   std::span<const double> alphas, double h = 1e-4);

// ---------------------------------------------------------------- random problems

/// A small random network with replay batch and frozen-target anchors.
struct RandomProblem {
  Network net;
  Batch replay;
  AnchorL2Loss anchors;
};

struct ProblemLimits {
  std::size_t max_params = 500;
  std::size_t max_batch = 10;
  std::size_t max_anchors = 3;
  double target_offset = 0.5;
};

/// Depth 1 to 3, widths 2 to 8, single or multi-head; inputs U(0, 1).
RandomProblem random_problem(std::uint64_t seed, const ProblemLimits& limits = {});

struct HvpChecks {
  double quadratic_rel_error = 0.0;  // |hvp - A v| / |A v| on a quadratic
  double symmetry_rel_error = 0.0;   // |<Hu, w> - <Hw, u>| / max(|<Hu, w>|, |<Hw, u>|)
  double linearity_rel_error = 0.0;  // |hvp(c v) - c hvp(v)| / |c hvp(v)|
};

HvpChecks check_hvp(std::uint64_t seed);

struct SuiteReport {
  GradCheck params;
  GradCheck inputs;
  std::vector<HvpChecks> hvp;
  std::vector<TaylorReport> sweeps;
  double mean_order = 0.0;
  bool gradients_pass = false;  // every relative error < 1e-4
  bool hvp_pass = false;        // quadratic, symmetry < 1e-6, linearity < 1e-8
  bool taylor_pass = false;     // mean order in [1.7, 2.3]
  bool pass() const { return gradients_pass && hvp_pass && taylor_pass; }
};

/// Gradient checks on `n_nets` random problems and the residual sweep over
/// `alphas` on `n_seeds` more.
SuiteReport run_verification_suite(std::size_t n_nets, std::size_t n_seeds,
                                   std::span<const double> alphas, std::uint64_t seed = 0);

}  // namespace anchor
