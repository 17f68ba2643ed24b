#include "anchor/verification.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace anchor {
namespace {

// Straight-line extended-precision forward pass. It shares nothing with the
// kernels so it can serve as the finite-difference oracle.
struct RefEval {
  long double loss = 0.0L;
  std::vector<bool> pattern;  // ReLU on/off for every hidden unit of every row
};

RefEval reference_ce(const std::vector<std::size_t>& sizes, std::span<const double> params,
                     const Network& shape, const Batch& batch) {
  RefEval out;
  const std::size_t layers = sizes.size() - 1;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    std::vector<long double> a(batch.input(r).begin(), batch.input(r).end());
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = sizes[l], o = sizes[l + 1];
      std::vector<long double> z(o);
      for (std::size_t k = 0; k < o; ++k) {
        long double acc = params[off + in * o + k];
        for (std::size_t i = 0; i < in; ++i) acc += static_cast<long double>(params[off + k * in + i]) * a[i];
        z[k] = acc;
      }
      off += in * o + o;
      if (l + 1 < layers) {
        for (auto& v : z) {
          out.pattern.push_back(v > 0.0L);
          v = v > 0.0L ? v : 0.0L;
        }
      }
      a.swap(z);
    }
    const HeadSlice h = shape.head(batch.task_ids[r]);
    long double mx = a[h.offset];
    for (std::size_t k = 0; k < h.size; ++k) mx = std::max(mx, a[h.offset + k]);
    long double sum = 0.0L;
    for (std::size_t k = 0; k < h.size; ++k) sum += std::exp(a[h.offset + k] - mx);
    out.loss += std::log(sum) - (a[h.offset + static_cast<std::size_t>(batch.labels[r])] - mx);
  }
  out.loss /= static_cast<long double>(batch.size());
  return out;
}

void account(GradCheck& res, double analytic, long double fd, double floor) {
  if (std::fabs(static_cast<double>(fd)) <= floor) return;
  const double rel = static_cast<double>(std::fabs(static_cast<long double>(analytic) - fd) / std::fabs(fd));
  res.max_rel_error = std::max(res.max_rel_error, rel);
  ++res.checked;
}

}  // namespace

GradCheck check_param_gradient(const Network& net, const Batch& batch, double h, double floor) {
  const auto analytic = batch_loss_and_grad(net, batch).grad;
  const auto& sizes = net.layout().sizes();
  std::vector<double> theta(net.params().begin(), net.params().end());
  const auto base = reference_ce(sizes, theta, net, batch);
  GradCheck res;
  for (std::size_t p = 0; p < theta.size(); ++p) {
    const double keep = theta[p];
    theta[p] = keep + h;
    const auto up = reference_ce(sizes, theta, net, batch);
    theta[p] = keep - h;
    const auto down = reference_ce(sizes, theta, net, batch);
    theta[p] = keep;
    const long double step = (static_cast<long double>(keep) + h) - (static_cast<long double>(keep) - h);
    if (up.pattern != base.pattern || down.pattern != base.pattern) {
      ++res.skipped;
      continue;
    }
    account(res, analytic.values()[p], (up.loss - down.loss) / step, floor);
  }
  return res;
}

GradCheck check_input_gradient(const Network& net, std::span<const double> input,
                               std::size_t label, int task_id, double h, double floor) {
  const auto analytic = input_grad(net, input, label, task_id);
  const auto& sizes = net.layout().sizes();
  Batch one(net.input_dim());
  one.push_back(input, static_cast<int>(label), task_id);
  const auto base = reference_ce(sizes, net.params(), net, one);
  GradCheck res;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double keep = one.inputs[i];
    one.inputs[i] = keep + h;
    const auto up = reference_ce(sizes, net.params(), net, one);
    one.inputs[i] = keep - h;
    const auto down = reference_ce(sizes, net.params(), net, one);
    one.inputs[i] = keep;
    const long double step = (static_cast<long double>(keep) + h) - (static_cast<long double>(keep) - h);
    if (up.pattern != base.pattern || down.pattern != base.pattern) {
      ++res.skipped;
      continue;
    }
    account(res, analytic[i], (up.loss - down.loss) / step, floor);
  }
  return res;
}

std::vector<double> hvp(const GradFn& grad, std::span<const double> theta,
                        std::span<const double> v, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("hvp step must be positive");
  if (v.size() != theta.size()) throw std::invalid_argument("hvp direction has the wrong length");
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw std::invalid_argument("hvp direction must be non-zero");

  std::vector<double> plus(theta.begin(), theta.end());
  std::vector<double> minus(theta.begin(), theta.end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    plus[i] += h * (v[i] / norm);
    minus[i] -= h * (v[i] / norm);
  }
  auto out = grad(plus);
  const auto gm = grad(minus);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - gm[i]) / (2.0 * h) * norm;
  return out;
}

GradFn loss_gradient(const Network& net, LossSpec spec) {
  return [net = Network(net), spec = std::move(spec)](std::span<const double> theta) mutable {
    if (theta.size() != net.param_count())
      throw std::invalid_argument("parameter vector has the wrong length");
    std::copy(theta.begin(), theta.end(), net.params().begin());
    Gradient g = std::visit(
        [&](const auto& s) -> Gradient {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, CrossEntropyLoss>)
            return batch_loss_and_grad(net, s.batch).grad;
          else
            return anchor_l2_loss_and_grad(net, s.anchors, s.targets).grad;
        },
        spec);
    return std::vector<double>(g.values().begin(), g.values().end());
  };
}

std::vector<double> hvp(const Network& net, const LossSpec& spec, std::span<const double> v,
                        double h) {
  return hvp(loss_gradient(net, spec), net.params(), v, h);
}

AnchorL2Loss frozen_anchor_loss(const Network& net, Batch anchors, double offset, Rng& rng) {
  AnchorL2Loss out{std::move(anchors), {}};
  out.targets = head_logits(net, out.anchors);
  std::normal_distribution<double> noise(0.0, offset);
  for (double& t : out.targets) t += noise(rng);
  return out;
}

std::vector<double> anchoring_gradient(const Network& net, const Batch& replay,
                                       const AnchorL2Loss& anchors, double alpha, double h) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  const auto g0 = batch_loss_and_grad(net, replay).grad;
  const Network theta1 = sgd_step(net, g0, alpha);
  const auto l2 = anchor_l2_loss_and_grad(theta1, anchors.anchors, anchors.targets).grad;
  std::vector<double> out(l2.values().begin(), l2.values().end());
  bool zero = std::all_of(out.begin(), out.end(), [](double x) { return x == 0.0; });
  if (zero) return out;
  const auto h0v = hvp(net, CrossEntropyLoss{replay}, out, h);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= alpha * h0v[i];
  return out;
}

TaylorReport taylor_residual_sweep(const Network& net, const Batch& replay,
                                   const AnchorL2Loss& anchors,
                                   std::span<const double> alphas, double h) {
  if (alphas.size() < 3) throw std::invalid_argument("sweep needs at least three alphas");
  for (std::size_t i = 1; i < alphas.size(); ++i)
    if (!(alphas[i] < alphas[i - 1])) throw std::invalid_argument("alphas must decrease");

  const auto g0 = batch_loss_and_grad(net, replay).grad;
  const auto g1 = anchor_l2_loss_and_grad(net, anchors.anchors, anchors.targets).grad;
  const auto h1g0 = hvp(net, anchors, g0.values(), h);
  const auto h0g1 = hvp(net, CrossEntropyLoss{replay}, g1.values(), h);

  TaylorReport rep;
  rep.alphas.assign(alphas.begin(), alphas.end());
  for (double a : alphas) {
    const auto g_anc = anchoring_gradient(net, replay, anchors, a, h);
    double r2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < g_anc.size(); ++i) {
      const double expansion = g1.values()[i] - a * (h1g0[i] + h0g1[i]);
      r2 += (g_anc[i] - expansion) * (g_anc[i] - expansion);
      n2 += g_anc[i] * g_anc[i];
    }
    rep.residuals.push_back(std::sqrt(r2));
    const Network theta1 = sgd_step(net, g0, a);
    const auto& sizes = net.layout().sizes();
    rep.pattern_changed.push_back(
        reference_ce(sizes, theta1.params(), net, replay).pattern !=
            reference_ce(sizes, net.params(), net, replay).pattern ||
        reference_ce(sizes, theta1.params(), net, anchors.anchors).pattern !=
            reference_ce(sizes, net.params(), net, anchors.anchors).pattern);
    rep.g_anc_norms.push_back(std::sqrt(n2));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < rep.residuals.size(); ++i) {
    rep.orders.push_back(std::log2(rep.residuals[i] / rep.residuals[i + 1]));
    sum += rep.orders.back();
  }
  rep.mean_order = sum / static_cast<double>(rep.orders.size());
  rep.pass = rep.mean_order >= 1.7 && rep.mean_order <= 2.3;
  return rep;
}

}  // namespace anchor

namespace anchor {

RandomProblem random_problem(std::uint64_t seed, const ProblemLimits& limits) {
  Rng rng = make_rng(seed, Stream::verification);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  Network net;
  while (true) {
    std::vector<std::size_t> sizes{pick(2, 8)};
    const std::size_t hidden = pick(0, 2);
    for (std::size_t l = 0; l < hidden; ++l) sizes.push_back(pick(2, 8));
    const bool multi = pick(0, 1) == 1;
    const std::size_t heads = multi ? pick(2, 3) : 1;
    sizes.push_back(heads * pick(2, 4));
    net = init_network(sizes, multi ? HeadLayout::multi(heads) : HeadLayout::single(), rng());
    if (net.param_count() <= limits.max_params) break;
  }
  // non-zero biases so the problem is generic
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (std::size_t l = 0; l < net.n_layers(); ++l)
    for (double& b : net.bias(l)) b = u(rng);

  std::uniform_real_distribution<double> pixel(0.0, 1.0);
  auto fill = [&](std::size_t n) {
    Batch b(net.input_dim());
    std::vector<double> x(net.input_dim());
    for (std::size_t i = 0; i < n; ++i) {
      for (double& v : x) v = pixel(rng);
      const int task = static_cast<int>(pick(0, net.heads().n_heads - 1));
      const int label = static_cast<int>(pick(0, net.head(task).size - 1));
      b.push_back(x, label, task);
    }
    return b;
  };
  RandomProblem p;
  p.replay = fill(pick(1, limits.max_batch));
  Batch anchors = fill(pick(1, limits.max_anchors));
  p.anchors = frozen_anchor_loss(net, std::move(anchors), limits.target_offset, rng);
  p.net = std::move(net);
  return p;
}

HvpChecks check_hvp(std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::verification, 1);
  std::normal_distribution<double> n01(0.0, 1.0);
  HvpChecks out;

  // quadratic 0.5 theta^T A theta with A symmetric
  constexpr std::size_t d = 12;
  std::vector<double> a(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j <= i; ++j) a[i * d + j] = a[j * d + i] = n01(rng);
  GradFn quad = [&](std::span<const double> th) {
    std::vector<double> g(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) g[i] += a[i * d + j] * th[j];
    return g;
  };
  std::vector<double> theta(d), v(d);
  for (auto& x : theta) x = n01(rng);
  for (auto& x : v) x = n01(rng);
  const auto hv = hvp(quad, theta, v);
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double av = 0.0;
    for (std::size_t j = 0; j < d; ++j) av += a[i * d + j] * v[j];
    err += (hv[i] - av) * (hv[i] - av);
    ref += av * av;
  }
  out.quadratic_rel_error = std::sqrt(err / ref);

  // symmetry and linearity on a network loss
  const RandomProblem p = random_problem(seed);
  const LossSpec spec = CrossEntropyLoss{p.replay};
  const std::size_t n = p.net.param_count();
  std::vector<double> u(n), w(n);
  for (auto& x : u) x = n01(rng);
  for (auto& x : w) x = n01(rng);
  const auto hu = hvp(p.net, spec, u);
  const auto hw = hvp(p.net, spec, w);
  double huw = 0.0, hwu = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    huw += hu[i] * w[i];
    hwu += hw[i] * u[i];
  }
  out.symmetry_rel_error = std::fabs(huw - hwu) / std::max(std::fabs(huw), std::fabs(hwu));

  constexpr double c = 3.5;
  std::vector<double> cu(u);
  for (auto& x : cu) x *= c;
  const auto hcu = hvp(p.net, spec, cu);
  err = ref = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    err += (hcu[i] - c * hu[i]) * (hcu[i] - c * hu[i]);
    ref += c * hu[i] * c * hu[i];
  }
  out.linearity_rel_error = ref > 0.0 ? std::sqrt(err / ref) : std::sqrt(err);
  return out;
}

SuiteReport run_verification_suite(std::size_t n_nets, std::size_t n_seeds,
                                   std::span<const double> alphas, std::uint64_t seed) {
  SuiteReport rep;
  for (std::size_t i = 0; i < n_nets; ++i) {
    const RandomProblem p = random_problem(mix64(seed) + i);
    const auto g = check_param_gradient(p.net, p.replay);
    rep.params.max_rel_error = std::max(rep.params.max_rel_error, g.max_rel_error);
    rep.params.checked += g.checked;
    rep.params.skipped += g.skipped;
    for (std::size_t r = 0; r < p.replay.size(); ++r) {
      const auto gi = check_input_gradient(p.net, p.replay.input(r),
                                           static_cast<std::size_t>(p.replay.labels[r]),
                                           p.replay.task_ids[r]);
      rep.inputs.max_rel_error = std::max(rep.inputs.max_rel_error, gi.max_rel_error);
      rep.inputs.checked += gi.checked;
      rep.inputs.skipped += gi.skipped;
    }
  }
  rep.gradients_pass = rep.params.max_rel_error < 1e-4 && rep.inputs.max_rel_error < 1e-4;

  rep.hvp_pass = true;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    rep.hvp.push_back(check_hvp(mix64(seed + 1) + s));
    const auto& h = rep.hvp.back();
    rep.hvp_pass = rep.hvp_pass && h.quadratic_rel_error < 1e-6 && h.symmetry_rel_error < 1e-6 &&
                   h.linearity_rel_error < 1e-8;
  }

  double sum = 0.0;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    const RandomProblem p = random_problem(mix64(seed + 2) + s);
    rep.sweeps.push_back(taylor_residual_sweep(p.net, p.replay, p.anchors, alphas));
    sum += rep.sweeps.back().mean_order;
  }
  rep.mean_order = n_seeds ? sum / static_cast<double>(n_seeds) : 0.0;
  rep.taylor_pass = n_seeds > 0 && rep.mean_order >= 1.7 && rep.mean_order <= 2.3;
  return rep;
}

}  // namespace anchor
