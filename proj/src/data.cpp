#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "anchor/data.hpp"
#include "anchor/rng.hpp"

namespace anchor {

// -------------------------------------------------------------- synthetic

Dataset make_synthetic(std::size_t n_classes, std::size_t dim,
                       std::size_t n_train_per_class, std::size_t n_test_per_class,
                       std::uint64_t seed) {
  if (n_classes == 0 || dim == 0 || n_train_per_class == 0 || n_test_per_class == 0)
    throw std::invalid_argument("synthetic dataset counts must be positive");
  if (n_classes > dim)
    throw std::invalid_argument("synthetic dataset needs dim >= n_classes");

  constexpr double kSigma = 0.15;
  constexpr double kBase = 0.15;
  Rng rng = make_rng(seed, Stream::synthetic);
  std::normal_distribution<double> noise(0.0, kSigma);

  auto sample = [&](std::size_t per_class) {
    Examples ex;
    ex.dim = dim;
    std::vector<std::pair<std::vector<double>, int>> rows;
    for (std::size_t c = 0; c < n_classes; ++c) {
      for (std::size_t i = 0; i < per_class; ++i) {
        std::vector<double> x(dim);
        for (std::size_t d = 0; d < dim; ++d) {
          const double mean = kBase + (d == c ? std::numbers::sqrt2 / 2.0 : 0.0);
          x[d] = std::clamp(mean + noise(rng), 0.0, 1.0);
        }
        rows.emplace_back(std::move(x), static_cast<int>(c));
      }
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    for (auto& [x, y] : rows) {
      ex.inputs.insert(ex.inputs.end(), x.begin(), x.end());
      ex.labels.push_back(y);
    }
    return ex;
  };

  Dataset ds;
  ds.input_dim = dim;
  ds.n_classes = n_classes;
  ds.train = sample(n_train_per_class);
  ds.test = sample(n_test_per_class);
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(dim))));
  if (side * side == dim) ds.image_shape = ImageShape{side, side};
  return ds;
}

// ------------------------------------------------------------- transforms

std::vector<double> permute_pixels(std::span<const double> input,
                                   std::span<const std::size_t> perm) {
  if (perm.size() != input.size())
    throw std::invalid_argument("permutation length differs from the input length");
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw std::invalid_argument("permutation is not a bijection");
    seen[p] = true;
  }
  std::vector<double> out(input.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = input[perm[i]];
  return out;
}

namespace {

/// cos/sin of an angle in degrees, exact at multiples of 90.
std::pair<double, double> cos_sin_degrees(double deg) {
  const double quarter = deg / 90.0;
  if (quarter == std::floor(quarter) && std::abs(quarter) < 1e15) {
    const auto k = ((static_cast<long long>(quarter) % 4) + 4) % 4;
    static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
    static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
    return {kCos[k], kSin[k]};
  }
  const double rad = deg * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

}  // namespace

std::vector<double> rotate_image(std::span<const double> input, ImageShape shape,
                                 double angle_degrees) {
  const std::size_t h = shape.height;
  const std::size_t w = shape.width;
  if (h * w != input.size() || h == 0)
    throw std::invalid_argument("image shape does not match the input length");
  const auto [c, s] = cos_sin_degrees(angle_degrees);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  auto at = [&](long r, long col) -> double {
    if (r < 0 || col < 0 || r >= static_cast<long>(h) || col >= static_cast<long>(w)) return 0.0;
    return input[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(col)];
  };
  std::vector<double> out(input.size());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t col = 0; col < w; ++col) {
      const double dy = static_cast<double>(r) - cy;
      const double dx = static_cast<double>(col) - cx;
      const double sr = cy + dy * c - dx * s;
      const double sc = cx + dy * s + dx * c;
      const double r0 = std::floor(sr);
      const double c0 = std::floor(sc);
      const double fr = sr - r0;
      const double fc = sc - c0;
      const auto ir = static_cast<long>(r0);
      const auto ic = static_cast<long>(c0);
      out[r * w + col] = (1.0 - fr) * (1.0 - fc) * at(ir, ic) + (1.0 - fr) * fc * at(ir, ic + 1) +
                         fr * (1.0 - fc) * at(ir + 1, ic) + fr * fc * at(ir + 1, ic + 1);
    }
  }
  return out;
}

Protocol parse_protocol(const std::string& name) {
  if (name == "permute") return Protocol::permute;
  if (name == "rotate") return Protocol::rotate;
  if (name == "split") return Protocol::split;
  throw std::invalid_argument("unknown protocol '" + name + "'");
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::permute: return "permute";
    case Protocol::rotate: return "rotate";
    case Protocol::split: return "split";
  }
  return "?";
}

// ------------------------------------------------------------------ stream

std::vector<int> TaskData::labels() const {
  std::vector<int> out(n_classes);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

BatchReader::BatchReader(const Examples* train, int task_id, std::size_t batch_size)
    : train_(train), task_id_(task_id), batch_size_(batch_size) {
  if (batch_size_ == 0) throw std::invalid_argument("batch size must be positive");
}

std::optional<Batch> BatchReader::next() {
  if (pos_ >= train_->size()) return std::nullopt;
  const std::size_t end = std::min(train_->size(), pos_ + batch_size_);
  Batch b(train_->dim);
  b.reserve(end - pos_);
  for (; pos_ < end; ++pos_) b.push_back(train_->input(pos_), train_->labels[pos_], task_id_);
  return b;
}

TaskStream::TaskStream(StreamOptions opts, std::vector<TaskData> tasks,
                       std::vector<Examples> train, HeadLayout heads, std::size_t output_dim)
    : opts_(opts),
      tasks_(std::move(tasks)),
      train_(std::move(train)),
      opened_(tasks_.size(), false),
      heads_(heads),
      output_dim_(output_dim) {}

BatchReader TaskStream::open_train(std::size_t i, std::size_t batch_size) {
  if (tasks_.at(i).cross_validation)
    throw std::logic_error("task " + std::to_string(i) + " is a cross-validation task");
  if (opened_[i])
    throw std::logic_error("task " + std::to_string(i) + " was already streamed once");
  opened_[i] = true;
  return BatchReader(&train_[i], tasks_[i].task_id, batch_size);
}

BatchReader TaskStream::open_cv_train(std::size_t i, std::size_t batch_size) const {
  if (!tasks_.at(i).cross_validation)
    throw std::logic_error("task " + std::to_string(i) + " is not a cross-validation task");
  return BatchReader(&train_[i], tasks_[i].task_id, batch_size);
}

namespace {

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  }
  template <class T>
  void vec(const std::vector<T>& v) {
    bytes(v.data(), v.size() * sizeof(T));
  }
};

}  // namespace

std::uint64_t TaskStream::digest() const {
  Fnv f;
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    const auto& t = tasks_[i];
    f.vec(t.transform.permutation);
    f.bytes(&t.transform.angle_degrees, sizeof(double));
    f.vec(t.transform.classes);
    f.vec(t.test.inputs);
    f.vec(t.test.labels);
    f.vec(train_[i].inputs);
    f.vec(train_[i].labels);
  }
  return f.h;
}

TaskStream build_task_stream(const Dataset& data, const StreamOptions& opts) {
  if (opts.n_tasks == 0) throw std::invalid_argument("stream needs at least one task");
  if (opts.samples_per_task == 0) throw std::invalid_argument("samples_per_task must be positive");
  if (opts.cv_tasks >= opts.n_tasks)
    throw std::invalid_argument("cv_tasks must be smaller than n_tasks");
  if (data.train.size() == 0 || data.test.size() == 0)
    throw std::invalid_argument("dataset has an empty split");
  if (opts.protocol == Protocol::rotate && !data.image_shape)
    throw std::invalid_argument("rotation needs image-shaped inputs");

  const std::size_t dim = data.input_dim;
  std::vector<TaskData> tasks;
  std::vector<Examples> trains;
  HeadLayout heads = HeadLayout::single();
  std::size_t output_dim = data.n_classes;

  std::vector<int> class_order;
  if (opts.protocol == Protocol::split) {
    if (opts.classes_per_task == 0 || opts.n_tasks * opts.classes_per_task > data.n_classes)
      throw std::invalid_argument("not enough classes for " + std::to_string(opts.n_tasks) +
                                  " split tasks of " + std::to_string(opts.classes_per_task));
    class_order.resize(data.n_classes);
    std::iota(class_order.begin(), class_order.end(), 0);
    Rng rng = make_rng(opts.seed, Stream::task_transform, ~std::uint64_t{0});
    std::shuffle(class_order.begin(), class_order.end(), rng);
    heads = HeadLayout::multi(opts.n_tasks);
    output_dim = opts.n_tasks * opts.classes_per_task;
  } else if (opts.samples_per_task > data.train.size()) {
    throw std::invalid_argument("samples_per_task exceeds the training split");
  }

  for (std::size_t t = 0; t < opts.n_tasks; ++t) {
    TaskData task;
    task.task_id = static_cast<int>(t);
    task.cross_validation = t < opts.cv_tasks;
    Rng transform_rng = make_rng(opts.seed, Stream::task_transform, t);
    Rng order_rng = make_rng(opts.seed, Stream::data_order, t);

    // label remap: original class -> head-local label, -1 when excluded
    std::vector<int> remap(data.n_classes, -1);
    switch (opts.protocol) {
      case Protocol::permute: {
        task.transform.permutation.resize(dim);
        std::iota(task.transform.permutation.begin(), task.transform.permutation.end(),
                  std::size_t{0});
        std::shuffle(task.transform.permutation.begin(), task.transform.permutation.end(),
                     transform_rng);
        std::iota(remap.begin(), remap.end(), 0);
        task.n_classes = data.n_classes;
        break;
      }
      case Protocol::rotate: {
        task.transform.angle_degrees =
            std::uniform_real_distribution<double>(0.0, 180.0)(transform_rng);
        std::iota(remap.begin(), remap.end(), 0);
        task.n_classes = data.n_classes;
        break;
      }
      case Protocol::split: {
        const auto first = class_order.begin() + static_cast<std::ptrdiff_t>(t * opts.classes_per_task);
        task.transform.classes.assign(first, first + static_cast<std::ptrdiff_t>(opts.classes_per_task));
        for (std::size_t k = 0; k < task.transform.classes.size(); ++k)
          remap[static_cast<std::size_t>(task.transform.classes[k])] = static_cast<int>(k);
        task.n_classes = opts.classes_per_task;
        break;
      }
    }

    auto transform = [&](std::span<const double> x) -> std::vector<double> {
      switch (opts.protocol) {
        case Protocol::permute: return permute_pixels(x, task.transform.permutation);
        case Protocol::rotate: return rotate_image(x, *data.image_shape, task.transform.angle_degrees);
        case Protocol::split: return {x.begin(), x.end()};
      }
      return {};
    };

    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < data.train.size(); ++i)
      if (remap[static_cast<std::size_t>(data.train.labels[i])] >= 0) pool.push_back(i);
    if (pool.size() < opts.samples_per_task)
      throw std::invalid_argument("task " + std::to_string(t) + " has only " +
                                  std::to_string(pool.size()) + " training examples");
    std::shuffle(pool.begin(), pool.end(), order_rng);
    pool.resize(opts.samples_per_task);

    Examples train;
    train.dim = dim;
    train.inputs.reserve(pool.size() * dim);
    for (std::size_t i : pool) {
      const auto x = transform(data.train.input(i));
      train.inputs.insert(train.inputs.end(), x.begin(), x.end());
      train.labels.push_back(remap[static_cast<std::size_t>(data.train.labels[i])]);
    }

    task.test.dim = dim;
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      const int y = remap[static_cast<std::size_t>(data.test.labels[i])];
      if (y < 0) continue;
      const auto x = transform(data.test.input(i));
      task.test.inputs.insert(task.test.inputs.end(), x.begin(), x.end());
      task.test.labels.push_back(y);
    }

    tasks.push_back(std::move(task));
    trains.push_back(std::move(train));
  }
  return TaskStream(opts, std::move(tasks), std::move(trains), heads, output_dim);
}

}  // namespace anchor
