#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "anchor/batch.hpp"
#include "anchor/network.hpp"

namespace anchor {

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  bool operator==(const ImageShape&) const = default;
};

/// Labelled inputs, row-major, values in [0, 1].
struct Examples {
  std::size_t dim = 0;
  std::vector<double> inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> input(std::size_t i) const {
    return {inputs.data() + i * dim, dim};
  }
};

struct Dataset {
  Examples train;
  Examples test;
  std::size_t input_dim = 0;
  std::size_t n_classes = 0;
  std::optional<ImageShape> image_shape;
};

class DataError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch, invalid };
  DataError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxData {
  Examples examples;
  ImageShape shape;
};

/// Reads an uncompressed IDX image/label file pair. Pixels are scaled by
/// 1/255. Throws DataError with a distinct kind for unreadable files, wrong
/// magic numbers, truncation, and image/label count disagreement.
IdxData load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

void write_idx_images(const std::filesystem::path& path, ImageShape shape,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path,
                      std::span<const std::uint8_t> labels);

/// Hand-built fixtures: tiny-{images,labels} (two 3x3 images labelled 3
/// and 7), plus bad-magic, truncated and short-label variants.
std::vector<std::filesystem::path> write_idx_fixtures(const std::filesystem::path& dir);

/// Loads `train-*` and `t10k-*` IDX files from a directory.
Dataset load_idx_dataset(const std::filesystem::path& dir);

/// Gaussian blobs (sigma 0.15, clipped to [0,1]) around class means placed
/// at 0.15 + e_c / sqrt(2), so every pair of means is one unit apart.
/// Requires n_classes <= dim.
Dataset make_synthetic(std::size_t n_classes, std::size_t dim,
                       std::size_t n_train_per_class, std::size_t n_test_per_class,
                       std::uint64_t seed);

/// out[i] = input[perm[i]]. Throws std::invalid_argument unless perm is a
/// bijection on [0, input.size()).
std::vector<double> permute_pixels(std::span<const double> input,
                                   std::span<const std::size_t> perm);

/// Bilinear rotation about ((h-1)/2, (w-1)/2); samples falling outside the
/// grid read as 0.
std::vector<double> rotate_image(std::span<const double> input, ImageShape shape,
                                 double angle_degrees);

enum class Protocol { permute, rotate, split };

Protocol parse_protocol(const std::string& name);
std::string to_string(Protocol p);

struct TaskTransform {
  std::vector<std::size_t> permutation;  // permute
  double angle_degrees = 0.0;            // rotate
  std::vector<int> classes;              // split: original class of each head label
};

struct TaskData {
  int task_id = 0;
  bool cross_validation = false;
  std::size_t n_classes = 0;  // labels are 0..n_classes-1 within the task's head
  TaskTransform transform;
  Examples test;

  std::vector<int> labels() const;
};

/// Sequential reader over one task's training examples.
class BatchReader {
 public:
  BatchReader(const Examples* train, int task_id, std::size_t batch_size);

  /// Next batch of at most batch_size examples; nullopt once exhausted.
  std::optional<Batch> next();
  std::size_t visited() const { return pos_; }

 private:
  const Examples* train_;
  int task_id_;
  std::size_t batch_size_;
  std::size_t pos_ = 0;
};

struct StreamOptions {
  Protocol protocol = Protocol::permute;
  std::size_t n_tasks = 23;
  std::size_t samples_per_task = 1000;
  std::size_t classes_per_task = 2;
  std::size_t cv_tasks = 3;
  std::uint64_t seed = 0;
};

/// Ordered tasks built from a base dataset. Training data of evaluation
/// tasks can be read once; cross-validation tasks may be re-read.
class TaskStream {
 public:
  TaskStream(StreamOptions opts, std::vector<TaskData> tasks, std::vector<Examples> train,
             HeadLayout heads, std::size_t output_dim);
  TaskStream(TaskStream&&) = default;
  TaskStream& operator=(TaskStream&&) = default;
  TaskStream(const TaskStream&) = delete;
  TaskStream& operator=(const TaskStream&) = delete;

  const StreamOptions& options() const { return opts_; }
  std::size_t size() const { return tasks_.size(); }
  std::size_t cv_tasks() const { return opts_.cv_tasks; }
  const TaskData& task(std::size_t i) const { return tasks_.at(i); }
  std::size_t train_size(std::size_t i) const { return train_.at(i).size(); }
  HeadLayout heads() const { return heads_; }
  std::size_t output_dim() const { return output_dim_; }
  std::size_t input_dim() const { return train_.front().dim; }

  /// Single pass over an evaluation task. Throws std::logic_error when the
  /// task was already opened or is a cross-validation task.
  BatchReader open_train(std::size_t i, std::size_t batch_size);
  /// Repeatable pass over a cross-validation task.
  BatchReader open_cv_train(std::size_t i, std::size_t batch_size) const;

  /// FNV-1a digest of every input, label and transform, for determinism checks.
  std::uint64_t digest() const;

 private:
  StreamOptions opts_;
  std::vector<TaskData> tasks_;
  std::vector<Examples> train_;
  std::vector<bool> opened_;
  HeadLayout heads_;
  std::size_t output_dim_ = 0;
};

/// Per task: draws its transform from derive_seed(seed, task_transform, t),
/// samples samples_per_task training examples without replacement from
/// derive_seed(seed, data_order, t), and applies the same transform to the
/// full test split. Split tasks take disjoint class subsets of one seeded
/// class permutation and remap labels to head-local indices.
TaskStream build_task_stream(const Dataset& data, const StreamOptions& opts);

}  // namespace anchor
