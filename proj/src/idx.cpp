#include <algorithm>
#include <fstream>
#include <iterator>

#include "anchor/data.hpp"

namespace anchor {
namespace {

using Kind = DataError::Kind;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(Kind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t at,
                        const std::filesystem::path& path) {
  if (buf.size() < at + 4)
    throw DataError(Kind::truncated, path.string() + ": truncated header");
  return (std::uint32_t{buf[at]} << 24) | (std::uint32_t{buf[at + 1]} << 16) |
         (std::uint32_t{buf[at + 2]} << 8) | std::uint32_t{buf[at + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

std::string hex(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += digits[(v >> shift) & 0xf];
  return s;
}

}  // namespace

IdxData load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lbl = read_file(labels);

  const std::uint32_t img_magic = read_be32(img, 0, images);
  if (img_magic != kIdxImageMagic)
    throw DataError(Kind::bad_magic, images.string() + ": image magic " + hex(img_magic) +
                                         ", expected " + hex(kIdxImageMagic));
  const std::uint32_t lbl_magic = read_be32(lbl, 0, labels);
  if (lbl_magic != kIdxLabelMagic)
    throw DataError(Kind::bad_magic, labels.string() + ": label magic " + hex(lbl_magic) +
                                         ", expected " + hex(kIdxLabelMagic));

  const std::size_t n = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t n_labels = read_be32(lbl, 4, labels);
  if (n != n_labels)
    throw DataError(Kind::count_mismatch, images.string() + " holds " + std::to_string(n) +
                                              " images but " + labels.string() + " holds " +
                                              std::to_string(n_labels) + " labels");

  const std::size_t dim = rows * cols;
  if (img.size() < 16 + n * dim)
    throw DataError(Kind::truncated, images.string() + ": pixel data truncated");
  if (lbl.size() < 8 + n)
    throw DataError(Kind::truncated, labels.string() + ": label data truncated");

  IdxData out;
  out.shape = {rows, cols};
  out.examples.dim = dim;
  out.examples.inputs.resize(n * dim);
  std::transform(img.begin() + 16, img.begin() + 16 + static_cast<std::ptrdiff_t>(n * dim),
                 out.examples.inputs.begin(),
                 [](std::uint8_t p) { return static_cast<double>(p) / 255.0; });
  out.examples.labels.assign(lbl.begin() + 8, lbl.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  return out;
}

void write_idx_images(const std::filesystem::path& path, ImageShape shape,
                      std::span<const std::uint8_t> pixels) {
  const std::size_t dim = shape.height * shape.width;
  if (dim == 0 || pixels.size() % dim != 0)
    throw DataError(Kind::invalid, "pixel count is not a multiple of the image size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(Kind::io, "cannot write " + path.string());
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(pixels.size() / dim));
  put_be32(out, static_cast<std::uint32_t>(shape.height));
  put_be32(out, static_cast<std::uint32_t>(shape.width));
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw DataError(Kind::io, "short write to " + path.string());
}

void write_idx_labels(const std::filesystem::path& path,
                      std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(Kind::io, "cannot write " + path.string());
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  if (!out) throw DataError(Kind::io, "short write to " + path.string());
}

std::vector<std::filesystem::path> write_idx_fixtures(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  // two 3x3 images: a plus sign and a diagonal ramp
  const std::vector<std::uint8_t> pixels = {0,   255, 0,   255, 255, 255, 0,  255, 0,
                                            10,  0,   0,   0,   128, 0,   0,  0,   250};
  const std::vector<std::uint8_t> labels = {3, 7};
  std::vector<std::filesystem::path> out;
  auto emit = [&](const char* name, const std::vector<std::uint8_t>& bytes) {
    const auto path = dir / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(Kind::io, "cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.push_back(path);
  };
  auto slurp = [](const std::filesystem::path& p) { return read_file(p); };

  write_idx_images(dir / "tiny-images-idx3-ubyte", {3, 3}, pixels);
  write_idx_labels(dir / "tiny-labels-idx1-ubyte", labels);
  out.push_back(dir / "tiny-images-idx3-ubyte");
  out.push_back(dir / "tiny-labels-idx1-ubyte");

  auto bytes = slurp(dir / "tiny-images-idx3-ubyte");
  auto bad = bytes;
  bad[3] = 0x01;  // label magic in an image file
  emit("bad-magic-images-idx3-ubyte", bad);
  emit("truncated-images-idx3-ubyte", {bytes.begin(), bytes.end() - 4});

  write_idx_labels(dir / "short-labels-idx1-ubyte", std::vector<std::uint8_t>{3});
  out.push_back(dir / "short-labels-idx1-ubyte");
  return out;
}

Dataset load_idx_dataset(const std::filesystem::path& dir) {
  auto train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  auto test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
  if (!(train.shape == test.shape))
    throw DataError(Kind::invalid, "train and test images differ in shape");
  Dataset ds;
  ds.input_dim = train.examples.dim;
  ds.image_shape = train.shape;
  int max_label = 0;
  for (int y : train.examples.labels) max_label = std::max(max_label, y);
  for (int y : test.examples.labels) max_label = std::max(max_label, y);
  ds.n_classes = static_cast<std::size_t>(max_label) + 1;
  ds.train = std::move(train.examples);
  ds.test = std::move(test.examples);
  return ds;
}

}  // namespace anchor
