#include "sdpadv/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "sdpadv/error.hpp"

SDPADV_NAMESPACE_BEGIN

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t off, const char* file) {
  if (b.size() < off + 4) throw ParseError(std::string("truncated ") + file + " header", b.size());
  return std::uint32_t(b[off]) << 24 | std::uint32_t(b[off + 1]) << 16 |
         std::uint32_t(b[off + 2]) << 8 | std::uint32_t(b[off + 3]);
}

void put_be32(std::ofstream& f, std::uint32_t v) {
  const char bytes[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
  f.write(bytes, 4);
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  const Batch b = gather(*this, indices);
  return {b.images, b.labels};
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, size());
  return {images.slice_rows(0, n), std::vector<int>(labels.begin(), labels.begin() + n)};
}

Dataset parse_idx(std::span<const std::uint8_t> img, std::span<const std::uint8_t> lbl) {
  if (be32(img, 0, "image file") != kIdxImageMagic)
    throw ParseError("bad image magic (expected 2051)", 0);
  if (be32(lbl, 0, "label file") != kIdxLabelMagic)
    throw ParseError("bad label magic (expected 2049)", 0);
  const std::size_t n = be32(img, 4, "image file");
  const std::size_t rows = be32(img, 8, "image file");
  const std::size_t cols = be32(img, 12, "image file");
  const std::size_t nl = be32(lbl, 4, "label file");
  if (n != nl)
    throw ParseError("image count " + std::to_string(n) + " != label count " + std::to_string(nl), 4);
  if (n == 0 || rows == 0 || cols == 0) throw ParseError("empty IDX dimensions", 4);
  const std::size_t pixels = n * rows * cols;
  if (img.size() < 16 + pixels) throw ParseError("truncated image data", img.size());
  if (lbl.size() < 8 + n) throw ParseError("truncated label data", lbl.size());

  Dataset d;
  d.images = Tensor({n, 1, rows, cols});
  Real* p = d.images.ptr();
  for (std::size_t i = 0; i < pixels; ++i) p[i] = Real(img[16 + i]) / Real(255);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = lbl[8 + i];
    if (y >= kNumClasses) throw ParseError("label " + std::to_string(y) + " out of range", 8 + i);
    d.labels[i] = y;
  }
  return d;
}

Dataset load_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path) {
  const auto img = read_file(image_path);
  const auto lbl = read_file(label_path);
  return parse_idx(img, lbl);
}

void write_idx(const Dataset& data, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path) {
  std::ofstream fi(image_path, std::ios::binary | std::ios::trunc);
  std::ofstream fl(label_path, std::ios::binary | std::ios::trunc);
  if (!fi || !fl) throw IoError("cannot write IDX files at '" + image_path.string() + "'");
  put_be32(fi, kIdxImageMagic);
  put_be32(fi, std::uint32_t(data.size()));
  put_be32(fi, std::uint32_t(data.height()));
  put_be32(fi, std::uint32_t(data.width()));
  for (Real v : data.images.data()) fi.put(char(to_pixel_byte(v)));
  put_be32(fl, kIdxLabelMagic);
  put_be32(fl, std::uint32_t(data.size()));
  for (int y : data.labels) fl.put(char(y));
  if (!fi || !fl) throw IoError("failed writing IDX files");
}

IdxFiles train_files(const std::filesystem::path& dir) {
  return {dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte"};
}

IdxFiles test_files(const std::filesystem::path& dir) {
  return {dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"};
}

Split split(const Dataset& data, const SplitSpec& spec) {
  const std::size_t n = data.size();
  if (spec.validation >= n)
    throw ConfigError("validation count " + std::to_string(spec.validation) +
                      " must be below dataset size " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (spec.validation == 0) return {data, Dataset{}};
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> val(order.begin(), order.begin() + std::ptrdiff_t(spec.validation));
  std::vector<std::size_t> train(order.begin() + std::ptrdiff_t(spec.validation), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(val)};
}

Batch gather(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DimensionError("gather: empty index list");
  Shape shape = data.images.shape();
  const std::size_t stride = data.images.size() / shape[0];
  shape[0] = indices.size();
  Batch b;
  b.images = Tensor(shape);
  b.labels.reserve(indices.size());
  Real* dst = b.images.ptr();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= data.size()) throw IndexError("gather: index " + std::to_string(i) + " out of range");
    std::copy_n(data.images.ptr() + i * stride, stride, dst + k * stride);
    b.labels.push_back(data.labels[i]);
  }
  b.indices.assign(indices.begin(), indices.end());
  return b;
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), rng_(seed) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
}

std::vector<std::vector<std::size_t>> BatchSampler::next_epoch() {
  std::vector<std::size_t> order(n_);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n_; i += batch_size_)
    out.emplace_back(order.begin() + std::ptrdiff_t(i),
                     order.begin() + std::ptrdiff_t(std::min(n_, i + batch_size_)));
  return out;
}

std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    auto& b = out.emplace_back(std::min(n, i + batch_size) - i);
    std::iota(b.begin(), b.end(), i);
  }
  return out;
}

std::uint8_t to_pixel_byte(Real v) noexcept {
  const double c = std::clamp(double(v), 0.0, 1.0);
  return std::uint8_t(std::floor(255.0 * c + 0.5));
}

void export_grid(const Tensor& images, std::span<const std::string> captions,
                 const std::filesystem::path& path, GridLayout layout) {
  if (images.rank() != 4 || images.dim(1) != 1)
    throw DimensionError("export_grid: expected images[n,1,H,W], got " + to_string(images.shape()));
  const std::size_t n = images.dim(0), H = images.dim(2), W = images.dim(3);
  const std::size_t cols = layout.columns == 0 ? n : std::min(layout.columns, n);
  const std::size_t rows = (n + cols - 1) / cols;
  const std::size_t width = cols * W + (cols - 1), height = rows * H + (rows - 1);

  std::vector<std::uint8_t> raster(width * height, layout.separator);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = k / cols, c = k % cols;
    const Real* src = images.ptr() + k * H * W;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        raster[(r * (H + 1) + y) * width + c * (W + 1) + x] = to_pixel_byte(src[y * W + x]);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << "P5\n";
  if (!captions.empty()) {
    f << "# captions:";
    for (const auto& c : captions) f << ' ' << c;
    f << '\n';
  }
  f << width << ' ' << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(raster.data()), std::streamsize(raster.size()));
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

SDPADV_NAMESPACE_END
