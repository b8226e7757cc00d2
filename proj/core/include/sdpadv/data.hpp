#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sdpadv/tensor.hpp"

SDPADV_NAMESPACE_BEGIN

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;
inline constexpr int kNumClasses = 10;

/// images[N,1,H,W] with pixels in [0,1]; labels in [0,10).
struct Dataset {
  Tensor images;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }

  Dataset subset(std::span<const std::size_t> indices) const;
  /// First `n` examples (or all if fewer).
  Dataset head(std::size_t n) const;
};

/// Parses an IDX image/label file pair (big-endian, magic 2051 / 2049).
/// Bytes are scaled by 1/255. Throws ParseError with the failing byte offset.
Dataset load_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path);
Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes);

/// Writes a dataset as IDX; pixels are quantized with round(255 * v).
void write_idx(const Dataset& data, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path);

/// Standard file names inside a dataset directory.
struct IdxFiles {
  std::filesystem::path images, labels;
};
IdxFiles train_files(const std::filesystem::path& dir);
IdxFiles test_files(const std::filesystem::path& dir);

struct SplitSpec {
  std::size_t validation = 10000;
  std::uint64_t seed = 0;
};

struct Split {
  Dataset train;
  Dataset validation;
};

/// Seeded random hold-out. The two parts are disjoint and exhaustive; each
/// keeps the original relative order of its examples.
Split split(const Dataset& data, const SplitSpec& spec);

struct Batch {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

Batch gather(const Dataset& data, std::span<const std::size_t> indices);

/// Yields a fresh seeded permutation of [0, n) per epoch, cut into batches;
/// the final partial batch is kept.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::vector<std::size_t>> next_epoch();

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
};

/// Contiguous, unshuffled batches over [0, n).
std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size);

struct GridLayout {
  std::size_t columns = 0;  // 0: all images in one row
  std::uint8_t separator = 255;
};

/// Tiles images[n,1,H,W] row-major into a binary PGM (P5) with 1-pixel
/// separators; pixel = round-half-up(255 * clamp(v,0,1)). Captions go into
/// a header comment.
void export_grid(const Tensor& images, std::span<const std::string> captions,
                 const std::filesystem::path& path, GridLayout layout = {});

std::uint8_t to_pixel_byte(Real v) noexcept;

SDPADV_NAMESPACE_END
