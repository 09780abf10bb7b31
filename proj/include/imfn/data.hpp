#pragma once

#include "imfn/codec.hpp"
#include "imfn/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace imfn {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

enum class DataSource { kMnist, kSynthetic };

/// Images stored one per column (784 x N), every pixel in [0, 1].
struct ImageDataset {
  MatrixXf images;
  DataSource source = DataSource::kMnist;

  std::size_t size() const { return static_cast<std::size_t>(images.cols()); }
  ImageVector image(std::size_t i) const { return images.col(static_cast<Eigen::Index>(i)); }
  /// Columns at `indices`, in order.
  MatrixXf subset(std::span<const std::size_t> indices) const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

/// IDX3 unsigned-byte image container: big-endian magic 0x00000803, count,
/// rows = 28, cols = 28, then count*784 pixel bytes. Pixels scale by 1/255.
ImageDataset load_idx_images(std::span<const unsigned char> bytes);
ImageDataset load_idx_file(const std::filesystem::path& path);

/// Inverse of load_idx_images; pixels are rounded to the nearest of 0..255.
std::vector<unsigned char> save_idx_images(const ImageDataset& dataset);

/// Reads only the 16-byte header and returns the declared image count.
std::uint32_t idx_header_count(std::span<const unsigned char> bytes);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t split_seed = 0;
};

/// Seeded permutation of 0..n-1; the first floor(n * ratio) go to train.
SplitIndices make_split(std::size_t n, double ratio, std::uint64_t seed);

/// JSON {"split_seed": s, "train": [...], "test": [...]}.
std::string split_to_json(const SplitIndices& split);
SplitIndices split_from_json(const std::string& text);
void save_split(const SplitIndices& split, const std::filesystem::path& path);
SplitIndices load_split(const std::filesystem::path& path);

/// T frames drawn uniformly with replacement from `indices`.
std::vector<ImageVector> sample_sequence(const ImageDataset& dataset,
                                         std::span<const std::size_t> indices, std::size_t length,
                                         Rng& rng, std::vector<std::size_t>* drawn = nullptr);

/// Fixed random map for the synthetic manifold: pixels = sigmoid(A u + b)
/// with u ~ U[-1, 1]^k.
struct SyntheticManifold {
  Eigen::MatrixXf map;     // 784 x k
  Eigen::VectorXf offset;  // 784

  SyntheticManifold(std::size_t intrinsic_dim, std::uint64_t seed);
  std::size_t intrinsic_dim() const { return static_cast<std::size_t>(map.cols()); }
};

struct SyntheticSample {
  ImageDataset dataset;
  Eigen::MatrixXf codes;   // k x count
  Eigen::MatrixXf logits;  // pre-sigmoid, 784 x count
};

ImageDataset synthetic_manifold(std::size_t count, std::size_t intrinsic_dim, std::uint64_t seed);
SyntheticSample synthetic_manifold_detailed(std::size_t count, std::size_t intrinsic_dim,
                                            std::uint64_t seed);

/// Atomic file write: temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<unsigned char> read_file(const std::filesystem::path& path);

}  // namespace imfn
