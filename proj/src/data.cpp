#include "imfn/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <system_error>

namespace imfn {

using nlohmann::json;

MatrixXf ImageDataset::subset(std::span<const std::size_t> indices) const {
  MatrixXf out(images.rows(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw std::out_of_range("ImageDataset::subset: index out of range");
    out.col(static_cast<Eigen::Index>(i)) = images.col(static_cast<Eigen::Index>(indices[i]));
  }
  return out;
}

namespace {

std::uint32_t read_be32(std::span<const unsigned char> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw ParseError("IDX header truncated", bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

std::uint32_t idx_header_count(std::span<const unsigned char> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImageMagic) {
    throw ParseError("bad IDX magic " + hex32(magic) + ", expected " + hex32(kIdxImageMagic), 0);
  }
  return read_be32(bytes, 4);
}

ImageDataset load_idx_images(std::span<const unsigned char> bytes) {
  const std::uint32_t count = idx_header_count(bytes);
  const std::uint32_t rows = read_be32(bytes, 8);
  const std::uint32_t cols = read_be32(bytes, 12);
  if (rows != kImageSide) throw ParseError("IDX rows = " + std::to_string(rows) + ", expected 28", 8);
  if (cols != kImageSide) throw ParseError("IDX cols = " + std::to_string(cols) + ", expected 28", 12);
  const std::size_t header = 16;
  const std::size_t need = header + std::size_t{count} * kImagePixels;
  if (bytes.size() < need) {
    throw ParseError("IDX payload truncated: " + std::to_string(count) + " images need " +
                         std::to_string(need) + " bytes, file has " + std::to_string(bytes.size()),
                     bytes.size());
  }
  ImageDataset ds;
  ds.source = DataSource::kMnist;
  ds.images.resize(kImagePixels, count);
  const unsigned char* p = bytes.data() + header;
  for (std::uint32_t i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < kImagePixels; ++j) {
      ds.images(j, i) = static_cast<float>(*p++) / 255.0f;
    }
  }
  return ds;
}

ImageDataset load_idx_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return load_idx_images(bytes);
}

std::vector<unsigned char> save_idx_images(const ImageDataset& dataset) {
  if (dataset.images.rows() != kImagePixels) throw ShapeError("save_idx_images: expected 784 x N");
  std::vector<unsigned char> out;
  out.reserve(16 + dataset.size() * kImagePixels);
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(dataset.size()));
  write_be32(out, kImageSide);
  write_be32(out, kImageSide);
  for (Eigen::Index i = 0; i < dataset.images.cols(); ++i) {
    for (Eigen::Index j = 0; j < kImagePixels; ++j) {
      const float v = std::clamp(dataset.images(j, i), 0.0f, 1.0f);
      out.push_back(static_cast<unsigned char>(std::lround(v * 255.0f)));
    }
  }
  return out;
}

SplitIndices make_split(std::size_t n, double ratio, std::uint64_t seed) {
  if (!(ratio > 0 && ratio < 1)) throw std::invalid_argument("make_split: ratio must be in (0, 1)");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = Rng(seed).derive("split");
  rng.shuffle(perm);
  // floor, with a small guard so n * 0.9 lands on the intended integer
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
  SplitIndices s;
  s.split_seed = seed;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  return s;
}

std::string split_to_json(const SplitIndices& split) {
  json j;
  j["split_seed"] = split.split_seed;
  j["train"] = split.train;
  j["test"] = split.test;
  return j.dump() + "\n";
}

SplitIndices split_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("split file is not valid JSON: ") + e.what(), e.byte);
  }
  SplitIndices s;
  try {
    s.split_seed = j.at("split_seed").get<std::uint64_t>();
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("split file: ") + e.what(), 0);
  }
  return s;
}

void save_split(const SplitIndices& split, const std::filesystem::path& path) {
  write_file_atomic(path, split_to_json(split));
}

SplitIndices load_split(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return split_from_json(std::string(bytes.begin(), bytes.end()));
}

std::vector<ImageVector> sample_sequence(const ImageDataset& dataset,
                                         std::span<const std::size_t> indices, std::size_t length,
                                         Rng& rng, std::vector<std::size_t>* drawn) {
  if (indices.empty()) throw std::invalid_argument("sample_sequence: empty index set");
  std::vector<ImageVector> frames;
  frames.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    const std::size_t idx = indices[rng.index(indices.size())];
    if (drawn) drawn->push_back(idx);
    frames.push_back(dataset.image(idx));
  }
  return frames;
}

SyntheticManifold::SyntheticManifold(std::size_t intrinsic_dim, std::uint64_t seed) {
  if (intrinsic_dim == 0 || intrinsic_dim >= static_cast<std::size_t>(kImagePixels)) {
    throw std::invalid_argument("synthetic_manifold: intrinsic_dim must be in [1, 783]");
  }
  Rng rng = Rng(seed).derive("synthetic/map");
  map.resize(kImagePixels, static_cast<Eigen::Index>(intrinsic_dim));
  offset.resize(kImagePixels);
  for (Eigen::Index j = 0; j < map.cols(); ++j) {
    for (Eigen::Index i = 0; i < map.rows(); ++i) map(i, j) = static_cast<float>(rng.normal(0.0, 1.5));
  }
  for (Eigen::Index i = 0; i < offset.size(); ++i) offset[i] = static_cast<float>(rng.normal(0.0, 1.0));
}

SyntheticSample synthetic_manifold_detailed(std::size_t count, std::size_t intrinsic_dim,
                                            std::uint64_t seed) {
  const SyntheticManifold manifold(intrinsic_dim, seed);
  Rng rng = Rng(seed).derive("synthetic/codes");
  SyntheticSample s;
  s.codes.resize(static_cast<Eigen::Index>(intrinsic_dim), static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < s.codes.size(); ++i) s.codes.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  s.logits = manifold.map * s.codes;
  s.logits.colwise() += manifold.offset;
  s.dataset.source = DataSource::kSynthetic;
  s.dataset.images = s.logits.unaryExpr([](float x) { return apply_activation(Activation::kSigmoid, x); });
  return s;
}

ImageDataset synthetic_manifold(std::size_t count, std::size_t intrinsic_dim, std::uint64_t seed) {
  return synthetic_manifold_detailed(count, intrinsic_dim, seed).dataset;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const unsigned char>(
                              reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace imfn
