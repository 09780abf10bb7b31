#pragma once

#include "imfn/codec.hpp"
#include "imfn/nn.hpp"
#include "imfn/sweeper.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace imfn {

inline constexpr int kTeacherLevels = 9;
inline constexpr std::size_t kMaxSequenceLength = std::size_t{1} << kTeacherLevels;

struct TeacherTrainConfig {
  Eigen::Index memory_dim = 1024;
  Eigen::Index codec_hidden = kDefaultCodecHidden;
  std::vector<std::uint64_t> seeds = {42, 123, 456, 789, 2024};
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  int epochs_per_level = 50;
  double lambda = 1e-3;
  double sigma = 1e-2;
  std::size_t zero_augment_count = 1000;
  int num_levels_to_train = kTeacherLevels;

  /// Throws std::invalid_argument listing every bad field.
  void validate() const;
};

/// Invocation counters for the merge / invert networks.
struct OpCounter {
  std::uint64_t merges = 0;
  std::uint64_t inverts = 0;
};

bool is_power_of_two(std::size_t n);
/// log2(n) for a power of two n in [1, 2^9]; throws std::invalid_argument otherwise.
int tree_depth(std::size_t n);

class Teacher {
 public:
  Teacher() = default;
  /// Zero-initialized parameters.
  Teacher(Eigen::Index memory_dim, Eigen::Index codec_hidden = kDefaultCodecHidden);
  /// Randomly initialized; each net draws from its own derived stream.
  Teacher(Eigen::Index memory_dim, Rng& rng, Eigen::Index codec_hidden = kDefaultCodecHidden);

  Eigen::Index memory_dim() const { return memory_dim_; }
  int num_levels() const { return static_cast<int>(sweepers_.size()); }

  Codec& codec() { return codec_; }
  const Codec& codec() const { return codec_; }
  Sweeper& sweeper(int level) { return sweepers_.at(static_cast<std::size_t>(level)); }
  const Sweeper& sweeper(int level) const { return sweepers_.at(static_cast<std::size_t>(level)); }

  std::vector<MemoryVector> encode_sequence(const std::vector<ImageVector>& frames) const;

  /// Level l merges positions (2i, 2i+1) with sweeper l. Exactly T-1 merges.
  MemoryVector merge_up(const std::vector<MemoryVector>& leaves, OpCounter* counter = nullptr) const;

  /// Mirror of merge_up; returns T leaves in original order. Exactly T-1 inversions.
  std::vector<MemoryVector> invert_down(const MemoryVector& root, std::size_t length,
                                        OpCounter* counter = nullptr) const;

  /// decode(invert_down(merge_up(encode(frames)))).
  std::vector<ImageVector> roundtrip(const std::vector<ImageVector>& frames) const;

  std::uint64_t parameter_hash() const;
  /// Hash of the nets that level `level` trains (codec included at level 0).
  std::uint64_t level_hash(int level) const;

 private:
  Eigen::Index memory_dim_ = 0;
  Codec codec_;
  std::vector<Sweeper> sweepers_;
};

/// A pool of training items for one level, one item per column: images
/// (784 rows) at level 0, latents (d rows) above.
struct Bank {
  int level = 0;
  MatrixXf items;
  /// Level 0 only: source column in the training image matrix, -1 for the
  /// zero-augmentation items.
  std::vector<std::int64_t> origin;

  std::size_t size() const { return static_cast<std::size_t>(items.cols()); }
};

Bank build_bank0(const MatrixXf& images, const TeacherTrainConfig& cfg, Rng& rng);

struct EpochLog {
  int level = 0;
  int epoch = 0;  // 1-based
  double mean_loss = 0;
  std::size_t steps = 0;
};

struct TrainObserver {
  std::function<void(const EpochLog&)> on_epoch;
  /// Level 0: bank origins of every item used in a minibatch (both partners).
  std::function<void(int level, const std::vector<std::int64_t>& origins)> on_batch;
  /// After a level finishes training (and before its bank is promoted).
  std::function<void(int level, const Teacher&)> on_level_done;
};

/// Trains the sweeper at `level` (plus the codec when level == 0) for
/// cfg.epochs_per_level passes over the bank. Right partners walk a fresh
/// permutation of the bank each epoch; left partners are drawn uniformly
/// from the whole bank.
std::vector<EpochLog> train_level(Teacher& teacher, int level, const Bank& bank,
                                  const TeacherTrainConfig& cfg, Rng& rng,
                                  const TrainObserver* observer = nullptr);

/// Pairs (a, b) sampled uniformly with replacement; item i of the result is
/// merge_level(enc(bank[a_i]), enc(bank[b_i])), enc = E at level 0, identity above.
Bank promote_bank(const Teacher& teacher, int level, const Bank& bank, std::size_t target_size,
                  Rng& rng, std::vector<std::pair<std::size_t, std::size_t>>* pairs = nullptr);

/// Levels 0..num_levels_to_train-1 in order; each bank is promoted to the
/// level-0 bank size before the next level trains.
Teacher train_teacher(const MatrixXf& images, const TeacherTrainConfig& cfg, Rng& rng,
                      const TrainObserver* observer = nullptr);

}  // namespace imfn
