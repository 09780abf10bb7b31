#include "imfn/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace imfn {

void TeacherTrainConfig::validate() const {
  std::vector<std::string> problems;
  if (memory_dim <= 0) problems.emplace_back("memory_dim must be > 0");
  if (codec_hidden <= 0) problems.emplace_back("codec_hidden must be > 0");
  if (!(learning_rate > 0)) problems.emplace_back("learning_rate must be > 0");
  if (batch_size == 0) problems.emplace_back("batch_size must be > 0");
  if (epochs_per_level < 0) problems.emplace_back("epochs_per_level must be >= 0");
  if (lambda < 0) problems.emplace_back("lambda must be >= 0");
  if (sigma < 0) problems.emplace_back("sigma must be >= 0");
  if (num_levels_to_train < 0 || num_levels_to_train > kTeacherLevels) {
    problems.emplace_back("num_levels_to_train must be in [0, 9]");
  }
  if (!problems.empty()) {
    std::string msg = "invalid teacher config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::invalid_argument(msg);
  }
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

int tree_depth(std::size_t n) {
  if (!is_power_of_two(n) || n > kMaxSequenceLength) {
    throw std::invalid_argument("sequence length " + std::to_string(n) +
                                " must be a power of two in [1, 512]");
  }
  int depth = 0;
  while ((std::size_t{1} << depth) < n) ++depth;
  return depth;
}

Teacher::Teacher(Eigen::Index memory_dim, Eigen::Index codec_hidden)
    : memory_dim_(memory_dim), codec_(memory_dim, codec_hidden) {
  for (int l = 0; l < kTeacherLevels; ++l) sweepers_.emplace_back(l, memory_dim);
}

Teacher::Teacher(Eigen::Index memory_dim, Rng& rng, Eigen::Index codec_hidden)
    : memory_dim_(memory_dim) {
  Rng codec_rng = rng.derive("init/codec");
  codec_ = Codec(memory_dim, codec_rng, codec_hidden);
  for (int l = 0; l < kTeacherLevels; ++l) {
    Rng s = rng.derive("init/sweeper" + std::to_string(l));
    sweepers_.emplace_back(l, memory_dim, s);
  }
}

std::vector<MemoryVector> Teacher::encode_sequence(const std::vector<ImageVector>& frames) const {
  std::vector<MemoryVector> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(codec_.encode_image(f));
  return out;
}

MemoryVector Teacher::merge_up(const std::vector<MemoryVector>& leaves, OpCounter* counter) const {
  const int depth = tree_depth(leaves.size());
  std::vector<MemoryVector> level = leaves;
  for (const auto& z : level) {
    if (z.size() != memory_dim_) throw ShapeError("merge_up: leaf dimension mismatch");
  }
  for (int l = 0; l < depth; ++l) {
    std::vector<MemoryVector> next(level.size() / 2);
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = sweepers_[static_cast<std::size_t>(l)].merge(level[2 * i], level[2 * i + 1]);
      if (counter) ++counter->merges;
    }
    level = std::move(next);
  }
  return level.front();
}

std::vector<MemoryVector> Teacher::invert_down(const MemoryVector& root, std::size_t length,
                                               OpCounter* counter) const {
  const int depth = tree_depth(length);
  if (root.size() != memory_dim_) throw ShapeError("invert_down: root dimension mismatch");
  std::vector<MemoryVector> level{root};
  for (int l = depth - 1; l >= 0; --l) {
    std::vector<MemoryVector> next(level.size() * 2);
    for (std::size_t i = 0; i < level.size(); ++i) {
      auto [left, right] = sweepers_[static_cast<std::size_t>(l)].invert(level[i]);
      next[2 * i] = std::move(left);
      next[2 * i + 1] = std::move(right);
      if (counter) ++counter->inverts;
    }
    level = std::move(next);
  }
  return level;
}

std::vector<ImageVector> Teacher::roundtrip(const std::vector<ImageVector>& frames) const {
  const auto leaves = invert_down(merge_up(encode_sequence(frames)), frames.size());
  std::vector<ImageVector> out;
  out.reserve(leaves.size());
  for (const auto& z : leaves) out.push_back(codec_.decode_image(z));
  return out;
}

std::uint64_t Teacher::parameter_hash() const {
  std::uint64_t h = codec_.parameter_hash();
  for (const auto& s : sweepers_) h = splitmix64(h ^ s.parameter_hash());
  return h;
}

std::uint64_t Teacher::level_hash(int level) const {
  std::uint64_t h = sweeper(level).parameter_hash();
  if (level == 0) h = splitmix64(h ^ codec_.parameter_hash());
  return h;
}

Bank build_bank0(const MatrixXf& images, const TeacherTrainConfig& cfg, Rng& rng) {
  if (images.cols() == 0) throw std::invalid_argument("build_bank0: dataset is empty");
  if (images.rows() != kImagePixels) throw ShapeError("build_bank0: images must be 784 x N");
  const std::size_t n = static_cast<std::size_t>(images.cols());
  const std::size_t total = n + cfg.zero_augment_count;

  std::vector<std::int64_t> origin(total);
  for (std::size_t i = 0; i < total; ++i) origin[i] = i < n ? static_cast<std::int64_t>(i) : -1;
  rng.shuffle(origin);

  Bank bank;
  bank.level = 0;
  bank.items = MatrixXf::Zero(kImagePixels, static_cast<Eigen::Index>(total));
  for (std::size_t i = 0; i < total; ++i) {
    if (origin[i] >= 0) bank.items.col(static_cast<Eigen::Index>(i)) = images.col(origin[i]);
  }
  bank.origin = std::move(origin);
  return bank;
}

namespace {

MatrixXf gather(const MatrixXf& items, const std::vector<std::size_t>& idx) {
  MatrixXf out(items.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = items.col(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

}  // namespace

std::vector<EpochLog> train_level(Teacher& teacher, int level, const Bank& bank,
                                  const TeacherTrainConfig& cfg, Rng& rng,
                                  const TrainObserver* observer) {
  cfg.validate();
  if (level < 0 || level >= teacher.num_levels()) {
    throw std::invalid_argument("train_level: level out of range");
  }
  if (bank.level != level) {
    throw std::invalid_argument("train_level: bank is for level " + std::to_string(bank.level) +
                                ", asked to train level " + std::to_string(level));
  }
  const Eigen::Index expected_rows = level == 0 ? kImagePixels : teacher.memory_dim();
  if (bank.items.rows() != expected_rows) throw ShapeError("train_level: bank item dimension mismatch");
  if (bank.size() == 0) throw std::invalid_argument("train_level: empty bank");

  const AdamConfig adam{cfg.learning_rate};
  Sweeper& sweeper = teacher.sweeper(level);
  SweeperOptimizer sweeper_opt(sweeper, adam);
  AdamState enc_opt;
  AdamState dec_opt;
  if (level == 0) {
    enc_opt = AdamState(teacher.codec().encoder(), adam);
    dec_opt = AdamState(teacher.codec().decoder(), adam);
  }

  Rng order_rng = rng.derive("order");
  Rng partner_rng = rng.derive("partner");
  Rng noise_rng = rng.derive("noise");

  const std::size_t n = bank.size();
  std::vector<std::size_t> order(n);
  std::vector<EpochLog> logs;
  for (int epoch = 1; epoch <= cfg.epochs_per_level; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);
    double loss_sum = 0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> right_idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::vector<std::size_t> left_idx(right_idx.size());
      for (auto& i : left_idx) i = partner_rng.index(n);

      if (observer && observer->on_batch && !bank.origin.empty()) {
        std::vector<std::int64_t> origins;
        for (auto i : left_idx) origins.push_back(bank.origin[i]);
        for (auto i : right_idx) origins.push_back(bank.origin[i]);
        observer->on_batch(level, origins);
      }

      const MatrixXf left = gather(bank.items, left_idx);
      const MatrixXf right = gather(bank.items, right_idx);
      double loss = 0;
      if (level == 0) {
        const MatrixXf noise =
            gaussian_noise(teacher.memory_dim(), left.cols(), cfg.sigma, noise_rng);
        Codec& codec = teacher.codec();
        auto pass = level0_pair_pass<float>(codec.encoder(), codec.decoder(), sweeper.merge_net(),
                                            sweeper.invert_net(), left, right, noise, cfg.lambda);
        if (!std::isfinite(pass.loss) || !pass.encoder_grads.all_finite() ||
            !pass.decoder_grads.all_finite() || !pass.merge_grads.all_finite() ||
            !pass.invert_grads.all_finite()) {
          throw NumericError("train_level: non-finite loss or gradient at level 0, epoch " +
                             std::to_string(epoch));
        }
        adam_step(codec.encoder(), pass.encoder_grads, enc_opt);
        adam_step(codec.decoder(), pass.decoder_grads, dec_opt);
        adam_step(sweeper.merge_net(), pass.merge_grads, sweeper_opt.merge);
        adam_step(sweeper.invert_net(), pass.invert_grads, sweeper_opt.invert);
        loss = pass.loss;
      } else {
        loss = train_pair_step(sweeper, left, right, cfg.lambda, cfg.sigma, sweeper_opt, noise_rng);
      }
      loss_sum += loss;
      ++steps;
    }
    EpochLog log{level, epoch, loss_sum / static_cast<double>(steps), steps};
    if (observer && observer->on_epoch) observer->on_epoch(log);
    logs.push_back(log);
  }
  return logs;
}

Bank promote_bank(const Teacher& teacher, int level, const Bank& bank, std::size_t target_size,
                  Rng& rng, std::vector<std::pair<std::size_t, std::size_t>>* pairs) {
  if (bank.level != level) throw std::invalid_argument("promote_bank: bank/level mismatch");
  if (level < 0 || level >= teacher.num_levels()) {
    throw std::invalid_argument("promote_bank: level out of range");
  }
  Bank out;
  out.level = level + 1;
  out.items = MatrixXf::Zero(teacher.memory_dim(), static_cast<Eigen::Index>(target_size));
  if (target_size == 0) return out;
  if (bank.size() == 0) throw std::invalid_argument("promote_bank: empty bank");

  std::vector<std::pair<std::size_t, std::size_t>> sampled(target_size);
  for (auto& [a, b] : sampled) {
    a = rng.index(bank.size());
    b = rng.index(bank.size());
  }

  const Sweeper& sweeper = teacher.sweeper(level);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < target_size; start += kChunk) {
    const std::size_t stop = std::min(target_size, start + kChunk);
    std::vector<std::size_t> a_idx;
    std::vector<std::size_t> b_idx;
    for (std::size_t i = start; i < stop; ++i) {
      a_idx.push_back(sampled[i].first);
      b_idx.push_back(sampled[i].second);
    }
    MatrixXf left = gather(bank.items, a_idx);
    MatrixXf right = gather(bank.items, b_idx);
    if (level == 0) {
      left = teacher.codec().encode_batch(left);
      right = teacher.codec().encode_batch(right);
    }
    out.items.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(stop - start)) =
        sweeper.merge_batch(left, right);
  }
  if (pairs) *pairs = std::move(sampled);
  return out;
}

Teacher train_teacher(const MatrixXf& images, const TeacherTrainConfig& cfg, Rng& rng,
                      const TrainObserver* observer) {
  cfg.validate();
  Rng init_rng = rng.derive("teacher/init");
  Teacher teacher(cfg.memory_dim, init_rng, cfg.codec_hidden);
  Rng bank_rng = rng.derive("teacher/bank0");
  Bank bank = build_bank0(images, cfg, bank_rng);
  const std::size_t bank_size = bank.size();
  for (int level = 0; level < cfg.num_levels_to_train; ++level) {
    Rng level_rng = rng.derive("teacher/level" + std::to_string(level));
    train_level(teacher, level, bank, cfg, level_rng, observer);
    if (observer && observer->on_level_done) observer->on_level_done(level, teacher);
    if (level + 1 < cfg.num_levels_to_train) {
      Rng promote_rng = rng.derive("teacher/promote" + std::to_string(level));
      bank = promote_bank(teacher, level, bank, bank_size, promote_rng);
    }
  }
  return teacher;
}

}  // namespace imfn
