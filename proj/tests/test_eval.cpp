#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

#include "imfn/data.hpp"
#include "imfn/eval.hpp"

#include <cmath>
#include <numeric>

using namespace imfn;

namespace {

// Horizon-1 student whose update is m + x computed as relu(x) - relu(-x):
// starting from the zero root its only state equals the teacher root x_1.
Student copy_student(Eigen::Index d) {
  Student s(d, 1);
  auto& L = s.delta_net().layers();
  for (Eigen::Index i = 0; i < d; ++i) {
    L[0].weight(i, d + i) = 1;
    L[0].weight(d + i, d + i) = -1;
  }
  L[1].weight.setIdentity();
  L[2].weight.setIdentity();
  for (Eigen::Index i = 0; i < d; ++i) {
    L[3].weight(i, i) = 1;
    L[3].weight(i, d + i) = -1;
  }
  return s;
}

struct Fixture {
  ImageDataset data = synthetic_manifold(120, 3, 5);
  SplitIndices split = make_split(120, 0.5, 1);
  Teacher teacher;
  Fixture() {
    Rng rng(6);
    teacher = Teacher(8, rng, 32);
  }
};

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("mse") {
  Rng rng(1);
  const Eigen::VectorXf a = testutil::random_vector(784, rng, 0, 1);
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(Eigen::VectorXf::Zero(784), Eigen::VectorXf::Ones(784)) == 1.0);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXf x = testutil::random_vector(784, rng, 0, 1);
    const Eigen::VectorXf y = testutil::random_vector(784, rng, 0, 1);
    CHECK(std::abs(mse(x, y) - oracle::mse(oracle::to_std(x), oracle::to_std(y))) <= 1e-6);
  }
  CHECK_THROWS_AS(mse(Eigen::VectorXf::Zero(3), Eigen::VectorXf::Zero(4)), ShapeError);
}

TEST_CASE("psnr") {
  CHECK(psnr(0.01) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(1.0) == 0.0);
  CHECK(std::isinf(psnr(0.0)));
  CHECK(psnr(0.0) > 0);
  CHECK(psnr(0.04, 2.0) == doctest::Approx(20.0).epsilon(1e-12));
  double prev = psnr(1e-6);
  for (double m = 2e-6; m < 1.0; m *= 1.7) {
    CHECK(psnr(m) < prev);
    prev = psnr(m);
  }
  CHECK_THROWS_AS(psnr(-1.0), std::invalid_argument);
}

TEST_CASE("gaussian window taps") {
  const auto taps = gaussian_taps(11, 1.5);
  REQUIRE(taps.size() == 11);
  CHECK(std::accumulate(taps.begin(), taps.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  for (std::size_t i = 0; i < 5; ++i) CHECK(taps[i] == taps[10 - i]);
  CHECK(taps[5] > taps[4]);
}

TEST_CASE("ssim") {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXf a = testutil::random_vector(784, rng, 0, 1);
    const Eigen::VectorXf b = testutil::random_vector(784, rng, 0, 1);
    const double got = ssim(a, b);
    CHECK(std::abs(got - oracle::ssim(oracle::to_std(a), oracle::to_std(b))) <= 1e-6);
    CHECK(std::abs(got - ssim(b, a)) <= 1e-9);
    CHECK(ssim(a, a) == 1.0);
    const Eigen::VectorXf neg = (1.0f - a.array()).matrix();
    CHECK(ssim(a, neg) < 1.0);
    CHECK(got >= -1.0);
    CHECK(got <= 1.0);
  }
  CHECK(ssim(Eigen::VectorXf::Zero(784), Eigen::VectorXf::Zero(784)) == 1.0);
  CHECK_THROWS_AS(ssim(Eigen::VectorXf::Zero(10), Eigen::VectorXf::Zero(10)), ShapeError);
}

TEST_CASE("sampled sequences stay inside the pool") {
  const std::vector<std::size_t> pool = {3, 9, 14, 27};
  Rng a(3), b(3);
  const auto s1 = sample_eval_sequences(pool, 16, 5, a);
  CHECK(s1 == sample_eval_sequences(pool, 16, 5, b));
  for (const auto& s : s1) {
    CHECK(s.size() == 16);
    for (auto i : s) CHECK(std::find(pool.begin(), pool.end(), i) != pool.end());
  }
}

TEST_CASE("teacher roundtrip report") {
  Fixture f;
  Rng a(4), b(4);
  const EvalReport r = eval_teacher_roundtrip(f.teacher, f.data, f.split.test, 8, 6, a);
  CHECK(r.per_frame_mse.size() == 8);
  CHECK(r.horizon == 8);
  CHECK(r.memory_dim == 8);
  CHECK(r.num_sequences == 6);
  double total = 0;
  for (double v : r.per_frame_mse) total += v;
  CHECK(std::abs(r.mean_mse - total / 8) <= 1e-9);
  CHECK(r.psnr_db == psnr(r.mean_mse));
  const EvalReport again = eval_teacher_roundtrip(f.teacher, f.data, f.split.test, 8, 6, b);
  CHECK(again.per_frame_mse == r.per_frame_mse);
  CHECK(again.ssim == r.ssim);

  // Independent recomputation on the same sampled sequences.
  Rng c(4);
  const auto seqs = sample_eval_sequences(f.split.test, 8, 6, c);
  double want = 0;
  for (const auto& seq : seqs) {
    std::vector<ImageVector> frames;
    for (auto i : seq) frames.push_back(f.data.image(i));
    const auto rec = f.teacher.roundtrip(frames);
    for (std::size_t j = 0; j < 8; ++j) want += oracle::mse(oracle::to_std(frames[j]), oracle::to_std(rec[j]));
  }
  CHECK(r.mean_mse == doctest::Approx(want / 48).epsilon(1e-5));

  Rng d(4);
  const std::vector<std::size_t> small(f.split.test.begin(), f.split.test.begin() + 4);
  CHECK_THROWS_AS(eval_teacher_roundtrip(f.teacher, f.data, small, 8, 2, d), std::invalid_argument);
  CHECK_THROWS_AS(eval_teacher_roundtrip(f.teacher, f.data, f.split.test, 6, 2, d), std::invalid_argument);
}

TEST_CASE("trained teacher beats an untrained one") {
  Fixture f;
  TeacherTrainConfig cfg;
  cfg.memory_dim = 8;
  cfg.codec_hidden = 32;
  cfg.learning_rate = 2e-3;
  cfg.batch_size = 16;
  cfg.epochs_per_level = 30;
  cfg.zero_augment_count = 4;
  cfg.num_levels_to_train = 2;
  Rng rng(7);
  const Teacher trained = train_teacher(f.data.subset(f.split.train), cfg, rng);
  Rng a(8), b(8);
  const double untrained = eval_teacher_roundtrip(f.teacher, f.data, f.split.test, 4, 20, a).mean_mse;
  const double fitted = eval_teacher_roundtrip(trained, f.data, f.split.test, 4, 20, b).mean_mse;
  CHECK(fitted < untrained);
}

TEST_CASE("prefix curve") {
  Fixture f;
  Rng srng(9);
  const Student s(8, 8, srng);
  Rng a(10), b(10);
  const PrefixCurve c = eval_student_prefix(s, f.teacher, f.data, f.split.test, 5, a);
  CHECK(c.student.size() == 8);
  CHECK(c.teacher.size() == 8);
  const PrefixCurve again = eval_student_prefix(s, f.teacher, f.data, f.split.test, 5, b);
  CHECK(again.student == c.student);
  CHECK(again.teacher == c.teacher);

  // Teacher targets substituted for the student states.
  Rng r(11);
  const auto seq = sample_eval_sequences(f.split.test, 8, 1, r).front();
  const MatrixXf frames = f.data.subset(seq);
  std::vector<MemoryVector> latents;
  for (Eigen::Index j = 0; j < 8; ++j) latents.push_back(f.teacher.codec().encode_batch(frames).col(j));
  const Trajectory tr = generate_trajectory(f.teacher, latents);
  const std::vector<MemoryVector> targets(tr.targets.begin() + 1, tr.targets.end());
  const auto curve = prefix_mse(f.teacher, targets, frames);
  const MatrixXf full = decode_from_root(f.teacher, f.teacher.merge_up(latents), 8);
  double rt = 0;
  for (Eigen::Index j = 0; j < 8; ++j) rt += mse(frames.col(j), full.col(j));
  CHECK(curve.back() == doctest::Approx(rt / 8).epsilon(1e-12));

  // A student reproducing the teacher's targets reproduces the teacher curve.
  const Student copy = copy_student(8);
  Rng p(12);
  const PrefixCurve same = eval_student_prefix(copy, f.teacher, f.data, f.split.test, 7, p);
  CHECK(same.student == same.teacher);
}

TEST_CASE("end of sequence") {
  Fixture f;
  Rng srng(13);
  const Student s(8, 4, srng);
  Rng a(14), b(14);
  const EndOfSequence e = eval_end_of_sequence(s, f.teacher, f.data, f.split.test, 9, a);
  CHECK(std::isfinite(e.teacher_mse));
  CHECK(std::isfinite(e.student_mse));
  CHECK(e.teacher_mse >= 0);
  CHECK(e.student_mse >= 0);
  const EvalReport rt = eval_teacher_roundtrip(f.teacher, f.data, f.split.test, 4, 9, b);
  CHECK(e.teacher_mse == rt.mean_mse);

  const Student copy = copy_student(8);
  Rng c(15);
  const EndOfSequence same = eval_end_of_sequence(copy, f.teacher, f.data, f.split.test, 9, c);
  CHECK(same.student_mse == same.teacher_mse);
}

}
