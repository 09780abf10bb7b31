#include "doctest.h"
#include "gradcheck.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

#include "imfn/config.hpp"
#include "imfn/data.hpp"
#include "imfn/student.hpp"

using namespace imfn;

namespace {

// m + g([m; x; e_t]) evaluated with the scalar reference forward.
std::vector<double> reference_step(const Student& s, const MemoryVector& m, const MemoryVector& x, std::size_t t) {
  std::vector<double> e(s.horizon(), 0.0);
  e[t - 1] = 1.0;
  const auto in = oracle::concat(oracle::concat(oracle::to_std(m), oracle::to_std(x)), e);
  auto out = oracle::forward(s.delta_net(), in);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += m(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace

TEST_SUITE("student") {

TEST_CASE("one-hot positions") {
  CHECK(one_hot(1, 4) == Eigen::Vector4f(1, 0, 0, 0));
  CHECK(one_hot(4, 4) == Eigen::Vector4f(0, 0, 0, 1));
  for (std::size_t t = 1; t <= 16; ++t) CHECK(one_hot(t, 16).sum() == 1.0f);
  CHECK_THROWS_AS(one_hot(0, 4), std::out_of_range);
  CHECK_THROWS_AS(one_hot(5, 4), std::out_of_range);
}

TEST_CASE("delta network shape") {
  const Student s(12, 8);
  const auto& layers = s.delta_net().layers();
  REQUIRE(layers.size() == 4);
  CHECK(s.delta_net().in_dim() == 2 * 12 + 8);
  CHECK(layers[0].out_dim() == 24);
  CHECK(layers[1].out_dim() == 24);
  CHECK(layers[2].out_dim() == 24);
  CHECK(s.delta_net().out_dim() == 12);
  CHECK(layers[3].activation == Activation::kIdentity);
  CHECK(layers[0].activation == Activation::kRelu);
}

TEST_CASE("zero output layer makes every step the identity") {
  Rng rng(1);
  Student s(10, 16, rng);
  s.delta_net().layers().back().weight.setZero();
  s.delta_net().layers().back().bias.setZero();
  for (int k = 0; k < 100; ++k) {
    const MemoryVector m = testutil::random_vector(10, rng, -3, 3);
    const MemoryVector x = testutil::random_vector(10, rng, -3, 3);
    const std::size_t t = 1 + rng.index(16);
    REQUIRE(oracle::bit_equal(s.step(m, x, t), m));
  }
}

TEST_CASE("step matches the concatenate-forward-add reference") {
  Rng rng(2);
  const Student s(9, 8, rng);
  for (std::size_t t : {1u, 5u, 8u}) {
    const MemoryVector m = testutil::random_vector(9, rng);
    const MemoryVector x = testutil::random_vector(9, rng);
    const MemoryVector got = s.step(m, x, t);
    const auto want = reference_step(s, m, x, t);
    for (Eigen::Index i = 0; i < 9; ++i) CHECK(relative_error(got(i), want[static_cast<std::size_t>(i)]) <= 1e-5);
    CHECK((s.step_dense(m, x, t) - got).cwiseAbs().maxCoeff() <= 1e-6f);
    CHECK(oracle::bit_equal(s.step(m, x, t), got));
  }
  CHECK_THROWS_AS(s.step(MemoryVector::Zero(9), MemoryVector::Zero(9), 9), std::out_of_range);
  CHECK_THROWS_AS(s.step(MemoryVector::Zero(8), MemoryVector::Zero(9), 1), ShapeError);
}

TEST_CASE("rollout") {
  Rng rng(3);
  const Student zero(6, 8);
  const MemoryVector m0 = testutil::random_vector(6, rng);
  std::vector<MemoryVector> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(testutil::random_vector(6, rng));
  const auto flat = zero.rollout(m0, xs);
  REQUIRE(flat.size() == 5);
  for (const auto& m : flat) CHECK(oracle::bit_equal(m, m0));

  const Student s(6, 8, rng);
  const auto states = s.rollout(m0, xs);
  REQUIRE(states.size() == xs.size());
  MemoryVector prev = m0;
  for (std::size_t t = 1; t <= xs.size(); ++t) {
    const auto want = reference_step(s, prev, xs[t - 1], t);
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(relative_error(states[t - 1](i), want[static_cast<std::size_t>(i)]) <= 1e-5);
    prev = states[t - 1];
  }
  CHECK_THROWS_AS(s.rollout(m0, std::vector<MemoryVector>(9, m0)), std::invalid_argument);
}

TEST_CASE("subset size") {
  CHECK(subset_size(0.25, 8) == 2);
  CHECK(subset_size(0.25, 128) == 32);
  CHECK(subset_size(0.25, 2) == 1);
  CHECK(subset_size(0.25, 1) == 1);
  CHECK(subset_size(1.0, 2) == 2);
}

TEST_CASE("distillation loss equals the externally recomputed subset mean") {
  Rng rng(4);
  const Teacher teacher(6, rng, 16);
  const MatrixXf images = testutil::random_matrix(784, 20, rng, 0, 1);
  for (auto [fraction, horizon] : {std::pair{1.0, std::size_t{2}}, std::pair{0.25, std::size_t{8}}}) {
    Student s(6, horizon, rng);
    const Student before = s;
    DistillConfig cfg;
    cfg.trajectories_per_epoch = 1;
    cfg.subset_fraction = fraction;
    AdamState opt(s.delta_net(), AdamConfig{1e-3});
    std::vector<TrajectorySample> seen;
    DistillObserver obs;
    obs.on_trajectory = [&](const TrajectorySample& t) { seen.push_back(t); };
    Rng data_rng(5);
    const auto log = distill_epoch(s, teacher, images, cfg, opt, data_rng, 1, &obs);
    REQUIRE(seen.size() == 1);
    const auto& sample = seen[0];
    CHECK(sample.subset.size() == subset_size(fraction, horizon));
    if (fraction == 1.0) CHECK(sample.subset == std::vector<std::size_t>{1, 2});
    CHECK(oracle::bit_equal(sample.states[0], sample.teacher.targets[0]));

    double want = 0;
    for (std::size_t t : sample.subset) {
      const auto stepped = reference_step(before, sample.states[t - 1], sample.latents[t - 1], t);
      want += oracle::sum_sq_diff(stepped, oracle::to_std(sample.teacher.targets[t]));
    }
    want /= static_cast<double>(sample.subset.size());
    CHECK(sample.loss == doctest::Approx(want).epsilon(1e-5));
    CHECK(log.mean_loss == doctest::Approx(sample.loss));
    CHECK(s.parameter_hash() != before.parameter_hash());

    // The targets are the incremental trajectory over the sampled frames.
    const Trajectory direct = generate_trajectory(teacher, sample.latents);
    for (std::size_t t = 0; t <= horizon; ++t) CHECK(oracle::bit_equal(direct.targets[t], sample.teacher.targets[t]));
    for (std::size_t i = 0; i < horizon; ++i) CHECK(sample.image_indices[i] < 20);
  }
}

TEST_CASE("distillation gradients match central differences with the previous memory held fixed") {
  for (std::uint64_t seed : {41u, 42u, 43u}) {
    CAPTURE(seed);
    const auto r = gradcheck::student(seed, 6, 8, 4, 0);
    CHECK(r.worst <= 1e-4);
    CHECK(r.probed > 0);
  }
}

TEST_CASE("the subset gradient is the sum of independent per-step terms") {
  Rng rng(6);
  const Student s(5, 8, rng);
  const auto net = s.delta_net().cast<double>();
  const std::vector<std::size_t> steps = {2, 5, 7};
  const MatrixXf prev = testutil::random_matrix(5, 3, rng);
  const MatrixXf xs = testutil::random_matrix(5, 3, rng);
  const Eigen::MatrixXd ys = testutil::random_matrix_d(5, 3, rng);
  const Eigen::MatrixXd in = s.build_inputs(prev, xs, steps).cast<double>();
  const auto whole = distill_loss<double>(net, in, prev.cast<double>(), ys);

  std::vector<double> summed;
  for (Eigen::Index j = 0; j < 3; ++j) {
    const auto part = distill_loss<double>(net, in.col(j), prev.col(j).cast<double>(), ys.col(j));
    const auto flat = part.grads.flat();
    std::size_t k = 0;
    for (const auto& tensor : flat) {
      for (double g : tensor) {
        if (summed.size() <= k) summed.push_back(0);
        summed[k++] += g / 3.0;
      }
    }
  }
  std::size_t k = 0;
  double worst = 0;
  for (const auto& tensor : whole.grads.flat()) {
    for (double g : tensor) worst = std::max(worst, std::abs(g - summed[k++]));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("non-finite trajectories are skipped and reported") {
  Rng rng(7);
  const Teacher teacher(4, rng, 8);
  Student s(4, 4, rng);
  s.delta_net().layers()[1].weight(0, 0) = std::nanf("");
  DistillConfig cfg;
  cfg.trajectories_per_epoch = 3;
  AdamState opt(s.delta_net(), AdamConfig{});
  std::vector<std::string> errors;
  DistillObserver obs;
  obs.on_error = [&](const std::string& e) { errors.push_back(e); };
  const auto log = distill_epoch(s, teacher, testutil::random_matrix(784, 5, rng, 0, 1), cfg, opt, rng, 1, &obs);
  CHECK(log.skipped == 3);
  CHECK(log.trajectories == 0);
  CHECK(errors.size() == 3);
  CHECK(opt.step_count == 0);
}

TEST_CASE("desk distillation lowers the loss and leaves the teacher frozen") {
  const RunConfig rc = profile_defaults(Profile::kDesk);
  const ImageDataset data = synthetic_manifold(200, 4, 7);
  Rng trng(1);
  const Teacher teacher(rc.memory_dim, trng, 32);
  const auto hash = teacher.parameter_hash();
  DistillConfig cfg = rc.student_config();
  cfg.epochs = 60;
  std::vector<double> losses;
  DistillObserver obs;
  obs.on_epoch = [&](const DistillEpochLog& l) { losses.push_back(l.mean_loss); };
  Rng rng(2);
  const Student s = train_student(teacher, data.images, rc.horizon, cfg, rng, &obs);
  REQUIRE(losses.size() == 60);
  CHECK(losses.back() < losses.front());
  CHECK(teacher.parameter_hash() == hash);
  CHECK(s.horizon() == rc.horizon);

  Rng again(2);
  const Student s2 = train_student(teacher, data.images, rc.horizon, cfg, again);
  CHECK(s2.parameter_hash() == s.parameter_hash());
}

TEST_CASE("config defaults") {
  const DistillConfig cfg;
  CHECK(cfg.epochs == 1000);
  CHECK(cfg.trajectories_per_epoch == 100);
  CHECK(cfg.subset_fraction == 0.25);
  CHECK(cfg.learning_rate == 1e-4);
  CHECK(cfg.zero_leaf_mode == ZeroLeafMode::kZeroLatent);
}

}
