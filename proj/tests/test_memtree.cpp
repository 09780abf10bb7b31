#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

#include "imfn/memtree.hpp"

using namespace imfn;

namespace {

std::vector<MemoryVector> random_leaves(std::size_t n, Eigen::Index d, Rng& rng) {
  std::vector<MemoryVector> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(testutil::random_vector(d, rng));
  return out;
}

}  // namespace

TEST_SUITE("memtree") {

TEST_CASE("building over one leaf and over eight leaves") {
  Rng rng(1);
  const Teacher t(6, rng, 16);
  const auto one = random_leaves(1, 6, rng);
  const MemoryTree single(t, one);
  CHECK(single.merge_count() == 0);
  CHECK(single.depth() == 0);
  CHECK(oracle::bit_equal(single.root(), one[0]));

  const auto eight = random_leaves(8, 6, rng);
  const MemoryTree tree(t, eight);
  CHECK(tree.merge_count() == 7);
  CHECK(tree.depth() == 3);
  CHECK(oracle::bit_equal(tree.root(), t.merge_up(eight)));
  CHECK(tree.coherent());
  CHECK_THROWS_AS(MemoryTree(t, random_leaves(6, 6, rng)), std::invalid_argument);
}

TEST_CASE("update_leaf recomputes exactly the root path") {
  Rng rng(2);
  const Teacher t(6, rng, 16);
  auto leaves = random_leaves(8, 6, rng);
  MemoryTree tree(t, leaves);

  const MemoryVector root = tree.root();
  auto count = tree.merge_count();
  tree.update_leaf(5, leaves[5]);
  CHECK(tree.merge_count() - count == 3);
  CHECK(oracle::bit_equal(tree.root(), root));

  // Off-path nodes keep their cached values.
  std::vector<MemoryVector> snapshot;
  for (int l = 0; l <= tree.depth(); ++l) {
    for (std::size_t i = 0; i < (tree.num_leaves() >> l); ++i) snapshot.push_back(tree.node(l, i));
  }
  leaves[2] = testutil::random_vector(6, rng);
  count = tree.merge_count();
  tree.update_leaf(2, leaves[2]);
  CHECK(tree.merge_count() - count == 3);
  std::size_t k = 0;
  for (int l = 0; l <= tree.depth(); ++l) {
    for (std::size_t i = 0; i < (tree.num_leaves() >> l); ++i, ++k) {
      const bool on_path = i == (std::size_t{2} >> l);
      if (!on_path) CHECK(oracle::bit_equal(tree.node(l, i), snapshot[k]));
    }
  }
  CHECK(oracle::bit_equal(tree.root(), MemoryTree(t, leaves).root()));
  CHECK(tree.coherent());
  CHECK_THROWS_AS(tree.update_leaf(8, leaves[0]), std::out_of_range);
}

TEST_CASE("coherence survives a random sequence of updates") {
  Rng rng(3);
  const Teacher t(5, rng, 16);
  auto leaves = random_leaves(32, 5, rng);
  MemoryTree tree(t, leaves);
  for (int step = 0; step < 100; ++step) {
    const std::size_t i = rng.index(32);
    leaves[i] = testutil::random_vector(5, rng);
    tree.update_leaf(i, leaves[i]);
  }
  CHECK(tree.coherent());
  CHECK(oracle::bit_equal(tree.root(), MemoryTree(t, leaves).root()));
  CHECK(oracle::bit_equal(tree.root(), t.merge_up(leaves)));
}

TEST_CASE("trajectory examples") {
  Rng rng(4);
  const Teacher t(6, rng, 16);
  const MemoryVector zero = MemoryVector::Zero(6);

  const auto one = random_leaves(1, 6, rng);
  const Trajectory tr1 = generate_trajectory(t, one);
  REQUIRE(tr1.targets.size() == 2);
  CHECK(oracle::bit_equal(tr1.targets[0], zero));
  CHECK(oracle::bit_equal(tr1.targets[1], one[0]));

  const auto eight = random_leaves(8, 6, rng);
  const Trajectory tr8 = generate_trajectory(t, eight);
  CHECK(tr8.merges == 31);
  CHECK(tr8.horizon() == 8);
  CHECK(oracle::bit_equal(tr8.targets.back(), t.merge_up(eight)));
  CHECK(oracle::bit_equal(tr8.targets[0], t.merge_up(std::vector<MemoryVector>(8, zero))));

  // y_3 = f(x1, x2, x3, 0, ..., 0)
  std::vector<MemoryVector> partial(8, zero);
  for (int i = 0; i < 3; ++i) partial[static_cast<std::size_t>(i)] = eight[static_cast<std::size_t>(i)];
  CHECK(oracle::bit_equal(tr8.targets[3], t.merge_up(partial)));

  CHECK(naive_trajectory(t, random_leaves(2, 6, rng)).merges == 3);
  const auto sixteen = random_leaves(16, 6, rng);
  CHECK(naive_trajectory(t, sixteen).merges == 255);
  CHECK(generate_trajectory(t, sixteen).merges == 79);
  CHECK_THROWS_AS(generate_trajectory(t, random_leaves(5, 6, rng)), std::invalid_argument);
}

TEST_CASE("incremental and naive trajectories agree bit for bit") {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    Rng rng(seed);
    const Teacher t(8, rng, 16);
    for (std::size_t n : {1u, 2u, 4u, 8u, 16u, 32u}) {
      const auto leaves = random_leaves(n, 8, rng);
      for (ZeroLeafMode mode : {ZeroLeafMode::kZeroLatent, ZeroLeafMode::kEncodedZeroImage}) {
        const Trajectory a = generate_trajectory(t, leaves, mode);
        const Trajectory b = naive_trajectory(t, leaves, mode);
        REQUIRE(a.targets.size() == n + 1);
        REQUIRE(b.targets.size() == n + 1);
        for (std::size_t k = 0; k <= n; ++k) CHECK(oracle::bit_equal(a.targets[k], b.targets[k]));
        CHECK(a.merges == oracle::incremental_merges(n));
        CHECK(b.merges == oracle::naive_merges(n));
      }
    }
  }
}

TEST_CASE("the first target depends only on the teacher") {
  Rng rng(5);
  const Teacher t(6, rng, 16);
  const auto a = generate_trajectory(t, random_leaves(8, 6, rng));
  const auto b = generate_trajectory(t, random_leaves(8, 6, rng));
  CHECK(oracle::bit_equal(a.targets[0], b.targets[0]));
}

TEST_CASE("blank leaf modes") {
  Rng rng(6);
  const Teacher t(6, rng, 16);
  CHECK(blank_leaf(t, ZeroLeafMode::kZeroLatent) == MemoryVector::Zero(6));
  CHECK(oracle::bit_equal(blank_leaf(t, ZeroLeafMode::kEncodedZeroImage),
                          t.codec().encode_image(ImageVector::Zero(784))));
}

}
