#pragma once

#include "imfn/teacher.hpp"

#include <vector>

namespace imfn {

/// What an unseen leaf holds while a trajectory is being filled in.
enum class ZeroLeafMode {
  kZeroLatent,        // the all-zeros memory vector
  kEncodedZeroImage,  // E(all-black image)
};

/// Complete binary tree over 2^depth leaves with every internal merge cached.
/// nodes[0] are the leaves, nodes[depth] holds the root, and
/// nodes[l][i] = merge_{l-1}(nodes[l-1][2i], nodes[l-1][2i+1]).
class MemoryTree {
 public:
  /// Builds every internal node: exactly n-1 merges.
  MemoryTree(const Teacher& teacher, std::vector<MemoryVector> leaves);

  int depth() const { return depth_; }
  std::size_t num_leaves() const { return nodes_.front().size(); }
  const MemoryVector& root() const { return nodes_.back().front(); }
  const MemoryVector& node(int level, std::size_t index) const;
  std::uint64_t merge_count() const { return merge_count_; }

  /// Replaces one leaf and recomputes exactly the depth() nodes on its path.
  const MemoryVector& update_leaf(std::size_t index, const MemoryVector& value);

  /// True when every cached internal node equals a fresh merge of its children.
  bool coherent() const;

 private:
  const Teacher* teacher_;
  int depth_;
  std::vector<std::vector<MemoryVector>> nodes_;
  std::uint64_t merge_count_ = 0;
};

/// y_0 ... y_n: y_t is the root with leaves 1..t filled and the rest blank.
struct Trajectory {
  std::vector<MemoryVector> targets;
  std::uint64_t merges = 0;

  std::size_t horizon() const { return targets.empty() ? 0 : targets.size() - 1; }
};

MemoryVector blank_leaf(const Teacher& teacher, ZeroLeafMode mode);

/// Incremental fill-in on one tree: (n-1) + n log2 n merges.
Trajectory generate_trajectory(const Teacher& teacher, const std::vector<MemoryVector>& latents,
                               ZeroLeafMode mode = ZeroLeafMode::kZeroLatent);

/// Rebuilds the whole tree for each prefix: (n+1)(n-1) merges. Oracle for
/// generate_trajectory.
Trajectory naive_trajectory(const Teacher& teacher, const std::vector<MemoryVector>& latents,
                            ZeroLeafMode mode = ZeroLeafMode::kZeroLatent);

}  // namespace imfn
