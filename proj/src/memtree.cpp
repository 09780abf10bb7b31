#include "imfn/memtree.hpp"

#include <stdexcept>

namespace imfn {

MemoryTree::MemoryTree(const Teacher& teacher, std::vector<MemoryVector> leaves)
    : teacher_(&teacher), depth_(tree_depth(leaves.size())) {
  for (const auto& z : leaves) {
    if (z.size() != teacher.memory_dim()) throw ShapeError("MemoryTree: leaf dimension mismatch");
  }
  nodes_.push_back(std::move(leaves));
  for (int l = 0; l < depth_; ++l) {
    const auto& below = nodes_.back();
    std::vector<MemoryVector> level(below.size() / 2);
    for (std::size_t i = 0; i < level.size(); ++i) {
      level[i] = teacher.sweeper(l).merge(below[2 * i], below[2 * i + 1]);
      ++merge_count_;
    }
    nodes_.push_back(std::move(level));
  }
}

const MemoryVector& MemoryTree::node(int level, std::size_t index) const {
  return nodes_.at(static_cast<std::size_t>(level)).at(index);
}

const MemoryVector& MemoryTree::update_leaf(std::size_t index, const MemoryVector& value) {
  if (index >= num_leaves()) {
    throw std::out_of_range("update_leaf: index " + std::to_string(index) + " outside [0, " +
                            std::to_string(num_leaves()) + ")");
  }
  if (value.size() != teacher_->memory_dim()) throw ShapeError("update_leaf: dimension mismatch");
  nodes_[0][index] = value;
  std::size_t i = index;
  for (int l = 0; l < depth_; ++l) {
    i /= 2;
    const auto& below = nodes_[static_cast<std::size_t>(l)];
    nodes_[static_cast<std::size_t>(l) + 1][i] =
        teacher_->sweeper(l).merge(below[2 * i], below[2 * i + 1]);
    ++merge_count_;
  }
  return root();
}

bool MemoryTree::coherent() const {
  for (int l = 0; l < depth_; ++l) {
    const auto& below = nodes_[static_cast<std::size_t>(l)];
    const auto& above = nodes_[static_cast<std::size_t>(l) + 1];
    for (std::size_t i = 0; i < above.size(); ++i) {
      if (above[i] != teacher_->sweeper(l).merge(below[2 * i], below[2 * i + 1])) return false;
    }
  }
  return true;
}

MemoryVector blank_leaf(const Teacher& teacher, ZeroLeafMode mode) {
  if (mode == ZeroLeafMode::kEncodedZeroImage) {
    return teacher.codec().encode_image(ImageVector::Zero(kImagePixels));
  }
  return MemoryVector::Zero(teacher.memory_dim());
}

Trajectory generate_trajectory(const Teacher& teacher, const std::vector<MemoryVector>& latents,
                               ZeroLeafMode mode) {
  const std::size_t n = latents.size();
  tree_depth(n);
  MemoryTree tree(teacher, std::vector<MemoryVector>(n, blank_leaf(teacher, mode)));
  Trajectory traj;
  traj.targets.reserve(n + 1);
  traj.targets.push_back(tree.root());
  for (std::size_t t = 0; t < n; ++t) traj.targets.push_back(tree.update_leaf(t, latents[t]));
  traj.merges = tree.merge_count();
  return traj;
}

Trajectory naive_trajectory(const Teacher& teacher, const std::vector<MemoryVector>& latents,
                            ZeroLeafMode mode) {
  const std::size_t n = latents.size();
  tree_depth(n);
  const MemoryVector blank = blank_leaf(teacher, mode);
  Trajectory traj;
  traj.targets.reserve(n + 1);
  for (std::size_t t = 0; t <= n; ++t) {
    std::vector<MemoryVector> leaves(n, blank);
    for (std::size_t i = 0; i < t; ++i) leaves[i] = latents[i];
    OpCounter counter;
    traj.targets.push_back(teacher.merge_up(leaves, &counter));
    traj.merges += counter.merges;
  }
  return traj;
}

}  // namespace imfn
