#pragma once

#include "imfn/nn.hpp"
#include "imfn/teacher.hpp"

#include <filesystem>
#include <string>

namespace testutil {

inline Eigen::MatrixXf random_matrix(Eigen::Index rows, Eigen::Index cols, imfn::Rng& rng,
                                     double lo = -1.0, double hi = 1.0) {
  Eigen::MatrixXf m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<float>(rng.uniform(lo, hi));
  }
  return m;
}

inline Eigen::VectorXf random_vector(Eigen::Index n, imfn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  return random_matrix(n, 1, rng, lo, hi).col(0);
}

inline Eigen::MatrixXd random_matrix_d(Eigen::Index rows, Eigen::Index cols, imfn::Rng& rng) {
  return random_matrix(rows, cols, rng).cast<double>();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("imfn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
