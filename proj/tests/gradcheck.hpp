#pragma once

// Analytic-vs-central-difference comparisons for every trained objective.
// Shared by the unit suites and the acceptance binary.

#include "helpers.hpp"

#include "imfn/codec.hpp"
#include "imfn/student.hpp"
#include "imfn/sweeper.hpp"

#include <algorithm>
#include <numeric>

namespace gradcheck {

struct Outcome {
  double worst = 0;        // max relative error over probed, kink-free entries
  std::size_t probed = 0;
  std::size_t kinks = 0;   // entries skipped because ±h flipped a relu
};

inline Outcome compare(const std::vector<std::span<const double>>& analytic, const imfn::FiniteDiffResult& fd,
                       const std::vector<std::vector<std::size_t>>& subset) {
  Outcome out;
  for (std::size_t p = 0; p < analytic.size(); ++p) {
    std::vector<std::size_t> probe;
    if (subset.empty()) {
      probe.resize(analytic[p].size());
      std::iota(probe.begin(), probe.end(), std::size_t{0});
    } else {
      probe = subset[p];
    }
    for (std::size_t i : probe) {
      if (fd.kink[p][i]) {
        ++out.kinks;
        continue;
      }
      ++out.probed;
      out.worst = std::max(out.worst, imfn::relative_error(analytic[p][i], fd.grads[p][i]));
    }
  }
  if (!fd.nonfinite.empty()) out.worst = std::numeric_limits<double>::infinity();
  return out;
}

/// `per_tensor` seeded random flat indices per tensor; 0 probes everything.
inline std::vector<std::vector<std::size_t>> pick(const std::vector<imfn::ParamView<double>>& params,
                                                  std::size_t per_tensor, imfn::Rng& rng) {
  if (per_tensor == 0) return {};
  std::vector<std::vector<std::size_t>> subset;
  for (const auto& p : params) {
    std::vector<std::size_t> all(p.values.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    rng.shuffle(all);
    all.resize(std::min(per_tensor, all.size()));
    std::sort(all.begin(), all.end());
    subset.push_back(std::move(all));
  }
  return subset;
}

/// Level-0 objective: encoder, decoder, merge and invert nets together.
inline Outcome level0(std::uint64_t seed, Eigen::Index d, Eigen::Index hidden, Eigen::Index batch,
                      std::size_t per_tensor) {
  using namespace imfn;
  Rng rng(seed);
  Codec codec(d, rng, hidden);
  Sweeper sweeper(0, d, rng);
  auto enc = codec.encoder().cast<double>();
  auto dec = codec.decoder().cast<double>();
  auto merge = sweeper.merge_net().cast<double>();
  auto invert = sweeper.invert_net().cast<double>();
  const Eigen::MatrixXd xl = testutil::random_matrix(kImagePixels, batch, rng, 0, 1).cast<double>();
  const Eigen::MatrixXd xr = testutil::random_matrix(kImagePixels, batch, rng, 0, 1).cast<double>();
  const Eigen::MatrixXd noise = 1e-2 * testutil::random_matrix_d(d, batch, rng);
  const double lambda = 1e-3;

  const auto pass = level0_pair_pass<double>(enc, dec, merge, invert, xl, xr, noise, lambda);
  std::vector<ParamView<double>> params = enc.parameters();
  std::vector<std::span<const double>> analytic = pass.encoder_grads.flat();
  for (auto& p : dec.parameters()) params.push_back(p);
  for (auto& g : pass.decoder_grads.flat()) analytic.push_back(g);
  for (auto& p : merge.parameters()) params.push_back(p);
  for (auto& g : pass.merge_grads.flat()) analytic.push_back(g);
  for (auto& p : invert.parameters()) params.push_back(p);
  for (auto& g : pass.invert_grads.flat()) analytic.push_back(g);

  const PatternLoss loss = [&](std::uint64_t* pattern) {
    const auto p = level0_pair_pass<double>(enc, dec, merge, invert, xl, xr, noise, lambda, false);
    if (pattern) *pattern = p.pattern;
    return p.loss;
  };
  Rng probe_rng = rng.derive("probe");
  const auto subset = pick(params, per_tensor, probe_rng);
  return compare(analytic, finite_diff(params, loss, {1e-4, subset}), subset);
}

/// Latent objective of a level > 0 sweeper.
inline Outcome sweeper(std::uint64_t seed, Eigen::Index d, Eigen::Index batch, std::size_t per_tensor) {
  using namespace imfn;
  Rng rng(seed);
  Sweeper s(1, d, rng);
  auto merge = s.merge_net().cast<double>();
  auto invert = s.invert_net().cast<double>();
  const Eigen::MatrixXd left = testutil::random_matrix_d(d, batch, rng);
  const Eigen::MatrixXd right = testutil::random_matrix_d(d, batch, rng);
  const Eigen::MatrixXd noise = 1e-2 * testutil::random_matrix_d(d, batch, rng);
  const double lambda = 1e-3;

  const auto pass = latent_pair_pass<double>(merge, invert, left, right, noise, lambda);
  std::vector<ParamView<double>> params = merge.parameters();
  std::vector<std::span<const double>> analytic = pass.merge_grads.flat();
  for (auto& p : invert.parameters()) params.push_back(p);
  for (auto& g : pass.invert_grads.flat()) analytic.push_back(g);

  const PatternLoss loss = [&](std::uint64_t* pattern) {
    const auto p = latent_pair_pass<double>(merge, invert, left, right, noise, lambda, false);
    if (pattern) *pattern = p.pattern;
    return p.loss;
  };
  Rng probe_rng = rng.derive("probe");
  const auto subset = pick(params, per_tensor, probe_rng);
  return compare(analytic, finite_diff(params, loss, {1e-4, subset}), subset);
}

/// Distillation subset loss with the previous memories held constant.
inline Outcome student(std::uint64_t seed, Eigen::Index d, std::size_t horizon, std::size_t subset_count,
                       std::size_t per_tensor) {
  using namespace imfn;
  Rng rng(seed);
  Student st(d, horizon, rng);
  auto net = st.delta_net().cast<double>();
  std::vector<std::size_t> steps;
  for (std::size_t k = 0; k < subset_count; ++k) steps.push_back(1 + rng.index(horizon));
  const auto cols = static_cast<Eigen::Index>(subset_count);
  const Eigen::MatrixXf prev = testutil::random_matrix(d, cols, rng);
  const Eigen::MatrixXf latents = testutil::random_matrix(d, cols, rng);
  const Eigen::MatrixXd inputs = st.build_inputs(prev, latents, steps).cast<double>();
  const Eigen::MatrixXd prev_d = prev.cast<double>();
  const Eigen::MatrixXd targets = testutil::random_matrix_d(d, cols, rng);

  const auto full = distill_loss<double>(net, inputs, prev_d, targets);
  std::vector<ParamView<double>> params = net.parameters();
  const auto analytic = full.grads.flat();
  const PatternLoss loss = [&](std::uint64_t* pattern) {
    const auto l = distill_loss<double>(net, inputs, prev_d, targets, false);
    if (pattern) *pattern = l.pattern;
    return l.loss;
  };
  Rng probe_rng = rng.derive("probe");
  const auto subset = pick(params, per_tensor, probe_rng);
  return compare(analytic, finite_diff(params, loss, {1e-4, subset}), subset);
}

}  // namespace gradcheck
