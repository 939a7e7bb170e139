// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/estimate.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wdgnas/errors.hpp"
#include "wdgnas/netrt/params.hpp"
#include "wdgnas/netrt/plan.hpp"

namespace wdgnas {

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& jacobian) {
  const Eigen::Index rows = jacobian.rows();
  if (rows < 2) throw UsageError("correlation needs at least two rows");
  if (jacobian.cols() < 1) throw UsageError("correlation needs at least one column");
  if (!jacobian.allFinite()) throw NumericError("Jacobian has non-finite entries");

  Eigen::MatrixXd centered = jacobian.colwise() - jacobian.rowwise().mean();
  Eigen::VectorXd norms = centered.rowwise().norm();
  const double cols = static_cast<double>(jacobian.cols());
  std::vector<bool> flat(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) {
    flat[i] = norms(i) * norms(i) / cols < 1e-12;
    if (!flat[i]) centered.row(i) /= norms(i);
  }
  Eigen::MatrixXd corr = centered * centered.transpose();
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (flat[i]) {
      corr.row(i).setZero();
      corr.col(i).setZero();
    }
    corr(i, i) = 1.0;
  }
  // Exact symmetry and range despite rounding.
  corr = (0.5 * (corr + corr.transpose())).cwiseMax(-1.0).cwiseMin(1.0);
  return corr;
}

double jacobian_score(const Eigen::MatrixXd& correlation) {
  if (correlation.rows() != correlation.cols() || correlation.rows() < 1) {
    throw UsageError("correlation matrix must be square and non-empty");
  }
  if (!correlation.allFinite()) throw NumericError("correlation matrix has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(correlation, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("eigensolver failed");
  double denom = 0.0;
  for (double sigma : solver.eigenvalues()) {
    const double v = std::max(sigma, 0.0) + kScoreK;
    denom += std::log(v) + 1.0 / v;
  }
  if (!(denom > 0.0) || !std::isfinite(denom)) throw NumericError("Jacobian score denominator is not positive");
  return 1e4 / denom;
}

double network_score(const NetworkPlan& plan, const Params& params, const Tensor& batch) {
  return jacobian_score(correlation_matrix(input_jacobian(plan, params, batch)));
}

double low_fidelity_fitness(const CandidateArchitecture& candidate, const Dataset& train_set, const Dataset& valid,
                            int epochs, Rng& rng, std::size_t* steps) {
  if (epochs < 1) throw UsageError("low-fidelity training needs at least one epoch");
  const NetworkPlan plan = compile_plan(candidate, train_set.shape, train_set.num_classes);
  Params params = init_params(plan, rng);
  TrainConfig cfg;
  cfg.epochs = epochs;
  const TrainResult r = train(plan, params, train_set, cfg, rng);
  if (steps) *steps = r.steps;
  return evaluate(plan, params, valid);
}

PopulationStats PopulationStats::from(std::span<const double> accuracies, std::span<const double> scores) {
  if (accuracies.empty() || scores.empty()) throw UsageError("population statistics need at least one member");
  const auto [amin, amax] = std::minmax_element(accuracies.begin(), accuracies.end());
  const auto [smin, smax] = std::minmax_element(scores.begin(), scores.end());
  return {*amin, *amax, *smin, *smax};
}

double min_max_normalize(double x, double lo, double hi) {
  if (!(hi - lo > 0.0)) return 0.5;
  return (x - lo) / (hi - lo);
}

FitnessBreakdown mixed_fitness(double accuracy, double score, double lambda, const PopulationStats& stats) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("lambda must be in [0,1]");
  FitnessBreakdown f;
  f.accuracy = accuracy;
  f.score = score;
  f.lambda = lambda;
  f.accuracy_norm = min_max_normalize(accuracy, stats.accuracy_min, stats.accuracy_max);
  f.score_norm = min_max_normalize(score, stats.score_min, stats.score_max);
  f.fitness = (1.0 - lambda) * f.accuracy_norm + lambda * f.score_norm;
  return f;
}

namespace {

// Number of pairs within runs of equal values in a sorted range.
template <typename It, typename Eq>
std::uint64_t tied_pairs(It first, It last, Eq eq) {
  std::uint64_t total = 0;
  while (first != last) {
    It run = first;
    while (run != last && eq(*run, *first)) ++run;
    const auto len = static_cast<std::uint64_t>(run - first);
    total += len * (len - 1) / 2;
    first = run;
  }
  return total;
}

// Merge sort by value, counting inversions.
std::uint64_t sort_counting_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = sort_counting_swaps(v, buf, lo, mid) + sort_counting_swaps(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("kendall_tau: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw UsageError("kendall_tau needs at least two items");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw UsageError("kendall_tau: non-finite value");
  }

  // Knight's algorithm: sort by (a, b), then count inversions in b.
  std::vector<std::pair<double, double>> pairs(n);
  for (std::size_t i = 0; i < n; ++i) pairs[i] = {a[i], b[i]};
  std::sort(pairs.begin(), pairs.end());
  const std::uint64_t ties_a =
      tied_pairs(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) { return x.first == y.first; });
  const std::uint64_t ties_ab = tied_pairs(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) { return x == y; });

  std::vector<double> bs(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) bs[i] = pairs[i].second;
  const std::uint64_t swaps = sort_counting_swaps(bs, buf, 0, n);
  const std::uint64_t ties_b = tied_pairs(bs.begin(), bs.end(), [](double x, double y) { return x == y; });

  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  if (ties_a == total || ties_b == total) throw UsageError("kendall_tau is undefined when a list is entirely tied");
  const double numer = static_cast<double>(total) - static_cast<double>(ties_a) - static_cast<double>(ties_b) +
                       static_cast<double>(ties_ab) - 2.0 * static_cast<double>(swaps);
  const double denom =
      std::sqrt(static_cast<double>(total - ties_a)) * std::sqrt(static_cast<double>(total - ties_b));
  return std::clamp(numer / denom, -1.0, 1.0);
}

std::vector<int> ensemble_predict(std::span<const Eigen::MatrixXd> logits, std::span<const double> weights) {
  if (logits.empty()) throw UsageError("ensemble needs at least one model");
  if (weights.size() != logits.size()) throw UsageError("ensemble needs one weight per model");
  bool any_positive = false;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError("ensemble weights must be finite and ≥ 0");
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) throw UsageError("ensemble needs a positive weight");
  const Eigen::Index rows = logits[0].rows(), classes = logits[0].cols();
  if (classes < 1) throw UsageError("ensemble logits have no classes");
  for (const auto& m : logits) {
    if (m.rows() != rows || m.cols() != classes) throw UsageError("ensemble logits differ in shape");
  }
  std::vector<int> out(static_cast<std::size_t>(rows));
  std::vector<double> votes(static_cast<std::size_t>(classes));
  for (Eigen::Index i = 0; i < rows; ++i) {
    std::fill(votes.begin(), votes.end(), 0.0);
    for (std::size_t m = 0; m < logits.size(); ++m) {
      Eigen::Index arg = 0;
      for (Eigen::Index c = 1; c < classes; ++c) {
        if (logits[m](i, c) > logits[m](i, arg)) arg = c;
      }
      votes[static_cast<std::size_t>(arg)] += weights[m];
    }
    out[static_cast<std::size_t>(i)] =
        static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

void EstimatorConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("lambda must be in [0,1]");
  if (epochs < 1) throw UsageError("estimator epochs must be ≥ 1");
  if (score_batch < 2) throw UsageError("scoring batch must hold at least 2 inputs");
}

MixedEvaluator::MixedEvaluator(PartialSplit split, EstimatorConfig cfg, std::uint64_t seed)
    : split_(std::move(split)), cfg_(cfg) {
  cfg_.validate();
  split_.partial_train.validate();
  split_.partial_valid.validate();
  const std::size_t n = split_.partial_train.size();
  const std::size_t take = std::min<std::size_t>(n, static_cast<std::size_t>(cfg_.score_batch));
  if (take < 2) throw UsageError("partial training split is too small for a scoring batch");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = derive_rng(seed, {0x5C0E});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(take);
  scoring_batch_ = make_batch(split_.partial_train, idx);
}

RawEstimate MixedEvaluator::estimate(const CandidateArchitecture& candidate, std::uint64_t seed) {
  const Dataset& train_set = split_.partial_train;
  const NetworkPlan plan = compile_plan(candidate, train_set.shape, train_set.num_classes);
  Rng rng(seed);
  Params params = init_params(plan, rng);
  RawEstimate raw;
  raw.score = network_score(plan, params, scoring_batch_.inputs);
  if (cfg_.lambda < 1.0) {
    TrainConfig tc;
    tc.epochs = cfg_.epochs;
    const TrainResult r = train(plan, params, train_set, tc, rng);
    raw.steps = r.steps;
    raw.accuracy = wdgnas::evaluate(plan, params, split_.partial_valid);
  }
  return raw;
}

void MixedEvaluator::evaluate(std::span<CandidateArchitecture> fresh, std::span<const CandidateArchitecture> carried) {
  std::vector<std::optional<RawEstimate>> raws(fresh.size());
  std::vector<double> accuracies, scores;
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    auto& cand = fresh[i];
    try {
      raws[i] = estimate(cand, cand.eval_seed);
      training_steps_ += raws[i]->steps;
      accuracies.push_back(raws[i]->accuracy);
      scores.push_back(raws[i]->score);
    } catch (const Error& e) {
      cand.failure = e.what();
      cand.fitness = -std::numeric_limits<double>::infinity();
      cand.components.reset();
      spdlog::debug("{} failed: {}", cand.label(), e.what());
    }
  }
  for (const auto& elite : carried) {
    if (elite.components) {
      accuracies.push_back(elite.components->accuracy);
      scores.push_back(elite.components->score);
    }
  }
  if (accuracies.empty()) return;
  const PopulationStats stats = PopulationStats::from(accuracies, scores);
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    if (!raws[i]) continue;
    fresh[i].components = mixed_fitness(raws[i]->accuracy, raws[i]->score, cfg_.lambda, stats);
    fresh[i].fitness = fresh[i].components->fitness;
    fresh[i].failure.clear();
  }
}

}  // namespace wdgnas
