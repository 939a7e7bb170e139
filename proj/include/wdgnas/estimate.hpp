// SPDX-License-Identifier: Apache-2.0
//
// Mixed performance estimation: a Jacobian-correlation score of the untrained
// network blended with low-fidelity accuracy, plus rank correlation and
// ensemble voting utilities.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "wdgnas/candidate.hpp"
#include "wdgnas/data.hpp"
#include "wdgnas/evolve.hpp"
#include "wdgnas/netrt/train.hpp"

namespace wdgnas {

inline constexpr double kScoreK = 1e-5;

/// Pearson correlation between the rows of `jacobian` (I x D, I >= 2). Rows
/// with variance below 1e-12 get a unit diagonal and zero off-diagonals.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& jacobian);

/// 1e4 / sum_i [ln(sigma_i + k) + 1 / (sigma_i + k)] over the eigenvalues of
/// `correlation`, clamped at zero.
double jacobian_score(const Eigen::MatrixXd& correlation);

/// Score of an initialized network on one input batch.
double network_score(const NetworkPlan& plan, const Params& params, const Tensor& batch);

/// Compiles, initializes from `rng` and trains `epochs` epochs with default
/// TrainConfig, then returns the accuracy on `valid`. `steps`, when given,
/// receives the number of SGD steps taken.
double low_fidelity_fitness(const CandidateArchitecture& candidate, const Dataset& train_set, const Dataset& valid,
                            int epochs, Rng& rng, std::size_t* steps = nullptr);

/// Ranges used for min-max normalization within a generation.
struct PopulationStats {
  double accuracy_min = 0.0;
  double accuracy_max = 0.0;
  double score_min = 0.0;
  double score_max = 0.0;

  static PopulationStats from(std::span<const double> accuracies, std::span<const double> scores);
};

/// (x - min) / (max - min), or 0.5 when the range is degenerate.
double min_max_normalize(double x, double lo, double hi);

/// f = (1 - lambda) * O_norm + lambda * s_norm. Throws UsageError for lambda
/// outside [0,1].
FitnessBreakdown mixed_fitness(double accuracy, double score, double lambda, const PopulationStats& stats);

/// Kendall tau-b. Throws UsageError on length mismatch, fewer than two
/// items, or a list that is entirely tied.
double kendall_tau(std::span<const double> a, std::span<const double> b);

/// Weighted majority vote over each model's argmax (I x C logits per model).
/// Ties go to the lowest class index.
std::vector<int> ensemble_predict(std::span<const Eigen::MatrixXd> logits, std::span<const double> weights);

struct EstimatorConfig {
  double lambda = 0.75;
  int epochs = 4;
  int score_batch = 32;

  void validate() const;
};

/// Raw estimator outputs for one candidate.
struct RawEstimate {
  double accuracy = 0.0;
  double score = 0.0;
  std::size_t steps = 0;
};

/// Mixed-fitness evaluator over a partial split. Candidates that fail to
/// compile, score or train get -inf and a failure message.
class MixedEvaluator final : public Evaluator {
 public:
  MixedEvaluator(PartialSplit split, EstimatorConfig cfg, std::uint64_t seed);

  void evaluate(std::span<CandidateArchitecture> fresh, std::span<const CandidateArchitecture> carried) override;

  /// Throws CompileError, NumericError on failure. Accuracy is only
  /// measured when lambda < 1.
  RawEstimate estimate(const CandidateArchitecture& candidate, std::uint64_t seed);

  std::size_t training_steps() const { return training_steps_; }
  const Tensor& scoring_batch() const { return scoring_batch_.inputs; }
  const PartialSplit& split() const { return split_; }
  const EstimatorConfig& config() const { return cfg_; }

 private:
  PartialSplit split_;
  EstimatorConfig cfg_;
  Batch scoring_batch_;
  std::size_t training_steps_ = 0;
};

}  // namespace wdgnas
