// SPDX-License-Identifier: Apache-2.0
//
// End-to-end workflows behind the command-line tool. Each command takes a
// plain options struct, so the same code is reachable from tests and other
// frontends.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <exception>
#include <string>
#include <vector>

#include "wdgnas/data.hpp"
#include "wdgnas/estimate.hpp"
#include "wdgnas/evolve.hpp"
#include "wdgnas/netrt/train.hpp"
#include "wdgnas/wdg.hpp"

namespace wdgnas::cli {

/// Where images come from. `source` "synth" selects the synthetic generator;
/// anything else is a path read with `format`.
struct DatasetOptions {
  std::string source = "synth";
  std::string format = "synth";
  /// Optional held-out set; without it, file datasets hold out 20% of the
  /// training file.
  std::string test_source;
  SynthSpec synth = desk_synth();
  int synth_test = 1000;
  std::uint64_t seed = 0;

  static SynthSpec desk_synth();
};

TrainTest load_datasets(const DatasetOptions& opts);

/// Partial-split fractions used during search and scoring.
struct SplitOptions {
  double train_frac = 0.08;
  double valid_frac = 0.02;
};

struct BuildSpaceOptions {
  std::string corpus;
  DatasetOptions data;
  SplitOptions split;
  EstimatorConfig estimator;
  std::uint64_t seed = 0;
  /// Empty keeps the space in memory only.
  std::string out;
  bool overwrite = false;
};

struct BuildSpaceResult {
  SearchSpace space;
  /// Seed fitness details, parallel to space.entries.
  std::vector<CandidateArchitecture> seeds;
  /// Files that failed to parse or validate, with reasons.
  std::vector<std::string> skipped;
};

/// Throws DataError when the corpus has no usable summary.
BuildSpaceResult cmd_build_space(const BuildSpaceOptions& opts);

struct SearchOptions {
  /// space.json from build-space; when empty, `corpus` is built in memory.
  std::string space;
  std::string corpus;
  DatasetOptions data;
  SplitOptions split;
  SearchConfig search;
  int score_batch = 32;
  std::string out;
  bool overwrite = false;
};

struct SearchRun {
  SearchResult result;
  std::size_t training_steps = 0;
};

SearchRun cmd_search(const SearchOptions& opts);

struct ScoreOptions {
  std::string arch;
  DatasetOptions data;
  SplitOptions split;
  EstimatorConfig estimator;
  std::uint64_t seed = 0;
  std::string out;
  bool overwrite = false;
};

/// Single-candidate estimate; with no population to normalize against both
/// normalized components are 0.5.
FitnessBreakdown cmd_score(const ScoreOptions& opts);

struct TrainOptions {
  std::string arch;
  DatasetOptions data;
  TrainConfig train = desk_train();
  std::uint64_t seed = 0;
  std::string out;
  bool overwrite = false;

  static TrainConfig desk_train();
};

struct TrainReport {
  TrainResult result;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t parameters = 0;
};

/// Refuses to replace an existing checkpoint unless `overwrite` is set.
TrainReport cmd_train(const TrainOptions& opts);

/// Trains `layers` on `data.train` and reports accuracies; no files written.
TrainReport train_and_evaluate(const std::vector<LayerRecord>& layers, const TrainTest& data,
                               const TrainConfig& cfg, std::uint64_t seed, Tensor* test_logits = nullptr);

struct CorrelateOptions {
  int population = 20;
  std::string space;
  std::string corpus;
  DatasetOptions data;
  SplitOptions split;
  EstimatorConfig estimator;
  TrainConfig oracle = TrainOptions::desk_train();
  std::uint64_t seed = 0;
  int max_layers = 64;
  /// Recompute tau from an existing correlation CSV instead of training.
  std::string from_csv;
  std::string out;
  bool overwrite = false;
};

struct CorrelationRow {
  std::string candidate;
  double score = 0.0;
  double accuracy = 0.0;
  double fitness = 0.0;
  double oracle_accuracy = 0.0;
};

struct CorrelationReport {
  std::vector<CorrelationRow> rows;
  double tau = 0.0;
};

CorrelationReport cmd_correlate(const CorrelateOptions& opts);

/// CSV with header candidate_id,s,O,f,oracle_accuracy and a trailing "# tau=" line.
std::string correlation_csv(const CorrelationReport& report);
/// Parses correlation_csv output (the tau line is ignored) and recomputes tau.
CorrelationReport read_correlation_csv(const std::string& path);

/// Per-model test predictions: a "# weight=<w>" line, then one
/// "label,logit_0,...,logit_{C-1}" row per sample.
struct PredictionFile {
  double weight = 0.0;
  std::vector<int> labels;
  Eigen::MatrixXd logits;
};

PredictionFile read_predictions(const std::string& path);
void write_predictions(const std::string& path, const PredictionFile& file);

struct EnsembleOptions {
  std::vector<std::string> archs;
  std::vector<std::string> predictions;
  int k = 0;
  DatasetOptions data;
  TrainConfig train = TrainOptions::desk_train();
  std::uint64_t seed = 0;
  std::string out;
  bool overwrite = false;
};

struct EnsembleReport {
  /// Model names in decreasing weight order.
  std::vector<std::string> models;
  std::vector<double> weights;
  std::vector<double> single_accuracy;
  /// accuracy_by_k[k-1] is the accuracy of the k highest-weighted models.
  std::vector<double> accuracy_by_k;
};

EnsembleReport cmd_ensemble(const EnsembleOptions& opts);

/// 0 success, 1 usage, 2 data, 3 runtime or numeric failure.
int exit_code_for(const std::exception& e);

/// Parses arguments, runs one subcommand and returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace wdgnas::cli
