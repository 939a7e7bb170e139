// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>

#include "wdgnas/cli.hpp"
#include "wdgnas/errors.hpp"

namespace wdgnas::cli {

namespace {

void add_data_options(CLI::App* app, DatasetOptions& d) {
  app->add_option("--dataset", d.source, "Dataset path, or 'synth' for the synthetic generator")
      ->capture_default_str();
  app->add_option("--format", d.format, "Dataset format: synth, cifar-binary or idx-pair")->capture_default_str();
  app->add_option("--test-dataset", d.test_source, "Held-out test set in the same format");
  app->add_option("--data-seed", d.seed, "Seed for synthetic sampling and held-out splits")->capture_default_str();
  app->add_option("--synth-classes", d.synth.num_classes, "Synthetic class count")->capture_default_str();
  app->add_option("--synth-count", d.synth.count, "Synthetic training images")->capture_default_str();
  app->add_option("--synth-test", d.synth_test, "Synthetic test images")->capture_default_str();
  app->add_option("--synth-channels", d.synth.shape.channels, "Synthetic image channels")->capture_default_str();
  app->add_option("--synth-height", d.synth.shape.height, "Synthetic image height")->capture_default_str();
  app->add_option("--synth-width", d.synth.shape.width, "Synthetic image width")->capture_default_str();
  app->add_option("--synth-noise", d.synth.noise, "Synthetic pixel noise")->capture_default_str();
  app->add_option("--synth-jitter", d.synth.jitter, "Synthetic pattern translation")->capture_default_str();
  app->add_option("--synth-pattern-seed", d.synth.pattern_seed, "Synthetic class pattern seed")
      ->capture_default_str();
}

void add_split_options(CLI::App* app, SplitOptions& s) {
  app->add_option("--train-frac", s.train_frac, "Partial training fraction")->capture_default_str();
  app->add_option("--valid-frac", s.valid_frac, "Partial validation fraction")->capture_default_str();
}

void add_estimator_options(CLI::App* app, EstimatorConfig& e) {
  app->add_option("--lambda", e.lambda, "Weight of the Jacobian score in the fitness")->capture_default_str();
  app->add_option("--search-epochs", e.epochs, "Low-fidelity training epochs")->capture_default_str();
  app->add_option("--score-batch", e.score_batch, "Images in the scoring batch")->capture_default_str();
}

void add_train_options(CLI::App* app, TrainConfig& t, const std::string& epochs_flag) {
  app->add_option(epochs_flag, t.epochs, "Training epochs")->capture_default_str();
  app->add_option("--batch-size", t.batch_size, "Minibatch size")->capture_default_str();
  app->add_option("--lr", t.lr, "Initial learning rate")->capture_default_str();
  app->add_option("--momentum", t.momentum, "SGD momentum")->capture_default_str();
  app->add_option("--weight-decay", t.weight_decay, "L2 weight decay")->capture_default_str();
  app->add_flag("--cutout", t.cutout, "Enable cutout augmentation");
  app->add_option("--cutout-size", t.cutout_size, "Cutout side (0 selects a quarter of the image)")
      ->capture_default_str();
}

void add_output_options(CLI::App* app, std::string& out, bool& overwrite) {
  app->add_option("--out", out, "Output directory");
  app->add_flag("--overwrite", overwrite, "Replace an existing run in the output directory");
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Architecture search over weighted directed graphs of layer transitions"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML or INI file with option values; command-line flags take precedence");
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  BuildSpaceOptions build;
  auto* build_cmd = app.add_subcommand("build-space", "Build the search space from a corpus of .arch summaries");
  build_cmd->add_option("--corpus", build.corpus, "Directory of .arch files")->required();
  build_cmd->add_option("--seed", build.seed, "Run seed")->capture_default_str();
  add_data_options(build_cmd, build.data);
  add_split_options(build_cmd, build.split);
  add_estimator_options(build_cmd, build.estimator);
  add_output_options(build_cmd, build.out, build.overwrite);

  SearchOptions search;
  auto* search_cmd = app.add_subcommand("search", "Run the evolutionary search");
  auto* space_opt = search_cmd->add_option("--space", search.space, "space.json written by build-space");
  search_cmd->add_option("--corpus", search.corpus, "Directory of .arch files")->excludes(space_opt);
  search_cmd->add_option("--generations", search.search.generations, "Generations")->capture_default_str();
  search_cmd->add_option("--population", search.search.population, "Candidates per generation")
      ->capture_default_str();
  search_cmd->add_option("--lambda", search.search.lambda, "Weight of the Jacobian score")->capture_default_str();
  search_cmd->add_option("--search-epochs", search.search.search_epochs, "Low-fidelity training epochs")
      ->capture_default_str();
  search_cmd->add_option("--elitism", search.search.elitism_frac, "Elite fraction")->capture_default_str();
  search_cmd->add_option("--mutation-prob", search.search.mutation_prob, "Conv to Skip mutation probability")
      ->capture_default_str();
  search_cmd->add_option("--max-layers", search.search.max_layers, "Layer cap per candidate")->capture_default_str();
  search_cmd->add_option("--score-batch", search.score_batch, "Images in the scoring batch")->capture_default_str();
  search_cmd->add_option("--seed", search.search.seed, "Run seed")->capture_default_str();
  add_data_options(search_cmd, search.data);
  add_split_options(search_cmd, search.split);
  add_output_options(search_cmd, search.out, search.overwrite);

  ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Estimate the fitness of one architecture");
  score_cmd->add_option("--arch", score.arch, ".arch file")->required();
  score_cmd->add_option("--seed", score.seed, "Run seed")->capture_default_str();
  add_data_options(score_cmd, score.data);
  add_split_options(score_cmd, score.split);
  add_estimator_options(score_cmd, score.estimator);
  add_output_options(score_cmd, score.out, score.overwrite);

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train one architecture and write a checkpoint");
  train_cmd->add_option("--arch", train.arch, ".arch file")->required();
  train_cmd->add_option("--seed", train.seed, "Run seed")->capture_default_str();
  add_data_options(train_cmd, train.data);
  add_train_options(train_cmd, train.train, "--epochs");
  add_output_options(train_cmd, train.out, train.overwrite);

  CorrelateOptions corr;
  auto* corr_cmd = app.add_subcommand("correlate", "Rank correlation between estimated fitness and trained accuracy");
  auto* corr_space = corr_cmd->add_option("--space", corr.space, "space.json written by build-space");
  corr_cmd->add_option("--corpus", corr.corpus, "Directory of .arch files")->excludes(corr_space);
  corr_cmd->add_option("--population", corr.population, "Sampled candidates")->capture_default_str();
  corr_cmd->add_option("--max-layers", corr.max_layers, "Layer cap per candidate")->capture_default_str();
  corr_cmd->add_option("--from-csv", corr.from_csv, "Recompute tau from an existing correlation.csv");
  corr_cmd->add_option("--seed", corr.seed, "Run seed")->capture_default_str();
  add_data_options(corr_cmd, corr.data);
  add_split_options(corr_cmd, corr.split);
  add_estimator_options(corr_cmd, corr.estimator);
  add_train_options(corr_cmd, corr.oracle, "--oracle-epochs");
  add_output_options(corr_cmd, corr.out, corr.overwrite);

  EnsembleOptions ens;
  auto* ens_cmd = app.add_subcommand("ensemble", "Weighted-majority ensemble of the k best models");
  ens_cmd->add_option("--arch", ens.archs, ".arch file to train (repeatable)");
  ens_cmd->add_option("--predictions", ens.predictions, "Prediction file (repeatable)");
  ens_cmd->add_option("--k", ens.k, "Ensemble size")->required();
  ens_cmd->add_option("--seed", ens.seed, "Run seed")->capture_default_str();
  add_data_options(ens_cmd, ens.data);
  add_train_options(ens_cmd, ens.train, "--epochs");
  add_output_options(ens_cmd, ens.out, ens.overwrite);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
  try {
    if (*build_cmd) {
      const auto r = cmd_build_space(build);
      std::cout << "space: " << r.space.size() << " models\n";
    } else if (*search_cmd) {
      const auto r = cmd_search(search);
      std::cout << "best: " << r.result.best.label() << " fitness " << r.result.best.fitness.value_or(0.0) << "\n"
                << write_candidate(r.result.best);
    } else if (*score_cmd) {
      const auto f = cmd_score(score);
      std::cout << "s=" << f.score << " O=" << f.accuracy << " f=" << f.fitness << "\n";
    } else if (*train_cmd) {
      const auto r = cmd_train(train);
      std::cout << "train_accuracy=" << r.train_accuracy << " test_accuracy=" << r.test_accuracy << "\n";
    } else if (*corr_cmd) {
      const auto r = cmd_correlate(corr);
      std::cout << "tau=" << r.tau << " over " << r.rows.size() << " candidates\n";
    } else if (*ens_cmd) {
      const auto r = cmd_ensemble(ens);
      for (std::size_t k = 0; k < r.accuracy_by_k.size(); ++k) {
        std::cout << "k=" << k + 1 << " accuracy=" << r.accuracy_by_k[k] << "\n";
      }
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  }
  return 0;
}

}  // namespace wdgnas::cli
