// SPDX-License-Identifier: Apache-2.0

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "cli_internal.hpp"
#include "wdgnas/archfmt.hpp"
#include "wdgnas/cli.hpp"
#include "wdgnas/errors.hpp"
#include "wdgnas/netrt/params.hpp"
#include "wdgnas/netrt/plan.hpp"

namespace wdgnas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

SynthSpec DatasetOptions::desk_synth() {
  SynthSpec spec;
  spec.num_classes = 10;
  spec.count = 5000;
  spec.shape = {3, 8, 8};
  spec.noise = 1.0;
  spec.jitter = 1;
  return spec;
}

TrainConfig TrainOptions::desk_train() {
  TrainConfig cfg;
  cfg.epochs = 20;
  return cfg;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string num(double v) { return format_number(v); }

std::vector<LayerRecord> load_arch(const std::string& path) {
  const ArchitectureSummary summary = load_summary_file(path);
  const auto violations = validate_summary(summary);
  if (!violations.empty()) {
    throw DataError(path + ": layer " + std::to_string(violations.front().layer_index) + ": " +
                    violations.front().message);
  }
  return summary.layers;
}

}  // namespace

void prepare_output(const std::string& out, bool overwrite, const char* sentinel) {
  if (out.empty()) return;
  const fs::path dir(out);
  for (const char* name : {"manifest.json", sentinel}) {
    if (name && fs::exists(dir / name) && !overwrite) {
      throw UsageError("refusing to overwrite " + (dir / name).string() + " (pass --overwrite)");
    }
  }
  fs::create_directories(dir);
}

void write_manifest(const std::string& out, const std::string& command, const json& options) {
  if (out.empty()) return;
  json manifest{{"command", command}, {"options", options}};
  write_text(fs::path(out) / "manifest.json", manifest.dump(2) + "\n");
}

json to_json(const DatasetOptions& d) {
  return {{"source", d.source},
          {"format", d.format},
          {"test_source", d.test_source},
          {"seed", d.seed},
          {"synth",
           {{"num_classes", d.synth.num_classes},
            {"count", d.synth.count},
            {"shape", {d.synth.shape.channels, d.synth.shape.height, d.synth.shape.width}},
            {"noise", d.synth.noise},
            {"jitter", d.synth.jitter},
            {"pattern_seed", d.synth.pattern_seed},
            {"test_count", d.synth_test}}}};
}

json to_json(const SplitOptions& s) { return {{"train_frac", s.train_frac}, {"valid_frac", s.valid_frac}}; }

json to_json(const EstimatorConfig& e) {
  return {{"lambda", e.lambda}, {"epochs", e.epochs}, {"score_batch", e.score_batch}};
}

json to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},         {"batch_size", t.batch_size},     {"lr", t.lr},
          {"momentum", t.momentum},     {"weight_decay", t.weight_decay}, {"cutout", t.cutout},
          {"cutout_size", t.cutout_size}};
}

TrainTest load_datasets(const DatasetOptions& opts) {
  if (opts.source == "synth" || opts.format == "synth") {
    if (opts.source != "synth" || opts.format != "synth") {
      throw UsageError("the synthetic dataset is selected with --dataset synth --format synth");
    }
    return synth_train_test(opts.synth, opts.synth_test, opts.seed);
  }
  const DataFormat format = parse_data_format(opts.format);
  TrainTest out;
  out.train = load_dataset(opts.source, format);
  if (!opts.test_source.empty()) {
    out.test = load_dataset(opts.test_source, format, &out.train.norm);
  } else if (format == DataFormat::CifarBinary && fs::is_directory(opts.source) &&
             fs::exists(fs::path(opts.source) / "test_batch.bin")) {
    out.test = load_dataset((fs::path(opts.source) / "test_batch.bin").string(), format, &out.train.norm);
  } else {
    PartialSplit held = partial_split(out.train, 0.8, 0.2, opts.seed);
    out.train = std::move(held.partial_train);
    out.test = std::move(held.partial_valid);
  }
  spdlog::info("dataset {}: {} train / {} test images of {}, {} classes", out.train.name, out.train.size(),
               out.test.size(), out.train.shape.to_string(), out.train.num_classes);
  return out;
}

BuildSpaceResult build_space_with(const BuildSpaceOptions& opts, const TrainTest& data) {
  if (!fs::is_directory(opts.corpus)) throw DataError("corpus directory does not exist: " + opts.corpus);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(opts.corpus)) {
    if (entry.is_regular_file() && entry.path().extension() == ".arch") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  BuildSpaceResult result;
  std::vector<ArchitectureSummary> summaries;
  for (const auto& file : files) {
    try {
      ArchitectureSummary s = load_summary_file(file.string());
      const auto violations = validate_summary(s);
      if (!violations.empty()) {
        throw DataError(file.string() + ": layer " + std::to_string(violations.front().layer_index) + ": " +
                        violations.front().message);
      }
      summaries.push_back(std::move(s));
    } catch (const DataError& e) {
      spdlog::warn("skipping {}", e.what());
      result.skipped.push_back(e.what());
    }
  }
  if (summaries.empty()) throw DataError("no usable .arch summaries in " + opts.corpus);

  const PartialSplit split = partial_split(data.train, opts.split.train_frac, opts.split.valid_frac, opts.seed);
  MixedEvaluator evaluator(split, opts.estimator, opts.seed);
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    CandidateArchitecture seed = candidate_from_layers(summaries[i].layers, summaries[i].name);
    seed.id = i;
    seed.eval_seed = derive_seed(opts.seed, {0xB5, i});
    result.seeds.push_back(std::move(seed));
  }
  evaluator.evaluate(result.seeds, {});
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const auto& seed = result.seeds[i];
    double fitness = seed.fitness.value_or(0.0);
    if (!std::isfinite(fitness)) {
      spdlog::warn("seed {} could not be estimated ({}); using fitness 0", summaries[i].name, seed.failure);
      fitness = 0.0;
    }
    result.space.entries.push_back({summaries[i].name, build_wdg(summaries[i]), fitness});
    spdlog::info("seed {}: fitness {:.4f}", summaries[i].name, fitness);
  }
  return result;
}

BuildSpaceResult cmd_build_space(const BuildSpaceOptions& opts) {
  prepare_output(opts.out, opts.overwrite, "space.json");
  const TrainTest data = load_datasets(opts.data);
  BuildSpaceResult result = build_space_with(opts, data);
  if (opts.out.empty()) return result;

  const fs::path out(opts.out);
  save_space((out / "space.json").string(), result.space);
  fs::create_directories(out / "dot");
  std::string seeds_csv = "name,s,O,f,failure\n";
  for (std::size_t i = 0; i < result.space.entries.size(); ++i) {
    const auto& entry = result.space.entries[i];
    write_text(out / "dot" / (entry.name + ".dot"), export_dot(entry.graph, entry.name));
    const auto& seed = result.seeds[i];
    const FitnessBreakdown parts = seed.components.value_or(FitnessBreakdown{});
    seeds_csv += entry.name + "," + num(parts.score) + "," + num(parts.accuracy) + "," + num(entry.fitness) + "," +
                 (seed.failure.empty() ? "" : "\"" + seed.failure + "\"") + "\n";
  }
  write_text(out / "seeds.csv", seeds_csv);
  write_manifest(opts.out, "build-space",
                 {{"corpus", opts.corpus},
                  {"data", to_json(opts.data)},
                  {"split", to_json(opts.split)},
                  {"estimator", to_json(opts.estimator)},
                  {"seed", opts.seed},
                  {"skipped", result.skipped}});
  return result;
}

namespace {

SearchSpace space_for(const std::string& space_path, const std::string& corpus, const TrainTest& data,
                      const SplitOptions& split, const EstimatorConfig& est, std::uint64_t seed) {
  if (!space_path.empty()) {
    if (!corpus.empty()) throw UsageError("give either a space file or a corpus, not both");
    return load_space(space_path);
  }
  if (corpus.empty()) throw UsageError("a space file or a corpus directory is required");
  BuildSpaceOptions b;
  b.corpus = corpus;
  b.split = split;
  b.estimator = est;
  b.seed = seed;
  return build_space_with(b, data).space;
}

}  // namespace

SearchRun cmd_search(const SearchOptions& opts) {
  opts.search.validate();
  prepare_output(opts.out, opts.overwrite, "best.arch");
  const TrainTest data = load_datasets(opts.data);
  EstimatorConfig est{opts.search.lambda, opts.search.search_epochs, opts.score_batch};
  est.validate();
  SearchSpace space = space_for(opts.space, opts.corpus, data, opts.split, est, opts.search.seed);
  space.validate();

  const PartialSplit split = partial_split(data.train, opts.split.train_frac, opts.split.valid_frac, opts.search.seed);
  MixedEvaluator evaluator(split, est, opts.search.seed);
  SearchRun run;
  run.result = evolve(std::move(space), opts.search, evaluator);
  run.training_steps = evaluator.training_steps();

  const auto& best = run.result.best;
  spdlog::info("best {} fitness {} ({} layers, {} training steps)", best.label(), best.fitness.value_or(NAN),
               best.layers.size(), run.training_steps);
  if (!opts.out.empty()) {
    save_search_result(opts.out, run.result, opts.search);
    write_text(fs::path(opts.out) / "summary.json",
               json{{"best", best.label()},
                    {"fitness", best.fitness.value_or(0.0)},
                    {"layers", best.layers.size()},
                    {"training_steps", run.training_steps}}
                       .dump(2) +
                   "\n");
    write_manifest(opts.out, "search",
                   {{"space", opts.space},
                    {"corpus", opts.corpus},
                    {"data", to_json(opts.data)},
                    {"split", to_json(opts.split)},
                    {"search", json::parse(search_config_json(opts.search))},
                    {"score_batch", opts.score_batch}});
  }
  return run;
}

FitnessBreakdown cmd_score(const ScoreOptions& opts) {
  opts.estimator.validate();
  prepare_output(opts.out, opts.overwrite, "score.json");
  const auto layers = load_arch(opts.arch);
  const TrainTest data = load_datasets(opts.data);
  const PartialSplit split = partial_split(data.train, opts.split.train_frac, opts.split.valid_frac, opts.seed);
  MixedEvaluator evaluator(split, opts.estimator, opts.seed);
  CandidateArchitecture cand = candidate_from_layers(layers, fs::path(opts.arch).stem().string());
  const RawEstimate raw = evaluator.estimate(cand, derive_seed(opts.seed, {0x5C}));
  const double acc[] = {raw.accuracy};
  const double score[] = {raw.score};
  const FitnessBreakdown f = mixed_fitness(raw.accuracy, raw.score, opts.estimator.lambda,
                                           PopulationStats::from(acc, score));
  if (!opts.out.empty()) {
    write_text(fs::path(opts.out) / "score.json",
               json{{"arch", opts.arch},
                    {"s", f.score},
                    {"O", f.accuracy},
                    {"s_norm", f.score_norm},
                    {"O_norm", f.accuracy_norm},
                    {"lambda", f.lambda},
                    {"f", f.fitness},
                    {"training_steps", raw.steps}}
                       .dump(2) +
                   "\n");
    write_manifest(opts.out, "score",
                   {{"arch", opts.arch},
                    {"data", to_json(opts.data)},
                    {"split", to_json(opts.split)},
                    {"estimator", to_json(opts.estimator)},
                    {"seed", opts.seed}});
  }
  return f;
}

TrainReport train_and_evaluate(const std::vector<LayerRecord>& layers, const TrainTest& data,
                               const TrainConfig& cfg, std::uint64_t seed, Tensor* test_logits,
                               NetworkPlan* plan_out, Params* params_out) {
  const NetworkPlan plan = compile_layers(layers, data.train.shape, data.train.num_classes);
  Rng rng = derive_rng(seed, {0x7A});
  Params params = init_params(plan, rng);
  TrainReport report;
  report.parameters = plan.parameter_count();
  report.result = train(plan, params, data.train, cfg, rng);
  report.train_accuracy = evaluate(plan, params, data.train);
  const Tensor logits = predict_logits(plan, params, data.test);
  report.test_accuracy = accuracy(argmax_rows(logits), data.test.labels);
  if (test_logits) *test_logits = logits;
  if (plan_out) *plan_out = plan;
  if (params_out) *params_out = std::move(params);
  return report;
}

TrainReport train_and_evaluate(const std::vector<LayerRecord>& layers, const TrainTest& data,
                               const TrainConfig& cfg, std::uint64_t seed, Tensor* test_logits) {
  return train_and_evaluate(layers, data, cfg, seed, test_logits, nullptr, nullptr);
}

namespace {

Eigen::MatrixXd to_matrix(const Tensor& logits) {
  const auto classes = static_cast<Eigen::Index>(logits.shape.size());
  Eigen::MatrixXd m(logits.batch, classes);
  for (int i = 0; i < logits.batch; ++i) {
    for (Eigen::Index c = 0; c < classes; ++c) m(i, c) = logits.sample(i)[c];
  }
  return m;
}

}  // namespace

TrainReport cmd_train(const TrainOptions& opts) {
  opts.train.validate();
  if (opts.out.empty()) throw UsageError("train needs an output directory");
  prepare_output(opts.out, opts.overwrite, "params.bin");
  const auto layers = load_arch(opts.arch);
  const TrainTest data = load_datasets(opts.data);

  NetworkPlan plan;
  Params params;
  Tensor logits;
  TrainReport report = train_and_evaluate(layers, data, opts.train, opts.seed, &logits, &plan, &params);

  const fs::path out(opts.out);
  save_checkpoint(opts.out, plan, params);
  write_text(out / "plan.txt", plan.describe());
  std::string history = "epoch,loss,accuracy,lr\n";
  for (const auto& e : report.result.history) {
    history += std::to_string(e.epoch) + "," + num(e.loss) + "," + num(e.accuracy) + "," + num(e.lr) + "\n";
  }
  write_text(out / "history.csv", history);
  write_predictions((out / "predictions.csv").string(),
                    {report.train_accuracy, data.test.labels, to_matrix(logits)});
  write_text(out / "report.json", json{{"arch", opts.arch},
                                       {"parameters", report.parameters},
                                       {"steps", report.result.steps},
                                       {"train_accuracy", report.train_accuracy},
                                       {"test_accuracy", report.test_accuracy}}
                                          .dump(2) +
                                      "\n");
  write_manifest(opts.out, "train",
                 {{"arch", opts.arch}, {"data", to_json(opts.data)}, {"train", to_json(opts.train)}, {"seed", opts.seed}});
  spdlog::info("train accuracy {:.4f}, test accuracy {:.4f}", report.train_accuracy, report.test_accuracy);
  return report;
}

std::string correlation_csv(const CorrelationReport& report) {
  std::string out = "candidate_id,s,O,f,oracle_accuracy\n";
  for (const auto& r : report.rows) {
    out += r.candidate + "," + num(r.score) + "," + num(r.accuracy) + "," + num(r.fitness) + "," +
           num(r.oracle_accuracy) + "\n";
  }
  out += "# tau=" + num(report.tau) + "\n";
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, const std::string& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, "not a number: '" + cell + "'", path);
  }
}

double tau_of(const std::vector<CorrelationRow>& rows) {
  std::vector<double> f, oracle;
  for (const auto& r : rows) {
    f.push_back(r.fitness);
    oracle.push_back(r.oracle_accuracy);
  }
  return kendall_tau(f, oracle);
}

}  // namespace

CorrelationReport read_correlation_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  CorrelationReport report;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.starts_with("candidate_id")) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 5) throw ParseError(lineno, "expected 5 columns", path);
    report.rows.push_back({cells[0], parse_cell(cells[1], path, lineno), parse_cell(cells[2], path, lineno),
                           parse_cell(cells[3], path, lineno), parse_cell(cells[4], path, lineno)});
  }
  report.tau = tau_of(report.rows);
  return report;
}

CorrelationReport cmd_correlate(const CorrelateOptions& opts) {
  prepare_output(opts.out, opts.overwrite, "correlation.csv");
  CorrelationReport report;
  if (!opts.from_csv.empty()) {
    report = read_correlation_csv(opts.from_csv);
  } else {
    if (opts.population < 2) throw UsageError("correlation needs a population of at least 2");
    opts.estimator.validate();
    opts.oracle.validate();
    const TrainTest data = load_datasets(opts.data);
    const SearchSpace space = space_for(opts.space, opts.corpus, data, opts.split, opts.estimator, opts.seed);
    space.validate();

    SearchConfig sampling;
    sampling.max_layers = opts.max_layers;
    sampling.seed = opts.seed;
    Rng rng = derive_rng(opts.seed, {0xC0});
    std::vector<CandidateArchitecture> pop;
    int attempts = 0;
    while (static_cast<int>(pop.size()) < opts.population) {
      if (++attempts > 100 * opts.population) throw DataError("could not sample enough compilable candidates");
      CandidateArchitecture c = generate_architecture(space, sampling, rng);
      try {
        compile_plan(c, data.train.shape, data.train.num_classes);
      } catch (const CompileError&) {
        continue;
      }
      c.id = pop.size();
      c.eval_seed = derive_seed(opts.seed, {0xC1, c.id});
      pop.push_back(std::move(c));
    }

    const PartialSplit split = partial_split(data.train, opts.split.train_frac, opts.split.valid_frac, opts.seed);
    MixedEvaluator evaluator(split, opts.estimator, opts.seed);
    evaluator.evaluate(pop, {});
    for (const auto& c : pop) {
      if (!c.components) {
        spdlog::warn("candidate {} dropped: {}", c.label(), c.failure);
        continue;
      }
      TrainReport oracle;
      try {
        oracle = train_and_evaluate(c.layers, data, opts.oracle, c.eval_seed);
      } catch (const NumericError& e) {
        spdlog::warn("candidate {} oracle training failed: {}", c.label(), e.what());
        continue;
      }
      report.rows.push_back({c.label(), c.components->score, c.components->accuracy, c.components->fitness,
                             oracle.test_accuracy});
      spdlog::info("{}: f {:.4f} oracle {:.4f}", c.label(), c.components->fitness, oracle.test_accuracy);
    }
    report.tau = tau_of(report.rows);
  }
  spdlog::info("kendall tau {:.4f} over {} candidates", report.tau, report.rows.size());
  if (!opts.out.empty()) {
    write_text(fs::path(opts.out) / "correlation.csv", correlation_csv(report));
    write_manifest(opts.out, "correlate",
                   {{"population", opts.population},
                    {"space", opts.space},
                    {"corpus", opts.corpus},
                    {"from_csv", opts.from_csv},
                    {"data", to_json(opts.data)},
                    {"split", to_json(opts.split)},
                    {"estimator", to_json(opts.estimator)},
                    {"oracle", to_json(opts.oracle)},
                    {"max_layers", opts.max_layers},
                    {"seed", opts.seed}});
  }
  return report;
}

PredictionFile read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  PredictionFile file;
  bool have_weight = false;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("weight=");
      if (pos != std::string::npos) {
        file.weight = parse_cell(line.substr(pos + 7), path, lineno);
        have_weight = true;
      }
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() < 2) throw ParseError(lineno, "expected a label and at least one logit", path);
    const double label = parse_cell(cells[0], path, lineno);
    if (label < 0 || label != std::floor(label)) throw ParseError(lineno, "label must be a non-negative integer", path);
    file.labels.push_back(static_cast<int>(label));
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(parse_cell(cells[c], path, lineno));
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError(lineno, "ragged logit row", path);
    rows.push_back(std::move(row));
  }
  if (!have_weight) throw DataError(path + ": missing '# weight=' line");
  if (rows.empty()) throw DataError(path + ": no predictions");
  file.logits.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) file.logits(i, c) = rows[i][c];
  }
  return file;
}

void write_predictions(const std::string& path, const PredictionFile& file) {
  std::string out = "# weight=" + num(file.weight) + "\n";
  for (Eigen::Index i = 0; i < file.logits.rows(); ++i) {
    out += std::to_string(file.labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index c = 0; c < file.logits.cols(); ++c) out += "," + num(file.logits(i, c));
    out += "\n";
  }
  write_text(path, out);
}

EnsembleReport cmd_ensemble(const EnsembleOptions& opts) {
  const std::size_t models = opts.archs.size() + opts.predictions.size();
  if (opts.k < 1) throw UsageError("ensemble size k must be ≥ 1");
  if (models == 0) throw UsageError("ensemble needs architectures or prediction files");
  if (static_cast<std::size_t>(opts.k) > models) {
    throw UsageError("ensemble size k=" + std::to_string(opts.k) + " exceeds the " + std::to_string(models) +
                     " available models");
  }
  prepare_output(opts.out, opts.overwrite, "ensemble.csv");

  std::vector<std::string> names;
  std::vector<PredictionFile> preds;
  if (!opts.archs.empty()) {
    opts.train.validate();
    const TrainTest data = load_datasets(opts.data);
    if (!opts.out.empty()) fs::create_directories(fs::path(opts.out) / "predictions");
    for (std::size_t i = 0; i < opts.archs.size(); ++i) {
      const auto layers = load_arch(opts.archs[i]);
      Tensor logits;
      const TrainReport r = train_and_evaluate(layers, data, opts.train, derive_seed(opts.seed, {0xE5, i}), &logits);
      names.push_back(fs::path(opts.archs[i]).stem().string());
      preds.push_back({r.train_accuracy, data.test.labels, to_matrix(logits)});
      spdlog::info("{}: train {:.4f} test {:.4f}", names.back(), r.train_accuracy, r.test_accuracy);
      if (!opts.out.empty()) {
        write_predictions((fs::path(opts.out) / "predictions" / (names.back() + ".csv")).string(), preds.back());
      }
    }
  }
  for (const auto& path : opts.predictions) {
    names.push_back(fs::path(path).stem().string());
    preds.push_back(read_predictions(path));
  }
  for (const auto& p : preds) {
    if (p.labels != preds.front().labels) throw DataError("prediction files disagree on the test labels");
    if (p.logits.cols() != preds.front().logits.cols()) throw DataError("prediction files disagree on class count");
  }

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].weight > preds[b].weight; });

  EnsembleReport report;
  std::vector<Eigen::MatrixXd> logits;
  std::vector<double> weights;
  const auto& labels = preds.front().labels;
  for (std::size_t idx : order) {
    report.models.push_back(names[idx]);
    report.weights.push_back(preds[idx].weight);
    const Eigen::MatrixXd single[] = {preds[idx].logits};
    const double one[] = {1.0};
    report.single_accuracy.push_back(accuracy(ensemble_predict(single, one), labels));
    logits.push_back(preds[idx].logits);
    weights.push_back(preds[idx].weight);
  }
  for (int k = 1; k <= opts.k; ++k) {
    const auto predicted = ensemble_predict(std::span(logits).first(k), std::span(weights).first(k));
    report.accuracy_by_k.push_back(accuracy(predicted, labels));
    spdlog::info("k={}: accuracy {:.4f}", k, report.accuracy_by_k.back());
  }

  if (!opts.out.empty()) {
    std::string models_csv = "model,weight,accuracy\n";
    for (std::size_t i = 0; i < report.models.size(); ++i) {
      models_csv += report.models[i] + "," + num(report.weights[i]) + "," + num(report.single_accuracy[i]) + "\n";
    }
    write_text(fs::path(opts.out) / "models.csv", models_csv);
    std::string ens = "k,accuracy\n";
    for (std::size_t k = 0; k < report.accuracy_by_k.size(); ++k) {
      ens += std::to_string(k + 1) + "," + num(report.accuracy_by_k[k]) + "\n";
    }
    write_text(fs::path(opts.out) / "ensemble.csv", ens);
    write_manifest(opts.out, "ensemble",
                   {{"archs", opts.archs},
                    {"predictions", opts.predictions},
                    {"k", opts.k},
                    {"data", to_json(opts.data)},
                    {"train", to_json(opts.train)},
                    {"seed", opts.seed}});
  }
  return report;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return 1;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return 2;
  return 3;
}

}  // namespace wdgnas::cli
