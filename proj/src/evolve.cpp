// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace wdgnas {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kFirstLayerRetries = 10;

bool ranks_before(const PoolMember& a, std::size_t ia, const PoolMember& b, std::size_t ib) {
  if (a.fitness != b.fitness) return a.fitness < b.fitness;
  if (a.name != b.name) return a.name < b.name;
  return ia < ib;
}

std::string number_text(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  return format_number(v);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

void SearchConfig::validate() const {
  if (generations < 1) throw UsageError("generations must be ≥ 1");
  if (population < 1) throw UsageError("population must be ≥ 1");
  if (search_epochs < 0) throw UsageError("search epochs must be ≥ 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("lambda must be in [0,1]");
  if (!(elitism_frac > 0.0 && elitism_frac < 1.0)) throw UsageError("elitism fraction must be in (0,1)");
  if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) throw UsageError("mutation probability must be in [0,1]");
  if (max_layers < 1) throw UsageError("max layers must be ≥ 1");
}

int SearchConfig::elite_count() const {
  return static_cast<int>(std::ceil(elitism_frac * static_cast<double>(population) - 1e-12));
}

std::vector<std::size_t> parent_pool(const SearchSpace& space, LayerKind last_kind) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < space.entries.size(); ++i) {
    if (space.entries[i].graph.has_outgoing(last_kind)) pool.push_back(i);
  }
  return pool;
}

std::vector<double> rank_probabilities(std::span<const PoolMember> pool) {
  if (pool.empty()) throw UsageError("ranked roulette on an empty pool");
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ranks_before(pool[a], a, pool[b], b); });
  const double n = static_cast<double>(pool.size());
  const double total = n * (n + 1.0) / 2.0;
  std::vector<double> probs(pool.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    probs[order[rank]] = static_cast<double>(rank + 1) / total;
  }
  return probs;
}

std::size_t ranked_roulette(std::span<const PoolMember> pool, Rng& rng) {
  const auto probs = rank_probabilities(pool);
  std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
  return pick(rng);
}

LayerRecord maybe_mutate(const LayerRecord& layer, double mutation_prob, Rng& rng) {
  if (layer.kind != LayerKind::Conv) return layer;
  std::bernoulli_distribution flip(mutation_prob);
  if (flip(rng)) return LayerRecord{LayerKind::Skip, {}};
  return layer;
}

SampledLayer sample_next_layer(const SearchSpace& space, LayerKind last_kind, const SearchConfig& cfg,
                               Rng& rng) {
  const auto pool = parent_pool(space, last_kind);
  if (pool.empty()) return {std::nullopt, LayerKind::End, std::string(kNoParent)};

  std::vector<PoolMember> members;
  members.reserve(pool.size());
  for (std::size_t idx : pool) members.push_back({space.entries[idx].name, space.entries[idx].fitness});
  const SpaceEntry& parent = space.entries[pool[ranked_roulette(members, rng)]];

  const LayerKind next = fps_sample(parent.graph.transitions(last_kind), rng);
  if (next == LayerKind::End) return {std::nullopt, LayerKind::End, parent.name};

  LayerRecord record{next, {}};
  for (Param param : parent.graph.hidden_params(next)) {
    record.params[param] = fps_sample(parent.graph.inner_state_dist(next, param), rng);
  }
  return {maybe_mutate(record, cfg.mutation_prob, rng), next, parent.name};
}

CandidateArchitecture generate_architecture(const SearchSpace& space, const SearchConfig& cfg, Rng& rng) {
  CandidateArchitecture candidate;

  SampledLayer first = sample_next_layer(space, LayerKind::Start, cfg, rng);
  for (int retry = 0; first.is_end() && retry < kFirstLayerRetries; ++retry) {
    first = sample_next_layer(space, LayerKind::Start, cfg, rng);
  }
  if (first.is_end()) throw DataError("search space only emits End from Start");

  SampledLayer current = std::move(first);
  while (!current.is_end()) {
    candidate.layers.push_back(std::move(*current.layer));
    candidate.genealogy.push_back(current.source);
    candidate.sampled_kinds.push_back(current.sampled_kind);
    if (static_cast<int>(candidate.layers.size()) >= cfg.max_layers) {
      spdlog::debug("candidate reached the {}-layer cap", cfg.max_layers);
      break;
    }
    current = sample_next_layer(space, current.sampled_kind, cfg, rng);
  }
  return candidate;
}

void FunctionEvaluator::evaluate(std::span<CandidateArchitecture> fresh, std::span<const CandidateArchitecture>) {
  for (auto& c : fresh) {
    try {
      c.fitness = fn_(c);
    } catch (const std::exception& e) {
      c.fitness = kNegInf;
      c.failure = e.what();
    }
  }
}

SearchResult evolve(SearchSpace space, const SearchConfig& cfg, Evaluator& evaluator) {
  cfg.validate();
  space.validate();

  SearchResult result;
  std::vector<CandidateArchitecture> carried;
  std::set<std::uint64_t> fed_back;
  std::uint64_t next_id = 0;

  for (int gen = 0; gen < cfg.generations; ++gen) {
    std::vector<CandidateArchitecture> fresh;
    fresh.reserve(static_cast<std::size_t>(cfg.population));
    for (int i = 0; i < cfg.population; ++i) {
      Rng rng = derive_rng(cfg.seed, {static_cast<std::uint64_t>(gen), static_cast<std::uint64_t>(i), 0});
      CandidateArchitecture c = generate_architecture(space, cfg, rng);
      c.id = next_id++;
      c.generation = gen;
      c.eval_seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(gen), static_cast<std::uint64_t>(i), 1});
      fresh.push_back(std::move(c));
    }

    evaluator.evaluate(fresh, carried);
    for (auto& c : fresh) {
      if (!c.fitness || std::isnan(*c.fitness)) c.fitness = kNegInf;
      if (std::isinf(*c.fitness) && *c.fitness < 0) {
        spdlog::warn("candidate {} failed evaluation: {}", c.label(), c.failure.empty() ? "no fitness" : c.failure);
      }
    }

    std::vector<const CandidateArchitecture*> members;
    for (const auto& c : carried) members.push_back(&c);
    for (const auto& c : fresh) members.push_back(&c);

    GenerationStats stats;
    stats.generation = gen;
    stats.best = kNegInf;
    double sum = 0.0;
    std::size_t finite = 0;
    for (const auto* c : members) {
      const double f = *c->fitness;
      if (!std::isfinite(f)) continue;
      stats.best = std::max(stats.best, f);
      sum += f;
      ++finite;
    }
    stats.mean = finite > 0 ? sum / static_cast<double>(finite) : kNegInf;

    std::stable_sort(members.begin(), members.end(), [](const auto* a, const auto* b) {
      if (*a->fitness != *b->fitness) return *a->fitness > *b->fitness;
      return a->id < b->id;
    });
    std::vector<CandidateArchitecture> elites;
    for (const auto* c : members) {
      if (static_cast<int>(elites.size()) >= cfg.elite_count()) break;
      if (!std::isfinite(*c->fitness)) break;
      elites.push_back(*c);
      stats.elite_ids.push_back(c->id);
    }
    for (const auto& e : elites) {
      if (fed_back.insert(e.id).second) space.entries.push_back({e.label(), candidate_to_wdg(e), *e.fitness});
    }

    spdlog::info("generation {}: best {:.4f}, mean {:.4f}, space size {}", gen, stats.best, stats.mean,
                 space.entries.size());
    result.history.push_back(std::move(stats));
    for (auto& c : fresh) result.archive.push_back(std::move(c));
    carried = std::move(elites);
  }

  const auto best = std::min_element(result.archive.begin(), result.archive.end(), [](const auto& a, const auto& b) {
    if (*a.fitness != *b.fitness) return *a.fitness > *b.fitness;
    return a.id < b.id;
  });
  result.best = *best;
  result.final_space = std::move(space);
  return result;
}

std::string write_candidate(const CandidateArchitecture& candidate) {
  std::string out = "# candidate " + candidate.label() + "\n";
  if (candidate.fitness) out += "# fitness=" + number_text(*candidate.fitness) + "\n";
  if (candidate.components) {
    const auto& b = *candidate.components;
    out += "# accuracy=" + number_text(b.accuracy) + " score=" + number_text(b.score) +
           " lambda=" + number_text(b.lambda) + "\n";
  }
  if (!candidate.failure.empty()) out += "# failure=" + candidate.failure + "\n";
  out += "# genealogy=";
  for (std::size_t i = 0; i < candidate.genealogy.size(); ++i) {
    if (i > 0) out += ',';
    out += candidate.genealogy[i];
  }
  out += "\n";
  out += write_layers(candidate.layers);
  return out;
}

std::string search_config_json(const SearchConfig& cfg) {
  nlohmann::json j{{"generations", cfg.generations},     {"population", cfg.population},
                   {"search_epochs", cfg.search_epochs}, {"lambda", cfg.lambda},
                   {"elitism_frac", cfg.elitism_frac},   {"mutation_prob", cfg.mutation_prob},
                   {"max_layers", cfg.max_layers},       {"seed", cfg.seed}};
  return j.dump(2) + "\n";
}

void save_search_result(const std::string& dir, const SearchResult& result, const SearchConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root / "archive");

  write_text(root / "config.json", search_config_json(cfg));

  std::string history = "generation,best,mean\n";
  for (const auto& h : result.history) {
    history += std::to_string(h.generation) + "," + number_text(h.best) + "," + number_text(h.mean) + "\n";
  }
  write_text(root / "history.csv", history);
  write_text(root / "best.arch", write_candidate(result.best));

  for (const auto& c : result.archive) {
    char name[32];
    std::snprintf(name, sizeof(name), "cand-%06llu.arch", static_cast<unsigned long long>(c.id));
    write_text(root / "archive" / name, write_candidate(c));
  }
  save_space((root / "space.json").string(), result.final_space);
}

}  // namespace wdgnas
