// SPDX-License-Identifier: Apache-2.0
//
// Evolutionary macro-search. Architectures are generated layer by layer: the
// parent of each layer is drawn by ranked roulette from the graphs that know
// the previous layer kind, the next kind and its parameters are drawn by
// fitness-proportionate selection from that parent, and sampled convolutions
// may mutate into skip connections. Elites survive unchanged and are fed back
// into the sampling space.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wdgnas/candidate.hpp"
#include "wdgnas/errors.hpp"
#include "wdgnas/random.hpp"
#include "wdgnas/wdg.hpp"

namespace wdgnas {

struct SearchConfig {
  int generations = 10;
  int population = 10;
  int search_epochs = 4;
  double lambda = 0.75;
  double elitism_frac = 0.15;
  double mutation_prob = 0.5;
  int max_layers = 64;
  std::uint64_t seed = 0;

  /// Throws UsageError on any out-of-range field.
  void validate() const;
  int elite_count() const;
};

/// Indices of the entries whose graph has `last_kind` with at least one
/// outgoing edge. An empty result tells the caller to end the architecture.
std::vector<std::size_t> parent_pool(const SearchSpace& space, LayerKind last_kind);

struct PoolMember {
  std::string_view name;
  double fitness = 0.0;
};

/// Linear-rank selection probabilities, in input order. Members are ranked
/// ascending by (fitness, name, position); rank r gets weight r.
std::vector<double> rank_probabilities(std::span<const PoolMember> pool);

/// Position (in `pool`) of the selected member.
std::size_t ranked_roulette(std::span<const PoolMember> pool, Rng& rng);

/// Draws a value with probability equal to its weight.
template <typename Value>
Value fps_sample(const Distribution<Value>& dist, Rng& rng) {
  if (dist.empty()) throw UsageError("cannot sample from an empty distribution");
  std::vector<double> weights;
  weights.reserve(dist.support.size());
  for (const auto& entry : dist.support) weights.push_back(entry.second);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  return dist.support[pick(rng)].first;
}

/// Conv layers turn into a parameterless Skip with probability `mutation_prob`;
/// every other layer is returned unchanged.
LayerRecord maybe_mutate(const LayerRecord& layer, double mutation_prob, Rng& rng);

inline constexpr std::string_view kNoParent = "<none>";

struct SampledLayer {
  /// nullopt marks End.
  std::optional<LayerRecord> layer;
  LayerKind sampled_kind = LayerKind::End;
  std::string source;

  bool is_end() const { return !layer.has_value(); }
};

SampledLayer sample_next_layer(const SearchSpace& space, LayerKind last_kind, const SearchConfig& cfg,
                               Rng& rng);

/// Samples from Start until End or `max_layers`. A first draw of End is
/// retried up to 10 times before throwing DataError.
CandidateArchitecture generate_architecture(const SearchSpace& space, const SearchConfig& cfg, Rng& rng);

/// Assigns fitness to a freshly generated batch. `carried` holds this
/// generation's elites, which already carry fitness; population-relative
/// evaluators may use them for normalization but must not modify them.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual void evaluate(std::span<CandidateArchitecture> fresh,
                        std::span<const CandidateArchitecture> carried) = 0;
};

/// Adapts a per-candidate fitness function. Exceptions become -inf.
class FunctionEvaluator final : public Evaluator {
 public:
  explicit FunctionEvaluator(std::function<double(const CandidateArchitecture&)> fn) : fn_(std::move(fn)) {}
  void evaluate(std::span<CandidateArchitecture> fresh, std::span<const CandidateArchitecture> carried) override;

 private:
  std::function<double(const CandidateArchitecture&)> fn_;
};

struct GenerationStats {
  int generation = 0;
  double best = 0.0;
  double mean = 0.0;
  std::vector<std::uint64_t> elite_ids;
};

struct SearchResult {
  CandidateArchitecture best;
  std::vector<GenerationStats> history;
  /// Every freshly evaluated candidate, in creation order.
  std::vector<CandidateArchitecture> archive;
  /// Sampling space after elite feedback.
  SearchSpace final_space;
};

SearchResult evolve(SearchSpace space, const SearchConfig& cfg, Evaluator& evaluator);

/// Summary text with `#` annotations (id, generation, fitness, genealogy).
std::string write_candidate(const CandidateArchitecture& candidate);

/// Run directory: config.json, history.csv, best.arch, archive/*.arch.
void save_search_result(const std::string& dir, const SearchResult& result, const SearchConfig& cfg);

std::string search_config_json(const SearchConfig& cfg);

}  // namespace wdgnas
