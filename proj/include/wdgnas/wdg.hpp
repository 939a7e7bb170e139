// SPDX-License-Identifier: Apache-2.0
//
// Weighted directed graphs with hidden properties. Nodes are layer kinds,
// edge weights are first-order transition probabilities between consecutive
// layers and every node carries per-parameter value distributions. Only the
// integer counts are stored; probabilities are always derived from them.

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wdgnas/archfmt.hpp"
#include "wdgnas/candidate.hpp"

namespace wdgnas {

template <typename Value>
struct Distribution {
  std::vector<std::pair<Value, double>> support;

  bool empty() const { return support.empty(); }

  double probability(const Value& value) const {
    for (const auto& [v, p] : support) {
      if (v == value) return p;
    }
    return 0.0;
  }

  double total() const {
    double sum = 0.0;
    for (const auto& entry : support) sum += entry.second;
    return sum;
  }
};

using KindDistribution = Distribution<LayerKind>;
using ValueDistribution = Distribution<double>;

class Wdg {
 public:
  using Edge = std::pair<LayerKind, LayerKind>;
  using EdgeCounts = std::map<Edge, std::uint64_t>;
  using ValueCounts = std::map<double, std::uint64_t>;
  using HiddenCounts = std::map<LayerKind, std::map<Param, ValueCounts>>;

  Wdg() = default;

  /// Rebuilds a graph from raw counts (deserialization, tests). Validates the
  /// start/end invariants and that every counted kind is a node.
  static Wdg from_counts(std::set<LayerKind> nodes, EdgeCounts edges, HiddenCounts hidden);

  const std::set<LayerKind>& nodes() const { return nodes_; }
  const EdgeCounts& edge_counts() const { return edge_counts_; }
  const HiddenCounts& hidden_counts() const { return hidden_counts_; }

  bool contains(LayerKind kind) const { return nodes_.contains(kind); }
  bool has_outgoing(LayerKind kind) const;

  /// e(from, to) = C(from, to) / sum_k C(from, k); 0 for absent edges.
  /// Throws LookupError if `from` is not a node.
  double edge_prob(LayerKind from, LayerKind to) const;

  /// Outgoing transition row of `from`, ordered by successor kind.
  KindDistribution transitions(LayerKind from) const;

  /// Value distribution of one hidden parameter. Throws LookupError if the
  /// node is absent or the parameter was never observed at it.
  ValueDistribution inner_state_dist(LayerKind node, Param param) const;

  /// Parameters observed at `node`, in enum order.
  std::vector<Param> hidden_params(LayerKind node) const;

  std::uint64_t row_total(LayerKind from) const;

  bool operator==(const Wdg&) const = default;

 private:
  friend Wdg build_wdg_from_layers(const std::vector<LayerRecord>& layers);

  std::set<LayerKind> nodes_;
  EdgeCounts edge_counts_;
  HiddenCounts hidden_counts_;
};

/// Builds the graph of a valid, non-empty summary. Throws DataError listing
/// the violations otherwise.
Wdg build_wdg(const ArchitectureSummary& summary);
Wdg build_wdg_from_layers(const std::vector<LayerRecord>& layers);

/// Same as build_wdg over the candidate's (post-mutation) layers.
Wdg candidate_to_wdg(const CandidateArchitecture& candidate);

/// Graphviz digraph: one node per kind, one edge per nonzero transition
/// labelled with its probability to three decimals.
std::string export_dot(const Wdg& wdg, std::string_view graph_name = "wdg");

/// JSON text with `nodes`, `edge_counts` and `hidden_counts`. Byte-stable.
std::string serialize_wdg(const Wdg& wdg);
Wdg deserialize_wdg(std::string_view text);

struct SpaceEntry {
  std::string name;
  Wdg graph;
  double fitness = 0.0;
};

/// The sampling population: one graph per source model plus its fitness.
struct SearchSpace {
  std::vector<SpaceEntry> entries;

  std::size_t size() const { return entries.size(); }
  /// Throws UsageError when empty or a fitness is NaN.
  void validate() const;
};

std::string serialize_space(const SearchSpace& space);
SearchSpace deserialize_space(std::string_view text);
void save_space(const std::string& path, const SearchSpace& space);
SearchSpace load_space(const std::string& path);

}  // namespace wdgnas
