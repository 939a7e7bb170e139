// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/wdg.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wdgnas/errors.hpp"

namespace wdgnas {

using json = nlohmann::json;

namespace {

LayerKind kind_or_throw(std::string_view name) {
  const auto kind = kind_from_name(name);
  if (!kind) throw DataError("unknown layer kind '" + std::string(name) + "'");
  return *kind;
}

std::string fixed3(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", p);
  return buf;
}

}  // namespace

std::string CandidateArchitecture::label() const {
  return "g" + std::to_string(generation) + "-c" + std::to_string(id);
}

CandidateArchitecture candidate_from_layers(std::vector<LayerRecord> layers, const std::string& source) {
  CandidateArchitecture c;
  c.genealogy.assign(layers.size(), source);
  c.sampled_kinds.reserve(layers.size());
  for (const auto& l : layers) c.sampled_kinds.push_back(l.kind);
  c.layers = std::move(layers);
  return c;
}

Wdg Wdg::from_counts(std::set<LayerKind> nodes, EdgeCounts edges, HiddenCounts hidden) {
  for (const auto& [edge, count] : edges) {
    if (!nodes.contains(edge.first) || !nodes.contains(edge.second)) {
      throw DataError("edge references a kind that is not a node");
    }
    if (edge.second == LayerKind::Start) throw DataError("start node cannot have incoming edges");
    if (edge.first == LayerKind::End) throw DataError("end node cannot have outgoing edges");
    if (count == 0) throw DataError("edge counts must be positive");
  }
  for (const auto& [node, params] : hidden) {
    if (!nodes.contains(node)) throw DataError("hidden state for a kind that is not a node");
    for (const auto& [param, values] : params) {
      if (values.empty()) throw DataError("empty hidden-state counts");
      for (const auto& [value, count] : values) {
        if (count == 0) throw DataError("hidden-state counts must be positive");
      }
    }
  }
  Wdg g;
  g.nodes_ = std::move(nodes);
  g.edge_counts_ = std::move(edges);
  g.hidden_counts_ = std::move(hidden);
  return g;
}

std::uint64_t Wdg::row_total(LayerKind from) const {
  std::uint64_t total = 0;
  for (auto it = edge_counts_.lower_bound({from, LayerKind::Start});
       it != edge_counts_.end() && it->first.first == from; ++it) {
    total += it->second;
  }
  return total;
}

bool Wdg::has_outgoing(LayerKind kind) const { return contains(kind) && row_total(kind) > 0; }

double Wdg::edge_prob(LayerKind from, LayerKind to) const {
  if (!contains(from)) throw LookupError("unknown node '" + std::string(kind_name(from)) + "'");
  const auto it = edge_counts_.find({from, to});
  if (it == edge_counts_.end()) return 0.0;
  return static_cast<double>(it->second) / static_cast<double>(row_total(from));
}

KindDistribution Wdg::transitions(LayerKind from) const {
  if (!contains(from)) throw LookupError("unknown node '" + std::string(kind_name(from)) + "'");
  const double total = static_cast<double>(row_total(from));
  KindDistribution row;
  for (auto it = edge_counts_.lower_bound({from, LayerKind::Start});
       it != edge_counts_.end() && it->first.first == from; ++it) {
    row.support.emplace_back(it->first.second, static_cast<double>(it->second) / total);
  }
  return row;
}

ValueDistribution Wdg::inner_state_dist(LayerKind node, Param param) const {
  if (!contains(node)) throw LookupError("unknown node '" + std::string(kind_name(node)) + "'");
  const ValueCounts* counts = nullptr;
  if (const auto node_it = hidden_counts_.find(node); node_it != hidden_counts_.end()) {
    if (const auto it = node_it->second.find(param); it != node_it->second.end()) counts = &it->second;
  }
  if (counts == nullptr) {
    throw LookupError("parameter absent: " + std::string(param_name(param)) + " at " +
                      std::string(kind_name(node)));
  }
  std::uint64_t total = 0;
  for (const auto& [value, count] : *counts) total += count;
  ValueDistribution dist;
  for (const auto& [value, count] : *counts) {
    dist.support.emplace_back(value, static_cast<double>(count) / static_cast<double>(total));
  }
  return dist;
}

std::vector<Param> Wdg::hidden_params(LayerKind node) const {
  std::vector<Param> out;
  const auto it = hidden_counts_.find(node);
  if (it == hidden_counts_.end()) return out;
  for (const auto& [param, values] : it->second) out.push_back(param);
  return out;
}

Wdg build_wdg_from_layers(const std::vector<LayerRecord>& layers) {
  const auto violations = validate_layers(layers);
  if (!violations.empty()) {
    std::string msg = "invalid summary:";
    for (const auto& v : violations) msg += " [layer " + std::to_string(v.layer_index) + "] " + v.message + ";";
    throw DataError(msg);
  }

  Wdg g;
  g.nodes_ = {LayerKind::Start, LayerKind::End};
  LayerKind previous = LayerKind::Start;
  for (const auto& layer : layers) {
    g.nodes_.insert(layer.kind);
    ++g.edge_counts_[{previous, layer.kind}];
    for (const auto& [param, value] : layer.params) ++g.hidden_counts_[layer.kind][param][value];
    previous = layer.kind;
  }
  ++g.edge_counts_[{previous, LayerKind::End}];
  return g;
}

Wdg build_wdg(const ArchitectureSummary& summary) { return build_wdg_from_layers(summary.layers); }

Wdg candidate_to_wdg(const CandidateArchitecture& candidate) {
  if (candidate.layers.empty()) throw UsageError("cannot build a graph from an empty candidate");
  return build_wdg_from_layers(candidate.layers);
}

std::string export_dot(const Wdg& wdg, std::string_view graph_name) {
  std::ostringstream os;
  os << "digraph \"" << graph_name << "\" {\n";
  os << "  rankdir=TB;\n";
  os << "  node [shape=box, style=rounded, fontname=\"Helvetica\"];\n";
  for (LayerKind kind : wdg.nodes()) {
    std::string label(kind_name(kind));
    for (Param param : wdg.hidden_params(kind)) {
      label += "\\n" + std::string(param_name(param)) + ":";
      for (const auto& [value, p] : wdg.inner_state_dist(kind, param).support) {
        label += " " + format_number(value) + " (" + fixed3(p) + ")";
      }
    }
    os << "  \"" << kind_name(kind) << "\" [label=\"" << label << "\"";
    if (kind == LayerKind::Start || kind == LayerKind::End) os << ", shape=ellipse";
    os << "];\n";
  }
  for (const auto& [edge, count] : wdg.edge_counts()) {
    const double p = wdg.edge_prob(edge.first, edge.second);
    if (p <= 0.0) continue;
    os << "  \"" << kind_name(edge.first) << "\" -> \"" << kind_name(edge.second) << "\" [label=\""
       << fixed3(p) << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

namespace {

json wdg_to_json(const Wdg& wdg) {
  json j;
  j["nodes"] = json::array();
  for (LayerKind kind : wdg.nodes()) j["nodes"].push_back(std::string(kind_name(kind)));
  j["edge_counts"] = json::array();
  for (const auto& [edge, count] : wdg.edge_counts()) {
    j["edge_counts"].push_back(
        {{"from", std::string(kind_name(edge.first))}, {"to", std::string(kind_name(edge.second))}, {"count", count}});
  }
  j["hidden_counts"] = json::object();
  for (const auto& [node, params] : wdg.hidden_counts()) {
    json& jn = j["hidden_counts"][std::string(kind_name(node))];
    for (const auto& [param, values] : params) {
      json arr = json::array();
      for (const auto& [value, count] : values) arr.push_back(json::array({value, count}));
      jn[std::string(param_name(param))] = std::move(arr);
    }
  }
  return j;
}

Wdg wdg_from_json(const json& j) {
  std::set<LayerKind> nodes;
  for (const auto& n : j.at("nodes")) nodes.insert(kind_or_throw(n.get<std::string>()));
  Wdg::EdgeCounts edges;
  for (const auto& e : j.at("edge_counts")) {
    edges[{kind_or_throw(e.at("from").get<std::string>()), kind_or_throw(e.at("to").get<std::string>())}] =
        e.at("count").get<std::uint64_t>();
  }
  Wdg::HiddenCounts hidden;
  for (const auto& [node_name, params] : j.at("hidden_counts").items()) {
    const LayerKind node = kind_or_throw(node_name);
    for (const auto& [pname, values] : params.items()) {
      const auto param = param_from_name(pname);
      if (!param) throw DataError("unknown parameter '" + pname + "'");
      for (const auto& pair : values) {
        hidden[node][*param][pair.at(0).get<double>()] = pair.at(1).get<std::uint64_t>();
      }
    }
  }
  return Wdg::from_counts(std::move(nodes), std::move(edges), std::move(hidden));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string serialize_wdg(const Wdg& wdg) { return wdg_to_json(wdg).dump(2) + "\n"; }

Wdg deserialize_wdg(std::string_view text) {
  try {
    return wdg_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed graph JSON: ") + e.what());
  }
}

void SearchSpace::validate() const {
  if (entries.empty()) throw UsageError("search space is empty");
  for (const auto& e : entries) {
    if (!std::isfinite(e.fitness)) throw UsageError("search-space entry '" + e.name + "' has non-finite fitness");
  }
}

std::string serialize_space(const SearchSpace& space) {
  json j;
  j["entries"] = json::array();
  for (const auto& e : space.entries) {
    j["entries"].push_back({{"name", e.name}, {"fitness", e.fitness}, {"graph", wdg_to_json(e.graph)}});
  }
  return j.dump(2) + "\n";
}

SearchSpace deserialize_space(std::string_view text) {
  SearchSpace space;
  try {
    const json j = json::parse(text);
    for (const auto& e : j.at("entries")) {
      space.entries.push_back({e.at("name").get<std::string>(), wdg_from_json(e.at("graph")),
                               e.at("fitness").get<double>()});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed search-space JSON: ") + e.what());
  }
  return space;
}

void save_space(const std::string& path, const SearchSpace& space) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << serialize_space(space);
}

SearchSpace load_space(const std::string& path) { return deserialize_space(read_file(path)); }

}  // namespace wdgnas
