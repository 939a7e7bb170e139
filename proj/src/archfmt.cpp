// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/archfmt.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include "wdgnas/errors.hpp"

namespace wdgnas {
namespace {

struct KindEntry {
  LayerKind kind;
  std::string_view name;
};

constexpr std::array<KindEntry, 12> kKindNames{{
    {LayerKind::Start, "start"},
    {LayerKind::End, "end"},
    {LayerKind::Conv, "conv"},
    {LayerKind::BatchNorm, "batchnorm"},
    {LayerKind::ReLU, "relu"},
    {LayerKind::MaxPool, "maxpool"},
    {LayerKind::AvgPool, "avgpool"},
    {LayerKind::AdaptiveAvgPool, "adaptiveavgpool"},
    {LayerKind::Linear, "linear"},
    {LayerKind::Dropout, "dropout"},
    {LayerKind::Skip, "skip"},
    {LayerKind::Flatten, "flatten"},
}};

struct ParamEntry {
  Param param;
  std::string_view name;
  std::string_view key;
};

constexpr std::array<ParamEntry, 7> kParamNames{{
    {Param::KernelSize, "kernel_size", "k"},
    {Param::Stride, "stride", "s"},
    {Param::Padding, "padding", "pad"},
    {Param::OutChannels, "out_channels", "out"},
    {Param::OutFeatures, "out_features", "out"},
    {Param::DropP, "drop_p", "p"},
    {Param::OutputSize, "output_size", "size"},
}};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_number(std::string_view text) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (begin != end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

bool is_integral(double v) { return std::floor(v) == v; }

}  // namespace

std::string_view kind_name(LayerKind kind) {
  for (const auto& e : kKindNames) {
    if (e.kind == kind) return e.name;
  }
  return "?";
}

std::optional<LayerKind> kind_from_name(std::string_view name) {
  for (const auto& e : kKindNames) {
    if (e.name == name) return e.kind;
  }
  return std::nullopt;
}

std::string_view param_name(Param param) {
  for (const auto& e : kParamNames) {
    if (e.param == param) return e.name;
  }
  return "?";
}

std::optional<Param> param_from_name(std::string_view name) {
  for (const auto& e : kParamNames) {
    if (e.name == name) return e.param;
  }
  return std::nullopt;
}

std::string_view param_key(Param param) {
  for (const auto& e : kParamNames) {
    if (e.param == param) return e.key;
  }
  return "?";
}

const ParamSchema& param_schema(LayerKind kind) {
  static const ParamSchema kNone{};
  static const ParamSchema kConv{{Param::KernelSize, Param::OutChannels},
                                 {Param::Stride, Param::Padding}};
  static const ParamSchema kPool{{Param::KernelSize}, {Param::Stride, Param::Padding}};
  static const ParamSchema kAdaptive{{Param::OutputSize}, {}};
  static const ParamSchema kLinear{{Param::OutFeatures}, {}};
  static const ParamSchema kDropout{{Param::DropP}, {}};
  switch (kind) {
    case LayerKind::Conv: return kConv;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool: return kPool;
    case LayerKind::AdaptiveAvgPool: return kAdaptive;
    case LayerKind::Linear: return kLinear;
    case LayerKind::Dropout: return kDropout;
    default: return kNone;
  }
}

bool is_param_valid_for(LayerKind kind, Param param) {
  const auto& schema = param_schema(kind);
  return std::find(schema.required.begin(), schema.required.end(), param) != schema.required.end() ||
         std::find(schema.optional.begin(), schema.optional.end(), param) != schema.optional.end();
}

std::optional<Param> param_for_key(LayerKind kind, std::string_view key) {
  for (const auto& e : kParamNames) {
    if ((e.key == key || e.name == key) && is_param_valid_for(kind, e.param)) return e.param;
  }
  return std::nullopt;
}

std::optional<double> LayerRecord::get(Param param) const {
  const auto it = params.find(param);
  if (it == params.end()) return std::nullopt;
  return it->second;
}

int LayerRecord::get_int(Param param, int fallback) const {
  const auto v = get(param);
  return v ? static_cast<int>(*v) : fallback;
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) return std::to_string(value);
  return std::string(buf.data(), ptr);
}

ArchitectureSummary parse_summary(std::string_view text, std::string name) {
  ArchitectureSummary summary;
  summary.name = std::move(name);

  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    line = trim(line);
    if (line.empty() || line.front() == '#') continue;

    std::vector<std::string_view> tokens;
    while (!line.empty()) {
      const auto sep = line.find_first_of(" \t");
      tokens.push_back(line.substr(0, sep));
      line = sep == std::string_view::npos ? std::string_view{} : trim(line.substr(sep));
    }

    const auto kind = kind_from_name(tokens.front());
    if (!kind || *kind == LayerKind::Start || *kind == LayerKind::End) {
      throw ParseError(line_no, "unknown layer kind '" + std::string(tokens.front()) + "'");
    }

    LayerRecord record{*kind, {}};
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string_view::npos || eq == 0 || eq + 1 == tokens[i].size()) {
        throw ParseError(line_no, "expected key=value, got '" + std::string(tokens[i]) + "'");
      }
      const auto key = tokens[i].substr(0, eq);
      const auto param = param_for_key(*kind, key);
      if (!param) {
        throw ParseError(line_no, "parameter '" + std::string(key) + "' is not valid for " +
                                      std::string(kind_name(*kind)));
      }
      const auto value = parse_number(tokens[i].substr(eq + 1));
      if (!value) {
        throw ParseError(line_no, "invalid number '" + std::string(tokens[i].substr(eq + 1)) + "'");
      }
      if (!record.params.emplace(*param, *value).second) {
        throw ParseError(line_no, "duplicate parameter '" + std::string(key) + "'");
      }
    }
    summary.layers.push_back(std::move(record));
  }

  if (summary.layers.empty()) throw ParseError(0, "empty summary");
  return summary;
}

std::string format_layer(const LayerRecord& layer) {
  std::vector<std::pair<std::string_view, double>> entries;
  entries.reserve(layer.params.size());
  for (const auto& [param, value] : layer.params) entries.emplace_back(param_key(param), value);
  std::sort(entries.begin(), entries.end());

  std::string out(kind_name(layer.kind));
  for (const auto& [key, value] : entries) {
    out += ' ';
    out += key;
    out += '=';
    out += format_number(value);
  }
  return out;
}

std::string write_layers(const std::vector<LayerRecord>& layers) {
  std::string out;
  for (const auto& layer : layers) {
    out += format_layer(layer);
    out += '\n';
  }
  return out;
}

std::string write_summary(const ArchitectureSummary& summary) { return write_layers(summary.layers); }

std::vector<Violation> validate_layers(const std::vector<LayerRecord>& layers) {
  std::vector<Violation> out;
  if (layers.empty()) {
    out.push_back({0, "summary is empty"});
    return out;
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    auto report = [&](std::string msg) { out.push_back({i, std::move(msg)}); };

    if (layer.kind == LayerKind::Start || layer.kind == LayerKind::End) {
      report("start/end markers are not allowed in summaries");
      continue;
    }
    for (Param required : param_schema(layer.kind).required) {
      if (!layer.params.contains(required)) {
        report(std::string(kind_name(layer.kind)) + " requires " + std::string(param_name(required)));
      }
    }
    for (const auto& [param, value] : layer.params) {
      const std::string name(param_name(param));
      if (!is_param_valid_for(layer.kind, param)) {
        report(name + " is not valid for " + std::string(kind_name(layer.kind)));
        continue;
      }
      if (!std::isfinite(value)) {
        report(name + " must be finite");
        continue;
      }
      if (param == Param::DropP) {
        if (!(value > 0.0 && value < 1.0)) report("drop_p must be in (0,1)");
        continue;
      }
      if (!is_integral(value)) {
        report(name + " must be an integer");
        continue;
      }
      switch (param) {
        case Param::Padding:
          if (value < 0) report("padding must be ≥ 0");
          break;
        case Param::KernelSize:
          if (value < 1) {
            report("kernel_size must be ≥ 1");
          } else if (layer.kind == LayerKind::Conv) {
            if (static_cast<long long>(value) % 2 == 0) report("kernel_size must be odd");
          } else if (static_cast<long long>(value) % 2 == 0 && value != 2) {
            report("kernel_size must be odd or 2");
          }
          break;
        default:
          if (value < 1) report(name + " must be ≥ 1");
          break;
      }
    }
  }
  return out;
}

std::vector<Violation> validate_summary(const ArchitectureSummary& summary) {
  return validate_layers(summary.layers);
}

ArchitectureSummary load_summary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open summary file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_summary(ss.str(), std::filesystem::path(path).stem().string());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
}

void save_summary_file(const std::string& path, const ArchitectureSummary& summary) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write summary file " + path);
  out << write_summary(summary);
}

}  // namespace wdgnas
