// SPDX-License-Identifier: Apache-2.0
//
// Architecture summary files (`.arch`): a flat, forward-ordered list of layer
// records, one per line, `<kind> [key=value ...]`. `#` starts a comment line.

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wdgnas {

enum class LayerKind {
  Start,
  End,
  Conv,
  BatchNorm,
  ReLU,
  MaxPool,
  AvgPool,
  AdaptiveAvgPool,
  Linear,
  Dropout,
  Skip,
  Flatten,
};

/// Every kind, Start and End included, in declaration order.
inline constexpr LayerKind kAllLayerKinds[] = {
    LayerKind::Start,   LayerKind::End,     LayerKind::Conv,
    LayerKind::BatchNorm, LayerKind::ReLU,  LayerKind::MaxPool,
    LayerKind::AvgPool, LayerKind::AdaptiveAvgPool, LayerKind::Linear,
    LayerKind::Dropout, LayerKind::Skip,    LayerKind::Flatten,
};

/// Lowercase file spelling (`conv`, `batchnorm`, ...; `start`/`end` for the markers).
std::string_view kind_name(LayerKind kind);
std::optional<LayerKind> kind_from_name(std::string_view name);

enum class Param {
  KernelSize,
  Stride,
  Padding,
  OutChannels,
  OutFeatures,
  DropP,
  OutputSize,
};

/// Long descriptive name, e.g. "kernel_size". Used in messages and JSON.
std::string_view param_name(Param param);
std::optional<Param> param_from_name(std::string_view name);

/// Short key used in summary files: k, s, pad, out, p, size.
std::string_view param_key(Param param);

/// Resolves a file key (short or long spelling) for a given kind. `out` means
/// out_channels on conv and out_features on linear.
std::optional<Param> param_for_key(LayerKind kind, std::string_view key);

/// Parameters a record of this kind may carry, required ones first.
struct ParamSchema {
  std::vector<Param> required;
  std::vector<Param> optional;
};
const ParamSchema& param_schema(LayerKind kind);
bool is_param_valid_for(LayerKind kind, Param param);

struct LayerRecord {
  LayerKind kind = LayerKind::ReLU;
  std::map<Param, double> params;

  std::optional<double> get(Param param) const;
  /// Integer parameter value, or `fallback` when absent.
  int get_int(Param param, int fallback) const;

  bool operator==(const LayerRecord&) const = default;
};

struct ArchitectureSummary {
  std::string name;
  std::vector<LayerRecord> layers;

  bool operator==(const ArchitectureSummary&) const = default;
};

struct Violation {
  std::size_t layer_index = 0;
  std::string message;

  bool operator==(const Violation&) const = default;
};

/// Parses summary-file text. Throws ParseError (with line number) on syntax
/// errors, unknown kinds, parameters invalid for a kind, and empty input.
ArchitectureSummary parse_summary(std::string_view text, std::string name = {});

/// Canonical form: one layer per line, parameters sorted by file key,
/// numbers in shortest round-trip decimal form.
std::string write_summary(const ArchitectureSummary& summary);
std::string write_layers(const std::vector<LayerRecord>& layers);
std::string format_layer(const LayerRecord& layer);

/// Empty iff every record invariant holds. Never throws.
std::vector<Violation> validate_summary(const ArchitectureSummary& summary);
std::vector<Violation> validate_layers(const std::vector<LayerRecord>& layers);

/// Reads a `.arch` file; the summary is named after the file stem.
ArchitectureSummary load_summary_file(const std::string& path);
void save_summary_file(const std::string& path, const ArchitectureSummary& summary);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

}  // namespace wdgnas
