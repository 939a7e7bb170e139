// SPDX-License-Identifier: Apache-2.0
//
// Compilation of layer summaries into executable operation sequences with
// resolved shapes.

#pragma once

#include <string>
#include <vector>

#include "wdgnas/candidate.hpp"
#include "wdgnas/tensor.hpp"

namespace wdgnas {

enum class OpKind { Conv, BatchNorm, ReLU, MaxPool, AvgPool, AdaptiveAvgPool, Linear, Dropout, Flatten, Residual };

const char* op_name(OpKind kind);

struct Op {
  OpKind kind = OpKind::ReLU;
  Shape in;
  Shape out;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  double drop_p = 0.0;
  /// Candidate layer this op came from; -1 for inserted ops.
  int layer = -1;
  /// Residual only: y = body(x) + shortcut(x). An empty shortcut is identity.
  std::vector<Op> body;
  std::vector<Op> shortcut;

  /// Number of trainable scalars, including nested ops.
  std::size_t parameter_count() const;
};

struct NetworkPlan {
  std::vector<Op> ops;
  Shape input_shape;
  int num_classes = 0;
  /// Human-readable record of elisions and insertions.
  std::vector<std::string> notes;

  Shape output_shape() const { return ops.empty() ? input_shape : ops.back().out; }
  std::size_t parameter_count() const;
  /// One line per op, nested ops indented.
  std::string describe() const;
};

/// Throws CompileError (with the offending layer index where one exists) or
/// UsageError for a non-positive shape or class count.
NetworkPlan compile_plan(const CandidateArchitecture& candidate, Shape input_shape, int num_classes);
NetworkPlan compile_layers(const std::vector<LayerRecord>& layers, Shape input_shape, int num_classes);

}  // namespace wdgnas
