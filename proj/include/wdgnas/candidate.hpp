// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wdgnas/archfmt.hpp"

namespace wdgnas {

/// Raw and normalized components behind a mixed fitness value.
struct FitnessBreakdown {
  double accuracy = 0.0;       // O: partial-validation accuracy
  double score = 0.0;          // s: Jacobian correlation score
  double accuracy_norm = 0.0;  // O_norm
  double score_norm = 0.0;     // s_norm
  double lambda = 0.0;
  double fitness = 0.0;        // f = (1 - lambda) * O_norm + lambda * s_norm
};

/// A generated layer sequence plus its sampling history.
struct CandidateArchitecture {
  std::vector<LayerRecord> layers;
  /// Source-model (parent) name for every layer.
  std::vector<std::string> genealogy;
  /// Kind drawn from the parent's transitions, before Conv->Skip mutation.
  std::vector<LayerKind> sampled_kinds;

  std::uint64_t id = 0;
  int generation = 0;
  /// Seed of the candidate's private evaluation stream.
  std::uint64_t eval_seed = 0;

  std::optional<double> fitness;
  std::optional<FitnessBreakdown> components;
  std::string failure;

  /// Candidate label used as its space-entry name once it becomes an elite.
  std::string label() const;
};

/// Wraps a plain layer list (e.g. a parsed summary) as a candidate.
CandidateArchitecture candidate_from_layers(std::vector<LayerRecord> layers,
                                            const std::string& source = "input");

}  // namespace wdgnas
