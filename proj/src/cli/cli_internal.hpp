// SPDX-License-Identifier: Apache-2.0
//
// Helpers shared by the command implementations and the argument front end.

#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "wdgnas/cli.hpp"
#include "wdgnas/netrt/params.hpp"
#include "wdgnas/netrt/plan.hpp"

namespace wdgnas::cli {

/// Throws UsageError when `out` already holds a manifest or `sentinel` and
/// `overwrite` is false; creates the directory otherwise. Empty `out` is a no-op.
void prepare_output(const std::string& out, bool overwrite, const char* sentinel);
void write_manifest(const std::string& out, const std::string& command, const nlohmann::json& options);

nlohmann::json to_json(const DatasetOptions& d);
nlohmann::json to_json(const SplitOptions& s);
nlohmann::json to_json(const EstimatorConfig& e);
nlohmann::json to_json(const TrainConfig& t);

/// build-space on already loaded data; writes nothing.
BuildSpaceResult build_space_with(const BuildSpaceOptions& opts, const TrainTest& data);

TrainReport train_and_evaluate(const std::vector<LayerRecord>& layers, const TrainTest& data,
                               const TrainConfig& cfg, std::uint64_t seed, Tensor* test_logits,
                               NetworkPlan* plan_out, Params* params_out);

}  // namespace wdgnas::cli
