// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wdgnas/netrt/plan.hpp"
#include "wdgnas/random.hpp"

namespace wdgnas {

/// Tensors of one op. Conv weights are (out, in, k, k); linear weights (out, in).
struct OpParams {
  std::vector<double> weight;
  std::vector<double> bias;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  std::vector<OpParams> body;
  std::vector<OpParams> shortcut;
};

/// Parallel to NetworkPlan::ops. Also used as the gradient container.
struct Params {
  std::vector<OpParams> ops;
};

/// Kaiming normal weights (std = sqrt(2 / fan_in)), zero biases, batch-norm
/// scale 1 and shift 0, running statistics (0, 1).
Params init_params(const NetworkPlan& plan, Rng& rng);

/// Same layout as `params` filled with zeros.
Params zeros_like(const Params& params);

struct TensorRef {
  std::string name;
  std::vector<int> dims;
  std::vector<double>* values;
  /// false for batch-norm running statistics.
  bool trainable;
};

/// Visits every tensor in a fixed order with a dotted name such as
/// "ops.3.body.0.weight".
void for_each_tensor(const NetworkPlan& plan, Params& params, const std::function<void(const TensorRef&)>& fn);

bool all_finite(const NetworkPlan& plan, const Params& params);

/// Writes `<dir>/params.bin` (little-endian float32, tensors back to back) and
/// `<dir>/params.manifest` (one "name float32 d0xd1..." line per tensor).
void save_checkpoint(const std::string& dir, const NetworkPlan& plan, const Params& params);
/// Throws DataError when the manifest does not match `plan`.
Params load_checkpoint(const std::string& dir, const NetworkPlan& plan);

}  // namespace wdgnas
