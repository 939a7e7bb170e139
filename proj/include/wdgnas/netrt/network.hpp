// SPDX-License-Identifier: Apache-2.0
//
// Forward and backward execution of a compiled plan.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "wdgnas/netrt/params.hpp"
#include "wdgnas/netrt/plan.hpp"
#include "wdgnas/tensor.hpp"

namespace wdgnas {

enum class Mode { Train, Eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// One forward pass with the intermediates needed to backpropagate it.
/// Parameters are read-only here; running statistics are folded in
/// explicitly with update_running_stats.
class ForwardPass {
 public:
  ForwardPass(const NetworkPlan& plan, const Params& params);
  ~ForwardPass();
  ForwardPass(ForwardPass&&) noexcept;

  /// Train mode uses batch statistics and draws dropout masks from `rng`
  /// (required when the plan contains dropout). Eval mode consumes no
  /// randomness. Throws UsageError on an input shape mismatch.
  const Tensor& forward(const Tensor& x, Mode mode, Rng* rng = nullptr);

  /// Gradient of the loss with respect to the input, given its gradient with
  /// respect to the output. Parameter gradients are accumulated into `grads`
  /// when it is non-null.
  Tensor backward(const Tensor& grad_out, Params* grads);

  /// Folds the batch statistics of the last train-mode forward into the
  /// running statistics of `params`.
  void update_running_stats(Params& params, double momentum = kBatchNormMomentum) const;

  /// ReLU on/off states and max-pool winners of the last forward. Two inputs
  /// with equal signatures lie in the same linear region of the network.
  std::vector<std::int64_t> branch_signature() const;

  /// Per-op intermediates; opaque outside the implementation.
  struct Cache;

 private:
  const NetworkPlan* plan_;
  const Params* params_;
  std::unique_ptr<std::vector<Cache>> caches_;
  Tensor output_;
};

Tensor forward(const NetworkPlan& plan, const Params& params, const Tensor& x, Mode mode, Rng* rng = nullptr);

struct LossResult {
  double loss = 0.0;  // mean over the batch
  Tensor grad;        // d loss / d logits
  int correct = 0;
};

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Row-wise argmax; ties go to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);

/// Row i is the gradient of the sum of logits with respect to input i, in
/// eval mode. Throws NumericError on non-finite entries.
Eigen::MatrixXd input_jacobian(const NetworkPlan& plan, const Params& params, const Tensor& x);

}  // namespace wdgnas
