// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch SGD with momentum, L2 weight decay and a cosine learning-rate
// schedule, plus accuracy evaluation.

#pragma once

#include <cstddef>
#include <vector>

#include "wdgnas/data.hpp"
#include "wdgnas/netrt/network.hpp"

namespace wdgnas {

struct TrainConfig {
  int epochs = 1;
  int batch_size = 96;
  double lr = 0.025;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  bool cutout = false;
  /// 0 selects a quarter of the image side.
  int cutout_size = 0;

  /// Throws UsageError on non-positive fields.
  void validate() const;
};

/// lr0 / 2 * (1 + cos(pi * step / total_steps)).
double cosine_lr(double lr0, std::size_t step, std::size_t total_steps);

/// Classic SGD: v = momentum * v + (g + wd * w); w -= lr * v. Batch-norm
/// running statistics are not touched.
class SgdMomentum {
 public:
  SgdMomentum(const NetworkPlan& plan, const Params& params, double momentum, double weight_decay);
  void step(Params& params, Params& grads, double lr);

 private:
  const NetworkPlan* plan_;
  double momentum_;
  double weight_decay_;
  Params velocity_;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  /// Running train-mode accuracy over the epoch.
  double accuracy = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t steps = 0;
};

/// Trains `params` in place. Throws NumericError naming the step on a
/// non-finite loss.
TrainResult train(const NetworkPlan& plan, Params& params, const Dataset& train_set, const TrainConfig& cfg,
                  Rng& rng);

/// Eval-mode logits for the whole dataset, (N x num_classes) in batches.
Tensor predict_logits(const NetworkPlan& plan, const Params& params, const Dataset& dataset, int batch_size = 256);

/// Fraction of argmax-correct predictions in eval mode.
double evaluate(const NetworkPlan& plan, const Params& params, const Dataset& dataset);

/// Fraction of positions where `predicted` equals `labels`.
double accuracy(std::span<const int> predicted, std::span<const int> labels);

}  // namespace wdgnas
