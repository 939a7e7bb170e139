// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/netrt/train.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "wdgnas/errors.hpp"

namespace wdgnas {

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("epochs must be ≥ 1");
  if (batch_size < 1) throw UsageError("batch_size must be ≥ 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("momentum must be in [0,1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw UsageError("weight_decay must be ≥ 0");
  if (cutout_size < 0) throw UsageError("cutout_size must be ≥ 0");
}

double cosine_lr(double lr0, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return lr0;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * t));
}

SgdMomentum::SgdMomentum(const NetworkPlan& plan, const Params& params, double momentum, double weight_decay)
    : plan_(&plan), momentum_(momentum), weight_decay_(weight_decay), velocity_(zeros_like(params)) {}

void SgdMomentum::step(Params& params, Params& grads, double lr) {
  std::vector<std::vector<double>*> vs, gs;
  for_each_tensor(*plan_, velocity_, [&](const TensorRef& t) { vs.push_back(t.values); });
  for_each_tensor(*plan_, grads, [&](const TensorRef& t) { gs.push_back(t.values); });
  std::size_t k = 0;
  for_each_tensor(*plan_, params, [&](const TensorRef& t) {
    const std::size_t idx = k++;
    if (!t.trainable) return;
    auto& w = *t.values;
    auto& v = *vs[idx];
    const auto& g = *gs[idx];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] + (g[i] + weight_decay_ * w[i]);
      w[i] -= lr * v[i];
    }
  });
}

TrainResult train(const NetworkPlan& plan, Params& params, const Dataset& train_set, const TrainConfig& cfg,
                  Rng& rng) {
  cfg.validate();
  if (train_set.size() == 0) throw UsageError("training set is empty");
  if (train_set.shape != plan.input_shape) throw UsageError("training set shape does not match the plan input");

  const std::size_t n = train_set.size();
  const std::size_t batch = std::min<std::size_t>(cfg.batch_size, n);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);
  const int hole = cfg.cutout_size > 0 ? cfg.cutout_size
                                       : std::max(1, std::max(plan.input_shape.height, plan.input_shape.width) / 4);

  SgdMomentum sgd(plan, params, cfg.momentum, cfg.weight_decay);
  Params grads = zeros_like(params);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    double lr = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      Batch b = make_batch(train_set, std::span(order).subspan(start, stop - start));
      if (cfg.cutout) {
        const std::size_t dim = plan.input_shape.size();
        for (int i = 0; i < b.inputs.batch; ++i) {
          cutout(std::span(b.inputs.sample(i), dim), plan.input_shape, hole, rng);
        }
      }
      ForwardPass pass(plan, params);
      const Tensor& logits = pass.forward(b.inputs, Mode::Train, &rng);
      LossResult loss = softmax_cross_entropy(logits, b.labels);
      if (!std::isfinite(loss.loss)) {
        throw NumericError("training diverged at step " + std::to_string(result.steps) + " (loss " +
                           std::to_string(loss.loss) + ")");
      }
      for_each_tensor(plan, grads, [](const TensorRef& t) { std::fill(t.values->begin(), t.values->end(), 0.0); });
      pass.backward(loss.grad, &grads);
      pass.update_running_stats(params);
      lr = cosine_lr(cfg.lr, result.steps, total);
      sgd.step(params, grads, lr);
      ++result.steps;
      loss_sum += loss.loss * static_cast<double>(stop - start);
      correct += static_cast<std::size_t>(loss.correct);
    }
    EpochStats stats{epoch + 1, loss_sum / static_cast<double>(n),
                     static_cast<double>(correct) / static_cast<double>(n), lr};
    spdlog::debug("epoch {}: loss {:.4f} acc {:.4f}", stats.epoch, stats.loss, stats.accuracy);
    result.history.push_back(stats);
  }
  if (!all_finite(plan, params)) throw NumericError("training produced non-finite parameters");
  return result;
}

Tensor predict_logits(const NetworkPlan& plan, const Params& params, const Dataset& dataset, int batch_size) {
  if (dataset.size() == 0) throw UsageError("dataset is empty");
  const std::size_t n = dataset.size();
  Tensor out(static_cast<int>(n), plan.output_shape());
  const std::size_t classes = plan.output_shape().size();
  std::vector<std::size_t> idx;
  ForwardPass pass(plan, params);
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch_size));
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = make_batch(dataset, idx);
    const Tensor& logits = pass.forward(b.inputs, Mode::Eval);
    std::copy(logits.data.begin(), logits.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(start * classes));
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw UsageError("prediction and label counts differ");
  if (labels.empty()) throw UsageError("no labels to score");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double evaluate(const NetworkPlan& plan, const Params& params, const Dataset& dataset) {
  const auto predicted = argmax_rows(predict_logits(plan, params, dataset));
  return accuracy(predicted, dataset.labels);
}

}  // namespace wdgnas
