// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "../support/finite_diff.hpp"
#include "../support/generators.hpp"
#include "wdgnas/errors.hpp"
#include "wdgnas/netrt/params.hpp"
#include "wdgnas/netrt/plan.hpp"
#include "wdgnas/netrt/train.hpp"

namespace wdgnas {
namespace {

const Shape kInput{3, 8, 8};

LayerRecord conv(int k, int out) { return {LayerKind::Conv, {{Param::KernelSize, k}, {Param::OutChannels, out}}}; }
LayerRecord pool(int k) { return {LayerKind::MaxPool, {{Param::KernelSize, k}}}; }
LayerRecord linear(int out) { return {LayerKind::Linear, {{Param::OutFeatures, out}}}; }

Tensor random_input(int batch, Shape shape, std::mt19937_64& rng) {
  Tensor x(batch, shape);
  std::normal_distribution<double> d(0.0, 1.0);
  for (double& v : x.data) v = d(rng);
  return x;
}

TEST(CompilePlan, ConvGetsFlattenAndHead) {
  const auto plan = compile_layers({conv(3, 8)}, kInput, 10);
  ASSERT_EQ(plan.ops.size(), 3u);
  EXPECT_EQ(plan.ops[0].kind, OpKind::Conv);
  EXPECT_EQ(plan.ops[0].in.channels, 3);
  EXPECT_EQ(plan.ops[0].out, (Shape{8, 8, 8}));
  EXPECT_EQ(plan.ops[1].kind, OpKind::Flatten);
  EXPECT_EQ(plan.ops[2].kind, OpKind::Linear);
  EXPECT_EQ(plan.ops[2].in.size(), 512u);
  EXPECT_EQ(plan.ops[2].out, (Shape{10, 1, 1}));
}

TEST(CompilePlan, OverReducingPoolIsElided) {
  const auto plan = compile_layers({pool(2), pool(2), pool(2), pool(2)}, kInput, 10);
  int pools = 0;
  for (const auto& op : plan.ops) pools += op.kind == OpKind::MaxPool;
  EXPECT_EQ(pools, 3);
  EXPECT_EQ(plan.ops[2].out, (Shape{3, 1, 1}));
  ASSERT_FALSE(plan.notes.empty());
  EXPECT_NE(plan.notes[0].find("layer 3"), std::string::npos);
}

TEST(CompilePlan, LinearMatchingClassesNeedsNoHead) {
  const auto plan = compile_layers({linear(10)}, kInput, 10);
  ASSERT_EQ(plan.ops.size(), 2u);
  EXPECT_EQ(plan.ops[0].kind, OpKind::Flatten);
  EXPECT_EQ(plan.ops[1].in.size(), 192u);
  EXPECT_EQ(plan.ops[1].layer, 0);
}

TEST(CompilePlan, SkipWrapsPreviousOp) {
  const auto same = compile_layers({conv(3, 3), {LayerKind::Skip, {}}}, kInput, 10);
  ASSERT_EQ(same.ops[0].kind, OpKind::Residual);
  EXPECT_TRUE(same.ops[0].shortcut.empty());

  const auto widen = compile_layers({conv(3, 8), {LayerKind::Skip, {}}}, kInput, 10);
  ASSERT_EQ(widen.ops[0].shortcut.size(), 1u);
  EXPECT_EQ(widen.ops[0].shortcut[0].kind, OpKind::Conv);
  EXPECT_EQ(widen.ops[0].shortcut[0].kernel, 1);

  const auto shrink = compile_layers({pool(2), {LayerKind::Skip, {}}}, kInput, 10);
  ASSERT_EQ(shrink.ops[0].shortcut.size(), 1u);
  EXPECT_EQ(shrink.ops[0].shortcut[0].kind, OpKind::AdaptiveAvgPool);

  const auto leading = compile_layers({{LayerKind::Skip, {}}, {LayerKind::ReLU, {}}}, kInput, 10);
  EXPECT_EQ(leading.ops[0].kind, OpKind::ReLU);
}

TEST(CompilePlan, Errors) {
  EXPECT_THROW(compile_layers({}, kInput, 10), CompileError);
  EXPECT_THROW(compile_layers({pool(2)}, {3, 1, 1}, 10), CompileError);
  LayerRecord huge = conv(11, 4);
  huge.params[Param::Padding] = 0;
  try {
    compile_layers({{LayerKind::ReLU, {}}, huge}, kInput, 10);
    FAIL();
  } catch (const CompileError& e) {
    EXPECT_EQ(e.layer_index(), 1);
  }
  EXPECT_THROW(compile_layers({conv(3, 8)}, kInput, 0), UsageError);
}

TEST(CompilePlan, FuzzedPlansChainShapesAndDryRun) {
  std::mt19937_64 rng(4242);
  int compiled = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto layers = testing::random_summary(rng, 10).layers;
    for (auto& l : layers) {
      if (l.kind == LayerKind::Conv) l.params[Param::OutChannels] = 4;
      if (l.kind == LayerKind::Linear) l.params[Param::OutFeatures] = 16;
    }
    NetworkPlan plan;
    try {
      plan = compile_layers(layers, kInput, 10);
    } catch (const CompileError&) {
      continue;
    }
    ++compiled;
    Shape cur = kInput;
    for (const auto& op : plan.ops) {
      EXPECT_EQ(op.in, cur);
      cur = op.out;
    }
    EXPECT_EQ(cur, (Shape{10, 1, 1}));
    Rng init(trial);
    const Params params = init_params(plan, init);
    const Tensor out = forward(plan, params, random_input(1, kInput, rng), Mode::Eval);
    EXPECT_EQ(out.shape, (Shape{10, 1, 1}));
  }
  EXPECT_GT(compiled, 150);
}

TEST(InitParams, DeterministicAndScaled) {
  const auto plan = compile_layers({conv(3, 64), {LayerKind::BatchNorm, {}}}, {32, 8, 8}, 10);
  Rng a(5), b(5);
  const Params pa = init_params(plan, a);
  const Params pb = init_params(plan, b);
  EXPECT_EQ(pa.ops[0].weight, pb.ops[0].weight);
  for (double g : pa.ops[1].gamma) EXPECT_EQ(g, 1.0);
  for (double v : pa.ops[1].beta) EXPECT_EQ(v, 0.0);
  for (double v : pa.ops[0].bias) EXPECT_EQ(v, 0.0);

  const auto& w = pa.ops[0].weight;
  ASSERT_GE(w.size(), 10000u);
  double sq = 0.0;
  for (double v : w) sq += v * v;
  const double var = sq / static_cast<double>(w.size());
  const double expected = 2.0 / (32 * 9);
  EXPECT_NEAR(var, expected, 0.2 * expected);
}

TEST(Forward, IdentityLinear) {
  const auto plan = compile_layers({linear(4)}, {4, 1, 1}, 4);
  Rng rng(1);
  Params params = init_params(plan, rng);
  auto& w = params.ops[0].weight;
  std::fill(w.begin(), w.end(), 0.0);
  for (int i = 0; i < 4; ++i) w[i * 4 + i] = 1.0;
  for (int k = 0; k < 4; ++k) {
    Tensor x(1, {4, 1, 1});
    x.data[k] = 1.0;
    const Tensor y = forward(plan, params, x, Mode::Eval);
    for (int c = 0; c < 4; ++c) EXPECT_EQ(y.data[c], c == k ? 1.0 : 0.0);
  }
}

TEST(Forward, OneByOneAllOnesConv) {
  const auto plan = compile_layers({conv(1, 5)}, {3, 4, 4}, 10);
  Rng rng(2);
  Params params = init_params(plan, rng);
  std::fill(params.ops[0].weight.begin(), params.ops[0].weight.end(), 1.0);
  const double c = 0.75;
  const Tensor x(2, {3, 4, 4}, c);
  NetworkPlan conv_only;
  conv_only.input_shape = {3, 4, 4};
  conv_only.num_classes = 5;
  conv_only.ops = {plan.ops[0]};
  Params conv_params;
  conv_params.ops = {params.ops[0]};
  const Tensor y = forward(conv_only, conv_params, x, Mode::Eval);
  ASSERT_EQ(y.shape, (Shape{5, 4, 4}));
  for (double v : y.data) EXPECT_DOUBLE_EQ(v, c * 3);
}

TEST(Loss, UniformLogitsGiveLogClasses) {
  const Tensor logits(3, {10, 1, 1}, 0.37);
  const std::vector<int> labels{0, 4, 9};
  const auto r = softmax_cross_entropy(logits, labels);
  EXPECT_NEAR(r.loss, std::log(10.0), 1e-12);
  EXPECT_NEAR(r.loss, 2.3026, 1e-4);
  EXPECT_THROW(softmax_cross_entropy(logits, std::vector<int>{0, 1, 10}), UsageError);
}

TEST(InputJacobian, SingleLinearGivesColumnSums) {
  const auto plan = compile_layers({linear(3)}, {5, 1, 1}, 3);
  Rng rng(3);
  const Params params = init_params(plan, rng);
  std::mt19937_64 data(4);
  const Tensor x = random_input(4, {5, 1, 1}, data);
  const Eigen::MatrixXd jac = input_jacobian(plan, params, x);
  ASSERT_EQ(jac.rows(), 4);
  ASSERT_EQ(jac.cols(), 5);
  for (int d = 0; d < 5; ++d) {
    double col = 0.0;
    for (int c = 0; c < 3; ++c) col += params.ops[0].weight[c * 5 + d];
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(jac(i, d), col, 1e-12);
  }
}

TEST(InputJacobian, ZeroHeadGivesZeroMatrix) {
  const auto plan = compile_layers({conv(3, 4), {LayerKind::ReLU, {}}}, kInput, 10);
  Rng rng(5);
  Params params = init_params(plan, rng);
  auto& head = params.ops.back().weight;
  std::fill(head.begin(), head.end(), 0.0);
  std::mt19937_64 data(6);
  const Eigen::MatrixXd jac = input_jacobian(plan, params, random_input(3, kInput, data));
  EXPECT_EQ(jac.cwiseAbs().maxCoeff(), 0.0);
}

TEST(InputJacobian, MatchesFiniteDifferencesOnRandomPlans) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 12; ++trial) {
    const auto layers = testing::random_small_layers(rng, 5);
    NetworkPlan plan;
    try {
      plan = compile_layers(layers, {2, 5, 5}, 4);
    } catch (const CompileError&) {
      continue;
    }
    Rng init(trial);
    Params params = init_params(plan, init);
    // Non-trivial running statistics exercise the eval-mode batch norm path.
    std::mt19937_64 data(trial + 100);
    ForwardPass warm(plan, params);
    warm.forward(random_input(6, {2, 5, 5}, data), Mode::Train, &init);
    warm.update_running_stats(params, 0.5);
    const Tensor x = random_input(3, {2, 5, 5}, data);
    const auto jac = input_jacobian(plan, params, x);
    const auto fd = testing::fd_input_jacobian(plan, params, x);
    EXPECT_LE(testing::relative_error(jac, fd), 1e-4) << plan.describe();
  }
}

// Gradient of L = sum(r * logits) with respect to every trainable scalar.
void check_parameter_gradients(const NetworkPlan& plan, Params params, Mode mode, std::uint64_t seed) {
  std::mt19937_64 data(seed);
  const Tensor x = random_input(4, plan.input_shape, data);
  Tensor r(4, plan.output_shape());
  std::normal_distribution<double> nd(0.0, 1.0);
  for (double& v : r.data) v = nd(data);

  Params grads = zeros_like(params);
  Tensor dx;
  {
    Rng drop(seed);
    ForwardPass pass(plan, params);
    pass.forward(x, mode, &drop);
    dx = pass.backward(r, &grads);
  }
  auto loss = [&](const Tensor& input) {
    Rng drop(seed);
    ForwardPass pass(plan, params);
    const Tensor& y = pass.forward(input, mode, &drop);
    testing::Probe p{0.0, pass.branch_signature()};
    for (std::size_t i = 0; i < y.data.size(); ++i) p.value += r.data[i] * y.data[i];
    return p;
  };

  std::vector<std::vector<double>*> grad_tensors;
  for_each_tensor(plan, grads, [&](const TensorRef& t) { grad_tensors.push_back(t.values); });
  std::size_t k = 0;
  for_each_tensor(plan, params, [&](const TensorRef& t) {
    const auto& g = *grad_tensors[k++];
    if (!t.trainable) return;
    Eigen::VectorXd analytic(t.values->size()), numeric(t.values->size());
    for (std::size_t i = 0; i < t.values->size(); ++i) {
      const double saved = (*t.values)[i];
      numeric(i) = testing::kink_aware_derivative([&](double delta) {
        (*t.values)[i] = saved + delta;
        auto p = loss(x);
        (*t.values)[i] = saved;
        return p;
      });
      analytic(i) = g[i];
    }
    EXPECT_LE(testing::relative_error(analytic, numeric), 1e-4) << t.name << "\n" << plan.describe();
  });

  Eigen::VectorXd analytic(x.data.size()), numeric(x.data.size());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    numeric(i) = testing::kink_aware_derivative([&](double delta) {
      probe.data[i] = x.data[i] + delta;
      auto p = loss(probe);
      probe.data[i] = x.data[i];
      return p;
    });
    analytic(i) = dx.data[i];
  }
  EXPECT_LE(testing::relative_error(analytic, numeric), 1e-4) << "input\n" << plan.describe();
}

TEST(Gradients, EveryOpMatchesFiniteDifferences) {
  const Shape in{2, 5, 5};
  LayerRecord strided = conv(3, 3);
  strided.params[Param::Stride] = 2;
  LayerRecord padded_pool = pool(3);
  padded_pool.params[Param::Padding] = 1;
  padded_pool.params[Param::Stride] = 2;
  const std::vector<std::vector<LayerRecord>> cases = {
      {conv(3, 3)},
      {strided},
      {{LayerKind::BatchNorm, {}}},
      {conv(1, 2), {LayerKind::ReLU, {}}},
      {pool(2)},
      {padded_pool},
      {{LayerKind::AvgPool, {{Param::KernelSize, 3}, {Param::Padding, 1}}}},
      {{LayerKind::AdaptiveAvgPool, {{Param::OutputSize, 3}}}},
      {linear(6)},
      {{LayerKind::Dropout, {{Param::DropP, 0.3}}}},
      {{LayerKind::Flatten, {}}},
      {conv(3, 4), {LayerKind::Skip, {}}},
      {strided, {LayerKind::Skip, {}}},
      {conv(3, 2), {LayerKind::BatchNorm, {}}, {LayerKind::ReLU, {}}, {LayerKind::Skip, {}}},
  };
  std::uint64_t seed = 1;
  for (const auto& layers : cases) {
    const auto plan = compile_layers(layers, in, 3);
    Rng init(seed);
    const Params params = init_params(plan, init);
    check_parameter_gradients(plan, params, Mode::Train, seed);
    check_parameter_gradients(plan, params, Mode::Eval, seed);
    ++seed;
  }
}

TEST(Forward, EvalIsDeterministicAndTrainUsesDropoutMasks) {
  const auto plan = compile_layers({{LayerKind::Dropout, {{Param::DropP, 0.5}}}}, {10, 1, 1}, 10);
  Rng init(1);
  const Params params = init_params(plan, init);
  std::mt19937_64 data(2);
  const Tensor x = random_input(8, {10, 1, 1}, data);
  EXPECT_EQ(forward(plan, params, x, Mode::Eval).data, forward(plan, params, x, Mode::Eval).data);
  Rng a(3), b(4);
  EXPECT_NE(forward(plan, params, x, Mode::Train, &a).data, forward(plan, params, x, Mode::Train, &b).data);
  EXPECT_THROW(forward(plan, params, x, Mode::Train), UsageError);
  EXPECT_THROW(forward(plan, params, Tensor(1, {9, 1, 1}), Mode::Eval), UsageError);
}

TEST(Schedule, CosineEndpoints) {
  EXPECT_EQ(cosine_lr(0.025, 0, 100), 0.025);
  EXPECT_NEAR(cosine_lr(0.025, 100, 100), 0.0, 1e-18);
  EXPECT_NEAR(cosine_lr(0.025, 50, 100), 0.0125, 1e-15);
}

TEST(Sgd, WeightDecayShrinksByExactFactor) {
  const auto plan = compile_layers({linear(3)}, {4, 1, 1}, 3);
  Rng init(9);
  Params params = init_params(plan, init);
  const Params before = params;
  Params grads = zeros_like(params);
  SgdMomentum sgd(plan, params, 0.9, 3e-4);
  const double lr = 0.025;
  sgd.step(params, grads, lr);
  for (std::size_t i = 0; i < params.ops[0].weight.size(); ++i) {
    EXPECT_DOUBLE_EQ(params.ops[0].weight[i], before.ops[0].weight[i] * (1.0 - lr * 3e-4));
  }
}

TEST(Train, SeparableTwoClassProblem) {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.count = 400;
  spec.shape = {1, 4, 4};
  spec.noise = 0.3;
  Rng rng(11);
  const Dataset ds = synth_dataset(spec, rng);
  const auto plan = compile_layers({linear(16), {LayerKind::ReLU, {}}}, ds.shape, 2);
  Params params = init_params(plan, rng);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 32;
  const auto result = train(plan, params, ds, cfg, rng);
  ASSERT_EQ(result.history.size(), 5u);
  EXPECT_EQ(result.steps, 5u * 13u);
  EXPECT_GE(result.history.back().accuracy, 0.9);
  EXPECT_GE(evaluate(plan, params, ds), 0.9);
  EXPECT_NEAR(result.history.back().lr, cosine_lr(0.025, result.steps - 1, result.steps), 1e-15);
}

TEST(Train, DivergenceNamesTheStep) {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.count = 64;
  spec.shape = {1, 4, 4};
  Rng rng(12);
  const Dataset ds = synth_dataset(spec, rng);
  const auto plan = compile_layers({linear(8)}, ds.shape, 2);
  Params params = init_params(plan, rng);
  TrainConfig cfg;
  cfg.lr = 1e200;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  try {
    train(plan, params, ds, cfg, rng);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
  cfg.lr = 0.0;
  EXPECT_THROW(train(plan, params, ds, cfg, rng), UsageError);
}

TEST(Evaluate, AccuracyOracles) {
  const std::vector<int> labels{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_EQ(accuracy(labels, labels), 1.0);
  EXPECT_EQ(accuracy(std::vector<int>(10, 3), labels), 0.1);
  std::vector<int> shifted;
  for (int y : labels) shifted.push_back((y + 1) % 10);
  EXPECT_EQ(accuracy(shifted, labels), 0.0);

  // All-zero head: tied logits resolve to class 0, so a balanced set scores 0.1.
  SynthSpec spec;
  spec.count = 100;
  Rng rng(13);
  const Dataset ds = synth_dataset(spec, rng);
  const auto plan = compile_layers({conv(3, 4), {LayerKind::ReLU, {}}}, ds.shape, 10);
  Params params = init_params(plan, rng);
  std::fill(params.ops.back().weight.begin(), params.ops.back().weight.end(), 0.0);
  EXPECT_EQ(evaluate(plan, params, ds), 0.1);
}

TEST(Checkpoint, RoundTripAtFloatPrecision) {
  namespace fs = std::filesystem;
  const auto plan = compile_layers({conv(3, 4), {LayerKind::BatchNorm, {}}, {LayerKind::Skip, {}}}, kInput, 10);
  Rng rng(14);
  const Params params = init_params(plan, rng);
  const fs::path dir = fs::temp_directory_path() / "wdgnas_ckpt_test";
  fs::remove_all(dir);
  save_checkpoint(dir.string(), plan, params);
  const Params back = load_checkpoint(dir.string(), plan);
  EXPECT_EQ(back.ops[0].weight.size(), params.ops[0].weight.size());
  for (std::size_t i = 0; i < params.ops[0].weight.size(); ++i) {
    EXPECT_EQ(back.ops[0].weight[i], static_cast<float>(params.ops[0].weight[i]));
  }
  std::ifstream manifest(dir / "params.manifest");
  std::string first;
  std::getline(manifest, first);
  EXPECT_EQ(first, "ops.0.weight float32 4x3x3x3");
  ASSERT_EQ(plan.ops[1].kind, OpKind::Residual);
  EXPECT_EQ(fs::file_size(dir / "params.bin"), 4 * (plan.parameter_count() + 2 * 4));

  const auto other = compile_layers({conv(3, 5)}, kInput, 10);
  EXPECT_THROW(load_checkpoint(dir.string(), other), DataError);
  fs::resize_file(dir / "params.bin", 12);
  EXPECT_THROW(load_checkpoint(dir.string(), plan), DataError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace wdgnas
