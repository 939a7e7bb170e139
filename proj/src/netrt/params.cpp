// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/netrt/params.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wdgnas/errors.hpp"

namespace wdgnas {
namespace {

OpParams init_op(const Op& op, Rng& rng) {
  OpParams p;
  auto kaiming = [&](std::size_t count, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> w(count);
    for (auto& v : w) v = dist(rng);
    return w;
  };
  switch (op.kind) {
    case OpKind::Conv: {
      const std::size_t fan_in = static_cast<std::size_t>(op.in.channels) * op.kernel * op.kernel;
      p.weight = kaiming(fan_in * op.out.channels, fan_in);
      p.bias.assign(op.out.channels, 0.0);
      break;
    }
    case OpKind::Linear:
      p.weight = kaiming(op.in.size() * op.out.channels, op.in.size());
      p.bias.assign(op.out.channels, 0.0);
      break;
    case OpKind::BatchNorm:
      p.gamma.assign(op.in.channels, 1.0);
      p.beta.assign(op.in.channels, 0.0);
      p.running_mean.assign(op.in.channels, 0.0);
      p.running_var.assign(op.in.channels, 1.0);
      break;
    default:
      break;
  }
  for (const auto& sub : op.body) p.body.push_back(init_op(sub, rng));
  for (const auto& sub : op.shortcut) p.shortcut.push_back(init_op(sub, rng));
  return p;
}

OpParams zeros_op(const OpParams& src) {
  OpParams p;
  p.weight.assign(src.weight.size(), 0.0);
  p.bias.assign(src.bias.size(), 0.0);
  p.gamma.assign(src.gamma.size(), 0.0);
  p.beta.assign(src.beta.size(), 0.0);
  p.running_mean.assign(src.running_mean.size(), 0.0);
  p.running_var.assign(src.running_var.size(), 0.0);
  for (const auto& sub : src.body) p.body.push_back(zeros_op(sub));
  for (const auto& sub : src.shortcut) p.shortcut.push_back(zeros_op(sub));
  return p;
}

void visit_ops(const std::vector<Op>& ops, std::vector<OpParams>& params, const std::string& prefix,
               const std::function<void(const TensorRef&)>& fn) {
  if (ops.size() != params.size()) throw DataError("parameters do not match plan at " + prefix);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const Op& op = ops[i];
    OpParams& p = params[i];
    const std::string base = prefix + "." + std::to_string(i) + ".";
    auto emit = [&](const char* name, std::vector<int> dims, std::vector<double>& values, bool trainable) {
      std::size_t expected = 1;
      for (int d : dims) expected *= static_cast<std::size_t>(d);
      if (values.size() != expected) throw DataError("tensor " + base + name + " has the wrong size");
      fn({base + name, std::move(dims), &values, trainable});
    };
    switch (op.kind) {
      case OpKind::Conv:
        emit("weight", {op.out.channels, op.in.channels, op.kernel, op.kernel}, p.weight, true);
        emit("bias", {op.out.channels}, p.bias, true);
        break;
      case OpKind::Linear:
        emit("weight", {op.out.channels, static_cast<int>(op.in.size())}, p.weight, true);
        emit("bias", {op.out.channels}, p.bias, true);
        break;
      case OpKind::BatchNorm:
        emit("gamma", {op.in.channels}, p.gamma, true);
        emit("beta", {op.in.channels}, p.beta, true);
        emit("running_mean", {op.in.channels}, p.running_mean, false);
        emit("running_var", {op.in.channels}, p.running_var, false);
        break;
      default:
        break;
    }
    if (op.kind == OpKind::Residual) {
      visit_ops(op.body, p.body, base + "body", fn);
      visit_ops(op.shortcut, p.shortcut, base + "shortcut", fn);
    }
  }
}

std::string dims_text(const std::vector<int>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) out += (i ? "x" : "") + std::to_string(dims[i]);
  return out;
}

}  // namespace

Params init_params(const NetworkPlan& plan, Rng& rng) {
  Params params;
  for (const auto& op : plan.ops) params.ops.push_back(init_op(op, rng));
  return params;
}

Params zeros_like(const Params& params) {
  Params out;
  for (const auto& op : params.ops) out.ops.push_back(zeros_op(op));
  return out;
}

void for_each_tensor(const NetworkPlan& plan, Params& params, const std::function<void(const TensorRef&)>& fn) {
  visit_ops(plan.ops, params.ops, "ops", fn);
}

bool all_finite(const NetworkPlan& plan, const Params& params) {
  bool ok = true;
  for_each_tensor(plan, const_cast<Params&>(params), [&](const TensorRef& t) {
    for (double v : *t.values) ok = ok && std::isfinite(v);
  });
  return ok;
}

void save_checkpoint(const std::string& dir, const NetworkPlan& plan, const Params& params) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  std::ofstream manifest(fs::path(dir) / "params.manifest");
  if (!bin || !manifest) throw DataError("cannot write checkpoint to " + dir);
  for_each_tensor(plan, const_cast<Params&>(params), [&](const TensorRef& t) {
    manifest << t.name << " float32 " << dims_text(t.dims) << '\n';
    for (double v : *t.values) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      unsigned char bytes[4];
      for (int b = 0; b < 4; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
      bin.write(reinterpret_cast<const char*>(bytes), 4);
    }
  });
  if (!bin || !manifest) throw DataError("failed writing checkpoint to " + dir);
}

Params load_checkpoint(const std::string& dir, const NetworkPlan& plan) {
  namespace fs = std::filesystem;
  std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  std::ifstream manifest(fs::path(dir) / "params.manifest");
  if (!bin || !manifest) throw DataError("no checkpoint in " + dir);

  Rng unused(0);
  Params params = init_params(plan, unused);
  for_each_tensor(plan, params, [&](const TensorRef& t) {
    std::string line;
    if (!std::getline(manifest, line)) throw DataError("checkpoint manifest ends before " + t.name);
    std::istringstream fields(line);
    std::string name, dtype, dims;
    fields >> name >> dtype >> dims;
    if (name != t.name || dtype != "float32" || dims != dims_text(t.dims)) {
      throw DataError("checkpoint manifest mismatch: expected " + t.name + " float32 " + dims_text(t.dims) +
                      ", found '" + line + "'");
    }
    for (double& v : *t.values) {
      unsigned char bytes[4];
      if (!bin.read(reinterpret_cast<char*>(bytes), 4)) throw DataError("truncated params.bin at " + t.name);
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
      v = std::bit_cast<float>(bits);
    }
  });
  std::string extra;
  if (std::getline(manifest, extra) && !extra.empty()) throw DataError("checkpoint has extra tensors");
  if (bin.peek() != std::char_traits<char>::eof()) throw DataError("params.bin has trailing bytes");
  return params;
}

}  // namespace wdgnas
