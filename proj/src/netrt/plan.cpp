// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/netrt/plan.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <sstream>

#include "wdgnas/errors.hpp"

namespace wdgnas {

std::string Shape::to_string() const {
  return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Conv: return "conv";
    case OpKind::BatchNorm: return "batchnorm";
    case OpKind::ReLU: return "relu";
    case OpKind::MaxPool: return "maxpool";
    case OpKind::AvgPool: return "avgpool";
    case OpKind::AdaptiveAvgPool: return "adaptiveavgpool";
    case OpKind::Linear: return "linear";
    case OpKind::Dropout: return "dropout";
    case OpKind::Flatten: return "flatten";
    case OpKind::Residual: return "residual";
  }
  return "?";
}

std::size_t Op::parameter_count() const {
  std::size_t n = 0;
  switch (kind) {
    case OpKind::Conv:
      n = static_cast<std::size_t>(out.channels) * (in.channels * kernel * kernel + 1);
      break;
    case OpKind::Linear:
      n = static_cast<std::size_t>(out.channels) * (in.size() + 1);
      break;
    case OpKind::BatchNorm:
      n = 2 * static_cast<std::size_t>(in.channels);
      break;
    default:
      break;
  }
  for (const auto& op : body) n += op.parameter_count();
  for (const auto& op : shortcut) n += op.parameter_count();
  return n;
}

std::size_t NetworkPlan::parameter_count() const {
  std::size_t n = 0;
  for (const auto& op : ops) n += op.parameter_count();
  return n;
}

namespace {

void describe_op(std::ostringstream& os, const Op& op, int depth) {
  os << std::string(2 * depth, ' ') << op_name(op.kind);
  switch (op.kind) {
    case OpKind::Conv:
      os << ' ' << op.in.channels << "->" << op.out.channels << " k" << op.kernel << " s" << op.stride << " p"
         << op.padding;
      break;
    case OpKind::MaxPool:
    case OpKind::AvgPool:
      os << " k" << op.kernel << " s" << op.stride << " p" << op.padding;
      break;
    case OpKind::Linear:
      os << ' ' << op.in.size() << "->" << op.out.channels;
      break;
    case OpKind::Dropout:
      os << " p" << op.drop_p;
      break;
    default:
      break;
  }
  os << "  " << op.in.to_string() << " -> " << op.out.to_string();
  if (op.layer >= 0) os << "  [layer " << op.layer << ']';
  os << '\n';
  for (const auto& sub : op.body) describe_op(os, sub, depth + 1);
  if (op.kind == OpKind::Residual) {
    if (op.shortcut.empty()) os << std::string(2 * depth + 2, ' ') << "shortcut identity\n";
    for (const auto& sub : op.shortcut) {
      os << std::string(2 * depth + 2, ' ') << "shortcut ";
      std::ostringstream inner;
      describe_op(inner, sub, 0);
      os << inner.str();
    }
  }
}

int pooled_size(int size, int kernel, int stride, int padding) {
  const int span = size + 2 * padding - kernel;
  return span < 0 ? 0 : span / stride + 1;
}

Op make_conv(Shape in, int out_channels, int kernel, int stride, int padding, int layer) {
  Op op;
  op.kind = OpKind::Conv;
  op.in = in;
  op.kernel = kernel;
  op.stride = stride;
  op.padding = padding;
  op.layer = layer;
  op.out = {out_channels, pooled_size(in.height, kernel, stride, padding),
            pooled_size(in.width, kernel, stride, padding)};
  return op;
}

Op make_flatten(Shape in, int layer) {
  Op op;
  op.kind = OpKind::Flatten;
  op.in = in;
  op.out = {static_cast<int>(in.size()), 1, 1};
  op.layer = layer;
  return op;
}

Op make_linear(Shape in, int out_features, int layer) {
  Op op;
  op.kind = OpKind::Linear;
  op.in = in;
  op.out = {out_features, 1, 1};
  op.layer = layer;
  return op;
}

Op make_residual(Op body, int layer) {
  Op op;
  op.kind = OpKind::Residual;
  op.in = body.in;
  op.out = body.out;
  op.layer = layer;
  Shape cur = body.in;
  if (cur.height != body.out.height || cur.width != body.out.width) {
    Op pool;
    pool.kind = OpKind::AdaptiveAvgPool;
    pool.in = cur;
    pool.out = {cur.channels, body.out.height, body.out.width};
    op.shortcut.push_back(pool);
    cur = pool.out;
  }
  if (cur.channels != body.out.channels) op.shortcut.push_back(make_conv(cur, body.out.channels, 1, 1, 0, -1));
  op.body.push_back(std::move(body));
  return op;
}

class Compiler {
 public:
  Compiler(Shape input, int num_classes) {
    plan_.input_shape = input;
    plan_.num_classes = num_classes;
  }

  void add(const LayerRecord& rec, int index) {
    const Shape in = plan_.output_shape();
    Op op;
    op.in = in;
    op.out = in;
    op.layer = index;
    switch (rec.kind) {
      case LayerKind::Conv: {
        const int k = rec.get_int(Param::KernelSize, 0);
        const int s = rec.get_int(Param::Stride, 1);
        const int p = rec.get_int(Param::Padding, k / 2);
        const int out = rec.get_int(Param::OutChannels, 0);
        if (k < 1 || s < 1 || p < 0 || out < 1) throw CompileError(index, "invalid conv parameters");
        op = make_conv(in, out, k, s, p, index);
        if (op.out.height < 1 || op.out.width < 1) {
          throw CompileError(index, "conv k=" + std::to_string(k) + " reduces " + in.to_string() + " below 1x1");
        }
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const int k = rec.get_int(Param::KernelSize, 0);
        const int s = rec.get_int(Param::Stride, k);
        int p = rec.get_int(Param::Padding, 0);
        if (k < 1 || s < 1 || p < 0) throw CompileError(index, "invalid pooling parameters");
        if (p > k / 2) {
          note(index, "padding clamped to " + std::to_string(k / 2));
          p = k / 2;
        }
        op.kind = rec.kind == LayerKind::MaxPool ? OpKind::MaxPool : OpKind::AvgPool;
        op.kernel = k;
        op.stride = s;
        op.padding = p;
        op.out = {in.channels, pooled_size(in.height, k, s, p), pooled_size(in.width, k, s, p)};
        if (op.out.height < 1 || op.out.width < 1) {
          note(index, std::string(op_name(op.kind)) + " elided on " + in.to_string());
          return;
        }
        break;
      }
      case LayerKind::AdaptiveAvgPool: {
        const int size = rec.get_int(Param::OutputSize, 0);
        if (size < 1) throw CompileError(index, "invalid adaptive pool size");
        op.kind = OpKind::AdaptiveAvgPool;
        op.out = {in.channels, size, size};
        break;
      }
      case LayerKind::Linear: {
        const int out = rec.get_int(Param::OutFeatures, 0);
        if (out < 1) throw CompileError(index, "invalid linear out_features");
        if (in.spatial()) {
          plan_.ops.push_back(make_flatten(in, -1));
          note(index, "flatten inserted before linear");
        }
        op = make_linear(plan_.output_shape(), out, index);
        break;
      }
      case LayerKind::Flatten:
        op = make_flatten(in, index);
        break;
      case LayerKind::BatchNorm:
        op.kind = OpKind::BatchNorm;
        break;
      case LayerKind::ReLU:
        op.kind = OpKind::ReLU;
        break;
      case LayerKind::Dropout: {
        const auto p = rec.get(Param::DropP);
        if (!p || !(*p > 0.0 && *p < 1.0)) throw CompileError(index, "invalid dropout probability");
        op.kind = OpKind::Dropout;
        op.drop_p = *p;
        break;
      }
      case LayerKind::Skip: {
        if (plan_.ops.empty()) {
          note(index, "skip without a preceding op elided");
          return;
        }
        Op body = std::move(plan_.ops.back());
        plan_.ops.pop_back();
        op = make_residual(std::move(body), index);
        break;
      }
      case LayerKind::Start:
      case LayerKind::End:
        throw CompileError(index, "start/end markers cannot appear in a candidate");
    }
    plan_.ops.push_back(std::move(op));
  }

  NetworkPlan finish() {
    if (plan_.ops.empty()) throw CompileError(-1, "candidate yields zero ops after elision");
    const Shape head{plan_.num_classes, 1, 1};
    if (plan_.output_shape() != head) {
      if (plan_.output_shape().spatial()) plan_.ops.push_back(make_flatten(plan_.output_shape(), -1));
      plan_.ops.push_back(make_linear(plan_.output_shape(), plan_.num_classes, -1));
      note(-1, "classifier head appended");
    }
    return std::move(plan_);
  }

 private:
  void note(int index, const std::string& text) {
    std::string line = index >= 0 ? "layer " + std::to_string(index) + ": " + text : text;
    spdlog::debug("compile: {}", line);
    plan_.notes.push_back(std::move(line));
  }

  NetworkPlan plan_;
};

}  // namespace

std::string NetworkPlan::describe() const {
  std::ostringstream os;
  os << "input " << input_shape.to_string() << ", " << num_classes << " classes, " << parameter_count()
     << " parameters\n";
  for (const auto& op : ops) describe_op(os, op, 0);
  return os.str();
}

NetworkPlan compile_layers(const std::vector<LayerRecord>& layers, Shape input_shape, int num_classes) {
  if (input_shape.channels < 1 || input_shape.height < 1 || input_shape.width < 1) {
    throw UsageError("input shape must be positive, got " + input_shape.to_string());
  }
  if (num_classes < 1) throw UsageError("num_classes must be ≥ 1");
  if (layers.empty()) throw CompileError(-1, "empty candidate");
  Compiler compiler(input_shape, num_classes);
  for (std::size_t i = 0; i < layers.size(); ++i) compiler.add(layers[i], static_cast<int>(i));
  return compiler.finish();
}

NetworkPlan compile_plan(const CandidateArchitecture& candidate, Shape input_shape, int num_classes) {
  return compile_layers(candidate.layers, input_shape, num_classes);
}

}  // namespace wdgnas
