// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/netrt/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wdgnas/errors.hpp"

namespace wdgnas {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

struct ForwardPass::Cache {
  Mode mode = Mode::Eval;
  Tensor input;
  std::vector<double> aux;  // batch-norm xhat, dropout mask
  std::vector<std::int64_t> index;  // max-pool winners
  std::vector<double> mean;
  std::vector<double> var;  // biased batch variance
  std::vector<double> inv_std;
  std::vector<Cache> body;
  std::vector<Cache> shortcut;
};

namespace {

using Cache = ForwardPass::Cache;

// Patch matrix of a convolution: rows (ci, kh, kw), columns (n, oh, ow).
MatR im2col(const Op& op, const Tensor& x) {
  const int k = op.kernel, ho = op.out.height, wo = op.out.width;
  const int h = op.in.height, w = op.in.width;
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  MatR col = MatR::Zero(static_cast<Eigen::Index>(op.in.channels) * k * k,
                        static_cast<Eigen::Index>(x.batch * plane));
  for (int ci = 0; ci < op.in.channels; ++ci) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        double* row = col.row((ci * k + kh) * k + kw).data();
        for (int n = 0; n < x.batch; ++n) {
          const double* src = x.sample(n) + static_cast<std::size_t>(ci) * h * w;
          double* dst = row + n * plane;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * op.stride - op.padding + kh;
            if (ih < 0 || ih >= h) continue;
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * op.stride - op.padding + kw;
              if (iw >= 0 && iw < w) dst[oh * wo + ow] = src[ih * w + iw];
            }
          }
        }
      }
    }
  }
  return col;
}

void col2im(const Op& op, const MatR& col, Tensor& dx) {
  const int k = op.kernel, ho = op.out.height, wo = op.out.width;
  const int h = op.in.height, w = op.in.width;
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int ci = 0; ci < op.in.channels; ++ci) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const double* row = col.row((ci * k + kh) * k + kw).data();
        for (int n = 0; n < dx.batch; ++n) {
          double* dst = dx.sample(n) + static_cast<std::size_t>(ci) * h * w;
          const double* src = row + n * plane;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * op.stride - op.padding + kh;
            if (ih < 0 || ih >= h) continue;
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * op.stride - op.padding + kw;
              if (iw >= 0 && iw < w) dst[ih * w + iw] += src[oh * wo + ow];
            }
          }
        }
      }
    }
  }
}

Tensor conv_forward(const Op& op, const OpParams& p, const Tensor& x) {
  const MatR col = im2col(op, x);
  const CMapR weight(p.weight.data(), op.out.channels, col.rows());
  const MatR y = weight * col;
  Tensor out(x.batch, op.out);
  const std::size_t plane = op.out.plane();
  for (int n = 0; n < x.batch; ++n) {
    double* dst = out.sample(n);
    for (int co = 0; co < op.out.channels; ++co) {
      const double* src = y.row(co).data() + n * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[co * plane + i] = src[i] + p.bias[co];
    }
  }
  return out;
}

Tensor conv_backward(const Op& op, const OpParams& p, const Tensor& x, const Tensor& dy, OpParams* g) {
  const std::size_t plane = op.out.plane();
  MatR dmat(op.out.channels, static_cast<Eigen::Index>(x.batch * plane));
  for (int n = 0; n < x.batch; ++n) {
    const double* src = dy.sample(n);
    for (int co = 0; co < op.out.channels; ++co) {
      std::copy_n(src + co * plane, plane, dmat.row(co).data() + n * plane);
    }
  }
  const Eigen::Index patch = static_cast<Eigen::Index>(op.in.channels) * op.kernel * op.kernel;
  const CMapR weight(p.weight.data(), op.out.channels, patch);
  if (g) {
    const MatR col = im2col(op, x);
    MapR(g->weight.data(), op.out.channels, patch).noalias() += dmat * col.transpose();
    for (int co = 0; co < op.out.channels; ++co) g->bias[co] += dmat.row(co).sum();
  }
  const MatR dcol = weight.transpose() * dmat;
  Tensor dx(x.batch, op.in);
  col2im(op, dcol, dx);
  return dx;
}

Tensor linear_forward(const Op& op, const OpParams& p, const Tensor& x) {
  const auto in = static_cast<Eigen::Index>(op.in.size());
  const CMapR xm(x.data.data(), x.batch, in);
  const CMapR weight(p.weight.data(), op.out.channels, in);
  Tensor out(x.batch, op.out);
  MapR ym(out.data.data(), x.batch, op.out.channels);
  ym.noalias() = xm * weight.transpose();
  const Eigen::Map<const Eigen::RowVectorXd> bias(p.bias.data(), op.out.channels);
  ym.rowwise() += bias;
  return out;
}

Tensor linear_backward(const Op& op, const OpParams& p, const Tensor& x, const Tensor& dy, OpParams* g) {
  const auto in = static_cast<Eigen::Index>(op.in.size());
  const CMapR dym(dy.data.data(), x.batch, op.out.channels);
  const CMapR weight(p.weight.data(), op.out.channels, in);
  if (g) {
    const CMapR xm(x.data.data(), x.batch, in);
    MapR(g->weight.data(), op.out.channels, in).noalias() += dym.transpose() * xm;
    Eigen::Map<Eigen::RowVectorXd>(g->bias.data(), op.out.channels) += dym.colwise().sum();
  }
  Tensor dx(x.batch, op.in);
  MapR(dx.data.data(), x.batch, in).noalias() = dym * weight;
  return dx;
}

Tensor batchnorm_forward(const Op& op, const OpParams& p, const Tensor& x, Mode mode, Cache& c) {
  const int channels = op.in.channels;
  const std::size_t plane = op.in.plane();
  const double m = static_cast<double>(plane) * x.batch;
  c.mean.assign(channels, 0.0);
  c.var.assign(channels, 0.0);
  c.inv_std.assign(channels, 0.0);
  c.aux.assign(x.data.size(), 0.0);
  Tensor out(x.batch, op.out);
  for (int ch = 0; ch < channels; ++ch) {
    double mean = p.running_mean[ch], var = p.running_var[ch];
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (int n = 0; n < x.batch; ++n) {
        const double* v = x.sample(n) + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += v[i];
      }
      mean = sum / m;
      double sq = 0.0;
      for (int n = 0; n < x.batch; ++n) {
        const double* v = x.sample(n) + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (v[i] - mean) * (v[i] - mean);
      }
      var = sq / m;
    }
    const double inv_std = 1.0 / std::sqrt(var + kBatchNormEps);
    c.mean[ch] = mean;
    c.var[ch] = var;
    c.inv_std[ch] = inv_std;
    for (int n = 0; n < x.batch; ++n) {
      const std::size_t base = static_cast<std::size_t>(n) * op.in.size() + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xhat = (x.data[base + i] - mean) * inv_std;
        c.aux[base + i] = xhat;
        out.data[base + i] = p.gamma[ch] * xhat + p.beta[ch];
      }
    }
  }
  return out;
}

Tensor batchnorm_backward(const Op& op, const OpParams& p, const Tensor& dy, const Cache& c, OpParams* g) {
  const int channels = op.in.channels;
  const std::size_t plane = op.in.plane();
  const double m = static_cast<double>(plane) * dy.batch;
  Tensor dx(dy.batch, op.in);
  for (int ch = 0; ch < channels; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.batch; ++n) {
      const std::size_t base = static_cast<std::size_t>(n) * op.in.size() + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy.data[base + i];
        sum_dy_xhat += dy.data[base + i] * c.aux[base + i];
      }
    }
    if (g) {
      g->gamma[ch] += sum_dy_xhat;
      g->beta[ch] += sum_dy;
    }
    const double scale = p.gamma[ch] * c.inv_std[ch];
    for (int n = 0; n < dy.batch; ++n) {
      const std::size_t base = static_cast<std::size_t>(n) * op.in.size() + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (c.mode == Mode::Train) {
          dx.data[base + i] = scale * (dy.data[base + i] - sum_dy / m - c.aux[base + i] * sum_dy_xhat / m);
        } else {
          dx.data[base + i] = scale * dy.data[base + i];
        }
      }
    }
  }
  return dx;
}

Tensor maxpool_forward(const Op& op, const Tensor& x, Cache& c) {
  Tensor out(x.batch, op.out);
  c.index.assign(out.data.size(), -1);
  const int h = op.in.height, w = op.in.width;
  std::size_t o = 0;
  for (int n = 0; n < x.batch; ++n) {
    for (int ch = 0; ch < op.in.channels; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(n) * op.in.channels + ch) * h * w;
      for (int oh = 0; oh < op.out.height; ++oh) {
        for (int ow = 0; ow < op.out.width; ++ow, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t arg = -1;
          for (int kh = 0; kh < op.kernel; ++kh) {
            const int ih = oh * op.stride - op.padding + kh;
            if (ih < 0 || ih >= h) continue;
            for (int kw = 0; kw < op.kernel; ++kw) {
              const int iw = ow * op.stride - op.padding + kw;
              if (iw < 0 || iw >= w) continue;
              const std::size_t idx = base + ih * w + iw;
              if (arg < 0 || x.data[idx] > best) {
                best = x.data[idx];
                arg = static_cast<std::int64_t>(idx);
              }
            }
          }
          out.data[o] = best;
          c.index[o] = arg;
        }
      }
    }
  }
  return out;
}

Tensor avgpool_forward(const Op& op, const Tensor& x) {
  Tensor out(x.batch, op.out);
  const int h = op.in.height, w = op.in.width;
  const double area = static_cast<double>(op.kernel) * op.kernel;
  std::size_t o = 0;
  for (int n = 0; n < x.batch; ++n) {
    for (int ch = 0; ch < op.in.channels; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(n) * op.in.channels + ch) * h * w;
      for (int oh = 0; oh < op.out.height; ++oh) {
        for (int ow = 0; ow < op.out.width; ++ow, ++o) {
          double sum = 0.0;
          for (int kh = 0; kh < op.kernel; ++kh) {
            const int ih = oh * op.stride - op.padding + kh;
            if (ih < 0 || ih >= h) continue;
            for (int kw = 0; kw < op.kernel; ++kw) {
              const int iw = ow * op.stride - op.padding + kw;
              if (iw >= 0 && iw < w) sum += x.data[base + ih * w + iw];
            }
          }
          out.data[o] = sum / area;
        }
      }
    }
  }
  return out;
}

Tensor avgpool_backward(const Op& op, const Tensor& dy) {
  Tensor dx(dy.batch, op.in);
  const int h = op.in.height, w = op.in.width;
  const double area = static_cast<double>(op.kernel) * op.kernel;
  std::size_t o = 0;
  for (int n = 0; n < dy.batch; ++n) {
    for (int ch = 0; ch < op.in.channels; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(n) * op.in.channels + ch) * h * w;
      for (int oh = 0; oh < op.out.height; ++oh) {
        for (int ow = 0; ow < op.out.width; ++ow, ++o) {
          const double gv = dy.data[o] / area;
          for (int kh = 0; kh < op.kernel; ++kh) {
            const int ih = oh * op.stride - op.padding + kh;
            if (ih < 0 || ih >= h) continue;
            for (int kw = 0; kw < op.kernel; ++kw) {
              const int iw = ow * op.stride - op.padding + kw;
              if (iw >= 0 && iw < w) dx.data[base + ih * w + iw] += gv;
            }
          }
        }
      }
    }
  }
  return dx;
}

struct Bin {
  int begin, end;
};

Bin adaptive_bin(int i, int in, int out) {
  return {static_cast<int>(std::floor(static_cast<double>(i) * in / out)),
          static_cast<int>(std::ceil(static_cast<double>(i + 1) * in / out))};
}

template <bool Backward>
void adaptive_pass(const Op& op, const Tensor& src, Tensor& dst) {
  const int h = op.in.height, w = op.in.width;
  const int batch = Backward ? dst.batch : src.batch;
  std::size_t o = 0;
  for (int n = 0; n < batch; ++n) {
    for (int ch = 0; ch < op.in.channels; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(n) * op.in.channels + ch) * h * w;
      for (int oh = 0; oh < op.out.height; ++oh) {
        const Bin rows = adaptive_bin(oh, h, op.out.height);
        for (int ow = 0; ow < op.out.width; ++ow, ++o) {
          const Bin cols = adaptive_bin(ow, w, op.out.width);
          const double area = static_cast<double>(rows.end - rows.begin) * (cols.end - cols.begin);
          if constexpr (Backward) {
            const double gv = src.data[o] / area;
            for (int ih = rows.begin; ih < rows.end; ++ih) {
              for (int iw = cols.begin; iw < cols.end; ++iw) dst.data[base + ih * w + iw] += gv;
            }
          } else {
            double sum = 0.0;
            for (int ih = rows.begin; ih < rows.end; ++ih) {
              for (int iw = cols.begin; iw < cols.end; ++iw) sum += src.data[base + ih * w + iw];
            }
            dst.data[o] = sum / area;
          }
        }
      }
    }
  }
}

Tensor run_forward(const std::vector<Op>& ops, const std::vector<OpParams>& params, Tensor x, Mode mode, Rng* rng,
                   std::vector<Cache>& caches);

Tensor op_forward(const Op& op, const OpParams& p, const Tensor& x, Mode mode, Rng* rng, Cache& c) {
  c.mode = mode;
  switch (op.kind) {
    case OpKind::Conv:
      return conv_forward(op, p, x);
    case OpKind::Linear:
      return linear_forward(op, p, x);
    case OpKind::BatchNorm:
      return batchnorm_forward(op, p, x, mode, c);
    case OpKind::ReLU: {
      Tensor out = x;
      for (double& v : out.data) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case OpKind::MaxPool:
      return maxpool_forward(op, x, c);
    case OpKind::AvgPool:
      return avgpool_forward(op, x);
    case OpKind::AdaptiveAvgPool: {
      Tensor out(x.batch, op.out);
      adaptive_pass<false>(op, x, out);
      return out;
    }
    case OpKind::Dropout: {
      if (mode == Mode::Eval) return x;
      if (!rng) throw UsageError("train-mode dropout needs a random stream");
      std::bernoulli_distribution keep(1.0 - op.drop_p);
      const double scale = 1.0 / (1.0 - op.drop_p);
      c.aux.resize(x.data.size());
      Tensor out = x;
      for (std::size_t i = 0; i < out.data.size(); ++i) {
        c.aux[i] = keep(*rng) ? scale : 0.0;
        out.data[i] *= c.aux[i];
      }
      return out;
    }
    case OpKind::Flatten: {
      Tensor out = x;
      out.shape = op.out;
      return out;
    }
    case OpKind::Residual: {
      Tensor out = run_forward(op.body, p.body, x, mode, rng, c.body);
      const Tensor shortcut = run_forward(op.shortcut, p.shortcut, x, mode, rng, c.shortcut);
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += shortcut.data[i];
      return out;
    }
  }
  throw UsageError("unsupported op");
}

Tensor run_forward(const std::vector<Op>& ops, const std::vector<OpParams>& params, Tensor x, Mode mode, Rng* rng,
                   std::vector<Cache>& caches) {
  caches.resize(ops.size());
  for (std::size_t i = 0; i < ops.size(); ++i) {
    Tensor y = op_forward(ops[i], params[i], x, mode, rng, caches[i]);
    caches[i].input = std::move(x);
    x = std::move(y);
  }
  return x;
}

Tensor run_backward(const std::vector<Op>& ops, const std::vector<OpParams>& params, Tensor dy,
                    const std::vector<Cache>& caches, std::vector<OpParams>* grads);

Tensor op_backward(const Op& op, const OpParams& p, const Tensor& dy, const Cache& c, OpParams* g) {
  const Tensor& x = c.input;
  switch (op.kind) {
    case OpKind::Conv:
      return conv_backward(op, p, x, dy, g);
    case OpKind::Linear:
      return linear_backward(op, p, x, dy, g);
    case OpKind::BatchNorm:
      return batchnorm_backward(op, p, dy, c, g);
    case OpKind::ReLU: {
      Tensor dx = dy;
      for (std::size_t i = 0; i < dx.data.size(); ++i) {
        if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
      }
      return dx;
    }
    case OpKind::MaxPool: {
      Tensor dx(dy.batch, op.in);
      for (std::size_t o = 0; o < dy.data.size(); ++o) dx.data[static_cast<std::size_t>(c.index[o])] += dy.data[o];
      return dx;
    }
    case OpKind::AvgPool:
      return avgpool_backward(op, dy);
    case OpKind::AdaptiveAvgPool: {
      Tensor dx(dy.batch, op.in);
      adaptive_pass<true>(op, dy, dx);
      return dx;
    }
    case OpKind::Dropout: {
      Tensor dx = dy;
      if (c.mode == Mode::Train) {
        for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= c.aux[i];
      }
      return dx;
    }
    case OpKind::Flatten: {
      Tensor dx = dy;
      dx.shape = op.in;
      return dx;
    }
    case OpKind::Residual: {
      Tensor dx = run_backward(op.body, p.body, dy, c.body, g ? &g->body : nullptr);
      const Tensor ds = run_backward(op.shortcut, p.shortcut, dy, c.shortcut, g ? &g->shortcut : nullptr);
      for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += ds.data[i];
      return dx;
    }
  }
  throw UsageError("unsupported op");
}

Tensor run_backward(const std::vector<Op>& ops, const std::vector<OpParams>& params, Tensor dy,
                    const std::vector<Cache>& caches, std::vector<OpParams>* grads) {
  for (std::size_t i = ops.size(); i-- > 0;) {
    dy = op_backward(ops[i], params[i], dy, caches[i], grads ? &(*grads)[i] : nullptr);
  }
  return dy;
}

void fold_stats(const std::vector<Op>& ops, std::vector<OpParams>& params, const std::vector<Cache>& caches,
                double momentum) {
  for (std::size_t i = 0; i < ops.size() && i < caches.size(); ++i) {
    const Cache& c = caches[i];
    if (ops[i].kind == OpKind::BatchNorm && c.mode == Mode::Train) {
      const double m = static_cast<double>(c.input.batch) * ops[i].in.plane();
      const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
      for (std::size_t ch = 0; ch < c.mean.size(); ++ch) {
        auto& rm = params[i].running_mean[ch];
        auto& rv = params[i].running_var[ch];
        rm = (1.0 - momentum) * rm + momentum * c.mean[ch];
        rv = (1.0 - momentum) * rv + momentum * c.var[ch] * unbias;
      }
    }
    if (ops[i].kind == OpKind::Residual) {
      fold_stats(ops[i].body, params[i].body, c.body, momentum);
      fold_stats(ops[i].shortcut, params[i].shortcut, c.shortcut, momentum);
    }
  }
}

void collect_signature(const std::vector<Op>& ops, const std::vector<Cache>& caches, std::vector<std::int64_t>& out) {
  for (std::size_t i = 0; i < ops.size() && i < caches.size(); ++i) {
    const Cache& c = caches[i];
    if (ops[i].kind == OpKind::ReLU) {
      for (double v : c.input.data) out.push_back(v > 0.0 ? 1 : 0);
    } else if (ops[i].kind == OpKind::MaxPool) {
      out.insert(out.end(), c.index.begin(), c.index.end());
    } else if (ops[i].kind == OpKind::Residual) {
      collect_signature(ops[i].body, c.body, out);
      collect_signature(ops[i].shortcut, c.shortcut, out);
    }
  }
}

}  // namespace

ForwardPass::ForwardPass(const NetworkPlan& plan, const Params& params)
    : plan_(&plan), params_(&params), caches_(std::make_unique<std::vector<Cache>>()) {
  if (params.ops.size() != plan.ops.size()) throw UsageError("parameters do not match plan");
}

ForwardPass::~ForwardPass() = default;
ForwardPass::ForwardPass(ForwardPass&&) noexcept = default;

const Tensor& ForwardPass::forward(const Tensor& x, Mode mode, Rng* rng) {
  if (x.shape != plan_->input_shape || x.batch < 1 || x.data.size() != x.batch * x.shape.size()) {
    throw UsageError("input batch of shape " + x.shape.to_string() + " does not match plan input " +
                     plan_->input_shape.to_string());
  }
  output_ = run_forward(plan_->ops, params_->ops, x, mode, rng, *caches_);
  return output_;
}

Tensor ForwardPass::backward(const Tensor& grad_out, Params* grads) {
  if (caches_->empty()) throw UsageError("backward called before forward");
  if (grad_out.batch != output_.batch || grad_out.shape != output_.shape) {
    throw UsageError("output gradient shape does not match the last forward");
  }
  if (grads && grads->ops.size() != plan_->ops.size()) throw UsageError("gradient container does not match plan");
  return run_backward(plan_->ops, params_->ops, grad_out, *caches_, grads ? &grads->ops : nullptr);
}

void ForwardPass::update_running_stats(Params& params, double momentum) const {
  fold_stats(plan_->ops, params.ops, *caches_, momentum);
}

std::vector<std::int64_t> ForwardPass::branch_signature() const {
  std::vector<std::int64_t> out;
  collect_signature(plan_->ops, *caches_, out);
  return out;
}

Tensor forward(const NetworkPlan& plan, const Params& params, const Tensor& x, Mode mode, Rng* rng) {
  ForwardPass pass(plan, params);
  return pass.forward(x, mode, rng);
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const int classes = static_cast<int>(logits.shape.size());
  if (labels.size() != static_cast<std::size_t>(logits.batch)) throw UsageError("label count does not match batch");
  LossResult r;
  r.grad = Tensor(logits.batch, logits.shape);
  for (int n = 0; n < logits.batch; ++n) {
    const int y = labels[n];
    if (y < 0 || y >= classes) throw UsageError("label out of range: " + std::to_string(y));
    const double* z = logits.sample(n);
    double* g = r.grad.sample(n);
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(z[c] - zmax);
    const double log_sum = zmax + std::log(sum);
    r.loss += log_sum - z[y];
    int arg = 0;
    for (int c = 0; c < classes; ++c) {
      g[c] = std::exp(z[c] - log_sum) / logits.batch;
      if (z[c] > z[arg]) arg = c;
    }
    g[y] -= 1.0 / logits.batch;
    r.correct += arg == y;
  }
  r.loss /= logits.batch;
  return r;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const int classes = static_cast<int>(logits.shape.size());
  std::vector<int> out(logits.batch);
  for (int n = 0; n < logits.batch; ++n) {
    const double* z = logits.sample(n);
    int arg = 0;
    for (int c = 1; c < classes; ++c) {
      if (z[c] > z[arg]) arg = c;
    }
    out[n] = arg;
  }
  return out;
}

Eigen::MatrixXd input_jacobian(const NetworkPlan& plan, const Params& params, const Tensor& x) {
  ForwardPass pass(plan, params);
  const Tensor& logits = pass.forward(x, Mode::Eval);
  const Tensor dx = pass.backward(Tensor(logits.batch, logits.shape, 1.0), nullptr);
  const auto dim = static_cast<Eigen::Index>(x.shape.size());
  Eigen::MatrixXd jac = CMapR(dx.data.data(), x.batch, dim);
  if (!jac.allFinite()) throw NumericError("input Jacobian has non-finite entries");
  return jac;
}

}  // namespace wdgnas
