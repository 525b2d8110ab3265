// Copyright 2026 The kfconformer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kfc/ops.h"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

namespace kfc {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using NodePtr = std::shared_ptr<internal::Node>;

ConstMap AsMat(const Buffer& v, std::size_t r, std::size_t c) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(r),
                  static_cast<Eigen::Index>(c));
}

MutMap AsMutMat(Buffer& v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r),
                static_cast<Eigen::Index>(c));
}

void RequireMatrix(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         ShapeToString(t.shape()));
  }
}

bool Wants(const NodePtr& n) { return n->requires_grad; }

// Equal shapes, or either side a single element.
enum class Bcast { kSame, kLeftScalar, kRightScalar };

Bcast CheckBinary(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() == b.shape()) return Bcast::kSame;
  if (b.numel() == 1) return Bcast::kRightScalar;
  if (a.numel() == 1) return Bcast::kLeftScalar;
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       ShapeToString(a.shape()) + " and " +
                       ShapeToString(b.shape()));
}

// Unary elementwise op with derivative expressed through input x and output y.
template <typename F, typename D>
Tensor Unary(std::string_view op, const Tensor& x, F f, D dfdx) {
  const auto& xd = x.node()->data;
  Buffer out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  NodePtr xn = x.node();
  return internal::MakeResult(
      op, x.shape(), std::move(out), {x},
      [xn, dfdx](const internal::Node& o) {
        auto& g = xn->GradBuffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] += o.grad[i] * dfdx(xn->data[i], o.data[i]);
        }
      });
}

double StableSigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

namespace internal {

Tensor MakeResultUnchecked(Shape shape, Buffer data,
                           std::vector<Tensor> parents, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (GradModeEnabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& p : parents) node->parents.push_back(p.node());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

Tensor MakeResult(std::string_view op, Shape shape, Buffer data,
                  std::vector<Tensor> parents, BackwardFn backward) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in output");
    }
  }
  return MakeResultUnchecked(std::move(shape), std::move(data),
                             std::move(parents), std::move(backward));
}

}  // namespace internal

Tensor Add(const Tensor& a, const Tensor& b) {
  Bcast mode = CheckBinary(a, b, "add");
  const Tensor& big = mode == Bcast::kLeftScalar ? b : a;
  const auto& ad = a.node()->data;
  const auto& bd = b.node()->data;
  Buffer out(big.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[mode == Bcast::kLeftScalar ? 0 : i] +
             bd[mode == Bcast::kRightScalar ? 0 : i];
  }
  NodePtr an = a.node(), bn = b.node();
  return internal::MakeResult(
      "add", big.shape(), std::move(out), {a, b},
      [an, bn, mode](const internal::Node& o) {
        if (Wants(an)) {
          auto& g = an->GradBuffer();
          for (std::size_t i = 0; i < o.grad.size(); ++i) {
            g[mode == Bcast::kLeftScalar ? 0 : i] += o.grad[i];
          }
        }
        if (Wants(bn)) {
          auto& g = bn->GradBuffer();
          for (std::size_t i = 0; i < o.grad.size(); ++i) {
            g[mode == Bcast::kRightScalar ? 0 : i] += o.grad[i];
          }
        }
      });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  return Add(a, Scale(b, -1.0));
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  Bcast mode = CheckBinary(a, b, "mul");
  const Tensor& big = mode == Bcast::kLeftScalar ? b : a;
  const auto& ad = a.node()->data;
  const auto& bd = b.node()->data;
  Buffer out(big.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ad[mode == Bcast::kLeftScalar ? 0 : i] *
             bd[mode == Bcast::kRightScalar ? 0 : i];
  }
  NodePtr an = a.node(), bn = b.node();
  return internal::MakeResult(
      "mul", big.shape(), std::move(out), {a, b},
      [an, bn, mode](const internal::Node& o) {
        auto ai = [&](std::size_t i) {
          return an->data[mode == Bcast::kLeftScalar ? 0 : i];
        };
        auto bi = [&](std::size_t i) {
          return bn->data[mode == Bcast::kRightScalar ? 0 : i];
        };
        if (Wants(an)) {
          auto& g = an->GradBuffer();
          for (std::size_t i = 0; i < o.grad.size(); ++i) {
            g[mode == Bcast::kLeftScalar ? 0 : i] += o.grad[i] * bi(i);
          }
        }
        if (Wants(bn)) {
          auto& g = bn->GradBuffer();
          for (std::size_t i = 0; i < o.grad.size(); ++i) {
            g[mode == Bcast::kRightScalar ? 0 : i] += o.grad[i] * ai(i);
          }
        }
      });
}

Tensor AddScalar(const Tensor& a, double value) {
  return Unary(
      "add_scalar", a, [value](double v) { return v + value; },
      [](double, double) { return 1.0; });
}

Tensor Scale(const Tensor& a, double factor) {
  return Unary(
      "scale", a, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor Sigmoid(const Tensor& x) {
  return Unary("sigmoid", x, StableSigmoid,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor Swish(const Tensor& x) {
  return Unary(
      "swish", x, [](double v) { return v * StableSigmoid(v); },
      [](double v, double) {
        double s = StableSigmoid(v);
        return s + v * s * (1.0 - s);
      });
}

Tensor Relu(const Tensor& x) {
  return Unary(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor Exp(const Tensor& x) {
  return Unary(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor Log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0)) {
      throw NumericError("log: non-positive input " + std::to_string(v));
    }
  }
  return Unary(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireMatrix(a, "matmul");
  RequireMatrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dims differ, " +
                         ShapeToString(a.shape()) + " x " +
                         ShapeToString(b.shape()));
  }
  Buffer out(m * n);
  AsMutMat(out, m, n).noalias() =
      AsMat(a.node()->data, m, k) * AsMat(b.node()->data, k, n);
  NodePtr an = a.node(), bn = b.node();
  return internal::MakeResult(
      "matmul", {m, n}, std::move(out), {a, b},
      [an, bn, m, k, n](const internal::Node& o) {
        ConstMap dc = AsMat(o.grad, m, n);
        if (Wants(an)) {
          AsMutMat(an->GradBuffer(), m, k).noalias() +=
              dc * AsMat(bn->data, k, n).transpose();
        }
        if (Wants(bn)) {
          AsMutMat(bn->GradBuffer(), k, n).noalias() +=
              AsMat(an->data, m, k).transpose() * dc;
        }
      });
}

Tensor Transpose(const Tensor& a) {
  RequireMatrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  Buffer out(r * c);
  AsMutMat(out, c, r) = AsMat(a.node()->data, r, c).transpose();
  NodePtr an = a.node();
  return internal::MakeResult(
      "transpose", {c, r}, std::move(out), {a},
      [an, r, c](const internal::Node& o) {
        AsMutMat(an->GradBuffer(), r, c) += AsMat(o.grad, c, r).transpose();
      });
}

Tensor Linear(const Tensor& x, const Tensor& w, const Tensor* b) {
  RequireMatrix(x, "linear");
  RequireMatrix(w, "linear");
  const std::size_t t = x.rows(), in = x.cols(), out_dim = w.cols();
  if (w.rows() != in) {
    throw DimensionError("linear: input " + ShapeToString(x.shape()) +
                         " does not match weight " + ShapeToString(w.shape()));
  }
  if (b && (b->rank() != 1 || b->dim(0) != out_dim)) {
    throw DimensionError("linear: bias " + ShapeToString(b->shape()) +
                         " does not match output width " +
                         std::to_string(out_dim));
  }
  Buffer out(t * out_dim);
  auto om = AsMutMat(out, t, out_dim);
  om.noalias() = AsMat(x.node()->data, t, in) * AsMat(w.node()->data, in, out_dim);
  if (b) {
    Eigen::Map<const Eigen::RowVectorXd> bv(b->node()->data.data(),
                                            static_cast<Eigen::Index>(out_dim));
    om.rowwise() += bv;
  }
  NodePtr xn = x.node(), wn = w.node();
  NodePtr bn = b ? b->node() : nullptr;
  std::vector<Tensor> parents{x, w};
  if (b) parents.push_back(*b);
  return internal::MakeResult(
      "linear", {t, out_dim}, std::move(out), std::move(parents),
      [xn, wn, bn, t, in, out_dim](const internal::Node& o) {
        ConstMap dy = AsMat(o.grad, t, out_dim);
        if (Wants(xn)) {
          AsMutMat(xn->GradBuffer(), t, in).noalias() +=
              dy * AsMat(wn->data, in, out_dim).transpose();
        }
        if (Wants(wn)) {
          AsMutMat(wn->GradBuffer(), in, out_dim).noalias() +=
              AsMat(xn->data, t, in).transpose() * dy;
        }
        if (bn && Wants(bn)) {
          Eigen::Map<Eigen::RowVectorXd> gb(
              bn->GradBuffer().data(), static_cast<Eigen::Index>(out_dim));
          gb += dy.colwise().sum();
        }
      });
}

Tensor Softmax(const Tensor& x, const Tensor* additive_mask) {
  if (x.rank() < 1) throw DimensionError("softmax: rank-0 input");
  if (additive_mask && additive_mask->shape() != x.shape()) {
    throw DimensionError("softmax: mask " +
                         ShapeToString(additive_mask->shape()) +
                         " does not match input " + ShapeToString(x.shape()));
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  const auto& xd = x.node()->data;
  const double* md = additive_mask ? additive_mask->data().data() : nullptr;
  Buffer out(xd.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    bool any_open = md == nullptr;
    if (md) {
      for (std::size_t j = 0; j < n; ++j) {
        if (md[base + j] > kMaskedLogit / 2) any_open = true;
      }
    }
    if (!any_open) continue;  // fully masked row stays zero
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      double v = xd[base + j] + (md ? md[base + j] : 0.0);
      mx = std::max(mx, v);
    }
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      double v = xd[base + j] + (md ? md[base + j] : 0.0);
      out[base + j] = std::exp(v - mx);
      sum += out[base + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[base + j] /= sum;
  }
  NodePtr xn = x.node();
  return internal::MakeResult(
      "softmax", x.shape(), std::move(out), {x},
      [xn, n, rows](const internal::Node& o) {
        auto& g = xn->GradBuffer();
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * n;
          double dot = 0;
          for (std::size_t j = 0; j < n; ++j) {
            dot += o.grad[base + j] * o.data[base + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            g[base + j] += o.data[base + j] * (o.grad[base + j] - dot);
          }
        }
      });
}

Tensor LogSoftmax(const Tensor& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  const auto& xd = x.node()->data;
  Buffer out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * n;
    double mx = *std::max_element(row, row + n);
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
    double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = row[j] - lse;
  }
  NodePtr xn = x.node();
  return internal::MakeResult(
      "log_softmax", x.shape(), std::move(out), {x},
      [xn, n, rows](const internal::Node& o) {
        auto& g = xn->GradBuffer();
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * n;
          double gsum = 0;
          for (std::size_t j = 0; j < n; ++j) gsum += o.grad[base + j];
          for (std::size_t j = 0; j < n; ++j) {
            g[base + j] += o.grad[base + j] - std::exp(o.data[base + j]) * gsum;
          }
        }
      });
}

Tensor GatherRows(const Tensor& x, std::span<const std::size_t> indices) {
  RequireMatrix(x, "gather_rows");
  const std::size_t t = x.rows(), d = x.cols();
  if (indices.empty()) {
    throw DimensionError("gather_rows: empty index list");
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                           " out of range for " + std::to_string(t) + " rows");
    }
    if (i > 0 && indices[i] <= indices[i - 1]) {
      throw DimensionError("gather_rows: indices must be strictly increasing");
    }
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Buffer out(idx.size() * d);
  const auto& xd = x.node()->data;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(xd.begin() + idx[i] * d, d, out.begin() + i * d);
  }
  NodePtr xn = x.node();
  return internal::MakeResult(
      "gather_rows", {idx.size(), d}, std::move(out), {x},
      [xn, idx, d](const internal::Node& o) {
        auto& g = xn->GradBuffer();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          for (std::size_t c = 0; c < d; ++c) {
            g[idx[i] * d + c] += o.grad[i * d + c];
          }
        }
      });
}

Tensor SliceCols(const Tensor& x, std::size_t start, std::size_t count) {
  RequireMatrix(x, "slice_cols");
  const std::size_t t = x.rows(), d = x.cols();
  if (count == 0 || start + count > d) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " +
                         std::to_string(d) + " columns");
  }
  Buffer out(t * count);
  const auto& xd = x.node()->data;
  for (std::size_t r = 0; r < t; ++r) {
    std::copy_n(xd.begin() + r * d + start, count, out.begin() + r * count);
  }
  NodePtr xn = x.node();
  return internal::MakeResult(
      "slice_cols", {t, count}, std::move(out), {x},
      [xn, t, d, start, count](const internal::Node& o) {
        auto& g = xn->GradBuffer();
        for (std::size_t r = 0; r < t; ++r) {
          for (std::size_t c = 0; c < count; ++c) {
            g[r * d + start + c] += o.grad[r * count + c];
          }
        }
      });
}

Tensor ConcatCols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t t = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != t) {
      throw DimensionError("concat_cols: row counts differ, " +
                           ShapeToString(parts[0].shape()) + " vs " +
                           ShapeToString(p.shape()));
    }
    total += p.cols();
  }
  Buffer out(t * total);
  std::vector<NodePtr> nodes;
  std::vector<std::size_t> widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < t; ++r) {
      std::copy_n(p.node()->data.begin() + r * w, w,
                  out.begin() + r * total + off);
    }
    off += w;
    nodes.push_back(p.node());
    widths.push_back(w);
  }
  return internal::MakeResult(
      "concat_cols", {t, total}, std::move(out), parts,
      [nodes, widths, t, total](const internal::Node& o) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          const std::size_t w = widths[k];
          if (Wants(nodes[k])) {
            auto& g = nodes[k]->GradBuffer();
            for (std::size_t r = 0; r < t; ++r) {
              for (std::size_t c = 0; c < w; ++c) {
                g[r * w + c] += o.grad[r * total + off + c];
              }
            }
          }
          off += w;
        }
      });
}

Tensor Sum(const Tensor& x) {
  double s = 0;
  for (double v : x.data()) s += v;
  NodePtr xn = x.node();
  return internal::MakeResult("sum", {1}, {s}, {x},
                              [xn](const internal::Node& o) {
                                auto& g = xn->GradBuffer();
                                for (double& v : g) v += o.grad[0];
                              });
}

Tensor Mean(const Tensor& x) {
  return Scale(Sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps) {
  RequireMatrix(x, "layer_norm");
  const std::size_t t = x.rows(), d = x.cols();
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: gain/shift must have " +
                         std::to_string(d) + " entries");
  }
  const auto& xd = x.node()->data;
  const auto& gd = gamma.node()->data;
  const auto& bd = beta.node()->data;
  Buffer out(t * d);
  Buffer xhat(t * d);
  Buffer inv_std(t);
  for (std::size_t r = 0; r < t; ++r) {
    const double* row = xd.data() + r * d;
    double mean = 0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (row[c] - mean) * inv_std[r];
      out[r * d + c] = xhat[r * d + c] * gd[c] + bd[c];
    }
  }
  NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node();
  return internal::MakeResult(
      "layer_norm", {t, d}, std::move(out), {x, gamma, beta},
      [xn, gn, bn, t, d, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const internal::Node& o) {
        if (Wants(gn) || Wants(bn)) {
          for (std::size_t r = 0; r < t; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
              if (Wants(gn)) gn->GradBuffer()[c] += o.grad[r * d + c] * xhat[r * d + c];
              if (Wants(bn)) bn->GradBuffer()[c] += o.grad[r * d + c];
            }
          }
        }
        if (!Wants(xn)) return;
        auto& g = xn->GradBuffer();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < t; ++r) {
          double sum_dxhat = 0, sum_dxhat_xhat = 0;
          for (std::size_t c = 0; c < d; ++c) {
            double dxh = o.grad[r * d + c] * gn->data[c];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xhat[r * d + c];
          }
          for (std::size_t c = 0; c < d; ++c) {
            double dxh = o.grad[r * d + c] * gn->data[c];
            g[r * d + c] += inv_std[r] * (dxh - inv_d * sum_dxhat -
                                          xhat[r * d + c] * inv_d * sum_dxhat_xhat);
          }
        }
      });
}

Tensor Glu(const Tensor& x) {
  RequireMatrix(x, "glu");
  if (x.cols() % 2 != 0) {
    throw DimensionError("glu: odd column count " + std::to_string(x.cols()));
  }
  const std::size_t n = x.cols() / 2;
  return Mul(SliceCols(x, 0, n), Sigmoid(SliceCols(x, n, n)));
}

Tensor DepthwiseConv1d(const Tensor& x, const Tensor& kernel,
                       const Tensor& bias) {
  RequireMatrix(x, "depthwise_conv1d");
  RequireMatrix(kernel, "depthwise_conv1d");
  const std::size_t t = x.rows(), c = x.cols(), k = kernel.rows();
  if (kernel.cols() != c || bias.numel() != c) {
    throw DimensionError("depthwise_conv1d: kernel " +
                         ShapeToString(kernel.shape()) + " / bias " +
                         ShapeToString(bias.shape()) + " vs input " +
                         ShapeToString(x.shape()));
  }
  if (k % 2 == 0) {
    throw DimensionError("depthwise_conv1d: kernel length must be odd, got " +
                         std::to_string(k));
  }
  const long half = static_cast<long>(k / 2);
  const auto& xd = x.node()->data;
  const auto& kd = kernel.node()->data;
  const auto& bd = bias.node()->data;
  Buffer out(t * c);
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t ch = 0; ch < c; ++ch) out[r * c + ch] = bd[ch];
    for (std::size_t j = 0; j < k; ++j) {
      long src = static_cast<long>(r) + static_cast<long>(j) - half;
      if (src < 0 || src >= static_cast<long>(t)) continue;
      const double* xr = xd.data() + static_cast<std::size_t>(src) * c;
      const double* kr = kd.data() + j * c;
      double* orow = out.data() + r * c;
      for (std::size_t ch = 0; ch < c; ++ch) orow[ch] += xr[ch] * kr[ch];
    }
  }
  NodePtr xn = x.node(), kn = kernel.node(), bn = bias.node();
  return internal::MakeResult(
      "depthwise_conv1d", {t, c}, std::move(out), {x, kernel, bias},
      [xn, kn, bn, t, c, k, half](const internal::Node& o) {
        if (Wants(bn)) {
          auto& gb = bn->GradBuffer();
          for (std::size_t r = 0; r < t; ++r) {
            for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += o.grad[r * c + ch];
          }
        }
        for (std::size_t r = 0; r < t; ++r) {
          for (std::size_t j = 0; j < k; ++j) {
            long src = static_cast<long>(r) + static_cast<long>(j) - half;
            if (src < 0 || src >= static_cast<long>(t)) continue;
            const std::size_t s = static_cast<std::size_t>(src);
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double go = o.grad[r * c + ch];
              if (Wants(kn)) kn->GradBuffer()[j * c + ch] += go * xn->data[s * c + ch];
              if (Wants(xn)) xn->GradBuffer()[s * c + ch] += go * kn->data[j * c + ch];
            }
          }
        }
      });
}

Tensor UnfoldFrames(const Tensor& x, std::size_t kernel, std::size_t stride,
                    std::size_t pad) {
  RequireMatrix(x, "unfold_frames");
  const std::size_t t = x.rows(), f = x.cols();
  if (kernel == 0 || stride == 0 || t + 2 * pad < kernel) {
    throw DimensionError("unfold_frames: kernel " + std::to_string(kernel) +
                         " does not fit " + std::to_string(t) +
                         " frames with padding " + std::to_string(pad));
  }
  const std::size_t t_out = (t + 2 * pad - kernel) / stride + 1;
  const std::size_t w = kernel * f;
  Buffer out(t_out * w, 0.0);
  const auto& xd = x.node()->data;
  for (std::size_t r = 0; r < t_out; ++r) {
    for (std::size_t j = 0; j < kernel; ++j) {
      long src = static_cast<long>(r * stride + j) - static_cast<long>(pad);
      if (src < 0 || src >= static_cast<long>(t)) continue;
      std::copy_n(xd.begin() + static_cast<std::size_t>(src) * f, f,
                  out.begin() + r * w + j * f);
    }
  }
  NodePtr xn = x.node();
  return internal::MakeResult(
      "unfold_frames", {t_out, w}, std::move(out), {x},
      [xn, t, f, t_out, w, kernel, stride, pad](const internal::Node& o) {
        auto& g = xn->GradBuffer();
        for (std::size_t r = 0; r < t_out; ++r) {
          for (std::size_t j = 0; j < kernel; ++j) {
            long src = static_cast<long>(r * stride + j) - static_cast<long>(pad);
            if (src < 0 || src >= static_cast<long>(t)) continue;
            const std::size_t s = static_cast<std::size_t>(src);
            for (std::size_t c = 0; c < f; ++c) {
              g[s * f + c] += o.grad[r * w + j * f + c];
            }
          }
        }
      });
}

}  // namespace kfc
