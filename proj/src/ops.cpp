// Copyright 2026 The ctxmt Authors. All Rights Reserved.
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

#include "ctxmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ctxmt/error.hpp"

namespace ctxmt::ops {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (GradTape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor make(Shape shape, std::vector<double> value, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " +
                       shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

// Four independent accumulators; keeps the reduction order fixed while
// letting the compiler pipeline the loop.
inline double dot(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) s0 += x[i] * y[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) mismatch("matmul", a, b);
  std::vector<double> out(n * m, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) axpy(A[i * k + kk], B + kk * m, row, m);
  }
  const bool rg = tracking({&a, &b});
  Tensor result = make({n, m}, std::move(out), rg);
  if (rg) {
    NodePtr na = a.node(), nb = b.node(), no = result.node();
    GradTape::active()->record([na, nb, no, n, k, m] {
      const double* G = no->grad_buffer().data();
      if (na->requires_grad) {
        double* dA = na->grad_buffer().data();
        const double* B = nb->value.data();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t kk = 0; kk < k; ++kk)
            dA[i * k + kk] += dot(G + i * m, B + kk * m, m);
      }
      if (nb->requires_grad) {
        double* dB = nb->grad_buffer().data();
        const double* A = na->value.data();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) axpy(A[i * k + kk], G + i * m, dB + kk * m, m);
      }
    });
  }
  return result;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_bt");
  require_matrix(b, "matmul_bt");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
  if (b.dim(1) != k) mismatch("matmul_bt", a, b);
  std::vector<double> out(n * m);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = dot(A + i * k, B + j * k, k);
  const bool rg = tracking({&a, &b});
  Tensor result = make({n, m}, std::move(out), rg);
  if (rg) {
    NodePtr na = a.node(), nb = b.node(), no = result.node();
    GradTape::active()->record([na, nb, no, n, k, m] {
      const double* G = no->grad_buffer().data();
      if (na->requires_grad) {
        double* dA = na->grad_buffer().data();
        const double* B = nb->value.data();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) axpy(G[i * m + j], B + j * k, dA + i * k, k);
      }
      if (nb->requires_grad) {
        double* dB = nb->grad_buffer().data();
        const double* A = na->value.data();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) axpy(G[i * m + j], A + i * k, dB + j * k, k);
      }
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  const bool rg = tracking({&a, &b});
  Tensor result = make(a.shape(), std::move(out), rg);
  if (rg) {
    NodePtr na = a.node(), nb = b.node(), no = result.node();
    GradTape::active()->record([na, nb, no] {
      const auto& g = no->grad_buffer();
      if (na->requires_grad) {
        auto& d = na->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      if (nb->requires_grad) {
        auto& d = nb->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    });
  }
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  const bool rg = tracking({&a, &b});
  Tensor result = make(a.shape(), std::move(out), rg);
  if (rg) {
    NodePtr na = a.node(), nb = b.node(), no = result.node();
    GradTape::active()->record([na, nb, no] {
      const auto& g = no->grad_buffer();
      if (na->requires_grad) {
        auto& d = na->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * nb->value[i];
      }
      if (nb->requires_grad) {
        auto& d = nb->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * na->value[i];
      }
    });
  }
  return result;
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.rows(), d = x.cols();
  if (bias.numel() != d) mismatch("add_row", x, bias);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] + bias[j];
  const bool rg = tracking({&x, &bias});
  Tensor result = make(x.shape(), std::move(out), rg);
  if (rg) {
    NodePtr nx = x.node(), nb = bias.node(), no = result.node();
    GradTape::active()->record([nx, nb, no, n, d] {
      const auto& g = no->grad_buffer();
      if (nx->requires_grad) {
        auto& dx = nx->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
      }
      if (nb->requires_grad) {
        auto& db = nb->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
      }
    });
  }
  return result;
}

Tensor mul_col(const Tensor& x, const Tensor& g) {
  const std::size_t n = x.rows(), d = x.cols();
  if (g.numel() != n) mismatch("mul_col", x, g);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] * g[i];
  const bool rg = tracking({&x, &g});
  Tensor result = make(x.shape(), std::move(out), rg);
  if (rg) {
    NodePtr nx = x.node(), ng = g.node(), no = result.node();
    GradTape::active()->record([nx, ng, no, n, d] {
      const auto& go = no->grad_buffer();
      if (nx->requires_grad) {
        auto& dx = nx->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += go[i * d + j] * ng->value[i];
      }
      if (ng->requires_grad) {
        auto& dg = ng->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
          dg[i] += dot(go.data() + i * d, nx->value.data() + i * d, d);
      }
    });
  }
  return result;
}

Tensor affine(const Tensor& x, double scale, double shift) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * x[i] + shift;
  const bool rg = tracking({&x});
  Tensor result = make(x.shape(), std::move(out), rg);
  if (rg) {
    NodePtr nx = x.node(), no = result.node();
    GradTape::active()->record([nx, no, scale] {
      const auto& g = no->grad_buffer();
      auto& d = nx->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += scale * g[i];
    });
  }
  return result;
}

namespace {

// Elementwise map whose derivative is expressed through input and output.
template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  const bool rg = tracking({&x});
  Tensor result = make(x.shape(), std::move(out), rg);
  if (rg) {
    NodePtr nx = x.node(), no = result.node();
    GradTape::active()->record([nx, no, df] {
      const auto& g = no->grad_buffer();
      auto& d = nx->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * df(nx->value[i], no->value[i]);
    });
  }
  return result;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        const double u = kGeluC * (v + 0.044715 * v * v * v);
        return 0.5 * v * (1.0 + std::tanh(u));
      },
      [](double v, double) {
        const double u = kGeluC * (v + 0.044715 * v * v * v);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
}

namespace {

Tensor softmax_impl(const Tensor& x, std::span<const std::uint8_t> allowed) {
  const std::size_t n = x.rows(), d = x.cols();
  const bool masked = !allowed.empty();
  if (masked && allowed.size() != n * d) {
    throw DimensionError("masked_softmax_rows: mask has " +
                         std::to_string(allowed.size()) + " entries for shape " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(x.numel(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* in = x.data().data() + i * d;
    double* o = out.data() + i * d;
    const std::uint8_t* ok = masked ? allowed.data() + i * d : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d; ++j)
      if (!ok || ok[j]) mx = std::max(mx, in[j]);
    if (mx == -std::numeric_limits<double>::infinity()) continue;
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (ok && !ok[j]) continue;
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < d; ++j) o[j] *= inv;
  }
  const bool rg = tracking({&x});
  Tensor result = make(x.shape(), std::move(out), rg);
  if (rg) {
    NodePtr nx = x.node(), no = result.node();
    GradTape::active()->record([nx, no, n, d] {
      const auto& g = no->grad_buffer();
      const auto& y = no->value;
      auto& dx = nx->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const double s = dot(g.data() + i * d, y.data() + i * d, d);
        for (std::size_t j = 0; j < d; ++j)
          dx[i * d + j] += y[i * d + j] * (g[i * d + j] - s);
      }
    });
  }
  return result;
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  if (x.numel() == 0 || x.cols() == 0) {
    throw DimensionError("softmax_rows: empty last dimension");
  }
  return softmax_impl(x, {});
}

Tensor masked_softmax_rows(const Tensor& x, std::span<const std::uint8_t> allowed) {
  if (allowed.empty() && x.numel() != 0) {
    throw DimensionError("masked_softmax_rows: empty mask");
  }
  return softmax_impl(x, allowed);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double epsilon) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.numel() != d) mismatch("layer_norm gain", x, gain);
  if (bias.numel() != d) mismatch("layer_norm bias", x, bias);
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* in = x.data().data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (in[j] - mean) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gain[j] + bias[j];
    }
  }
  const bool rg = tracking({&x, &gain, &bias});
  Tensor result = make(x.shape(), std::move(out), rg);
  if (rg) {
    NodePtr nx = x.node(), ng = gain.node(), nb = bias.node(), no = result.node();
    GradTape::active()->record(
        [nx, ng, nb, no, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
          const auto& g = no->grad_buffer();
          if (ng->requires_grad) {
            auto& dg = ng->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < d; ++j) dg[j] += g[i * d + j] * xhat[i * d + j];
          }
          if (nb->requires_grad) {
            auto& db = nb->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
          }
          if (nx->requires_grad) {
            auto& dx = nx->grad_buffer();
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t i = 0; i < n; ++i) {
              double sum_gy = 0.0, sum_gy_xhat = 0.0;
              for (std::size_t j = 0; j < d; ++j) {
                const double gy = g[i * d + j] * ng->value[j];
                sum_gy += gy;
                sum_gy_xhat += gy * xhat[i * d + j];
              }
              for (std::size_t j = 0; j < d; ++j) {
                const double gy = g[i * d + j] * ng->value[j];
                dx[i * d + j] += inv_std[i] *
                                 (gy - inv_d * sum_gy - xhat[i * d + j] * inv_d * sum_gy_xhat);
              }
            }
          }
        });
  }
  return result;
}

Tensor cross_entropy_smoothed(const Tensor& logits, std::span<const TokenId> targets,
                              double smoothing, TokenId pad_id) {
  require_matrix(logits, "cross_entropy_smoothed");
  const std::size_t n = logits.dim(0), v = logits.dim(1);
  if (targets.size() != n) {
    throw DimensionError("cross_entropy_smoothed: " + std::to_string(targets.size()) +
                         " targets for logits of shape " + shape_string(logits.shape()));
  }
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw UsageError("cross_entropy_smoothed: smoothing must lie in [0, 1), got " +
                     std::to_string(smoothing));
  }
  std::size_t counted = 0;
  for (TokenId t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw UsageError("cross_entropy_smoothed: target id " + std::to_string(t) +
                       " outside vocabulary of size " + std::to_string(v));
    }
    ++counted;
  }
  const double uniform = smoothing / static_cast<double>(v);
  std::vector<double> probs(n * v, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] == pad_id) continue;
    const double* row = logits.data().data() + i * v;
    double mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    double sum_logp = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      const double logp = row[j] - log_z;
      probs[i * v + j] = std::exp(logp);
      sum_logp += logp;
    }
    const double target_logp = row[static_cast<std::size_t>(targets[i])] - log_z;
    total += -(1.0 - smoothing) * target_logp - uniform * sum_logp;
  }
  const double denom = counted ? static_cast<double>(counted) : 1.0;
  const bool rg = counted > 0 && tracking({&logits});
  Tensor result = make({1}, {total / denom}, rg);
  if (rg) {
    NodePtr nl = logits.node(), no = result.node();
    std::vector<TokenId> tgt(targets.begin(), targets.end());
    GradTape::active()->record(
        [nl, no, n, v, denom, smoothing, uniform, pad_id, tgt = std::move(tgt),
         probs = std::move(probs)] {
          const double g = no->grad_buffer()[0] / denom;
          auto& dl = nl->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            if (tgt[i] == pad_id) continue;
            for (std::size_t j = 0; j < v; ++j) dl[i * v + j] += g * (probs[i * v + j] - uniform);
            dl[i * v + static_cast<std::size_t>(tgt[i])] -= g * (1.0 - smoothing);
          }
        });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const bool rg = tracking({&x});
  Tensor result = make({1}, {total}, rg);
  if (rg) {
    NodePtr nx = x.node(), no = result.node();
    GradTape::active()->record([nx, no] {
      const double g = no->grad_buffer()[0];
      for (double& d : nx->grad_buffer()) d += g;
    });
  }
  return result;
}

Tensor weighted_sum(std::span<const Tensor> terms, std::span<const double> weights) {
  if (terms.size() != weights.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(terms.size()) + " terms, " +
                         std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  bool rg = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    total += weights[i] * terms[i].item();
    rg = rg || tracking({&terms[i]});
  }
  Tensor result = make({1}, {total}, rg);
  if (rg) {
    std::vector<NodePtr> nodes;
    for (const auto& t : terms) nodes.push_back(t.node());
    std::vector<double> w(weights.begin(), weights.end());
    NodePtr no = result.node();
    GradTape::active()->record([nodes = std::move(nodes), w = std::move(w), no] {
      const double g = no->grad_buffer()[0];
      for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i]->requires_grad) nodes[i]->grad_buffer()[0] += w[i] * g;
    });
  }
  return result;
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows) {
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= v) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) +
                           " outside table of shape " + shape_string(table.shape()));
    }
    std::copy_n(table.data().data() + rows[i] * d, d, out.data() + i * d);
  }
  const bool rg = tracking({&table});
  Tensor result = make({rows.size(), d}, std::move(out), rg);
  if (rg) {
    NodePtr nt = table.node(), no = result.node();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    GradTape::active()->record([nt, no, d, idx = std::move(idx)] {
      const auto& g = no->grad_buffer();
      auto& dt = nt->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) dt[idx[i] * d + j] += g[i * d + j];
    });
  }
  return result;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  const std::size_t n = x.rows(), d = x.cols();
  if (start + count > d) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside shape " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(n * count);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.data().data() + i * d + start, count, out.data() + i * count);
  const bool rg = tracking({&x});
  Tensor result = make({n, count}, std::move(out), rg);
  if (rg) {
    NodePtr nx = x.node(), no = result.node();
    GradTape::active()->record([nx, no, n, d, start, count] {
      const auto& g = no->grad_buffer();
      auto& dx = nx->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < count; ++j) dx[i * d + start + j] += g[i * count + j];
    });
  }
  return result;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t d = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rows() != n) mismatch("concat_cols", parts[0], p);
    d += p.cols();
    rg = rg || tracking({&p});
  }
  std::vector<double> out(n * d);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(p.data().data() + i * c, c, out.data() + i * d + offset);
    offset += c;
  }
  Tensor result = make({n, d}, std::move(out), rg);
  if (rg) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    NodePtr no = result.node();
    GradTape::active()->record([nodes = std::move(nodes), no, n, d] {
      const auto& g = no->grad_buffer();
      std::size_t off = 0;
      for (const auto& np : nodes) {
        const std::size_t c = np->shape.back();
        if (np->requires_grad) {
          auto& dp = np->grad_buffer();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) dp[i * c + j] += g[i * d + off + j];
        }
        off += c;
      }
    });
  }
  return result;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = parts[0].cols();
  std::size_t n = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.cols() != d) mismatch("concat_rows", parts[0], p);
    n += p.rows();
    rg = rg || tracking({&p});
  }
  std::vector<double> out;
  out.reserve(n * d);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor result = make({n, d}, std::move(out), rg);
  if (rg) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    NodePtr no = result.node();
    GradTape::active()->record([nodes = std::move(nodes), no] {
      const auto& g = no->grad_buffer();
      std::size_t off = 0;
      for (const auto& np : nodes) {
        const std::size_t len = np->value.size();
        if (np->requires_grad) {
          auto& dp = np->grad_buffer();
          for (std::size_t i = 0; i < len; ++i) dp[i] += g[off + i];
        }
        off += len;
      }
    });
  }
  return result;
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw UsageError("dropout rate must be below 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = keep(rng) ? keep_scale : 0.0;
  return mul(x, Tensor::from_data(x.shape(), std::move(mask)));
}

}  // namespace ctxmt::ops
