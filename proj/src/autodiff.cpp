#include "gense/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gense::ad {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("autodiff shape mismatch: ") + what);
}

// c += a * b
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* crow = c.data.data() + i * c.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c += a * b^T
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.data.data() + j * b.cols;
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      c(i, j) += acc;
    }
  }
}

// c += a^T * b
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.data.data() + k * a.cols;
    const double* brow = b.data.data() + k * b.cols;
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = c.data.data() + i * c.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
}

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;

}  // namespace

Var Tape::push(Matrix value, std::function<void()> backprop) {
  Node node;
  node.value = std::move(value);
  if (record_) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value)); }

Var Tape::parameter(Parameter& p) {
  Var v = push(p.value);
  if (record_) nodes_[v.id].param = &p;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& A = val(a);
  const Matrix& B = val(b);
  require(A.cols == B.rows, "matmul");
  Matrix C(A.rows, B.cols);
  gemm_acc(A, B, C);
  Var out{nodes_.size()};
  return push(std::move(C), [this, a, b, out] {
    gemm_nt_acc(g(out), val(b), g(a));
    gemm_tn_acc(val(a), g(out), g(b));
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  const Matrix& A = val(a);
  const Matrix& B = val(b);
  require(A.cols == B.cols, "matmul_nt");
  Matrix C(A.rows, B.rows);
  gemm_nt_acc(A, B, C);
  Var out{nodes_.size()};
  return push(std::move(C), [this, a, b, out] {
    gemm_acc(g(out), val(b), g(a));
    gemm_tn_acc(g(out), val(a), g(b));
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& A = val(a);
  const Matrix& B = val(b);
  require(A.rows == B.rows && A.cols == B.cols, "add");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
  Var out{nodes_.size()};
  return push(std::move(C), [this, a, b, out] {
    const Matrix& G = g(out);
    Matrix& GA = g(a);
    Matrix& GB = g(b);
    for (std::size_t i = 0; i < G.size(); ++i) {
      GA.data[i] += G.data[i];
      GB.data[i] += G.data[i];
    }
  });
}

Var Tape::add_row(Var a, Var row) {
  const Matrix& A = val(a);
  const Matrix& R = val(row);
  require(R.rows == 1 && R.cols == A.cols, "add_row");
  Matrix C = A;
  for (std::size_t i = 0; i < C.rows; ++i)
    for (std::size_t j = 0; j < C.cols; ++j) C(i, j) += R(0, j);
  Var out{nodes_.size()};
  return push(std::move(C), [this, a, row, out] {
    const Matrix& G = g(out);
    Matrix& GA = g(a);
    Matrix& GR = g(row);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) {
        GA(i, j) += G(i, j);
        GR(0, j) += G(i, j);
      }
  });
}

Var Tape::scale(Var a, double factor) {
  Matrix C = val(a);
  for (double& x : C.data) x *= factor;
  Var out{nodes_.size()};
  return push(std::move(C), [this, a, out, factor] {
    const Matrix& G = g(out);
    Matrix& GA = g(a);
    for (std::size_t i = 0; i < G.size(); ++i) GA.data[i] += factor * G.data[i];
  });
}

Var Tape::gelu(Var a) {
  const Matrix& A = val(a);
  Matrix C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) {
    const double x = A.data[i];
    const double t = std::tanh(kGeluScale * (x + kGeluCubic * x * x * x));
    C.data[i] = 0.5 * x * (1.0 + t);
  }
  Var out{nodes_.size()};
  return push(std::move(C), [this, a, out] {
    const Matrix& X = val(a);
    const Matrix& G = g(out);
    Matrix& GA = g(a);
    for (std::size_t i = 0; i < X.size(); ++i) {
      const double x = X.data[i];
      const double t = std::tanh(kGeluScale * (x + kGeluCubic * x * x * x));
      const double dt = (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
      GA.data[i] += G.data[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
    }
  });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& X = val(x);
  const Matrix& Gm = val(gain);
  const Matrix& Bs = val(bias);
  require(Gm.rows == 1 && Gm.cols == X.cols && Bs.rows == 1 && Bs.cols == X.cols, "layer_norm");
  const std::size_t n = X.rows;
  const std::size_t m = X.cols;
  Matrix Y(n, m);
  Matrix normalized(n, m);
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean += X(i, j);
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (X(i, j) - mean) * (X(i, j) - mean);
    var /= static_cast<double>(m);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      normalized(i, j) = (X(i, j) - mean) * inv_std[i];
      Y(i, j) = normalized(i, j) * Gm(0, j) + Bs(0, j);
    }
  }
  Var out{nodes_.size()};
  return push(std::move(Y), [this, x, gain, bias, out, normalized = std::move(normalized),
                             inv_std = std::move(inv_std)] {
    const Matrix& G = g(out);
    const Matrix& Gm = val(gain);
    Matrix& GX = g(x);
    Matrix& GG = g(gain);
    Matrix& GB = g(bias);
    const std::size_t m = G.cols;
    std::vector<double> dnorm(m);
    for (std::size_t i = 0; i < G.rows; ++i) {
      double mean_d = 0.0;
      double mean_dx = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        GG(0, j) += G(i, j) * normalized(i, j);
        GB(0, j) += G(i, j);
        dnorm[j] = G(i, j) * Gm(0, j);
        mean_d += dnorm[j];
        mean_dx += dnorm[j] * normalized(i, j);
      }
      mean_d /= static_cast<double>(m);
      mean_dx /= static_cast<double>(m);
      for (std::size_t j = 0; j < m; ++j)
        GX(i, j) += inv_std[i] * (dnorm[j] - mean_d - normalized(i, j) * mean_dx);
    }
  });
}

Var Tape::softmax_rows(Var x, bool causal) {
  const Matrix& X = val(x);
  Matrix Y(X.rows, X.cols);
  for (std::size_t i = 0; i < X.rows; ++i) {
    const std::size_t width = causal ? std::min(X.cols, i + 1) : X.cols;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) peak = std::max(peak, X(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      Y(i, j) = std::exp(X(i, j) - peak);
      total += Y(i, j);
    }
    for (std::size_t j = 0; j < width; ++j) Y(i, j) /= total;
  }
  Var out{nodes_.size()};
  return push(std::move(Y), [this, x, out] {
    const Matrix& Yv = val(out);
    const Matrix& G = g(out);
    Matrix& GX = g(x);
    for (std::size_t i = 0; i < Yv.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < Yv.cols; ++j) dot += G(i, j) * Yv(i, j);
      for (std::size_t j = 0; j < Yv.cols; ++j) GX(i, j) += Yv(i, j) * (G(i, j) - dot);
    }
  });
}

Var Tape::gather_rows(Var table, std::span<const int> ids) {
  const Matrix& T = val(table);
  Matrix C(ids.size(), T.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < T.rows, "gather_rows index");
    std::copy_n(T.row(ids[i]).begin(), T.cols, C.row(i).begin());
  }
  Var out{nodes_.size()};
  return push(std::move(C), [this, table, out, rows = std::vector<int>(ids.begin(), ids.end())] {
    const Matrix& G = g(out);
    Matrix& GT = g(table);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < G.cols; ++j) GT(rows[i], j) += G(i, j);
  });
}

Var Tape::slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Matrix& X = val(x);
  require(begin + count <= X.rows, "slice_rows");
  Matrix C(count, X.cols);
  std::copy_n(X.data.begin() + begin * X.cols, count * X.cols, C.data.begin());
  Var out{nodes_.size()};
  return push(std::move(C), [this, x, out, begin] {
    const Matrix& G = g(out);
    Matrix& GX = g(x);
    for (std::size_t i = 0; i < G.size(); ++i) GX.data[begin * GX.cols + i] += G.data[i];
  });
}

Var Tape::slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Matrix& X = val(x);
  require(begin + count <= X.cols, "slice_cols");
  Matrix C(X.rows, count);
  for (std::size_t i = 0; i < X.rows; ++i)
    for (std::size_t j = 0; j < count; ++j) C(i, j) = X(i, begin + j);
  Var out{nodes_.size()};
  return push(std::move(C), [this, x, out, begin] {
    const Matrix& G = g(out);
    Matrix& GX = g(x);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) GX(i, begin + j) += G(i, j);
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t rows = val(parts[0]).rows;
  std::size_t cols = 0;
  for (Var p : parts) {
    require(val(p).rows == rows, "concat_cols rows");
    cols += val(p).cols;
  }
  Matrix C(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Matrix& P = val(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < P.cols; ++j) C(i, offset + j) = P(i, j);
    offset += P.cols;
  }
  Var out{nodes_.size()};
  return push(std::move(C), [this, out, pieces = std::vector<Var>(parts.begin(), parts.end())] {
    const Matrix& G = g(out);
    std::size_t offset = 0;
    for (Var p : pieces) {
      Matrix& GP = g(p);
      for (std::size_t i = 0; i < GP.rows; ++i)
        for (std::size_t j = 0; j < GP.cols; ++j) GP(i, j) += G(i, offset + j);
      offset += GP.cols;
    }
  });
}

Var Tape::token_log_probs(Var logits, std::span<const int> targets) {
  const Matrix& L = val(logits);
  require(targets.size() == L.rows, "token_log_probs rows");
  Matrix C(L.rows, 1);
  Matrix probs(L.rows, L.cols);
  for (std::size_t t = 0; t < L.rows; ++t) {
    require(targets[t] >= 0 && static_cast<std::size_t>(targets[t]) < L.cols,
            "token_log_probs target");
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < L.cols; ++j) peak = std::max(peak, L(t, j));
    double total = 0.0;
    for (std::size_t j = 0; j < L.cols; ++j) {
      probs(t, j) = std::exp(L(t, j) - peak);
      total += probs(t, j);
    }
    for (std::size_t j = 0; j < L.cols; ++j) probs(t, j) /= total;
    C(t, 0) = L(t, targets[t]) - peak - std::log(total);
  }
  Var out{nodes_.size()};
  return push(std::move(C), [this, logits, out, probs = std::move(probs),
                             tgt = std::vector<int>(targets.begin(), targets.end())] {
    const Matrix& G = g(out);
    Matrix& GL = g(logits);
    for (std::size_t t = 0; t < probs.rows; ++t) {
      const double gt = G(t, 0);
      for (std::size_t j = 0; j < probs.cols; ++j) GL(t, j) -= gt * probs(t, j);
      GL(t, tgt[t]) += gt;
    }
  });
}

Var Tape::sum(Var x) {
  const Matrix& X = val(x);
  Matrix C(1, 1);
  for (double v : X.data) C.data[0] += v;
  Var out{nodes_.size()};
  return push(std::move(C), [this, x, out] {
    const double G = g(out).data[0];
    for (double& v : g(x).data) v += G;
  });
}

void Tape::run_backward(std::size_t last) {
  for (std::size_t i = last + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backprop) node.backprop();
    if (node.param != nullptr) {
      Matrix& acc = node.param->grad;
      for (std::size_t k = 0; k < acc.size(); ++k) acc.data[k] += node.grad.data[k];
    }
  }
}

void Tape::backward(Var root) {
  if (!record_) throw std::logic_error("backward on a tape that does not record gradients");
  require(val(root).rows == 1 && val(root).cols == 1, "backward root must be scalar");
  for (Node& node : nodes_) node.grad = Matrix(node.value.rows, node.value.cols);
  nodes_[root.id].grad.data[0] = 1.0;
  run_backward(root.id);
}

void Tape::backward(std::span<const std::pair<Var, Matrix>> seeds) {
  if (!record_) throw std::logic_error("backward on a tape that does not record gradients");
  for (Node& node : nodes_) node.grad = Matrix(node.value.rows, node.value.cols);
  std::size_t last = 0;
  for (const auto& [v, seed] : seeds) {
    Matrix& G = nodes_[v.id].grad;
    require(seed.rows == G.rows && seed.cols == G.cols, "backward seed shape");
    for (std::size_t k = 0; k < G.size(); ++k) G.data[k] += seed.data[k];
    last = std::max(last, v.id);
  }
  if (!seeds.empty()) run_backward(last);
}

}  // namespace gense::ad
