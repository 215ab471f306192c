#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gense::ad {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

/// A trainable tensor: value plus accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
};

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode tape. Every op appends a node; backward() walks the tape in
// reverse. A tape built with record_gradients=false evaluates values only and
// is what inference paths use. Parameter gradients are accumulated into
// Parameter::grad (never overwritten), so several tapes may contribute to
// one optimizer step.
class Tape {
 public:
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}

  Var constant(Matrix value);
  Var parameter(Parameter& p);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);     // a[n,k] * b[k,m]
  Var matmul_nt(Var a, Var b);  // a[n,k] * b[m,k]^T
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // a[n,m] + row[1,m] broadcast over rows
  Var scale(Var a, double factor);
  Var gelu(Var a);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  /// Row softmax. With `causal`, entry (i, j) is masked out for j > i.
  Var softmax_rows(Var x, bool causal);
  Var gather_rows(Var table, std::span<const int> ids);
  Var slice_rows(Var x, std::size_t begin, std::size_t count);
  Var slice_cols(Var x, std::size_t begin, std::size_t count);
  Var concat_cols(std::span<const Var> parts);
  /// out[t] = log_softmax(logits[t])[targets[t]], shape [T,1].
  Var token_log_probs(Var logits, std::span<const int> targets);
  Var sum(Var x);  // [1,1]

  /// Seeds d(root)/d(root) = 1 for a [1,1] root and back-propagates.
  void backward(Var root);
  /// Back-propagates externally supplied output gradients.
  void backward(std::span<const std::pair<Var, Matrix>> seeds);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> backprop;
    Parameter* param = nullptr;
  };

  Var push(Matrix value, std::function<void()> backprop = {});
  void run_backward(std::size_t last);
  Matrix& g(Var v) { return nodes_[v.id].grad; }
  const Matrix& val(Var v) const { return nodes_[v.id].value; }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace gense::ad
