// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Minimal reverse-mode automatic differentiation over dense 2-D matrices.
//
// Every value is a rows x cols double matrix. Sequences are laid out with one
// time step per row and one channel per column (T x C), which is the layout
// used by all the convolution and attention ops below.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace vclone::ag {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

struct Node;
using NodePtr = std::shared_ptr<Node>;
// Called with the finished node; `self.grad` holds dL/d(self.value).
using BackwardFn = std::function<void(const Node& self)>;

struct Node {
  Matrix value;
  Matrix grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const { return node_->value(0, 0); }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool defined() const { return static_cast<bool>(node_); }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Disables graph construction on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var constant(Matrix value);
Var parameter(Matrix value);

// Builds an op result. `backward` must call accumulate() on the parents that
// require a gradient. When no parent needs one (or grad mode is off) the
// closure is dropped.
Var make_op(Matrix value, std::vector<Var> parents, BackwardFn backward);

// Runs backpropagation from a 1x1 loss.
void backward(const Var& loss);

// Elementwise arithmetic. Shapes must match exactly except where noted.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // row is 1 x cols, broadcast
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias,
                    double eps = 1e-5);

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
// out.row(i) = a.row(index[i]); backward scatter-adds.
Var gather_rows(const Var& a, std::span<const Eigen::Index> index);

struct ConvSpec {
  int kernel = 1;
  int stride = 1;
  int dilation = 1;
  int padding = 0;  // zero padding applied on both ends
};

// x: L x Cin, weight: (kernel*Cin) x Cout, bias: 1 x Cout (may be undefined).
Var conv1d(const Var& x, const Var& weight, const Var& bias,
           const ConvSpec& spec);
// Transposed convolution; weight: Cin x (kernel*Cout).
// Output length (L-1)*stride - 2*padding + kernel.
Var conv_transpose1d(const Var& x, const Var& weight, const Var& bias,
                     const ConvSpec& spec);
Var avg_pool1d(const Var& x, int kernel, int stride, int padding);

// out[t, i] = -||query[t] - key[i]||^2
Var neg_sq_distance(const Var& queries, const Var& keys);

Var mse(const Var& a, const Var& b);
Var l1(const Var& a, const Var& b);

Eigen::Index conv_output_length(Eigen::Index length, const ConvSpec& spec);

}  // namespace vclone::ag
