// Copyright 2026 The vclone Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vclone/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace vclone::ag {

namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(
        std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
        "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
        "x" + std::to_string(b.cols()));
  }
}

Node& node_of(const Var& v) { return *v.node(); }

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var parameter(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var make_op(Matrix value, std::vector<Var> parents, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled) {
    bool any = std::any_of(parents.begin(), parents.end(), [](const Var& p) {
      return p.defined() && p.requires_grad();
    });
    if (any) {
      n->requires_grad = true;
      n->backward = std::move(backward);
      n->parents.reserve(parents.size());
      for (auto& p : parents) {
        if (p.defined()) n->parents.push_back(p.node());
      }
    }
  }
  return Var(std::move(n));
}

void backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward: loss must be 1x1");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  // Owning pointers keep every node alive until the sweep ends, since
  // clearing a node's closure may drop the last reference to a parent.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      std::shared_ptr<Node> p = node->parents[next++];
      if (p->requires_grad && visited.insert(p.get()).second) {
        stack.emplace_back(std::move(p), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = it->get();
    if (!n->backward) continue;  // leaf
    if (n->grad.size() != 0) n->backward(*n);
    // Interior nodes are single-use; release the graph as we go.
    n->grad.resize(0, 0);
    n->backward = nullptr;
    n->parents.clear();
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [a, b](const Node& self) {
    if (a.requires_grad()) node_of(a).accumulate(self.grad);
    if (b.requires_grad()) node_of(b).accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [a, b](const Node& self) {
    if (a.requires_grad()) node_of(a).accumulate(self.grad);
    if (b.requires_grad()) node_of(b).accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make_op(a.value().cwiseProduct(b.value()), {a, b},
                 [a, b](const Node& self) {
                   if (a.requires_grad())
                     node_of(a).accumulate(self.grad.cwiseProduct(b.value()));
                   if (b.requires_grad())
                     node_of(b).accumulate(self.grad.cwiseProduct(a.value()));
                 });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [a, s](const Node& self) {
    node_of(a).accumulate(self.grad * s);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: row must be 1 x cols");
  }
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make_op(std::move(out), {a, row}, [a, row](const Node& self) {
    if (a.requires_grad()) node_of(a).accumulate(self.grad);
    if (row.requires_grad())
      node_of(row).accumulate(self.grad.colwise().sum());
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimension mismatch");
  }
  Matrix out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [a, b](const Node& self) {
    if (a.requires_grad()) {
      Matrix ga(a.rows(), a.cols());
      ga.noalias() = self.grad * b.value().transpose();
      node_of(a).accumulate(ga);
    }
    if (b.requires_grad()) {
      Matrix gb(b.rows(), b.cols());
      gb.noalias() = a.value().transpose() * self.grad;
      node_of(b).accumulate(gb);
    }
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a}, [a](const Node& self) {
    node_of(a).accumulate(self.grad.transpose());
  });
}

Var relu(const Var& a) {
  return make_op(a.value().cwiseMax(0.0), {a}, [a](const Node& self) {
    Matrix g = (a.value().array() > 0.0).select(self.grad, 0.0);
    node_of(a).accumulate(g);
  });
}

Var leaky_relu(const Var& a, double slope) {
  Matrix out = (a.value().array() > 0.0)
                   .select(a.value(), a.value() * slope);
  return make_op(std::move(out), {a}, [a, slope](const Node& self) {
    Matrix g =
        (a.value().array() > 0.0).select(self.grad, self.grad * slope);
    node_of(a).accumulate(g);
  });
}

Var tanh(const Var& a) {
  return make_op(a.value().array().tanh().matrix(), {a},
                 [a](const Node& self) {
                   Matrix g = self.grad.array() *
                              (1.0 - self.value.array().square());
                   node_of(a).accumulate(g);
                 });
}

Var square(const Var& a) {
  return make_op(a.value().array().square().matrix(), {a},
                 [a](const Node& self) {
                   node_of(a).accumulate(2.0 * self.grad.cwiseProduct(a.value()));
                 });
}

Var abs(const Var& a) {
  return make_op(a.value().cwiseAbs(), {a}, [a](const Node& self) {
    Matrix g = self.grad.array() * a.value().array().sign();
    node_of(a).accumulate(g);
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), {a}, [a](const Node& self) {
    node_of(a).accumulate(Matrix::Constant(a.rows(), a.cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return make_op(std::move(out), {a}, [a, n](const Node& self) {
    node_of(a).accumulate(
        Matrix::Constant(a.rows(), a.cols(), self.grad(0, 0) / n));
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp();
    row /= row.sum();
  }
  return make_op(std::move(out), {a}, [a](const Node& self) {
    const Matrix& y = self.value;
    Eigen::VectorXd dots = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.array() * (self.grad.colwise() - dots).array();
    node_of(a).accumulate(g);
  });
}

Var log_softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  return make_op(std::move(out), {a}, [a](const Node& self) {
    Eigen::VectorXd gsum = self.grad.rowwise().sum();
    Matrix soft = self.value.array().exp();
    Matrix g = self.grad - (soft.array().colwise() * gsum.array()).matrix();
    node_of(a).accumulate(g);
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias,
                    double eps) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  if (gain.cols() != cols || bias.cols() != cols) {
    throw std::invalid_argument("layer_norm_rows: gain/bias width mismatch");
  }
  Matrix xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = x.value().row(r).mean();
    const double var =
        (x.value().row(r).array() - mu).square().sum() / static_cast<double>(cols);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return make_op(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat, inv_std](const Node& self) {
        const Matrix& g = self.grad;
        if (gain.requires_grad())
          node_of(gain).accumulate(g.cwiseProduct(xhat).colwise().sum());
        if (bias.requires_grad())
          node_of(bias).accumulate(g.colwise().sum());
        if (x.requires_grad()) {
          Matrix dxhat = g.array().rowwise() * gain.value().row(0).array();
          const double n = static_cast<double>(xhat.cols());
          Eigen::VectorXd m1 = dxhat.rowwise().sum() / n;
          Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().sum() / n;
          Matrix dx = dxhat;
          dx.colwise() -= m1;
          dx -= (xhat.array().colwise() * m2.array()).matrix();
          dx = dx.array().colwise() * inv_std.array();
          node_of(x).accumulate(dx);
        }
      });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::out_of_range("slice_rows: range outside matrix");
  }
  return make_op(a.value().middleRows(start, count), {a},
                 [a, start, count](const Node& self) {
                   Matrix g = Matrix::Zero(a.rows(), a.cols());
                   g.middleRows(start, count) = self.grad;
                   node_of(a).accumulate(g);
                 });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("slice_cols: range outside matrix");
  }
  return make_op(a.value().middleCols(start, count), {a},
                 [a, start, count](const Node& self) {
                   Matrix g = Matrix::Zero(a.rows(), a.cols());
                   g.middleCols(start, count) = self.grad;
                   node_of(a).accumulate(g);
                 });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: width");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return make_op(std::move(out), parents, [parents](const Node& self) {
    Eigen::Index at = 0;
    for (const auto& p : parents) {
      if (p.requires_grad())
        node_of(p).accumulate(self.grad.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: height");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return make_op(std::move(out), parents, [parents](const Node& self) {
    Eigen::Index at = 0;
    for (const auto& p : parents) {
      if (p.requires_grad())
        node_of(p).accumulate(self.grad.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

Var gather_rows(const Var& a, std::span<const Eigen::Index> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) {
      throw std::out_of_range("gather_rows: index out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  std::vector<Eigen::Index> idx(index.begin(), index.end());
  return make_op(std::move(out), {a}, [a, idx](const Node& self) {
    Matrix g = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    }
    node_of(a).accumulate(g);
  });
}

Eigen::Index conv_output_length(Eigen::Index length, const ConvSpec& spec) {
  const Eigen::Index span =
      static_cast<Eigen::Index>(spec.dilation) * (spec.kernel - 1) + 1;
  const Eigen::Index padded = length + 2 * spec.padding;
  if (padded < span) return 0;
  return (padded - span) / spec.stride + 1;
}

Var conv1d(const Var& x, const Var& weight, const Var& bias,
           const ConvSpec& spec) {
  const Eigen::Index cin = x.cols();
  const Eigen::Index k = spec.kernel;
  if (weight.rows() != k * cin) {
    throw std::invalid_argument("conv1d: weight rows must be kernel*Cin");
  }
  const Eigen::Index cout = weight.cols();
  const Eigen::Index len = x.rows();
  const Eigen::Index lout = conv_output_length(len, spec);
  if (lout <= 0) throw std::invalid_argument("conv1d: input too short");

  Matrix cols = Matrix::Zero(lout, k * cin);
  for (Eigen::Index o = 0; o < lout; ++o) {
    const Eigen::Index base = o * spec.stride - spec.padding;
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index src = base + j * spec.dilation;
      if (src >= 0 && src < len) cols.block(o, j * cin, 1, cin) = x.value().row(src);
    }
  }
  Matrix out(lout, cout);
  out.noalias() = cols * weight.value();
  if (bias.defined()) out.rowwise() += bias.value().row(0);

  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_op(
      std::move(out), parents,
      [x, weight, bias, cols = std::move(cols), spec](const Node& self) {
        const Matrix& g = self.grad;
        if (weight.requires_grad()) {
          Matrix gw(weight.rows(), weight.cols());
          gw.noalias() = cols.transpose() * g;
          node_of(weight).accumulate(gw);
        }
        if (bias.defined() && bias.requires_grad())
          node_of(bias).accumulate(g.colwise().sum());
        if (x.requires_grad()) {
          const Eigen::Index cin = x.cols();
          const Eigen::Index len = x.rows();
          Matrix gcols(g.rows(), weight.rows());
          gcols.noalias() = g * weight.value().transpose();
          Matrix gx = Matrix::Zero(len, cin);
          for (Eigen::Index o = 0; o < g.rows(); ++o) {
            const Eigen::Index base = o * spec.stride - spec.padding;
            for (Eigen::Index j = 0; j < spec.kernel; ++j) {
              const Eigen::Index src = base + j * spec.dilation;
              if (src >= 0 && src < len)
                gx.row(src) += gcols.block(o, j * cin, 1, cin);
            }
          }
          node_of(x).accumulate(gx);
        }
      });
}

Var conv_transpose1d(const Var& x, const Var& weight, const Var& bias,
                     const ConvSpec& spec) {
  const Eigen::Index cin = x.cols();
  const Eigen::Index k = spec.kernel;
  if (weight.rows() != cin || weight.cols() % k != 0) {
    throw std::invalid_argument(
        "conv_transpose1d: weight must be Cin x (kernel*Cout)");
  }
  const Eigen::Index cout = weight.cols() / k;
  const Eigen::Index len = x.rows();
  const Eigen::Index lout =
      (len - 1) * spec.stride - 2 * spec.padding + k;
  if (lout <= 0) throw std::invalid_argument("conv_transpose1d: empty output");

  Matrix z(len, k * cout);
  z.noalias() = x.value() * weight.value();
  Matrix out = Matrix::Zero(lout, cout);
  for (Eigen::Index i = 0; i < len; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index dst = i * spec.stride + j - spec.padding;
      if (dst >= 0 && dst < lout) out.row(dst) += z.block(i, j * cout, 1, cout);
    }
  }
  if (bias.defined()) out.rowwise() += bias.value().row(0);

  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_op(
      std::move(out), parents, [x, weight, bias, spec, cout](const Node& self) {
        const Matrix& g = self.grad;
        const Eigen::Index len = x.rows();
        const Eigen::Index k = spec.kernel;
        Matrix gz = Matrix::Zero(len, k * cout);
        for (Eigen::Index i = 0; i < len; ++i) {
          for (Eigen::Index j = 0; j < k; ++j) {
            const Eigen::Index dst = i * spec.stride + j - spec.padding;
            if (dst >= 0 && dst < g.rows())
              gz.block(i, j * cout, 1, cout) = g.row(dst);
          }
        }
        if (bias.defined() && bias.requires_grad())
          node_of(bias).accumulate(g.colwise().sum());
        if (weight.requires_grad()) {
          Matrix gw(weight.rows(), weight.cols());
          gw.noalias() = x.value().transpose() * gz;
          node_of(weight).accumulate(gw);
        }
        if (x.requires_grad()) {
          Matrix gx(len, x.cols());
          gx.noalias() = gz * weight.value().transpose();
          node_of(x).accumulate(gx);
        }
      });
}

Var avg_pool1d(const Var& x, int kernel, int stride, int padding) {
  ConvSpec spec{kernel, stride, 1, padding};
  const Eigen::Index len = x.rows();
  const Eigen::Index lout = conv_output_length(len, spec);
  if (lout <= 0) throw std::invalid_argument("avg_pool1d: input too short");
  Matrix out = Matrix::Zero(lout, x.cols());
  const double inv = 1.0 / kernel;
  for (Eigen::Index o = 0; o < lout; ++o) {
    const Eigen::Index base = o * stride - padding;
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index src = base + j;
      if (src >= 0 && src < len) out.row(o) += x.value().row(src) * inv;
    }
  }
  return make_op(std::move(out), {x},
                 [x, kernel, stride, padding, inv](const Node& self) {
                   Matrix gx = Matrix::Zero(x.rows(), x.cols());
                   for (Eigen::Index o = 0; o < self.grad.rows(); ++o) {
                     const Eigen::Index base = o * stride - padding;
                     for (int j = 0; j < kernel; ++j) {
                       const Eigen::Index src = base + j;
                       if (src >= 0 && src < x.rows())
                         gx.row(src) += self.grad.row(o) * inv;
                     }
                   }
                   node_of(x).accumulate(gx);
                 });
}

Var neg_sq_distance(const Var& queries, const Var& keys) {
  if (queries.cols() != keys.cols()) {
    throw std::invalid_argument("neg_sq_distance: feature width mismatch");
  }
  const Matrix& q = queries.value();
  const Matrix& k = keys.value();
  Eigen::VectorXd qn = q.rowwise().squaredNorm();
  Eigen::VectorXd kn = k.rowwise().squaredNorm();
  Matrix out(q.rows(), k.rows());
  out.noalias() = 2.0 * q * k.transpose();
  out.colwise() -= qn;
  out.rowwise() -= kn.transpose();
  return make_op(std::move(out), {queries, keys},
                 [queries, keys](const Node& self) {
                   const Matrix& g = self.grad;
                   const Matrix& q = queries.value();
                   const Matrix& k = keys.value();
                   if (queries.requires_grad()) {
                     Eigen::VectorXd rs = g.rowwise().sum();
                     Matrix gq(q.rows(), q.cols());
                     gq.noalias() = 2.0 * g * k;
                     gq -= 2.0 * (q.array().colwise() * rs.array()).matrix();
                     node_of(queries).accumulate(gq);
                   }
                   if (keys.requires_grad()) {
                     Eigen::VectorXd cs = g.colwise().sum().transpose();
                     Matrix gk(k.rows(), k.cols());
                     gk.noalias() = 2.0 * g.transpose() * q;
                     gk -= 2.0 * (k.array().colwise() * cs.array()).matrix();
                     node_of(keys).accumulate(gk);
                   }
                 });
}

Var mse(const Var& a, const Var& b) { return mean(square(sub(a, b))); }

Var l1(const Var& a, const Var& b) { return mean(abs(sub(a, b))); }

}  // namespace vclone::ag
