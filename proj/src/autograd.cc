#include "fsdlre/autograd.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace fsdlre::ag {
namespace {

using NodePtr = std::shared_ptr<Node>;

void accumulate(Node& node, const Matrix& g) {
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

template <typename Fn>
Var make_op(Matrix value, std::initializer_list<Var> inputs, Fn&& backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& v : inputs) {
    if (v.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const Var& v : inputs) node->parents.push_back(v.node());
    node->backward_fn = std::forward<Fn>(backward);
  }
  return Var(std::move(node));
}

template <typename Fn>
Var make_op_n(Matrix value, std::span<const Var> inputs, Fn&& backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& v : inputs) {
    if (v.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const Var& v : inputs) node->parents.push_back(v.node());
    node->backward_fn = std::forward<Fn>(backward);
  }
  return Var(std::move(node));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(
        std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
        "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
        "x" + std::to_string(b.cols()));
  }
}

Node& parent(Node& self, size_t i) { return *self.parents[i]; }

}  // namespace

Matrix Var::grad() const {
  if (node_->grad.size() == 0) {
    return Matrix::Zero(node_->value.rows(), node_->value.cols());
  }
  return node_->grad;
}

void Var::zero_grad() { node_->grad.resize(0, 0); }

void Var::backward() const {
  if (node_->value.size() != 1) {
    throw std::invalid_argument("backward() requires a scalar root");
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Intermediate gradients from an earlier pass over a shared subgraph would
  // double count; only leaves keep accumulating.
  for (Node* n : order) {
    if (n->backward_fn) n->grad.resize(0, 0);
  }
  accumulate(*node_, Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var constant_scalar(double value) {
  return constant(Matrix::Constant(1, 1, value));
}

Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimension mismatch " +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()));
  }
  return make_op(a.value() * b.value(), {a, b}, [](Node& self) {
    Node& x = parent(self, 0);
    Node& y = parent(self, 1);
    if (x.requires_grad) accumulate(x, self.grad * y.value.transpose());
    if (y.requires_grad) accumulate(y, x.value.transpose() * self.grad);
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a}, [](Node& self) {
    accumulate(parent(self, 0), self.grad.transpose());
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    accumulate(parent(self, 1), self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    accumulate(parent(self, 1), -self.grad);
  });
}

Var cwise_mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "cwise_mul");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& x = parent(self, 0);
    Node& y = parent(self, 1);
    if (x.requires_grad) accumulate(x, self.grad.cwiseProduct(y.value));
    if (y.requires_grad) accumulate(y, self.grad.cwiseProduct(x.value));
  });
}

Var scale(const Var& a, double factor) {
  return make_op(a.value() * factor, {a}, [factor](Node& self) {
    accumulate(parent(self, 0), self.grad * factor);
  });
}

Var add_scalar(const Var& a, double offset) {
  return make_op(a.value().array() + offset, {a}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: expected 1 x cols row");
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    accumulate(parent(self, 1), self.grad.colwise().sum());
  });
}

Var add_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw std::invalid_argument("add_col: expected rows x 1 column");
  }
  Matrix out = a.value().colwise() + col.value().col(0);
  return make_op(std::move(out), {a, col}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    accumulate(parent(self, 1), self.grad.rowwise().sum());
  });
}

Var div_scalar(const Var& a, const Var& denom) {
  if (denom.value().size() != 1) {
    throw std::invalid_argument("div_scalar: denominator must be 1x1");
  }
  const double d = denom.scalar();
  return make_op(a.value() / d, {a, denom}, [d](Node& self) {
    Node& x = parent(self, 0);
    Node& s = parent(self, 1);
    if (x.requires_grad) accumulate(x, self.grad / d);
    if (s.requires_grad) {
      const double g = -(self.grad.cwiseProduct(x.value)).sum() / (d * d);
      accumulate(s, Matrix::Constant(1, 1, g));
    }
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh();
  return make_op(std::move(out), {a}, [](Node& self) {
    Matrix d = 1.0 - self.value.array().square();
    accumulate(parent(self, 0), self.grad.cwiseProduct(d));
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp();
  return make_op(std::move(out), {a}, [](Node& self) {
    accumulate(parent(self, 0), self.grad.cwiseProduct(self.value));
  });
}

Var log(const Var& a) {
  Matrix out = a.value().array().log();
  return make_op(std::move(out), {a}, [](Node& self) {
    accumulate(parent(self, 0),
               self.grad.cwiseQuotient(parent(self, 0).value));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    // Split by sign so exp never overflows.
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_op(std::move(out), {a}, [](Node& self) {
    Matrix d = self.value.array() * (1.0 - self.value.array());
    accumulate(parent(self, 0), self.grad.cwiseProduct(d));
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  });
  return make_op(std::move(out), {a}, [](Node& self) {
    const Matrix& x = parent(self, 0).value;
    Matrix d = x.unaryExpr([](double v) {
      const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      return 0.5 * (1.0 + t) +
             0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    });
    accumulate(parent(self, 0), self.grad.cwiseProduct(d));
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return make_op(std::move(out), {a}, [lo, hi](Node& self) {
    const Matrix& x = parent(self, 0).value;
    Matrix g = self.grad;
    for (Index i = 0; i < g.size(); ++i) {
      if (x(i) < lo || x(i) > hi) g(i) = 0.0;
    }
    accumulate(parent(self, 0), g);
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return make_op(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Vector inner = (self.grad.cwiseProduct(y)).rowwise().sum();
    Matrix g = y.cwiseProduct(self.grad.colwise() - inner);
    accumulate(parent(self, 0), g);
  });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias,
                    double eps) {
  const Index n = a.rows();
  const Index m = a.cols();
  if (gain.rows() != 1 || gain.cols() != m || bias.rows() != 1 ||
      bias.cols() != m) {
    throw std::invalid_argument("layer_norm_rows: gain/bias must be 1 x cols");
  }
  Matrix xhat(n, m);
  Vector inv_std(n);
  for (Index i = 0; i < n; ++i) {
    const double mu = a.value().row(i).mean();
    RowVector centered = a.value().row(i).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(m);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return make_op(
      std::move(out), {a, gain, bias},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& x = parent(self, 0);
        Node& g = parent(self, 1);
        Node& b = parent(self, 2);
        const Matrix& up = self.grad;
        if (g.requires_grad) {
          accumulate(g, up.cwiseProduct(xhat).colwise().sum());
        }
        if (b.requires_grad) accumulate(b, up.colwise().sum());
        if (x.requires_grad) {
          Matrix gx = (up.array().rowwise() * g.value.row(0).array()).matrix();
          const double m = static_cast<double>(gx.cols());
          Matrix dx(gx.rows(), gx.cols());
          for (Index i = 0; i < gx.rows(); ++i) {
            const double mean_g = gx.row(i).sum() / m;
            const double mean_gx = gx.row(i).dot(xhat.row(i)) / m;
            dx.row(i) = inv_std(i) * (gx.row(i).array() - mean_g -
                                      xhat.row(i).array() * mean_gx);
          }
          accumulate(x, dx);
        }
      });
}

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) +
                              " out of range");
    }
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return make_op(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    Node& x = parent(self, 0);
    Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
      g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    }
    accumulate(x, g);
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::out_of_range("slice_rows: range out of bounds");
  }
  return make_op(a.value().middleRows(start, count), {a},
                 [start, count](Node& self) {
                   Node& x = parent(self, 0);
                   Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
                   g.middleRows(start, count) = self.grad;
                   accumulate(x, g);
                 });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("slice_cols: range out of bounds");
  }
  return make_op(a.value().middleCols(start, count), {a},
                 [start, count](Node& self) {
                   Node& x = parent(self, 0);
                   Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
                   g.middleCols(start, count) = self.grad;
                   accumulate(x, g);
                 });
}

Var element(const Var& a, Index row, Index col) {
  return make_op(Matrix::Constant(1, 1, a.value()(row, col)), {a},
                 [row, col](Node& self) {
                   Node& x = parent(self, 0);
                   Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
                   g(row, col) = self.grad(0, 0);
                   accumulate(x, g);
                 });
}

Var hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("hconcat: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("hconcat: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op_n(std::move(out), parts, [](Node& self) {
    Index at = 0;
    for (auto& p : self.parents) {
      const Index c = p->value.cols();
      accumulate(*p, self.grad.middleCols(at, c));
      at += c;
    }
  });
}

Var vconcat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("vconcat: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("vconcat: col mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_op_n(std::move(out), parts, [](Node& self) {
    Index at = 0;
    for (auto& p : self.parents) {
      const Index r = p->value.rows();
      accumulate(*p, self.grad.middleRows(at, r));
      at += r;
    }
  });
}

Var pad_block(const Var& a, Index row0, Index col0, Index rows, Index cols) {
  if (row0 < 0 || col0 < 0 || row0 + a.rows() > rows ||
      col0 + a.cols() > cols) {
    throw std::out_of_range("pad_block: block does not fit");
  }
  Matrix out = Matrix::Zero(rows, cols);
  out.block(row0, col0, a.rows(), a.cols()) = a.value();
  const Index r = a.rows();
  const Index c = a.cols();
  return make_op(std::move(out), {a}, [row0, col0, r, c](Node& self) {
    accumulate(parent(self, 0), self.grad.block(row0, col0, r, c));
  });
}

Var sum(const Var& a) {
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    Node& x = parent(self, 0);
    accumulate(x, Matrix::Constant(x.value.rows(), x.value.cols(),
                                   self.grad(0, 0)));
  });
}

Var dot(const Var& a, const Var& b) {
  check_same_shape(a, b, "dot");
  const double v = a.value().cwiseProduct(b.value()).sum();
  return make_op(Matrix::Constant(1, 1, v), {a, b}, [](Node& self) {
    const double g = self.grad(0, 0);
    Node& x = parent(self, 0);
    Node& y = parent(self, 1);
    if (x.requires_grad) accumulate(x, y.value * g);
    if (y.requires_grad) accumulate(y, x.value * g);
  });
}

Var row_sums(const Var& a) {
  return make_op(a.value().rowwise().sum(), {a}, [](Node& self) {
    Node& x = parent(self, 0);
    Matrix g = self.grad.col(0).replicate(1, x.value.cols());
    accumulate(x, g);
  });
}

Var mean_over_rows(const Var& a) {
  const double n = static_cast<double>(a.rows());
  return make_op(a.value().colwise().mean(), {a}, [n](Node& self) {
    Node& x = parent(self, 0);
    Matrix g = (self.grad / n).replicate(x.value.rows(), 1);
    accumulate(x, g);
  });
}

Var logsumexp_over_rows(const Var& a) {
  if (a.rows() == 0) throw std::invalid_argument("logsumexp: empty input");
  const Matrix& x = a.value();
  RowVector mx = x.colwise().maxCoeff();
  Matrix w = (x.rowwise() - mx).array().exp();
  RowVector z = w.colwise().sum();
  RowVector out = mx.array() + z.array().log();
  w = (w.array().rowwise() / z.array()).matrix();
  return make_op(Matrix(out), {a}, [w = std::move(w)](Node& self) {
    Matrix g = (w.array().rowwise() * self.grad.row(0).array()).matrix();
    accumulate(parent(self, 0), g);
  });
}

Var masked_logsumexp_rows(const Var& a, const Matrix& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw std::invalid_argument("masked_logsumexp_rows: mask shape mismatch");
  }
  const Matrix& x = a.value();
  Matrix w = Matrix::Zero(x.rows(), x.cols());
  Matrix out = Matrix::Zero(x.rows(), 1);
  for (Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < x.cols(); ++j) {
      if (mask(i, j) != 0.0) mx = std::max(mx, x(i, j));
    }
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
      if (mask(i, j) != 0.0) {
        w(i, j) = std::exp(x(i, j) - mx);
        z += w(i, j);
      }
    }
    w.row(i) /= z;
    out(i, 0) = mx + std::log(z);
  }
  return make_op(std::move(out), {a}, [w = std::move(w)](Node& self) {
    Matrix g = (w.array().colwise() * self.grad.col(0).array()).matrix();
    accumulate(parent(self, 0), g);
  });
}

Var row_max(const Var& a) {
  if (a.cols() == 0) throw std::invalid_argument("row_max: no columns");
  std::vector<Index> arg(static_cast<size_t>(a.rows()));
  Matrix out(a.rows(), 1);
  for (Index i = 0; i < a.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < a.cols(); ++j) {
      if (a.value()(i, j) > a.value()(i, best)) best = j;
    }
    arg[static_cast<size_t>(i)] = best;
    out(i, 0) = a.value()(i, best);
  }
  return make_op(std::move(out), {a}, [arg = std::move(arg)](Node& self) {
    Node& x = parent(self, 0);
    Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
    for (size_t i = 0; i < arg.size(); ++i) {
      g(static_cast<Index>(i), arg[i]) = self.grad(static_cast<Index>(i), 0);
    }
    accumulate(x, g);
  });
}

Var normalize_rows_l1(const Var& a, double eps,
                      std::vector<Index>* degenerate) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  Vector sums = x.rowwise().sum();
  std::vector<bool> fallback(static_cast<size_t>(x.rows()), false);
  for (Index i = 0; i < x.rows(); ++i) {
    if (sums(i) < eps) {
      fallback[static_cast<size_t>(i)] = true;
      out.row(i).setConstant(1.0 / static_cast<double>(x.cols()));
      if (degenerate != nullptr) degenerate->push_back(i);
    } else {
      out.row(i) = x.row(i) / sums(i);
    }
  }
  return make_op(std::move(out), {a},
                 [sums = std::move(sums),
                  fallback = std::move(fallback)](Node& self) {
                   const Matrix& y = self.value;
                   Matrix g(y.rows(), y.cols());
                   for (Index i = 0; i < y.rows(); ++i) {
                     if (fallback[static_cast<size_t>(i)]) {
                       g.row(i).setZero();
                       continue;
                     }
                     const double inner = self.grad.row(i).dot(y.row(i));
                     g.row(i) = (self.grad.row(i).array() - inner) / sums(i);
                   }
                   accumulate(parent(self, 0), g);
                 });
}

Var normalize_rows_l2(const Var& a, double eps) {
  const Matrix& x = a.value();
  Vector norms = x.rowwise().norm();
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    out.row(i) = x.row(i) / std::max(norms(i), eps);
  }
  return make_op(std::move(out), {a},
                 [norms = std::move(norms), eps](Node& self) {
                   const Matrix& y = self.value;
                   Matrix g(y.rows(), y.cols());
                   for (Index i = 0; i < y.rows(); ++i) {
                     if (norms(i) <= eps) {
                       g.row(i) = self.grad.row(i) / eps;
                     } else {
                       const double inner = self.grad.row(i).dot(y.row(i));
                       g.row(i) = (self.grad.row(i) - inner * y.row(i)) /
                                  norms(i);
                     }
                   }
                   accumulate(parent(self, 0), g);
                 });
}

}  // namespace fsdlre::ag
