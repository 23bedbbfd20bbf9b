// Reverse-mode automatic differentiation over dense double matrices.
//
// A Var is a handle to a node in a dynamically built expression graph. Leaf
// nodes are either constants or parameters; every op records a closure that
// pushes its output gradient to its inputs. Graphs are released when the last
// handle to the root goes away, so a forward/backward pass per episode builds
// and discards its own graph while parameters persist.
//
// Vectors are column matrices (n x 1) unless an op says otherwise; batched
// distributions are stored one per row.

#ifndef FSDLRE_AUTOGRAD_H_
#define FSDLRE_AUTOGRAD_H_

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace fsdlre {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

namespace ag {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // Only meaningful for leaves: the optimizer writes parameters in place.
  Matrix& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }

  // Gradient accumulated by backward(); zeros if none reached this node.
  Matrix grad() const;
  void zero_grad();

  // Seeds d(self)/d(self) = 1. Requires a 1x1 value.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var constant_scalar(double value);
Var parameter(Matrix value);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cwise_mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(const Var& a, const Var& row);
// a (n x m) + col (n x 1) broadcast over columns.
Var add_col(const Var& a, const Var& col);
// a divided by a 1x1 node.
Var div_scalar(const Var& a, const Var& denom);

Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sigmoid(const Var& a);
Var gelu(const Var& a);
Var clamp(const Var& a, double lo, double hi);

Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias,
                    double eps = 1e-12);

Var gather_rows(const Var& a, std::span<const Index> rows);
Var slice_rows(const Var& a, Index start, Index count);
Var slice_cols(const Var& a, Index start, Index count);
Var element(const Var& a, Index row, Index col);
Var hconcat(std::span<const Var> parts);
Var vconcat(std::span<const Var> parts);
// Places a into a zero matrix of the given shape at (row0, col0).
Var pad_block(const Var& a, Index row0, Index col0, Index rows, Index cols);

Var sum(const Var& a);
Var dot(const Var& a, const Var& b);
Var row_sums(const Var& a);
Var mean_over_rows(const Var& a);
// log sum_i exp(a_ij) per column; 1 x m. Max-shifted.
Var logsumexp_over_rows(const Var& a);
// log sum_{j : mask_ij != 0} exp(a_ij) per row; n x 1. Rows with an empty
// mask yield 0 and receive no gradient.
Var masked_logsumexp_rows(const Var& a, const Matrix& mask);
// Row-wise maximum; n x 1. Gradient flows to the first maximal entry.
Var row_max(const Var& a);

// Each row divided by its sum. Rows whose sum is below eps are replaced by
// the uniform distribution (with zero gradient) and their indices appended to
// `degenerate` when it is non-null.
Var normalize_rows_l1(const Var& a, double eps,
                      std::vector<Index>* degenerate = nullptr);
// Each row divided by max(||row||_2, eps).
Var normalize_rows_l2(const Var& a, double eps);

}  // namespace ag
}  // namespace fsdlre

#endif  // FSDLRE_AUTOGRAD_H_
