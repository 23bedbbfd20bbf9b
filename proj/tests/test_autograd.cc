#include "fsdlre/autograd.h"

#include "gradcheck.h"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace fsdlre;
using fsdlre::testing::gradcheck;

namespace {

Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, double lo = -1,
                     double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m(i) = d(rng);
  return m;
}

// Random linear read-out so every output entry reaches the scalar.
ag::Var readout(const ag::Var& y, const Matrix& w) {
  return ag::sum(ag::cwise_mul(y, ag::constant(w)));
}

void expect_grad(const std::function<ag::Var(const ag::Var&)>& op,
                 Matrix input, std::mt19937_64& rng) {
  ag::Var x = ag::parameter(std::move(input));
  const ag::Var probe = op(x);
  const Matrix w = random_matrix(probe.rows(), probe.cols(), rng);
  auto r = gradcheck([&] { return readout(op(x), w); }, {x}, {"x"}, 1e-6,
                     1e-6);
  CHECK_MESSAGE(r.max_rel_error < 1e-6, r.worst);
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(3, 4, rng);
  expect_grad([](const ag::Var& a) { return ag::tanh(a); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::exp(a); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::sigmoid(a); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::gelu(a); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::scale(a, -2.5); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::add_scalar(a, 3.0); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::transpose(a); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::cwise_mul(a, a); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::log(ag::add_scalar(ag::exp(a), 1.0)); },
              x, rng);
}

TEST_CASE("row reductions and normalizations match finite differences") {
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(4, 5, rng);
  const Matrix pos = random_matrix(4, 5, rng, 0.1, 1.0);
  expect_grad([](const ag::Var& a) { return ag::softmax_rows(a); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::row_sums(a); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::mean_over_rows(a); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::logsumexp_over_rows(a); }, x,
              rng);
  expect_grad([](const ag::Var& a) { return ag::row_max(a); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::normalize_rows_l1(a, 1e-12); },
              pos, rng);
  expect_grad([](const ag::Var& a) { return ag::normalize_rows_l2(a, 1e-12); },
              x, rng);
  Matrix mask = Matrix::Ones(4, 5);
  mask(0, 1) = 0;
  mask(2, 3) = 0;
  expect_grad(
      [&](const ag::Var& a) { return ag::masked_logsumexp_rows(a, mask); }, x,
      rng);
}

TEST_CASE("structural ops match finite differences") {
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(5, 3, rng);
  const std::vector<Index> rows{4, 0, 4, 2};
  expect_grad([&](const ag::Var& a) { return ag::gather_rows(a, rows); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::slice_rows(a, 1, 3); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::slice_cols(a, 1, 2); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::element(a, 2, 1); }, x, rng);
  expect_grad([](const ag::Var& a) { return ag::pad_block(a, 1, 2, 7, 6); }, x,
              rng);
  expect_grad(
      [](const ag::Var& a) {
        const ag::Var parts[] = {a, ag::scale(a, 2.0)};
        return ag::hconcat(parts);
      },
      x, rng);
  expect_grad(
      [](const ag::Var& a) {
        const ag::Var parts[] = {ag::slice_rows(a, 0, 2), a};
        return ag::vconcat(parts);
      },
      x, rng);
}

TEST_CASE("binary ops match finite differences in both inputs") {
  std::mt19937_64 rng(4);
  ag::Var a = ag::parameter(random_matrix(3, 4, rng));
  ag::Var b = ag::parameter(random_matrix(4, 5, rng));
  ag::Var c = ag::parameter(random_matrix(3, 5, rng));
  ag::Var row = ag::parameter(random_matrix(1, 5, rng));
  ag::Var col = ag::parameter(random_matrix(3, 1, rng));
  ag::Var s = ag::parameter(random_matrix(1, 1, rng, 0.5, 1.5));
  ag::Var gain = ag::parameter(random_matrix(1, 5, rng));
  const Matrix w = random_matrix(3, 5, rng);
  auto loss = [&] {
    ag::Var y = ag::matmul(a, b);
    y = ag::add(y, c);
    y = ag::sub(y, ag::scale(c, 0.3));
    y = ag::add_row(y, row);
    y = ag::add_col(y, col);
    y = ag::layer_norm_rows(y, gain, row, 1e-5);
    y = ag::div_scalar(y, s);
    return ag::add(readout(y, w), ag::dot(ag::transpose(col), ag::transpose(col)));
  };
  auto r = gradcheck(loss, {a, b, c, row, col, s, gain},
                     {"a", "b", "c", "row", "col", "s", "gain"}, 1e-6, 1e-6);
  CHECK_MESSAGE(r.max_rel_error < 1e-6, r.worst);
}

TEST_CASE("values of reductions") {
  Matrix m(2, 3);
  m << 0, std::log(3.0), 1, 2, 2, 2;
  CHECK(ag::logsumexp_over_rows(ag::constant(m)).value()(0, 1) ==
        doctest::Approx(std::log(3.0 + std::exp(2.0))));
  const Matrix sm = ag::softmax_rows(ag::constant(m)).value();
  CHECK(sm.row(1).sum() == doctest::Approx(1.0));
  CHECK(sm(1, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(ag::row_max(ag::constant(m)).value()(0, 0) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("masked logsumexp of an empty row is zero") {
  Matrix m = Matrix::Constant(2, 2, 5.0);
  Matrix mask = Matrix::Zero(2, 2);
  mask(1, 0) = 1;
  const Matrix out = ag::masked_logsumexp_rows(ag::constant(m), mask).value();
  CHECK(out(0, 0) == 0.0);
  CHECK(out(1, 0) == doctest::Approx(5.0));
}

TEST_CASE("l1 normalization falls back to uniform below eps") {
  Matrix m(2, 4);
  m << 0, 0, 0, 0, 1, 1, 2, 0;
  std::vector<Index> degenerate;
  ag::Var x = ag::parameter(m);
  const ag::Var y = ag::normalize_rows_l1(x, 1e-12, &degenerate);
  REQUIRE(degenerate.size() == 1);
  CHECK(degenerate[0] == 0);
  CHECK(y.value().row(0).isApproxToConstant(0.25));
  CHECK(y.value()(1, 2) == doctest::Approx(0.5));
  ag::sum(ag::cwise_mul(y, y)).backward();
  CHECK(x.grad().row(0).isZero());
}

TEST_CASE("leaves accumulate across backward calls until zeroed") {
  ag::Var p = ag::parameter(Matrix::Constant(1, 1, 2.0));
  ag::scale(p, 3.0).backward();
  ag::scale(p, 4.0).backward();
  CHECK(p.grad()(0, 0) == doctest::Approx(7.0));
  p.zero_grad();
  CHECK(p.grad()(0, 0) == 0.0);
}

TEST_CASE("shape mismatches throw") {
  ag::Var a = ag::constant(Matrix::Zero(2, 3));
  ag::Var b = ag::constant(Matrix::Zero(3, 2));
  CHECK_THROWS_AS(ag::add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(ag::matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS(a.backward(), std::invalid_argument);
}
