#include "fsdlre/objectives.h"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace fsdlre;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m(i) = d(rng);
  return m;
}

// Straight double loop over anchors, positives and the denominator set.
double contrastive_oracle(const std::vector<LabeledInstance>& xs,
                          const std::map<std::string, Vector>* rel, double tau) {
  double total = 0;
  int anchors = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double denom = 0;
    for (std::size_t a = 0; a < xs.size(); ++a) {
      if (a == i) continue;
      double w = 1;
      if (rel && xs[a].relation != xs[i].relation) {
        const Vector& u = rel->at(xs[i].relation);
        const Vector& v = rel->at(xs[a].relation);
        w = 1 + (u.dot(v) / (u.norm() * v.norm()) + 1) / 2;
      }
      denom += w * std::exp(xs[i].s.dot(xs[a].s) / tau);
    }
    double sum = 0;
    int pos = 0;
    for (std::size_t p = 0; p < xs.size(); ++p) {
      if (p == i || xs[p].relation != xs[i].relation) continue;
      sum += -std::log(std::exp(xs[i].s.dot(xs[p].s) / tau) / denom);
      ++pos;
    }
    if (pos == 0) continue;
    total += sum / pos;
    ++anchors;
  }
  return anchors == 0 ? 0.0 : total / anchors;
}

}  // namespace

TEST_CASE("relation pair weight") {
  const Vector h = vec({0.3, -1.2, 0.5});
  CHECK(relation_pair_weight(h, vec({1, 1, 1}), true) == 1.0);
  CHECK(relation_pair_weight(h, h, false) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(relation_pair_weight(h, -h, false) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(relation_pair_weight(vec({1, 0}), vec({0, 1}), false) == doctest::Approx(1.5));
  CHECK_THROWS_AS(relation_pair_weight(Vector::Zero(3), h, false), std::invalid_argument);
}

TEST_CASE("two instances of one relation give zero loss") {
  const std::vector<LabeledInstance> xs{{vec({1, 0}), "A"}, {vec({0, 1}), "A"}};
  const ContrastiveValue v = rcl_loss(xs, {{"A", vec({1, 2})}}, {});
  CHECK(v.loss == doctest::Approx(0.0));
  CHECK(v.contributing == 2);
}

TEST_CASE("contrastive losses match the loop oracle") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> n_inst(2, 9), n_rel(1, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = n_inst(rng), m = n_rel(rng);
    std::map<std::string, Vector> rel;
    for (int r = 0; r < m; ++r) rel["R" + std::to_string(r)] = random_matrix(4, 1, rng);
    std::uniform_int_distribution<int> pick(0, m - 1);
    std::vector<LabeledInstance> xs;
    for (int i = 0; i < n; ++i) {
      xs.push_back({random_matrix(6, 1, rng, 0.9), "R" + std::to_string(pick(rng))});
    }
    const ContrastiveConfig cfg{0.4, ContrastiveVariant::kRcl};
    CHECK(rcl_loss(xs, rel, cfg).loss ==
          doctest::Approx(contrastive_oracle(xs, &rel, 0.4)).epsilon(1e-10));
    CHECK(scl_loss(xs, {0.4, ContrastiveVariant::kScl}).loss ==
          doctest::Approx(contrastive_oracle(xs, nullptr, 0.4)).epsilon(1e-10));
  }
}

TEST_CASE("single-relation inputs make both variants agree") {
  std::mt19937_64 rng(22);
  std::vector<LabeledInstance> xs;
  for (int i = 0; i < 5; ++i) xs.push_back({random_matrix(4, 1, rng), "A"});
  CHECK(rcl_loss(xs, {{"A", vec({1, 1})}}, {}).loss ==
        doctest::Approx(scl_loss(xs, {}).loss).epsilon(1e-14));
}

TEST_CASE("singleton anchors are skipped") {
  const std::vector<LabeledInstance> xs{
      {vec({1, 0}), "A"}, {vec({0, 1}), "B"}, {vec({1, 1}), "C"}};
  const std::map<std::string, Vector> rel{
      {"A", vec({1, 0})}, {"B", vec({0, 1})}, {"C", vec({1, 1})}};
  const ContrastiveValue r = rcl_loss(xs, rel, {});
  CHECK(r.loss == 0.0);
  CHECK(r.skipped == 3);
  CHECK(r.contributing == 0);
  const ContrastiveValue s = scl_loss(xs, {});
  CHECK(s.skipped == 3);
  CHECK_THROWS_AS(rcl_loss(xs, {{"A", vec({1, 0})}}, {}), std::out_of_range);
}

TEST_CASE("graph form matches the value form and its gradient") {
  std::mt19937_64 rng(23);
  const ag::Var reps = ag::parameter(random_matrix(5, 4, rng));
  const ag::Var rels = ag::parameter(random_matrix(2, 3, rng));
  const std::vector<int> labels{0, 1, 0, 1, 1};
  const ContrastiveResult c =
      contrastive_loss_rows(reps, labels, rels, {0.4, ContrastiveVariant::kRcl});
  std::vector<LabeledInstance> xs;
  for (int i = 0; i < 5; ++i) {
    xs.push_back({reps.value().row(i).transpose(), labels[static_cast<std::size_t>(i)] ? "b" : "a"});
  }
  const std::map<std::string, Vector> rel{{"a", rels.value().row(0).transpose()},
                                          {"b", rels.value().row(1).transpose()}};
  CHECK(c.loss.scalar() == doctest::Approx(contrastive_oracle(xs, &rel, 0.4)).epsilon(1e-12));
  c.loss.backward();
  CHECK_FALSE(reps.grad().isZero());
  CHECK_FALSE(rels.grad().isZero());
}

TEST_CASE("relation probability") {
  Matrix nota(2, 2);
  nota << 1, 0, 0, 0;
  CHECK(relation_probability(vec({1, 0}), vec({1, 0}), nota) == doctest::Approx(0.5));
  CHECK(relation_probability(vec({1, 0}), vec({2, 0}), nota) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
  CHECK(relation_probability(vec({1, 0}), vec({2, 0}), nota) ==
        doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(relation_probability(vec({1, 0}), vec({21, 0}), nota) > 0.9999);
  CHECK(relation_probability(vec({1, 0}), vec({-1000, 0}), nota) >= 0.0);
  CHECK(extracts(vec({1, 0}), vec({2, 0}), nota));
  CHECK_FALSE(extracts(vec({1, 0}), vec({1, 0}), nota));
}

TEST_CASE("binary cross-entropy") {
  // Every logit difference is zero, so every P is 0.5.
  const Matrix q = Matrix::Zero(3, 2);
  const Matrix protos = Matrix::Ones(2, 2);
  const Matrix nota = Matrix::Ones(1, 2);
  Matrix labels(3, 2);
  labels << 1, 0, 0, 0, 1, 1;
  const double v = bce_loss_rows(ag::constant(q), labels, ag::constant(protos),
                                 ag::constant(nota))
                       .scalar();
  CHECK(v == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));

  // Saturated correct predictions hit the clamp.
  Matrix q2(1, 1), p2(2, 1), n2(1, 1), y2(1, 2);
  q2 << 1;
  p2 << 1000, -1000;
  n2 << 0;
  y2 << 1, 0;
  const double tiny = bce_loss_rows(ag::constant(q2), y2, ag::constant(p2), ag::constant(n2)).scalar();
  CHECK(tiny >= 0.0);
  CHECK(tiny <= 2.8e-11);

  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix rq = random_matrix(4, 3, rng, 3), rp = random_matrix(2, 3, rng, 3),
                 rn = random_matrix(3, 3, rng, 3);
    Matrix ry = (random_matrix(4, 2, rng).array() > 0).cast<double>();
    double oracle = 0;
    for (Index i = 0; i < 4; ++i) {
      for (Index r = 0; r < 2; ++r) {
        const double p = relation_probability(rq.row(i).transpose(), rp.row(r).transpose(), rn);
        const double c = std::clamp(p, 1e-12, 1 - 1e-12);
        oracle -= ry(i, r) * std::log(c) + (1 - ry(i, r)) * std::log(1 - c);
      }
    }
    const double got = bce_loss_rows(ag::constant(rq), ry, ag::constant(rp), ag::constant(rn)).scalar();
    CHECK(got == doctest::Approx(oracle / 4).epsilon(1e-12));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("bce value form over prototype sets") {
  PrototypeSet set;
  set.relation_ids = {"A", "B"};
  set.relation_prototypes = ag::constant(Matrix::Ones(2, 2));
  set.nota_prototypes = ag::constant(Matrix::Ones(1, 2));
  const std::vector<QueryPairRep> qs{{Vector::Zero(2), 0, 1}};
  const std::vector<std::set<std::string>> gold{{"A"}};
  CHECK(bce_loss(qs, gold, set) == doctest::Approx(2.0 * std::log(2.0)));
}

TEST_CASE("total loss") {
  CHECK(total_loss(1.0, 2.0, 0.1).total == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(total_loss(1.5, 7.0, 0.0).total == 1.5);
  CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.1), std::invalid_argument);
  CHECK(parse_contrastive_variant("scl") == ContrastiveVariant::kScl);
  CHECK(to_string(ContrastiveVariant::kOff) == "off");
  CHECK_THROWS_AS(parse_contrastive_variant("x"), std::invalid_argument);
}
