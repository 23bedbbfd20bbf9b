#include "fsdlre/objectives.h"

#include <cmath>
#include <stdexcept>

namespace fsdlre {
namespace {

Matrix rows_of(std::span<const LabeledInstance> instances) {
  if (instances.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Index>(instances.size()), instances.front().s.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    m.row(static_cast<Index>(i)) = instances[i].s.transpose();
  }
  return m;
}

}  // namespace

std::string to_string(ContrastiveVariant v) {
  switch (v) {
    case ContrastiveVariant::kRcl: return "rcl";
    case ContrastiveVariant::kScl: return "scl";
    case ContrastiveVariant::kOff: return "off";
  }
  return "?";
}

ContrastiveVariant parse_contrastive_variant(std::string_view text) {
  if (text == "rcl") return ContrastiveVariant::kRcl;
  if (text == "scl") return ContrastiveVariant::kScl;
  if (text == "off") return ContrastiveVariant::kOff;
  throw std::invalid_argument("unknown contrastive variant '" +
                              std::string(text) + "' (rcl, scl, off)");
}

double relation_pair_weight(const Vector& h_r, const Vector& h_rhat,
                            bool same_relation) {
  const double nr = h_r.norm();
  const double nh = h_rhat.norm();
  if (nr == 0.0 || nh == 0.0) {
    throw std::invalid_argument("relation_pair_weight: zero embedding");
  }
  if (same_relation) return 1.0;
  const double cos = h_r.dot(h_rhat) / (std::max(nr, kCosineEpsilon) *
                                        std::max(nh, kCosineEpsilon));
  return 1.0 + (cos + 1.0) / 2.0;
}

ContrastiveResult contrastive_loss_rows(const ag::Var& reps,
                                        std::span<const int> labels,
                                        const ag::Var& relations,
                                        const ContrastiveConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw std::invalid_argument("tau must be positive");
  const auto n = static_cast<Index>(labels.size());
  if (!reps.defined() || reps.rows() != n) {
    throw std::invalid_argument("contrastive loss: reps/labels mismatch");
  }
  ContrastiveResult out;
  Matrix others = Matrix::Ones(n, n);
  others.diagonal().setZero();
  Matrix positives = Matrix::Zero(n, n);
  Vector weight = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i != j && labels[static_cast<std::size_t>(i)] ==
                        labels[static_cast<std::size_t>(j)]) {
        positives(i, j) = 1.0;
      }
    }
    const double count = positives.row(i).sum();
    if (count > 0.0) {
      positives.row(i) /= count;
      ++out.contributing;
    } else {
      ++out.skipped;
    }
  }
  if (out.contributing == 0) {
    out.loss = ag::constant_scalar(0.0);
    return out;
  }
  for (Index i = 0; i < n; ++i) {
    if (positives.row(i).sum() > 0.0) weight(i) = 1.0 / out.contributing;
  }

  const ag::Var logits =
      ag::scale(ag::matmul(reps, ag::transpose(reps)), 1.0 / cfg.tau);
  ag::Var denom_logits = logits;
  if (cfg.variant == ContrastiveVariant::kRcl) {
    if (!relations.defined()) {
      throw std::invalid_argument("weighted contrastive loss needs relations");
    }
    std::vector<Index> rows(labels.begin(), labels.end());
    const ag::Var unit =
        ag::normalize_rows_l2(ag::gather_rows(relations, rows), kCosineEpsilon);
    const ag::Var cos = ag::matmul(unit, ag::transpose(unit));
    Matrix different(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        different(i, j) = labels[static_cast<std::size_t>(i)] ==
                                  labels[static_cast<std::size_t>(j)]
                              ? 0.0
                              : 0.5;
      }
    }
    // omega = 1 + different * (cos + 1), with different in {0, 1/2}.
    const ag::Var omega = ag::add_scalar(
        ag::cwise_mul(ag::constant(different), ag::add_scalar(cos, 1.0)), 1.0);
    denom_logits = ag::add(logits, ag::log(omega));
  }
  const ag::Var lse = ag::masked_logsumexp_rows(denom_logits, others);
  const ag::Var pos = ag::row_sums(ag::cwise_mul(logits, ag::constant(positives)));
  out.loss = ag::sum(ag::cwise_mul(ag::sub(lse, pos), ag::constant(weight)));
  return out;
}

ContrastiveValue rcl_loss(std::span<const LabeledInstance> instances,
                          const std::map<std::string, Vector>& relations,
                          const ContrastiveConfig& cfg) {
  std::map<std::string, int> index;
  std::vector<int> labels;
  Matrix rel;
  for (const LabeledInstance& inst : instances) {
    index.emplace(inst.relation, static_cast<int>(index.size()));
  }
  if (!index.empty()) {
    rel.resize(static_cast<Index>(index.size()),
               relations.at(index.begin()->first).size());
    for (const auto& [id, row] : index) rel.row(row) = relations.at(id).transpose();
  }
  for (const LabeledInstance& inst : instances) labels.push_back(index.at(inst.relation));
  ContrastiveConfig c = cfg;
  c.variant = ContrastiveVariant::kRcl;
  const ContrastiveResult r = contrastive_loss_rows(
      ag::constant(rows_of(instances)), labels, ag::constant(rel), c);
  return {r.loss.scalar(), r.contributing, r.skipped};
}

ContrastiveValue scl_loss(std::span<const LabeledInstance> instances,
                          const ContrastiveConfig& cfg) {
  std::map<std::string, int> index;
  std::vector<int> labels;
  for (const LabeledInstance& inst : instances) {
    labels.push_back(
        index.emplace(inst.relation, static_cast<int>(index.size())).first->second);
  }
  ContrastiveConfig c = cfg;
  c.variant = ContrastiveVariant::kScl;
  const ContrastiveResult r = contrastive_loss_rows(
      ag::constant(rows_of(instances)), labels, ag::Var(), c);
  return {r.loss.scalar(), r.contributing, r.skipped};
}

double relation_probability(const Vector& q, const Vector& p_r,
                            const Matrix& nota_prototypes) {
  if (nota_prototypes.rows() == 0) {
    throw std::invalid_argument("relation_probability: no NOTA prototypes");
  }
  const double lr = q.dot(p_r);
  const double ln = (nota_prototypes * q).maxCoeff();
  const double x = lr - ln;
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool extracts(const Vector& q, const Vector& p_r,
              const Matrix& nota_prototypes) {
  return q.dot(p_r) > (nota_prototypes * q).maxCoeff();
}

ag::Var bce_loss_rows(const ag::Var& queries, const Matrix& labels,
                      const ag::Var& relation_prototypes,
                      const ag::Var& nota_prototypes) {
  if (queries.rows() != labels.rows() ||
      relation_prototypes.rows() != labels.cols()) {
    throw std::invalid_argument("bce_loss: shape mismatch");
  }
  const Index pairs = queries.rows();
  const Index m = labels.cols();
  const ag::Var rel_logits =
      ag::matmul(queries, ag::transpose(relation_prototypes));
  const ag::Var nota_logit =
      ag::row_max(ag::matmul(queries, ag::transpose(nota_prototypes)));
  const ag::Var shifted =
      ag::add_col(rel_logits, ag::scale(nota_logit, -1.0));
  const ag::Var p = ag::clamp(ag::sigmoid(shifted), kProbabilityClamp,
                              1.0 - kProbabilityClamp);
  const ag::Var log_p = ag::log(p);
  const ag::Var log_q = ag::log(ag::add_scalar(ag::scale(p, -1.0), 1.0));
  const Matrix negatives = Matrix::Ones(pairs, m) - labels;
  const ag::Var ll = ag::add(ag::cwise_mul(ag::constant(labels), log_p),
                             ag::cwise_mul(ag::constant(negatives), log_q));
  return ag::scale(ag::sum(ll), -1.0 / static_cast<double>(pairs));
}

double bce_loss(std::span<const QueryPairRep> queries,
                std::span<const std::set<std::string>> gold,
                const PrototypeSet& prototypes) {
  if (queries.size() != gold.size()) {
    throw std::invalid_argument("bce_loss: queries/gold mismatch");
  }
  if (queries.empty()) return 0.0;
  const auto m = static_cast<Index>(prototypes.relation_ids.size());
  Matrix q(static_cast<Index>(queries.size()), queries.front().q.size());
  Matrix labels = Matrix::Zero(q.rows(), m);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto row = static_cast<Index>(i);
    q.row(row) = queries[i].q.transpose();
    for (Index r = 0; r < m; ++r) {
      if (gold[i].contains(prototypes.relation_ids[static_cast<std::size_t>(r)])) {
        labels(row, r) = 1.0;
      }
    }
  }
  return bce_loss_rows(ag::constant(q), labels,
                       ag::constant(prototypes.relation_prototypes.value()),
                       ag::constant(prototypes.nota_prototypes.value()))
      .scalar();
}

LossBreakdown total_loss(double bce, double rcl, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  LossBreakdown out;
  out.bce = bce;
  out.rcl = rcl;
  out.total = bce + lambda * rcl;
  return out;
}

}  // namespace fsdlre
