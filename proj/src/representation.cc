#include "fsdlre/representation.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fsdlre {
namespace {

Matrix uniform_matrix(Index rows, Index cols, double bound,
                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
  return m;
}

Matrix as_row(const Vector& v) { return v.transpose(); }

}  // namespace

ProjectionParams ProjectionParams::init(int hidden, std::mt19937_64& rng) {
  const Index d = hidden;
  const double bound_w = 1.0 / std::sqrt(static_cast<double>(d));
  const double bound_f = 1.0 / std::sqrt(static_cast<double>(2 * d));
  ProjectionParams p;
  p.relation_bilinear = ag::parameter(uniform_matrix(d, d, bound_w, rng));
  p.head_weight = ag::parameter(uniform_matrix(d, 2 * d, bound_f, rng));
  p.tail_weight = ag::parameter(uniform_matrix(d, 2 * d, bound_f, rng));
  p.head_bias = ag::parameter(uniform_matrix(1, d, bound_f, rng));
  p.tail_bias = ag::parameter(uniform_matrix(1, d, bound_f, rng));
  return p;
}

std::vector<NamedParameter> ProjectionParams::parameters() const {
  return {{"proj.W", relation_bilinear, true},
          {"proj.W_h", head_weight, true},
          {"proj.W_t", tail_weight, true},
          {"proj.b_h", head_bias, false},
          {"proj.b_t", tail_bias, false}};
}

int top_k_count(double k_percent, Index n) {
  if (k_percent < 0.0 || k_percent > 100.0) {
    throw std::invalid_argument("top-k percentage must lie in [0, 100]");
  }
  const double raw = k_percent * static_cast<double>(n) / 100.0;
  const auto count = static_cast<Index>(std::floor(raw + 0.5));
  return static_cast<int>(std::clamp<Index>(count, 0, n));
}

std::vector<Index> top_k_percent_indices(const RowVector& scores,
                                         double k_percent) {
  const int count = top_k_count(k_percent, scores.size());
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return scores(a) > scores(b);
  });
  order.resize(static_cast<std::size_t>(count));
  std::sort(order.begin(), order.end());
  return order;
}

ag::Var pair_attention_rows(const ag::Var& head_att, const ag::Var& tail_att,
                            std::vector<Index>* degenerate) {
  return ag::normalize_rows_l1(ag::cwise_mul(head_att, tail_att),
                               kOverlapEpsilon, degenerate);
}

ag::Var relation_attention_rows(const ag::Var& hidden, const ag::Var& bilinear,
                                const ag::Var& relations) {
  const double scale =
      1.0 / std::sqrt(static_cast<double>(hidden.cols()));
  // Row r holds (H W h_r)^T = h_r^T W^T H^T.
  ag::Var logits = ag::matmul(ag::matmul(relations, ag::transpose(bilinear)),
                              ag::transpose(hidden));
  logits = ag::scale(logits, scale);
  if (!logits.value().allFinite()) {
    throw std::domain_error("relation attention: non-finite logits");
  }
  return ag::softmax_rows(logits);
}

Matrix top_k_mask(const Matrix& pair_att, const Matrix& rel_att,
                  double k_percent) {
  Matrix mask = Matrix::Zero(pair_att.rows(), pair_att.cols());
  for (Index i = 0; i < pair_att.rows(); ++i) {
    const RowVector scores = pair_att.row(i).cwiseProduct(rel_att.row(i));
    for (Index j : top_k_percent_indices(scores, k_percent)) mask(i, j) = 1.0;
  }
  return mask;
}

ag::Var instance_attention_rows(const ag::Var& pair_att, const ag::Var& rel_att,
                                double k_percent) {
  const Matrix mask = top_k_mask(pair_att.value(), rel_att.value(), k_percent);
  ag::Var boosted =
      ag::add(pair_att, ag::cwise_mul(ag::constant(mask), rel_att));
  return ag::normalize_rows_l1(boosted, kOverlapEpsilon);
}

ag::Var context_rows(const ag::Var& att, const ag::Var& hidden) {
  return ag::matmul(att, hidden);
}

ag::Var fuse_rows(const ag::Var& entities, const ag::Var& contexts,
                  const ag::Var& weight, const ag::Var& bias) {
  const ag::Var parts[] = {entities, contexts};
  return ag::tanh(ag::add_row(
      ag::matmul(ag::hconcat(parts), ag::transpose(weight)), bias));
}

PairRepresentations represent_pairs(const EncodedDocument& enc,
                                    std::span<const PairRequest> requests,
                                    const ag::Var& relations,
                                    const ProjectionParams& params,
                                    double k_percent) {
  if (requests.empty()) throw std::invalid_argument("no pairs to represent");
  std::vector<Index> heads, tails, rel_rows;
  bool any_relation = false;
  for (const PairRequest& r : requests) {
    if (r.head == r.tail) {
      throw std::invalid_argument("pair head equals tail (" +
                                  std::to_string(r.head) + ")");
    }
    heads.push_back(r.head);
    tails.push_back(r.tail);
    rel_rows.push_back(std::max(r.relation, 0));
    any_relation = any_relation || r.relation >= 0;
  }

  const ag::Var embeddings = entity_embeddings(enc);
  const ag::Var attentions = entity_attentions(enc);

  PairRepresentations out;
  ag::Var att = pair_attention_rows(ag::gather_rows(attentions, heads),
                                    ag::gather_rows(attentions, tails),
                                    &out.degenerate_rows);
  for (Index row : out.degenerate_rows) {
    const PairRequest& r = requests[static_cast<std::size_t>(row)];
    spdlog::warn(
        "pair ({}, {}): entity attentions do not overlap; using uniform "
        "pair attention",
        r.head, r.tail);
  }

  if (any_relation) {
    if (!relations.defined()) {
      throw std::invalid_argument("relation requests need relation embeddings");
    }
    const ag::Var rel_att = ag::gather_rows(
        relation_attention_rows(enc.hidden, params.relation_bilinear,
                                relations),
        rel_rows);
    Matrix mask = top_k_mask(att.value(), rel_att.value(), k_percent);
    for (std::size_t i = 0; i < requests.size(); ++i) {
      if (requests[i].relation < 0) mask.row(static_cast<Index>(i)).setZero();
    }
    att = ag::normalize_rows_l1(
        ag::add(att, ag::cwise_mul(ag::constant(mask), rel_att)),
        kOverlapEpsilon);
  }

  const ag::Var contexts = context_rows(att, enc.hidden);
  const ag::Var z_head = fuse_rows(ag::gather_rows(embeddings, heads), contexts,
                                   params.head_weight, params.head_bias);
  const ag::Var z_tail = fuse_rows(ag::gather_rows(embeddings, tails), contexts,
                                   params.tail_weight, params.tail_bias);
  const ag::Var halves[] = {z_head, z_tail};
  out.reps = ag::hconcat(halves);
  return out;
}

Vector pair_attention(const Vector& head_att, const Vector& tail_att) {
  if (head_att.size() != tail_att.size()) {
    throw std::invalid_argument("pair_attention: length mismatch");
  }
  std::vector<Index> degenerate;
  ag::Var out = pair_attention_rows(ag::constant(as_row(head_att)),
                                    ag::constant(as_row(tail_att)),
                                    &degenerate);
  if (!degenerate.empty()) {
    throw DegenerateOverlapError(
        "pair attention: entity attentions do not overlap");
  }
  return out.value().row(0).transpose();
}

Vector relation_attention(const Matrix& hidden, const Matrix& bilinear,
                          const Vector& relation_embedding) {
  if (hidden.cols() != bilinear.rows() ||
      bilinear.cols() != relation_embedding.size()) {
    throw std::invalid_argument("relation_attention: shape mismatch");
  }
  return relation_attention_rows(ag::constant(hidden), ag::constant(bilinear),
                                 ag::constant(as_row(relation_embedding)))
      .value()
      .row(0)
      .transpose();
}

Vector instance_attention(const Vector& pair_att, const Vector& rel_att,
                          double k_percent) {
  if (pair_att.size() != rel_att.size()) {
    throw std::invalid_argument("instance_attention: length mismatch");
  }
  return instance_attention_rows(ag::constant(as_row(pair_att)),
                                 ag::constant(as_row(rel_att)), k_percent)
      .value()
      .row(0)
      .transpose();
}

Vector context_embedding(const Matrix& hidden, const Vector& att) {
  if (hidden.rows() != att.size()) {
    throw std::invalid_argument("context_embedding: length mismatch");
  }
  return context_rows(ag::constant(as_row(att)), ag::constant(hidden))
      .value()
      .row(0)
      .transpose();
}

Vector entity_fusion(const Vector& entity, const Vector& context,
                     FusionSide side, const ProjectionParams& params) {
  const bool head = side == FusionSide::kHead;
  return fuse_rows(ag::constant(as_row(entity)), ag::constant(as_row(context)),
                   head ? params.head_weight : params.tail_weight,
                   head ? params.head_bias : params.tail_bias)
      .value()
      .row(0)
      .transpose();
}

ag::Var instance_representation(const EncodedDocument& enc, int head, int tail,
                                const ag::Var* relation_embedding,
                                const ProjectionParams& params,
                                double k_percent) {
  PairRequest request{head, tail, relation_embedding != nullptr ? 0 : -1};
  ag::Var relations;
  if (relation_embedding != nullptr) {
    relations = ag::transpose(*relation_embedding);
  }
  return represent_pairs(enc, std::span(&request, 1), relations, params,
                         k_percent)
      .reps;
}

ag::Var query_pair_representation(const EncodedDocument& enc, int head,
                                  int tail, const ProjectionParams& params) {
  return instance_representation(enc, head, tail, nullptr, params, 0.0);
}

}  // namespace fsdlre
