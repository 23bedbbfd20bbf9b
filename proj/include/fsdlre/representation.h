// Attention fusion and instance representations.
//
// Every op has a batched form over the autograd graph (one instance per row),
// which is what the model runs, and a single-instance form over plain values
// built on top of it.

#ifndef FSDLRE_REPRESENTATION_H_
#define FSDLRE_REPRESENTATION_H_

#include "fsdlre/autograd.h"
#include "fsdlre/encoder.h"
#include "fsdlre/encoding.h"

#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsdlre {

inline constexpr double kOverlapEpsilon = 1e-12;

// a_h . a_t below kOverlapEpsilon: the pair distributions share no support.
class DegenerateOverlapError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ProjectionParams {
  ag::Var relation_bilinear;  // W, d x d
  ag::Var head_weight;        // W_h, d x 2d
  ag::Var tail_weight;        // W_t, d x 2d
  ag::Var head_bias;          // b_h, 1 x d
  ag::Var tail_bias;          // b_t, 1 x d

  // Uniform in +-1/sqrt(fan_in).
  static ProjectionParams init(int hidden, std::mt19937_64& rng);
  std::vector<NamedParameter> parameters() const;
  int hidden_size() const {
    return static_cast<int>(relation_bilinear.rows());
  }
};

enum class FusionSide { kHead, kTail };

// Number of positions selected by top-k%: N * k / 100 rounded half up,
// clamped to [0, N].
int top_k_count(double k_percent, Index n);
// Indices of the top-k% scores; ties resolved toward the lower index.
std::vector<Index> top_k_percent_indices(const RowVector& scores,
                                         double k_percent);

// ---- batched graph ops -----------------------------------------------------

// Rows (a_h * a_t) / (a_h . a_t). Degenerate rows become uniform and their
// indices are appended to `degenerate`.
ag::Var pair_attention_rows(const ag::Var& head_att, const ag::Var& tail_att,
                            std::vector<Index>* degenerate = nullptr);
// softmax(H W h_r / sqrt(d)) for every relation row of `relations` (m x d);
// m x N_t.
ag::Var relation_attention_rows(const ag::Var& hidden, const ag::Var& bilinear,
                                const ag::Var& relations);
// 0/1 mask of the top-k% entries of pair * rel, per row.
Matrix top_k_mask(const Matrix& pair_att, const Matrix& rel_att,
                  double k_percent);
// Row-normalized pair + mask * rel.
ag::Var instance_attention_rows(const ag::Var& pair_att, const ag::Var& rel_att,
                                double k_percent);
// Att (P x N_t) times H (N_t x d).
ag::Var context_rows(const ag::Var& att, const ag::Var& hidden);
// tanh([E, C] W^T + b) per row.
ag::Var fuse_rows(const ag::Var& entities, const ag::Var& contexts,
                  const ag::Var& weight, const ag::Var& bias);

struct PairRequest {
  int head = 0;
  int tail = 0;
  // Row of the relation embedding matrix, or -1 for the pair-attention path
  // used by NOTA instances and query pairs.
  int relation = -1;
};

struct PairRepresentations {
  ag::Var reps;  // P x 2d, rows [z_h; z_t]
  std::vector<Index> degenerate_rows;
};

// `relations` (m x d) may be undefined when every request uses the pair path.
PairRepresentations represent_pairs(const EncodedDocument& enc,
                                    std::span<const PairRequest> requests,
                                    const ag::Var& relations,
                                    const ProjectionParams& params,
                                    double k_percent);

// ---- single-instance forms -------------------------------------------------

// Throws DegenerateOverlapError.
Vector pair_attention(const Vector& head_att, const Vector& tail_att);
Vector relation_attention(const Matrix& hidden, const Matrix& bilinear,
                          const Vector& relation_embedding);
Vector instance_attention(const Vector& pair_att, const Vector& rel_att,
                          double k_percent);
Vector context_embedding(const Matrix& hidden, const Vector& att);
Vector entity_fusion(const Vector& entity, const Vector& context,
                     FusionSide side, const ProjectionParams& params);

struct InstanceProvenance {
  std::string doc_id;
  int head = 0;
  int tail = 0;
  std::string relation;  // empty for NOTA

  bool operator==(const InstanceProvenance&) const = default;
};

struct InstanceRep {
  Vector s;  // 2d
  InstanceProvenance provenance;
};

struct QueryPairRep {
  Vector q;  // 2d
  int head = 0;
  int tail = 0;
};

// With a relation embedding: instance-level attention; without: pair-level
// attention (NOTA instances). Returns a 1 x 2d graph node.
ag::Var instance_representation(const EncodedDocument& enc, int head, int tail,
                                const ag::Var* relation_embedding,
                                const ProjectionParams& params,
                                double k_percent);
ag::Var query_pair_representation(const EncodedDocument& enc, int head,
                                  int tail, const ProjectionParams& params);

}  // namespace fsdlre

#endif  // FSDLRE_REPRESENTATION_H_
