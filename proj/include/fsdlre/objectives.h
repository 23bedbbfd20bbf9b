// Training objectives: relation-weighted contrastive loss, its unweighted
// supervised-contrastive variant, the prototype classification probability,
// binary cross-entropy and their sum.

#ifndef FSDLRE_OBJECTIVES_H_
#define FSDLRE_OBJECTIVES_H_

#include "fsdlre/autograd.h"
#include "fsdlre/prototypes.h"

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fsdlre {

inline constexpr double kCosineEpsilon = 1e-12;
inline constexpr double kProbabilityClamp = 1e-12;

enum class ContrastiveVariant { kRcl, kScl, kOff };

std::string to_string(ContrastiveVariant v);
// Throws std::invalid_argument.
ContrastiveVariant parse_contrastive_variant(std::string_view text);

struct ContrastiveConfig {
  double tau = 0.4;
  ContrastiveVariant variant = ContrastiveVariant::kRcl;
};

struct LossBreakdown {
  double bce = 0.0;
  double rcl = 0.0;
  double total = 0.0;
  int query_pairs = 0;
  int support_instances = 0;
  int skipped_singletons = 0;
};

// 1 within a relation, else 1 + (cos(h_r, h_rhat) + 1) / 2. Throws
// std::invalid_argument for a zero vector.
double relation_pair_weight(const Vector& h_r, const Vector& h_rhat,
                            bool same_relation);

struct ContrastiveResult {
  ag::Var loss;  // 1 x 1
  int contributing = 0;
  int skipped = 0;
};

// reps: n x 2d instance rows; labels[i]: row of instance i's relation in
// `relations` (m x d). `relations` is only read for the weighted variant.
// Anchors without positives are skipped; the loss averages the rest, and is 0
// when every anchor is skipped.
ContrastiveResult contrastive_loss_rows(const ag::Var& reps,
                                        std::span<const int> labels,
                                        const ag::Var& relations,
                                        const ContrastiveConfig& cfg);

struct LabeledInstance {
  Vector s;
  std::string relation;
};

struct ContrastiveValue {
  double loss = 0.0;
  int contributing = 0;
  int skipped = 0;
};

// Value forms of contrastive_loss_rows. rcl_loss throws std::out_of_range
// when a relation has no embedding.
ContrastiveValue rcl_loss(std::span<const LabeledInstance> instances,
                          const std::map<std::string, Vector>& relations,
                          const ContrastiveConfig& cfg);
ContrastiveValue scl_loss(std::span<const LabeledInstance> instances,
                          const ContrastiveConfig& cfg);

// sigmoid(q.p_r - max_i q.p_i); nota_prototypes holds one prototype per row.
double relation_probability(const Vector& q, const Vector& p_r,
                            const Matrix& nota_prototypes);
// q.p_r > max_i q.p_i, strictly.
bool extracts(const Vector& q, const Vector& p_r,
              const Matrix& nota_prototypes);

// queries: P x 2d; labels: P x m multi-hot in prototype order. Mean over
// pairs of the per-pair sum over relations.
ag::Var bce_loss_rows(const ag::Var& queries, const Matrix& labels,
                      const ag::Var& relation_prototypes,
                      const ag::Var& nota_prototypes);

double bce_loss(std::span<const QueryPairRep> queries,
                std::span<const std::set<std::string>> gold,
                const PrototypeSet& prototypes);

// Throws std::invalid_argument for negative lambda.
LossBreakdown total_loss(double bce, double rcl, double lambda);

}  // namespace fsdlre

#endif  // FSDLRE_OBJECTIVES_H_
