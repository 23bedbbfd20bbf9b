// Relation prototypes from support instances and task-specific NOTA
// prototypes.

#ifndef FSDLRE_PROTOTYPES_H_
#define FSDLRE_PROTOTYPES_H_

#include "fsdlre/autograd.h"
#include "fsdlre/encoding.h"
#include "fsdlre/episode.h"
#include "fsdlre/representation.h"

#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fsdlre {

struct BaseNotaBank {
  ag::Var vectors;  // N_nota x 2d

  // Each entry uniform in +-1/sqrt(dim).
  static BaseNotaBank init(int count, int dim, std::mt19937_64& rng);
  int count() const { return static_cast<int>(vectors.rows()); }
  std::vector<NamedParameter> parameters() const;
};

struct PrototypeConfig {
  int nota_count = 15;
  double alpha = 0.9;
  double top_k_percent = 15.0;
  bool disable_tnpg = false;
  // false: support relation instances use pair-level attention only.
  bool instance_based = true;
};

using EncodingMap = std::map<std::string, EncodedDocument>;

struct SupportInstances {
  ag::Var relation_reps;  // |S| x 2d, undefined when S is empty
  std::vector<InstanceProvenance> relation_provenance;
  // Row of each relation instance's relation in the episode target list.
  std::vector<int> relation_index;
  ag::Var nota_reps;  // |S_nota| x 2d, undefined when S_nota is empty
  std::vector<InstanceProvenance> nota_provenance;

  std::size_t relation_count() const { return relation_provenance.size(); }
  std::size_t nota_count() const { return nota_provenance.size(); }
};

// Relation instances (one per support triple, so a pair holding m target
// relations yields m instances) and support NOTA instances. `relations` holds
// the target relation embeddings in episode order (m x d).
SupportInstances collect_support_instances(const Episode& episode,
                                           const EncodingMap& encodings,
                                           const ag::Var& relations,
                                           const ProjectionParams& params,
                                           const PrototypeConfig& cfg);

struct PrototypeSet {
  std::vector<std::string> relation_ids;
  ag::Var relation_prototypes;  // m x 2d
  ag::Var nota_prototypes;      // N_nota x 2d
  ag::Var relation_embeddings;  // m x d
  // Per base vector: selected row of S_nota, or -1 when the bank was used
  // verbatim.
  std::vector<int> selected_nota;

  Vector relation_prototype(const std::string& id) const;
};

// Mean of instance rows; 1 x 2d.
ag::Var relation_prototype(const ag::Var& instance_reps);
// Throws std::invalid_argument on empty input.
Vector relation_prototype(std::span<const InstanceRep> instances);

// argmax_i [ s_i . base - max_r s_i . p_r ], lowest index on ties. Throws
// std::invalid_argument when there are no candidates or no prototypes.
int select_nota_instance(const Vector& base, const Matrix& nota_reps,
                         const Matrix& relation_prototypes);
const InstanceRep& select_nota_instance(
    const Vector& base, std::span<const InstanceRep> nota_reps,
    const std::map<std::string, Vector>& relation_prototypes);

// alpha * base + (1 - alpha) * selected; `base` verbatim when nothing was
// selected. Throws std::invalid_argument for alpha outside [0, 1].
Vector nota_prototype(const Vector& base, const Vector* selected, double alpha);

struct PrototypeBuild {
  PrototypeSet prototypes;
  SupportInstances support;
};

PrototypeBuild build_prototype_set(const Episode& episode,
                                   const EncodingMap& encodings,
                                   const ag::Var& relations,
                                   const ProjectionParams& params,
                                   const BaseNotaBank& bank,
                                   const PrototypeConfig& cfg);

}  // namespace fsdlre

#endif  // FSDLRE_PROTOTYPES_H_
