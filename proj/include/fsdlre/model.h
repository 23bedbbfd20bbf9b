// The full model: encoder provider, projection parameters and the base NOTA
// bank, plus the per-episode forward pass shared by training and inference.

#ifndef FSDLRE_MODEL_H_
#define FSDLRE_MODEL_H_

#include "fsdlre/corpus.h"
#include "fsdlre/encoder.h"
#include "fsdlre/episode.h"
#include "fsdlre/objectives.h"
#include "fsdlre/prototypes.h"
#include "fsdlre/representation.h"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace fsdlre {

struct ModelConfig {
  double top_k_percent = 15.0;
  double tau = 0.4;
  int nota_count = 15;
  double alpha = 0.9;
  double lambda = 0.1;
  ContrastiveVariant variant = ContrastiveVariant::kRcl;
  bool disable_tnpg = false;
  // false: support relation instances take the pair-attention path.
  bool instance_based = true;
  // Relation encoder weights stay fixed (excluded from parameters()).
  bool freeze_relation_encoder = false;
};

class RaplModel {
 public:
  RaplModel(std::unique_ptr<EncoderProvider> provider, const ModelConfig& cfg,
            std::uint64_t seed);

  const EncoderProvider& provider() const { return *provider_; }
  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }
  const ProjectionParams& projection() const { return projection_; }
  const BaseNotaBank& bank() const { return bank_; }
  PrototypeConfig prototype_config() const;

  // Every trainable tensor, in a fixed order with unique names.
  std::vector<NamedParameter> parameters() const;

 private:
  std::unique_ptr<EncoderProvider> provider_;
  ModelConfig cfg_;
  ProjectionParams projection_;
  BaseNotaBank bank_;
};

EncodedDocument encode_corpus_document(const EncoderProvider& provider,
                                       const Document& doc);
EncodingMap encode_episode_documents(const RaplModel& model,
                                     const Corpus& corpus,
                                     const Episode& episode);
// Relation embeddings of `ids` from the catalog, one per row (m x d).
ag::Var relation_embedding_rows(const RaplModel& model, const Corpus& corpus,
                                const std::vector<std::string>& ids);

struct EpisodeForward {
  PrototypeBuild build;
  ag::Var queries;  // P x 2d, undefined when the query has < 2 entities
  std::vector<EntityPair> query_pairs;
};

EpisodeForward forward_episode(const RaplModel& model, const Corpus& corpus,
                               const Episode& episode);

struct EpisodeLoss {
  ag::Var total;  // 1 x 1
  LossBreakdown breakdown;
};

// bce + lambda * contrastive, with the contrastive term dropped when the
// variant is off.
EpisodeLoss episode_loss(const RaplModel& model, const Corpus& corpus,
                         const Episode& episode);

}  // namespace fsdlre

#endif  // FSDLRE_MODEL_H_
