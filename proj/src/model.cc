#include "fsdlre/model.h"

#include <random>
#include <stdexcept>

namespace fsdlre {

RaplModel::RaplModel(std::unique_ptr<EncoderProvider> provider,
                     const ModelConfig& cfg, std::uint64_t seed)
    : provider_(std::move(provider)), cfg_(cfg) {
  if (!provider_) throw std::invalid_argument("model needs an encoder");
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  const int d = provider_->hidden_size();
  projection_ = ProjectionParams::init(d, rng);
  bank_ = BaseNotaBank::init(cfg_.nota_count, 2 * d, rng);
}

PrototypeConfig RaplModel::prototype_config() const {
  PrototypeConfig p;
  p.nota_count = cfg_.nota_count;
  p.alpha = cfg_.alpha;
  p.top_k_percent = cfg_.top_k_percent;
  p.disable_tnpg = cfg_.disable_tnpg;
  p.instance_based = cfg_.instance_based;
  return p;
}

std::vector<NamedParameter> RaplModel::parameters() const {
  std::vector<NamedParameter> all = provider_->document_parameters();
  if (!cfg_.freeze_relation_encoder) {
    for (auto& p : provider_->relation_parameters()) all.push_back(p);
  }
  for (auto& p : projection_.parameters()) all.push_back(p);
  for (auto& p : bank_.parameters()) all.push_back(p);
  return all;
}

EncodedDocument encode_corpus_document(const EncoderProvider& provider,
                                       const Document& doc) {
  return encode_long_document(insert_markers(doc, provider.tokenizer()),
                              provider);
}

EncodingMap encode_episode_documents(const RaplModel& model,
                                     const Corpus& corpus,
                                     const Episode& episode) {
  EncodingMap out;
  auto add = [&](const std::string& id) {
    if (!out.contains(id)) {
      out.emplace(id, encode_corpus_document(model.provider(),
                                             corpus.document(id)));
    }
  };
  for (const SupportDocument& s : episode.support) add(s.doc_id);
  add(episode.query_doc_id);
  return out;
}

ag::Var relation_embedding_rows(const RaplModel& model, const Corpus& corpus,
                                const std::vector<std::string>& ids) {
  std::vector<ag::Var> rows;
  for (const std::string& id : ids) {
    auto it = corpus.catalog().find(id);
    if (it == corpus.catalog().end()) {
      throw std::out_of_range("relation " + id + " is not in the catalog");
    }
    rows.push_back(ag::transpose(encode_relation(it->second, model.provider())));
  }
  return ag::vconcat(rows);
}

EpisodeForward forward_episode(const RaplModel& model, const Corpus& corpus,
                               const Episode& episode) {
  const EncodingMap encodings =
      encode_episode_documents(model, corpus, episode);
  const ag::Var relations =
      relation_embedding_rows(model, corpus, episode.target_relations);

  EpisodeForward out;
  out.build = build_prototype_set(episode, encodings, relations,
                                  model.projection(), model.bank(),
                                  model.prototype_config());
  if (model.config().disable_tnpg &&
      out.build.prototypes.nota_prototypes.value() !=
          model.bank().vectors.value()) {
    throw std::logic_error("NOTA prototypes differ from the bank with TNPG off");
  }

  const EncodedDocument& query = encodings.at(episode.query_doc_id);
  std::vector<PairRequest> requests;
  for (int h = 0; h < query.entity_count(); ++h) {
    for (int t = 0; t < query.entity_count(); ++t) {
      if (h == t) continue;
      requests.push_back({h, t, -1});
      out.query_pairs.emplace_back(h, t);
    }
  }
  if (!requests.empty()) {
    out.queries = represent_pairs(query, requests, ag::Var(),
                                  model.projection(),
                                  model.config().top_k_percent)
                      .reps;
  }
  return out;
}

EpisodeLoss episode_loss(const RaplModel& model, const Corpus& corpus,
                         const Episode& episode) {
  const ModelConfig& cfg = model.config();
  const EpisodeForward fwd = forward_episode(model, corpus, episode);
  const PrototypeSet& protos = fwd.build.prototypes;
  const SupportInstances& support = fwd.build.support;

  EpisodeLoss out;
  ag::Var bce = ag::constant_scalar(0.0);
  if (fwd.queries.defined()) {
    std::map<std::string, Index> column;
    for (std::size_t r = 0; r < protos.relation_ids.size(); ++r) {
      column[protos.relation_ids[r]] = static_cast<Index>(r);
    }
    std::map<EntityPair, Index> row;
    for (std::size_t i = 0; i < fwd.query_pairs.size(); ++i) {
      row[fwd.query_pairs[i]] = static_cast<Index>(i);
    }
    Matrix labels = Matrix::Zero(fwd.queries.rows(),
                                 static_cast<Index>(protos.relation_ids.size()));
    for (const Triple& t : episode.gold_query_triples) {
      auto c = column.find(t.relation);
      if (c == column.end()) continue;
      labels(row.at({t.head, t.tail}), c->second) = 1.0;
    }
    bce = bce_loss_rows(fwd.queries, labels, protos.relation_prototypes,
                        protos.nota_prototypes);
    out.breakdown.query_pairs = static_cast<int>(fwd.query_pairs.size());
  }

  ag::Var rcl = ag::constant_scalar(0.0);
  out.breakdown.support_instances = static_cast<int>(support.relation_count());
  if (cfg.variant != ContrastiveVariant::kOff && support.relation_count() > 0) {
    const ContrastiveResult c = contrastive_loss_rows(
        support.relation_reps, support.relation_index,
        protos.relation_embeddings, {cfg.tau, cfg.variant});
    rcl = c.loss;
    out.breakdown.skipped_singletons = c.skipped;
  }

  out.total = ag::add(bce, ag::scale(rcl, cfg.lambda));
  out.breakdown.bce = bce.scalar();
  out.breakdown.rcl = rcl.scalar();
  out.breakdown.total = out.total.scalar();
  return out;
}

}  // namespace fsdlre
