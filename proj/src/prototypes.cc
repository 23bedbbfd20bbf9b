#include "fsdlre/prototypes.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace fsdlre {

BaseNotaBank BaseNotaBank::init(int count, int dim, std::mt19937_64& rng) {
  if (count < 1) throw std::invalid_argument("NOTA bank needs >= 1 vector");
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(count, dim);
  for (Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
  return {ag::parameter(std::move(m))};
}

std::vector<NamedParameter> BaseNotaBank::parameters() const {
  return {{"nota.base", vectors, false}};
}

SupportInstances collect_support_instances(const Episode& episode,
                                           const EncodingMap& encodings,
                                           const ag::Var& relations,
                                           const ProjectionParams& params,
                                           const PrototypeConfig& cfg) {
  std::map<std::string, int> target_row;
  for (std::size_t i = 0; i < episode.target_relations.size(); ++i) {
    target_row[episode.target_relations[i]] = static_cast<int>(i);
  }
  const std::set<std::string> targets(episode.target_relations.begin(),
                                      episode.target_relations.end());

  SupportInstances out;
  std::vector<ag::Var> relation_blocks;
  std::vector<ag::Var> nota_blocks;
  for (const SupportDocument& support : episode.support) {
    const EncodedDocument& enc = encodings.at(support.doc_id);
    std::vector<PairRequest> requests;
    std::vector<InstanceProvenance> provenance;
    std::size_t relation_requests = 0;
    for (const Triple& t : support.triples) {
      auto it = target_row.find(t.relation);
      if (it == target_row.end()) continue;
      requests.push_back(
          {t.head, t.tail, cfg.instance_based ? it->second : -1});
      provenance.push_back({support.doc_id, t.head, t.tail, t.relation});
      out.relation_index.push_back(it->second);
      ++relation_requests;
    }
    for (const auto& [h, t] :
         enumerate_nota_pairs(enc.entity_count(), support.triples, targets)) {
      requests.push_back({h, t, -1});
      provenance.push_back({support.doc_id, h, t, ""});
    }
    if (requests.empty()) continue;

    const ag::Var reps =
        represent_pairs(enc, requests, relations, params, cfg.top_k_percent)
            .reps;
    const auto n_rel = static_cast<Index>(relation_requests);
    const auto n_nota = static_cast<Index>(requests.size()) - n_rel;
    if (n_rel > 0) relation_blocks.push_back(ag::slice_rows(reps, 0, n_rel));
    if (n_nota > 0) nota_blocks.push_back(ag::slice_rows(reps, n_rel, n_nota));
    for (std::size_t i = 0; i < provenance.size(); ++i) {
      if (i < relation_requests) {
        out.relation_provenance.push_back(std::move(provenance[i]));
      } else {
        out.nota_provenance.push_back(std::move(provenance[i]));
      }
    }
  }
  if (!relation_blocks.empty()) out.relation_reps = ag::vconcat(relation_blocks);
  if (!nota_blocks.empty()) out.nota_reps = ag::vconcat(nota_blocks);
  return out;
}

Vector PrototypeSet::relation_prototype(const std::string& id) const {
  auto it = std::find(relation_ids.begin(), relation_ids.end(), id);
  if (it == relation_ids.end()) {
    throw std::out_of_range("no prototype for relation " + id);
  }
  const auto row = static_cast<Index>(it - relation_ids.begin());
  return relation_prototypes.value().row(row).transpose();
}

ag::Var relation_prototype(const ag::Var& instance_reps) {
  if (!instance_reps.defined() || instance_reps.rows() == 0) {
    throw std::invalid_argument("relation prototype needs >= 1 instance");
  }
  return ag::mean_over_rows(instance_reps);
}

Vector relation_prototype(std::span<const InstanceRep> instances) {
  if (instances.empty()) {
    throw std::invalid_argument("relation prototype needs >= 1 instance");
  }
  Vector mean = Vector::Zero(instances.front().s.size());
  for (const InstanceRep& r : instances) mean += r.s;
  return mean / static_cast<double>(instances.size());
}

int select_nota_instance(const Vector& base, const Matrix& nota_reps,
                         const Matrix& relation_prototypes) {
  if (nota_reps.rows() == 0) {
    throw std::invalid_argument("no support NOTA instances to select from");
  }
  if (relation_prototypes.rows() == 0) {
    throw std::invalid_argument("no relation prototypes");
  }
  const Vector to_base = nota_reps * base;
  const Vector to_relation =
      (nota_reps * relation_prototypes.transpose()).rowwise().maxCoeff();
  const Vector score = to_base - to_relation;
  Index best = 0;
  for (Index i = 1; i < score.size(); ++i) {
    if (score(i) > score(best)) best = i;
  }
  return static_cast<int>(best);
}

const InstanceRep& select_nota_instance(
    const Vector& base, std::span<const InstanceRep> nota_reps,
    const std::map<std::string, Vector>& relation_prototypes) {
  if (nota_reps.empty()) {
    throw std::invalid_argument("no support NOTA instances to select from");
  }
  Matrix reps(static_cast<Index>(nota_reps.size()), base.size());
  for (std::size_t i = 0; i < nota_reps.size(); ++i) {
    reps.row(static_cast<Index>(i)) = nota_reps[i].s.transpose();
  }
  Matrix protos(static_cast<Index>(relation_prototypes.size()), base.size());
  Index row = 0;
  for (const auto& [id, p] : relation_prototypes) {
    protos.row(row++) = p.transpose();
  }
  return nota_reps[static_cast<std::size_t>(
      select_nota_instance(base, reps, protos))];
}

Vector nota_prototype(const Vector& base, const Vector* selected,
                      double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1]");
  }
  if (selected == nullptr) return base;
  return alpha * base + (1.0 - alpha) * *selected;
}

PrototypeBuild build_prototype_set(const Episode& episode,
                                   const EncodingMap& encodings,
                                   const ag::Var& relations,
                                   const ProjectionParams& params,
                                   const BaseNotaBank& bank,
                                   const PrototypeConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1]");
  }
  PrototypeBuild build;
  build.support =
      collect_support_instances(episode, encodings, relations, params, cfg);
  const SupportInstances& support = build.support;
  PrototypeSet& set = build.prototypes;
  set.relation_ids = episode.target_relations;
  set.relation_embeddings = relations;

  const std::size_t m = episode.target_relations.size();
  std::vector<std::vector<Index>> rows_of(m);
  for (std::size_t i = 0; i < support.relation_index.size(); ++i) {
    rows_of[static_cast<std::size_t>(support.relation_index[i])].push_back(
        static_cast<Index>(i));
  }
  std::vector<ag::Var> protos;
  for (std::size_t r = 0; r < m; ++r) {
    if (rows_of[r].empty()) {
      throw std::invalid_argument("target relation " +
                                  episode.target_relations[r] +
                                  " has no support instance");
    }
    protos.push_back(
        relation_prototype(ag::gather_rows(support.relation_reps, rows_of[r])));
  }
  set.relation_prototypes = ag::vconcat(protos);

  set.selected_nota.assign(static_cast<std::size_t>(bank.count()), -1);
  if (cfg.disable_tnpg || support.nota_count() == 0) {
    set.nota_prototypes = bank.vectors;
    return build;
  }
  std::vector<Index> chosen;
  for (int i = 0; i < bank.count(); ++i) {
    const int pick = select_nota_instance(
        bank.vectors.value().row(i).transpose(), support.nota_reps.value(),
        set.relation_prototypes.value());
    set.selected_nota[static_cast<std::size_t>(i)] = pick;
    chosen.push_back(pick);
  }
  set.nota_prototypes =
      ag::add(ag::scale(bank.vectors, cfg.alpha),
              ag::scale(ag::gather_rows(support.nota_reps, chosen),
                        1.0 - cfg.alpha));
  return build;
}

}  // namespace fsdlre
