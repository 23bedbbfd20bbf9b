#include "fsdlre/evaluation.h"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fsdlre {

PredictionSet decide(const EpisodeForward& forward) {
  PredictionSet out;
  if (!forward.queries.defined()) return out;
  const PrototypeSet& protos = forward.build.prototypes;
  const Matrix& q = forward.queries.value();
  const Matrix& rel = protos.relation_prototypes.value();
  const Matrix& nota = protos.nota_prototypes.value();
  for (Index i = 0; i < q.rows(); ++i) {
    const Vector qi = q.row(i).transpose();
    for (Index r = 0; r < rel.rows(); ++r) {
      if (extracts(qi, rel.row(r).transpose(), nota)) {
        const auto& [h, t] = forward.query_pairs[static_cast<std::size_t>(i)];
        out.insert({h, t, protos.relation_ids[static_cast<std::size_t>(r)]});
      }
    }
  }
  return out;
}

PredictionSet predict_episode(const RaplModel& model, const Corpus& corpus,
                              const Episode& episode) {
  return decide(forward_episode(model, corpus, episode));
}

std::string to_string(F1Aggregation a) {
  return a == F1Aggregation::kPooled ? "pooled" : "per-episode-mean";
}

F1Aggregation parse_f1_aggregation(std::string_view text) {
  if (text == "pooled") return F1Aggregation::kPooled;
  if (text == "per-episode-mean") return F1Aggregation::kPerEpisodeMean;
  throw std::invalid_argument("unknown F1 aggregation '" + std::string(text) +
                              "' (pooled, per-episode-mean)");
}

nlohmann::json to_json(const ScoreReport& report) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [id, s] : report.per_relation) {
    per[id] = {{"precision", s.precision}, {"recall", s.recall},
               {"f1", s.f1},               {"tp", s.tp},
               {"fp", s.fp},               {"fn", s.fn}};
  }
  return {{"macro_f1", report.macro_f1},
          {"aggregation", to_string(report.aggregation)},
          {"episode_count", report.episode_count},
          {"per_relation", per}};
}

RelationScore score_counts(long tp, long fp, long fn) {
  RelationScore s{0.0, 0.0, 0.0, tp, fp, fn};
  if (tp + fp > 0) s.precision = static_cast<double>(tp) / (tp + fp);
  if (tp + fn > 0) s.recall = static_cast<double>(tp) / (tp + fn);
  if (s.precision + s.recall > 0.0) {
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

namespace {

struct Counts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

void check_aligned(std::span<const PredictionSet> predictions,
                   std::span<const Episode> episodes) {
  if (predictions.size() != episodes.size()) {
    throw std::invalid_argument("macro F1: " +
                                std::to_string(predictions.size()) +
                                " prediction sets for " +
                                std::to_string(episodes.size()) + " episodes");
  }
}

Counts count_cell(const PredictionSet& predicted, const Episode& episode,
                  const std::string& relation) {
  std::set<std::pair<int, int>> pred, gold;
  for (const Triple& t : predicted) {
    if (t.relation == relation) pred.emplace(t.head, t.tail);
  }
  for (const Triple& t : episode.gold_query_triples) {
    if (t.relation == relation) gold.emplace(t.head, t.tail);
  }
  Counts c;
  for (const auto& p : pred) {
    if (gold.contains(p)) {
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = static_cast<long>(gold.size()) - c.tp;
  return c;
}

double mean_active_f1(const std::map<std::string, Counts>& counts,
                      std::map<std::string, RelationScore>* scores) {
  double sum = 0.0;
  int active = 0;
  for (const auto& [id, c] : counts) {
    const RelationScore s = score_counts(c.tp, c.fp, c.fn);
    if (scores != nullptr) (*scores)[id] = s;
    if (c.tp + c.fp + c.fn > 0) {
      sum += s.f1;
      ++active;
    }
  }
  return active > 0 ? sum / active : 0.0;
}

}  // namespace

ScoreReport score_cells(std::span<const PredictionSet> predictions,
                        std::span<const Episode> episodes,
                        std::span<const ScoreCell> cells) {
  check_aligned(predictions, episodes);
  std::map<std::string, Counts> counts;
  std::set<std::size_t> seen;
  for (const auto& [e, relation] : cells) {
    if (e >= episodes.size()) throw std::invalid_argument("cell out of range");
    const Counts c = count_cell(predictions[e], episodes[e], relation);
    Counts& acc = counts[relation];
    acc.tp += c.tp;
    acc.fp += c.fp;
    acc.fn += c.fn;
    seen.insert(e);
  }
  ScoreReport report;
  report.macro_f1 = mean_active_f1(counts, &report.per_relation);
  report.episode_count = seen.size();
  return report;
}

ScoreReport macro_f1(std::span<const PredictionSet> predictions,
                     std::span<const Episode> episodes,
                     const std::set<std::string>& universe,
                     F1Aggregation aggregation) {
  check_aligned(predictions, episodes);
  std::vector<ScoreCell> cells;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const std::set<std::string> targets(episodes[e].target_relations.begin(),
                                        episodes[e].target_relations.end());
    for (const Triple& t : predictions[e]) {
      if (!targets.contains(t.relation)) {
        throw std::invalid_argument("episode " + std::to_string(e) +
                                    ": predicted relation " + t.relation +
                                    " is not a target");
      }
      if (t.head == t.tail) {
        throw std::invalid_argument("episode " + std::to_string(e) +
                                    ": predicted self pair");
      }
    }
    for (const std::string& r : targets) {
      if (!universe.empty() && !universe.contains(r)) {
        throw std::invalid_argument("target relation " + r +
                                    " outside the scoring universe");
      }
      cells.emplace_back(e, r);
    }
  }
  ScoreReport report = score_cells(predictions, episodes, cells);
  report.episode_count = episodes.size();
  report.aggregation = aggregation;
  if (aggregation == F1Aggregation::kPerEpisodeMean) {
    double sum = 0.0;
    int active = 0;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
      std::map<std::string, Counts> counts;
      for (const std::string& r : episodes[e].target_relations) {
        counts[r] = count_cell(predictions[e], episodes[e], r);
      }
      bool any = false;
      for (const auto& [id, c] : counts) any = any || c.tp + c.fp + c.fn > 0;
      if (!any) continue;
      sum += mean_active_f1(counts, nullptr);
      ++active;
    }
    report.macro_f1 = active > 0 ? sum / active : 0.0;
  }
  return report;
}

std::vector<PredictionSet> predict_all(const RaplModel& model,
                                       const Corpus& corpus,
                                       std::span<const Episode> episodes) {
  std::vector<PredictionSet> out;
  out.reserve(episodes.size());
  for (const Episode& e : episodes) {
    out.push_back(predict_episode(model, corpus, e));
  }
  return out;
}

ScoreReport evaluate(const RaplModel& model, const Corpus& corpus,
                     std::span<const Episode> episodes,
                     F1Aggregation aggregation) {
  const std::vector<PredictionSet> predictions =
      predict_all(model, corpus, episodes);
  return macro_f1(predictions, episodes, {}, aggregation);
}

std::string NotaRateBin::label() const {
  std::ostringstream os;
  os << '[' << lower * 100.0 << "%, " << upper * 100.0 << '%'
     << (closed_upper ? ']' : ')');
  return os.str();
}

std::vector<NotaRateBin> bin_by_nota_rate(std::span<const Episode> episodes,
                                          const Corpus& corpus,
                                          std::span<const double> boundaries) {
  if (boundaries.size() < 2 || boundaries.front() != 0.0 ||
      boundaries.back() != 1.0) {
    throw std::invalid_argument("NOTA-rate boundaries must span [0, 1]");
  }
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    if (!(boundaries[i] > boundaries[i - 1])) {
      throw std::invalid_argument("NOTA-rate boundaries must increase");
    }
  }
  std::vector<NotaRateBin> bins;
  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
    bins.push_back({boundaries[i], boundaries[i + 1],
                    i + 2 == boundaries.size(), {}});
  }
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const double rate = nota_rate(episodes[e], corpus);
    std::size_t b = 0;
    while (b + 1 < bins.size() && rate >= bins[b].upper) ++b;
    bins[b].episodes.push_back(e);
  }
  return bins;
}

std::string support_count_label(int category) {
  return category >= kSupportCountCap ? ">=10" : std::to_string(category);
}

std::map<int, std::vector<ScoreCell>> bin_by_support_count(
    std::span<const Episode> episodes) {
  std::map<int, std::vector<ScoreCell>> bins;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const std::map<std::string, int> counts =
        support_instance_counts(episodes[e]);
    for (const std::string& r : episodes[e].target_relations) {
      auto it = counts.find(r);
      const int n = it == counts.end() ? 0 : it->second;
      bins[std::min(n, kSupportCountCap)].emplace_back(e, r);
    }
  }
  return bins;
}

namespace {

void write_row(std::ostream& os, const std::string& episode,
               const std::string& relation, const char* kind,
               const RowVector& values) {
  os << episode << '\t' << relation << '\t' << kind;
  char buf[32];
  for (Index i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", values(i));
    os << '\t' << buf;
  }
  os << '\n';
}

}  // namespace

void dump_support_embeddings(const RaplModel& model, const Corpus& corpus,
                             std::span<const Episode> episodes,
                             const std::filesystem::path& path,
                             int per_relation_limit) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const int width = 2 * model.provider().hidden_size();
  os << "episode\trelation\tkind";
  for (int i = 0; i < width; ++i) os << "\ts" << i;
  os << '\n';
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const Episode& episode = episodes[e];
    const EpisodeForward fwd = forward_episode(model, corpus, episode);
    const SupportInstances& support = fwd.build.support;
    const PrototypeSet& protos = fwd.build.prototypes;
    const std::string id = std::to_string(e);
    std::map<int, int> written;
    for (std::size_t i = 0; i < support.relation_count(); ++i) {
      const int r = support.relation_index[i];
      if (per_relation_limit > 0 && written[r] >= per_relation_limit) continue;
      ++written[r];
      write_row(os, id, support.relation_provenance[i].relation, "instance",
                support.relation_reps.value().row(static_cast<Index>(i)));
    }
    for (std::size_t r = 0; r < protos.relation_ids.size(); ++r) {
      write_row(os, id, protos.relation_ids[r], "prototype",
                protos.relation_prototypes.value().row(static_cast<Index>(r)));
    }
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::vector<EmbeddingRow> read_embedding_dump(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<EmbeddingRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    EmbeddingRow row;
    std::getline(fields, row.episode, '\t');
    std::getline(fields, row.relation, '\t');
    std::getline(fields, row.kind, '\t');
    std::vector<double> values;
    std::string cell;
    while (std::getline(fields, cell, '\t')) values.push_back(std::stod(cell));
    row.values = Eigen::Map<const Vector>(values.data(),
                                          static_cast<Index>(values.size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fsdlre
