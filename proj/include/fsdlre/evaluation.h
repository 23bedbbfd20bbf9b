// Episode inference, macro F1 and the analysis slices (NOTA-rate bins,
// support-count bins, support embedding dumps).

#ifndef FSDLRE_EVALUATION_H_
#define FSDLRE_EVALUATION_H_

#include "fsdlre/corpus.h"
#include "fsdlre/episode.h"
#include "fsdlre/model.h"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fsdlre {

using PredictionSet = std::set<Triple>;

// Every (h, r, t) with q.p_r > max_i q.p_i^nota.
PredictionSet decide(const EpisodeForward& forward);
PredictionSet predict_episode(const RaplModel& model, const Corpus& corpus,
                              const Episode& episode);

enum class F1Aggregation { kPooled, kPerEpisodeMean };
std::string to_string(F1Aggregation a);
F1Aggregation parse_f1_aggregation(std::string_view text);

struct RelationScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

struct ScoreReport {
  double macro_f1 = 0.0;
  std::map<std::string, RelationScore> per_relation;
  std::size_t episode_count = 0;
  F1Aggregation aggregation = F1Aggregation::kPooled;
};

nlohmann::json to_json(const ScoreReport& report);

// Precision, recall and F1 from counts, with 0/0 taken as 0.
RelationScore score_counts(long tp, long fp, long fn);

// (episode index, relation id) cells to score.
using ScoreCell = std::pair<std::size_t, std::string>;

// Counts pooled per relation over `cells`; macro F1 averages relations with
// at least one gold or predicted instance.
ScoreReport score_cells(std::span<const PredictionSet> predictions,
                        std::span<const Episode> episodes,
                        std::span<const ScoreCell> cells);

// Scores every (episode, target relation) cell. Throws std::invalid_argument
// on misaligned inputs, a prediction outside the episode targets, or a target
// outside a non-empty `universe`.
ScoreReport macro_f1(std::span<const PredictionSet> predictions,
                     std::span<const Episode> episodes,
                     const std::set<std::string>& universe = {},
                     F1Aggregation aggregation = F1Aggregation::kPooled);

std::vector<PredictionSet> predict_all(const RaplModel& model,
                                       const Corpus& corpus,
                                       std::span<const Episode> episodes);
ScoreReport evaluate(const RaplModel& model, const Corpus& corpus,
                     std::span<const Episode> episodes,
                     F1Aggregation aggregation = F1Aggregation::kPooled);

inline const std::vector<double> kDefaultNotaRateBoundaries = {0.0, 0.95, 0.97,
                                                               0.99, 1.0};

struct NotaRateBin {
  double lower = 0.0;
  double upper = 0.0;
  bool closed_upper = false;
  std::vector<std::size_t> episodes;

  std::string label() const;
};

// Left-closed bins, the last one also right-closed. Boundaries must increase
// strictly from 0 to 1. Throws std::domain_error for a query with < 2
// entities.
std::vector<NotaRateBin> bin_by_nota_rate(
    std::span<const Episode> episodes, const Corpus& corpus,
    std::span<const double> boundaries = kDefaultNotaRateBoundaries);

inline constexpr int kSupportCountCap = 10;
// "1" .. "9", then ">=10".
std::string support_count_label(int category);
// category = min(support instances, 10) -> (episode, relation) cells.
std::map<int, std::vector<ScoreCell>> bin_by_support_count(
    std::span<const Episode> episodes);

struct EmbeddingRow {
  std::string episode;
  std::string relation;
  std::string kind;  // "instance" or "prototype"
  Vector values;
};

// Tab-separated, one row per support relation instance and per relation
// prototype. `per_relation_limit` caps the instance rows of each relation in
// an episode (0 keeps all).
void dump_support_embeddings(const RaplModel& model, const Corpus& corpus,
                             std::span<const Episode> episodes,
                             const std::filesystem::path& path,
                             int per_relation_limit = 0);
std::vector<EmbeddingRow> read_embedding_dump(
    const std::filesystem::path& path);

}  // namespace fsdlre

#endif  // FSDLRE_EVALUATION_H_
