// N-Doc episodes: construction, NOTA pair enumeration, statistics and the
// JSON-lines episode file.

#ifndef FSDLRE_EPISODE_H_
#define FSDLRE_EPISODE_H_

#include "fsdlre/corpus.h"

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fsdlre {

struct SupportDocument {
  std::string doc_id;
  // Complete annotation restricted to the episode's target relations.
  std::vector<Triple> triples;

  bool operator==(const SupportDocument&) const = default;
};

struct Episode {
  std::vector<SupportDocument> support;
  std::string query_doc_id;
  // Sorted, unique.
  std::vector<std::string> target_relations;
  std::vector<Triple> gold_query_triples;

  bool operator==(const Episode&) const = default;
};

enum class SourceSplit { kTrain, kDev, kTestIn, kTestCross };

std::string to_string(SourceSplit split);
SourceSplit parse_source_split(const std::string& name);

struct EpisodeConfig {
  int n_docs = 1;
  std::uint64_t seed = 0;
  // 0 disables the cap.
  int max_target_relations = 0;
  SourceSplit source_split = SourceSplit::kTrain;
};

class SamplingExhaustedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMaxSamplingAttempts = 1000;

// Relation ids an episode drawn from `source` may target. The cross-domain
// test split targets every relation in the corpus catalog.
std::set<std::string> candidate_relations(const Corpus& corpus,
                                          const RelationSplit& split,
                                          SourceSplit source);

// Rejection sampler: uniform query document, n_docs distinct uniform support
// documents, targets = support relations within the split (uniform subset
// when capped). The generator is the only source of randomness.
Episode sample_training_episode(const Corpus& corpus,
                                const RelationSplit& split,
                                const EpisodeConfig& cfg, std::mt19937_64& rng);

// Deterministic in (corpus, cfg.seed, draw_index).
Episode sample_episode(const Corpus& corpus, const RelationSplit& split,
                       const EpisodeConfig& cfg, std::uint64_t draw_index);

// Empty when the episode is valid, otherwise one message per violation.
std::vector<std::string> episode_violations(const Episode& episode,
                                            const Corpus& corpus);

using EntityPair = std::pair<int, int>;

// Ordered pairs (h != t) holding no target relation in `triples`.
std::vector<EntityPair> enumerate_nota_pairs(
    int entity_count, std::span<const Triple> triples,
    const std::set<std::string>& target_relations);
std::vector<EntityPair> enumerate_nota_pairs(
    const Document& doc, const std::set<std::string>& target_relations);

// Fraction of ordered query pairs holding no target relation. Throws
// std::domain_error when the query document has fewer than two entities.
double nota_rate(const Episode& episode, const Corpus& corpus);

// Support instance count per target relation.
std::map<std::string, int> support_instance_counts(const Episode& episode);

struct EpisodeStats {
  double avg_target_relations = 0.0;
  double avg_support_instances_per_relation = 0.0;
};

// Throws std::invalid_argument on empty input.
EpisodeStats episode_stats(std::span<const Episode> episodes);

inline constexpr int kEpisodeSchemaVersion = 1;

struct EpisodeFileHeader {
  int schema_version = kEpisodeSchemaVersion;
  int n_docs = 1;
  std::string split_name;

  bool operator==(const EpisodeFileHeader&) const = default;
};

struct EpisodeFile {
  EpisodeFileHeader header;
  std::vector<Episode> episodes;
};

class EpisodeFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json episode_to_json(const Episode& episode);
Episode episode_from_json(const nlohmann::json& j);

void write_episode_file(const std::filesystem::path& path,
                        const EpisodeFileHeader& header,
                        std::span<const Episode> episodes);
// Parse failures name the byte offset; unknown schema versions are rejected.
EpisodeFile read_episode_file(const std::filesystem::path& path);

}  // namespace fsdlre

#endif  // FSDLRE_EPISODE_H_
