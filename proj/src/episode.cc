#include "fsdlre/episode.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fsdlre {
namespace {

using nlohmann::json;

std::set<std::string> relations_in(const Document& doc,
                                   const std::set<std::string>& allowed) {
  std::set<std::string> out;
  for (const Triple& t : doc.triples) {
    if (allowed.contains(t.relation)) out.insert(t.relation);
  }
  return out;
}

std::vector<Triple> restrict_triples(const std::set<Triple>& triples,
                                     const std::set<std::string>& targets) {
  std::vector<Triple> out;
  for (const Triple& t : triples) {
    if (targets.contains(t.relation)) out.push_back(t);
  }
  return out;
}

json triple_to_json(const Triple& t) {
  return {{"h", t.head}, {"t", t.tail}, {"r", t.relation}};
}

Triple triple_from_json(const json& j) {
  return Triple{j.at("h").get<int>(), j.at("t").get<int>(),
                j.at("r").get<std::string>()};
}

}  // namespace

std::string to_string(SourceSplit split) {
  switch (split) {
    case SourceSplit::kTrain:
      return "train";
    case SourceSplit::kDev:
      return "dev";
    case SourceSplit::kTestIn:
      return "test_in";
    case SourceSplit::kTestCross:
      return "test_cross";
  }
  return "unknown";
}

SourceSplit parse_source_split(const std::string& name) {
  if (name == "train") return SourceSplit::kTrain;
  if (name == "dev") return SourceSplit::kDev;
  if (name == "test_in") return SourceSplit::kTestIn;
  if (name == "test_cross") return SourceSplit::kTestCross;
  throw std::invalid_argument("unknown split '" + name +
                              "' (expected train, dev, test_in, test_cross)");
}

std::set<std::string> candidate_relations(const Corpus& corpus,
                                          const RelationSplit& split,
                                          SourceSplit source) {
  switch (source) {
    case SourceSplit::kTrain:
      return split.train_ids();
    case SourceSplit::kDev:
      return split.dev_ids();
    case SourceSplit::kTestIn:
      return split.test_ids();
    case SourceSplit::kTestCross: {
      std::set<std::string> all;
      for (const auto& [id, rel] : corpus.catalog()) all.insert(id);
      return all;
    }
  }
  return {};
}

Episode sample_training_episode(const Corpus& corpus,
                                const RelationSplit& split,
                                const EpisodeConfig& cfg,
                                std::mt19937_64& rng) {
  if (corpus.size() == 0) {
    throw std::invalid_argument("cannot sample episodes from an empty corpus");
  }
  if (cfg.n_docs < 1) throw std::invalid_argument("n_docs must be >= 1");
  const auto allowed = candidate_relations(corpus, split, cfg.source_split);
  if (allowed.empty()) {
    throw std::invalid_argument("split '" + to_string(cfg.source_split) +
                                "' has no relation ids");
  }
  const std::size_t n_docs = static_cast<std::size_t>(cfg.n_docs);
  if (corpus.size() < n_docs + 1) {
    throw SamplingExhaustedError(
        "corpus has " + std::to_string(corpus.size()) +
        " documents; an episode needs " + std::to_string(n_docs + 1));
  }

  const auto& docs = corpus.documents();
  std::vector<std::size_t> pool(docs.size());
  for (int attempt = 0; attempt < kMaxSamplingAttempts; ++attempt) {
    std::uniform_int_distribution<std::size_t> pick_query(0, docs.size() - 1);
    const std::size_t query = pick_query(rng);

    pool.resize(docs.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(query));
    // Partial Fisher-Yates: the first n_docs entries become the support set.
    for (std::size_t i = 0; i < n_docs; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }

    std::set<std::string> targets;
    for (std::size_t i = 0; i < n_docs; ++i) {
      targets.merge(relations_in(docs[pool[i]], allowed));
    }
    if (targets.empty()) continue;

    if (cfg.max_target_relations > 0 &&
        targets.size() > static_cast<std::size_t>(cfg.max_target_relations)) {
      std::vector<std::string> all(targets.begin(), targets.end());
      for (std::size_t i = 0;
           i < static_cast<std::size_t>(cfg.max_target_relations); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
        std::swap(all[i], all[pick(rng)]);
      }
      all.resize(static_cast<std::size_t>(cfg.max_target_relations));
      targets = std::set<std::string>(all.begin(), all.end());
    }

    Episode episode;
    for (std::size_t i = 0; i < n_docs; ++i) {
      const Document& doc = docs[pool[i]];
      episode.support.push_back(
          SupportDocument{doc.doc_id, restrict_triples(doc.triples, targets)});
    }
    episode.query_doc_id = docs[query].doc_id;
    episode.target_relations.assign(targets.begin(), targets.end());
    episode.gold_query_triples = restrict_triples(docs[query].triples, targets);
    return episode;
  }
  throw SamplingExhaustedError("no valid episode after " +
                               std::to_string(kMaxSamplingAttempts) +
                               " sampling attempts");
}

Episode sample_episode(const Corpus& corpus, const RelationSplit& split,
                       const EpisodeConfig& cfg, std::uint64_t draw_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                    static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(draw_index),
                    static_cast<std::uint32_t>(draw_index >> 32)};
  std::mt19937_64 rng(seq);
  return sample_training_episode(corpus, split, cfg, rng);
}

std::vector<std::string> episode_violations(const Episode& episode,
                                            const Corpus& corpus) {
  std::vector<std::string> out;
  if (episode.support.empty()) out.push_back("no support documents");
  if (!std::is_sorted(episode.target_relations.begin(),
                      episode.target_relations.end()) ||
      std::adjacent_find(episode.target_relations.begin(),
                         episode.target_relations.end()) !=
          episode.target_relations.end()) {
    out.push_back("target relations not sorted and unique");
  }
  const std::set<std::string> targets(episode.target_relations.begin(),
                                      episode.target_relations.end());
  if (targets.empty()) out.push_back("no target relations");

  std::set<std::string> seen_docs;
  std::map<std::string, int> counts;
  for (const SupportDocument& s : episode.support) {
    if (!seen_docs.insert(s.doc_id).second) {
      out.push_back("support document repeated: " + s.doc_id);
    }
    if (!corpus.contains(s.doc_id)) {
      out.push_back("unknown support document: " + s.doc_id);
      continue;
    }
    const Document& doc = corpus.document(s.doc_id);
    for (const Triple& t : s.triples) {
      if (!targets.contains(t.relation)) {
        out.push_back("support triple outside targets in " + s.doc_id);
      }
      if (!doc.triples.contains(t)) {
        out.push_back("support triple not in document " + s.doc_id);
      }
      ++counts[t.relation];
    }
    // Support annotation must be complete for the targets.
    if (restrict_triples(doc.triples, targets) != s.triples) {
      out.push_back("support triples incomplete for " + s.doc_id);
    }
  }
  for (const std::string& r : targets) {
    if (counts[r] < 1) out.push_back("target without support instance: " + r);
  }
  if (seen_docs.contains(episode.query_doc_id)) {
    out.push_back("query document is also a support document");
  }
  if (!corpus.contains(episode.query_doc_id)) {
    out.push_back("unknown query document: " + episode.query_doc_id);
  } else {
    const Document& q = corpus.document(episode.query_doc_id);
    if (restrict_triples(q.triples, targets) != episode.gold_query_triples) {
      out.push_back("gold query triples do not match the query document");
    }
  }
  for (const Triple& t : episode.gold_query_triples) {
    if (!targets.contains(t.relation)) {
      out.push_back("gold query triple outside targets");
    }
  }
  return out;
}

std::vector<EntityPair> enumerate_nota_pairs(
    int entity_count, std::span<const Triple> triples,
    const std::set<std::string>& target_relations) {
  std::set<EntityPair> positive;
  for (const Triple& t : triples) {
    if (target_relations.contains(t.relation)) {
      positive.emplace(t.head, t.tail);
    }
  }
  std::vector<EntityPair> out;
  for (int h = 0; h < entity_count; ++h) {
    for (int t = 0; t < entity_count; ++t) {
      if (h != t && !positive.contains({h, t})) out.emplace_back(h, t);
    }
  }
  return out;
}

std::vector<EntityPair> enumerate_nota_pairs(
    const Document& doc, const std::set<std::string>& target_relations) {
  std::vector<Triple> triples(doc.triples.begin(), doc.triples.end());
  return enumerate_nota_pairs(doc.entity_count(), triples, target_relations);
}

double nota_rate(const Episode& episode, const Corpus& corpus) {
  const Document& query = corpus.document(episode.query_doc_id);
  const int n = query.entity_count();
  if (n < 2) {
    throw std::domain_error("NOTA rate undefined: query document '" +
                            query.doc_id + "' has fewer than two entities");
  }
  const std::set<std::string> targets(episode.target_relations.begin(),
                                      episode.target_relations.end());
  const auto nota =
      enumerate_nota_pairs(n, episode.gold_query_triples, targets);
  return static_cast<double>(nota.size()) / static_cast<double>(n * (n - 1));
}

std::map<std::string, int> support_instance_counts(const Episode& episode) {
  std::map<std::string, int> counts;
  for (const std::string& r : episode.target_relations) counts[r] = 0;
  for (const SupportDocument& s : episode.support) {
    for (const Triple& t : s.triples) ++counts[t.relation];
  }
  return counts;
}

EpisodeStats episode_stats(std::span<const Episode> episodes) {
  if (episodes.empty()) {
    throw std::invalid_argument("episode_stats: no episodes");
  }
  double n_sum = 0.0;
  double k_sum = 0.0;
  for (const Episode& e : episodes) {
    n_sum += static_cast<double>(e.target_relations.size());
    const auto counts = support_instance_counts(e);
    double k = 0.0;
    for (const auto& [r, c] : counts) k += c;
    if (!counts.empty()) k /= static_cast<double>(counts.size());
    k_sum += k;
  }
  const double n = static_cast<double>(episodes.size());
  return {n_sum / n, k_sum / n};
}

json episode_to_json(const Episode& episode) {
  json support_ids = json::array();
  json support_triples = json::array();
  for (const SupportDocument& s : episode.support) {
    support_ids.push_back(s.doc_id);
    json triples = json::array();
    for (const Triple& t : s.triples) triples.push_back(triple_to_json(t));
    support_triples.push_back(std::move(triples));
  }
  json gold = json::array();
  for (const Triple& t : episode.gold_query_triples) {
    gold.push_back(triple_to_json(t));
  }
  return {{"support_doc_ids", std::move(support_ids)},
          {"support_triples", std::move(support_triples)},
          {"query_doc_id", episode.query_doc_id},
          {"target_relation_ids", episode.target_relations},
          {"gold_query_triples", std::move(gold)}};
}

Episode episode_from_json(const json& j) {
  Episode episode;
  const json& ids = j.at("support_doc_ids");
  const json& triples = j.at("support_triples");
  if (ids.size() != triples.size()) {
    throw EpisodeFileError(
        "support_doc_ids and support_triples differ in length");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    SupportDocument s;
    s.doc_id = ids[i].get<std::string>();
    for (const json& t : triples[i]) s.triples.push_back(triple_from_json(t));
    episode.support.push_back(std::move(s));
  }
  episode.query_doc_id = j.at("query_doc_id").get<std::string>();
  episode.target_relations =
      j.at("target_relation_ids").get<std::vector<std::string>>();
  for (const json& t : j.at("gold_query_triples")) {
    episode.gold_query_triples.push_back(triple_from_json(t));
  }
  return episode;
}

void write_episode_file(const std::filesystem::path& path,
                        const EpisodeFileHeader& header,
                        std::span<const Episode> episodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EpisodeFileError("cannot write " + path.string());
  out << json{{"schema_version", header.schema_version},
              {"n_docs", header.n_docs},
              {"split_name", header.split_name}}
             .dump()
      << '\n';
  for (const Episode& e : episodes) out << episode_to_json(e).dump() << '\n';
  if (!out) throw EpisodeFileError("write failed: " + path.string());
}

EpisodeFile read_episode_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EpisodeFileError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  EpisodeFile file;
  bool have_header = false;
  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string::npos) eol = text.size();
    const std::string_view line(text.data() + offset, eol - offset);
    const std::size_t line_start = offset;
    offset = eol + 1;
    if (line.empty()) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      const std::size_t at = line_start + (e.byte > 0 ? e.byte - 1 : 0);
      throw EpisodeFileError(path.string() + ": parse error at byte offset " +
                             std::to_string(at) + ": " + e.what());
    }
    try {
      if (!have_header) {
        file.header.schema_version = j.at("schema_version").get<int>();
        if (file.header.schema_version != kEpisodeSchemaVersion) {
          throw EpisodeFileError(
              path.string() + ": unsupported schema version " +
              std::to_string(file.header.schema_version) + " (expected " +
              std::to_string(kEpisodeSchemaVersion) + ")");
        }
        file.header.n_docs = j.at("n_docs").get<int>();
        file.header.split_name = j.at("split_name").get<std::string>();
        have_header = true;
      } else {
        file.episodes.push_back(episode_from_json(j));
      }
    } catch (const json::exception& e) {
      throw EpisodeFileError(path.string() + ": schema error in record at byte offset " +
                             std::to_string(line_start) + ": " + e.what());
    }
  }
  if (!have_header) {
    throw EpisodeFileError(path.string() +
                           ": parse error at byte offset 0: missing header");
  }
  return file;
}

}  // namespace fsdlre
