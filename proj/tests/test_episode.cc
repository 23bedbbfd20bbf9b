#include "fsdlre/episode.h"

#include "synthetic.h"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace fsdlre;

namespace {

Corpus corpus_of(std::vector<Document> docs, int relations = 3) {
  return Corpus(std::move(docs), testing::trigger_catalog(relations));
}

RelationSplit all_train(int relations) {
  std::set<std::string> ids;
  for (int r = 0; r < relations; ++r) ids.insert("R" + std::to_string(r));
  return RelationSplit(ids, {}, {});
}

Episode one_query(const std::string& query, std::vector<Triple> gold,
                  std::vector<std::string> targets) {
  Episode e;
  e.query_doc_id = query;
  e.target_relations = std::move(targets);
  e.gold_query_triples = std::move(gold);
  return e;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fsdlre_" + name);
}

}  // namespace

TEST_CASE("NOTA pairs of a three-entity document") {
  const std::vector<Triple> triples{{0, 1, "R0"}};
  const auto pairs = enumerate_nota_pairs(3, triples, {"R0"});
  CHECK(pairs.size() == 5);
  for (const auto& [h, t] : pairs) CHECK_FALSE((h == 0 && t == 1));
  // A relation outside the targets leaves the pair NOTA.
  CHECK(enumerate_nota_pairs(3, triples, {"R1"}).size() == 6);
}

TEST_CASE("NOTA rate examples") {
  const Corpus c = corpus_of({testing::chain_document("a", 2, {}),
                              testing::chain_document("b", 3, {{0, 1, "R0"}}),
                              testing::chain_document("c", 2, {{0, 1, "R0"}, {1, 0, "R0"}}),
                              testing::chain_document("d", 1, {})});
  CHECK(nota_rate(one_query("a", {}, {"R0"}), c) == 1.0);
  CHECK(nota_rate(one_query("c", {{0, 1, "R0"}, {1, 0, "R0"}}, {"R0"}), c) ==
        0.0);
  CHECK(nota_rate(one_query("b", {{0, 1, "R0"}}, {"R0"}), c) ==
        doctest::Approx(5.0 / 6.0));
  CHECK_THROWS_AS(nota_rate(one_query("d", {}, {"R0"}), c), std::domain_error);
}

TEST_CASE("sampling is deterministic per draw index") {
  testing::SyntheticSpec spec;
  spec.documents = 12;
  const Corpus c = testing::synthetic_corpus(spec);
  EpisodeConfig cfg;
  cfg.seed = 5;
  cfg.n_docs = 3;
  const RelationSplit split = all_train(3);
  CHECK(sample_episode(c, split, cfg, 4) == sample_episode(c, split, cfg, 4));
  bool differs = false;
  for (std::uint64_t i = 0; i < 10 && !differs; ++i) {
    differs = !(sample_episode(c, split, cfg, i) == sample_episode(c, split, cfg, i + 1));
  }
  CHECK(differs);
}

TEST_CASE("sampled episodes satisfy the invariants") {
  testing::SyntheticSpec spec;
  spec.documents = 20;
  spec.relations = 5;
  spec.facts_per_document = 2;
  const Corpus c = testing::synthetic_corpus(spec);
  const RelationSplit split({"R0", "R1", "R2", "R3"}, {"R4"}, {});
  for (int n_docs : {1, 3}) {
    EpisodeConfig cfg;
    cfg.n_docs = n_docs;
    cfg.seed = 9;
    for (std::uint64_t i = 0; i < 1000; ++i) {
      const Episode e = sample_episode(c, split, cfg, i);
      REQUIRE(episode_violations(e, c).empty());
      CHECK(e.support.size() == static_cast<std::size_t>(n_docs));
      for (const auto& r : e.target_relations) CHECK(split.train_ids().contains(r));
    }
  }
}

TEST_CASE("target cap and dev split") {
  testing::SyntheticSpec spec;
  spec.documents = 10;
  spec.relations = 4;
  spec.facts_per_document = 4;
  const Corpus c = testing::synthetic_corpus(spec);
  const RelationSplit split({"R0", "R1", "R2"}, {"R3"}, {});
  EpisodeConfig cfg;
  cfg.max_target_relations = 2;
  for (std::uint64_t i = 0; i < 50; ++i) {
    CHECK(sample_episode(c, split, cfg, i).target_relations.size() <= 2);
  }
  cfg.max_target_relations = 0;
  cfg.source_split = SourceSplit::kDev;
  CHECK(sample_episode(c, split, cfg, 0).target_relations ==
        std::vector<std::string>{"R3"});
  cfg.source_split = SourceSplit::kTestCross;
  CHECK(candidate_relations(c, split, SourceSplit::kTestCross).size() == 4);
}

TEST_CASE("sampling errors") {
  const Corpus tiny = corpus_of({testing::chain_document("a", 2, {{0, 1, "R0"}})});
  EpisodeConfig cfg;
  CHECK_THROWS_AS(sample_episode(tiny, all_train(3), cfg, 0),
                  SamplingExhaustedError);
  const Corpus empty_rel = corpus_of({testing::chain_document("a", 2, {}),
                                      testing::chain_document("b", 2, {})});
  CHECK_THROWS_AS(sample_episode(empty_rel, all_train(3), cfg, 0),
                  SamplingExhaustedError);
  CHECK_THROWS_AS(sample_episode(empty_rel, RelationSplit{}, cfg, 0),
                  std::invalid_argument);
}

TEST_CASE("support counts and statistics") {
  Episode e = one_query("q", {}, {"R0", "R1"});
  e.support.push_back({"a", {{0, 1, "R0"}, {1, 0, "R0"}}});
  e.support.push_back({"b", {{0, 1, "R1"}}});
  const auto counts = support_instance_counts(e);
  CHECK(counts.at("R0") == 2);
  CHECK(counts.at("R1") == 1);
  Episode f = one_query("q", {}, {"R0"});
  f.support.push_back({"a", {{0, 1, "R0"}}});
  const std::vector<Episode> both{e, f};
  const EpisodeStats s = episode_stats(both);
  CHECK(s.avg_target_relations == doctest::Approx(1.5));
  CHECK(s.avg_support_instances_per_relation == doctest::Approx((1.5 + 1.0) / 2.0));
  CHECK_THROWS_AS(episode_stats(std::span<const Episode>{}), std::invalid_argument);
}

TEST_CASE("episode file round trip") {
  testing::SyntheticSpec spec;
  const Corpus c = testing::synthetic_corpus(spec);
  EpisodeConfig cfg;
  cfg.n_docs = 2;
  std::vector<Episode> episodes;
  for (std::uint64_t i = 0; i < 20; ++i) {
    episodes.push_back(sample_episode(c, all_train(3), cfg, i));
  }
  const auto path = temp_path("episodes.jsonl");
  const EpisodeFileHeader header{kEpisodeSchemaVersion, 2, "train"};
  write_episode_file(path, header, episodes);
  const EpisodeFile back = read_episode_file(path);
  CHECK(back.header == header);
  CHECK(back.episodes == episodes);
}

TEST_CASE("truncated and versioned episode files") {
  testing::SyntheticSpec spec;
  const Corpus c = testing::synthetic_corpus(spec);
  std::vector<Episode> episodes{sample_episode(c, all_train(3), {}, 0)};
  const auto path = temp_path("truncated.jsonl");
  write_episode_file(path, {kEpisodeSchemaVersion, 1, "train"}, episodes);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 10);
  try {
    read_episode_file(path);
    FAIL("expected an episode file error");
  } catch (const EpisodeFileError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
  const auto future = temp_path("future.jsonl");
  std::ofstream(future) << R"({"schema_version": 99, "n_docs": 1, "split": "train"})"
                        << "\n";
  CHECK_THROWS_AS(read_episode_file(future), EpisodeFileError);
}
