#include "fsdlre/evaluation.h"

#include "synthetic.h"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace fsdlre;

namespace {

Episode targets(std::vector<std::string> rels, std::vector<Triple> gold,
                std::string query = "q") {
  Episode e;
  e.query_doc_id = std::move(query);
  e.target_relations = std::move(rels);
  e.gold_query_triples = std::move(gold);
  return e;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fsdlre_" + name);
}

}  // namespace

TEST_CASE("macro F1 from hand-computed counts") {
  // r1: tp 1, fp 1, fn 0 -> 2/3. r2: tp 0, fp 0, fn 2 -> 0.
  const std::vector<Episode> eps{
      targets({"r1", "r2"}, {{0, 1, "r1"}, {0, 2, "r2"}, {1, 2, "r2"}})};
  const std::vector<PredictionSet> preds{{{0, 1, "r1"}, {1, 0, "r1"}}};
  const ScoreReport r = macro_f1(preds, eps);
  CHECK(r.per_relation.at("r1").f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.per_relation.at("r2").f1 == 0.0);
  CHECK(r.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("macro F1 edge cases") {
  const std::vector<Episode> eps{targets({"a"}, {{0, 1, "a"}}),
                                 targets({"a", "b"}, {{1, 0, "b"}})};
  const std::vector<PredictionSet> perfect{{{0, 1, "a"}}, {{1, 0, "b"}}};
  CHECK(macro_f1(perfect, eps).macro_f1 == 1.0);
  const std::vector<PredictionSet> none(2);
  CHECK(macro_f1(none, eps).macro_f1 == 0.0);
  CHECK_THROWS_AS(macro_f1(std::vector<PredictionSet>(1), eps), std::invalid_argument);
  const std::vector<PredictionSet> outside{{{0, 1, "b"}}, {}};
  CHECK_THROWS_AS(macro_f1(outside, eps), std::invalid_argument);
  const std::vector<PredictionSet> self{{{1, 1, "a"}}, {}};
  CHECK_THROWS_AS(macro_f1(self, eps), std::invalid_argument);
  CHECK_THROWS_AS(macro_f1(perfect, eps, {"a"}), std::invalid_argument);
  // Episode order does not matter.
  const std::vector<Episode> rev{eps[1], eps[0]};
  const std::vector<PredictionSet> half{{{0, 1, "a"}}, {}};
  const std::vector<PredictionSet> half_rev{{}, {{0, 1, "a"}}};
  CHECK(macro_f1(half, eps).macro_f1 == macro_f1(half_rev, rev).macro_f1);
}

TEST_CASE("per-episode-mean aggregation") {
  const std::vector<Episode> eps{targets({"a"}, {{0, 1, "a"}}),
                                 targets({"a"}, {{0, 1, "a"}, {1, 0, "a"}})};
  const std::vector<PredictionSet> preds{{{0, 1, "a"}}, {}};
  // Episode F1s 1 and 0; pooled counts tp 1, fn 2 -> 0.5.
  CHECK(macro_f1(preds, eps, {}, F1Aggregation::kPerEpisodeMean).macro_f1 == 0.5);
  CHECK(macro_f1(preds, eps).macro_f1 == doctest::Approx(0.5));
  CHECK(parse_f1_aggregation("per-episode-mean") == F1Aggregation::kPerEpisodeMean);
  CHECK_THROWS_AS(parse_f1_aggregation("micro"), std::invalid_argument);
}

TEST_CASE("score counts") {
  const RelationScore s = score_counts(0, 0, 0);
  CHECK(s.f1 == 0.0);
  CHECK(score_counts(3, 1, 2).f1 == doctest::Approx(2.0 * 0.75 * 0.6 / 1.35));
}

TEST_CASE("NOTA-rate bins are left-closed partitions") {
  // Query with 21 entities has 420 ordered pairs.
  const auto query = testing::chain_document("q", 21, {});
  std::vector<Document> docs{query, testing::chain_document("s", 2, {})};
  const Corpus c(docs, testing::trigger_catalog(1));
  auto episode_with_pairs = [&](int related) {
    std::vector<Triple> g;
    for (int h = 0; h < 21; ++h) {
      for (int t = 0; t < 21; ++t) {
        if (h != t && g.size() < static_cast<std::size_t>(related)) g.push_back({h, t, "R0"});
      }
    }
    return targets({"R0"}, g);
  };
  // 21 related pairs -> rate exactly 0.95.
  const std::vector<Episode> eps{episode_with_pairs(21), episode_with_pairs(0),
                                 episode_with_pairs(40), episode_with_pairs(1)};
  const auto bins = bin_by_nota_rate(eps, c);
  REQUIRE(bins.size() == 4);
  CHECK(bins[0].label() == "[0%, 95%)");
  CHECK(bins[3].label() == "[99%, 100%]");
  CHECK(bins[1].episodes == std::vector<std::size_t>{0});
  CHECK(bins[0].episodes == std::vector<std::size_t>{2});
  CHECK(bins[3].episodes == std::vector<std::size_t>{1, 3});
  std::size_t total = 0;
  for (const auto& b : bins) total += b.episodes.size();
  CHECK(total == eps.size());
  const std::vector<double> bad{0.0, 0.5, 0.4, 1.0};
  CHECK_THROWS_AS(bin_by_nota_rate(eps, c, bad), std::invalid_argument);
}

TEST_CASE("support-count categories") {
  Episode e = targets({"a", "b", "c"}, {});
  SupportDocument s{"s", {}};
  for (int i = 0; i < 3; ++i) s.triples.push_back({0, i + 1, "a"});
  for (int i = 0; i < 14; ++i) s.triples.push_back({1, i + 2, "b"});
  s.triples.push_back({2, 0, "c"});
  e.support.push_back(s);
  const std::vector<Episode> eps{e, e};
  const auto bins = bin_by_support_count(eps);
  CHECK(bins.at(3).size() == 2);
  CHECK(bins.at(10).size() == 2);
  CHECK(bins.at(1).size() == 2);
  CHECK(support_count_label(10) == ">=10");
  CHECK(support_count_label(3) == "3");
  std::size_t cells = 0;
  for (const auto& [k, v] : bins) cells += v.size();
  CHECK(cells == 6);
}

TEST_CASE("decisions match a per-pair scan") {
  testing::SyntheticSpec spec;
  spec.documents = 6;
  const Corpus c = testing::synthetic_corpus(spec);
  const RelationSplit split = testing::train_split(3);
  const RaplModel model = testing::tiny_model({});
  for (std::uint64_t i = 0; i < 5; ++i) {
    const Episode e = sample_episode(c, split, {}, i);
    const EpisodeForward fwd = forward_episode(model, c, e);
    const PredictionSet got = decide(fwd);
    PredictionSet scan;
    const Matrix q = fwd.queries.value();
    const Matrix nota = fwd.build.prototypes.nota_prototypes.value();
    for (Index p = 0; p < q.rows(); ++p) {
      for (std::size_t r = 0; r < e.target_relations.size(); ++r) {
        const Vector qv = q.row(p).transpose();
        const Vector pr = fwd.build.prototypes.relation_prototype(e.target_relations[r]);
        if (relation_probability(qv, pr, nota) > 0.5) {
          const auto [h, t] = fwd.query_pairs[static_cast<std::size_t>(p)];
          scan.insert({h, t, e.target_relations[r]});
        }
      }
    }
    CHECK(got == scan);
    CHECK(predict_episode(model, c, e) == got);
  }
}

TEST_CASE("support embedding dump") {
  std::vector<Triple> triples;
  for (int i = 0; i < 11; ++i) {
    triples.push_back({i, i + 1, "R0"});
    triples.push_back({i + 1, i, "R1"});
  }
  for (int i = 0; i < 10; ++i) triples.push_back({i, i + 2, "R2"});
  const Document support = testing::chain_document("s", 12, triples);
  const Document query = testing::chain_document("q", 3, {{0, 1, "R0"}});
  const Corpus c({support, query}, testing::trigger_catalog(3));
  Episode e = targets({"R0", "R1", "R2"}, {{0, 1, "R0"}});
  e.support.push_back({"s", triples});
  const RaplModel model = testing::tiny_model({});
  const auto path = temp_path("dump.tsv");
  const std::vector<Episode> eps{e};
  dump_support_embeddings(model, c, eps, path, 10);
  const auto rows = read_embedding_dump(path);
  REQUIRE(rows.size() == 33);
  std::map<std::string, int> instances, prototypes;
  for (const auto& r : rows) {
    CHECK(r.values.size() == 16);
    (r.kind == "instance" ? instances : prototypes)[r.relation]++;
  }
  CHECK(instances == std::map<std::string, int>{{"R0", 10}, {"R1", 10}, {"R2", 10}});
  CHECK(prototypes.size() == 3);
  const EpisodeForward fwd = forward_episode(model, c, e);
  const Vector p0 = fwd.build.prototypes.relation_prototype("R0");
  bool found = false;
  for (const auto& r : rows) {
    if (r.kind == "prototype" && r.relation == "R0") found = r.values == p0;
  }
  CHECK(found);

  const auto empty = temp_path("dump_empty.tsv");
  dump_support_embeddings(model, c, std::span<const Episode>{}, empty);
  CHECK(read_embedding_dump(empty).empty());
  std::ifstream is(empty);
  std::string header;
  std::getline(is, header);
  CHECK(header.starts_with("episode\trelation\tkind\ts0"));
}
