#include "synthetic.h"

#include <random>
#include <set>

namespace fsdlre::testing {
namespace {

const char* const kTriggers[] = {"founded", "married", "visited", "owns",
                                 "joined",  "painted", "sold",    "led"};
const char* const kSyllables[] = {"ka", "lo", "mi", "ru", "te", "vo",
                                  "sa", "ne", "pi", "du", "go", "ha"};

std::string random_name(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 11);
  return std::string(kSyllables[pick(rng)]) + kSyllables[pick(rng)];
}

}  // namespace

std::string trigger_word(int relation) {
  return kTriggers[relation % 8];
}

RelationCatalog trigger_catalog(int relations) {
  RelationCatalog catalog;
  for (int r = 0; r < relations; ++r) {
    const std::string id = "R" + std::to_string(r);
    catalog[id] = {id, trigger_word(r),
                   "subject " + trigger_word(r) + " the object"};
  }
  return catalog;
}

Corpus synthetic_corpus(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> relation(0, spec.relations - 1);
  std::vector<Document> docs;
  for (int d = 0; d < spec.documents; ++d) {
    Document doc;
    doc.doc_id = "doc" + std::to_string(d);
    std::set<std::string> used;
    auto fresh_name = [&] {
      std::string name = random_name(rng);
      while (!used.insert(name).second) name = random_name(rng);
      return name;
    };
    auto add_entity = [&](int sentence, int start) {
      Mention m;
      m.entity_index = static_cast<int>(doc.entities.size());
      m.sentence_index = sentence;
      m.start = start;
      m.end = start + 1;
      m.surface = doc.sentences[static_cast<std::size_t>(sentence)]
                               [static_cast<std::size_t>(start)];
      m.type = "MISC";
      doc.entities.push_back({{m}});
      return m.entity_index;
    };
    for (int f = 0; f < spec.facts_per_document; ++f) {
      const int r = f < spec.relations ? f : relation(rng);
      doc.sentences.push_back(
          {"the", fresh_name(), trigger_word(r), fresh_name(), "."});
      const int s = static_cast<int>(doc.sentences.size()) - 1;
      const int h = add_entity(s, 1);
      const int t = add_entity(s, 3);
      doc.triples.insert({h, t, "R" + std::to_string(r)});
    }
    for (int x = 0; x < spec.distractors; ++x) {
      doc.sentences.push_back({"then", fresh_name(), "slept", "."});
      add_entity(static_cast<int>(doc.sentences.size()) - 1, 1);
    }
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs), trigger_catalog(spec.relations));
}

Document chain_document(const std::string& id, int entities,
                        const std::vector<Triple>& triples) {
  Document doc;
  doc.doc_id = id;
  for (int e = 0; e < entities; ++e) {
    const std::string name = "ent" + std::to_string(e);
    doc.sentences.push_back({"here", name, "stands", "."});
    Mention m{e, e, 1, 2, name, "MISC"};
    doc.entities.push_back({{m}});
  }
  doc.triples.insert(triples.begin(), triples.end());
  return doc;
}

TransformerConfig tiny_encoder(int hidden, int max_length) {
  TransformerConfig c;
  c.vocab_size = 128;
  c.hidden = hidden;
  c.layers = 1;
  c.heads = 2;
  c.ffn = 2 * hidden;
  c.max_length = max_length;
  return c;
}

RaplModel tiny_model(const ModelConfig& cfg, std::uint64_t seed, int hidden) {
  return RaplModel(
      std::make_unique<ToyEncoderProvider>(tiny_encoder(hidden), seed), cfg,
      seed);
}

RelationSplit train_split(int relations) {
  std::set<std::string> ids;
  for (int r = 0; r < relations; ++r) ids.insert("R" + std::to_string(r));
  return RelationSplit(ids, {}, {});
}

}  // namespace fsdlre::testing
