// Small generated corpora for tests.

#ifndef FSDLRE_TESTS_SYNTHETIC_H_
#define FSDLRE_TESTS_SYNTHETIC_H_

#include "fsdlre/corpus.h"
#include "fsdlre/model.h"

#include <cstdint>
#include <string>
#include <vector>

namespace fsdlre::testing {

// Relations R0..R{n-1}, each with a one-word trigger and a description.
RelationCatalog trigger_catalog(int relations);
std::string trigger_word(int relation);

struct SyntheticSpec {
  int documents = 10;
  int relations = 3;
  // Each document gets this many "<head> <trigger> <tail>" sentences.
  int facts_per_document = 3;
  // Extra entities that take part in no fact.
  int distractors = 1;
  std::uint64_t seed = 7;
};

// Every entity is a single-word name mentioned once; doc ids are "doc<i>".
Corpus synthetic_corpus(const SyntheticSpec& spec);

// A document with `entities` single-mention entities, one per sentence, and
// the given triples.
Document chain_document(const std::string& id, int entities,
                        const std::vector<Triple>& triples);

// A small toy encoder: one layer, two heads.
TransformerConfig tiny_encoder(int hidden = 8, int max_length = 128);
RaplModel tiny_model(const ModelConfig& cfg, std::uint64_t seed = 1,
                     int hidden = 8);

// R0..R{n-1} all in the training split.
RelationSplit train_split(int relations);

}  // namespace fsdlre::testing

#endif  // FSDLRE_TESTS_SYNTHETIC_H_
