// Annotated document corpora in the DocRED JSON layout.

#ifndef FSDLRE_CORPUS_H_
#define FSDLRE_CORPUS_H_

#include <nlohmann/json.hpp>

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace fsdlre {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed JSON.
class ParseError : public CorpusError {
 public:
  using CorpusError::CorpusError;
};

// Missing or mistyped field. The message names the JSON path.
class SchemaError : public CorpusError {
 public:
  using CorpusError::CorpusError;
};

// Well-formed input that breaks a data-model invariant.
class InvariantError : public CorpusError {
 public:
  using CorpusError::CorpusError;
};

struct Mention {
  int entity_index = 0;
  int sentence_index = 0;
  // Half-open word interval [start, end) within the sentence.
  int start = 0;
  int end = 0;
  std::string surface;
  std::string type;

  bool operator==(const Mention&) const = default;
};

struct Entity {
  std::vector<Mention> mentions;

  bool operator==(const Entity&) const = default;
};

struct RelationType {
  std::string id;
  std::string name;
  std::string description;

  bool operator==(const RelationType&) const = default;
};

struct Triple {
  int head = 0;
  int tail = 0;
  std::string relation;

  auto operator<=>(const Triple&) const = default;
};

struct Document {
  std::string doc_id;
  std::vector<std::vector<std::string>> sentences;
  std::vector<Entity> entities;
  std::set<Triple> triples;

  int entity_count() const { return static_cast<int>(entities.size()); }
  // Offset of the first word of each sentence in the flattened word stream.
  std::vector<int> sentence_offsets() const;

  bool operator==(const Document&) const = default;
};

using RelationCatalog = std::map<std::string, RelationType>;

struct LoadSummary {
  std::size_t documents = 0;
  std::size_t entities = 0;
  std::size_t mentions = 0;
  std::size_t triples = 0;
  std::size_t duplicate_triples = 0;
};

class Corpus {
 public:
  Corpus() = default;
  // Validates every invariant; throws InvariantError.
  Corpus(std::vector<Document> documents, RelationCatalog catalog);

  const std::vector<Document>& documents() const { return documents_; }
  const RelationCatalog& catalog() const { return catalog_; }
  const Document& document(const std::string& doc_id) const;
  bool contains(const std::string& doc_id) const;
  std::size_t size() const { return documents_.size(); }

  // Filled in by the loader.
  LoadSummary summary;

  bool operator==(const Corpus& other) const {
    return documents_ == other.documents_ && catalog_ == other.catalog_;
  }

 private:
  std::vector<Document> documents_;
  RelationCatalog catalog_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

enum class CorpusFormat { kDocRedJson };

// Relation catalog file: {"P17": {"name": ..., "description": ...}, ...}.
RelationCatalog parse_relation_catalog(const nlohmann::json& j,
                                       bool allow_empty_description = false);
RelationCatalog load_relation_catalog(const std::filesystem::path& path,
                                      bool allow_empty_description = false);

Corpus parse_corpus(const nlohmann::json& j, RelationCatalog catalog);
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   RelationCatalog catalog);

nlohmann::json corpus_to_json(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

class RelationSplit {
 public:
  RelationSplit() = default;
  // Throws InvariantError when any two sets overlap.
  RelationSplit(std::set<std::string> train, std::set<std::string> dev,
                std::set<std::string> test);

  const std::set<std::string>& train_ids() const { return train_; }
  const std::set<std::string>& dev_ids() const { return dev_; }
  const std::set<std::string>& test_ids() const { return test_; }

 private:
  std::set<std::string> train_;
  std::set<std::string> dev_;
  std::set<std::string> test_;
};

// Split file: {"train": [...], "dev": [...], "test": [...]}.
RelationSplit load_relation_split(const std::filesystem::path& path);

std::tuple<std::size_t, std::size_t, std::size_t> relation_split_sizes(
    const RelationSplit& split);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace fsdlre

#endif  // FSDLRE_CORPUS_H_
