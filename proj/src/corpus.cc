#include "fsdlre/corpus.h"

#include <fstream>
#include <sstream>

namespace fsdlre {
namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) {
    throw SchemaError(path + ": expected an object");
  }
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(path + "." + key + ": missing field");
  }
  return *it;
}

const json& require_array(const json& obj, const char* key,
                          const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_array()) throw SchemaError(path + "." + key + ": expected a list");
  return v;
}

std::string require_string(const json& obj, const char* key,
                           const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) {
    throw SchemaError(path + "." + key + ": expected a string");
  }
  return v.get<std::string>();
}

int require_int(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number_integer()) {
    throw SchemaError(path + "." + key + ": expected an integer");
  }
  return v.get<int>();
}

void validate_document(const Document& doc, const RelationCatalog& catalog) {
  const std::string where = "document '" + doc.doc_id + "'";
  for (std::size_t e = 0; e < doc.entities.size(); ++e) {
    const Entity& entity = doc.entities[e];
    if (entity.mentions.empty()) {
      throw InvariantError(where + ": entity " + std::to_string(e) +
                           " has no mentions");
    }
    for (std::size_t m = 0; m < entity.mentions.size(); ++m) {
      const Mention& mention = entity.mentions[m];
      const std::string mwhere = where + ", entity " + std::to_string(e) +
                                 ", mention " + std::to_string(m);
      if (mention.entity_index != static_cast<int>(e)) {
        throw InvariantError(mwhere + ": entity_index " +
                             std::to_string(mention.entity_index) +
                             " does not match owner");
      }
      if (mention.sentence_index < 0 ||
          mention.sentence_index >= static_cast<int>(doc.sentences.size())) {
        throw InvariantError(mwhere + ": sentence index " +
                             std::to_string(mention.sentence_index) +
                             " out of range");
      }
      const int len = static_cast<int>(
          doc.sentences[static_cast<std::size_t>(mention.sentence_index)]
              .size());
      if (mention.start < 0 || mention.end <= mention.start ||
          mention.end > len) {
        throw InvariantError(mwhere + ": span [" +
                             std::to_string(mention.start) + ", " +
                             std::to_string(mention.end) +
                             ") outside sentence of length " +
                             std::to_string(len));
      }
    }
  }
  for (const Triple& t : doc.triples) {
    const std::string twhere = where + ", triple (" + std::to_string(t.head) +
                               ", " + t.relation + ", " +
                               std::to_string(t.tail) + ")";
    if (t.head < 0 || t.head >= doc.entity_count() || t.tail < 0 ||
        t.tail >= doc.entity_count()) {
      throw InvariantError(twhere + ": entity index out of range (document has " +
                           std::to_string(doc.entity_count()) + " entities)");
    }
    if (t.head == t.tail) {
      throw InvariantError(twhere + ": head equals tail");
    }
    if (!catalog.contains(t.relation)) {
      throw InvariantError(twhere + ": unknown relation id");
    }
  }
}

}  // namespace

std::vector<int> Document::sentence_offsets() const {
  std::vector<int> offsets;
  offsets.reserve(sentences.size());
  int at = 0;
  for (const auto& s : sentences) {
    offsets.push_back(at);
    at += static_cast<int>(s.size());
  }
  return offsets;
}

Corpus::Corpus(std::vector<Document> documents, RelationCatalog catalog)
    : documents_(std::move(documents)), catalog_(std::move(catalog)) {
  for (const auto& [id, rel] : catalog_) {
    if (id != rel.id) {
      throw InvariantError("relation catalog key '" + id +
                           "' does not match its id '" + rel.id + "'");
    }
  }
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    validate_document(documents_[i], catalog_);
    if (!by_id_.emplace(documents_[i].doc_id, i).second) {
      throw InvariantError("duplicate document id '" + documents_[i].doc_id +
                           "'");
    }
  }
}

const Document& Corpus::document(const std::string& doc_id) const {
  auto it = by_id_.find(doc_id);
  if (it == by_id_.end()) {
    throw std::out_of_range("unknown document id '" + doc_id + "'");
  }
  return documents_[it->second];
}

bool Corpus::contains(const std::string& doc_id) const {
  return by_id_.contains(doc_id);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

RelationCatalog parse_relation_catalog(const json& j,
                                       bool allow_empty_description) {
  if (!j.is_object()) {
    throw SchemaError("$: relation catalog must be an object keyed by id");
  }
  RelationCatalog catalog;
  for (const auto& [id, entry] : j.items()) {
    const std::string path = "$." + id;
    RelationType rel;
    rel.id = id;
    rel.name = require_string(entry, "name", path);
    rel.description = require_string(entry, "description", path);
    if (rel.name.empty()) {
      throw InvariantError(path + ": empty relation name");
    }
    if (rel.description.empty() && !allow_empty_description) {
      throw InvariantError(path + ": empty relation description");
    }
    catalog.emplace(id, std::move(rel));
  }
  return catalog;
}

RelationCatalog load_relation_catalog(const std::filesystem::path& path,
                                      bool allow_empty_description) {
  return parse_relation_catalog(read_json_file(path), allow_empty_description);
}

Corpus parse_corpus(const json& j, RelationCatalog catalog) {
  if (!j.is_array()) throw SchemaError("$: expected a list of documents");
  std::vector<Document> docs;
  docs.reserve(j.size());
  LoadSummary summary;
  for (std::size_t d = 0; d < j.size(); ++d) {
    const std::string path = "$[" + std::to_string(d) + "]";
    const json& jd = j[d];
    Document doc;
    doc.doc_id = require_string(jd, "title", path);

    const json& sents = require_array(jd, "sents", path);
    for (std::size_t s = 0; s < sents.size(); ++s) {
      const std::string spath = path + ".sents[" + std::to_string(s) + "]";
      if (!sents[s].is_array()) throw SchemaError(spath + ": expected a list");
      std::vector<std::string> words;
      for (const json& w : sents[s]) {
        if (!w.is_string()) {
          throw SchemaError(spath + ": expected word strings");
        }
        words.push_back(w.get<std::string>());
      }
      doc.sentences.push_back(std::move(words));
    }

    const json& vertices = require_array(jd, "vertexSet", path);
    for (std::size_t e = 0; e < vertices.size(); ++e) {
      const std::string epath = path + ".vertexSet[" + std::to_string(e) + "]";
      if (!vertices[e].is_array()) {
        throw SchemaError(epath + ": expected a list of mentions");
      }
      Entity entity;
      for (std::size_t m = 0; m < vertices[e].size(); ++m) {
        const std::string mpath = epath + "[" + std::to_string(m) + "]";
        const json& jm = vertices[e][m];
        Mention mention;
        mention.entity_index = static_cast<int>(e);
        mention.surface = require_string(jm, "name", mpath);
        mention.sentence_index = require_int(jm, "sent_id", mpath);
        const json& pos = require(jm, "pos", mpath);
        if (!pos.is_array() || pos.size() != 2 || !pos[0].is_number_integer() ||
            !pos[1].is_number_integer()) {
          throw SchemaError(mpath + ".pos: expected [start, end]");
        }
        mention.start = pos[0].get<int>();
        mention.end = pos[1].get<int>();
        if (auto it = jm.find("type"); it != jm.end() && it->is_string()) {
          mention.type = it->get<std::string>();
        }
        entity.mentions.push_back(std::move(mention));
      }
      summary.mentions += entity.mentions.size();
      doc.entities.push_back(std::move(entity));
    }

    const json& labels = require_array(jd, "labels", path);
    for (std::size_t l = 0; l < labels.size(); ++l) {
      const std::string lpath = path + ".labels[" + std::to_string(l) + "]";
      Triple t;
      t.head = require_int(labels[l], "h", lpath);
      t.tail = require_int(labels[l], "t", lpath);
      t.relation = require_string(labels[l], "r", lpath);
      if (!doc.triples.insert(std::move(t)).second) {
        ++summary.duplicate_triples;
      }
    }
    summary.entities += doc.entities.size();
    summary.triples += doc.triples.size();
    docs.push_back(std::move(doc));
  }
  summary.documents = docs.size();
  Corpus corpus(std::move(docs), std::move(catalog));
  corpus.summary = summary;
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   RelationCatalog catalog) {
  switch (format) {
    case CorpusFormat::kDocRedJson:
      return parse_corpus(read_json_file(path), std::move(catalog));
  }
  throw CorpusError("unsupported corpus format");
}

json corpus_to_json(const Corpus& corpus) {
  json out = json::array();
  for (const Document& doc : corpus.documents()) {
    json jd;
    jd["title"] = doc.doc_id;
    jd["sents"] = doc.sentences;
    json vertices = json::array();
    for (const Entity& entity : doc.entities) {
      json mentions = json::array();
      for (const Mention& m : entity.mentions) {
        json jm = {{"name", m.surface},
                   {"sent_id", m.sentence_index},
                   {"pos", {m.start, m.end}}};
        if (!m.type.empty()) jm["type"] = m.type;
        mentions.push_back(std::move(jm));
      }
      vertices.push_back(std::move(mentions));
    }
    jd["vertexSet"] = std::move(vertices);
    json labels = json::array();
    for (const Triple& t : doc.triples) {
      labels.push_back({{"h", t.head}, {"t", t.tail}, {"r", t.relation}});
    }
    jd["labels"] = std::move(labels);
    out.push_back(std::move(jd));
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path.string());
  out << corpus_to_json(corpus).dump();
}

RelationSplit::RelationSplit(std::set<std::string> train,
                             std::set<std::string> dev,
                             std::set<std::string> test)
    : train_(std::move(train)), dev_(std::move(dev)), test_(std::move(test)) {
  auto check = [](const std::set<std::string>& a, const std::set<std::string>& b,
                  const char* names) {
    for (const auto& id : a) {
      if (b.contains(id)) {
        throw InvariantError(std::string("relation split overlap (") + names +
                             "): " + id);
      }
    }
  };
  check(train_, dev_, "train/dev");
  check(train_, test_, "train/test");
  check(dev_, test_, "dev/test");
}

RelationSplit load_relation_split(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  auto ids = [&](const char* key) {
    std::set<std::string> out;
    for (const json& v : require_array(j, key, "$")) {
      if (!v.is_string()) {
        throw SchemaError(std::string("$.") + key + ": expected strings");
      }
      out.insert(v.get<std::string>());
    }
    return out;
  };
  return RelationSplit(ids("train"), ids("dev"), ids("test"));
}

std::tuple<std::size_t, std::size_t, std::size_t> relation_split_sizes(
    const RelationSplit& split) {
  return {split.train_ids().size(), split.dev_ids().size(),
          split.test_ids().size()};
}

}  // namespace fsdlre
