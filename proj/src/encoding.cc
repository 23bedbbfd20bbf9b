#include "fsdlre/encoding.h"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace fsdlre {
namespace {

struct MarkerEvent {
  int start;
  int end;
  int entity;
  int mention;

  auto key() const { return std::make_tuple(start, -end, entity, mention); }
};

}  // namespace

MarkedDocument insert_markers(const Document& doc,
                              const SubwordTokenizer& tokenizer) {
  const std::vector<int> offsets = doc.sentence_offsets();
  std::vector<std::vector<int>> pieces;
  for (const auto& sentence : doc.sentences) {
    for (const auto& word : sentence) {
      pieces.push_back(tokenizer.tokenize_word(word));
    }
  }
  const int word_count = static_cast<int>(pieces.size());

  std::vector<std::vector<MarkerEvent>> openers(
      static_cast<std::size_t>(word_count + 1));
  std::vector<std::vector<MarkerEvent>> closers(
      static_cast<std::size_t>(word_count + 1));
  MarkedDocument marked;
  marked.opening_markers.resize(doc.entities.size());
  marked.closing_markers.resize(doc.entities.size());
  for (std::size_t e = 0; e < doc.entities.size(); ++e) {
    const auto& mentions = doc.entities[e].mentions;
    marked.opening_markers[e].assign(mentions.size(), -1);
    marked.closing_markers[e].assign(mentions.size(), -1);
    for (std::size_t m = 0; m < mentions.size(); ++m) {
      const Mention& mention = mentions[m];
      const int base = offsets.at(static_cast<std::size_t>(mention.sentence_index));
      MarkerEvent ev{base + mention.start, base + mention.end,
                     static_cast<int>(e), static_cast<int>(m)};
      std::size_t subwords = 0;
      for (int w = ev.start; w < ev.end; ++w) {
        subwords += pieces[static_cast<std::size_t>(w)].size();
      }
      if (subwords == 0) {
        throw EncodingError("document '" + doc.doc_id + "', entity " +
                            std::to_string(e) + ", mention " +
                            std::to_string(m) + " ('" + mention.surface +
                            "'): span tokenizes to zero subwords");
      }
      openers[static_cast<std::size_t>(ev.start)].push_back(ev);
      closers[static_cast<std::size_t>(ev.end)].push_back(ev);
    }
  }

  auto& tokens = marked.tokens;
  for (int p = 0; p <= word_count; ++p) {
    auto& close = closers[static_cast<std::size_t>(p)];
    std::sort(close.begin(), close.end(),
              [](const MarkerEvent& a, const MarkerEvent& b) {
                return a.key() > b.key();
              });
    for (const MarkerEvent& ev : close) {
      marked.closing_markers[static_cast<std::size_t>(ev.entity)]
                            [static_cast<std::size_t>(ev.mention)] =
          static_cast<int>(tokens.size());
      tokens.push_back(SubwordTokenizer::kMarker);
    }
    auto& open = openers[static_cast<std::size_t>(p)];
    std::sort(open.begin(), open.end(),
              [](const MarkerEvent& a, const MarkerEvent& b) {
                return a.key() < b.key();
              });
    for (const MarkerEvent& ev : open) {
      marked.opening_markers[static_cast<std::size_t>(ev.entity)]
                            [static_cast<std::size_t>(ev.mention)] =
          static_cast<int>(tokens.size());
      tokens.push_back(SubwordTokenizer::kMarker);
    }
    if (p < word_count) {
      const auto& w = pieces[static_cast<std::size_t>(p)];
      tokens.insert(tokens.end(), w.begin(), w.end());
    }
  }
  return marked;
}

EncodedDocument encode_document(const MarkedDocument& marked,
                                const EncoderProvider& provider) {
  if (marked.token_count() > provider.max_length()) {
    throw EncodingError("document of " + std::to_string(marked.token_count()) +
                        " tokens exceeds the encoder window of " +
                        std::to_string(provider.max_length()));
  }
  try {
    EncoderOutput out = provider.encode(marked.tokens);
    return {out.hidden, out.attention, marked};
  } catch (const ProviderError& e) {
    throw EncodingError(std::string("encoder failed on a ") +
                        std::to_string(marked.token_count()) +
                        "-token document: " + e.what());
  }
}

std::vector<int> window_starts(int token_count, int max_length) {
  std::vector<int> starts{0};
  const int stride = std::max(1, max_length / 2);
  while (starts.back() + max_length < token_count) {
    starts.push_back(starts.back() + stride);
  }
  return starts;
}

EncodedDocument encode_long_document(const MarkedDocument& marked,
                                     const EncoderProvider& provider) {
  const int n = marked.token_count();
  const int window = provider.max_length();
  if (n <= window) return encode_document(marked, provider);

  const int d = provider.hidden_size();
  const std::vector<int> starts = window_starts(n, window);
  Vector coverage = Vector::Zero(n);
  ag::Var hidden_sum;
  ag::Var attention_sum;
  for (int s : starts) {
    const int len = std::min(window, n - s);
    std::span<const int> slice(marked.tokens.data() + s,
                               static_cast<std::size_t>(len));
    EncoderOutput out;
    try {
      out = provider.encode(slice);
    } catch (const ProviderError& e) {
      throw EncodingError("encoder failed on window [" + std::to_string(s) +
                          ", " + std::to_string(s + len) + "): " + e.what());
    }
    coverage.segment(s, len).array() += 1.0;
    ag::Var h = ag::pad_block(out.hidden, s, 0, n, d);
    ag::Var a = ag::pad_block(out.attention, s, s, n, n);
    hidden_sum = hidden_sum.defined() ? ag::add(hidden_sum, h) : h;
    attention_sum = attention_sum.defined() ? ag::add(attention_sum, a) : a;
  }
  const Vector inv = coverage.cwiseInverse();
  ag::Var hidden = ag::cwise_mul(
      hidden_sum, ag::constant(inv.replicate(1, d)));
  ag::Var attention = ag::cwise_mul(
      attention_sum, ag::constant(inv.replicate(1, n)));
  attention = ag::normalize_rows_l1(attention, 1e-300);
  return {hidden, attention, marked};
}

ag::Var entity_embedding(const EncodedDocument& enc, int entity) {
  const auto& markers =
      enc.marked.opening_markers.at(static_cast<std::size_t>(entity));
  std::vector<Index> rows(markers.begin(), markers.end());
  return ag::transpose(
      ag::logsumexp_over_rows(ag::gather_rows(enc.hidden, rows)));
}

ag::Var entity_attention(const EncodedDocument& enc, int entity) {
  const auto& markers =
      enc.marked.opening_markers.at(static_cast<std::size_t>(entity));
  std::vector<Index> rows(markers.begin(), markers.end());
  return ag::mean_over_rows(ag::gather_rows(enc.attention, rows));
}

ag::Var entity_embeddings(const EncodedDocument& enc) {
  std::vector<ag::Var> rows;
  for (int e = 0; e < enc.entity_count(); ++e) {
    rows.push_back(ag::transpose(entity_embedding(enc, e)));
  }
  return ag::vconcat(rows);
}

ag::Var entity_attentions(const EncodedDocument& enc) {
  std::vector<ag::Var> rows;
  for (int e = 0; e < enc.entity_count(); ++e) {
    rows.push_back(entity_attention(enc, e));
  }
  return ag::vconcat(rows);
}

Vector logsumexp_pool(const Matrix& mentions) {
  if (mentions.rows() == 0) {
    throw std::invalid_argument("logsumexp_pool: no mentions");
  }
  const RowVector mx = mentions.colwise().maxCoeff();
  const RowVector z = (mentions.rowwise() - mx).array().exp().colwise().sum();
  return (mx.array() + z.array().log()).transpose();
}

std::string relation_text(const RelationType& rel) {
  return rel.name + ": " + rel.description;
}

ag::Var encode_relation(const RelationType& rel,
                        const EncoderProvider& provider) {
  if (rel.name.empty()) {
    throw EncodingError("relation '" + rel.id + "' has an empty name");
  }
  return provider.relation_encode(relation_text(rel));
}

const ag::Var& RelationEmbeddingCache::get(const RelationType& rel) {
  const std::string key = relation_text(rel);
  auto it = cache_.find(key);
  if (it != cache_.end()) {
    ++hits_;
    return it->second;
  }
  return cache_.emplace(key, encode_relation(rel, *provider_)).first->second;
}

}  // namespace fsdlre
