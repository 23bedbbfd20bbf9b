// Entity-marked documents, windowed encoding, and mention/entity pooling.

#ifndef FSDLRE_ENCODING_H_
#define FSDLRE_ENCODING_H_

#include "fsdlre/autograd.h"
#include "fsdlre/corpus.h"
#include "fsdlre/encoder.h"

#include <map>
#include <string>
#include <vector>

namespace fsdlre {

class EncodingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MarkedDocument {
  std::vector<int> tokens;
  // entity -> mention ordinal -> token index of the opening marker.
  std::vector<std::vector<int>> opening_markers;
  // Same layout, closing markers.
  std::vector<std::vector<int>> closing_markers;

  int token_count() const { return static_cast<int>(tokens.size()); }
  int opening_marker(int entity, int mention) const {
    return opening_markers.at(static_cast<std::size_t>(entity))
        .at(static_cast<std::size_t>(mention));
  }
};

// Wraps every mention in marker tokens. Where spans share a boundary, closing
// markers are emitted before opening markers; openers at the same word are
// ordered by (-end, entity, ordinal) and closers in the reverse order, so
// nested spans stay properly nested.
MarkedDocument insert_markers(const Document& doc,
                              const SubwordTokenizer& tokenizer);

struct EncodedDocument {
  ag::Var hidden;     // N_t x d
  ag::Var attention;  // N_t x N_t
  MarkedDocument marked;

  int token_count() const { return marked.token_count(); }
  int entity_count() const {
    return static_cast<int>(marked.opening_markers.size());
  }
};

// Single window; throws EncodingError when the document exceeds the window.
EncodedDocument encode_document(const MarkedDocument& marked,
                                const EncoderProvider& provider);

// Overlapping windows of max_length with stride max_length / 2. Hidden states
// are averaged over the windows covering each token; attention rows are
// averaged the same way and renormalized.
EncodedDocument encode_long_document(const MarkedDocument& marked,
                                     const EncoderProvider& provider);

// Window start offsets used by encode_long_document.
std::vector<int> window_starts(int token_count, int max_length);

// log sum_j exp(h_{m_j}) over the opening-marker embeddings; d x 1.
ag::Var entity_embedding(const EncodedDocument& enc, int entity);
// Mean of the opening-marker attention rows; 1 x N_t.
ag::Var entity_attention(const EncodedDocument& enc, int entity);
// All entities at once: n_e x d and n_e x N_t.
ag::Var entity_embeddings(const EncodedDocument& enc);
ag::Var entity_attentions(const EncodedDocument& enc);

// Max-shifted elementwise logsumexp over the rows of `mentions`.
Vector logsumexp_pool(const Matrix& mentions);

std::string relation_text(const RelationType& rel);

ag::Var encode_relation(const RelationType& rel,
                        const EncoderProvider& provider);

// Write-once cache of relation embeddings keyed by relation text. Within one
// graph the cached node is reused, so gradients still reach the relation
// encoder.
class RelationEmbeddingCache {
 public:
  explicit RelationEmbeddingCache(const EncoderProvider& provider)
      : provider_(&provider) {}

  const ag::Var& get(const RelationType& rel);
  std::size_t hits() const { return hits_; }
  std::size_t size() const { return cache_.size(); }
  void clear() { cache_.clear(); }

 private:
  const EncoderProvider* provider_;
  std::map<std::string, ag::Var> cache_;
  std::size_t hits_ = 0;
};

}  // namespace fsdlre

#endif  // FSDLRE_ENCODING_H_
