// Document and relation encoders.
//
// EncoderProvider is the seam between the relation-extraction math and
// whatever produces contextual token embeddings. The toy provider is a small
// seeded transformer that is fully differentiable through the autograd graph,
// so every parameter, encoder weights included, can be trained and
// gradient-checked.

#ifndef FSDLRE_ENCODER_H_
#define FSDLRE_ENCODER_H_

#include "fsdlre/autograd.h"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fsdlre {

// Deterministic hashing subword tokenizer. Words are lowercased (ASCII) and
// cut into pieces of at most `piece_length` code points; each piece hashes
// into the non-reserved part of the vocabulary.
class SubwordTokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kMarker = 3;  // the "*" entity marker
  static constexpr int kReserved = 4;

  explicit SubwordTokenizer(int vocab_size = 512, int piece_length = 4);

  int vocab_size() const { return vocab_size_; }
  int piece_length() const { return piece_length_; }

  std::vector<int> tokenize_word(std::string_view word) const;
  // Whitespace-separated words.
  std::vector<int> tokenize_text(std::string_view text) const;

 private:
  int vocab_size_;
  int piece_length_;
};

struct NamedParameter {
  std::string name;
  ag::Var value;
  // Decoupled weight decay applies to matrices only.
  bool decay = false;
};

struct EncoderOutput {
  ag::Var hidden;     // N_t x d
  ag::Var attention;  // N_t x N_t, row-stochastic
};

class EncoderProvider {
 public:
  virtual ~EncoderProvider() = default;

  virtual int hidden_size() const = 0;
  virtual int max_length() const = 0;
  virtual const SubwordTokenizer& tokenizer() const = 0;

  // tokens.size() must not exceed max_length().
  virtual EncoderOutput encode(std::span<const int> tokens) const = 0;
  // Sequence-level ([CLS]) embedding of free text; d x 1.
  virtual ag::Var relation_encode(std::string_view text) const = 0;

  virtual std::vector<NamedParameter> document_parameters() const = 0;
  virtual std::vector<NamedParameter> relation_parameters() const = 0;
};

class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TransformerConfig {
  int vocab_size = 512;
  int hidden = 32;
  int layers = 2;
  int heads = 4;
  int ffn = 128;
  int max_length = 512;
  double init_std = 0.02;

  bool operator==(const TransformerConfig&) const = default;
};

// Post-LN transformer encoder over token ids.
class Transformer {
 public:
  Transformer(const TransformerConfig& cfg, std::uint64_t seed,
              const std::string& name);

  // Hidden states of the last layer and its head-averaged attention.
  EncoderOutput forward(std::span<const int> tokens) const;
  std::vector<NamedParameter> parameters() const;
  const TransformerConfig& config() const { return cfg_; }

 private:
  struct Layer {
    ag::Var wq, wk, wv, wo, bq, bk, bv, bo;
    ag::Var ln1_gain, ln1_bias;
    ag::Var w1, b1, w2, b2;
    ag::Var ln2_gain, ln2_bias;
  };

  TransformerConfig cfg_;
  std::string name_;
  ag::Var token_embedding_;
  ag::Var position_embedding_;
  ag::Var emb_ln_gain_, emb_ln_bias_;
  std::vector<Layer> layers_;
};

// Two independently seeded transformers: one for documents, one for relation
// descriptions.
class ToyEncoderProvider : public EncoderProvider {
 public:
  ToyEncoderProvider(const TransformerConfig& cfg, std::uint64_t seed);

  int hidden_size() const override { return cfg_.hidden; }
  int max_length() const override { return cfg_.max_length; }
  const SubwordTokenizer& tokenizer() const override { return tokenizer_; }
  EncoderOutput encode(std::span<const int> tokens) const override;
  ag::Var relation_encode(std::string_view text) const override;
  std::vector<NamedParameter> document_parameters() const override;
  std::vector<NamedParameter> relation_parameters() const override;

  const TransformerConfig& config() const { return cfg_; }

 private:
  TransformerConfig cfg_;
  SubwordTokenizer tokenizer_;
  Transformer document_encoder_;
  Transformer relation_encoder_;
};

// `toy` builds a freshly seeded ToyEncoderProvider. `pretrained:<name>` loads
// <model_dir>/<name>.json (transformer config) and <name>.params (weights
// archive written by save_encoder_archive).
std::unique_ptr<EncoderProvider> make_encoder_provider(
    const std::string& selector, const TransformerConfig& toy_config,
    std::uint64_t seed, const std::filesystem::path& model_dir);

void save_encoder_archive(const ToyEncoderProvider& provider,
                          const std::filesystem::path& model_dir,
                          const std::string& name);

}  // namespace fsdlre

#endif  // FSDLRE_ENCODER_H_
