#include "fsdlre/encoder.h"

#include "fsdlre/archive.h"

#include <nlohmann/json.hpp>

#include <cctype>
#include <cmath>
#include <fstream>
#include <random>

namespace fsdlre {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool is_continuation_byte(unsigned char c) { return (c & 0xC0) == 0x80; }

Matrix normal_matrix(Index rows, Index cols, double stddev,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
  return m;
}

}  // namespace

SubwordTokenizer::SubwordTokenizer(int vocab_size, int piece_length)
    : vocab_size_(vocab_size), piece_length_(piece_length) {
  if (vocab_size <= kReserved + 1) {
    throw std::invalid_argument("vocabulary too small");
  }
  if (piece_length < 1) throw std::invalid_argument("piece_length must be >= 1");
}

std::vector<int> SubwordTokenizer::tokenize_word(std::string_view word) const {
  std::string lowered(word);
  for (char& c : lowered) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  std::vector<int> out;
  std::size_t begin = 0;
  bool first = true;
  while (begin < lowered.size()) {
    std::size_t end = begin;
    int points = 0;
    while (end < lowered.size()) {
      if (!is_continuation_byte(static_cast<unsigned char>(lowered[end]))) {
        if (points == piece_length_) break;
        ++points;
      }
      ++end;
    }
    std::string piece = (first ? "" : "##") + lowered.substr(begin, end - begin);
    const auto span = static_cast<std::uint64_t>(vocab_size_ - kReserved);
    out.push_back(kReserved + static_cast<int>(fnv1a(piece) % span));
    begin = end;
    first = false;
  }
  return out;
}

std::vector<int> SubwordTokenizer::tokenize_text(std::string_view text) const {
  std::vector<int> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    std::size_t j = i;
    while (j < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[j]))) {
      ++j;
    }
    if (j > i) {
      auto pieces = tokenize_word(text.substr(i, j - i));
      out.insert(out.end(), pieces.begin(), pieces.end());
    }
    i = j;
  }
  return out;
}

Transformer::Transformer(const TransformerConfig& cfg, std::uint64_t seed,
                         const std::string& name)
    : cfg_(cfg), name_(name) {
  if (cfg.hidden % cfg.heads != 0) {
    throw std::invalid_argument("hidden size must be divisible by heads");
  }
  std::mt19937_64 rng(seed);
  const Index d = cfg.hidden;
  const Index f = cfg.ffn;
  auto weight = [&](Index r, Index c) {
    return ag::parameter(normal_matrix(r, c, cfg.init_std, rng));
  };
  auto zeros = [](Index c) { return ag::parameter(Matrix::Zero(1, c)); };
  auto ones = [](Index c) { return ag::parameter(Matrix::Ones(1, c)); };

  token_embedding_ = weight(cfg.vocab_size, d);
  position_embedding_ = weight(cfg.max_length, d);
  emb_ln_gain_ = ones(d);
  emb_ln_bias_ = zeros(d);
  for (int l = 0; l < cfg.layers; ++l) {
    Layer layer;
    layer.wq = weight(d, d);
    layer.wk = weight(d, d);
    layer.wv = weight(d, d);
    layer.wo = weight(d, d);
    layer.bq = zeros(d);
    layer.bk = zeros(d);
    layer.bv = zeros(d);
    layer.bo = zeros(d);
    layer.ln1_gain = ones(d);
    layer.ln1_bias = zeros(d);
    layer.w1 = weight(d, f);
    layer.b1 = zeros(f);
    layer.w2 = weight(f, d);
    layer.b2 = zeros(d);
    layer.ln2_gain = ones(d);
    layer.ln2_bias = zeros(d);
    layers_.push_back(std::move(layer));
  }
}

EncoderOutput Transformer::forward(std::span<const int> tokens) const {
  const Index n = static_cast<Index>(tokens.size());
  if (n == 0) throw ProviderError(name_ + ": empty token sequence");
  if (n > cfg_.max_length) {
    throw ProviderError(name_ + ": " + std::to_string(n) +
                        " tokens exceed the window of " +
                        std::to_string(cfg_.max_length));
  }
  std::vector<Index> ids;
  ids.reserve(tokens.size());
  for (int t : tokens) {
    if (t < 0 || t >= cfg_.vocab_size) {
      throw ProviderError(name_ + ": token id " + std::to_string(t) +
                          " outside vocabulary");
    }
    ids.push_back(t);
  }

  ag::Var x = ag::add(ag::gather_rows(token_embedding_, ids),
                      ag::slice_rows(position_embedding_, 0, n));
  x = ag::layer_norm_rows(x, emb_ln_gain_, emb_ln_bias_);

  const Index dh = cfg_.hidden / cfg_.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  ag::Var last_attention;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& p = layers_[l];
    ag::Var q = ag::add_row(ag::matmul(x, p.wq), p.bq);
    ag::Var k = ag::add_row(ag::matmul(x, p.wk), p.bk);
    ag::Var v = ag::add_row(ag::matmul(x, p.wv), p.bv);
    std::vector<ag::Var> head_out;
    std::vector<ag::Var> head_probs;
    for (int h = 0; h < cfg_.heads; ++h) {
      ag::Var qh = ag::slice_cols(q, h * dh, dh);
      ag::Var kh = ag::slice_cols(k, h * dh, dh);
      ag::Var vh = ag::slice_cols(v, h * dh, dh);
      ag::Var probs = ag::softmax_rows(
          ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt_dh));
      head_out.push_back(ag::matmul(probs, vh));
      head_probs.push_back(probs);
    }
    ag::Var attn = ag::add_row(ag::matmul(ag::hconcat(head_out), p.wo), p.bo);
    x = ag::layer_norm_rows(ag::add(x, attn), p.ln1_gain, p.ln1_bias);
    ag::Var ff = ag::add_row(
        ag::matmul(ag::gelu(ag::add_row(ag::matmul(x, p.w1), p.b1)), p.w2),
        p.b2);
    x = ag::layer_norm_rows(ag::add(x, ff), p.ln2_gain, p.ln2_bias);

    if (l + 1 == layers_.size()) {
      ag::Var total = head_probs.front();
      for (std::size_t h = 1; h < head_probs.size(); ++h) {
        total = ag::add(total, head_probs[h]);
      }
      last_attention = ag::scale(total, 1.0 / cfg_.heads);
    }
  }
  if (!last_attention.defined()) {
    // Zero layers: every token attends uniformly.
    last_attention = ag::constant(Matrix::Constant(n, n, 1.0 / n));
  }
  return {x, last_attention};
}

std::vector<NamedParameter> Transformer::parameters() const {
  std::vector<NamedParameter> out;
  auto add = [&](const std::string& n, const ag::Var& v, bool decay) {
    out.push_back({name_ + "." + n, v, decay});
  };
  add("token_embedding", token_embedding_, true);
  add("position_embedding", position_embedding_, true);
  add("emb_ln.gain", emb_ln_gain_, false);
  add("emb_ln.bias", emb_ln_bias_, false);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& p = layers_[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    add(pre + "wq", p.wq, true);
    add(pre + "wk", p.wk, true);
    add(pre + "wv", p.wv, true);
    add(pre + "wo", p.wo, true);
    add(pre + "bq", p.bq, false);
    add(pre + "bk", p.bk, false);
    add(pre + "bv", p.bv, false);
    add(pre + "bo", p.bo, false);
    add(pre + "ln1.gain", p.ln1_gain, false);
    add(pre + "ln1.bias", p.ln1_bias, false);
    add(pre + "w1", p.w1, true);
    add(pre + "b1", p.b1, false);
    add(pre + "w2", p.w2, true);
    add(pre + "b2", p.b2, false);
    add(pre + "ln2.gain", p.ln2_gain, false);
    add(pre + "ln2.bias", p.ln2_bias, false);
  }
  return out;
}

ToyEncoderProvider::ToyEncoderProvider(const TransformerConfig& cfg,
                                       std::uint64_t seed)
    : cfg_(cfg),
      tokenizer_(cfg.vocab_size),
      document_encoder_(cfg, seed, "doc_encoder"),
      relation_encoder_(cfg, seed ^ 0x9e3779b97f4a7c15ULL, "rel_encoder") {}

EncoderOutput ToyEncoderProvider::encode(std::span<const int> tokens) const {
  return document_encoder_.forward(tokens);
}

ag::Var ToyEncoderProvider::relation_encode(std::string_view text) const {
  std::vector<int> tokens{SubwordTokenizer::kCls};
  auto body = tokenizer_.tokenize_text(text);
  tokens.insert(tokens.end(), body.begin(), body.end());
  tokens.push_back(SubwordTokenizer::kSep);
  if (static_cast<int>(tokens.size()) > cfg_.max_length) {
    tokens.resize(static_cast<std::size_t>(cfg_.max_length));
  }
  EncoderOutput out = relation_encoder_.forward(tokens);
  return ag::transpose(ag::slice_rows(out.hidden, 0, 1));
}

std::vector<NamedParameter> ToyEncoderProvider::document_parameters() const {
  return document_encoder_.parameters();
}

std::vector<NamedParameter> ToyEncoderProvider::relation_parameters() const {
  return relation_encoder_.parameters();
}

namespace {

nlohmann::json config_to_json(const TransformerConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"hidden", c.hidden},
          {"layers", c.layers},         {"heads", c.heads},
          {"ffn", c.ffn},               {"max_length", c.max_length},
          {"init_std", c.init_std}};
}

TransformerConfig config_from_json(const nlohmann::json& j) {
  TransformerConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn = j.at("ffn").get<int>();
  c.max_length = j.at("max_length").get<int>();
  c.init_std = j.value("init_std", 0.02);
  return c;
}

}  // namespace

void save_encoder_archive(const ToyEncoderProvider& provider,
                          const std::filesystem::path& model_dir,
                          const std::string& name) {
  std::filesystem::create_directories(model_dir);
  {
    std::ofstream out(model_dir / (name + ".json"));
    out << config_to_json(provider.config()).dump(2) << '\n';
  }
  MatrixArchive archive;
  for (const auto& p : provider.document_parameters()) {
    archive[p.name] = p.value.value();
  }
  for (const auto& p : provider.relation_parameters()) {
    archive[p.name] = p.value.value();
  }
  write_matrix_archive(model_dir / (name + ".params"), archive);
}

std::unique_ptr<EncoderProvider> make_encoder_provider(
    const std::string& selector, const TransformerConfig& toy_config,
    std::uint64_t seed, const std::filesystem::path& model_dir) {
  if (selector == "toy") {
    return std::make_unique<ToyEncoderProvider>(toy_config, seed);
  }
  constexpr std::string_view kPrefix = "pretrained:";
  if (selector.starts_with(kPrefix)) {
    const std::string name = selector.substr(kPrefix.size());
    if (name.empty()) throw ProviderError("pretrained encoder name is empty");
    const auto cfg_path = model_dir / (name + ".json");
    std::ifstream in(cfg_path);
    if (!in) {
      throw ProviderError("pretrained encoder '" + name + "' not found (" +
                          cfg_path.string() + ")");
    }
    const TransformerConfig cfg = config_from_json(nlohmann::json::parse(in));
    auto provider = std::make_unique<ToyEncoderProvider>(cfg, seed);
    const MatrixArchive archive =
        read_matrix_archive(model_dir / (name + ".params"));
    auto restore = [&](std::vector<NamedParameter> params) {
      for (auto& p : params) {
        auto it = archive.find(p.name);
        if (it == archive.end()) {
          throw ProviderError("pretrained encoder '" + name +
                              "' lacks parameter " + p.name);
        }
        if (it->second.rows() != p.value.rows() ||
            it->second.cols() != p.value.cols()) {
          throw ProviderError("shape mismatch for " + p.name);
        }
        p.value.mutable_value() = it->second;
      }
    };
    restore(provider->document_parameters());
    restore(provider->relation_parameters());
    return provider;
  }
  throw ProviderError("unknown encoder selector '" + selector +
                      "' (expected toy or pretrained:<name>)");
}

}  // namespace fsdlre
