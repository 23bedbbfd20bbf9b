#include "fsdlre/config.h"

namespace fsdlre {
namespace {

using nlohmann::json;

// Rejects keys of `given` absent from `schema`, recursively.
void check_keys(const json& given, const json& schema,
                const std::string& path) {
  if (!given.is_object()) {
    throw ConfigError("config " + (path.empty() ? "root" : path) +
                      " must be an object");
  }
  for (const auto& [key, value] : given.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown config key " + here);
    if (schema.at(key).is_object()) check_keys(value, schema.at(key), here);
  }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  const json& v = j.at(section).at(key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config ") + section + "." + key +
                      " has the wrong type");
  }
}

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config ") + key + " has the wrong type");
  }
}

}  // namespace

json run_config_to_json(const RunConfig& cfg) {
  const ModelConfig& m = cfg.model;
  const TrainConfig& t = cfg.train;
  const TransformerConfig& e = cfg.toy_encoder;
  return {
      {"task_family", to_string(cfg.task_family)},
      {"seed", cfg.seed},
      {"out", cfg.out.string()},
      {"attention", {{"top_k_percent", m.top_k_percent}}},
      {"nota", {{"count", m.nota_count}, {"alpha", m.alpha}}},
      {"loss",
       {{"tau", m.tau},
        {"lambda", m.lambda},
        {"contrastive_variant", to_string(m.variant)}}},
      {"ablation",
       {{"disable_tnpg", m.disable_tnpg},
        {"disable_ibpc", !m.instance_based}}},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"total_episodes", t.total_episodes},
        {"episodes_per_batch", t.episodes_per_batch},
        {"warmup_fraction", t.warmup_fraction},
        {"grad_clip_norm", t.grad_clip_norm},
        {"weight_decay", t.weight_decay},
        {"eval_interval", t.eval_interval},
        {"patience", t.patience},
        {"dev_episodes", t.dev_episodes},
        {"log_interval", t.log_interval}}},
      {"encoder",
       {{"selector", cfg.encoder},
        {"model_dir", cfg.model_dir.string()},
        {"freeze_relation_encoder", m.freeze_relation_encoder},
        {"vocab_size", e.vocab_size},
        {"hidden", e.hidden},
        {"layers", e.layers},
        {"heads", e.heads},
        {"ffn", e.ffn},
        {"max_length", e.max_length}}},
      {"episodes",
       {{"n_docs", cfg.n_docs},
        {"max_target_relations", cfg.max_target_relations}}},
      {"data",
       {{"corpus", cfg.data.corpus.string()},
        {"catalog", cfg.data.catalog.string()},
        {"split", cfg.data.split.string()},
        {"train_episodes", cfg.data.train_episodes.string()},
        {"dev_episodes", cfg.data.dev_episodes.string()}}},
  };
}

ModelConfig model_config_from_json(const json& j) {
  try {
    ModelConfig m;
    m.top_k_percent = j.at("top_k_percent").get<double>();
    m.tau = j.at("tau").get<double>();
    m.nota_count = j.at("nota_count").get<int>();
    m.alpha = j.at("alpha").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.variant = parse_contrastive_variant(
        j.at("contrastive_variant").get<std::string>());
    m.disable_tnpg = j.at("disable_tnpg").get<bool>();
    m.instance_based = j.at("instance_based").get<bool>();
    m.freeze_relation_encoder = j.value("freeze_relation_encoder", false);
    return m;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
}

void set_config_key(json& target, const std::string& dotted, json value) {
  json* node = &target;
  std::size_t begin = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', begin);
    const std::string key = dotted.substr(begin, dot - begin);
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    begin = dot + 1;
  }
}

RunConfig resolve_run_config(const json& file, const json& overrides) {
  const json schema = run_config_to_json(RunConfig{});
  check_keys(file, schema, "");
  check_keys(overrides, schema, "");

  std::string family = "in_domain";
  if (file.contains("task_family")) family = get<std::string>(file, "task_family");
  if (overrides.contains("task_family")) {
    family = get<std::string>(overrides, "task_family");
  }
  RunConfig base;
  try {
    base.task_family = parse_task_family(family);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const ModelConfig family_model =
      model_config_for(hyperparameter_defaults(base.task_family));
  base.model = family_model;

  json merged = run_config_to_json(base);
  merged.merge_patch(file);
  merged.merge_patch(overrides);

  RunConfig cfg;
  cfg.task_family = base.task_family;
  cfg.seed = get<std::uint64_t>(merged, "seed");
  cfg.out = get<std::string>(merged, "out");
  cfg.model.top_k_percent = get<double>(merged, "attention", "top_k_percent");
  cfg.model.nota_count = get<int>(merged, "nota", "count");
  cfg.model.alpha = get<double>(merged, "nota", "alpha");
  cfg.model.tau = get<double>(merged, "loss", "tau");
  cfg.model.lambda = get<double>(merged, "loss", "lambda");
  try {
    cfg.model.variant = parse_contrastive_variant(
        get<std::string>(merged, "loss", "contrastive_variant"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  cfg.model.disable_tnpg = get<bool>(merged, "ablation", "disable_tnpg");
  cfg.model.instance_based = !get<bool>(merged, "ablation", "disable_ibpc");

  TrainConfig& t = cfg.train;
  t.learning_rate = get<double>(merged, "train", "learning_rate");
  t.total_episodes = get<int>(merged, "train", "total_episodes");
  t.episodes_per_batch = get<int>(merged, "train", "episodes_per_batch");
  t.warmup_fraction = get<double>(merged, "train", "warmup_fraction");
  t.grad_clip_norm = get<double>(merged, "train", "grad_clip_norm");
  t.weight_decay = get<double>(merged, "train", "weight_decay");
  t.eval_interval = get<int>(merged, "train", "eval_interval");
  t.patience = get<int>(merged, "train", "patience");
  t.dev_episodes = get<int>(merged, "train", "dev_episodes");
  t.log_interval = get<int>(merged, "train", "log_interval");
  t.seed = cfg.seed;

  cfg.encoder = get<std::string>(merged, "encoder", "selector");
  cfg.model_dir = get<std::string>(merged, "encoder", "model_dir");
  cfg.model.freeze_relation_encoder =
      get<bool>(merged, "encoder", "freeze_relation_encoder");
  TransformerConfig& e = cfg.toy_encoder;
  e.vocab_size = get<int>(merged, "encoder", "vocab_size");
  e.hidden = get<int>(merged, "encoder", "hidden");
  e.layers = get<int>(merged, "encoder", "layers");
  e.heads = get<int>(merged, "encoder", "heads");
  e.ffn = get<int>(merged, "encoder", "ffn");
  e.max_length = get<int>(merged, "encoder", "max_length");

  cfg.n_docs = get<int>(merged, "episodes", "n_docs");
  cfg.max_target_relations = get<int>(merged, "episodes", "max_target_relations");
  cfg.data.corpus = get<std::string>(merged, "data", "corpus");
  cfg.data.catalog = get<std::string>(merged, "data", "catalog");
  cfg.data.split = get<std::string>(merged, "data", "split");
  cfg.data.train_episodes = get<std::string>(merged, "data", "train_episodes");
  cfg.data.dev_episodes = get<std::string>(merged, "data", "dev_episodes");

  if (!(cfg.model.top_k_percent >= 0.0 && cfg.model.top_k_percent <= 100.0)) {
    throw ConfigError("attention.top_k_percent must lie in [0, 100]");
  }
  if (cfg.model.nota_count < 1) throw ConfigError("nota.count must be >= 1");
  if (!(cfg.model.alpha >= 0.0 && cfg.model.alpha <= 1.0)) {
    throw ConfigError("nota.alpha must lie in [0, 1]");
  }
  if (!(cfg.model.tau > 0.0)) throw ConfigError("loss.tau must be positive");
  if (!(cfg.model.lambda >= 0.0)) throw ConfigError("loss.lambda must be >= 0");
  if (cfg.n_docs < 1) throw ConfigError("episodes.n_docs must be >= 1");
  if (cfg.max_target_relations < 0) {
    throw ConfigError("episodes.max_target_relations must be >= 0");
  }
  if (e.hidden < 1 || e.layers < 1 || e.heads < 1 || e.hidden % e.heads != 0 ||
      e.ffn < 1 || e.max_length < 4 || e.vocab_size <= 4) {
    throw ConfigError("encoder dimensions are invalid");
  }
  try {
    t.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  return cfg;
}

}  // namespace fsdlre
