// fsdlre: build episode files, train, evaluate and analyze.

#include "fsdlre/config.h"
#include "fsdlre/corpus.h"
#include "fsdlre/encoder.h"
#include "fsdlre/episode.h"
#include "fsdlre/evaluation.h"
#include "fsdlre/model.h"
#include "fsdlre/trainer.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fsdlre;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSampling = 3;
constexpr int kExitNumeric = 4;

struct SharedFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string encoder;
  std::string task_family;
  std::string corpus;
  std::string catalog;
  std::string split_file;
};

void add_shared(CLI::App* cmd, SharedFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--out", f.out, "Output path");
  cmd->add_option("--encoder", f.encoder, "toy or pretrained:<name>");
  cmd->add_option("--task-family", f.task_family, "in_domain or cross_domain")
      ->check(CLI::IsMember({"in_domain", "cross_domain"}));
  cmd->add_option("--corpus", f.corpus, "Corpus JSON file");
  cmd->add_option("--catalog", f.catalog, "Relation catalog JSON file");
  cmd->add_option("--split-file", f.split_file, "Relation split JSON file");
}

json overrides_from(const SharedFlags& f) {
  json o = json::object();
  if (f.seed) o["seed"] = *f.seed;
  if (!f.out.empty()) o["out"] = f.out;
  if (!f.encoder.empty()) set_config_key(o, "encoder.selector", f.encoder);
  if (!f.task_family.empty()) o["task_family"] = f.task_family;
  if (!f.corpus.empty()) set_config_key(o, "data.corpus", f.corpus);
  if (!f.catalog.empty()) set_config_key(o, "data.catalog", f.catalog);
  if (!f.split_file.empty()) set_config_key(o, "data.split", f.split_file);
  return o;
}

RunConfig resolve(const SharedFlags& f, json extra = json::object()) {
  json file = json::object();
  if (!f.config.empty()) file = read_json_file(f.config);
  json o = overrides_from(f);
  o.merge_patch(extra);
  return resolve_run_config(file, o);
}

Corpus load_run_corpus(const RunConfig& cfg) {
  if (cfg.data.corpus.empty() || cfg.data.catalog.empty()) {
    throw ConfigError("data.corpus and data.catalog are required");
  }
  return load_corpus(cfg.data.corpus, CorpusFormat::kDocRedJson,
                     load_relation_catalog(cfg.data.catalog));
}

RelationSplit load_run_split(const RunConfig& cfg, bool required) {
  if (cfg.data.split.empty()) {
    if (required) throw ConfigError("data.split is required");
    return {};
  }
  return load_relation_split(cfg.data.split);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

std::vector<Episode> load_episodes(const std::string& path) {
  if (path.empty()) throw ConfigError("--episodes is required");
  return read_episode_file(path).episodes;
}

// Model restored from a checkpoint step directory; encoder settings come from
// the run_config.json written next to the step directories.
std::unique_ptr<RaplModel> load_model(const std::string& ckpt_dir,
                                      const RunConfig& fallback) {
  if (ckpt_dir.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::is_directory(ckpt_dir)) {
    throw ConfigError("checkpoint " + ckpt_dir + " does not exist");
  }
  const Checkpoint ckpt = load_checkpoint(ckpt_dir);
  RunConfig run = fallback;
  const fs::path saved = fs::path(ckpt_dir).parent_path() / "run_config.json";
  if (fs::exists(saved)) run = resolve_run_config(read_json_file(saved), json::object());
  const ModelConfig mc = model_config_from_json(ckpt.config.at("model"));
  auto model = std::make_unique<RaplModel>(
      make_encoder_provider(run.encoder, run.toy_encoder, run.seed,
                            run.model_dir),
      mc, run.seed);
  load_parameter_values(*model, ckpt.parameters);
  return model;
}

int cmd_build_episodes(const SharedFlags& f, int count,
                       const std::string& split_name,
                       std::optional<int> n_docs) {
  json extra = json::object();
  if (n_docs) set_config_key(extra, "episodes.n_docs", *n_docs);
  const RunConfig cfg = resolve(f, extra);
  if (count <= 0) throw ConfigError("--count must be positive");
  const SourceSplit source = parse_source_split(split_name);
  const Corpus corpus = load_run_corpus(cfg);
  const RelationSplit split =
      load_run_split(cfg, source != SourceSplit::kTestCross);
  EpisodeConfig ec;
  ec.n_docs = cfg.n_docs;
  ec.seed = cfg.seed;
  ec.max_target_relations = cfg.max_target_relations;
  ec.source_split = source;
  std::vector<Episode> episodes;
  episodes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    episodes.push_back(
        sample_episode(corpus, split, ec, static_cast<std::uint64_t>(i)));
  }
  const fs::path out =
      f.out.empty() ? fs::path("episodes_" + split_name + ".jsonl") : fs::path(f.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_episode_file(out, {kEpisodeSchemaVersion, cfg.n_docs, split_name},
                     episodes);
  const EpisodeStats stats = episode_stats(episodes);
  std::cout << "wrote " << count << " episodes to " << out.string() << '\n'
            << "avg target relations: " << stats.avg_target_relations << '\n'
            << "avg support instances per relation: "
            << stats.avg_support_instances_per_relation << '\n';
  return 0;
}

struct TrainFlags {
  bool no_rcl = false;
  bool no_ibpc = false;
  bool scl = false;
  bool no_tnpg = false;
  std::string resume;
};

int cmd_train(const SharedFlags& f, const TrainFlags& t) {
  json extra = json::object();
  if (t.no_rcl) {
    set_config_key(extra, "loss.lambda", 0.0);
    set_config_key(extra, "loss.contrastive_variant", "off");
  }
  if (t.scl && !t.no_rcl) set_config_key(extra, "loss.contrastive_variant", "scl");
  if (t.no_ibpc) set_config_key(extra, "ablation.disable_ibpc", true);
  if (t.no_tnpg) set_config_key(extra, "ablation.disable_tnpg", true);
  RunConfig cfg = resolve(f, extra);

  const Corpus corpus = load_run_corpus(cfg);
  const RelationSplit split = load_run_split(cfg, cfg.data.train_episodes.empty());
  std::vector<Episode> fixed_train;
  if (!cfg.data.train_episodes.empty()) {
    fixed_train = read_episode_file(cfg.data.train_episodes).episodes;
    if (fixed_train.empty()) throw ConfigError("training episode file is empty");
  }
  EpisodeConfig ec;
  ec.n_docs = cfg.n_docs;
  ec.seed = cfg.seed;
  ec.max_target_relations = cfg.max_target_relations;
  ec.source_split = SourceSplit::kTrain;
  EpisodeSource source =
      fixed_train.empty()
          ? split_episode_source(corpus, split, ec)
          : EpisodeSource([&fixed_train](std::uint64_t i) {
              return fixed_train[i % fixed_train.size()];
            });

  std::vector<Episode> dev;
  if (!cfg.data.dev_episodes.empty()) {
    dev = read_episode_file(cfg.data.dev_episodes).episodes;
  } else if (!split.dev_ids().empty()) {
    EpisodeConfig dc = ec;
    dc.source_split = SourceSplit::kDev;
    dc.seed = cfg.seed + 1;
    for (int i = 0; i < cfg.train.dev_episodes; ++i) {
      dev.push_back(sample_episode(corpus, split, dc, static_cast<std::uint64_t>(i)));
    }
  }

  const fs::path ckpt_root = cfg.out / "ckpt";
  cfg.train.checkpoint_dir = ckpt_root;
  fs::create_directories(ckpt_root);
  write_json(ckpt_root / "run_config.json", run_config_to_json(cfg));

  RaplModel model(make_encoder_provider(cfg.encoder, cfg.toy_encoder, cfg.seed,
                                        cfg.model_dir),
                  cfg.model, cfg.seed);
  std::optional<Checkpoint> resume;
  if (!t.resume.empty()) resume = load_checkpoint(t.resume);
  const TrainResult result =
      train(model, corpus, source, cfg.train, dev,
            resume ? &*resume : nullptr);
  json trace = json::array();
  for (double v : result.loss_trace) trace.push_back(v);
  write_json(cfg.out / "train_log.json",
             {{"steps_run", result.steps_run},
              {"early_stopped", result.early_stopped},
              {"best_step", result.best.step},
              {"best_dev_f1", result.best.dev_f1},
              {"best_checkpoint", result.best.directory.string()},
              {"config", run_config_to_json(cfg)},
              {"loss_trace", trace}});
  std::cout << "best checkpoint: " << result.best.directory.string() << '\n';
  return 0;
}

int cmd_eval(const SharedFlags& f, const std::string& ckpt,
             const std::string& episodes_path, const std::string& aggregation,
             bool bins) {
  const RunConfig cfg = resolve(f);
  const F1Aggregation agg = parse_f1_aggregation(aggregation);
  const Corpus corpus = load_run_corpus(cfg);
  const std::vector<Episode> episodes = load_episodes(episodes_path);
  const auto model = load_model(ckpt, cfg);
  const std::vector<PredictionSet> predictions =
      predict_all(*model, corpus, episodes);
  const ScoreReport report = macro_f1(predictions, episodes, {}, agg);
  write_json(cfg.out / "report.json", to_json(report));
  if (bins) {
    json j = json::array();
    for (const NotaRateBin& b : bin_by_nota_rate(episodes, corpus)) {
      j.push_back({{"bin", b.label()}, {"episodes", b.episodes.size()}});
    }
    write_json(cfg.out / "bins.json", j);
  }
  std::cout << "macro F1 (" << to_string(agg) << "): " << report.macro_f1
            << '\n';
  return 0;
}

int cmd_analyze(const SharedFlags& f, const std::string& ckpt,
                const std::string& episodes_path) {
  const RunConfig cfg = resolve(f);
  const Corpus corpus = load_run_corpus(cfg);
  const std::vector<Episode> episodes = load_episodes(episodes_path);
  const auto model = load_model(ckpt, cfg);
  const std::vector<PredictionSet> predictions =
      predict_all(*model, corpus, episodes);

  json nota = json::array();
  for (const NotaRateBin& b : bin_by_nota_rate(episodes, corpus)) {
    std::vector<ScoreCell> cells;
    for (std::size_t e : b.episodes) {
      for (const auto& r : episodes[e].target_relations) cells.emplace_back(e, r);
    }
    const ScoreReport r = score_cells(predictions, episodes, cells);
    nota.push_back({{"bin", b.label()},
                    {"episodes", b.episodes.size()},
                    {"macro_f1", r.macro_f1}});
  }
  json support = json::array();
  for (const auto& [category, cells] : bin_by_support_count(episodes)) {
    const ScoreReport r = score_cells(predictions, episodes, cells);
    support.push_back({{"category", support_count_label(category)},
                       {"cells", cells.size()},
                       {"macro_f1", r.macro_f1}});
  }
  const json out = {{"nota_rate", nota}, {"support_count", support}};
  write_json(cfg.out / "analysis.json", out);
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_dump(const SharedFlags& f, const std::string& ckpt,
             const std::string& episodes_path, int per_relation) {
  const RunConfig cfg = resolve(f);
  const Corpus corpus = load_run_corpus(cfg);
  const std::vector<Episode> episodes = load_episodes(episodes_path);
  const auto model = load_model(ckpt, cfg);
  fs::create_directories(cfg.out);
  const fs::path path = cfg.out / "embeddings.tsv";
  dump_support_embeddings(*model, corpus, episodes, path, per_relation);
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot document-level relation extraction"};
  app.require_subcommand(1);

  SharedFlags build_flags, train_flags, eval_flags, analyze_flags, dump_flags;

  auto* build = app.add_subcommand("build-episodes", "Sample episode files");
  add_shared(build, build_flags);
  int count = 0;
  std::string split_name = "train";
  std::optional<int> n_docs;
  build->add_option("--count", count, "Number of episodes")->required();
  build->add_option("--split", split_name, "train, dev, test_in or test_cross");
  build->add_option("--n-docs", n_docs, "Support documents per episode");

  auto* train_cmd = app.add_subcommand("train", "Meta-train a model");
  add_shared(train_cmd, train_flags);
  TrainFlags tf;
  train_cmd->add_flag("--no-rcl", tf.no_rcl, "Drop the contrastive term");
  train_cmd->add_flag("--no-ibpc", tf.no_ibpc,
                      "Support instances use pair attention only");
  train_cmd->add_flag("--scl", tf.scl, "Unweighted supervised contrastive loss");
  train_cmd->add_flag("--no-tnpg", tf.no_tnpg, "Use the base NOTA bank as is");
  train_cmd->add_option("--resume", tf.resume, "Checkpoint step directory");

  std::string ckpt, episodes_path, aggregation = "pooled";
  bool bins = false;
  int per_relation = 10;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint");
  add_shared(eval, eval_flags);
  eval->add_option("--checkpoint", ckpt, "Checkpoint step directory");
  eval->add_option("--episodes", episodes_path, "Episode file");
  eval->add_option("--f1-aggregation", aggregation, "pooled or per-episode-mean")
      ->check(CLI::IsMember({"pooled", "per-episode-mean"}));
  eval->add_flag("--bins", bins, "Also write NOTA-rate bin sizes");

  auto* analyze = app.add_subcommand("analyze", "Per-bin macro F1");
  add_shared(analyze, analyze_flags);
  analyze->add_option("--checkpoint", ckpt, "Checkpoint step directory");
  analyze->add_option("--episodes", episodes_path, "Episode file");

  auto* dump = app.add_subcommand("dump-embeddings", "Support embeddings TSV");
  add_shared(dump, dump_flags);
  dump->add_option("--checkpoint", ckpt, "Checkpoint step directory");
  dump->add_option("--episodes", episodes_path, "Episode file");
  dump->add_option("--per-relation", per_relation,
                   "Instance rows per relation and episode (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (build->parsed()) {
      return cmd_build_episodes(build_flags, count, split_name, n_docs);
    }
    if (train_cmd->parsed()) return cmd_train(train_flags, tf);
    if (eval->parsed()) {
      return cmd_eval(eval_flags, ckpt, episodes_path, aggregation, bins);
    }
    if (analyze->parsed()) return cmd_analyze(analyze_flags, ckpt, episodes_path);
    if (dump->parsed()) return cmd_dump(dump_flags, ckpt, episodes_path, per_relation);
  } catch (const SamplingExhaustedError& e) {
    spdlog::error("{}", e.what());
    return kExitSampling;
  } catch (const NumericError& e) {
    spdlog::error("{}", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
