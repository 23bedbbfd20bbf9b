#include "fsdlre/trainer.h"

#include "fsdlre/evaluation.h"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace fsdlre {

std::string to_string(TaskFamily f) {
  return f == TaskFamily::kInDomain ? "in_domain" : "cross_domain";
}

TaskFamily parse_task_family(std::string_view text) {
  if (text == "in_domain") return TaskFamily::kInDomain;
  if (text == "cross_domain") return TaskFamily::kCrossDomain;
  throw std::invalid_argument("unknown task family '" + std::string(text) +
                              "' (in_domain, cross_domain)");
}

HyperParameters hyperparameter_defaults(TaskFamily family) {
  if (family == TaskFamily::kInDomain) return {15.0, 0.4, 15, 0.9, 0.1};
  return {10.0, 0.4, 20, 0.95, 0.1};
}

HyperParameters hyperparameter_defaults(std::string_view family) {
  return hyperparameter_defaults(parse_task_family(family));
}

ModelConfig model_config_for(const HyperParameters& hp) {
  ModelConfig cfg;
  cfg.top_k_percent = hp.top_k_percent;
  cfg.tau = hp.tau;
  cfg.nota_count = hp.nota_count;
  cfg.alpha = hp.alpha;
  cfg.lambda = hp.lambda;
  return cfg;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* field) {
    if (!ok) {
      throw std::invalid_argument(std::string("train.") + field +
                                  " is out of range");
    }
  };
  require(learning_rate > 0.0, "learning_rate");
  require(total_episodes > 0, "total_episodes");
  require(episodes_per_batch > 0, "episodes_per_batch");
  require(warmup_fraction > 0.0 && warmup_fraction < 1.0, "warmup_fraction");
  require(grad_clip_norm > 0.0, "grad_clip_norm");
  require(weight_decay >= 0.0, "weight_decay");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2");
  require(adam_epsilon > 0.0, "adam_epsilon");
  require(eval_interval > 0, "eval_interval");
  require(patience > 0, "patience");
  require(dev_episodes > 0, "dev_episodes");
  require(log_interval > 0, "log_interval");
}

int TrainConfig::total_steps() const {
  return (total_episodes + episodes_per_batch - 1) / episodes_per_batch;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate},
          {"total_episodes", cfg.total_episodes},
          {"episodes_per_batch", cfg.episodes_per_batch},
          {"warmup_fraction", cfg.warmup_fraction},
          {"grad_clip_norm", cfg.grad_clip_norm},
          {"weight_decay", cfg.weight_decay},
          {"adam_beta1", cfg.adam_beta1},
          {"adam_beta2", cfg.adam_beta2},
          {"adam_epsilon", cfg.adam_epsilon},
          {"eval_interval", cfg.eval_interval},
          {"patience", cfg.patience},
          {"dev_episodes", cfg.dev_episodes},
          {"log_interval", cfg.log_interval},
          {"seed", cfg.seed}};
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"top_k_percent", cfg.top_k_percent},
          {"tau", cfg.tau},
          {"nota_count", cfg.nota_count},
          {"alpha", cfg.alpha},
          {"lambda", cfg.lambda},
          {"contrastive_variant", to_string(cfg.variant)},
          {"disable_tnpg", cfg.disable_tnpg},
          {"instance_based", cfg.instance_based},
          {"freeze_relation_encoder", cfg.freeze_relation_encoder}};
}

double learning_rate_at(int step, int total_steps, double warmup_fraction,
                        double peak) {
  const int warmup = static_cast<int>(
      std::lround(warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (step >= total_steps) return 0.0;
  return peak * static_cast<double>(total_steps - step) /
         static_cast<double>(std::max(1, total_steps - warmup));
}

double clip_global_norm(std::span<Matrix> grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Matrix& g : grads) g *= factor;
  }
  return norm;
}

AdamW::AdamW(double beta1, double beta2, double epsilon, double weight_decay)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon),
      weight_decay_(weight_decay) {}

void AdamW::step(std::span<const NamedParameter> params,
                 std::span<const Matrix> grads, double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("AdamW: parameter/gradient count mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ag::Var value = params[i].value;
    Matrix& p = value.mutable_value();
    const Matrix& g = grads[i];
    Matrix& m = m_.try_emplace(params[i].name, Matrix::Zero(p.rows(), p.cols()))
                    .first->second;
    Matrix& v = v_.try_emplace(params[i].name, Matrix::Zero(p.rows(), p.cols()))
                    .first->second;
    if (params[i].decay) p *= 1.0 - lr * weight_decay_;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) /
                 ((v.array() / c2).sqrt() + epsilon_);
  }
}

MatrixArchive AdamW::state() const {
  MatrixArchive out;
  out["__step"] = Matrix::Constant(1, 1, static_cast<double>(t_));
  for (const auto& [name, m] : m_) out["m/" + name] = m;
  for (const auto& [name, v] : v_) out["v/" + name] = v;
  return out;
}

void AdamW::load_state(const MatrixArchive& archive) {
  m_.clear();
  v_.clear();
  t_ = static_cast<long>(archive.at("__step")(0, 0));
  for (const auto& [key, value] : archive) {
    if (key.starts_with("m/")) m_[key.substr(2)] = value;
    if (key.starts_with("v/")) v_[key.substr(2)] = value;
  }
}

MatrixArchive parameter_values(const RaplModel& model) {
  MatrixArchive out;
  for (const NamedParameter& p : model.parameters()) {
    out[p.name] = p.value.value();
  }
  return out;
}

void load_parameter_values(const RaplModel& model,
                           const MatrixArchive& values) {
  for (NamedParameter p : model.parameters()) {
    auto it = values.find(p.name);
    if (it == values.end()) {
      throw std::runtime_error("checkpoint lacks parameter " + p.name);
    }
    Matrix& target = p.value.mutable_value();
    if (it->second.rows() != target.rows() ||
        it->second.cols() != target.cols()) {
      throw std::runtime_error("checkpoint parameter " + p.name +
                               " has the wrong shape");
    }
    target = it->second;
  }
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::filesystem::path save_checkpoint(const Checkpoint& ckpt,
                                      const std::filesystem::path& root) {
  const std::filesystem::path dir =
      root / ("step-" + std::to_string(ckpt.step));
  std::filesystem::create_directories(dir);
  write_matrix_archive(dir / "params.archive", ckpt.parameters);
  write_matrix_archive(dir / "optimizer.archive", ckpt.optimizer);
  const nlohmann::json meta = {{"step", ckpt.step},
                               {"dev_f1", ckpt.dev_f1},
                               {"config_hash", config_hash(ckpt.config)},
                               {"config", ckpt.config}};
  std::ofstream os(dir / "meta.json");
  os << meta.dump(2) << '\n';
  if (!os) throw std::runtime_error("cannot write " + (dir / "meta.json").string());
  return dir;
}

Checkpoint load_checkpoint(const std::filesystem::path& step_dir) {
  if (!std::filesystem::is_directory(step_dir)) {
    throw std::runtime_error("no checkpoint at " + step_dir.string());
  }
  Checkpoint ckpt;
  const nlohmann::json meta = read_json_file(step_dir / "meta.json");
  ckpt.step = meta.at("step").get<long>();
  ckpt.dev_f1 = meta.at("dev_f1").get<double>();
  ckpt.config = meta.at("config");
  ckpt.parameters = read_matrix_archive(step_dir / "params.archive");
  ckpt.optimizer = read_matrix_archive(step_dir / "optimizer.archive");
  ckpt.directory = step_dir;
  return ckpt;
}

EpisodeSource split_episode_source(const Corpus& corpus,
                                   const RelationSplit& split,
                                   const EpisodeConfig& cfg) {
  return [&corpus, &split, cfg](std::uint64_t index) {
    return sample_episode(corpus, split, cfg, index);
  };
}

double evaluate_dev(const RaplModel& model, const Corpus& corpus,
                    std::span<const Episode> dev_episodes) {
  return evaluate(model, corpus, dev_episodes).macro_f1;
}

TrainResult train(RaplModel& model, const Corpus& corpus,
                  const EpisodeSource& source, const TrainConfig& cfg,
                  std::span<const Episode> dev_episodes,
                  const Checkpoint* resume, const TrainHooks& hooks) {
  cfg.validate();
  const std::vector<NamedParameter> params = model.parameters();
  AdamW optimizer(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon,
                  cfg.weight_decay);
  const nlohmann::json snapshot = {{"train", to_json(cfg)},
                                   {"model", to_json(model.config())}};

  TrainResult result;
  int start = 0;
  if (resume != nullptr) {
    load_parameter_values(model, resume->parameters);
    optimizer.load_state(resume->optimizer);
    start = static_cast<int>(resume->step);
    result.best = *resume;
  }
  result.steps_run = start;
  const int total = cfg.total_steps();
  const std::vector<Episode> dev(
      dev_episodes.begin(),
      dev_episodes.begin() +
          std::min<std::size_t>(dev_episodes.size(),
                                static_cast<std::size_t>(cfg.dev_episodes)));
  int stale = 0;
  bool have_best = resume != nullptr && resume->dev_f1 >= 0.0;

  auto snapshot_checkpoint = [&](long step, double f1) {
    Checkpoint ckpt;
    ckpt.step = step;
    ckpt.dev_f1 = f1;
    ckpt.parameters = parameter_values(model);
    ckpt.optimizer = optimizer.state();
    ckpt.config = snapshot;
    if (!cfg.checkpoint_dir.empty()) {
      ckpt.directory = save_checkpoint(ckpt, cfg.checkpoint_dir);
    }
    return ckpt;
  };

  for (int step = start; step < total; ++step) {
    for (const NamedParameter& p : params) {
      ag::Var v = p.value;
      v.zero_grad();
    }
    const int first = step * cfg.episodes_per_batch;
    const int count =
        std::min(cfg.episodes_per_batch, cfg.total_episodes - first);
    double loss_sum = 0.0;
    result.last_batch.clear();
    for (int i = 0; i < count; ++i) {
      const auto draw = static_cast<std::uint64_t>(first + i);
      const Episode episode = source(draw);
      EpisodeLoss loss;
      try {
        loss = episode_loss(model, corpus, episode);
      } catch (const std::domain_error& e) {
        spdlog::error("episode {} (query {}): {}", draw, episode.query_doc_id,
                      e.what());
        throw NumericError(e.what(), draw);
      }
      if (hooks.on_episode) hooks.on_episode(draw, episode, loss);
      if (!std::isfinite(loss.breakdown.total)) {
        spdlog::error("non-finite loss on episode {} (query {}): bce={} rcl={}",
                      draw, episode.query_doc_id, loss.breakdown.bce,
                      loss.breakdown.rcl);
        throw NumericError("non-finite loss on episode " + std::to_string(draw),
                           draw);
      }
      ag::scale(loss.total, 1.0 / static_cast<double>(count)).backward();
      loss_sum += loss.breakdown.total;
      result.last_batch.push_back(loss.breakdown);
    }
    std::vector<Matrix> grads;
    grads.reserve(params.size());
    for (const NamedParameter& p : params) grads.push_back(p.value.grad());
    clip_global_norm(grads, cfg.grad_clip_norm);
    optimizer.step(params, grads,
                   learning_rate_at(step, total, cfg.warmup_fraction,
                                    cfg.learning_rate));
    result.loss_trace.push_back(loss_sum / static_cast<double>(count));
    result.steps_run = step + 1;

    if ((step + 1) % cfg.log_interval == 0) {
      spdlog::info("step {}/{} loss {:.6f}", step + 1, total,
                   result.loss_trace.back());
    }
    if (!dev.empty() && (step + 1) % cfg.eval_interval == 0) {
      const double f1 = evaluate_dev(model, corpus, dev);
      spdlog::info("step {} dev macro F1 {:.4f}", step + 1, f1);
      if (!have_best || f1 > result.best.dev_f1) {
        result.best = snapshot_checkpoint(step + 1, f1);
        have_best = true;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        result.early_stopped = true;
        spdlog::info("early stop after {} evaluations without improvement",
                     stale);
        break;
      }
    }
  }

  if (have_best) {
    load_parameter_values(model, result.best.parameters);
  } else {
    result.best = snapshot_checkpoint(result.steps_run, -1.0);
  }
  for (const NamedParameter& p : params) {
    ag::Var v = p.value;
    v.zero_grad();
  }
  return result;
}

}  // namespace fsdlre
