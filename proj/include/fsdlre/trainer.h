// Meta-training: AdamW with linear warmup/decay, global-norm clipping,
// periodic dev evaluation with early stopping, and checkpoints.

#ifndef FSDLRE_TRAINER_H_
#define FSDLRE_TRAINER_H_

#include "fsdlre/archive.h"
#include "fsdlre/corpus.h"
#include "fsdlre/episode.h"
#include "fsdlre/model.h"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsdlre {

enum class TaskFamily { kInDomain, kCrossDomain };
std::string to_string(TaskFamily f);
// Throws std::invalid_argument.
TaskFamily parse_task_family(std::string_view text);

struct HyperParameters {
  double top_k_percent = 0.0;
  double tau = 0.0;
  int nota_count = 0;
  double alpha = 0.0;
  double lambda = 0.0;

  bool operator==(const HyperParameters&) const = default;
};

HyperParameters hyperparameter_defaults(TaskFamily family);
HyperParameters hyperparameter_defaults(std::string_view family);
ModelConfig model_config_for(const HyperParameters& hp);

struct TrainConfig {
  double learning_rate = 1e-5;
  int total_episodes = 50000;
  int episodes_per_batch = 4;
  double warmup_fraction = 0.04;
  double grad_clip_norm = 1.0;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int eval_interval = 500;  // optimizer steps
  int patience = 10;        // evaluations
  int dev_episodes = 200;
  int log_interval = 50;
  std::uint64_t seed = 0;
  // Empty: no checkpoints are written.
  std::filesystem::path checkpoint_dir;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  int total_steps() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const ModelConfig& cfg);

// Non-finite loss; carries the offending episode's draw index.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::uint64_t episode)
      : std::runtime_error(what), episode_(episode) {}
  std::uint64_t episode() const { return episode_; }

 private:
  std::uint64_t episode_;
};

// Linear 0 -> lr over the first round(warmup_fraction * total) steps, then
// linear to 0 at `total`.
double learning_rate_at(int step, int total_steps, double warmup_fraction,
                        double peak);

// Scales the gradients in place so their joint L2 norm is at most max_norm;
// returns the norm before clipping.
double clip_global_norm(std::span<Matrix> grads, double max_norm);

class AdamW {
 public:
  AdamW(double beta1, double beta2, double epsilon, double weight_decay);

  // One update. decay[i] selects decoupled weight decay for parameter i.
  void step(std::span<const NamedParameter> params, std::span<const Matrix> grads,
            double lr);
  long steps() const { return t_; }

  MatrixArchive state() const;
  void load_state(const MatrixArchive& archive);

 private:
  double beta1_, beta2_, epsilon_, weight_decay_;
  long t_ = 0;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
};

MatrixArchive parameter_values(const RaplModel& model);
// Throws std::runtime_error on a missing or mis-shaped tensor.
void load_parameter_values(const RaplModel& model, const MatrixArchive& values);

struct Checkpoint {
  long step = 0;
  double dev_f1 = -1.0;  // -1 when no dev evaluation ran
  MatrixArchive parameters;
  MatrixArchive optimizer;
  nlohmann::json config;
  std::filesystem::path directory;  // empty when not written
};

std::string config_hash(const nlohmann::json& config);
// <root>/step-<n>/{params.archive, optimizer.archive, meta.json}
std::filesystem::path save_checkpoint(const Checkpoint& ckpt,
                                      const std::filesystem::path& root);
Checkpoint load_checkpoint(const std::filesystem::path& step_dir);

// Episode for a global draw index.
using EpisodeSource = std::function<Episode(std::uint64_t)>;
EpisodeSource split_episode_source(const Corpus& corpus,
                                   const RelationSplit& split,
                                   const EpisodeConfig& cfg);

struct TrainResult {
  Checkpoint best;
  std::vector<double> loss_trace;  // mean total loss per optimizer step
  std::vector<LossBreakdown> last_batch;
  int steps_run = 0;
  bool early_stopped = false;
};

double evaluate_dev(const RaplModel& model, const Corpus& corpus,
                    std::span<const Episode> dev_episodes);

// `on_episode` (optional) sees every episode's loss before the backward pass.
struct TrainHooks {
  std::function<void(std::uint64_t, const Episode&, const EpisodeLoss&)>
      on_episode;
};

// Runs ceil(total_episodes / episodes_per_batch) steps unless early-stopped.
// The model ends up holding the returned checkpoint's parameters. `resume`
// continues from a loaded checkpoint.
TrainResult train(RaplModel& model, const Corpus& corpus,
                  const EpisodeSource& source, const TrainConfig& cfg,
                  std::span<const Episode> dev_episodes = {},
                  const Checkpoint* resume = nullptr,
                  const TrainHooks& hooks = {});

}  // namespace fsdlre

#endif  // FSDLRE_TRAINER_H_
