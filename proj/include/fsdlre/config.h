// Run configuration: task-family defaults, overridden by a JSON config file,
// overridden by command-line flags.

#ifndef FSDLRE_CONFIG_H_
#define FSDLRE_CONFIG_H_

#include "fsdlre/encoder.h"
#include "fsdlre/model.h"
#include "fsdlre/trainer.h"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace fsdlre {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataPaths {
  std::filesystem::path corpus;
  std::filesystem::path catalog;
  std::filesystem::path split;
  std::filesystem::path train_episodes;
  std::filesystem::path dev_episodes;
};

struct RunConfig {
  TaskFamily task_family = TaskFamily::kInDomain;
  ModelConfig model;
  TrainConfig train;
  std::string encoder = "toy";
  std::filesystem::path model_dir = "models";
  TransformerConfig toy_encoder;
  DataPaths data;
  int n_docs = 1;
  int max_target_relations = 0;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
};

// The nested key layout; every leaf of a config file must appear here.
nlohmann::json run_config_to_json(const RunConfig& cfg);

// Defaults for the family named by `overrides`, else `file`, else in_domain;
// then `file`; then `overrides`. Throws ConfigError on an unknown key or an
// ill-typed or out-of-range value.
RunConfig resolve_run_config(const nlohmann::json& file,
                             const nlohmann::json& overrides);

// Inverse of to_json(const ModelConfig&).
ModelConfig model_config_from_json(const nlohmann::json& j);

// Sets a dotted key path ("loss.tau") in `target`.
void set_config_key(nlohmann::json& target, const std::string& dotted,
                    nlohmann::json value);

}  // namespace fsdlre

#endif  // FSDLRE_CONFIG_H_
