#include "fsdlre/config.h"

#include <doctest.h>

using namespace fsdlre;
using nlohmann::json;

TEST_CASE("family defaults fill an empty config") {
  const RunConfig in = resolve_run_config(json::object(), json::object());
  CHECK(in.task_family == TaskFamily::kInDomain);
  CHECK(in.model.top_k_percent == 15);
  CHECK(in.model.nota_count == 15);
  CHECK(in.model.alpha == 0.9);
  CHECK(in.model.tau == 0.4);
  CHECK(in.model.lambda == 0.1);
  CHECK(in.train.learning_rate == 1e-5);
  CHECK(in.train.total_episodes == 50000);
  CHECK(in.train.episodes_per_batch == 4);
  const RunConfig cross =
      resolve_run_config({{"task_family", "cross_domain"}}, json::object());
  CHECK(cross.model.top_k_percent == 10);
  CHECK(cross.model.nota_count == 20);
  CHECK(cross.model.alpha == 0.95);
}

TEST_CASE("flag beats file beats family default") {
  struct Case {
    const char* key;
    json file;
    json flag;
    double expect;
  };
  const Case cases[] = {
      {"loss.tau", json(), json(), 0.4},
      {"loss.tau", 0.2, json(), 0.2},
      {"loss.tau", 0.2, 0.7, 0.7},
      {"nota.alpha", json(), 0.5, 0.5},
      {"attention.top_k_percent", 30.0, json(), 30.0},
      {"train.learning_rate", 1e-3, 2e-3, 2e-3},
  };
  for (const Case& c : cases) {
    json file = json::object(), flags = json::object();
    if (!c.file.is_null()) set_config_key(file, c.key, c.file);
    if (!c.flag.is_null()) set_config_key(flags, c.key, c.flag);
    const json resolved = run_config_to_json(resolve_run_config(file, flags));
    std::string pointer = "/" + std::string(c.key);
    pointer[pointer.find('.')] = '/';
    CHECK_MESSAGE(resolved.at(json::json_pointer(pointer)) == c.expect, c.key);
  }
  // A flag-chosen family supplies the defaults under a file value.
  const RunConfig r = resolve_run_config({{"task_family", "in_domain"}, {"nota", {{"alpha", 0.7}}}},
                                         {{"task_family", "cross_domain"}});
  CHECK(r.model.alpha == 0.7);
  CHECK(r.model.nota_count == 20);
}

TEST_CASE("bad configs are rejected") {
  CHECK_THROWS_AS(resolve_run_config({{"los", {{"tau", 1}}}}, json::object()), ConfigError);
  CHECK_THROWS_AS(resolve_run_config({{"loss", {{"temperature", 1}}}}, json::object()),
                  ConfigError);
  CHECK_THROWS_AS(resolve_run_config({{"loss", {{"tau", "warm"}}}}, json::object()),
                  ConfigError);
  CHECK_THROWS_AS(resolve_run_config({{"loss", {{"tau", 0.0}}}}, json::object()), ConfigError);
  CHECK_THROWS_AS(resolve_run_config({{"nota", {{"alpha", 1.5}}}}, json::object()), ConfigError);
  CHECK_THROWS_AS(resolve_run_config({{"task_family", "open"}}, json::object()), ConfigError);
  CHECK_THROWS_AS(resolve_run_config({{"train", {{"total_episodes", 0}}}}, json::object()),
                  ConfigError);
  CHECK_THROWS_AS(resolve_run_config({{"encoder", {{"hidden", 10}, {"heads", 4}}}},
                                     json::object()),
                  ConfigError);
}

TEST_CASE("serialized config resolves back to itself") {
  RunConfig c = resolve_run_config({{"loss", {{"contrastive_variant", "scl"}}},
                                    {"ablation", {{"disable_ibpc", true}}}},
                                   json::object());
  CHECK(c.model.variant == ContrastiveVariant::kScl);
  CHECK_FALSE(c.model.instance_based);
  const json j = run_config_to_json(c);
  CHECK(run_config_to_json(resolve_run_config(j, json::object())) == j);
  const ModelConfig m = model_config_from_json(to_json(c.model));
  CHECK(to_json(m) == to_json(c.model));
  CHECK_THROWS_AS(model_config_from_json({{"tau", 1}}), ConfigError);
}

TEST_CASE("dotted keys") {
  json j = json::object();
  set_config_key(j, "a.b.c", 3);
  set_config_key(j, "a.d", "x");
  CHECK(j == json{{"a", {{"b", {{"c", 3}}}, {"d", "x"}}}});
}
