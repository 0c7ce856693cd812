#pragma once

// Versioned experiment configuration. Unknown keys are errors; every
// failure names the offending field.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "genprobe/gp_env.hpp"
#include "genprobe/nav_env.hpp"
#include "genprobe/trainer.hpp"

namespace genprobe::service {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class LandmarkPool { Default, Heldout };

struct NavSettings {
  nav::NavConfig env;
  LandmarkPool pool = LandmarkPool::Default;
  std::string routes_dir;  // fixed routes instead of the generator when set
};

struct RunSettings {
  int sft_samples = 200;     // expert records (cards) or routes (navigation)
  int eval_episodes = 100;
  int eval_points = 5;       // evaluation checkpoints per run
  bool suit_features = true;
  std::uint64_t eval_seed = 1000003;
};

struct ExperimentConfig {
  int version = 1;
  EnvKind env = EnvKind::GeneralPoints;
  gp::RuleConfig gp;
  NavSettings nav;
  // Rule variant for out-of-distribution evaluation.
  gp::FaceRule ood_face_rule = gp::FaceRule::Ordinal;
  nav::ActionSpace ood_action_space = nav::ActionSpace::Relative;
  policy::TrainConfig train;
  RunSettings run;

  void validate() const;
  // Verification iterations: cards max_steps, navigation attempts per point.
  int viter() const;
  void set_viter(int v);
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& file);
std::string config_hash(const ExperimentConfig& c);

// Environment section only ({"env": ..., "gp"/"nav": ...}), as used by the
// protocol's reset request; missing keys keep `base` values.
ExperimentConfig env_config_from_json(const nlohmann::json& j, const ExperimentConfig& base);

std::unique_ptr<Environment> make_env(const ExperimentConfig& c, bool ood = false);

}  // namespace genprobe::service
