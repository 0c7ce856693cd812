#pragma once

// A small parametric policy standing in for the language model: a shared
// tanh embedding with a per-card number head and a formula-template head
// (cards), an action head (navigation, bandit) and a value head. All
// parameters live in one flat vector.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "genprobe/gp_env.hpp"
#include "genprobe/nav_env.hpp"
#include "genprobe/policy.hpp"
#include "genprobe/rng.hpp"

namespace genprobe::policy {

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LengthMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kNumberClasses = 14;  // card numbers 0..13
inline constexpr int kNavTokens = 14;      // forward, stop, 8 headings, 4 relative turns
inline constexpr int kPsiDim = 3;          // per-template: reaches target, first to reach, closeness

struct GpFeatureConfig {
  bool suit_features = true;
};

int gp_feature_dim(const GpFeatureConfig& config);
// Rule flag, card ranks, card colors, retry index and failure counts per verdict class.
Eigen::VectorXd featurize_gp(const gp::GpState& state, const GpFeatureConfig& config = {});

int nav_feature_dim();
// Derived only from the instructions, the observation sequence and the
// actions accepted so far.
Eigen::VectorXd featurize_nav(const nav::NavView& view);
std::vector<char> nav_mask(nav::ActionSpace space);
int nav_token(const nav::NavAction& action);
nav::NavAction nav_action(int token);

// Per-template features for concrete numbers: rows follow formula_templates().
Eigen::MatrixXd template_features(std::span<const std::int64_t, 4> numbers, std::int64_t target);

// Inputs and choices of one decision. GP uses ranks/rule/numbers/tmpl/psi,
// navigation and bandit use action/mask.
struct Decision {
  Eigen::VectorXd x;
  std::array<int, 4> ranks{};
  int rule = 0;
  std::array<int, 4> numbers{};
  int tmpl = -1;
  Eigen::MatrixXd psi;
  int action = -1;
  std::vector<char> mask;
};

enum class ModelKind { GeneralPoints, Navigation, Bandit };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

struct ModelShape {
  ModelKind kind = ModelKind::GeneralPoints;
  int input_dim = 0;
  int hidden = 64;
  int templates = 0;  // GP only
  int actions = 0;    // navigation / bandit only
  bool suit_features = true;

  static ModelShape gp(int hidden = 64, bool suit_features = true);
  static ModelShape nav(int hidden = 64);
  static ModelShape bandit(int arms = 2);
};

struct Eval {
  double logp = 0.0;
  double entropy = 0.0;
  double value = 0.0;
};

class TinyModel {
 public:
  TinyModel(ModelShape shape, std::uint64_t seed);

  const ModelShape& shape() const { return shape_; }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  std::size_t size() const { return static_cast<std::size_t>(params_.size()); }

  // Log-probability of the decision's choices, summed head entropies and the
  // value estimate. With `grad`, adds the gradient of
  // c_logp * logp + c_entropy * entropy + c_value * value.
  Eval evaluate(const Decision& d, double c_logp = 0.0, double c_entropy = 0.0, double c_value = 0.0,
                Eigen::VectorXd* grad = nullptr) const;

  // Fills the choices of `d` by sampling (rng) or argmax (no rng).
  Eval decide(Decision& d, Rng* rng, std::int64_t target = 24) const;

  void save(const std::filesystem::path& file, const std::string& config_hash = "") const;
  static TinyModel load(const std::filesystem::path& file);

 private:
  struct Layout {
    std::size_t w1, b1, wv, bv;
    std::size_t wn, bn, bt, wa, ba;  // GP
    std::size_t wo, bo, wd;          // navigation / bandit
    std::size_t total;
  };
  static Layout layout_for(const ModelShape& s);
  void check(const Decision& d) const;

  ModelShape shape_;
  Layout layout_;
  Eigen::VectorXd params_;
};

struct Adam {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

// Expert targets for the current state.
Decision expert_decision(const gp::GpEnv& env, const GpFeatureConfig& config = {});
Decision expert_decision(const nav::NavEnv& env);
// Observable inputs only, choices unset.
Decision input_decision(const gp::GpEnv& env, const GpFeatureConfig& config = {});
Decision input_decision(const nav::NavEnv& env);

// Policy wrapper: samples when stochastic, argmax otherwise. Remembers the
// last decision for rollout collection.
class TinyPolicy final : public Policy {
 public:
  TinyPolicy(TinyModel model, bool stochastic, std::uint64_t seed);

  PolicyOutput act(const std::string& prompt, const Environment& env) override;
  bool deterministic() const override { return !stochastic_; }
  bool shareable() const override { return false; }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<TinyPolicy>(*this); }
  std::string name() const override { return "tiny"; }

  TinyModel& model() { return model_; }
  const TinyModel& model() const { return model_; }
  const Decision& last_decision() const { return last_; }
  void set_stochastic(bool stochastic) { stochastic_ = stochastic; }

 private:
  TinyModel model_;
  bool stochastic_;
  Rng rng_;
  Decision last_;
};

// Answer text for a decision in the environment's current state.
std::string render_decision(const Decision& d, const Environment& env);

}  // namespace genprobe::policy
