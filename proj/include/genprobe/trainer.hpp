#pragma once

// Supervised fine-tuning, advantage estimation and clipped-surrogate PPO
// over TinyModel, plus the rollout and dataset helpers used by the CLI.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "genprobe/revision.hpp"
#include "genprobe/tiny_policy.hpp"

namespace genprobe::policy {

struct TrainConfig {
  double lr = 3e-3;      // PPO
  double sft_lr = 3e-2;
  double clip = 0.2;
  double gamma = 0.9;
  double gae_lambda = 0.95;
  int epochs = 4;
  int batch_size = 16;  // episodes per PPO update; samples per SFT step
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 5.0;
  int sft_epochs = 30;
  int rl_updates = 50;
  int hidden = 64;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument naming the field
};

// One gradient step on mean negative log-likelihood of the batch targets.
// Returns the loss before the step.
double sft_update(TinyModel& model, Adam& adam, const std::vector<Decision>& batch, const TrainConfig& config);
// Mean negative log-likelihood, without updating.
double sft_loss(const TinyModel& model, const std::vector<Decision>& batch, Eigen::VectorXd* grad = nullptr);

// Generalized advantage estimation with a zero value after the last step.
std::vector<double> compute_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                                       double gamma, double lambda);

struct RolloutEntry {
  Decision decision;
  double old_logp = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct PpoStats {
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

// Objective minimized by PPO on a fixed batch (advantages taken as given).
// Adds its gradient to `grad` when non-null.
PpoStats ppo_objective(const TinyModel& model, const std::vector<RolloutEntry>& batch, const TrainConfig& config,
                       double* loss, Eigen::VectorXd* grad);

// Normalizes advantages (batches larger than one), then runs the clipped
// surrogate update for config.epochs full-batch steps. Stats are from the
// first epoch.
PpoStats ppo_update(TinyModel& model, Adam& adam, std::vector<RolloutEntry> batch, const TrainConfig& config);

// Central finite differences on the listed parameter indices; returns the
// largest relative error against the analytic gradient.
double gradient_check(TinyModel& model, const std::function<double(const TinyModel&, Eigen::VectorXd*)>& objective,
                      const std::vector<std::size_t>& indices, double step = 1e-5);

struct BanditResult {
  std::vector<double> best_arm_prob;  // after each update
  std::vector<double> entropy;
};

// Two arms, +1 for the better arm and -1 for the other; single-step episodes.
BanditResult train_bandit(std::uint64_t seed, int updates, int batch = 16, const TrainConfig& config = {});

// Episode rollouts with a stochastic tiny policy: decisions with old
// log-probabilities, advantages and returns, plus the transcripts.
struct Rollout {
  std::vector<RolloutEntry> entries;
  std::vector<revision::Transcript> transcripts;
  std::size_t decisions = 0;
};
Rollout collect_rollout(TinyPolicy& policy, Environment& env, int episodes, int max_steps, std::uint64_t seed,
                        const TrainConfig& config);

enum class SftMode { ExpertSingleTurn, SubOptimalTrajectory };

std::string_view to_string(SftMode mode);
SftMode sft_mode_from_string(std::string_view name);

// Dataset records as written to disk: {env, seed, history, prompt, target}.
struct SftRecord {
  EnvKind env = EnvKind::GeneralPoints;
  std::uint64_t seed = 0;
  std::vector<std::string> history;  // model outputs replayed before the target turn
  std::string prompt;
  std::string target;
};

// Environments are reset with derived seeds. Navigation records start after
// a random correct prefix of the route; sub-optimal mode then injects
// sampled wrong attempts and their verifier messages before the target.
std::vector<SftRecord> make_sft_dataset(Environment& env, std::size_t count, SftMode mode, std::uint64_t seed);
void write_sft_dataset(const std::vector<SftRecord>& records, const std::filesystem::path& file);
std::vector<SftRecord> read_sft_dataset(const std::filesystem::path& file);

// Replays a record in `env` and returns the expert decision at its target
// turn. Throws std::runtime_error when the replayed prompt differs.
Decision decision_for_record(Environment& env, const SftRecord& record, const GpFeatureConfig& features = {});

}  // namespace genprobe::policy
