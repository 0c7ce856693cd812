#pragma once

// Desk-scale experiment runner: SFT and PPO runs over the tiny policy with
// periodic ID/OOD evaluation, run directories and report aggregation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "genprobe/config.hpp"
#include "genprobe/evalkit.hpp"
#include "genprobe/tiny_policy.hpp"
#include "genprobe/trainer.hpp"

namespace genprobe::service {

struct EvalResult {
  std::vector<revision::Transcript> transcripts;
  evalkit::MetricPoint success;
  evalkit::MetricPoint per_step;
};

// Episodes use seeds mix_seed(seed, i) and the environment's own turn bound.
EvalResult evaluate(Policy& policy, const ExperimentConfig& c, bool ood, int episodes, std::uint64_t seed);

policy::TinyModel initial_model(const ExperimentConfig& c);

using Progress = std::function<void(const std::string&)>;

struct TrainResult {
  policy::TinyModel model;
  std::vector<evalkit::CurvePoint> curve;
  std::string method;            // "SFT" or "RL"
  evalkit::BigInt d_init = 0;    // decisions seen before this run
  evalkit::BigInt d_train = 0;   // decisions processed by this run
  evalkit::BigRational flops = 0;
  double final_loss = 0.0;
};

// Trains on the expert decisions behind `records`; starts from `init` when
// given, which was trained on `d_init` decisions.
TrainResult train_sft(const ExperimentConfig& c, const std::vector<policy::SftRecord>& records,
                      std::optional<policy::TinyModel> init = std::nullopt, const evalkit::BigInt& d_init = 0,
                      const Progress& progress = {});

TrainResult train_rl(const ExperimentConfig& c, std::optional<policy::TinyModel> init = std::nullopt,
                     const evalkit::BigInt& d_init = 0, const Progress& progress = {});

// Writes model.json, curve.csv and run.json into `dir`.
void write_run(const std::filesystem::path& dir, const TrainResult& result, const ExperimentConfig& c);

// Decisions recorded in a run directory's run.json (d_init + d_train).
evalkit::BigInt run_decisions(const std::filesystem::path& dir);

// Every curve.csv below `dir`, in path order.
std::vector<evalkit::CurvePoint> collect_curves(const std::filesystem::path& dir);

}  // namespace genprobe::service
