#pragma once

// Sequential revision: the prompt at turn t is the system prompt followed by
// every earlier model output and verifier message.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "genprobe/environment.hpp"
#include "genprobe/policy.hpp"

namespace genprobe::revision {

inline constexpr const char* kSeparator = "\n";

struct Turn {
  std::string output;
  std::string verifier;
  double reward = 0.0;
  double penalty = 0.0;  // terminal step-limit penalty, 0 elsewhere
  bool correct = false;
  std::string label;
  std::uint64_t prompt_hash = 0;  // hash of the prompt the policy received
};

struct Transcript {
  EnvKind env = EnvKind::GeneralPoints;
  std::uint64_t seed = 0;
  std::string system_prompt;
  std::vector<Turn> turns;
  EpisodeStatus status = EpisodeStatus::Running;

  double episode_return() const;
  bool any_correct() const;
};

struct EpisodeConfig {
  int max_steps = 5;
  EnvKind env = EnvKind::GeneralPoints;
  std::uint64_t seed = 0;

  void validate() const;
};

// 64-bit FNV-1a.
std::uint64_t prompt_hash(std::string_view text);

// Throws std::out_of_range when t exceeds the recorded turns.
std::string build_prompt(const Transcript& transcript, std::size_t t);

// Appends turn t's output and verifier text to the prompt of turn t.
void extend_prompt(std::string& prompt, const Turn& turn);

// One episode driven turn by turn, for callers that receive model outputs
// from elsewhere (the protocol server). Resets `env` on construction.
class Session {
 public:
  Session(Environment& env, const EpisodeConfig& config);

  const std::string& prompt() const { return prompt_; }
  bool done() const { return done_; }
  std::size_t step() const { return transcript_.turns.size(); }
  const Transcript& transcript() const { return transcript_; }
  Environment& env() { return env_; }

  // Verifies one output. When this exhausts the engine budget before the
  // environment finishes, the turn carries the step-limit penalty.
  // Throws std::logic_error after the episode is done.
  const Turn& submit(const std::string& output);

 private:
  Environment& env_;
  EpisodeConfig config_;
  Transcript transcript_;
  std::string prompt_;
  bool done_ = false;
};

using TurnHook = std::function<void(std::size_t t, const PolicyOutput& output, const Turn& turn)>;

// Resets `env` with config.seed, then alternates policy and verifier until
// the environment finishes or max_steps turns were taken.
Transcript run_episode(Environment& env, Policy& policy, const EpisodeConfig& config, const TurnHook& hook = {});

// Every stored prompt hash matches the reconstructed prompt.
bool verify_hashes(const Transcript& transcript);

// Line-delimited log: one record per system prompt, model output and
// verifier message.
void write_log(std::ostream& out, const Transcript& transcript, std::size_t episode);
std::vector<Transcript> read_log(std::istream& in);

}  // namespace genprobe::revision
