#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace genprobe {

enum class EnvKind { GeneralPoints, Navigation };

std::string_view to_string(EnvKind kind);
EnvKind env_kind_from_string(std::string_view name);

enum class EpisodeStatus { Running, Success, StepLimit, Failure };

std::string_view to_string(EpisodeStatus status);

// Result of feeding one model output to the verifier.
struct StepOutcome {
  double reward = 0.0;
  // Extra terminal reward applied when the verification budget runs out.
  double penalty = 0.0;
  std::string verifier;
  bool done = false;
  // The attempt matched the expert (navigation) or solved the task (cards).
  bool correct = false;
  EpisodeStatus status = EpisodeStatus::Running;
  // Verdict class name or action label, for logs.
  std::string label;
};

// A verifier-backed text environment: reset produces the system prompt,
// step consumes raw model text.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvKind kind() const = 0;
  virtual std::string reset(std::uint64_t seed) = 0;
  virtual StepOutcome step(std::string_view model_output) = 0;
  virtual bool done() const = 0;
  // Answer text the expert would give in the current state.
  virtual std::string expert_output() const = 0;
  // Upper bound on model turns in one episode.
  virtual int max_turns() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

}  // namespace genprobe
