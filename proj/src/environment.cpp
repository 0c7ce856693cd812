#include "genprobe/environment.hpp"

#include <stdexcept>
#include <string>

namespace genprobe {

std::string_view to_string(EnvKind kind) {
  return kind == EnvKind::GeneralPoints ? "gp" : "nav";
}

EnvKind env_kind_from_string(std::string_view name) {
  if (name == "gp" || name == "generalpoints") return EnvKind::GeneralPoints;
  if (name == "nav" || name == "virl") return EnvKind::Navigation;
  throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

std::string_view to_string(EpisodeStatus status) {
  switch (status) {
    case EpisodeStatus::Running: return "running";
    case EpisodeStatus::Success: return "success";
    case EpisodeStatus::StepLimit: return "step-limit";
    case EpisodeStatus::Failure: return "failure";
  }
  return "unknown";
}

}  // namespace genprobe
