#pragma once

// Instruction-following street navigation on an 8-way grid: routes,
// egocentric landmark observations, both action-space variants and the
// per-coordinate verification loop.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "genprobe/environment.hpp"

namespace genprobe::nav {

// Multiples of 45 degrees clockwise from north.
enum class Heading { N = 0, NE, E, SE, S, SW, W, NW };

std::string_view heading_name(Heading h);  // "north", "northeast", ...
std::optional<Heading> heading_from_name(std::string_view name);
Heading rotate(Heading h, int eighths);
// (to - from) in eighths, in [0, 8).
int heading_delta(Heading from, Heading to);

// Landmark position relative to the agent, in 45-degree buckets:
// front, right front, right, right behind, behind, left behind, left, left front.
std::string_view relative_bucket(Heading heading, Heading bearing);

// "left", "slightly right", ...: the word describing a turn of `eighths`.
std::string_view turn_word(int eighths);

enum class ActionSpace { Absolute, Relative };
enum class PromptVariant { Language, VisionLanguage };

struct NavAction {
  enum class Kind { Forward, Turn, Stop };

  Kind kind = Kind::Forward;
  ActionSpace space = ActionSpace::Absolute;
  // Absolute: target heading index 0..7. Relative: signed eighths in {-2,-1,1,2}.
  int turn = 0;

  static NavAction forward() { return {}; }
  static NavAction stop() { return {Kind::Stop, ActionSpace::Absolute, 0}; }
  static NavAction turn_to(Heading h) { return {Kind::Turn, ActionSpace::Absolute, static_cast<int>(h)}; }
  static NavAction turn_by(int eighths) { return {Kind::Turn, ActionSpace::Relative, eighths}; }

  std::string str() const;  // "forward()", "turn_direction(east)", "turn_direction(slightly left)"
  bool operator==(const NavAction& other) const;
};

// Parses an action string; rejects turn arguments outside the active space.
std::optional<NavAction> parse_action(std::string_view text, ActionSpace space);

// Every action available in a space, in a fixed order (forward, stop, turns).
std::vector<NavAction> action_set(ActionSpace space);

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct TurningPoint {
  int waypoint = 0;
  Heading heading = Heading::N;  // required heading after the turn
};

struct Landmark {
  std::string name;
  int anchor = 0;
  Heading bearing = Heading::N;  // world direction from the anchor waypoint
};

struct Route {
  std::vector<Point> waypoints;
  // turns[0] sits at waypoint 0 (the initial reorientation); the rest are intersections.
  std::vector<TurningPoint> turns;
  std::vector<Landmark> landmarks;
  Heading start_heading = Heading::N;
  std::string destination;
  std::vector<std::string> instructions;
  int max_straight = 1;
  std::vector<NavAction> expert;  // absolute-space trajectory

  bool is_intersection(int waypoint) const;
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Absolute expert trajectory implied by the geometry.
std::vector<NavAction> compute_expert(const Route& route);
// Same trajectory in the requested space. Relative turns beyond 90 degrees
// are split: 135 -> 90 + 45, 180 -> 90 + 90, always toward the shorter side
// (right for 180).
std::vector<NavAction> expert_in_space(const Route& route, ActionSpace space);
std::vector<std::string> render_instructions(const Route& route);
// Throws InvariantError naming the violated invariant.
void validate(const Route& route);

struct RouteGenConfig {
  int turning_points = 2;
  int max_straight = 3;
  std::vector<std::string> landmark_pool;  // empty: built-in pool
  double intersection_landmark_prob = 0.75;
};

const std::vector<std::string>& default_landmark_pool();
// Disjoint pool for visual-shift style evaluation.
const std::vector<std::string>& heldout_landmark_pool();

Route generate_route(std::uint64_t seed, const RouteGenConfig& config);

std::string route_to_json(const Route& route);
Route route_from_json(std::string_view text);
void save_route(const Route& route, const std::filesystem::path& file);
Route load_route(const std::filesystem::path& file);

struct NavState {
  int position = 0;
  Heading heading = Heading::N;
  int instruction = 0;
  ActionSpace space = ActionSpace::Absolute;
  int verification_count = 0;
  int expert_index = 0;
  bool done = false;
  bool success = false;
};

struct NavConfig {
  ActionSpace space = ActionSpace::Absolute;
  PromptVariant variant = PromptVariant::Language;
  bool detection_channel = false;
  int max_verify = 2;  // attempts per coordinate
  RouteGenConfig generator;

  void validate() const;
};

inline constexpr double kCorrectReward = 1.0;
inline constexpr double kWrongReward = -1.0;
inline constexpr double kStepLimitReward = -1.0;
inline constexpr double kDetectionPenalty = -1.5;
inline constexpr const char* kCorrectVerifierText = "Correct solution.";
inline constexpr const char* kWrongVerifierText = "Incorrect action.";

std::string observe(const NavState& state, const Route& route, PromptVariant variant = PromptVariant::Language);
NavAction expert_action(const NavState& state, const Route& route);

// "O_k: <observation>" line: observations without an intersection clause
// end with ';'.
std::string observation_line(int index, const std::string& observation);

struct HistoryEntry {
  std::string observation;
  std::string action;
};

std::string render_system_prompt(const Route& route, ActionSpace space, PromptVariant variant,
                                 const std::vector<HistoryEntry>& history, const std::string& current_observation);

// Observation as the agent reports it: "on my right", "I observe".
std::string first_person(std::string observation);

std::string render_answer(const std::string& observation, const std::string& instruction, const std::string& action);

// What a policy may see: public prompt content plus its own correct moves.
struct NavView {
  std::vector<std::string> instructions;
  ActionSpace space = ActionSpace::Absolute;
  std::vector<std::string> observations;  // one per decision point; back() is current
  std::vector<NavAction> taken;           // actions accepted so far
  int retry = 0;                          // failed attempts at the current point
  std::vector<std::string> landmark_names;
};

class NavEnv final : public Environment {
 public:
  explicit NavEnv(NavConfig config);
  // Episodes are drawn from a fixed route list instead of the generator.
  NavEnv(NavConfig config, std::vector<Route> routes);

  EnvKind kind() const override { return EnvKind::Navigation; }
  std::string reset(std::uint64_t seed) override;
  std::string reset_to(Route route);
  StepOutcome step(std::string_view model_output) override;
  bool done() const override { return state_.done; }
  std::string expert_output() const override;
  int max_turns() const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<NavEnv>(*this); }

  const NavState& state() const { return state_; }
  const Route& route() const { return route_; }
  const NavConfig& config() const { return config_; }
  NavView view() const;
  NavAction expert_action() const;

 private:
  void apply(const NavAction& action);
  bool detection_matches(const std::string& reported) const;

  NavConfig config_;
  std::vector<Route> routes_;
  Route route_;
  NavState state_;
  std::vector<NavAction> expert_;
  std::vector<std::string> observations_;
  std::vector<NavAction> taken_;
};

}  // namespace genprobe::nav
