#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "../support/fixtures.hpp"
#include "../support/golden.hpp"
#include "genprobe/nav_env.hpp"
#include "genprobe/rng.hpp"

using namespace genprobe;
using namespace genprobe::nav;

using fixtures::sample_route;

namespace {

std::string answer(const std::string& action, const std::string& observation = "") {
  return render_answer(observation, "", action);
}

// Independent replay: walk the absolute trajectory over the waypoint list.
bool replays_to_destination(const Route& r) {
  static const Point steps[8] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}};
  int h = static_cast<int>(r.start_heading);
  Point p = r.waypoints.front();
  std::size_t w = 0;
  for (std::size_t i = 0; i < r.expert.size(); ++i) {
    const auto& a = r.expert[i];
    if (a.kind == NavAction::Kind::Turn) {
      h = a.turn;
    } else if (a.kind == NavAction::Kind::Forward) {
      p = {p.x + steps[h].x, p.y + steps[h].y};
      if (++w >= r.waypoints.size() || !(r.waypoints[w] == p)) return false;
    } else {
      return i + 1 == r.expert.size() && w + 1 == r.waypoints.size();
    }
  }
  return false;
}

}  // namespace

TEST_SUITE("nav_env") {

TEST_CASE("relative buckets") {
  CHECK(relative_bucket(Heading::N, Heading::N) == "front");
  CHECK(relative_bucket(Heading::N, Heading::E) == "right");
  CHECK(relative_bucket(Heading::E, Heading::SW) == "right behind");
  CHECK(relative_bucket(Heading::N, Heading::NE) == "right front");
  CHECK(relative_bucket(Heading::E, Heading::S) == "right");
  CHECK(relative_bucket(Heading::S, Heading::N) == "behind");
  CHECK(relative_bucket(Heading::W, Heading::S) == "left");
  for (int h = 0; h < 8; ++h) {
    std::set<std::string_view> seen;
    for (int b = 0; b < 8; ++b) seen.insert(relative_bucket(static_cast<Heading>(h), static_cast<Heading>(b)));
    CHECK(seen.size() == 8u);
  }
}

TEST_CASE("sample route instructions") {
  const auto r = sample_route();
  REQUIRE(r.instructions.size() == 6u);
  CHECK(r.instructions[0] == "First, turn left to face east.");
  CHECK(r.instructions[1] == "Move forward until you reach the next intersection where Hotel 32One is on your right behind.");
  CHECK(r.instructions[2] == "Turn left to face north.");
  CHECK(r.instructions[3] ==
        "Move forward until you reach the next intersection where Dragon Gate Chinatown SF is on your right front.");
  CHECK(r.instructions[4] == "Turn right to face east.");
  CHECK(r.instructions[5] == "Move forward until the destination Café de la Presse is on your right.");
  CHECK_NOTHROW(validate(r));
}

TEST_CASE("golden prompts after three correct actions") {
  for (auto [variant, space, file] :
       {std::tuple{PromptVariant::Language, ActionSpace::Absolute, "nav_l_absolute.txt"},
        std::tuple{PromptVariant::VisionLanguage, ActionSpace::Absolute, "nav_vl_absolute.txt"},
        std::tuple{PromptVariant::Language, ActionSpace::Relative, "nav_l_relative.txt"}}) {
    NavConfig cfg;
    cfg.variant = variant;
    cfg.space = space;
    NavEnv env(cfg);
    env.reset_to(sample_route());
    std::vector<HistoryEntry> history;
    for (int i = 0; i < 3; ++i) {
      history.push_back({env.view().observations.back(), env.expert_action().str()});
      const auto out = env.step(answer(env.expert_action().str()));
      REQUIRE(out.correct);
    }
    const auto prompt =
        render_system_prompt(env.route(), cfg.space, variant, history, env.view().observations.back());
    CHECK(prompt == golden::load(file));
  }
}

TEST_CASE("initial prompt shows the first observation") {
  NavEnv env(NavConfig{});
  const auto prompt = env.reset_to(sample_route());
  CHECK(prompt.find("O_1: No landmarks nearby;\nA_1:\n\n[Output]") != std::string::npos);
}

TEST_CASE("relative prompt lists relative turns") {
  NavConfig cfg;
  cfg.space = ActionSpace::Relative;
  NavEnv env(cfg);
  const auto prompt = env.reset_to(sample_route());
  CHECK(prompt.find("x∈['left', 'right', 'slightly left', 'slightly right']") != std::string::npos);
}

TEST_CASE("expert trajectory of the sample route") {
  const auto r = sample_route();
  std::vector<std::string> got;
  for (const auto& a : r.expert) got.push_back(a.str());
  CHECK(got == std::vector<std::string>{"turn_direction(east)", "forward()", "forward()", "turn_direction(north)",
                                         "forward()", "turn_direction(east)", "forward()", "stop()"});
  std::vector<std::string> rel;
  for (const auto& a : expert_in_space(r, ActionSpace::Relative)) rel.push_back(a.str());
  CHECK(rel == std::vector<std::string>{"turn_direction(left)", "forward()", "forward()", "turn_direction(left)",
                                         "forward()", "turn_direction(right)", "forward()", "stop()"});
}

TEST_CASE("wide relative turns are decomposed") {
  Route r;
  r.max_straight = 2;
  r.start_heading = Heading::N;
  r.waypoints = {{0, 0}, {0, -1}, {1, 0}};
  r.turns = {{0, Heading::S}, {1, Heading::NE}};
  r.landmarks = {{"Shuka", 2, Heading::E}};
  r.destination = "Shuka";
  r.expert = compute_expert(r);
  r.instructions = render_instructions(r);
  REQUIRE_NOTHROW(validate(r));
  std::vector<std::string> rel;
  for (const auto& a : expert_in_space(r, ActionSpace::Relative)) rel.push_back(a.str());
  CHECK(rel == std::vector<std::string>{"turn_direction(right)", "turn_direction(right)", "forward()",
                                         "turn_direction(left)", "turn_direction(slightly left)", "forward()",
                                         "stop()"});
  CHECK(r.instructions[0] == "First, turn around to face south.");
  CHECK(r.instructions[2] == "Turn sharply left to face northeast.");
}

TEST_CASE("parse_action") {
  CHECK(parse_action(" Forward() ", ActionSpace::Absolute) == NavAction::forward());
  CHECK(parse_action("turn_direction('east')", ActionSpace::Absolute) == NavAction::turn_to(Heading::E));
  CHECK(parse_action("turn_direction(slightly left)", ActionSpace::Relative) == NavAction::turn_by(-1));
  CHECK_FALSE(parse_action("turn_direction(left)", ActionSpace::Absolute));
  CHECK_FALSE(parse_action("turn_direction(east)", ActionSpace::Relative));
  CHECK_FALSE(parse_action("jump()", ActionSpace::Absolute));
  CHECK(action_set(ActionSpace::Absolute).size() == 10u);
  CHECK(action_set(ActionSpace::Relative).size() == 6u);
  for (auto space : {ActionSpace::Absolute, ActionSpace::Relative}) {
    for (const auto& a : action_set(space)) CHECK(parse_action(a.str(), space) == a);
  }
}

TEST_CASE("expert replay succeeds with full reward") {
  for (auto space : {ActionSpace::Absolute, ActionSpace::Relative}) {
    NavConfig cfg;
    cfg.space = space;
    NavEnv env(cfg);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      env.reset(seed);
      double total = 0;
      int steps = 0;
      StepOutcome out;
      while (!env.done()) {
        out = env.step(env.expert_output());
        total += out.reward + out.penalty;
        ++steps;
        REQUIRE(out.correct);
      }
      CHECK(out.status == EpisodeStatus::Success);
      CHECK(env.state().success);
      CHECK(total == doctest::Approx(steps));
      CHECK(steps == static_cast<int>(expert_in_space(env.route(), space).size()));
    }
  }
}

TEST_CASE("verifier text carries the next observation") {
  NavEnv env(NavConfig{});
  env.reset_to(sample_route());
  auto out = env.step(answer("turn_direction(east)"));
  CHECK(out.verifier == "Correct solution.\nO_2: No landmarks nearby;\nA_2:");
  out = env.step(answer("forward()"));
  out = env.step(answer("forward()"));
  CHECK(out.verifier == "Correct solution.\nO_4: Hotel 32One is on your right behind; You observe an intersection\nA_4:");
}

TEST_CASE("wrong action retries at the same coordinate then fails") {
  NavEnv env(NavConfig{});
  env.reset_to(sample_route());
  auto out = env.step(answer("forward()"));
  CHECK(out.verifier == "Incorrect action.");
  CHECK(out.reward == -1.0);
  CHECK_FALSE(out.done);
  CHECK(env.state().position == 0);
  CHECK(env.state().heading == Heading::S);
  out = env.step(answer("turn_direction(east)"));
  CHECK(out.correct);
  out = env.step(answer("stop()"));
  CHECK_FALSE(out.done);
  out = env.step("not json at all");
  CHECK(out.done);
  CHECK(out.reward == -1.0);
  CHECK(out.penalty == -1.0);
  CHECK(out.status == EpisodeStatus::Failure);
  CHECK_THROWS(env.step(answer("forward()")));
}

TEST_CASE("detection channel") {
  NavConfig cfg;
  cfg.detection_channel = true;
  NavEnv env(cfg);
  env.reset_to(sample_route());
  auto out = env.step(answer("turn_direction(east)", "No landmarks nearby"));
  CHECK(out.reward == 1.0);
  out = env.step(answer("forward()", "Hotel 32One is on my left"));
  CHECK(out.reward == doctest::Approx(1.0 - 1.5));
  env.step(answer("forward()"));
  out = env.step(answer("turn_direction(north)", "Hotel 32One is on my right behind; I observe an intersection"));
  CHECK(out.reward == 1.0);
}

TEST_CASE("instruction pointer tracks the sentence being executed") {
  NavEnv env(NavConfig{});
  env.reset_to(sample_route());
  std::vector<int> seen{env.state().instruction};
  while (!env.done()) {
    env.step(env.expert_output());
    if (!env.done()) seen.push_back(env.state().instruction);
  }
  CHECK(seen == std::vector<int>{0, 1, 1, 2, 3, 4, 5, 5});
}

TEST_CASE("expert output names the current instruction") {
  NavEnv env(NavConfig{});
  env.reset_to(sample_route());
  env.step(answer("turn_direction(east)"));
  env.step(answer("forward()"));
  env.step(answer("forward()"));
  CHECK(env.expert_output() ==
        "{\n  \"current observation\": \"Hotel 32One is on my right behind; I observe an intersection\",\n"
        "  \"current instruction\": \"Turn left to face north.\",\n"
        "  \"action\": \"turn_direction(north)\",\n}");
}

TEST_CASE("generated routes satisfy invariants") {
  for (int k : {0, 1, 2, 4}) {
    for (int m : {1, 2, 5}) {
      RouteGenConfig g;
      g.turning_points = k;
      g.max_straight = m;
      for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto r = generate_route(seed, g);
        CHECK_NOTHROW(validate(r));
        CHECK(r.instructions.size() == static_cast<std::size_t>(2 * k + 2));
        CHECK(r.turns.size() == static_cast<std::size_t>(k + 1));
        CHECK(replays_to_destination(r));
        std::set<std::string> names;
        for (const auto& l : r.landmarks) names.insert(l.name);
        CHECK(names.size() == r.landmarks.size());
      }
    }
  }
  RouteGenConfig g;
  CHECK(route_to_json(generate_route(9, g)) == route_to_json(generate_route(9, g)));
}

TEST_CASE("route json round trip and schema errors") {
  const auto r = generate_route(4, RouteGenConfig{});
  const auto text = route_to_json(r);
  CHECK(route_to_json(route_from_json(text)) == text);

  const auto dir = std::filesystem::temp_directory_path() / "genprobe_nav_test";
  std::filesystem::create_directories(dir);
  save_route(r, dir / "r.json");
  CHECK(route_to_json(load_route(dir / "r.json")) == text);

  CHECK_THROWS_AS(route_from_json(text.substr(0, text.size() / 2)), SchemaError);
  auto with_extra = text;
  with_extra.insert(1, "\"bogus\": 1,");
  CHECK_THROWS_WITH_AS(route_from_json(with_extra), "$.bogus: unknown field", SchemaError);
  auto bad_heading = text;
  bad_heading.replace(bad_heading.find("\"start_heading\": \""), 18, "\"start_heading\": \"up");
  CHECK_THROWS_WITH_AS(route_from_json(bad_heading), doctest::Contains("$.start_heading"), SchemaError);
  CHECK_THROWS_AS(load_route(dir / "missing.json"), SchemaError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("invariant violations are named") {
  auto r = sample_route();
  r.max_straight = 1;
  CHECK_THROWS_WITH_AS(validate(r), doctest::Contains("max_straight_road_length"), InvariantError);
  r = sample_route();
  r.expert.pop_back();
  CHECK_THROWS_WITH_AS(validate(r), doctest::Contains("expert_trajectory"), InvariantError);
  r = sample_route();
  r.waypoints[1] = {5, 5};
  CHECK_THROWS_AS(validate(r), InvariantError);
  r = sample_route();
  r.destination = "Nowhere";
  CHECK_THROWS_WITH_AS(validate(r), doctest::Contains("destination"), InvariantError);
}

TEST_CASE("uniform random first action matches expert one time in six for relative turns") {
  // Relative space has 6 actions; the first expert action is always a turn.
  NavConfig cfg;
  cfg.space = ActionSpace::Relative;
  NavEnv env(cfg);
  Rng rng(17);
  const auto actions = action_set(ActionSpace::Relative);
  int hits = 0;
  const int n = 30000;
  for (int i = 0; i < n; ++i) {
    env.reset(static_cast<std::uint64_t>(i % 200));
    if (env.step(answer(actions[rng.below(actions.size())].str())).correct) ++hits;
  }
  const double p = static_cast<double>(hits) / n;
  CHECK(p == doctest::Approx(1.0 / 6).epsilon(0.06));
}

}
