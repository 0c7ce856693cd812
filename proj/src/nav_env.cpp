#include "genprobe/nav_env.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "genprobe/lenient_json.hpp"
#include "genprobe/rng.hpp"

namespace genprobe::nav {

namespace {

constexpr std::array<std::string_view, 8> kHeadingNames{"north", "northeast", "east", "southeast",
                                                        "south", "southwest", "west", "northwest"};
constexpr std::array<std::string_view, 8> kBuckets{"front",       "right front", "right", "right behind",
                                                   "behind",      "left behind", "left",  "left front"};
constexpr std::array<Point, 8> kSteps{{{0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}}};

std::string trim_lower(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) out += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
  return out;
}

Point step_from(Point p, Heading h) {
  const Point d = kSteps[static_cast<int>(h)];
  return {p.x + d.x, p.y + d.y};
}

// Relative turns realizing a heading change of `delta` eighths.
std::vector<int> relative_decomposition(int delta) {
  switch (((delta % 8) + 8) % 8) {
    case 1: return {1};
    case 2: return {2};
    case 3: return {2, 1};
    case 4: return {2, 2};
    case 5: return {-2, -1};
    case 6: return {-2};
    case 7: return {-1};
    default: return {};
  }
}

const Landmark* find_landmark(const Route& route, const std::string& name) {
  for (const auto& l : route.landmarks) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

}  // namespace

std::string_view heading_name(Heading h) { return kHeadingNames[static_cast<int>(h)]; }

std::optional<Heading> heading_from_name(std::string_view name) {
  for (int i = 0; i < 8; ++i) {
    if (kHeadingNames[i] == name) return static_cast<Heading>(i);
  }
  return std::nullopt;
}

Heading rotate(Heading h, int eighths) { return static_cast<Heading>(((static_cast<int>(h) + eighths) % 8 + 8) % 8); }

int heading_delta(Heading from, Heading to) { return ((static_cast<int>(to) - static_cast<int>(from)) % 8 + 8) % 8; }

std::string_view relative_bucket(Heading heading, Heading bearing) { return kBuckets[heading_delta(heading, bearing)]; }

std::string_view turn_word(int eighths) {
  switch (((eighths % 8) + 8) % 8) {
    case 1: return "slightly right";
    case 2: return "right";
    case 3: return "sharply right";
    case 4: return "around";
    case 5: return "sharply left";
    case 6: return "left";
    case 7: return "slightly left";
    default: return "straight";
  }
}

std::string NavAction::str() const {
  switch (kind) {
    case Kind::Forward: return "forward()";
    case Kind::Stop: return "stop()";
    case Kind::Turn:
      if (space == ActionSpace::Absolute) return "turn_direction(" + std::string(kHeadingNames[turn]) + ")";
      return "turn_direction(" + std::string(turn_word(turn)) + ")";
  }
  return {};
}

bool NavAction::operator==(const NavAction& other) const {
  if (kind != other.kind) return false;
  if (kind != Kind::Turn) return true;
  return space == other.space && turn == other.turn;
}

std::optional<NavAction> parse_action(std::string_view text, ActionSpace space) {
  std::string s = trim_lower(text);
  if (s == "forward()") return NavAction::forward();
  if (s == "stop()") return NavAction::stop();
  const std::string prefix = "turn_direction(";
  if (s.rfind(prefix, 0) != 0 || s.back() != ')') return std::nullopt;
  std::string arg = trim_lower(std::string_view(s).substr(prefix.size(), s.size() - prefix.size() - 1));
  if (arg.size() >= 2 && (arg.front() == '\'' || arg.front() == '"') && arg.back() == arg.front()) {
    arg = arg.substr(1, arg.size() - 2);
  }
  if (space == ActionSpace::Absolute) {
    if (const auto h = heading_from_name(arg)) return NavAction::turn_to(*h);
    return std::nullopt;
  }
  for (int d : {-2, -1, 1, 2}) {
    if (arg == turn_word(d)) return NavAction::turn_by(d);
  }
  return std::nullopt;
}

std::vector<NavAction> action_set(ActionSpace space) {
  std::vector<NavAction> out{NavAction::forward(), NavAction::stop()};
  if (space == ActionSpace::Absolute) {
    for (int h = 0; h < 8; ++h) out.push_back(NavAction::turn_to(static_cast<Heading>(h)));
  } else {
    for (int d : {-2, 2, -1, 1}) out.push_back(NavAction::turn_by(d));
  }
  return out;
}

bool Route::is_intersection(int waypoint) const {
  return waypoint > 0 &&
         std::any_of(turns.begin(), turns.end(), [&](const TurningPoint& t) { return t.waypoint == waypoint; });
}

std::vector<NavAction> compute_expert(const Route& route) {
  std::vector<NavAction> out;
  Heading heading = route.start_heading;
  const int last = static_cast<int>(route.waypoints.size()) - 1;
  for (std::size_t i = 0; i < route.turns.size(); ++i) {
    const auto& turn = route.turns[i];
    if (turn.heading != heading) out.push_back(NavAction::turn_to(turn.heading));
    heading = turn.heading;
    const int end = i + 1 < route.turns.size() ? route.turns[i + 1].waypoint : last;
    for (int w = turn.waypoint; w < end; ++w) out.push_back(NavAction::forward());
  }
  out.push_back(NavAction::stop());
  return out;
}

std::vector<NavAction> expert_in_space(const Route& route, ActionSpace space) {
  if (space == ActionSpace::Absolute) return route.expert;
  std::vector<NavAction> out;
  Heading heading = route.start_heading;
  for (const auto& a : route.expert) {
    if (a.kind != NavAction::Kind::Turn) {
      out.push_back(a);
      continue;
    }
    const Heading target = static_cast<Heading>(a.turn);
    for (int d : relative_decomposition(heading_delta(heading, target))) out.push_back(NavAction::turn_by(d));
    heading = target;
  }
  return out;
}

std::vector<std::string> render_instructions(const Route& route) {
  std::vector<std::string> out;
  Heading heading = route.start_heading;
  for (std::size_t i = 0; i < route.turns.size(); ++i) {
    const auto& turn = route.turns[i];
    const std::string word(turn_word(heading_delta(heading, turn.heading)));
    const std::string face(heading_name(turn.heading));
    out.push_back(i == 0 ? "First, turn " + word + " to face " + face + "." : "Turn " + word + " to face " + face + ".");
    heading = turn.heading;
    if (i + 1 < route.turns.size()) {
      const int at = route.turns[i + 1].waypoint;
      std::string move = "Move forward until you reach the next intersection";
      for (const auto& l : route.landmarks) {
        if (l.anchor == at) {
          move += " where " + l.name + " is on your " + std::string(relative_bucket(heading, l.bearing));
          break;
        }
      }
      out.push_back(move + ".");
    } else {
      const Landmark* dest = find_landmark(route, route.destination);
      std::string move = "Move forward until the destination " + route.destination;
      if (dest) move += " is on your " + std::string(relative_bucket(heading, dest->bearing));
      out.push_back(move + ".");
    }
  }
  return out;
}

void validate(const Route& route) {
  auto fail = [](const std::string& what) { throw InvariantError(what); };
  if (route.max_straight < 1) fail("max_straight_road_length: must be >= 1");
  if (route.waypoints.size() < 2) fail("waypoints: need at least a start and a destination");
  if (route.turns.empty() || route.turns[0].waypoint != 0) fail("turning_points: first turn must be at waypoint 0");
  const int last = static_cast<int>(route.waypoints.size()) - 1;
  Heading heading = route.start_heading;
  for (std::size_t i = 0; i < route.turns.size(); ++i) {
    const auto& turn = route.turns[i];
    if (turn.heading == heading) fail("turning_points[" + std::to_string(i) + "]: heading does not change");
    const int end = i + 1 < route.turns.size() ? route.turns[i + 1].waypoint : last;
    if (end <= turn.waypoint) fail("turning_points: waypoints must be strictly increasing and before the destination");
    if (end - turn.waypoint > route.max_straight) {
      fail("straight segment " + std::to_string(i) + " has length " + std::to_string(end - turn.waypoint) +
           " exceeding max_straight_road_length " + std::to_string(route.max_straight));
    }
    for (int w = turn.waypoint; w < end; ++w) {
      if (step_from(route.waypoints[w], turn.heading) != route.waypoints[w + 1]) {
        fail("waypoints[" + std::to_string(w + 1) + "]: not one step along the segment heading");
      }
    }
    heading = turn.heading;
  }
  std::set<std::string> names;
  for (const auto& l : route.landmarks) {
    if (l.anchor < 0 || l.anchor > last) fail("landmarks: anchor out of range for " + l.name);
    if (!names.insert(l.name).second) fail("landmarks: duplicate name " + l.name);
  }
  const Landmark* dest = find_landmark(route, route.destination);
  if (!dest) fail("destination: no landmark named " + route.destination);
  if (dest->anchor != last) fail("destination: landmark must be anchored at the final waypoint");
  if (route.expert != compute_expert(route)) fail("expert_trajectory: does not replay the route geometry");
  if (route.instructions != render_instructions(route)) fail("instructions: do not describe the route");
}

const std::vector<std::string>& default_landmark_pool() {
  static const std::vector<std::string> pool{
      "Hotel 32One",        "Dragon Gate Chinatown SF", "Café de la Presse", "The Dutch",
      "Lola Taverna",       "Shuka",                    "Union Bakery",      "Grand Central Deli",
      "Pier 17 Books",      "Bluebird Pharmacy",        "Hudson Yard Gym",   "Orchard Street Cafe",
      "Liberty Hardware",   "Harbor View Hotel",        "Mercer Ramen",      "Canal Street Market",
      "Bowery Ballroom",    "Saint Mark Bistro",        "Delancey Diner",    "Elm Tree Laundromat",
      "Juniper Florist",    "Riverside Library",        "Maple Leaf Bank",   "Corner Taqueria",
      "Atlas Bike Shop",    "Nolita Noodle Bar",        "Chelsea Print Co",  "Battery Park Kiosk"};
  return pool;
}

const std::vector<std::string>& heldout_landmark_pool() {
  static const std::vector<std::string> pool{
      "Duomo Gelateria",    "Connaught Chai House", "Recoleta Parrilla",  "Camden Lock Books",
      "Mong Kok Dim Sum",   "Flinders Espresso",    "Lekki Suya Spot",    "Navigli Enoteca",
      "Palermo Bookshop",   "Shoreditch Bagels",    "Kowloon Tailors",    "Fitzroy Vinyl",
      "Ikoyi Art Gallery",  "Brera Pharmacy",       "Hauz Khas Studio",   "San Telmo Antiques",
      "Soho Tea Rooms",     "Central Pier Market",  "Carlton Bakery",     "Victoria Island Hotel"};
  return pool;
}

Route generate_route(std::uint64_t seed, const RouteGenConfig& config) {
  if (config.turning_points < 0) throw std::invalid_argument("turning_points: must be >= 0");
  if (config.max_straight < 1) throw std::invalid_argument("max_straight: must be >= 1");
  const auto& pool = config.landmark_pool.empty() ? default_landmark_pool() : config.landmark_pool;
  if (static_cast<int>(pool.size()) < config.turning_points + 1) {
    throw std::invalid_argument("landmark_pool: needs at least turning_points + 1 names");
  }
  Rng rng(seed);
  constexpr std::array<int, 4> kTurns{-2, -1, 1, 2};
  std::vector<std::string> names = pool;
  for (std::size_t i = 0; i < names.size(); ++i) std::swap(names[i], names[i + rng.below(names.size() - i)]);
  std::size_t next_name = 0;

  Route route;
  route.max_straight = config.max_straight;
  route.start_heading = static_cast<Heading>(rng.below(8));
  route.waypoints.push_back({0, 0});
  Heading heading = route.start_heading;
  for (int i = 0; i <= config.turning_points; ++i) {
    heading = rotate(heading, kTurns[rng.below(kTurns.size())]);
    const int at = static_cast<int>(route.waypoints.size()) - 1;
    route.turns.push_back({at, heading});
    if (i > 0 && rng.uniform() < config.intersection_landmark_prob) {
      route.landmarks.push_back({names[next_name++], at, static_cast<Heading>(rng.below(8))});
    }
    const auto length = rng.between(1, config.max_straight);
    for (int k = 0; k < length; ++k) route.waypoints.push_back(step_from(route.waypoints.back(), heading));
  }
  route.destination = names[next_name++];
  route.landmarks.push_back(
      {route.destination, static_cast<int>(route.waypoints.size()) - 1, static_cast<Heading>(rng.below(8))});
  route.expert = compute_expert(route);
  route.instructions = render_instructions(route);
  return route;
}

std::string route_to_json(const Route& route) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["max_straight_road_length"] = route.max_straight;
  j["start_heading"] = heading_name(route.start_heading);
  j["waypoints"] = nlohmann::ordered_json::array();
  for (const auto& p : route.waypoints) j["waypoints"].push_back({p.x, p.y});
  j["turning_points"] = nlohmann::ordered_json::array();
  for (const auto& t : route.turns) {
    j["turning_points"].push_back({{"waypoint", t.waypoint}, {"heading", heading_name(t.heading)}});
  }
  j["landmarks"] = nlohmann::ordered_json::array();
  for (const auto& l : route.landmarks) {
    j["landmarks"].push_back({{"name", l.name}, {"anchor", l.anchor}, {"bearing", heading_name(l.bearing)}});
  }
  j["destination"] = route.destination;
  j["instructions"] = route.instructions;
  j["expert_trajectory"] = nlohmann::ordered_json::array();
  for (const auto& a : route.expert) j["expert_trajectory"].push_back(a.str());
  return j.dump(2);
}

namespace {

using Json = nlohmann::json;

const Json& require(const Json& obj, const std::string& key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "." + key + ": missing");
  return *it;
}

int require_int(const Json& v, const std::string& path) {
  if (!v.is_number_integer()) throw SchemaError(path + ": expected integer");
  return v.get<int>();
}

std::string require_string(const Json& v, const std::string& path) {
  if (!v.is_string()) throw SchemaError(path + ": expected string");
  return v.get<std::string>();
}

Heading require_heading(const Json& v, const std::string& path) {
  const auto h = heading_from_name(require_string(v, path));
  if (!h) throw SchemaError(path + ": unknown heading");
  return *h;
}

const Json& require_array(const Json& v, const std::string& path) {
  if (!v.is_array()) throw SchemaError(path + ": expected array");
  return v;
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& path) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw SchemaError(path + "." + key + ": unknown field");
    }
  }
}

}  // namespace

Route route_from_json(std::string_view text) {
  const Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw SchemaError("$: not valid json (truncated or corrupt file)");
  if (!j.is_object()) throw SchemaError("$: expected object");
  reject_unknown(j,
                 {"version", "max_straight_road_length", "start_heading", "waypoints", "turning_points", "landmarks",
                  "destination", "instructions", "expert_trajectory"},
                 "$");
  if (require_int(require(j, "version", "$"), "$.version") != 1) throw SchemaError("$.version: unsupported");
  Route route;
  route.max_straight = require_int(require(j, "max_straight_road_length", "$"), "$.max_straight_road_length");
  route.start_heading = require_heading(require(j, "start_heading", "$"), "$.start_heading");
  const auto& wps = require_array(require(j, "waypoints", "$"), "$.waypoints");
  for (std::size_t i = 0; i < wps.size(); ++i) {
    const std::string path = "$.waypoints[" + std::to_string(i) + "]";
    if (!wps[i].is_array() || wps[i].size() != 2) throw SchemaError(path + ": expected [x, y]");
    route.waypoints.push_back({require_int(wps[i][0], path + "[0]"), require_int(wps[i][1], path + "[1]")});
  }
  const auto& turns = require_array(require(j, "turning_points", "$"), "$.turning_points");
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const std::string path = "$.turning_points[" + std::to_string(i) + "]";
    if (!turns[i].is_object()) throw SchemaError(path + ": expected object");
    reject_unknown(turns[i], {"waypoint", "heading"}, path);
    route.turns.push_back({require_int(require(turns[i], "waypoint", path), path + ".waypoint"),
                           require_heading(require(turns[i], "heading", path), path + ".heading")});
  }
  const auto& marks = require_array(require(j, "landmarks", "$"), "$.landmarks");
  for (std::size_t i = 0; i < marks.size(); ++i) {
    const std::string path = "$.landmarks[" + std::to_string(i) + "]";
    if (!marks[i].is_object()) throw SchemaError(path + ": expected object");
    reject_unknown(marks[i], {"name", "anchor", "bearing"}, path);
    route.landmarks.push_back({require_string(require(marks[i], "name", path), path + ".name"),
                               require_int(require(marks[i], "anchor", path), path + ".anchor"),
                               require_heading(require(marks[i], "bearing", path), path + ".bearing")});
  }
  route.destination = require_string(require(j, "destination", "$"), "$.destination");
  const auto& instr = require_array(require(j, "instructions", "$"), "$.instructions");
  for (std::size_t i = 0; i < instr.size(); ++i) {
    route.instructions.push_back(require_string(instr[i], "$.instructions[" + std::to_string(i) + "]"));
  }
  const auto& traj = require_array(require(j, "expert_trajectory", "$"), "$.expert_trajectory");
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const std::string path = "$.expert_trajectory[" + std::to_string(i) + "]";
    const auto action = parse_action(require_string(traj[i], path), ActionSpace::Absolute);
    if (!action) throw SchemaError(path + ": not an absolute-space action");
    route.expert.push_back(*action);
  }
  validate(route);
  return route;
}

void save_route(const Route& route, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << route_to_json(route) << "\n";
}

Route load_route(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return route_from_json(ss.str());
}

void NavConfig::validate() const {
  if (max_verify < 1) throw std::invalid_argument("max_verify: must be >= 1");
  if (generator.max_straight < 1) throw std::invalid_argument("max_straight: must be >= 1");
  if (generator.turning_points < 0) throw std::invalid_argument("turning_points: must be >= 0");
}

std::string observe(const NavState& state, const Route& route, PromptVariant variant) {
  std::vector<std::string> parts;
  bool any_landmark = false;
  for (const auto& l : route.landmarks) {
    if (l.anchor != state.position) continue;
    any_landmark = true;
    if (variant == PromptVariant::Language) {
      parts.push_back(l.name + " is on your " + std::string(relative_bucket(state.heading, l.bearing)));
    }
  }
  if (!any_landmark) {
    parts.push_back("No landmarks nearby");
  } else if (variant == PromptVariant::VisionLanguage) {
    parts.push_back("You observe an image of 4 views");
  }
  if (route.is_intersection(state.position)) parts.push_back("You observe an intersection");
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "; " : "") + parts[i];
  return out;
}

NavAction expert_action(const NavState& state, const Route& route) {
  const auto trajectory = expert_in_space(route, state.space);
  return trajectory.at(static_cast<std::size_t>(state.expert_index));
}

std::string observation_line(int index, const std::string& observation) {
  const bool ends_with_intersection =
      observation.size() >= 27 && observation.compare(observation.size() - 27, 27, "You observe an intersection") == 0;
  return "O_" + std::to_string(index) + ": " + observation + (ends_with_intersection ? "" : ";");
}

std::string render_system_prompt(const Route& route, ActionSpace space, PromptVariant variant,
                                 const std::vector<HistoryEntry>& history, const std::string& current_observation) {
  std::ostringstream os;
  os << "[Task Description]\n";
  if (variant == PromptVariant::Language) {
    os << "You are an expert in navgation. You will receive a sequence of instructions to follow. You are also "
          "provided with your observation and action histroy in text. Your goal is to first analyze the instruction "
          "and identify the next sentence to be executed. Then, you need to provide the action to be taken based on "
          "the current observation and instruction.\n\n";
  } else {
    os << "You are an expert in navigation. You will receive a sequence of instructions to follow while observing "
          "your surrounding street views. You are also provided with your observation and action history in text. "
          "your goal is to take the action based on the current observation and instruction.\n\n";
  }
  os << "[Instruction]\n";
  for (std::size_t i = 0; i < route.instructions.size(); ++i) os << i + 1 << ". " << route.instructions[i] << "\n";
  os << "\n";
  if (variant == PromptVariant::VisionLanguage) {
    os << "[Current observation]\n"
       << "You observe a 2x2 grid of street view images with the following headings:\n"
       << "[front, right\n back, left]\n"
       << "You need to identify if any of the landmarks in the instruction are visible in the street view grid.\n\n";
  }
  os << "[Action space]\n"
     << "- \"forward()\": indicates moving forward for 1 step;\n"
     << "- \"turn_direction(x)\": indicates turn direction to the target heading, where x∈[";
  if (space == ActionSpace::Absolute) {
    os << "'north', 'northeast', 'east', 'southeast', 'south', 'southwest', 'west', 'northwest'";
  } else {
    os << "'left', 'right', 'slightly left', 'slightly right'";
  }
  os << "];\n"
     << "- \"stop()\": indicates the navigation is finished;\n\n"
     << "[Observations and actions sequence]\n";
  int index = 1;
  for (const auto& h : history) {
    os << observation_line(index, h.observation) << "\n"
       << "A_" << index << ": " << h.action << "\n";
    ++index;
  }
  os << observation_line(index, current_observation) << "\n"
     << "A_" << index << ":\n\n"
     << "[Output]\n"
     << "Your response should be a valid json file in the following format:\n"
     << "{\n"
     << "  \"current observation\": latest observation from the street view grid,\n"
     << "  \"current instruction\": analyze the full instruction and identify the sentence to be executed,\n"
     << "  \"action\": the action to be taken chosen from the action space,\n"
     << "}";
  return os.str();
}

std::string render_answer(const std::string& observation, const std::string& instruction, const std::string& action) {
  nlohmann::json quote = observation;
  nlohmann::json quote_instr = instruction;
  nlohmann::json quote_action = action;
  std::ostringstream os;
  os << "{\n"
     << "  \"current observation\": " << quote.dump() << ",\n"
     << "  \"current instruction\": " << quote_instr.dump() << ",\n"
     << "  \"action\": " << quote_action.dump() << ",\n"
     << "}";
  return os.str();
}

NavEnv::NavEnv(NavConfig config) : config_(std::move(config)) { config_.validate(); }

NavEnv::NavEnv(NavConfig config, std::vector<Route> routes) : config_(std::move(config)), routes_(std::move(routes)) {
  config_.validate();
  for (const auto& r : routes_) validate(r);
}

std::string NavEnv::reset(std::uint64_t seed) {
  if (routes_.empty()) return reset_to(generate_route(seed, config_.generator));
  Rng rng(seed);
  return reset_to(routes_[rng.below(routes_.size())]);
}

std::string NavEnv::reset_to(Route route) {
  validate(route);
  route_ = std::move(route);
  state_ = NavState{};
  state_.heading = route_.start_heading;
  state_.space = config_.space;
  expert_ = expert_in_space(route_, config_.space);
  observations_.assign(1, observe(state_, route_, config_.variant));
  taken_.clear();
  return render_system_prompt(route_, config_.space, config_.variant, {}, observations_.back());
}

int NavEnv::max_turns() const {
  // Longest relative-space trajectory the generator can emit: each segment
  // needs at most two turns plus its forwards, then one stop.
  std::size_t longest =
      static_cast<std::size_t>((config_.generator.turning_points + 1) * (2 + config_.generator.max_straight) + 1);
  for (const auto& r : routes_) longest = std::max(longest, expert_in_space(r, config_.space).size());
  longest = std::max(longest, expert_.size());
  // Each expert decision may consume the full verification budget.
  return static_cast<int>(longest) * config_.max_verify;
}

NavAction NavEnv::expert_action() const { return expert_.at(static_cast<std::size_t>(state_.expert_index)); }

std::string first_person(std::string observation) {
  for (auto [from, to] : {std::pair<std::string, std::string>{"on your", "on my"}, {"You observe", "I observe"}}) {
    for (std::size_t pos = observation.find(from); pos != std::string::npos; pos = observation.find(from, pos)) {
      observation.replace(pos, from.size(), to);
      pos += to.size();
    }
  }
  return observation;
}

std::string NavEnv::expert_output() const {
  const std::string observation = first_person(observe(state_, route_, PromptVariant::Language));
  const auto& instruction = route_.instructions.at(static_cast<std::size_t>(state_.instruction));
  return render_answer(observation, instruction, expert_action().str());
}

bool NavEnv::detection_matches(const std::string& reported) const {
  std::set<std::string> visible;
  std::set<std::string> mentioned;
  for (const auto& l : route_.landmarks) {
    if (l.anchor == state_.position) visible.insert(l.name);
    if (reported.find(l.name) != std::string::npos) mentioned.insert(l.name);
  }
  return visible == mentioned;
}

void NavEnv::apply(const NavAction& action) {
  const auto& turns = route_.turns;
  // Segment currently being executed: last turn at or before the position.
  std::size_t segment = 0;
  while (segment + 1 < turns.size() && turns[segment + 1].waypoint <= state_.position) ++segment;
  switch (action.kind) {
    case NavAction::Kind::Forward:
      ++state_.position;
      if (route_.is_intersection(state_.position)) state_.instruction = 2 * static_cast<int>(segment + 1);
      break;
    case NavAction::Kind::Turn:
      state_.heading = action.space == ActionSpace::Absolute ? static_cast<Heading>(action.turn)
                                                             : rotate(state_.heading, action.turn);
      if (state_.heading == turns[segment].heading) state_.instruction = 2 * static_cast<int>(segment) + 1;
      break;
    case NavAction::Kind::Stop:
      state_.done = true;
      state_.success = true;
      break;
  }
  ++state_.expert_index;
  state_.verification_count = 0;
}

StepOutcome NavEnv::step(std::string_view model_output) {
  if (state_.done) throw std::logic_error("step on a finished episode");
  StepOutcome out;
  const auto json = parse_model_json(model_output);
  std::optional<NavAction> action;
  std::string reported_observation;
  if (json) {
    if (const auto it = json->find("action"); it != json->end() && it->is_string()) {
      action = parse_action(it->get<std::string>(), config_.space);
    }
    if (const auto it = json->find("current observation"); it != json->end() && it->is_string()) {
      reported_observation = it->get<std::string>();
    }
  }
  const NavAction expected = expert_action();
  out.label = action ? action->str() : "unparseable";
  if (config_.detection_channel && !detection_matches(reported_observation)) out.reward += kDetectionPenalty;

  if (action && *action == expected) {
    out.reward += kCorrectReward;
    out.correct = true;
    taken_.push_back(*action);
    apply(*action);
    if (state_.done) {
      out.verifier = kCorrectVerifierText;
      out.done = true;
      out.status = EpisodeStatus::Success;
    } else {
      observations_.push_back(observe(state_, route_, config_.variant));
      const int index = static_cast<int>(observations_.size());
      out.verifier = std::string(kCorrectVerifierText) + "\n" + observation_line(index, observations_.back()) +
                     "\nA_" + std::to_string(index) + ":";
    }
    return out;
  }
  out.reward += kWrongReward;
  out.verifier = kWrongVerifierText;
  ++state_.verification_count;
  if (state_.verification_count >= config_.max_verify) {
    out.done = true;
    out.penalty = kStepLimitReward;
    out.status = EpisodeStatus::Failure;
    state_.done = true;
  }
  return out;
}

NavView NavEnv::view() const {
  NavView v;
  v.instructions = route_.instructions;
  v.space = config_.space;
  v.observations = observations_;
  v.taken = taken_;
  v.retry = state_.verification_count;
  for (const auto& l : route_.landmarks) v.landmark_names.push_back(l.name);
  return v;
}

}  // namespace genprobe::nav
