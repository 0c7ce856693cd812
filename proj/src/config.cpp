#include "genprobe/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "genprobe/revision.hpp"

namespace genprobe::service {

namespace {

using Json = nlohmann::json;

// Reads fields of one object, remembering which keys were consumed.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const Json* raw(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const Json* v = raw(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const Json* v = raw(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->is_number_unsigned() || v->get<std::int64_t>() >= 0) {
          out = v->get<Int>();
          return;
        }
        fail(key, "expected a non-negative integer");
      } else {
        out = v->get<Int>();
      }
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const Json* v = raw(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const Json* v = raw(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }

  template <typename Enum>
  void choice(const std::string& key, Enum& out, std::initializer_list<std::pair<const char*, Enum>> options) {
    std::string name;
    string(key, name);
    if (name.empty() && !has(key)) return;
    for (const auto& [label, value] : options) {
      if (name == label) {
        out = value;
        return;
      }
    }
    std::string allowed;
    for (const auto& [label, _] : options) allowed += std::string(allowed.empty() ? "" : ", ") + label;
    fail(key, "expected one of " + allowed + ", got \"" + name + "\"");
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(path(key) + ": " + what);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path(key) + ": unknown key");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::initializer_list<std::pair<const char*, gp::FaceRule>> kFaceRules{{"all_ten", gp::FaceRule::AllTen},
                                                                              {"ordinal", gp::FaceRule::Ordinal}};
const std::initializer_list<std::pair<const char*, nav::ActionSpace>> kSpaces{
    {"absolute", nav::ActionSpace::Absolute}, {"relative", nav::ActionSpace::Relative}};

std::string face_rule_name(gp::FaceRule r) { return r == gp::FaceRule::AllTen ? "all_ten" : "ordinal"; }
std::string space_name(nav::ActionSpace s) { return s == nav::ActionSpace::Absolute ? "absolute" : "relative"; }

void read_gp(Section& s, gp::RuleConfig& g) {
  s.choice("face_rule", g.face_rule, kFaceRules);
  s.integer("target", g.target);
  s.choice("sampling", g.sampling,
           {{"uniform", gp::SamplingMode::Uniform}, {"at_least_one_face", gp::SamplingMode::AtLeastOneFace}});
  s.choice("colors", g.colors,
           {{"all", gp::ColorFilter::All}, {"black", gp::ColorFilter::Black}, {"red", gp::ColorFilter::Red}});
  s.integer("max_steps", g.max_steps);
  s.choice("variant", g.variant,
           {{"language", gp::PromptVariant::Language}, {"vision_language", gp::PromptVariant::VisionLanguage}});
  s.boolean("recognition_channel", g.recognition_channel);
  s.finish();
}

void read_nav(Section& s, NavSettings& n) {
  s.choice("action_space", n.env.space, kSpaces);
  s.choice("variant", n.env.variant,
           {{"language", nav::PromptVariant::Language}, {"vision_language", nav::PromptVariant::VisionLanguage}});
  s.boolean("detection_channel", n.env.detection_channel);
  s.integer("max_verify", n.env.max_verify);
  s.integer("turning_points", n.env.generator.turning_points);
  s.integer("max_straight", n.env.generator.max_straight);
  s.number("intersection_landmark_prob", n.env.generator.intersection_landmark_prob);
  s.choice("landmarks", n.pool, {{"default", LandmarkPool::Default}, {"heldout", LandmarkPool::Heldout}});
  s.string("routes_dir", n.routes_dir);
  s.finish();
}

void read_env_sections(Section& top, ExperimentConfig& c) {
  top.choice("env", c.env, {{"gp", EnvKind::GeneralPoints}, {"nav", EnvKind::Navigation}});
  if (const Json* g = top.raw("gp")) {
    Section s(*g, top.path("gp"));
    read_gp(s, c.gp);
  }
  if (const Json* n = top.raw("nav")) {
    Section s(*n, top.path("nav"));
    read_nav(s, c.nav);
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (version != 1) throw ConfigError("$.version: unsupported version " + std::to_string(version));
  auto wrap = [](const std::string& prefix, const auto& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(prefix + e.what());
    }
  };
  wrap("$.gp.", [&] { gp.validate(); });
  wrap("$.nav.", [&] { nav.env.validate(); });
  wrap("$.train.", [&] { train.validate(); });
  if (nav.env.generator.intersection_landmark_prob < 0.0 || nav.env.generator.intersection_landmark_prob > 1.0) {
    throw ConfigError("$.nav.intersection_landmark_prob: must be in [0, 1]");
  }
  if (run.sft_samples < 1) throw ConfigError("$.run.sft_samples: must be >= 1");
  if (run.eval_episodes < 1) throw ConfigError("$.run.eval_episodes: must be >= 1");
  if (run.eval_points < 1) throw ConfigError("$.run.eval_points: must be >= 1");
  if (ood_face_rule == gp.face_rule && env == EnvKind::GeneralPoints) {
    throw ConfigError("$.ood.face_rule: must differ from $.gp.face_rule");
  }
  if (ood_action_space == nav.env.space && env == EnvKind::Navigation) {
    throw ConfigError("$.ood.action_space: must differ from $.nav.action_space");
  }
}

int ExperimentConfig::viter() const { return env == EnvKind::GeneralPoints ? gp.max_steps : nav.env.max_verify; }

void ExperimentConfig::set_viter(int v) {
  if (v < 1) throw ConfigError("viter: must be a positive integer");
  gp.max_steps = v;
  nav.env.max_verify = v;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  Section top(j, "$");
  if (!top.has("version")) throw ConfigError("$.version: missing");
  top.integer("version", c.version);
  if (c.version != 1) throw ConfigError("$.version: unsupported version " + std::to_string(c.version));
  read_env_sections(top, c);
  if (const Json* o = top.raw("ood")) {
    Section s(*o, "$.ood");
    s.choice("face_rule", c.ood_face_rule, kFaceRules);
    s.choice("action_space", c.ood_action_space, kSpaces);
    s.finish();
  } else {
    c.ood_face_rule = c.gp.face_rule == gp::FaceRule::AllTen ? gp::FaceRule::Ordinal : gp::FaceRule::AllTen;
    c.ood_action_space =
        c.nav.env.space == nav::ActionSpace::Absolute ? nav::ActionSpace::Relative : nav::ActionSpace::Absolute;
  }
  if (const Json* t = top.raw("train")) {
    Section s(*t, "$.train");
    auto& tr = c.train;
    s.number("lr", tr.lr);
    s.number("sft_lr", tr.sft_lr);
    s.number("clip", tr.clip);
    s.number("gamma", tr.gamma);
    s.number("gae_lambda", tr.gae_lambda);
    s.integer("epochs", tr.epochs);
    s.integer("batch_size", tr.batch_size);
    s.number("entropy_coef", tr.entropy_coef);
    s.number("value_coef", tr.value_coef);
    s.number("max_grad_norm", tr.max_grad_norm);
    s.integer("sft_epochs", tr.sft_epochs);
    s.integer("rl_updates", tr.rl_updates);
    s.integer("hidden", tr.hidden);
    s.integer("seed", tr.seed);
    s.finish();
  }
  if (const Json* r = top.raw("run")) {
    Section s(*r, "$.run");
    s.integer("sft_samples", c.run.sft_samples);
    s.integer("eval_episodes", c.run.eval_episodes);
    s.integer("eval_points", c.run.eval_points);
    s.boolean("suit_features", c.run.suit_features);
    s.integer("eval_seed", c.run.eval_seed);
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["version"] = c.version;
  j["env"] = to_string(c.env);
  const auto& g = c.gp;
  j["gp"] = {{"face_rule", face_rule_name(g.face_rule)},
             {"target", g.target},
             {"sampling", g.sampling == gp::SamplingMode::Uniform ? "uniform" : "at_least_one_face"},
             {"colors", g.colors == gp::ColorFilter::All ? "all" : g.colors == gp::ColorFilter::Black ? "black" : "red"},
             {"max_steps", g.max_steps},
             {"variant", g.variant == gp::PromptVariant::Language ? "language" : "vision_language"},
             {"recognition_channel", g.recognition_channel}};
  const auto& n = c.nav;
  j["nav"] = {{"action_space", space_name(n.env.space)},
              {"variant", n.env.variant == nav::PromptVariant::Language ? "language" : "vision_language"},
              {"detection_channel", n.env.detection_channel},
              {"max_verify", n.env.max_verify},
              {"turning_points", n.env.generator.turning_points},
              {"max_straight", n.env.generator.max_straight},
              {"intersection_landmark_prob", n.env.generator.intersection_landmark_prob},
              {"landmarks", n.pool == LandmarkPool::Default ? "default" : "heldout"},
              {"routes_dir", n.routes_dir}};
  j["ood"] = {{"face_rule", face_rule_name(c.ood_face_rule)}, {"action_space", space_name(c.ood_action_space)}};
  const auto& t = c.train;
  j["train"] = {{"lr", t.lr},
                {"sft_lr", t.sft_lr},
                {"clip", t.clip},
                {"gamma", t.gamma},
                {"gae_lambda", t.gae_lambda},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"entropy_coef", t.entropy_coef},
                {"value_coef", t.value_coef},
                {"max_grad_norm", t.max_grad_norm},
                {"sft_epochs", t.sft_epochs},
                {"rl_updates", t.rl_updates},
                {"hidden", t.hidden},
                {"seed", t.seed}};
  j["run"] = {{"sft_samples", c.run.sft_samples},
              {"eval_episodes", c.run.eval_episodes},
              {"eval_points", c.run.eval_points},
              {"suit_features", c.run.suit_features},
              {"eval_seed", c.run.eval_seed}};
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto j = nlohmann::json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw ConfigError(file.string() + ": not valid json");
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& c) {
  std::ostringstream os;
  os << std::hex << revision::prompt_hash(config_to_json(c).dump());
  return os.str();
}

ExperimentConfig env_config_from_json(const nlohmann::json& j, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  Section top(j, "$.config");
  read_env_sections(top, c);
  top.finish();
  try {
    c.gp.validate();
    c.nav.env.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("$.config: ") + e.what());
  }
  return c;
}

std::unique_ptr<Environment> make_env(const ExperimentConfig& c, bool ood) {
  if (c.env == EnvKind::GeneralPoints) {
    gp::RuleConfig rule = c.gp;
    if (ood) rule.face_rule = c.ood_face_rule;
    return std::make_unique<gp::GpEnv>(rule);
  }
  nav::NavConfig cfg = c.nav.env;
  if (ood) cfg.space = c.ood_action_space;
  if (c.nav.pool == LandmarkPool::Heldout) cfg.generator.landmark_pool = nav::heldout_landmark_pool();
  if (c.nav.routes_dir.empty()) return std::make_unique<nav::NavEnv>(cfg);
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(c.nav.routes_dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("$.nav.routes_dir: no route files in " + c.nav.routes_dir);
  std::vector<nav::Route> routes;
  for (const auto& f : files) routes.push_back(nav::load_route(f));
  return std::make_unique<nav::NavEnv>(cfg, std::move(routes));
}

}  // namespace genprobe::service
