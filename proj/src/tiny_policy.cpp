#include "genprobe/tiny_policy.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace genprobe::policy {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using MatMap = Eigen::Map<MatrixXd>;
using CMatMap = Eigen::Map<const MatrixXd>;
using VecMap = Eigen::Map<VectorXd>;
using CVecMap = Eigen::Map<const VectorXd>;

constexpr int kRanks = 13;
constexpr int kVerdicts = 6;

// Softmax over entries with mask[i] != 0 (all when mask is empty).
// Masked probabilities are 0.
VectorXd masked_softmax(const VectorXd& z, const std::vector<char>& mask) {
  VectorXd p = VectorXd::Zero(z.size());
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (mask.empty() || mask[i]) hi = std::max(hi, z[i]);
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (mask.empty() || mask[i]) {
      p[i] = std::exp(z[i] - hi);
      sum += p[i];
    }
  }
  return p / sum;
}

double entropy_of(const VectorXd& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

// d/dz [alpha * log p[choice] + beta * H(p)].
VectorXd head_grad(const VectorXd& p, int choice, double alpha, double beta) {
  VectorXd g = VectorXd::Zero(p.size());
  if (alpha != 0.0) {
    g -= alpha * p;
    g[choice] += alpha;
  }
  if (beta != 0.0) {
    const double h = entropy_of(p);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p[i] > 0.0) g[i] -= beta * p[i] * (std::log(p[i]) + h);
    }
  }
  return g;
}

int sample_from(const VectorXd& p, Rng* rng) {
  if (!rng) {
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    return static_cast<int>(best);
  }
  const double u = rng->uniform();
  double acc = 0.0;
  int last = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

VectorXd number_input(const VectorXd& h, int rank_index, int rule, int hidden) {
  VectorXd in = VectorXd::Zero(hidden + kRanks + 2);
  in.head(hidden) = h;
  in[hidden + rank_index] = 1.0;
  in[hidden + kRanks + rule] = 1.0;
  return in;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

int turn_delta_from_word(std::string_view word) {
  for (int k = 0; k < 8; ++k) {
    if (nav::turn_word(k) == word) return k;
  }
  throw std::invalid_argument("unknown turn word: " + std::string(word));
}

// "... turn <word> to face <heading>." -> (delta, heading)
std::pair<int, nav::Heading> parse_turn_sentence(const std::string& sentence) {
  const auto face = sentence.find(" to face ");
  const auto turn = sentence.find("urn ");
  if (face == std::string::npos || turn == std::string::npos || sentence.back() != '.') {
    throw std::invalid_argument("not a turn instruction: " + sentence);
  }
  const auto word = sentence.substr(turn + 4, face - turn - 4);
  const auto name = sentence.substr(face + 9, sentence.size() - face - 10);
  const auto heading = nav::heading_from_name(name);
  if (!heading) throw std::invalid_argument("unknown heading in instruction: " + sentence);
  return {turn_delta_from_word(word), *heading};
}

std::string destination_name(const std::string& sentence) {
  const std::string lead = "Move forward until the destination ";
  if (sentence.rfind(lead, 0) != 0) throw std::invalid_argument("not a destination instruction: " + sentence);
  std::string rest = sentence.substr(lead.size());
  const auto on = rest.rfind(" is on your ");
  if (on != std::string::npos) return rest.substr(0, on);
  if (!rest.empty() && rest.back() == '.') rest.pop_back();
  return rest;
}

}  // namespace

int gp_feature_dim(const GpFeatureConfig& config) {
  return 2 + 4 * kRanks + (config.suit_features ? 4 * 2 : 0) + 1 + kVerdicts;
}

Eigen::VectorXd featurize_gp(const gp::GpState& state, const GpFeatureConfig& config) {
  VectorXd x = VectorXd::Zero(gp_feature_dim(config));
  int at = 0;
  x[at + (state.rule.face_rule == gp::FaceRule::AllTen ? 0 : 1)] = 1.0;
  at += 2;
  for (const auto& card : state.cards) {
    x[at + card.rank - 1] = 1.0;
    at += kRanks;
  }
  if (config.suit_features) {
    for (const auto& card : state.cards) {
      x[at + (card.color() == gp::CardColor::Black ? 0 : 1)] = 1.0;
      at += 2;
    }
  }
  x[at++] = state.t / 10.0;
  for (const auto cls : state.history) x[at + static_cast<int>(cls)] += 0.1;
  return x;
}

int nav_feature_dim() { return 2 + 8 + 8 + 8 + 7; }

namespace {

// Where the agent is along the instructions, replayed from its own moves.
struct NavProgress {
  std::vector<nav::Heading> targets;
  nav::Heading heading = nav::Heading::N;
  int segment = 0;
  std::string destination;
};

NavProgress replay_nav(const nav::NavView& view) {
  const auto& instr = view.instructions;
  if (instr.size() < 2 || instr.size() % 2 != 0) throw std::invalid_argument("navigation view: malformed instructions");
  const int segments = static_cast<int>(instr.size() / 2);
  NavProgress p;
  int first_delta = 0;
  for (int i = 0; i < segments; ++i) {
    const auto [delta, heading] = parse_turn_sentence(instr[2 * i]);
    if (i == 0) first_delta = delta;
    p.targets.push_back(heading);
  }
  p.destination = destination_name(instr.back());
  p.heading = nav::rotate(p.targets[0], -first_delta);
  for (std::size_t i = 0; i < view.taken.size(); ++i) {
    const auto& a = view.taken[i];
    if (a.kind == nav::NavAction::Kind::Turn) {
      p.heading = a.space == nav::ActionSpace::Absolute ? static_cast<nav::Heading>(a.turn) : nav::rotate(p.heading, a.turn);
    } else if (a.kind == nav::NavAction::Kind::Forward && i + 1 < view.observations.size() &&
               ends_with(view.observations[i + 1], "You observe an intersection")) {
      p.segment = std::min(p.segment + 1, segments - 1);
    }
  }
  return p;
}

}  // namespace

Eigen::VectorXd featurize_nav(const nav::NavView& view) {
  const NavProgress p = replay_nav(view);
  const int segments = static_cast<int>(p.targets.size());
  const nav::Heading heading = p.heading;
  const int segment = p.segment;
  const std::string& destination = p.destination;
  const std::string& obs = view.observations.back();
  const nav::Heading target = p.targets[static_cast<std::size_t>(segment)];
  const bool landmark = obs.rfind("No landmarks nearby", 0) != 0;
  const bool final_segment = segment == segments - 1;

  VectorXd x = VectorXd::Zero(nav_feature_dim());
  int at = 0;
  x[at + (view.space == nav::ActionSpace::Absolute ? 0 : 1)] = 1.0;
  at += 2;
  x[at + static_cast<int>(heading)] = 1.0;
  at += 8;
  x[at + static_cast<int>(target)] = 1.0;
  at += 8;
  x[at + nav::heading_delta(heading, target)] = 1.0;
  at += 8;
  x[at++] = heading != target ? 1.0 : 0.0;
  x[at++] = ends_with(obs, "You observe an intersection") ? 1.0 : 0.0;
  x[at++] = final_segment ? 1.0 : 0.0;
  x[at++] = landmark ? 1.0 : 0.0;
  x[at++] = obs.find(destination) != std::string::npos ? 1.0 : 0.0;
  x[at++] = final_segment && landmark ? 1.0 : 0.0;
  x[at++] = view.retry;
  return x;
}

std::vector<char> nav_mask(nav::ActionSpace space) {
  std::vector<char> mask(kNavTokens, 0);
  mask[0] = mask[1] = 1;
  const int from = space == nav::ActionSpace::Absolute ? 2 : 10;
  const int to = space == nav::ActionSpace::Absolute ? 10 : 14;
  for (int i = from; i < to; ++i) mask[i] = 1;
  return mask;
}

int nav_token(const nav::NavAction& action) {
  switch (action.kind) {
    case nav::NavAction::Kind::Forward: return 0;
    case nav::NavAction::Kind::Stop: return 1;
    case nav::NavAction::Kind::Turn:
      if (action.space == nav::ActionSpace::Absolute) return 2 + action.turn;
      switch (action.turn) {
        case -2: return 10;
        case 2: return 11;
        case -1: return 12;
        case 1: return 13;
        default: break;
      }
  }
  throw std::invalid_argument("no token for action " + action.str());
}

nav::NavAction nav_action(int token) {
  if (token == 0) return nav::NavAction::forward();
  if (token == 1) return nav::NavAction::stop();
  if (token >= 2 && token < 10) return nav::NavAction::turn_to(static_cast<nav::Heading>(token - 2));
  static constexpr int kRelative[4] = {-2, 2, -1, 1};
  if (token >= 10 && token < 14) return nav::NavAction::turn_by(kRelative[token - 10]);
  throw std::out_of_range("nav token out of range");
}

Eigen::MatrixXd template_features(std::span<const std::int64_t, 4> numbers, std::int64_t target) {
  const auto& templates = gp::formula_templates();
  MatrixXd psi = MatrixXd::Zero(static_cast<Eigen::Index>(templates.size()), kPsiDim);
  bool found = false;
  const double scale = std::max<double>(1.0, std::abs(static_cast<double>(target)));
  for (std::size_t k = 0; k < templates.size(); ++k) {
    const auto v = templates[k].value(numbers);
    const auto row = static_cast<Eigen::Index>(k);
    if (!v) {
      psi(row, 2) = -1.0;
      continue;
    }
    if (*v == Rational(target)) {
      psi(row, 0) = 1.0;
      if (!found) psi(row, 1) = 1.0;
      found = true;
    }
    psi(row, 2) = -std::min(1.0, std::abs(v->to_double() - static_cast<double>(target)) / scale);
  }
  return psi;
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::GeneralPoints: return "gp";
    case ModelKind::Navigation: return "nav";
    case ModelKind::Bandit: return "bandit";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view name) {
  for (auto k : {ModelKind::GeneralPoints, ModelKind::Navigation, ModelKind::Bandit}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown model kind: " + std::string(name));
}

ModelShape ModelShape::gp(int hidden, bool suit_features) {
  ModelShape s;
  s.kind = ModelKind::GeneralPoints;
  s.suit_features = suit_features;
  s.input_dim = gp_feature_dim({suit_features});
  s.hidden = hidden;
  s.templates = static_cast<int>(gp::formula_templates().size());
  return s;
}

ModelShape ModelShape::nav(int hidden) {
  ModelShape s;
  s.kind = ModelKind::Navigation;
  s.input_dim = nav_feature_dim();
  s.hidden = hidden;
  s.actions = kNavTokens;
  return s;
}

ModelShape ModelShape::bandit(int arms) {
  ModelShape s;
  s.kind = ModelKind::Bandit;
  s.input_dim = 1;
  s.hidden = 4;
  s.actions = arms;
  return s;
}

TinyModel::Layout TinyModel::layout_for(const ModelShape& s) {
  Layout l{};
  std::size_t at = 0;
  auto take = [&](std::size_t n) {
    const auto here = at;
    at += n;
    return here;
  };
  const std::size_t H = s.hidden;
  const std::size_t D = s.input_dim;
  l.w1 = take(H * D);
  l.b1 = take(H);
  l.wv = take(H);
  l.bv = take(1);
  if (s.kind == ModelKind::GeneralPoints) {
    l.wn = take(kNumberClasses * (H + kRanks + 2));
    l.bn = take(kNumberClasses);
    l.bt = take(s.templates);
    l.wa = take(kPsiDim * H);
    l.ba = take(kPsiDim);
  } else {
    l.wo = take(s.actions * H);
    l.bo = take(s.actions);
    l.wd = take(s.actions * D);
  }
  l.total = at;
  return l;
}

TinyModel::TinyModel(ModelShape shape, std::uint64_t seed) : shape_(shape), layout_(layout_for(shape)) {
  if (shape_.input_dim <= 0 || shape_.hidden <= 0) throw std::invalid_argument("model shape: empty dimensions");
  if (layout_.total > 1000000) throw std::invalid_argument("model shape: more than 10^6 parameters");
  params_ = VectorXd::Zero(static_cast<Eigen::Index>(layout_.total));
  Rng rng(seed);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(shape_.input_dim));
  for (std::size_t i = 0; i < static_cast<std::size_t>(shape_.hidden * shape_.input_dim); ++i) {
    params_[layout_.w1 + i] = s1 * rng.normal();
  }
  auto small = [&](std::size_t off, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) params_[off + i] = 0.01 * rng.normal();
  };
  const std::size_t H = shape_.hidden;
  small(layout_.wv, H);
  if (shape_.kind == ModelKind::GeneralPoints) {
    small(layout_.wn, kNumberClasses * (H + kRanks + 2));
    small(layout_.wa, kPsiDim * H);
  } else {
    small(layout_.wo, shape_.actions * H);
    small(layout_.wd, shape_.actions * shape_.input_dim);
  }
}

void TinyModel::check(const Decision& d) const {
  if (d.x.size() != shape_.input_dim) {
    throw DimensionMismatch("features have " + std::to_string(d.x.size()) + " entries, model expects " +
                            std::to_string(shape_.input_dim));
  }
  if (shape_.kind == ModelKind::GeneralPoints) {
    if (d.psi.rows() != shape_.templates || d.psi.cols() != kPsiDim) {
      if (d.psi.size() != 0) throw DimensionMismatch("template features do not match the template head");
    }
  } else if (!d.mask.empty() && static_cast<int>(d.mask.size()) != shape_.actions) {
    throw DimensionMismatch("action mask does not match the action head");
  }
}

Eval TinyModel::evaluate(const Decision& d, double c_logp, double c_entropy, double c_value, VectorXd* grad) const {
  check(d);
  const int H = shape_.hidden;
  const int D = shape_.input_dim;
  const double* p = params_.data();
  CMatMap W1(p + layout_.w1, H, D);
  CVecMap b1(p + layout_.b1, H);
  CVecMap wv(p + layout_.wv, H);
  const VectorXd h = (W1 * d.x + b1).array().tanh().matrix();
  Eval ev;
  ev.value = wv.dot(h) + p[layout_.bv];
  VectorXd dh = VectorXd::Zero(H);
  const bool want_grad = grad != nullptr;
  if (want_grad && grad->size() != params_.size()) throw DimensionMismatch("gradient buffer size");
  double* g = want_grad ? grad->data() : nullptr;

  if (shape_.kind == ModelKind::GeneralPoints) {
    if (d.tmpl < 0 || d.psi.size() == 0) throw std::invalid_argument("GP decision has no template choice");
    const int in_dim = H + kRanks + 2;
    CMatMap Wn(p + layout_.wn, kNumberClasses, in_dim);
    CVecMap bn(p + layout_.bn, kNumberClasses);
    for (int c = 0; c < 4; ++c) {
      const VectorXd in = number_input(h, d.ranks[c], d.rule, H);
      const VectorXd probs = masked_softmax(Wn * in + bn, {});
      ev.logp += std::log(probs[d.numbers[c]]);
      ev.entropy += entropy_of(probs);
      if (want_grad) {
        const VectorXd dz = head_grad(probs, d.numbers[c], c_logp, c_entropy);
        MatMap(g + layout_.wn, kNumberClasses, in_dim) += dz * in.transpose();
        VecMap(g + layout_.bn, kNumberClasses) += dz;
        dh += Wn.leftCols(H).transpose() * dz;
      }
    }
    CVecMap bt(p + layout_.bt, shape_.templates);
    CMatMap Wa(p + layout_.wa, kPsiDim, H);
    CVecMap ba(p + layout_.ba, kPsiDim);
    const VectorXd u = Wa * h + ba;
    const VectorXd probs = masked_softmax(bt + d.psi * u, {});
    ev.logp += std::log(probs[d.tmpl]);
    ev.entropy += entropy_of(probs);
    if (want_grad) {
      const VectorXd dz = head_grad(probs, d.tmpl, c_logp, c_entropy);
      VecMap(g + layout_.bt, shape_.templates) += dz;
      const VectorXd du = d.psi.transpose() * dz;
      MatMap(g + layout_.wa, kPsiDim, H) += du * h.transpose();
      VecMap(g + layout_.ba, kPsiDim) += du;
      dh += Wa.transpose() * du;
    }
  } else {
    if (d.action < 0 || d.action >= shape_.actions) throw std::invalid_argument("decision has no action choice");
    CMatMap Wo(p + layout_.wo, shape_.actions, H);
    CVecMap bo(p + layout_.bo, shape_.actions);
    CMatMap Wd(p + layout_.wd, shape_.actions, D);
    const VectorXd probs = masked_softmax(Wo * h + bo + Wd * d.x, d.mask);
    if (probs[d.action] <= 0.0) throw std::invalid_argument("decision chose a masked action");
    ev.logp = std::log(probs[d.action]);
    ev.entropy = entropy_of(probs);
    if (want_grad) {
      const VectorXd dz = head_grad(probs, d.action, c_logp, c_entropy);
      MatMap(g + layout_.wo, shape_.actions, H) += dz * h.transpose();
      VecMap(g + layout_.bo, shape_.actions) += dz;
      MatMap(g + layout_.wd, shape_.actions, D) += dz * d.x.transpose();
      dh += Wo.transpose() * dz;
    }
  }
  if (want_grad) {
    VecMap(g + layout_.wv, H) += c_value * h;
    g[layout_.bv] += c_value;
    dh += c_value * wv;
    const VectorXd da = dh.array() * (1.0 - h.array().square());
    MatMap(g + layout_.w1, H, D) += da * d.x.transpose();
    VecMap(g + layout_.b1, H) += da;
  }
  return ev;
}

Eval TinyModel::decide(Decision& d, Rng* rng, std::int64_t target) const {
  check(d);
  const int H = shape_.hidden;
  const int D = shape_.input_dim;
  const double* p = params_.data();
  const VectorXd h = (CMatMap(p + layout_.w1, H, D) * d.x + CVecMap(p + layout_.b1, H)).array().tanh().matrix();
  if (shape_.kind == ModelKind::GeneralPoints) {
    CMatMap Wn(p + layout_.wn, kNumberClasses, H + kRanks + 2);
    CVecMap bn(p + layout_.bn, kNumberClasses);
    std::array<std::int64_t, 4> numbers{};
    for (int c = 0; c < 4; ++c) {
      const VectorXd probs = masked_softmax(Wn * number_input(h, d.ranks[c], d.rule, H) + bn, {});
      d.numbers[c] = sample_from(probs, rng);
      numbers[c] = d.numbers[c];
    }
    d.psi = template_features(numbers, target);
    const VectorXd u = CMatMap(p + layout_.wa, kPsiDim, H) * h + CVecMap(p + layout_.ba, kPsiDim);
    d.tmpl = sample_from(masked_softmax(CVecMap(p + layout_.bt, shape_.templates) + d.psi * u, {}), rng);
  } else {
    const VectorXd z = CMatMap(p + layout_.wo, shape_.actions, H) * h + CVecMap(p + layout_.bo, shape_.actions) +
                       CMatMap(p + layout_.wd, shape_.actions, D) * d.x;
    d.action = sample_from(masked_softmax(z, d.mask), rng);
  }
  return evaluate(d);
}

void TinyModel::save(const std::filesystem::path& file, const std::string& config_hash) const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["kind"] = to_string(shape_.kind);
  j["input_dim"] = shape_.input_dim;
  j["hidden"] = shape_.hidden;
  j["templates"] = shape_.templates;
  j["actions"] = shape_.actions;
  j["suit_features"] = shape_.suit_features;
  j["config_hash"] = config_hash;
  j["params"] = std::vector<double>(params_.data(), params_.data() + params_.size());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
  out << j.dump() << "\n";
}

TinyModel TinyModel::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto j = nlohmann::json::parse(ss.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw std::runtime_error("checkpoint " + file.string() + ": not valid json");
  try {
    if (j.at("version").get<int>() != 1) throw std::runtime_error("checkpoint: unsupported version");
    ModelShape s;
    s.kind = model_kind_from_string(j.at("kind").get<std::string>());
    s.input_dim = j.at("input_dim").get<int>();
    s.hidden = j.at("hidden").get<int>();
    s.templates = j.at("templates").get<int>();
    s.actions = j.at("actions").get<int>();
    s.suit_features = j.at("suit_features").get<bool>();
    if (s.kind == ModelKind::GeneralPoints && s.templates != static_cast<int>(gp::formula_templates().size())) {
      throw DimensionMismatch("checkpoint: template head size differs from the template set");
    }
    TinyModel model(s, 0);
    const auto values = j.at("params").get<std::vector<double>>();
    if (values.size() != model.size()) throw DimensionMismatch("checkpoint: parameter count mismatch");
    model.params_ = VecMap(const_cast<double*>(values.data()), static_cast<Eigen::Index>(values.size()));
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint " + file.string() + ": " + e.what());
  }
}

void Adam::step(VectorXd& params, const VectorXd& grad) {
  if (m.size() != params.size()) {
    m = VectorXd::Zero(params.size());
    v = VectorXd::Zero(params.size());
    t = 0;
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

Decision input_decision(const gp::GpEnv& env, const GpFeatureConfig& config) {
  Decision d;
  const auto& s = env.state();
  d.x = featurize_gp(s, config);
  for (int c = 0; c < 4; ++c) d.ranks[c] = s.cards[c].rank - 1;
  d.rule = s.rule.face_rule == gp::FaceRule::AllTen ? 0 : 1;
  return d;
}

Decision input_decision(const nav::NavEnv& env) {
  Decision d;
  const auto view = env.view();
  d.x = featurize_nav(view);
  d.mask = nav_mask(view.space);
  return d;
}

Decision expert_decision(const gp::GpEnv& env, const GpFeatureConfig& config) {
  Decision d = input_decision(env, config);
  const auto& s = env.state();
  for (int c = 0; c < 4; ++c) d.numbers[c] = static_cast<int>(s.legal_numbers[c]);
  d.psi = template_features(s.legal_numbers, s.rule.target);
  const auto idx = gp::solve_index(s.legal_numbers, s.rule.target);
  if (!idx) throw std::logic_error("expert decision on an unsolvable deal");
  d.tmpl = static_cast<int>(*idx);
  return d;
}

Decision expert_decision(const nav::NavEnv& env) {
  Decision d = input_decision(env);
  d.action = nav_token(env.expert_action());
  return d;
}

std::string render_decision(const Decision& d, const Environment& env) {
  if (const auto* g = dynamic_cast<const gp::GpEnv*>(&env)) {
    std::array<std::int64_t, 4> numbers{};
    for (int c = 0; c < 4; ++c) numbers[c] = d.numbers[c];
    const auto& tmpl = gp::formula_templates().at(static_cast<std::size_t>(d.tmpl));
    const auto symbols = g->card_symbols();
    return gp::render_answer(symbols, numbers, tmpl.render(numbers) + "=" + std::to_string(g->rule().target));
  }
  if (const auto* n = dynamic_cast<const nav::NavEnv*>(&env)) {
    const auto view = n->view();
    const NavProgress p = replay_nav(view);
    const int sentence = 2 * p.segment + (p.heading == p.targets[static_cast<std::size_t>(p.segment)] ? 1 : 0);
    return nav::render_answer(nav::first_person(view.observations.back()),
                              view.instructions.at(static_cast<std::size_t>(sentence)), nav_action(d.action).str());
  }
  throw std::invalid_argument("render_decision: unsupported environment");
}

TinyPolicy::TinyPolicy(TinyModel model, bool stochastic, std::uint64_t seed)
    : model_(std::move(model)), stochastic_(stochastic), rng_(seed) {}

PolicyOutput TinyPolicy::act(const std::string&, const Environment& env) {
  Decision d;
  std::int64_t target = 24;
  if (const auto* g = dynamic_cast<const gp::GpEnv*>(&env)) {
    if (model_.shape().kind != ModelKind::GeneralPoints) throw DimensionMismatch("tiny policy: not a cards model");
    d = input_decision(*g, {model_.shape().suit_features});
    target = g->rule().target;
  } else if (const auto* n = dynamic_cast<const nav::NavEnv*>(&env)) {
    if (model_.shape().kind != ModelKind::Navigation) throw DimensionMismatch("tiny policy: not a navigation model");
    d = input_decision(*n);
  } else {
    throw std::invalid_argument("tiny policy: unsupported environment");
  }
  const Eval ev = model_.decide(d, stochastic_ ? &rng_ : nullptr, target);
  last_ = d;
  return {render_decision(d, env), ev.logp, ev.value};
}

}  // namespace genprobe::policy
