#include "genprobe/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace genprobe::policy {

using Eigen::VectorXd;

namespace {

void clip_norm(VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
}

void require_finite(double loss, const VectorXd& grad, const char* what) {
  if (!std::isfinite(loss) || !grad.allFinite()) {
    std::ostringstream os;
    os << what << ": non-finite loss " << loss << " (gradient norm " << grad.norm() << ")";
    throw NonFiniteLoss(os.str());
  }
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (!(lr > 0.0)) fail("lr: must be > 0");
  if (!(sft_lr > 0.0)) fail("sft_lr: must be > 0");
  if (!(clip > 0.0 && clip < 1.0)) fail("clip: must be in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma: must be in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda: must be in [0, 1]");
  if (epochs < 1) fail("epochs: must be >= 1");
  if (batch_size < 1) fail("batch_size: must be >= 1");
  if (entropy_coef < 0.0) fail("entropy_coef: must be >= 0");
  if (value_coef < 0.0) fail("value_coef: must be >= 0");
  if (sft_epochs < 0) fail("sft_epochs: must be >= 0");
  if (rl_updates < 0) fail("rl_updates: must be >= 0");
  if (hidden < 1) fail("hidden: must be >= 1");
}

double sft_loss(const TinyModel& model, const std::vector<Decision>& batch, VectorXd* grad) {
  if (batch.empty()) throw std::invalid_argument("sft: empty batch");
  const double w = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& d : batch) loss -= w * model.evaluate(d, -w, 0.0, 0.0, grad).logp;
  return loss;
}

double sft_update(TinyModel& model, Adam& adam, const std::vector<Decision>& batch, const TrainConfig& config) {
  VectorXd grad = VectorXd::Zero(static_cast<Eigen::Index>(model.size()));
  const double loss = sft_loss(model, batch, &grad);
  require_finite(loss, grad, "sft_update");
  clip_norm(grad, config.max_grad_norm);
  adam.lr = config.sft_lr;
  adam.step(model.params(), grad);
  return loss;
}

std::vector<double> compute_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                                       double gamma, double lambda) {
  if (rewards.size() != values.size()) {
    throw LengthMismatch("compute_advantages: " + std::to_string(rewards.size()) + " rewards vs " +
                         std::to_string(values.size()) + " values");
  }
  std::vector<double> adv(rewards.size(), 0.0);
  double running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double next_value = i + 1 < values.size() ? values[i + 1] : 0.0;
    const double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lambda * running;
    adv[i] = running;
  }
  return adv;
}

PpoStats ppo_objective(const TinyModel& model, const std::vector<RolloutEntry>& batch, const TrainConfig& config,
                       double* loss, VectorXd* grad) {
  if (batch.empty()) throw std::invalid_argument("ppo: empty batch");
  const double w = 1.0 / static_cast<double>(batch.size());
  PpoStats stats;
  double total = 0.0;
  for (const auto& e : batch) {
    const Eval ev = model.evaluate(e.decision);
    const double ratio = std::exp(ev.logp - e.old_logp);
    const double surr1 = ratio * e.advantage;
    const double surr2 = std::clamp(ratio, 1.0 - config.clip, 1.0 + config.clip) * e.advantage;
    const double pl = -std::min(surr1, surr2);
    const double vl = (ev.value - e.ret) * (ev.value - e.ret);
    if (std::abs(ratio - 1.0) > config.clip) stats.clip_fraction += w;
    stats.policy_loss += w * pl;
    stats.value_loss += w * vl;
    stats.entropy += w * ev.entropy;
    total += w * (pl + config.value_coef * vl - config.entropy_coef * ev.entropy);
    if (grad) {
      const double c_logp = surr1 <= surr2 ? -w * ratio * e.advantage : 0.0;
      const double c_value = w * config.value_coef * 2.0 * (ev.value - e.ret);
      model.evaluate(e.decision, c_logp, -w * config.entropy_coef, c_value, grad);
    }
  }
  if (loss) *loss = total;
  return stats;
}

PpoStats ppo_update(TinyModel& model, Adam& adam, std::vector<RolloutEntry> batch, const TrainConfig& config) {
  if (batch.empty()) throw std::invalid_argument("ppo: empty batch");
  if (batch.size() > 1) {
    double mean = 0.0;
    for (const auto& e : batch) mean += e.advantage;
    mean /= static_cast<double>(batch.size());
    double var = 0.0;
    for (const auto& e : batch) var += (e.advantage - mean) * (e.advantage - mean);
    const double sd = std::sqrt(var / static_cast<double>(batch.size()));
    for (auto& e : batch) e.advantage = (e.advantage - mean) / (sd + 1e-8);
  }
  adam.lr = config.lr;
  PpoStats first;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    VectorXd grad = VectorXd::Zero(static_cast<Eigen::Index>(model.size()));
    double loss = 0.0;
    const PpoStats stats = ppo_objective(model, batch, config, &loss, &grad);
    require_finite(loss, grad, "ppo_update");
    if (epoch == 0) first = stats;
    clip_norm(grad, config.max_grad_norm);
    adam.step(model.params(), grad);
  }
  return first;
}

double gradient_check(TinyModel& model, const std::function<double(const TinyModel&, VectorXd*)>& objective,
                      const std::vector<std::size_t>& indices, double step) {
  VectorXd grad = VectorXd::Zero(static_cast<Eigen::Index>(model.size()));
  objective(model, &grad);
  double worst = 0.0;
  for (const auto i : indices) {
    const double saved = model.params()[i];
    model.params()[i] = saved + step;
    const double up = objective(model, nullptr);
    model.params()[i] = saved - step;
    const double down = objective(model, nullptr);
    model.params()[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = grad[static_cast<Eigen::Index>(i)];
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic) / scale);
  }
  return worst;
}

BanditResult train_bandit(std::uint64_t seed, int updates, int batch, const TrainConfig& config) {
  TinyModel model(ModelShape::bandit(2), seed);
  Adam adam;
  Rng rng(mix_seed(seed, 1));
  const int best = static_cast<int>(rng.below(2));
  BanditResult result;
  Decision probe;
  probe.x = VectorXd::Ones(1);
  probe.action = best;
  for (int u = 0; u < updates; ++u) {
    std::vector<RolloutEntry> entries;
    for (int b = 0; b < batch; ++b) {
      RolloutEntry e;
      e.decision.x = VectorXd::Ones(1);
      const Eval ev = model.decide(e.decision, &rng);
      const double reward = e.decision.action == best ? 1.0 : -1.0;
      e.old_logp = ev.logp;
      e.advantage = compute_advantages({reward}, {ev.value}, config.gamma, config.gae_lambda)[0];
      e.ret = reward;
      entries.push_back(std::move(e));
    }
    ppo_update(model, adam, std::move(entries), config);
    const Eval ev = model.evaluate(probe);
    result.best_arm_prob.push_back(std::exp(ev.logp));
    result.entropy.push_back(ev.entropy);
  }
  return result;
}

Rollout collect_rollout(TinyPolicy& policy, Environment& env, int episodes, int max_steps, std::uint64_t seed,
                        const TrainConfig& config) {
  Rollout out;
  for (int ep = 0; ep < episodes; ++ep) {
    std::vector<RolloutEntry> entries;
    std::vector<double> rewards;
    std::vector<double> values;
    const auto hook = [&](std::size_t, const PolicyOutput& o, const revision::Turn& turn) {
      RolloutEntry e;
      e.decision = policy.last_decision();
      e.old_logp = o.logprob;
      entries.push_back(std::move(e));
      rewards.push_back(turn.reward + turn.penalty);
      values.push_back(o.value);
    };
    auto tr = revision::run_episode(env, policy, {max_steps, env.kind(), mix_seed(seed, ep)}, hook);
    const auto adv = compute_advantages(rewards, values, config.gamma, config.gae_lambda);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      entries[i].advantage = adv[i];
      entries[i].ret = adv[i] + values[i];
      out.entries.push_back(std::move(entries[i]));
    }
    out.decisions += tr.turns.size();
    out.transcripts.push_back(std::move(tr));
  }
  return out;
}

std::string_view to_string(SftMode mode) {
  return mode == SftMode::ExpertSingleTurn ? "expert-single-turn" : "sub-optimal-trajectory";
}

SftMode sft_mode_from_string(std::string_view name) {
  if (name == "expert-single-turn") return SftMode::ExpertSingleTurn;
  if (name == "sub-optimal-trajectory") return SftMode::SubOptimalTrajectory;
  throw std::invalid_argument("mode: expected expert-single-turn or sub-optimal-trajectory, got " + std::string(name));
}

std::vector<SftRecord> make_sft_dataset(Environment& env, std::size_t count, SftMode mode, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("count: must be >= 1");
  std::vector<SftRecord> out;
  UniformRandomPolicy random(mix_seed(seed, 0xabc));
  Rng rng(mix_seed(seed, 0xdef));
  for (std::size_t i = 0; i < count; ++i) {
    SftRecord rec;
    rec.env = env.kind();
    rec.seed = mix_seed(seed, i);
    rec.prompt = env.reset(rec.seed);
    auto add = [&](const std::string& text) {
      const auto outcome = env.step(text);
      revision::Turn t;
      t.output = text;
      t.verifier = outcome.verifier;
      revision::extend_prompt(rec.prompt, t);
      rec.history.push_back(text);
    };
    if (env.kind() == EnvKind::Navigation) {
      // Decisions along the whole route: walk a random expert prefix.
      auto probe = env.clone();
      int length = 0;
      while (!probe->done()) {
        probe->step(probe->expert_output());
        ++length;
      }
      const auto walk = rng.below(static_cast<std::uint64_t>(length));
      for (std::uint64_t k = 0; k < walk; ++k) add(env.expert_output());
    }
    if (mode == SftMode::SubOptimalTrajectory) {
      int wrong = 1;
      if (env.kind() == EnvKind::GeneralPoints) {
        if (env.max_turns() < 2) throw std::invalid_argument("sub-optimal mode needs at least 2 verification steps");
        wrong = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(env.max_turns() - 1)));
      }
      for (int k = 0; k < wrong; ++k) {
        std::string text;
        do {
          text = random.act(rec.prompt, env).text;
        } while (env.clone()->step(text).correct);
        add(text);
      }
      if (env.done()) throw std::logic_error("sub-optimal trajectory ended the episode");
    }
    rec.target = env.expert_output();
    out.push_back(std::move(rec));
  }
  return out;
}

void write_sft_dataset(const std::vector<SftRecord>& records, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j{{"env", to_string(r.env)}, {"seed", r.seed}, {"history", r.history},
                             {"prompt", r.prompt},      {"target", r.target}};
    out << j.dump() << "\n";
  }
}

std::vector<SftRecord> read_sft_dataset(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::vector<SftRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    try {
      if (j.is_discarded() || !j.is_object()) throw std::runtime_error("bad json");
      SftRecord r;
      r.env = env_kind_from_string(j.at("env").get<std::string>());
      r.seed = j.at("seed").get<std::uint64_t>();
      r.history = j.at("history").get<std::vector<std::string>>();
      r.prompt = j.at("prompt").get<std::string>();
      r.target = j.at("target").get<std::string>();
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Decision decision_for_record(Environment& env, const SftRecord& record, const GpFeatureConfig& features) {
  if (env.kind() != record.env) throw std::runtime_error("dataset record is for a different environment");
  std::string prompt = env.reset(record.seed);
  for (const auto& text : record.history) {
    const auto outcome = env.step(text);
    revision::Turn t;
    t.output = text;
    t.verifier = outcome.verifier;
    revision::extend_prompt(prompt, t);
  }
  if (prompt != record.prompt) throw std::runtime_error("dataset record does not replay to its prompt");
  if (const auto* g = dynamic_cast<const gp::GpEnv*>(&env)) return expert_decision(*g, features);
  if (const auto* n = dynamic_cast<const nav::NavEnv*>(&env)) return expert_decision(*n);
  throw std::invalid_argument("decision_for_record: unsupported environment");
}

}  // namespace genprobe::policy
