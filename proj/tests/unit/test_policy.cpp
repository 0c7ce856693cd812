#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../support/fixtures.hpp"
#include "genprobe/equation.hpp"
#include "genprobe/trainer.hpp"

using namespace genprobe;
using namespace genprobe::policy;
using Eigen::VectorXd;
using fixtures::kSampleCards;

namespace {

std::vector<Decision> gp_expert_batch(std::size_t n, gp::FaceRule rule, std::uint64_t seed) {
  gp::RuleConfig cfg;
  cfg.face_rule = rule;
  gp::GpEnv env(cfg);
  std::vector<Decision> out;
  for (std::size_t i = 0; i < n; ++i) {
    env.reset(mix_seed(seed, i));
    out.push_back(expert_decision(env));
  }
  return out;
}

std::vector<Decision> nav_expert_batch(std::size_t episodes, std::uint64_t seed) {
  nav::NavEnv env(nav::NavConfig{});
  std::vector<Decision> out;
  for (std::size_t i = 0; i < episodes; ++i) {
    env.reset(mix_seed(seed, i));
    while (!env.done()) {
      out.push_back(expert_decision(env));
      env.step(env.expert_output());
    }
  }
  return out;
}

std::vector<std::size_t> probe_indices(const TinyModel& m, std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) idx.push_back(rng.below(m.size()));
  return idx;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("gp features") {
  gp::GpEnv env(gp::RuleConfig{});
  env.reset_to(kSampleCards);
  auto x = featurize_gp(env.state());
  REQUIRE(x.size() == gp_feature_dim({}));
  CHECK(x[0] == 1.0);
  CHECK(x[1] == 0.0);
  CHECK(x[2 + 0] == 1.0);             // card 1 is A
  CHECK(x[2 + 13 + 2] == 1.0);        // card 2 is 3
  CHECK(x[2 + 26 + 12] == 1.0);       // card 3 is K
  CHECK(x[2 + 39 + 5] == 1.0);        // card 4 is 6
  CHECK(x.segment(2, 52).sum() == 4.0);
  CHECK(x.tail(7).sum() == 0.0);

  env.step("{\"formula\": \"1+3+10+6=24\"}");
  x = featurize_gp(env.state());
  const int wrong = static_cast<int>(equation::VerdictClass::WrongValue);
  CHECK(x[x.size() - 6 + wrong] == doctest::Approx(0.1));
  CHECK(x[x.size() - 7] == doctest::Approx(0.1));

  // Suit only matters through the color features.
  gp::GpEnv other(gp::RuleConfig{});
  auto swapped = kSampleCards;
  swapped[0].suit = gp::Suit::Heart;
  other.reset_to(swapped);
  env.reset_to(kSampleCards);
  CHECK(featurize_gp(env.state(), {false}) == featurize_gp(other.state(), {false}));
  CHECK(featurize_gp(env.state(), {true}) != featurize_gp(other.state(), {true}));

  gp::RuleConfig ord;
  ord.face_rule = gp::FaceRule::Ordinal;
  gp::GpEnv oenv(ord);
  oenv.reset_to(kSampleCards);
  CHECK(featurize_gp(oenv.state())[1] == 1.0);
}

TEST_CASE("nav features track heading through history") {
  nav::NavEnv env(nav::NavConfig{});
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    env.reset(seed);
    while (!env.done()) {
      const auto x = featurize_nav(env.view());
      REQUIRE(x.size() == nav_feature_dim());
      CHECK(x[2 + static_cast<int>(env.state().heading)] == 1.0);
      env.step(env.expert_output());
    }
  }
}

TEST_CASE("nav tokens round trip") {
  for (auto space : {nav::ActionSpace::Absolute, nav::ActionSpace::Relative}) {
    const auto mask = nav_mask(space);
    int active = 0;
    for (const auto& a : nav::action_set(space)) {
      const int t = nav_token(a);
      CHECK(nav_action(t) == a);
      CHECK(mask[t]);
      ++active;
    }
    CHECK(std::count(mask.begin(), mask.end(), 1) == active);
  }
}

TEST_CASE("argmax decisions are deterministic and render valid answers") {
  TinyModel model(ModelShape::gp(16), 3);
  gp::GpEnv env(gp::RuleConfig{});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    env.reset(seed);
    Decision a = input_decision(env);
    Decision b = input_decision(env);
    model.decide(a, nullptr);
    model.decide(b, nullptr);
    CHECK(a.numbers == b.numbers);
    CHECK(a.tmpl == b.tmpl);
    const auto text = render_decision(a, env);
    const auto answer = gp::parse_answer(text);
    REQUIRE(answer);
    CHECK_NOTHROW(equation::parse(answer->formula));
  }
}

TEST_CASE("log-prob factorizes over components and rescoring agrees") {
  TinyModel model(ModelShape::gp(16), 5);
  gp::GpEnv env(gp::RuleConfig{});
  env.reset(7);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    Decision d = input_decision(env);
    const Eval sampled = model.decide(d, &rng);
    const Eval rescored = model.evaluate(d);
    CHECK(sampled.logp == rescored.logp);
    CHECK(std::isfinite(sampled.logp));
    CHECK(std::isfinite(sampled.value));
    CHECK(sampled.logp <= 0.0);
  }
  TinyModel nav_model(ModelShape::nav(16), 5);
  nav::NavEnv nenv(nav::NavConfig{});
  nenv.reset(3);
  double total = 0.0;
  for (int t = 0; t < kNavTokens; ++t) {
    Decision d = input_decision(nenv);
    d.action = t;
    if (!d.mask[t]) {
      CHECK_THROWS(nav_model.evaluate(d));
      continue;
    }
    total += std::exp(nav_model.evaluate(d).logp);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dimension mismatch is reported") {
  TinyModel model(ModelShape::nav(8), 1);
  Decision d;
  d.x = VectorXd::Zero(3);
  d.action = 0;
  CHECK_THROWS_AS(model.evaluate(d), DimensionMismatch);
  TinyPolicy policy(TinyModel(ModelShape::nav(8), 1), false, 0);
  gp::GpEnv env(gp::RuleConfig{});
  env.reset(0);
  CHECK_THROWS_AS(policy.act("", env), DimensionMismatch);
}

TEST_CASE("parameter count bound") {
  CHECK(TinyModel(ModelShape::gp(), 0).size() <= 1000000u);
  CHECK(TinyModel(ModelShape::nav(), 0).size() <= 1000000u);
}

TEST_CASE("gradient checks on every head") {
  const auto gp_batch = gp_expert_batch(4, gp::FaceRule::AllTen, 2);
  const auto nav_batch = nav_expert_batch(2, 9);
  for (auto shape : {ModelShape::gp(8), ModelShape::nav(8), ModelShape::bandit(2)}) {
    TinyModel model(shape, 11);
    // Move away from the near-uniform start so every head carries signal.
    for (Eigen::Index i = 0; i < model.params().size(); ++i) model.params()[i] += 0.2 * std::sin(1.7 * i);
    std::vector<Decision> batch;
    if (shape.kind == ModelKind::GeneralPoints) batch = gp_batch;
    if (shape.kind == ModelKind::Navigation) batch = nav_batch;
    if (shape.kind == ModelKind::Bandit) {
      for (int a : {0, 1, 1}) {
        Decision d;
        d.x = VectorXd::Ones(1);
        d.action = a;
        batch.push_back(d);
      }
    }
    const auto idx = probe_indices(model, 4, 10);
    auto nll = [&](const TinyModel& m, VectorXd* g) { return sft_loss(m, batch, g); };
    CHECK(gradient_check(model, nll, idx) < 1e-4);

    std::vector<RolloutEntry> rollout;
    Rng rng(8);
    for (const auto& d : batch) {
      RolloutEntry e;
      e.decision = d;
      // Old log-probs a little off so ratios stay strictly inside the clip range.
      e.old_logp = model.evaluate(d).logp + 0.05 * (rng.uniform() - 0.5);
      e.advantage = rng.normal();
      e.ret = rng.normal();
      rollout.push_back(e);
    }
    TrainConfig cfg;
    auto ppo = [&](const TinyModel& m, VectorXd* g) {
      double loss = 0.0;
      ppo_objective(m, rollout, cfg, &loss, g);
      return loss;
    };
    CHECK(gradient_check(model, ppo, idx) < 1e-4);
    // Head-specific probes: last parameters belong to the output heads.
    std::vector<std::size_t> tail;
    for (std::size_t i = 0; i < 10; ++i) tail.push_back(model.size() - 1 - 3 * i);
    CHECK(gradient_check(model, nll, tail) < 1e-4);
    CHECK(gradient_check(model, ppo, tail) < 1e-4);
  }
}

TEST_CASE("advantages") {
  CHECK(compute_advantages({1.0}, {0.0}, 0.9, 0.95) == std::vector<double>{1.0});
  CHECK(compute_advantages({0, 0, 0}, {0, 0, 0}, 0.9, 0.95) == std::vector<double>{0, 0, 0});
  CHECK(compute_advantages({-1.0, 5.0}, {0.0, 0.0}, 1.0, 1.0) == std::vector<double>{4.0, 5.0});
  CHECK_THROWS_AS(compute_advantages({1.0}, {}, 1.0, 1.0), LengthMismatch);
  // gamma = lambda = 1: reward-to-go minus value.
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> r(n);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rng.normal();
      v[i] = rng.normal();
    }
    const auto adv = compute_advantages(r, v, 1.0, 1.0);
    for (std::size_t t = 0; t < n; ++t) {
      double to_go = 0.0;
      for (std::size_t k = t; k < n; ++k) to_go += r[k];
      CHECK(adv[t] == doctest::Approx(to_go - v[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("ppo with unchanged policy and zero advantages") {
  TinyModel model(ModelShape::nav(8), 2);
  const auto batch = nav_expert_batch(1, 1);
  std::vector<RolloutEntry> rollout;
  for (const auto& d : batch) {
    RolloutEntry e;
    e.decision = d;
    e.old_logp = model.evaluate(d).logp;
    rollout.push_back(e);
  }
  TrainConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  VectorXd grad = VectorXd::Zero(static_cast<Eigen::Index>(model.size()));
  double loss = 1.0;
  const auto stats = ppo_objective(model, rollout, cfg, &loss, &grad);
  CHECK(stats.clip_fraction == 0.0);
  CHECK(grad.norm() == 0.0);
  CHECK(loss == 0.0);
  // Ratios are exactly one right after a parameter copy.
  TinyModel copy = model;
  for (const auto& e : rollout) CHECK(std::exp(copy.evaluate(e.decision).logp - e.old_logp) == 1.0);
  Adam adam;
  const auto s = ppo_update(copy, adam, rollout, cfg);
  CHECK(s.clip_fraction >= 0.0);
  CHECK(s.clip_fraction <= 1.0);
}

TEST_CASE("ppo solves the two-armed bandit") {
  int solved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = train_bandit(seed, 500);
    if (r.best_arm_prob.back() >= 0.95) ++solved;
    CHECK(r.entropy.back() < r.entropy.front());
  }
  CHECK(solved >= 8);
}

TEST_CASE("sft drives nll down on a fixed dataset") {
  const auto batch = nav_expert_batch(12, 4);
  TinyModel model(ModelShape::nav(32), 1);
  Adam adam;
  TrainConfig cfg;
  double first = sft_update(model, adam, batch, cfg);
  double last = first;
  for (int i = 0; i < 400; ++i) last = sft_update(model, adam, batch, cfg);
  CHECK(last < first);
  CHECK(last < 0.01);

  auto gp_batch = gp_expert_batch(100, gp::FaceRule::AllTen, 6);
  TinyModel gp_model(ModelShape::gp(32), 1);
  Adam gp_adam;
  double gp_last = 0.0;
  for (int i = 0; i < 600; ++i) gp_last = sft_update(gp_model, gp_adam, gp_batch, cfg);
  CHECK(gp_last / 5.0 < 0.01);  // five head decisions per sample
}

TEST_CASE("non-finite loss aborts") {
  TinyModel model(ModelShape::nav(8), 2);
  model.params()[0] = std::numeric_limits<double>::quiet_NaN();
  Adam adam;
  CHECK_THROWS_AS(sft_update(model, adam, nav_expert_batch(1, 1), TrainConfig{}), NonFiniteLoss);
}

TEST_CASE("checkpoint round trip") {
  TinyModel model(ModelShape::gp(8), 3);
  const auto file = std::filesystem::temp_directory_path() / "genprobe_ckpt_test.json";
  model.save(file, "abc");
  const auto back = TinyModel::load(file);
  CHECK(back.params() == model.params());
  CHECK(back.shape().hidden == 8);
  std::filesystem::remove(file);
}

TEST_CASE("sft datasets") {
  gp::GpEnv env(gp::RuleConfig{});
  const auto expert = make_sft_dataset(env, 3, SftMode::ExpertSingleTurn, 1);
  REQUIRE(expert.size() == 3u);
  for (const auto& r : expert) {
    env.reset(r.seed);
    CHECK(env.step(r.target).status == EpisodeStatus::Success);
    CHECK(r.history.empty());
  }
  gp::GpEnv genv(gp::RuleConfig{});
  nav::NavEnv nenv(nav::NavConfig{});
  for (Environment* e : {static_cast<Environment*>(&genv), static_cast<Environment*>(&nenv)}) {
    const auto sub = make_sft_dataset(*e, 20, SftMode::SubOptimalTrajectory, 2);
    const std::string fail = e->kind() == EnvKind::GeneralPoints ? gp::kFailVerifierText : nav::kWrongVerifierText;
    for (const auto& r : sub) {
      CHECK(r.prompt.find(fail) != std::string::npos);
      CHECK_FALSE(r.history.empty());
      CHECK_NOTHROW(decision_for_record(*e, r));
      CHECK(e->expert_output() == r.target);
    }
    const auto dir = std::filesystem::temp_directory_path();
    write_sft_dataset(sub, dir / "genprobe_a.jsonl");
    write_sft_dataset(make_sft_dataset(*e, 20, SftMode::SubOptimalTrajectory, 2), dir / "genprobe_b.jsonl");
    std::ifstream a(dir / "genprobe_a.jsonl");
    std::ifstream b(dir / "genprobe_b.jsonl");
    std::stringstream sa;
    std::stringstream sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    const auto back = read_sft_dataset(dir / "genprobe_a.jsonl");
    REQUIRE(back.size() == sub.size());
    CHECK(back[5].prompt == sub[5].prompt);
    CHECK(back[5].history == sub[5].history);
  }
}

TEST_CASE("rendering the expert decision reproduces the expert answer") {
  gp::GpEnv genv(gp::RuleConfig{});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    genv.reset(seed);
    CHECK(render_decision(expert_decision(genv), genv) == genv.expert_output());
  }
  for (auto space : {nav::ActionSpace::Absolute, nav::ActionSpace::Relative}) {
    nav::NavConfig cfg;
    cfg.space = space;
    nav::NavEnv nenv(cfg);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      nenv.reset(seed);
      while (!nenv.done()) {
        CHECK(render_decision(expert_decision(nenv), nenv) == nenv.expert_output());
        nenv.step(nenv.expert_output());
      }
    }
  }
}

}
