#include "genprobe/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "genprobe/rng.hpp"

namespace genprobe::service {

namespace {

using evalkit::BigInt;
using evalkit::BigRational;
using evalkit::CurvePoint;

// Evaluation checkpoints: step 0, the last step and evenly spaced steps between.
std::vector<int> checkpoints(int total, int points) {
  std::vector<int> out;
  if (points <= 1) return {total};
  for (int k = 0; k < points; ++k) {
    const int s = static_cast<int>((static_cast<long>(total) * k) / (points - 1));
    if (out.empty() || out.back() != s) out.push_back(s);
  }
  return out;
}

evalkit::FlopsConfig flops_config(const ExperimentConfig& c, const policy::TinyModel& m, const BigInt& d_init) {
  evalkit::FlopsConfig f;
  f.n_params = BigInt(m.size());
  f.d_init = d_init;
  f.lambda = c.env == EnvKind::GeneralPoints ? evalkit::kGpLambda : evalkit::kNavLambda;
  return f;
}

double to_gflops(const BigRational& flops) { return static_cast<double>(flops / BigRational(1000000000)); }

void append_eval(std::vector<CurvePoint>& curve, const ExperimentConfig& c, const policy::TinyModel& model,
                 const std::string& method, double gflops) {
  for (const bool ood : {false, true}) {
    policy::TinyPolicy p(model, false, 0);
    const auto r = evaluate(p, c, ood, c.run.eval_episodes, c.run.eval_seed);
    CurvePoint pt;
    pt.env = std::string(to_string(c.env));
    pt.method = method;
    pt.split = ood ? "OOD" : "ID";
    pt.viter = c.viter();
    pt.gflops = gflops;
    pt.metric = "success_rate";
    pt.hits = r.success.hits;
    pt.n = r.success.n;
    curve.push_back(pt);
    if (c.env == EnvKind::Navigation) {
      pt.metric = "per_step_accuracy";
      pt.hits = r.per_step.hits;
      pt.n = r.per_step.n;
      curve.push_back(pt);
    }
  }
}

std::string describe(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  for (const auto& p : curve) {
    if (p.gflops != curve.back().gflops) continue;
    os << " " << p.split << " " << p.metric << "=" << static_cast<double>(p.hits) / static_cast<double>(p.n);
  }
  return os.str();
}

}  // namespace

EvalResult evaluate(Policy& policy, const ExperimentConfig& c, bool ood, int episodes, std::uint64_t seed) {
  auto env = make_env(c, ood);
  EvalResult r;
  for (int i = 0; i < episodes; ++i) {
    revision::EpisodeConfig ec{env->max_turns(), env->kind(), mix_seed(seed, static_cast<std::uint64_t>(i))};
    r.transcripts.push_back(revision::run_episode(*env, policy, ec));
  }
  r.success = evalkit::success_rate(r.transcripts, c.env);
  r.per_step = evalkit::per_step_accuracy(r.transcripts);
  return r;
}

policy::TinyModel initial_model(const ExperimentConfig& c) {
  const auto shape = c.env == EnvKind::GeneralPoints ? policy::ModelShape::gp(c.train.hidden, c.run.suit_features)
                                                     : policy::ModelShape::nav(c.train.hidden);
  return policy::TinyModel(shape, c.train.seed);
}

TrainResult train_sft(const ExperimentConfig& c, const std::vector<policy::SftRecord>& records,
                      std::optional<policy::TinyModel> init, const BigInt& d_init, const Progress& progress) {
  c.validate();
  if (records.empty()) throw std::invalid_argument("sft: empty dataset");
  auto env = make_env(c);
  std::vector<policy::Decision> data;
  data.reserve(records.size());
  for (const auto& rec : records) {
    if (rec.env != c.env) throw std::invalid_argument("sft: dataset environment does not match the config");
    data.push_back(policy::decision_for_record(*env, rec, {c.run.suit_features}));
  }

  TrainResult out{init ? std::move(*init) : initial_model(c), {}, "SFT", d_init, 0, 0, 0.0};
  policy::Adam adam;
  adam.lr = c.train.sft_lr;
  const auto fc = flops_config(c, out.model, d_init);
  const int batch = std::min<int>(c.train.batch_size, static_cast<int>(data.size()));
  const int per_epoch = static_cast<int>((data.size() + batch - 1) / batch);
  const int total = c.train.sft_epochs * per_epoch;
  const auto marks = checkpoints(total, c.run.eval_points);
  std::size_t next_mark = 0;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(c.train.seed, 0x5f7));
  std::size_t cursor = order.size();
  for (int step = 0;; ++step) {
    if (next_mark < marks.size() && marks[next_mark] == step) {
      auto f = fc;
      f.d_sft = out.d_train;
      append_eval(out.curve, c, out.model, "SFT", to_gflops(evalkit::flops_sft(f)));
      if (progress) progress("sft step " + std::to_string(step) + "/" + std::to_string(total) + describe(out.curve));
      ++next_mark;
    }
    if (step == total) break;
    std::vector<policy::Decision> mb;
    for (int k = 0; k < batch; ++k) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      mb.push_back(data[order[cursor++]]);
    }
    out.final_loss = policy::sft_update(out.model, adam, mb, c.train);
    out.d_train += batch;
  }
  auto f = fc;
  f.d_sft = out.d_train;
  out.flops = evalkit::flops_sft(f);
  return out;
}

TrainResult train_rl(const ExperimentConfig& c, std::optional<policy::TinyModel> init, const BigInt& d_init,
                     const Progress& progress) {
  c.validate();
  auto env = make_env(c);
  TrainResult out{init ? std::move(*init) : initial_model(c), {}, "RL", d_init, 0, 0, 0.0};
  policy::Adam adam;
  adam.lr = c.train.lr;
  const auto fc = flops_config(c, out.model, d_init);
  const int total = c.train.rl_updates;
  const auto marks = checkpoints(total, c.run.eval_points);
  std::size_t next_mark = 0;
  for (int update = 0;; ++update) {
    if (next_mark < marks.size() && marks[next_mark] == update) {
      auto f = fc;
      f.d_rl = out.d_train;
      append_eval(out.curve, c, out.model, "RL", to_gflops(evalkit::flops_rl(f)));
      if (progress) {
        progress("rl update " + std::to_string(update) + "/" + std::to_string(total) + describe(out.curve));
      }
      ++next_mark;
    }
    if (update == total) break;
    policy::TinyPolicy actor(out.model, true, mix_seed(c.train.seed, 0x9000 + update));
    auto rollout = policy::collect_rollout(actor, *env, c.train.batch_size, env->max_turns(),
                                           mix_seed(c.train.seed, static_cast<std::uint64_t>(update)), c.train);
    const auto stats = policy::ppo_update(out.model, adam, std::move(rollout.entries), c.train);
    out.final_loss = stats.policy_loss;
    out.d_train += rollout.decisions;
  }
  auto f = fc;
  f.d_rl = out.d_train;
  out.flops = evalkit::flops_rl(f);
  return out;
}

void write_run(const std::filesystem::path& dir, const TrainResult& result, const ExperimentConfig& c) {
  std::filesystem::create_directories(dir);
  const auto hash = config_hash(c);
  result.model.save(dir / "model.json", hash);
  {
    std::ofstream curve(dir / "curve.csv", std::ios::binary);
    if (!curve) throw std::runtime_error("cannot write " + (dir / "curve.csv").string());
    evalkit::write_curve(curve, result.curve);
  }
  nlohmann::ordered_json run;
  run["method"] = result.method;
  run["env"] = to_string(c.env);
  run["viter"] = c.viter();
  run["config_hash"] = hash;
  run["n_params"] = result.model.size();
  run["d_init"] = result.d_init.str();
  run["d_train"] = result.d_train.str();
  run["flops"] = evalkit::format_rational(result.flops);
  run["final_loss"] = result.final_loss;
  run["config"] = config_to_json(c);
  std::ofstream out(dir / "run.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "run.json").string());
  out << run.dump(2) << "\n";
}

BigInt run_decisions(const std::filesystem::path& dir) {
  std::ifstream in(dir / "run.json", std::ios::binary);
  if (!in) return 0;
  const auto j = nlohmann::json::parse(in);
  return BigInt(j.at("d_init").get<std::string>()) + BigInt(j.at("d_train").get<std::string>());
}

std::vector<CurvePoint> collect_curves(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "curve.csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<CurvePoint> all;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    const auto pts = evalkit::read_curve(in);
    all.insert(all.end(), pts.begin(), pts.end());
  }
  if (all.empty()) throw evalkit::EmptyInput("no curve.csv files under " + dir.string());
  return all;
}

}  // namespace genprobe::service
