#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "genprobe/config.hpp"
#include "genprobe/experiment.hpp"
#include "genprobe/server.hpp"

using namespace genprobe;
using namespace genprobe::service;
namespace fs = std::filesystem;

namespace {

enum class Verbosity { Quiet, Info, Debug };

Verbosity verbosity() {
  const char* v = std::getenv("GENPROBE_LOG");
  const std::string s = v ? v : "info";
  if (s == "quiet" || s == "0") return Verbosity::Quiet;
  if (s == "debug" || s == "2") return Verbosity::Debug;
  return Verbosity::Info;
}

void info(const std::string& msg) {
  if (verbosity() != Verbosity::Quiet) std::cerr << msg << "\n";
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string env;
  std::optional<int> viter;
};

ExperimentConfig load(const Common& o) {
  ExperimentConfig c;
  std::string path = o.config;
  if (path.empty()) {
    if (const char* p = std::getenv("GENPROBE_CONFIG")) path = p;
  }
  if (!path.empty()) {
    c = load_config(path);
    if (verbosity() == Verbosity::Debug) std::cerr << "config " << path << " (" << config_hash(c) << ")\n";
  } else {
    c = config_from_json(nlohmann::json{{"version", 1}});
  }
  if (!o.env.empty()) c.env = env_kind_from_string(o.env);
  if (o.viter) c.set_viter(*o.viter);
  c.validate();
  return c;
}

// Writes to --out when given, stdout otherwise.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    file_.open(path, std::ios::binary);
    if (!file_) throw std::runtime_error("cannot write " + path);
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

fs::path checkpoint_file(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= "model.json";
  if (!fs::exists(p)) throw std::runtime_error("no checkpoint at " + p.string());
  return p;
}

std::vector<std::int64_t> parse_numbers(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw std::invalid_argument("--numbers: '" + item + "' is not an integer");
    out.push_back(v);
  }
  if (out.size() != 4) throw std::invalid_argument("--numbers: expected exactly 4 comma-separated integers");
  return out;
}

void add_common(CLI::App* cmd, Common& o) {
  cmd->add_option("--seed", o.seed, "Base random seed");
  cmd->add_option("--config", o.config, "Experiment config file (default: $GENPROBE_CONFIG)");
  cmd->add_option("--out", o.out, "Output path");
  cmd->add_option("--env", o.env, "Environment override: gp or nav");
  cmd->add_option("--viter", o.viter, "Verification iterations override");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"genprobe: rule-variant generalization probes with verifier-driven episodes"};
  app.require_subcommand(1);
  Common o;

  auto* sample = app.add_subcommand("sample", "Emit sampled card quadruples as json lines");
  add_common(sample, o);
  int sample_count = 10;
  sample->add_option("--count", sample_count, "Number of quadruples")->check(CLI::PositiveNumber);

  auto* solve = app.add_subcommand("solve", "Find a formula over four numbers");
  add_common(solve, o);
  std::string numbers;
  std::int64_t target = 24;
  solve->add_option("--numbers", numbers, "Four comma-separated integers")->required();
  solve->add_option("--target", target, "Target value");

  auto* gen_routes = app.add_subcommand("gen-routes", "Write generated navigation routes as json files");
  add_common(gen_routes, o);
  int route_count = 10;
  gen_routes->add_option("--count", route_count, "Number of routes")->check(CLI::PositiveNumber);

  auto* sft_data = app.add_subcommand("make-sft-data", "Write an SFT dataset as json lines");
  add_common(sft_data, o);
  int sft_count = 0;
  std::string sft_mode = "expert-single-turn";
  sft_data->add_option("--count", sft_count, "Number of records (default: run.sft_samples)");
  sft_data->add_option("--mode", sft_mode, "expert-single-turn or sub-optimal-trajectory");

  auto* train = app.add_subcommand("train", "Train the tiny policy");
  train->require_subcommand(1);
  auto* train_sft_cmd = train->add_subcommand("sft", "Supervised fine-tuning on expert data");
  add_common(train_sft_cmd, o);
  std::string data_file;
  std::string init;
  train_sft_cmd->add_option("--data", data_file, "Dataset from make-sft-data (default: generated)");
  train_sft_cmd->add_option("--init", init, "Checkpoint file or run directory to start from");
  train_sft_cmd->add_option("--mode", sft_mode, "Dataset mode when generating");
  auto* train_rl_cmd = train->add_subcommand("rl", "PPO through the verifier loop");
  add_common(train_rl_cmd, o);
  train_rl_cmd->add_option("--init", init, "Checkpoint file or run directory to start from");

  auto* eval = app.add_subcommand("eval", "Evaluate a policy and write transcripts");
  add_common(eval, o);
  std::string policy_name = "expert";
  int episodes = 0;
  bool ood = false;
  eval->add_option("--policy", policy_name, "expert, random or a checkpoint path");
  eval->add_option("--episodes", episodes, "Episodes (default: run.eval_episodes)");
  eval->add_flag("--ood", ood, "Evaluate on the out-of-distribution rule");

  auto* serve = app.add_subcommand("serve", "Serve the line protocol on stdio or TCP");
  add_common(serve, o);
  std::optional<std::uint16_t> port;
  std::string host = "127.0.0.1";
  serve->add_option("--port", port, "TCP port (stdio when omitted)");
  serve->add_option("--host", host, "TCP bind address");

  auto* report = app.add_subcommand("report", "Aggregate run curves into the four-condition csv");
  add_common(report, o);
  std::string in_dir;
  int window = evalkit::kDefaultWindow;
  report->add_option("--in", in_dir, "Directory holding run directories")->required();
  report->add_option("--window", window, "Smoothing window");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig c = load(o);

    if (*sample) {
      Output out(o.out);
      const std::uint64_t seed = o.seed.value_or(0);
      for (int i = 0; i < sample_count; ++i) {
        const auto s = mix_seed(seed, static_cast<std::uint64_t>(i));
        const auto cards = gp::sample_quadruple(s, c.gp);
        nlohmann::ordered_json j;
        j["seed"] = s;
        for (const auto& card : cards) {
          j["cards"].push_back(card.symbol());
          j["numbers"].push_back(gp::map_card(card.rank, c.gp.face_rule));
        }
        std::array<std::int64_t, 4> n{};
        for (std::size_t k = 0; k < 4; ++k) n[k] = j["numbers"][k].get<std::int64_t>();
        j["solution"] = gp::solve(n, c.gp.target).value_or("");
        out.stream() << j.dump() << "\n";
      }
    } else if (*solve) {
      const auto v = parse_numbers(numbers);
      const std::array<std::int64_t, 4> n{v[0], v[1], v[2], v[3]};
      const auto formula = gp::solve(n, target);
      if (!formula) {
        std::cerr << "genprobe: no formula over " << numbers << " reaches " << target << "\n";
        return 1;
      }
      Output out(o.out);
      out.stream() << *formula << "=" << target << "\n";
    } else if (*gen_routes) {
      if (o.out.empty()) throw std::invalid_argument("--out: a directory is required");
      fs::create_directories(o.out);
      auto gen = c.nav.env.generator;
      if (c.nav.pool == LandmarkPool::Heldout) gen.landmark_pool = nav::heldout_landmark_pool();
      for (int i = 0; i < route_count; ++i) {
        const auto route = nav::generate_route(mix_seed(o.seed.value_or(0), static_cast<std::uint64_t>(i)), gen);
        char name[32];
        std::snprintf(name, sizeof name, "route_%04d.json", i);
        nav::save_route(route, fs::path(o.out) / name);
      }
      info("wrote " + std::to_string(route_count) + " routes to " + o.out);
    } else if (*sft_data) {
      if (o.out.empty()) throw std::invalid_argument("--out: a file is required");
      auto env = make_env(c);
      const auto count = sft_count > 0 ? sft_count : c.run.sft_samples;
      const auto records = policy::make_sft_dataset(*env, static_cast<std::size_t>(count),
                                                    policy::sft_mode_from_string(sft_mode), o.seed.value_or(0));
      if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
      policy::write_sft_dataset(records, o.out);
      info("wrote " + std::to_string(records.size()) + " records to " + o.out);
    } else if (*train_sft_cmd || *train_rl_cmd) {
      if (o.out.empty()) throw std::invalid_argument("--out: a run directory is required");
      ExperimentConfig tc = c;
      if (o.seed) tc.train.seed = *o.seed;
      std::optional<policy::TinyModel> model;
      evalkit::BigInt d_init = 0;
      if (!init.empty()) {
        const auto file = checkpoint_file(init);
        model = policy::TinyModel::load(file);
        d_init = run_decisions(file.parent_path());
      }
      const Progress progress = [](const std::string& s) { info(s); };
      TrainResult result = [&] {
        if (*train_rl_cmd) return train_rl(tc, std::move(model), d_init, progress);
        std::vector<policy::SftRecord> records;
        if (!data_file.empty()) {
          records = policy::read_sft_dataset(data_file);
        } else {
          auto env = make_env(tc);
          records = policy::make_sft_dataset(*env, static_cast<std::size_t>(tc.run.sft_samples),
                                             policy::sft_mode_from_string(sft_mode), tc.train.seed);
        }
        return train_sft(tc, records, std::move(model), d_init, progress);
      }();
      write_run(o.out, result, tc);
      info("wrote " + o.out + " (" + evalkit::format_rational(result.flops) + " flops)");
    } else if (*eval) {
      std::unique_ptr<Policy> policy;
      const std::uint64_t seed = o.seed.value_or(c.run.eval_seed);
      if (policy_name == "expert") {
        policy = std::make_unique<ExpertPolicy>();
      } else if (policy_name == "random") {
        policy = std::make_unique<UniformRandomPolicy>(mix_seed(seed, 0x7a));
      } else {
        policy = std::make_unique<policy::TinyPolicy>(policy::TinyModel::load(checkpoint_file(policy_name)), false, 0);
      }
      const int n = episodes > 0 ? episodes : c.run.eval_episodes;
      const auto r = evaluate(*policy, c, ood, n, seed);
      if (!o.out.empty()) {
        Output out(o.out);
        for (std::size_t i = 0; i < r.transcripts.size(); ++i) revision::write_log(out.stream(), r.transcripts[i], i);
      }
      nlohmann::ordered_json j;
      j["policy"] = policy_name;
      j["env"] = to_string(c.env);
      j["split"] = ood ? "OOD" : "ID";
      j["viter"] = c.viter();
      j["episodes"] = n;
      j["success_rate"] = r.success.value;
      j["success_stderr"] = r.success.stderr_;
      j["per_step_accuracy"] = r.per_step.value;
      j["per_step_stderr"] = r.per_step.stderr_;
      j["decisions"] = r.per_step.n;
      std::cout << j.dump() << "\n";
    } else if (*serve) {
      Server server(c, o.seed.value_or(0));
      if (port) {
        server.serve_tcp(host, *port, [&](std::uint16_t p) { info("listening on " + host + ":" + std::to_string(p)); });
      } else {
        server.serve_stream(std::cin, std::cout);
      }
    } else if (*report) {
      if (o.out.empty()) throw std::invalid_argument("--out: a csv path is required");
      const auto points = collect_curves(in_dir);
      {
        Output out(o.out);
        evalkit::write_report(out.stream(), points, window);
      }
      const std::string summary = evalkit::summarize(points);
      fs::path summary_file = o.out;
      summary_file.replace_extension(".summary.txt");
      std::ofstream(summary_file, std::ios::binary) << summary;
      std::cout << summary;
      info("wrote " + o.out + " and " + summary_file.string());
    }
  } catch (const std::exception& e) {
    std::cerr << "genprobe: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
