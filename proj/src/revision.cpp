#include "genprobe/revision.hpp"

#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace genprobe::revision {

double Transcript::episode_return() const {
  double total = 0.0;
  for (const auto& t : turns) total += t.reward + t.penalty;
  return total;
}

bool Transcript::any_correct() const {
  for (const auto& t : turns) {
    if (t.correct) return true;
  }
  return false;
}

void EpisodeConfig::validate() const {
  if (max_steps < 1) throw std::invalid_argument("max_steps: must be a positive integer");
}

std::uint64_t prompt_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void extend_prompt(std::string& prompt, const Turn& turn) {
  prompt += kSeparator;
  prompt += turn.output;
  prompt += kSeparator;
  prompt += turn.verifier;
}

std::string build_prompt(const Transcript& transcript, std::size_t t) {
  if (t > transcript.turns.size()) throw std::out_of_range("build_prompt: t exceeds recorded turns");
  std::string prompt = transcript.system_prompt;
  for (std::size_t k = 0; k < t; ++k) extend_prompt(prompt, transcript.turns[k]);
  return prompt;
}

Session::Session(Environment& env, const EpisodeConfig& config) : env_(env), config_(config) {
  config_.validate();
  transcript_.env = env.kind();
  transcript_.seed = config.seed;
  transcript_.system_prompt = env.reset(config.seed);
  prompt_ = transcript_.system_prompt;
  done_ = env_.done();
}

const Turn& Session::submit(const std::string& output) {
  if (done_) throw std::logic_error("episode is done");
  Turn turn;
  turn.prompt_hash = prompt_hash(prompt_);
  turn.output = output;
  const StepOutcome step = env_.step(output);
  turn.verifier = step.verifier;
  turn.reward = step.reward;
  turn.penalty = step.penalty;
  turn.correct = step.correct;
  turn.label = step.label;
  if (step.done) transcript_.status = step.status;
  extend_prompt(prompt_, turn);
  if (!env_.done() && static_cast<int>(transcript_.turns.size()) + 1 >= config_.max_steps) {
    // The engine's budget ran out before the environment's own.
    transcript_.status = EpisodeStatus::StepLimit;
    if (turn.penalty == 0.0) turn.penalty = -1.0;
  }
  transcript_.turns.push_back(std::move(turn));
  done_ = env_.done() || static_cast<int>(transcript_.turns.size()) >= config_.max_steps;
  return transcript_.turns.back();
}

Transcript run_episode(Environment& env, Policy& policy, const EpisodeConfig& config, const TurnHook& hook) {
  Session session(env, config);
  while (!session.done()) {
    PolicyOutput out;
    try {
      out = policy.act(session.prompt(), env);
    } catch (const std::exception&) {
      out = PolicyOutput{};
    }
    const Turn& turn = session.submit(out.text);
    if (hook) hook(session.step() - 1, out, turn);
  }
  return session.transcript();
}

bool verify_hashes(const Transcript& transcript) {
  std::string prompt = transcript.system_prompt;
  for (const auto& turn : transcript.turns) {
    if (prompt_hash(prompt) != turn.prompt_hash) return false;
    extend_prompt(prompt, turn);
  }
  return true;
}

namespace {

std::string hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

std::uint64_t unhex(const std::string& s) { return std::stoull(s, nullptr, 16); }

EpisodeStatus status_from_string(const std::string& s) {
  for (auto st : {EpisodeStatus::Running, EpisodeStatus::Success, EpisodeStatus::StepLimit, EpisodeStatus::Failure}) {
    if (to_string(st) == s) return st;
  }
  throw std::invalid_argument("unknown status " + s);
}

}  // namespace

void write_log(std::ostream& out, const Transcript& transcript, std::size_t episode) {
  nlohmann::ordered_json sys{{"episode", episode},
                             {"role", "system"},
                             {"step", 0},
                             {"env", to_string(transcript.env)},
                             {"seed", transcript.seed},
                             {"status", to_string(transcript.status)},
                             {"text", transcript.system_prompt},
                             {"reward", 0.0}};
  out << sys.dump() << "\n";
  for (std::size_t k = 0; k < transcript.turns.size(); ++k) {
    const auto& t = transcript.turns[k];
    nlohmann::ordered_json model{{"episode", episode},     {"role", "model"},  {"step", k},
                                 {"text", t.output},       {"reward", 0.0},    {"prompt_hash", hex(t.prompt_hash)}};
    nlohmann::ordered_json ver{{"episode", episode},  {"role", "verifier"}, {"step", k},
                               {"text", t.verifier},  {"reward", t.reward}, {"penalty", t.penalty},
                               {"correct", t.correct}, {"label", t.label}};
    out << model.dump() << "\n" << ver.dump() << "\n";
  }
}

std::vector<Transcript> read_log(std::istream& in) {
  std::vector<Transcript> out;
  std::map<std::size_t, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw std::runtime_error("log line " + std::to_string(lineno) + ": bad json");
    try {
      const auto episode = j.at("episode").get<std::size_t>();
      const auto role = j.at("role").get<std::string>();
      const auto step = j.at("step").get<std::size_t>();
      if (role == "system") {
        index[episode] = out.size();
        Transcript tr;
        tr.env = env_kind_from_string(j.at("env").get<std::string>());
        tr.seed = j.at("seed").get<std::uint64_t>();
        tr.status = status_from_string(j.at("status").get<std::string>());
        tr.system_prompt = j.at("text").get<std::string>();
        out.push_back(std::move(tr));
        continue;
      }
      const auto it = index.find(episode);
      if (it == index.end()) throw std::runtime_error("record before its system prompt");
      auto& turns = out[it->second].turns;
      if (role == "model") {
        if (step != turns.size()) throw std::runtime_error("model step out of order");
        Turn t;
        t.output = j.at("text").get<std::string>();
        t.prompt_hash = unhex(j.at("prompt_hash").get<std::string>());
        turns.push_back(std::move(t));
      } else if (role == "verifier") {
        if (step + 1 != turns.size()) throw std::runtime_error("verifier without model output");
        auto& t = turns.back();
        t.verifier = j.at("text").get<std::string>();
        t.reward = j.at("reward").get<double>();
        t.penalty = j.value("penalty", 0.0);
        t.correct = j.value("correct", false);
        t.label = j.value("label", std::string{});
      } else {
        throw std::runtime_error("unknown role " + role);
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("log line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error("log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace genprobe::revision
