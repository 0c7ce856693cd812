#include "genprobe/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <thread>
#include <vector>

#include <json.hpp>

#include "genprobe/rng.hpp"

namespace genprobe::service {

using nlohmann::json;
using nlohmann::ordered_json;

struct Server::Episode {
  std::mutex mu;  // serializes requests on this episode
  ExperimentConfig config;
  std::unique_ptr<Environment> env;
  std::unique_ptr<revision::Session> session;
};

namespace {

struct RequestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ordered_json error_response(const json* request, const std::string& message) {
  ordered_json r;
  const bool object = request && request->is_object();
  if (object) {
    if (const auto it = request->find("id"); it != request->end()) r["id"] = *it;
  }
  r["ok"] = false;
  if (object) {
    if (const auto it = request->find("op"); it != request->end() && it->is_string()) r["op"] = *it;
  }
  r["error"] = message;
  return r;
}

const json& field(const json& req, const char* name) {
  const auto it = req.find(name);
  if (it == req.end()) throw RequestError(std::string("missing field '") + name + "'");
  return *it;
}

std::string string_field(const json& req, const char* name) {
  const json& v = field(req, name);
  if (!v.is_string()) throw RequestError(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

void check_fields(const json& req, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : req.items()) {
    bool ok = key == "op" || key == "id";
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw RequestError("unknown field '" + key + "'");
  }
}

void put_state(ordered_json& r, const revision::Session& s) {
  r["step"] = s.step();
  r["prompt"] = s.prompt();
  r["done"] = s.done();
  r["status"] = to_string(s.transcript().status);
}

}  // namespace

Server::Server(ExperimentConfig base, std::uint64_t seed) : base_(std::move(base)), seed_(seed) {}

Server::~Server() { stop(); }

std::size_t Server::open_episodes() const {
  std::lock_guard lock(mu_);
  return episodes_.size();
}

std::shared_ptr<Server::Episode> Server::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = episodes_.find(id);
  if (it == episodes_.end()) throw RequestError("unknown episode");
  return it->second;
}

std::string Server::handle(const std::string& line) {
  if (line.size() > kMaxLineBytes) return error_response(nullptr, "request line too long").dump();
  const json req = json::parse(line, nullptr, false);
  if (req.is_discarded()) return error_response(nullptr, "malformed request: not valid json").dump();
  if (!req.is_object()) return error_response(nullptr, "malformed request: expected an object").dump();
  try {
    const std::string op = string_field(req, "op");
    ordered_json r;
    if (const auto it = req.find("id"); it != req.end()) r["id"] = *it;
    r["ok"] = true;
    r["op"] = op;

    if (op == "reset") {
      check_fields(req, {"config", "seed", "max_steps"});
      auto ep = std::make_shared<Episode>();
      ep->config = base_;
      if (const auto it = req.find("config"); it != req.end()) ep->config = env_config_from_json(*it, base_);
      ep->env = make_env(ep->config);
      int max_steps = ep->env->max_turns();
      if (const auto it = req.find("max_steps"); it != req.end()) {
        if (!it->is_number_integer() || it->get<std::int64_t>() < 1) {
          throw RequestError("field 'max_steps' must be a positive integer");
        }
        max_steps = it->get<int>();
      }
      std::optional<std::uint64_t> seed;
      if (const auto it = req.find("seed"); it != req.end()) {
        if (!it->is_number_unsigned()) throw RequestError("field 'seed' must be a non-negative integer");
        seed = it->get<std::uint64_t>();
      }
      std::string id;
      {
        std::lock_guard lock(mu_);
        const std::uint64_t n = resets_++;
        if (!seed) seed = mix_seed(seed_, n);
        id = "ep-" + std::to_string(n + 1);
      }
      ep->session = std::make_unique<revision::Session>(*ep->env, revision::EpisodeConfig{max_steps, ep->env->kind(), *seed});
      r["episode"] = id;
      r["env"] = to_string(ep->env->kind());
      r["seed"] = *seed;
      r["max_steps"] = max_steps;
      put_state(r, *ep->session);
      std::lock_guard lock(mu_);
      episodes_.emplace(id, std::move(ep));
    } else if (op == "step") {
      check_fields(req, {"episode", "output"});
      const std::string id = string_field(req, "episode");
      const std::string output = string_field(req, "output");
      auto ep = find(id);
      std::lock_guard lock(ep->mu);
      if (ep->session->done()) throw RequestError("episode is done");
      const revision::Turn& turn = ep->session->submit(output);
      r["episode"] = id;
      r["reward"] = turn.reward;
      r["penalty"] = turn.penalty;
      r["verifier"] = turn.verifier;
      r["correct"] = turn.correct;
      r["label"] = turn.label;
      put_state(r, *ep->session);
    } else if (op == "info") {
      check_fields(req, {"episode"});
      const std::string id = string_field(req, "episode");
      auto ep = find(id);
      std::lock_guard lock(ep->mu);
      const auto& tr = ep->session->transcript();
      r["episode"] = id;
      r["env"] = to_string(tr.env);
      r["seed"] = tr.seed;
      r["return"] = tr.episode_return();
      put_state(r, *ep->session);
    } else if (op == "close") {
      check_fields(req, {"episode"});
      const std::string id = string_field(req, "episode");
      std::lock_guard lock(mu_);
      if (episodes_.erase(id) == 0) throw RequestError("unknown episode");
      r["episode"] = id;
    } else {
      throw RequestError("unknown op '" + op + "'");
    }
    return r.dump();
  } catch (const RequestError& e) {
    return error_response(&req, e.what()).dump();
  } catch (const ConfigError& e) {
    return error_response(&req, std::string("invalid config: ") + e.what()).dump();
  } catch (const std::exception& e) {
    return error_response(&req, e.what()).dump();
  }
}

void Server::serve_stream(std::istream& in, std::ostream& out) {
  std::string line;
  while (!stopping_ && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out << handle(line) << "\n";
    out.flush();
  }
}

namespace {

bool write_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

void Server::serve_tcp(const std::string& host, std::uint16_t port, const std::function<void(std::uint16_t)>& ready) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw std::invalid_argument("bad host address " + host);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd, 16) < 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  listen_fd_ = fd;
  if (ready) ready(ntohs(addr.sin_port));

  std::vector<std::thread> workers;
  std::mutex conn_mu;
  std::vector<int> conns;
  while (!stopping_) {
    const int c = ::accept(fd, nullptr, nullptr);
    if (c < 0) {
      if (errno == EINTR) continue;
      break;
    }
    {
      std::lock_guard lock(conn_mu);
      conns.push_back(c);
    }
    workers.emplace_back([this, c, &conn_mu, &conns] {
      std::string buffer;
      char chunk[4096];
      bool alive = true;
      while (alive) {
        const ssize_t n = ::recv(c, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t pos;
        while (alive && (pos = buffer.find('\n')) != std::string::npos) {
          std::string line = buffer.substr(0, pos);
          buffer.erase(0, pos + 1);
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (line.empty()) continue;
          alive = write_all(c, handle(line) + "\n");
        }
        if (alive && buffer.size() > kMaxLineBytes) {
          buffer.clear();
          alive = write_all(c, error_response(nullptr, "request line too long").dump() + "\n");
        }
      }
      std::lock_guard lock(conn_mu);
      conns.erase(std::find(conns.begin(), conns.end(), c));
      ::close(c);
    });
  }
  {
    std::lock_guard lock(conn_mu);
    for (int c : conns) ::shutdown(c, SHUT_RDWR);
  }
  for (auto& w : workers) w.join();
  if (listen_fd_.exchange(-1) >= 0) ::close(fd);
}

void Server::stop() {
  stopping_ = true;
  const int fd = listen_fd_.load();
  if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
}

}  // namespace genprobe::service
