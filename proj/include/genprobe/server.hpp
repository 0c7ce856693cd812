#pragma once

// Line-delimited JSON protocol exposing the verifier loop: one request
// object per line in, one response object per line out. See
// docs/protocol.md.

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "genprobe/config.hpp"
#include "genprobe/revision.hpp"

namespace genprobe::service {

inline constexpr std::size_t kMaxLineBytes = 16u << 20;

class Server {
 public:
  // Episodes reset without an explicit seed draw mix_seed(seed, n) for the
  // n-th reset of this server.
  Server(ExperimentConfig base, std::uint64_t seed);
  ~Server();

  // Handles one request line and returns the response line (no newline).
  // Never throws for bad input; errors are reported in the response.
  std::string handle(const std::string& line);

  // Serves until end of input.
  void serve_stream(std::istream& in, std::ostream& out);

  // Serves TCP on host:port (port 0 picks a free port) with one thread per
  // connection, until stop(). `ready` receives the bound port.
  void serve_tcp(const std::string& host, std::uint16_t port, const std::function<void(std::uint16_t)>& ready = {});
  void stop();

  std::size_t open_episodes() const;

 private:
  struct Episode;

  std::shared_ptr<Episode> find(const std::string& id) const;

  ExperimentConfig base_;
  std::uint64_t seed_;
  mutable std::mutex mu_;  // guards the allocator and the episode map
  std::uint64_t resets_ = 0;
  std::map<std::string, std::shared_ptr<Episode>> episodes_;
  std::atomic<bool> stopping_{false};
  std::atomic<int> listen_fd_{-1};
};

}  // namespace genprobe::service
