#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "genprobe/environment.hpp"
#include "genprobe/rng.hpp"

namespace genprobe {

struct PolicyOutput {
  std::string text;
  double logprob = 0.0;
  double value = 0.0;
};

// A policy reads the accumulated prompt plus the structured view the
// environment exposes, and answers with raw text.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyOutput act(const std::string& prompt, const Environment& env) = 0;
  // Same prompt and environment state always give the same output.
  virtual bool deterministic() const = 0;
  // Safe to call act() from several engines at once.
  virtual bool shareable() const { return false; }
  virtual std::unique_ptr<Policy> clone() const = 0;
  virtual std::string name() const = 0;
};

class ExpertPolicy final : public Policy {
 public:
  PolicyOutput act(const std::string& prompt, const Environment& env) override;
  bool deterministic() const override { return true; }
  bool shareable() const override { return true; }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<ExpertPolicy>(); }
  std::string name() const override { return "expert"; }
};

// GP: random card numbers and a random formula template.
// Nav: uniform over the active action set.
class UniformRandomPolicy final : public Policy {
 public:
  explicit UniformRandomPolicy(std::uint64_t seed) : rng_(seed) {}
  PolicyOutput act(const std::string& prompt, const Environment& env) override;
  bool deterministic() const override { return false; }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<UniformRandomPolicy>(*this); }
  std::string name() const override { return "random"; }

 private:
  Rng rng_;
};

// Replies with the same text every turn.
class ConstantPolicy final : public Policy {
 public:
  explicit ConstantPolicy(std::string text) : text_(std::move(text)) {}
  PolicyOutput act(const std::string&, const Environment&) override { return {text_, 0.0, 0.0}; }
  bool deterministic() const override { return true; }
  bool shareable() const override { return true; }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<ConstantPolicy>(*this); }
  std::string name() const override { return "constant"; }

 private:
  std::string text_;
};

}  // namespace genprobe
