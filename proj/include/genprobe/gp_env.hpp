#pragma once

// The card-arithmetic environment: deck, face-card rules, formula templates,
// the expert solver and the verifier-driven episode state machine.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "genprobe/environment.hpp"
#include "genprobe/equation.hpp"
#include "genprobe/rational.hpp"

namespace genprobe::gp {

enum class Suit { Spade, Heart, Club, Diamond };
enum class CardColor { Black, Red };

struct Card {
  int rank = 1;  // 1 = A, 11 = J, 12 = Q, 13 = K
  Suit suit = Suit::Spade;

  CardColor color() const { return (suit == Suit::Spade || suit == Suit::Club) ? CardColor::Black : CardColor::Red; }
  std::string symbol() const;
  friend bool operator==(const Card&, const Card&) = default;
};

// "A", "2".."10", "J", "Q", "K"; returns 0 for anything else.
int rank_from_symbol(std::string_view symbol);

enum class FaceRule { AllTen, Ordinal };
enum class SamplingMode { Uniform, AtLeastOneFace };
enum class ColorFilter { Black, Red, All };
enum class PromptVariant { Language, VisionLanguage };

struct RuleConfig {
  FaceRule face_rule = FaceRule::AllTen;
  std::int64_t target = 24;
  SamplingMode sampling = SamplingMode::Uniform;
  ColorFilter colors = ColorFilter::All;
  int max_steps = 5;
  PromptVariant variant = PromptVariant::Language;
  bool recognition_channel = false;

  void validate() const;  // throws std::invalid_argument naming the field
};

std::int64_t map_card(int rank, FaceRule rule);

// Formula skeleton over card positions: leaves perm[0..3] in order,
// operators ops[0..2] left to right, one of five bracketings.
struct FormulaTemplate {
  std::array<int, 4> perm{};
  std::array<char, 3> ops{};
  int shape = 0;

  // Builds the expression for concrete numbers; brackets only where needed.
  equation::ExprNode instantiate(std::span<const std::int64_t, 4> numbers) const;
  std::string render(std::span<const std::int64_t, 4> numbers) const;
  // Exact value, or nullopt on division by zero / overflow.
  std::optional<Rational> value(std::span<const std::int64_t, 4> numbers) const;
};

// Canonical candidate list: permutations (lexicographic) x operators (+-*/)
// x shapes, with templates that compute the same function of their inputs
// collapsed onto the first occurrence.
const std::vector<FormulaTemplate>& formula_templates();

// First template index (in canonical order) reaching target, if any.
std::optional<std::size_t> solve_index(std::span<const std::int64_t, 4> numbers, std::int64_t target);
std::optional<std::string> solve(std::span<const std::int64_t, 4> numbers, std::int64_t target);

struct SamplingExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kSamplingAttemptCap = 10000;

std::array<Card, 4> sample_quadruple(std::uint64_t seed, const RuleConfig& rule);

struct GpState {
  std::array<Card, 4> cards{};
  RuleConfig rule;
  std::array<std::int64_t, 4> legal_numbers{};
  int t = 0;
  bool done = false;
  bool success = false;
  // Verdict of every attempt so far, in order.
  std::vector<equation::VerdictClass> history;
};

inline constexpr const char* kFailVerifierText = "You failed this trial because your formula is incorrect.";
inline constexpr const char* kSuccessVerifierText = "You succeeded in this trial because your formula is correct.";

std::string render_system_prompt(const RuleConfig& rule, const std::array<Card, 4>& cards);

// Answer text in the prompt's json style.
std::string render_answer(std::span<const std::string> cards, std::span<const std::int64_t> numbers,
                          const std::string& formula);

// Reads {cards, number, formula} from model text; nullopt when no usable
// object or formula string is present.
std::optional<equation::GpAnswer> parse_answer(std::string_view model_output);

class GpEnv final : public Environment {
 public:
  explicit GpEnv(RuleConfig rule);

  EnvKind kind() const override { return EnvKind::GeneralPoints; }
  std::string reset(std::uint64_t seed) override;
  // Starts an episode on a fixed deal (must be solvable).
  std::string reset_to(const std::array<Card, 4>& cards);
  StepOutcome step(std::string_view model_output) override;
  bool done() const override { return state_.done; }
  std::string expert_output() const override;
  int max_turns() const override { return rule_.max_steps; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<GpEnv>(*this); }

  const GpState& state() const { return state_; }
  const RuleConfig& rule() const { return rule_; }
  std::vector<std::string> card_symbols() const;

 private:
  RuleConfig rule_;
  GpState state_;
};

}  // namespace genprobe::gp
