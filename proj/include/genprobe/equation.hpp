#pragma once

// Arithmetic answers for the card game: parsing, exact evaluation and the
// verdict/reward classification used by the verifier.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "genprobe/rational.hpp"

namespace genprobe::equation {

struct MalformedExpression : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ExprNode {
  enum class Kind { Literal, Binary, Group };

  Kind kind = Kind::Literal;
  std::int64_t value = 0;  // Literal only
  char op = 0;             // Binary only: one of + - * /
  std::vector<ExprNode> children;  // Binary: {lhs, rhs}; Group: {inner}

  static ExprNode literal(std::int64_t v);
  static ExprNode binary(char op, ExprNode lhs, ExprNode rhs);
  static ExprNode group(ExprNode inner);

  friend bool operator==(const ExprNode&, const ExprNode&) = default;
};

struct ExprAst {
  ExprNode root;
  std::optional<std::int64_t> rhs;

  friend bool operator==(const ExprAst&, const ExprAst&) = default;
};

// Grammar (whitespace-insensitive):
//   equation := expr ['=' integer]
//   expr     := term (('+' | '-') term)*
//   term     := factor (('*' | '/') factor)*
//   factor   := integer | '(' expr ')'
// Throws MalformedExpression. Unary minus is not part of the grammar.
ExprAst parse(std::string_view text);

// Inverse of parse: parse(print(ast)) == ast for every tree parse can produce.
std::string print(const ExprNode& node);
std::string print(const ExprAst& ast);

// Exact value of the left-hand side. Throws DivisionByZero / ArithmeticOverflow.
Rational evaluate(const ExprNode& node);
Rational evaluate(const ExprAst& ast);

// Leaf literals of the left-hand side, in left-to-right order.
std::vector<std::int64_t> operand_multiset(const ExprAst& ast);

enum class VerdictClass { Success, WrongValue, IllegalNumbers, Malformed, RecognitionMismatch, StepLimit };

std::string_view to_string(VerdictClass cls);
double reward_for(VerdictClass cls);

inline constexpr double kSuccessReward = 5.0;
inline constexpr double kWrongValueReward = -1.0;
inline constexpr double kIllegalNumbersReward = -2.0;
inline constexpr double kMalformedReward = -3.0;
inline constexpr double kStepLimitReward = -1.0;
inline constexpr double kRecognitionPenalty = -1.5;

struct Verdict {
  VerdictClass cls = VerdictClass::Malformed;
  double reward = kMalformedReward;
  // Set when the recognition channel is on and the "cards" field disagrees
  // with the dealt cards; reward already includes kRecognitionPenalty.
  bool recognition_mismatch = false;
};

struct GpAnswer {
  std::vector<std::string> cards;
  std::vector<std::int64_t> numbers;
  std::string formula;
};

struct GpTruth {
  std::vector<std::int64_t> legal_numbers;  // exactly 4
  std::vector<std::string> card_symbols;
  std::int64_t target = 24;
  bool recognition_channel = false;
};

// Precedence: Malformed > IllegalNumbers > WrongValue > Success. The claimed
// right-hand side is ignored; only the left-hand value is compared to target.
Verdict classify(const GpAnswer& answer, const GpTruth& truth);

}  // namespace genprobe::equation
