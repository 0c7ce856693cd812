#include "genprobe/gp_env.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "genprobe/lenient_json.hpp"
#include "genprobe/rng.hpp"

namespace genprobe::gp {

using equation::ExprNode;
using equation::VerdictClass;

std::string Card::symbol() const {
  switch (rank) {
    case 1: return "A";
    case 11: return "J";
    case 12: return "Q";
    case 13: return "K";
    default: return std::to_string(rank);
  }
}

int rank_from_symbol(std::string_view symbol) {
  if (symbol == "A") return 1;
  if (symbol == "J") return 11;
  if (symbol == "Q") return 12;
  if (symbol == "K") return 13;
  for (int r = 2; r <= 10; ++r) {
    if (symbol == std::to_string(r)) return r;
  }
  return 0;
}

void RuleConfig::validate() const {
  if (target < 1) throw std::invalid_argument("target: must be a positive integer");
  if (max_steps < 1) throw std::invalid_argument("max_steps: must be >= 1");
}

std::int64_t map_card(int rank, FaceRule rule) {
  if (rank >= 11 && rule == FaceRule::AllTen) return 10;
  return rank;
}

namespace {

int precedence(char op) { return (op == '+' || op == '-') ? 1 : 2; }

ExprNode join(char op, ExprNode lhs, ExprNode rhs) {
  if (lhs.kind == ExprNode::Kind::Binary && precedence(lhs.op) < precedence(op)) lhs = ExprNode::group(std::move(lhs));
  if (rhs.kind == ExprNode::Kind::Binary && precedence(rhs.op) <= precedence(op)) rhs = ExprNode::group(std::move(rhs));
  return ExprNode::binary(op, std::move(lhs), std::move(rhs));
}

std::optional<Rational> apply(const Rational& a, char op, const Rational& b) {
  switch (op) {
    case '+': return a + b;
    case '-': return a - b;
    case '*': return a * b;
    default:
      if (b.is_zero()) return std::nullopt;
      return a / b;
  }
}

std::optional<Rational> apply(const std::optional<Rational>& a, char op, const std::optional<Rational>& b) {
  if (!a || !b) return std::nullopt;
  return apply(*a, op, *b);
}

// Values that make accidental equality of distinct formulas implausible.
constexpr std::array<std::array<std::int64_t, 4>, 3> kProbeInputs{{
    {101, 211, 307, 401},
    {503, 601, 709, 809},
    {13, 29, 37, 53},
}};

std::vector<FormulaTemplate> build_templates() {
  constexpr std::array<char, 4> kOps{'+', '-', '*', '/'};
  std::vector<FormulaTemplate> out;
  std::map<std::vector<std::string>, bool> seen;
  std::array<int, 4> perm{0, 1, 2, 3};
  do {
    for (char o1 : kOps) {
      for (char o2 : kOps) {
        for (char o3 : kOps) {
          for (int shape = 0; shape < 5; ++shape) {
            FormulaTemplate t{perm, {o1, o2, o3}, shape};
            std::vector<std::string> signature;
            for (const auto& probe : kProbeInputs) {
              const auto v = t.value(probe);
              signature.push_back(v ? v->str() : "undef");
            }
            if (seen.emplace(std::move(signature), true).second) out.push_back(t);
          }
        }
      }
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

}  // namespace

ExprNode FormulaTemplate::instantiate(std::span<const std::int64_t, 4> numbers) const {
  auto leaf = [&](int i) { return ExprNode::literal(numbers[perm[i]]); };
  const auto [o1, o2, o3] = ops;
  switch (shape) {
    case 0: return join(o3, join(o2, join(o1, leaf(0), leaf(1)), leaf(2)), leaf(3));
    case 1: return join(o3, join(o1, leaf(0), join(o2, leaf(1), leaf(2))), leaf(3));
    case 2: return join(o2, join(o1, leaf(0), leaf(1)), join(o3, leaf(2), leaf(3)));
    case 3: return join(o1, leaf(0), join(o3, join(o2, leaf(1), leaf(2)), leaf(3)));
    default: return join(o1, leaf(0), join(o2, leaf(1), join(o3, leaf(2), leaf(3))));
  }
}

std::string FormulaTemplate::render(std::span<const std::int64_t, 4> numbers) const {
  return equation::print(instantiate(numbers));
}

std::optional<Rational> FormulaTemplate::value(std::span<const std::int64_t, 4> numbers) const {
  const std::optional<Rational> a = Rational(numbers[perm[0]]);
  const std::optional<Rational> b = Rational(numbers[perm[1]]);
  const std::optional<Rational> c = Rational(numbers[perm[2]]);
  const std::optional<Rational> d = Rational(numbers[perm[3]]);
  const auto [o1, o2, o3] = ops;
  try {
    switch (shape) {
      case 0: return apply(apply(apply(a, o1, b), o2, c), o3, d);
      case 1: return apply(apply(a, o1, apply(b, o2, c)), o3, d);
      case 2: return apply(apply(a, o1, b), o2, apply(c, o3, d));
      case 3: return apply(a, o1, apply(apply(b, o2, c), o3, d));
      default: return apply(a, o1, apply(b, o2, apply(c, o3, d)));
    }
  } catch (const ArithmeticOverflow&) {
    return std::nullopt;
  }
}

const std::vector<FormulaTemplate>& formula_templates() {
  static const std::vector<FormulaTemplate> templates = build_templates();
  return templates;
}

std::optional<std::size_t> solve_index(std::span<const std::int64_t, 4> numbers, std::int64_t target) {
  const Rational goal(target);
  const auto& templates = formula_templates();
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const auto v = templates[i].value(numbers);
    if (v && *v == goal) return i;
  }
  return std::nullopt;
}

std::optional<std::string> solve(std::span<const std::int64_t, 4> numbers, std::int64_t target) {
  const auto index = solve_index(numbers, target);
  if (!index) return std::nullopt;
  return formula_templates()[*index].render(numbers);
}

std::array<Card, 4> sample_quadruple(std::uint64_t seed, const RuleConfig& rule) {
  rule.validate();
  std::vector<Card> deck;
  for (Suit suit : {Suit::Spade, Suit::Heart, Suit::Club, Suit::Diamond}) {
    for (int rank = 1; rank <= 13; ++rank) {
      const Card card{rank, suit};
      if (rule.colors == ColorFilter::Black && card.color() != CardColor::Black) continue;
      if (rule.colors == ColorFilter::Red && card.color() != CardColor::Red) continue;
      deck.push_back(card);
    }
  }
  Rng rng(seed);
  for (int attempt = 0; attempt < kSamplingAttemptCap; ++attempt) {
    // Partial Fisher-Yates: the first four slots are the draw.
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t j = i + rng.below(deck.size() - i);
      std::swap(deck[i], deck[j]);
    }
    std::array<Card, 4> hand{deck[0], deck[1], deck[2], deck[3]};
    if (rule.sampling == SamplingMode::AtLeastOneFace &&
        std::none_of(hand.begin(), hand.end(), [](const Card& c) { return c.rank >= 11; })) {
      continue;
    }
    std::array<std::int64_t, 4> numbers{};
    for (std::size_t i = 0; i < 4; ++i) numbers[i] = map_card(hand[i].rank, rule.face_rule);
    if (solve_index(numbers, rule.target)) return hand;
  }
  throw SamplingExhausted("no solvable quadruple after " + std::to_string(kSamplingAttemptCap) + " attempts");
}

namespace {

std::string face_rule_text(FaceRule rule) {
  if (rule == FaceRule::AllTen) return "'J', 'Q', and 'K' count as '10'";
  return "'J', 'Q', and 'K' count as '11', '12', and '13' respectively";
}

std::string quoted_list(std::span<const std::string> items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += "'" + items[i] + "'";
  }
  return out + "]";
}

std::string number_list(std::span<const std::int64_t> items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(items[i]);
  }
  return out + "]";
}

}  // namespace

std::string render_system_prompt(const RuleConfig& rule, const std::array<Card, 4>& cards) {
  const std::string target = std::to_string(rule.target);
  const std::string rule_text = face_rule_text(rule.face_rule);
  std::ostringstream os;
  os << "[Task Description]\n"
     << "You are an expert " << target
     << " points card game player. You are observing these four cards in the image. Note that " << rule_text
     << ", and each card must be used once. Your goal is to output a formula that evaluates to " << target
     << " using numbers from the cards and operators such as '+', '-', '*', '/', '(', ')', and '='.\n\n";
  if (rule.variant == PromptVariant::Language) {
    std::vector<std::string> symbols;
    for (const auto& c : cards) symbols.push_back(c.symbol());
    os << "[Input]\n"
       << "Cards: " << quoted_list(symbols) << "\n\n";
  }
  os << "[Output]\n"
     << "Your response should be a valid json file in the following format:\n"
     << "{\n"
     << "  \"cards\": [x, y, z, w], where " << rule_text << ",\n"
     << "  \"number\": [a, b, c, d], where a, b, c, and d are the numbers on the cards,\n"
     << "  \"formula\": \"an equation that equals " << target << "\",\n"
     << "}";
  return os.str();
}

std::string render_answer(std::span<const std::string> cards, std::span<const std::int64_t> numbers,
                          const std::string& formula) {
  std::ostringstream os;
  os << "{\n"
     << "  \"cards\": " << quoted_list(cards) << ",\n"
     << "  \"number\": " << number_list(numbers) << ",\n"
     << "  \"formula\": \"" << formula << "\",\n"
     << "}";
  return os.str();
}

std::optional<equation::GpAnswer> parse_answer(std::string_view model_output) {
  const auto json = parse_model_json(model_output);
  if (!json) return std::nullopt;
  const auto formula = json->find("formula");
  if (formula == json->end() || !formula->is_string()) return std::nullopt;
  equation::GpAnswer answer;
  answer.formula = formula->get<std::string>();
  if (const auto cards = json->find("cards"); cards != json->end() && cards->is_array()) {
    for (const auto& c : *cards) {
      if (c.is_string()) {
        answer.cards.push_back(c.get<std::string>());
      } else if (c.is_number_integer()) {
        answer.cards.push_back(std::to_string(c.get<std::int64_t>()));
      } else {
        answer.cards.push_back(c.dump());
      }
    }
  }
  if (const auto numbers = json->find("number"); numbers != json->end() && numbers->is_array()) {
    for (const auto& n : *numbers) {
      if (n.is_number_integer()) answer.numbers.push_back(n.get<std::int64_t>());
    }
  }
  return answer;
}

GpEnv::GpEnv(RuleConfig rule) : rule_(rule) { rule_.validate(); }

std::vector<std::string> GpEnv::card_symbols() const {
  std::vector<std::string> out;
  for (const auto& c : state_.cards) out.push_back(c.symbol());
  return out;
}

std::string GpEnv::reset(std::uint64_t seed) { return reset_to(sample_quadruple(seed, rule_)); }

std::string GpEnv::reset_to(const std::array<Card, 4>& cards) {
  state_ = GpState{};
  state_.rule = rule_;
  state_.cards = cards;
  for (std::size_t i = 0; i < 4; ++i) state_.legal_numbers[i] = map_card(state_.cards[i].rank, rule_.face_rule);
  if (!solve_index(state_.legal_numbers, rule_.target)) throw std::invalid_argument("deal has no solution");
  return render_system_prompt(rule_, state_.cards);
}

StepOutcome GpEnv::step(std::string_view model_output) {
  if (state_.done) throw std::logic_error("step on a finished episode");
  equation::GpTruth truth;
  truth.legal_numbers.assign(state_.legal_numbers.begin(), state_.legal_numbers.end());
  truth.card_symbols = card_symbols();
  truth.target = rule_.target;
  truth.recognition_channel = rule_.recognition_channel;

  equation::Verdict verdict;
  if (const auto answer = parse_answer(model_output)) {
    verdict = equation::classify(*answer, truth);
  } else {
    verdict.cls = VerdictClass::Malformed;
    verdict.reward = equation::kMalformedReward;
    if (rule_.recognition_channel) {
      verdict.recognition_mismatch = true;
      verdict.reward += equation::kRecognitionPenalty;
    }
  }

  state_.history.push_back(verdict.cls);
  ++state_.t;
  StepOutcome out;
  out.reward = verdict.reward;
  out.label = std::string(equation::to_string(verdict.cls));
  if (verdict.cls == VerdictClass::Success) {
    out.correct = true;
    out.verifier = kSuccessVerifierText;
    out.done = true;
    out.status = EpisodeStatus::Success;
    state_.success = true;
  } else {
    out.verifier = kFailVerifierText;
    if (state_.t >= rule_.max_steps) {
      out.done = true;
      out.penalty = equation::kStepLimitReward;
      out.status = EpisodeStatus::StepLimit;
    }
  }
  state_.done = out.done;
  return out;
}

std::string GpEnv::expert_output() const {
  const auto formula = solve(state_.legal_numbers, rule_.target);
  if (!formula) throw std::logic_error("dealt cards have no solution");
  const auto symbols = card_symbols();
  return render_answer(symbols, state_.legal_numbers, *formula + "=" + std::to_string(rule_.target));
}

}  // namespace genprobe::gp
