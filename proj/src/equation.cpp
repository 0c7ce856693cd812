#include "genprobe/equation.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

namespace genprobe::equation {

ExprNode ExprNode::literal(std::int64_t v) {
  ExprNode n;
  n.kind = Kind::Literal;
  n.value = v;
  return n;
}

ExprNode ExprNode::binary(char op, ExprNode lhs, ExprNode rhs) {
  ExprNode n;
  n.kind = Kind::Binary;
  n.op = op;
  n.children.push_back(std::move(lhs));
  n.children.push_back(std::move(rhs));
  return n;
}

ExprNode ExprNode::group(ExprNode inner) {
  ExprNode n;
  n.kind = Kind::Group;
  n.children.push_back(std::move(inner));
  return n;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  ExprAst parse_equation() {
    skip_ws();
    if (pos_ >= text_.size()) fail("empty input");
    ExprAst ast;
    ast.root = parse_expr();
    skip_ws();
    if (peek() == '=') {
      ++pos_;
      skip_ws();
      if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected integer after '='");
      ast.rhs = parse_integer();
      skip_ws();
    }
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return ast;
  }

 private:
  ExprNode parse_expr() {
    ExprNode lhs = parse_term();
    for (;;) {
      skip_ws();
      const char c = peek();
      if (c != '+' && c != '-') return lhs;
      ++pos_;
      lhs = ExprNode::binary(c, std::move(lhs), parse_term());
    }
  }

  ExprNode parse_term() {
    ExprNode lhs = parse_factor();
    for (;;) {
      skip_ws();
      const char c = peek();
      if (c != '*' && c != '/') return lhs;
      ++pos_;
      lhs = ExprNode::binary(c, std::move(lhs), parse_factor());
    }
  }

  ExprNode parse_factor() {
    skip_ws();
    const char c = peek();
    if (c == '(') {
      ++pos_;
      ExprNode inner = parse_expr();
      skip_ws();
      if (peek() != ')') fail("unbalanced parenthesis");
      ++pos_;
      return ExprNode::group(std::move(inner));
    }
    if (std::isdigit(static_cast<unsigned char>(c))) return ExprNode::literal(parse_integer());
    if (c == '\0') fail("dangling operator");
    fail(std::string("unexpected character '") + c + "'");
  }

  std::int64_t parse_integer() {
    std::int64_t v = 0;
    while (std::isdigit(static_cast<unsigned char>(peek()))) {
      const int digit = peek() - '0';
      if (v > (std::numeric_limits<std::int64_t>::max() - digit) / 10) fail("integer literal too large");
      v = v * 10 + digit;
      ++pos_;
    }
    return v;
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  [[noreturn]] void fail(const std::string& what) const {
    throw MalformedExpression(what + " at offset " + std::to_string(pos_));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void collect_leaves(const ExprNode& node, std::vector<std::int64_t>& out) {
  if (node.kind == ExprNode::Kind::Literal) {
    out.push_back(node.value);
    return;
  }
  for (const auto& child : node.children) collect_leaves(child, out);
}

}  // namespace

ExprAst parse(std::string_view text) {
  // An embedded NUL would be mistaken for end of input by peek().
  if (text.find('\0') != std::string_view::npos) throw MalformedExpression("embedded NUL");
  return Parser(text).parse_equation();
}

std::string print(const ExprNode& node) {
  switch (node.kind) {
    case ExprNode::Kind::Literal:
      return std::to_string(node.value);
    case ExprNode::Kind::Group:
      return "(" + print(node.children[0]) + ")";
    case ExprNode::Kind::Binary:
      return print(node.children[0]) + node.op + print(node.children[1]);
  }
  return {};
}

std::string print(const ExprAst& ast) {
  std::string out = print(ast.root);
  if (ast.rhs) out += "=" + std::to_string(*ast.rhs);
  return out;
}

Rational evaluate(const ExprNode& node) {
  switch (node.kind) {
    case ExprNode::Kind::Literal:
      return Rational(node.value);
    case ExprNode::Kind::Group:
      return evaluate(node.children[0]);
    case ExprNode::Kind::Binary: {
      const Rational a = evaluate(node.children[0]);
      const Rational b = evaluate(node.children[1]);
      switch (node.op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        case '/': return a / b;
        default: break;
      }
      throw MalformedExpression(std::string("unknown operator ") + node.op);
    }
  }
  throw MalformedExpression("corrupt expression node");
}

Rational evaluate(const ExprAst& ast) { return evaluate(ast.root); }

std::vector<std::int64_t> operand_multiset(const ExprAst& ast) {
  std::vector<std::int64_t> out;
  collect_leaves(ast.root, out);
  return out;
}

std::string_view to_string(VerdictClass cls) {
  switch (cls) {
    case VerdictClass::Success: return "Success";
    case VerdictClass::WrongValue: return "WrongValue";
    case VerdictClass::IllegalNumbers: return "IllegalNumbers";
    case VerdictClass::Malformed: return "Malformed";
    case VerdictClass::RecognitionMismatch: return "RecognitionMismatch";
    case VerdictClass::StepLimit: return "StepLimit";
  }
  return "Unknown";
}

double reward_for(VerdictClass cls) {
  switch (cls) {
    case VerdictClass::Success: return kSuccessReward;
    case VerdictClass::WrongValue: return kWrongValueReward;
    case VerdictClass::IllegalNumbers: return kIllegalNumbersReward;
    case VerdictClass::Malformed: return kMalformedReward;
    case VerdictClass::RecognitionMismatch: return kRecognitionPenalty;
    case VerdictClass::StepLimit: return kStepLimitReward;
  }
  return kMalformedReward;
}

Verdict classify(const GpAnswer& answer, const GpTruth& truth) {
  Verdict verdict;
  verdict.cls = [&] {
    ExprAst ast;
    Rational value;
    try {
      ast = parse(answer.formula);
      value = evaluate(ast);
    } catch (const MalformedExpression&) {
      return VerdictClass::Malformed;
    } catch (const DivisionByZero&) {
      return VerdictClass::Malformed;
    } catch (const ArithmeticOverflow&) {
      return VerdictClass::Malformed;
    }
    auto used = operand_multiset(ast);
    auto legal = truth.legal_numbers;
    std::sort(used.begin(), used.end());
    std::sort(legal.begin(), legal.end());
    if (used != legal) return VerdictClass::IllegalNumbers;
    if (value != Rational(truth.target)) return VerdictClass::WrongValue;
    return VerdictClass::Success;
  }();
  verdict.reward = reward_for(verdict.cls);
  if (truth.recognition_channel && answer.cards != truth.card_symbols) {
    verdict.recognition_mismatch = true;
    verdict.reward += kRecognitionPenalty;
  }
  return verdict;
}

}  // namespace genprobe::equation
