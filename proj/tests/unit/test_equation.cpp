#include <doctest.h>

#include <algorithm>

#include "../support/big_rational_oracle.hpp"
#include "../support/random_expr.hpp"
#include "genprobe/equation.hpp"

using namespace genprobe;
using namespace genprobe::equation;

namespace {

std::vector<std::int64_t> sorted(std::vector<std::int64_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

Verdict classify_formula(const std::string& formula, std::vector<std::int64_t> legal, std::int64_t target = 24) {
  GpAnswer answer;
  answer.formula = formula;
  GpTruth truth;
  truth.legal_numbers = std::move(legal);
  truth.target = target;
  return classify(answer, truth);
}

}  // namespace

TEST_SUITE("equation") {

TEST_CASE("parse keeps the claimed right-hand side") {
  const auto ast = parse("(1+6)*3+13=24");
  REQUIRE(ast.rhs.has_value());
  CHECK(*ast.rhs == 24);
  REQUIRE(ast.root.kind == ExprNode::Kind::Binary);
  CHECK(ast.root.op == '+');
  CHECK(ast.root.children[1] == ExprNode::literal(13));
  CHECK(print(ast) == "(1+6)*3+13=24");
}

TEST_CASE("parse single literal and maximal digit runs") {
  const auto ast = parse("7");
  CHECK(ast.root == ExprNode::literal(7));
  CHECK_FALSE(ast.rhs.has_value());
  CHECK(parse(" 13 ").root == ExprNode::literal(13));
  CHECK(parse(" 1 + 2 * 3 ").root == parse("1+2*3").root);
}

TEST_CASE("parse rejects malformed input") {
  for (const char* bad : {"(1+2", "", "   ", "1+", "*2", "1 2", "-1", "2*-3", "1+2)", "()", "1=", "1=x", "1=2=3",
                          "1++2", "a+b", "1=-24", "99999999999999999999"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse(bad), MalformedExpression);
  }
}

TEST_CASE("evaluate is exact") {
  CHECK(evaluate(parse("(1+6)*3+13")) == Rational(34));
  // Independent big-rational check of the classic fractional solution.
  const auto ast = parse("8/(3-8/3)");
  const auto expected = oracle::big_evaluate(ast.root);
  REQUIRE(expected.has_value());
  CHECK(*expected == 24);
  CHECK(evaluate(ast) == Rational(24));
  CHECK(evaluate(parse("1/3+1/6")) == Rational(1, 2));
  CHECK_THROWS_AS(evaluate(parse("1/(2-2)")), DivisionByZero);
  CHECK(evaluate(parse("1+1=24")) == Rational(2));
}

TEST_CASE("operand multiset excludes the right-hand side") {
  CHECK(sorted(operand_multiset(parse("(1+6)*3+13=24"))) == std::vector<std::int64_t>{1, 3, 6, 13});
  CHECK(sorted(operand_multiset(parse("10*3-6*1"))) == std::vector<std::int64_t>{1, 3, 6, 10});
  CHECK(operand_multiset(parse("2+2")) == std::vector<std::int64_t>{2, 2});
}

TEST_CASE("classify examples") {
  auto v = classify_formula("(1+6)*3+13=24", {1, 3, 10, 6});
  CHECK(v.cls == VerdictClass::IllegalNumbers);
  CHECK(v.reward == -2.0);

  v = classify_formula("1*2*3*4=24", {1, 2, 3, 4});
  CHECK(v.cls == VerdictClass::Success);
  CHECK(v.reward == 5.0);

  v = classify_formula("(10-6)*(3+1)=24", {10, 6, 3, 1});
  CHECK(v.cls == VerdictClass::WrongValue);
  CHECK(v.reward == -1.0);
}

TEST_CASE("classify precedence and edge cases") {
  // Division by zero outranks the multiset mismatch.
  CHECK(classify_formula("1/(2-2)+7", {1, 2, 3, 4}).cls == VerdictClass::Malformed);
  CHECK(classify_formula("1/(2-2)", {1, 2, 2, 4}).cls == VerdictClass::Malformed);
  // Missing, extra and out-of-set numbers.
  CHECK(classify_formula("1*2*3", {1, 2, 3, 4}).cls == VerdictClass::IllegalNumbers);
  CHECK(classify_formula("1*2*3*4*1", {1, 2, 3, 4}).cls == VerdictClass::IllegalNumbers);
  CHECK(classify_formula("1*2*3*5", {1, 2, 3, 4}).cls == VerdictClass::IllegalNumbers);
  // The claimed result is ignored.
  CHECK(classify_formula("1*2*3*4=25", {1, 2, 3, 4}).cls == VerdictClass::Success);
  CHECK(classify_formula("1+2+3+4=24", {1, 2, 3, 4}).cls == VerdictClass::WrongValue);
  CHECK(classify_formula("", {1, 2, 3, 4}).cls == VerdictClass::Malformed);
  CHECK(classify_formula("8/(3-8/3)", {8, 3, 8, 3}).cls == VerdictClass::Success);
}

TEST_CASE("recognition channel adds a fixed adjustment") {
  GpAnswer answer{{"A", "2", "3", "5"}, {1, 2, 3, 4}, "1*2*3*4"};
  GpTruth truth{{1, 2, 3, 4}, {"A", "2", "3", "4"}, 24, false};
  CHECK(classify(answer, truth).reward == 5.0);
  truth.recognition_channel = true;
  const auto v = classify(answer, truth);
  CHECK(v.cls == VerdictClass::Success);
  CHECK(v.recognition_mismatch);
  CHECK(v.reward == 3.5);
  answer.cards = truth.card_symbols;
  CHECK(classify(answer, truth).reward == 5.0);
}

TEST_CASE("reward table") {
  CHECK(reward_for(VerdictClass::Success) == 5.0);
  CHECK(reward_for(VerdictClass::WrongValue) == -1.0);
  CHECK(reward_for(VerdictClass::IllegalNumbers) == -2.0);
  CHECK(reward_for(VerdictClass::Malformed) == -3.0);
  CHECK(reward_for(VerdictClass::StepLimit) == -1.0);
  CHECK(reward_for(VerdictClass::RecognitionMismatch) == -1.5);
}

TEST_CASE("property: print/parse round trip") {
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    ExprAst ast{testgen::random_tree(rng, 5), std::nullopt};
    if (rng.below(2)) ast.rhs = rng.between(0, 100);
    const auto text = print(ast);
    CAPTURE(text);
    CHECK(parse(text) == ast);
  }
}

TEST_CASE("property: exact evaluation agrees with big-rational oracle") {
  Rng rng(11);
  int compared = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto tree = testgen::random_tree(rng, 4);
    const auto expected = oracle::big_evaluate(tree);
    if (!expected) {
      CHECK_THROWS_AS(evaluate(tree), DivisionByZero);
      continue;
    }
    const Rational got = evaluate(tree);
    CHECK(oracle::BigRational(got.num(), got.den()) == *expected);
    ++compared;
  }
  CHECK(compared > 8000);
}

TEST_CASE("property: classify is total and Success implies multiset and value") {
  Rng rng(13);
  const std::string alphabet = "0123456789+-*/()= x";
  for (int i = 0; i < 5000; ++i) {
    std::string text;
    const auto len = rng.below(16);
    for (std::size_t k = 0; k < len; ++k) text += alphabet[rng.below(alphabet.size())];
    CHECK_NOTHROW(classify_formula(text, {1, 2, 3, 4}));
  }
  for (int i = 0; i < 5000; ++i) {
    const auto tree = testgen::random_tree(rng, 3, 6);
    const std::string text = print(tree);
    const std::vector<std::int64_t> legal{rng.between(1, 6), rng.between(1, 6), rng.between(1, 6), rng.between(1, 6)};
    const auto v = classify_formula(text, legal, 6);
    if (v.cls == VerdictClass::Success) {
      CHECK(sorted(operand_multiset(parse(text))) == sorted(legal));
      CHECK(evaluate(tree) == Rational(6));
    }
  }
}

}  // TEST_SUITE
