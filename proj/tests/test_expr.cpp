#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mmslab/expr.hpp"

using namespace mmslab;

namespace {

double at(const std::string& text, std::vector<double> c = {0.0})
{
  return Expression(text)(c);
}

} // namespace

TEST(Expression, ArithmeticAndPrecedence)
{
  EXPECT_DOUBLE_EQ(at("1 + 2*3"), 7.0);
  EXPECT_DOUBLE_EQ(at("(1 + 2)*3"), 9.0);
  EXPECT_DOUBLE_EQ(at("8/4/2"), 1.0);
  EXPECT_DOUBLE_EQ(at("2^3^2"), 512.0);
  EXPECT_DOUBLE_EQ(at("-2^2"), -4.0);
  EXPECT_DOUBLE_EQ(at("2*-3"), -6.0);
  EXPECT_DOUBLE_EQ(at("1.5e1 + .5"), 15.5);
}

TEST(Expression, VariablesConstantsFunctions)
{
  EXPECT_DOUBLE_EQ(at("x + 10*y", {0.25, 2.0}), 20.25);
  EXPECT_NEAR(at("1 + 0.5*cos(2*pi*x)", {0.5}), 0.5, 1e-15);
  EXPECT_NEAR(at("log(e)"), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(at("min(3, max(1, 2))"), 2.0);
  EXPECT_DOUBLE_EQ(at("pow(2, 10)"), 1024.0);
  EXPECT_DOUBLE_EQ(at("abs(-3) + sqrt(16) + floor(2.7)"), 9.0);
  EXPECT_NEAR(at("exp(-((x-0.5)^2)/0.02)", {0.5}), 1.0, 1e-15);
}

TEST(Expression, ErrorsReportTheColumn)
{
  try {
    Expression e("1 + foo(x)");
    FAIL() << "no error";
  } catch (const Error& err) {
    EXPECT_NE(std::string(err.what()).find("column 5"), std::string::npos) << err.what();
    EXPECT_NE(std::string(err.what()).find("foo"), std::string::npos);
  }
  EXPECT_THROW(Expression("(1 + 2"), Error);
  EXPECT_THROW(Expression("1 +"), Error);
  EXPECT_THROW(Expression("2 3"), Error);
  EXPECT_THROW(Expression("min(1)"), Error);
  EXPECT_THROW(Expression("sin 1"), Error);
}

TEST(Expression, EvaluateOnChecksDimensionAndFiniteness)
{
  const std::vector<std::vector<double>> line{{0.0}, {0.5}};
  EXPECT_EQ(evaluate_on(Expression("2*x"), line), (ScalarField{0.0, 1.0}));
  EXPECT_THROW(evaluate_on(Expression("y"), line), Error);
  EXPECT_THROW(evaluate_on(Expression("log(x)"), line), Error);
}
