#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hlsflow/bitwidth.hpp"

using namespace hlsflow;
using namespace hlsflow::bitwidth;

namespace {

// Passes iff the step of `name` is at most `max_step`.
class StepOracle : public VerificationOracle {
public:
  StepOracle(std::string name, double max_step) : name_(std::move(name)), max_step_(max_step) {}
  Verdict evaluate(const Assignment& a) override {
    ++calls;
    double step = a.at(name_).step();
    return {step <= max_step_, step};
  }
  std::size_t calls = 0;

private:
  std::string name_;
  double max_step_;
};

// Relative quantization error of a fixed trace, one trace per type.
class TraceOracle : public VerificationOracle {
public:
  std::map<std::string, std::vector<double>> traces;
  double tolerance = 1e-6;
  Verdict evaluate(const Assignment& a) override {
    double worst = 0;
    for (const auto& [name, trace] : traces) worst = std::max(worst, trace_relative_error(trace, a.at(name)));
    return {worst <= tolerance, worst};
  }
};

class FlakyOracle : public VerificationOracle {
public:
  Verdict evaluate(const Assignment&) override { return {++n % 3 != 2, 0}; }
  int n = 0;
};

TypeBudget candidate(std::string name, double lo, double hi) {
  TypeBudget b;
  b.typedef_name = std::move(name);
  b.role = TypeRole::Candidate;
  b.observed_min = lo;
  b.observed_max = hi;
  return b;
}

} // namespace

TEST(FixedPoint, QuantizeExample) {
  FixedPointFormat f{17, 3, true};
  EXPECT_DOUBLE_EQ(quantize(3.14159, f), std::round(3.14159 * 16384.0) / 16384.0);
}

TEST(FixedPoint, RangeAndStep) {
  FixedPointFormat f{64, 20, true};
  EXPECT_EQ(f.fractional_bits(), 44);
  EXPECT_EQ(f.min_value(), -524288.0);
  EXPECT_LT(f.max_value(), 524288.0);
  EXPECT_EQ(f.step(), std::ldexp(1.0, -44));
  EXPECT_EQ(f.to_string(), "(64,20,signed)");
  EXPECT_THROW((FixedPointFormat{8, 9, true}.validate()), ValidationError);
  EXPECT_THROW((FixedPointFormat{65, 9, true}.validate()), ValidationError);
}

TEST(FixedPoint, SaturationTiesAndSpecials) {
  FixedPointFormat f{8, 4, true};  // [-8, 8 - 1/16]
  EXPECT_EQ(quantize(100.0, f), 8.0 - 0.0625);
  EXPECT_EQ(quantize(-100.0, f), -8.0);
  EXPECT_EQ(quantize(0.03125, f), 0.0);      // tie rounds to even code 0
  EXPECT_EQ(quantize(0.09375, f), 0.125);    // tie rounds to even code 2
  EXPECT_EQ(quantize(std::nan(""), f), 0.0);
  EXPECT_EQ(quantize(INFINITY, f), f.max_value());
  EXPECT_FALSE(std::signbit(quantize(-0.001, f)));
  FixedPointFormat u{4, 2, false};
  EXPECT_EQ(quantize(-1.0, u), 0.0);
  EXPECT_EQ(quantize(5.0, u), 3.75);
}

TEST(FixedPoint, QuantizeIdempotentProperty) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> value(-1e6, 1e6);
  std::uniform_int_distribution<int> width(2, 64);
  for (int t = 0; t < 20000; ++t) {
    int w = width(rng);
    int i = std::uniform_int_distribution<int>(1, w)(rng);
    FixedPointFormat f{w, i, (rng() & 1) != 0};
    double v = value(rng) * std::ldexp(1.0, std::uniform_int_distribution<int>(-30, 0)(rng));
    double q = quantize(v, f);
    ASSERT_EQ(quantize(q, f), q) << f.to_string() << " v=" << v;
    ASSERT_GE(q, f.min_value());
    ASSERT_LE(q, f.max_value());
  }
}

TEST(FixedPoint, ErrorNonIncreasingInWidthProperty) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> value(-7.9, 7.9);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> trace(200);
    for (auto& v : trace) v = value(rng);
    double prev = INFINITY;
    for (int w = 4; w <= 64; ++w) {
      double e = trace_relative_error(trace, FixedPointFormat{w, 4, true});
      ASSERT_LE(e, prev) << "W=" << w;
      prev = e;
    }
  }
}

TEST(FixedPoint, RelativeErrorOfZeroTrace) {
  EXPECT_EQ(trace_relative_error({0.0, 0.0}, FixedPointFormat{8, 4, true}), 0.0);
}

TEST(IntegerBits, Examples) {
  EXPECT_EQ(min_integer_bits(0, 3, false), 2);
  EXPECT_EQ(min_integer_bits(-3.2, 3.0, true), 3);
  EXPECT_EQ(min_integer_bits(-500000, 500000, true), 20);
  EXPECT_EQ(min_integer_bits(-524288, 524287.5, true), 20);
  EXPECT_EQ(min_integer_bits(0, 4, false), 3);
  EXPECT_EQ(min_integer_bits(0, 0, true), 1);
  EXPECT_THROW(min_integer_bits(-1, 1, false), ValidationError);
  EXPECT_THROW(min_integer_bits(2, 1, true), ValidationError);
}

TEST(IntegerBits, CoversRangeProperty) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mag(0, 1e9);
  for (int t = 0; t < 5000; ++t) {
    double a = -mag(rng), b = mag(rng);
    int i = min_integer_bits(a, b, true);
    EXPECT_GE(a, -std::ldexp(1.0, i - 1));
    EXPECT_LT(b, std::ldexp(1.0, i - 1));
    if (i > 1) EXPECT_FALSE(a >= -std::ldexp(1.0, i - 2) && b < std::ldexp(1.0, i - 2));
  }
}

TEST(Reduction, PublishedPercentages) {
  EXPECT_EQ(format_fixed(reduction_percent(64, 17), 1), "73.4");
  EXPECT_EQ(format_fixed(reduction_percent(64, 21), 1), "67.2");
  EXPECT_EQ(format_fixed(reduction_percent(64, 22), 1), "65.6");
  EXPECT_EQ(format_fixed(reduction_percent(64, 45), 1), "29.7");
}

TEST(Search, StepToleranceExample) {
  StepOracle oracle("Calc_t", std::ldexp(1.0, -15));
  auto report = search_widths({candidate("Calc_t", 0, 3)}, oracle);
  ASSERT_EQ(report.types.size(), 1u);
  EXPECT_EQ(report.types[0].after_bits, 17);
  EXPECT_EQ(report.types[0].format, (FixedPointFormat{17, 2, false}));
  EXPECT_EQ(format_fixed(report.types[0].reduction_percent, 1), "73.4");
  EXPECT_EQ(report.oracle_calls, oracle.calls);
}

TEST(Search, BinarySearchMatchesLinearScan) {
  std::mt19937_64 rng(50);
  for (int t = 0; t < 50; ++t) {
    double hi = std::ldexp(1.0, std::uniform_int_distribution<int>(-3, 30)(rng)) * 0.9;
    auto b = candidate("T", 0, hi);
    int max_frac = 64 - b.initial_format().integer_bits;
    double step = std::ldexp(1.0, -std::uniform_int_distribution<int>(0, max_frac)(rng));
    StepOracle oracle("T", step);
    auto report = search_widths({b}, oracle);

    int linear = -1;
    for (int w = std::max(b.initial_format().integer_bits, 2); w <= 64 && linear < 0; ++w) {
      FixedPointFormat f = b.initial_format();
      f.total_bits = w;
      if (f.step() <= step) linear = w;
    }
    ASSERT_EQ(report.types[0].after_bits, linear) << "hi=" << hi << " step=" << step;
  }
}

TEST(Search, GreedyMultiTypeWithTraces) {
  TraceOracle oracle;
  oracle.tolerance = 1e-4;
  oracle.traces["A_t"] = {0.5, 1.25, 2.75, 0.001};
  oracle.traces["B_t"] = {-100.0, 42.42, 7.0};
  std::vector<TypeBudget> budgets = {candidate("A_t", 0, 3), candidate("B_t", -100, 50)};
  auto report = search_widths(budgets, oracle);
  ASSERT_EQ(report.types.size(), 2u);
  for (const auto& tr : report.types) {
    Assignment smaller = report.assignment;
    smaller[tr.typedef_name].total_bits -= 1;
    if (smaller[tr.typedef_name].total_bits >= std::max(smaller[tr.typedef_name].integer_bits, 2))
      EXPECT_FALSE(oracle.evaluate(smaller).pass) << tr.typedef_name;
  }
  EXPECT_TRUE(oracle.evaluate(report.assignment).pass);
}

TEST(Search, AccumulatorsAndCoupledUntouched) {
  StepOracle oracle("Sum_t", 1.0);
  TypeBudget acc = candidate("Sum_t", -1e6, 1e6);
  acc.role = TypeRole::Accumulator;
  TypeBudget coupled = candidate("Dist_t", 0, 10);
  coupled.role = TypeRole::Coupled;
  coupled.coupling_reason = "shares storage with Sum_t";
  auto report = search_widths({acc, coupled}, oracle);
  for (const auto& tr : report.types) {
    EXPECT_EQ(tr.after_bits, 64);
    EXPECT_EQ(tr.reduction_percent, 0.0);
  }
  EXPECT_EQ(report.notes.size(), 2u);
  EXPECT_NE(report.types[1].note.find("shares storage"), std::string::npos);
}

TEST(Search, FailingBaselineAndNondeterminism) {
  StepOracle never("T", 0);
  EXPECT_THROW(search_widths({candidate("T", 0, 3)}, never), Error);
  FlakyOracle flaky;
  EXPECT_THROW(search_widths({candidate("T", 0, 3)}, flaky), Error);
}

TEST(Probe, PrecisionOverRange) {
  TypeBudget b = candidate("Energy_t", -500000, 500000);
  TraceOracle oracle;
  oracle.tolerance = 1e-3;
  std::vector<double> trace;
  for (int j = 0; j < 1000; ++j) trace.push_back(1e-9 * (1.0 + j / 997.0));
  oracle.traces["Energy_t"] = trace;

  std::vector<ProbeStep> steps;
  auto f = precision_first_probe(b, FixedPointFormat{64, 32, true}, oracle, {}, &steps);
  EXPECT_EQ(f, (FixedPointFormat{64, 20, true}));
  ASSERT_EQ(steps.size(), 2u);
  EXPECT_FALSE(steps[0].verdict.pass);
  EXPECT_GT(steps[0].verdict.relative_error, 0.01);
  EXPECT_TRUE(steps[1].verdict.pass);
}

TEST(Probe, AllPassAndAllFail) {
  TypeBudget b = candidate("T", -3.2, 3.0);
  StepOracle always("T", 1.0);
  EXPECT_EQ(precision_first_probe(b, FixedPointFormat{16, 8, true}, always).integer_bits, 3);
  StepOracle never("T", 0);
  try {
    precision_first_probe(b, FixedPointFormat{16, 8, true}, never);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("best relative error"), std::string::npos);
  }
}

TEST(Budgets, ParseAndDefaults) {
  auto bs = parse_budgets(R"([{"typedef_name":"Calc_t","role":"candidate","observed_min":-3.2,"observed_max":3.0},
                              {"typedef_name":"Acc_t","role":"accumulator","observed_min":0,"observed_max":10,"signed":true}])");
  ASSERT_EQ(bs.size(), 2u);
  EXPECT_TRUE(bs[0].signedness());
  EXPECT_EQ(bs[0].initial_format(), (FixedPointFormat{64, 3, true}));
  EXPECT_TRUE(bs[1].signedness());
  EXPECT_THROW(parse_budgets(R"({"a":1})"), ValidationError);
  EXPECT_THROW(parse_budgets(R"([{"typedef_name":"x","role":"weird","observed_min":0,"observed_max":1}])"), ValidationError);
  EXPECT_THROW(parse_budgets(R"([{"typedef_name":"x","role":"candidate","observed_min":0,"observed_max":1},
                                 {"typedef_name":"x","role":"candidate","observed_min":0,"observed_max":1}])"),
               ValidationError);
}

TEST(CommandOracleTest, ParsesAndRuns) {
  EXPECT_TRUE(CommandOracle::parse_output("noise\nPASS\nREL_ERR=1e-7\n").pass);
  EXPECT_THROW(CommandOracle::parse_output("PASS\n"), Error);
  CommandOracle o(R"(grep -q '"total_bits":17' && printf 'PASS\nREL_ERR=0\n' || printf 'FAIL\nREL_ERR=1\n')");
  EXPECT_TRUE(o.evaluate({{"T", FixedPointFormat{17, 2, false}}}).pass);
  EXPECT_FALSE(o.evaluate({{"T", FixedPointFormat{18, 2, false}}}).pass);
}

TEST(Report, TextAndJson) {
  StepOracle oracle("Calc_t", std::ldexp(1.0, -15));
  auto report = search_widths({candidate("Calc_t", 0, 3)}, oracle);
  EXPECT_NE(report.to_text().find("Calc_t"), std::string::npos);
  EXPECT_NE(report.to_json().find("\"after_bits\""), std::string::npos);
}
