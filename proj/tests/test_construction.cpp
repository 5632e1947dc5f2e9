#include <gtest/gtest.h>

#include "qpc/suites.hpp"

using namespace qpc;

namespace {

double fd_derivative(const std::function<double(double)>& f, double t, double h = 1e-5) {
  return (f(t + h) - f(t - h)) / (2 * h);
}

ExperimentConfig desk() { return load_config(std::string(QPC_SOURCE_DIR) + "/configs/desk.json"); }

}  // namespace

TEST(SampleFunction, ClCoreAndRange) {
  const SampleFunction f(classes::Cl{});
  for (double t : {0.0, 0.1, 0.3, 0.5}) {
    EXPECT_NEAR(f.eval_theta(t), t * t, 1e-15);
    EXPECT_NEAR(f(t / (2 * kPi)), t * t, 1e-14);
  }
  for (double t = 0.51; t < kPi; t += 0.05) {
    const double v = f.eval_theta(t);
    EXPECT_GT(v, 0.25);
    EXPECT_LT(v, kPi / 2);
  }
  for (double x = -0.5; x < 0.5; x += 0.01) EXPECT_EQ(f(x), f(-x));
}

TEST(SampleFunction, ClIsC1AcrossSeams) {
  const SampleFunction f(classes::Cl{});
  auto g = [&](double t) { return f.eval_theta(t); };
  for (double seam : {0.5, 1.0}) {
    const double left = fd_derivative(g, seam - 1e-4), right = fd_derivative(g, seam + 1e-4);
    EXPECT_NEAR(left, right, 1e-3) << "seam " << seam;
    EXPECT_NEAR(f.theta_derivative(seam - 1e-9, 1), f.theta_derivative(seam + 1e-9, 1), 1e-6);
  }
}

TEST(SampleFunction, UniqueZeroAndNonnegative) {
  for (SmoothnessClass c : {SmoothnessClass(classes::Cl{}), SmoothnessClass(classes::Cinf{}),
                            SmoothnessClass(classes::Gevrey{})}) {
    const SampleFunction f(c);
    EXPECT_EQ(f(0.0), 0.0) << class_name(c);
    for (int k = 1; k < 1000; ++k) {
      const double x = -0.5 + k / 1000.0;
      if (k == 500) continue;
      EXPECT_GT(f(x), 0.0) << class_name(c) << " x=" << x;
    }
  }
}

TEST(SampleFunction, CinfAndGevreyFormulas) {
  const classes::Cinf ci;
  const SampleFunction fc(ci);
  for (double t : {0.2, 1.0, 3.0, 5.5}) {
    const double expect = std::exp(-std::pow(std::log(8 * kPi / t), ci.sigma) -
                                   std::pow(std::log(8 * kPi / (2 * kPi - t)), ci.sigma));
    EXPECT_NEAR(fc.eval_theta(t), expect, 1e-14);
  }
  const classes::Gevrey gv;
  const SampleFunction fg(gv);
  const double p = 1 / (gv.s - 1);
  for (double t : {0.3, 2.0, 4.0}) {
    const double expect = std::exp(-std::pow(t, -p) - std::pow(2 * kPi - t, -p));
    EXPECT_NEAR(fg.eval_theta(t), expect, 1e-14);
  }
}

TEST(Bump, ValuesAndMonotonicity) {
  const auto t = parse_frequency("golden:15").table();
  const auto f = bump(5, 2.0, *t);
  const double b = f.half_width_value();
  EXPECT_EQ(f(0.0), 1.0);
  EXPECT_EQ(f(b / 10), 1.0);
  EXPECT_EQ(f(b), 0.0);
  EXPECT_EQ(f(-b), 0.0);
  double prev = 1.0;
  for (int k = 0; k <= 1000; ++k) {
    const double x = b / 10 + (b - b / 10) * k / 1000.0;
    EXPECT_LE(f(x), prev);
    EXPECT_EQ(f(x), f(-x));
    prev = f(x);
  }
}

TEST(Spline, ReproducesLinearData) {
  std::vector<double> y;
  for (int i = 0; i < 10; ++i) y.push_back(2.0 - 0.5 * i);
  const NaturalSpline s(1.0, 0.25, y);
  for (double x = 0.5; x < 4.0; x += 0.07) EXPECT_NEAR(s(x), 2.0 - 0.5 * (x - 1.0) / 0.25, 1e-12);
}

TEST(Spline, ConvergesOnSmoothData) {
  auto err = [](int k) {
    std::vector<double> y;
    const double h = 1.0 / (k - 1);
    for (int i = 0; i < k; ++i) y.push_back(std::sin(1 + i * h));
    const NaturalSpline s(0, h, y);
    double e = 0;
    for (double x = 0.25; x < 0.75; x += 0.001) e = std::max(e, std::abs(s(x) - std::sin(1 + x)));
    return e;
  };
  EXPECT_LT(err(129), err(65) / 10);
}

TEST(Schedule, GoldenClFirstLevel) {
  const auto t = parse_frequency("golden:15").table();
  const auto s = lambda_schedule(classes::Cl{}, std::log(30.0), 3, 6, *t, 0.1, 1e3);
  const double b3 = to_double((t->abs_z(3) + t->abs_z(4)) / 2);
  // b_N in the 2 pi-periodic variable
  EXPECT_NEAR(s.log_lambda_n[0], std::log(30.0) + 2 * std::log(2 * kPi * b3), 1e-12);
  // q_3 = 3 < 16 makes the factor 1 - 4 q^{-1/2} negative, so the schedule is flagged
  EXPECT_FALSE(s.strictly_decreasing);
  EXPECT_FALSE(s.all_above_one);
  for (std::size_t i = 1; i < s.log_lambda_n.size(); ++i) {
    const double q = q_double(*t, 3 + static_cast<int>(i) - 1);
    EXPECT_NEAR(s.log_lambda_n[i], (1 - 4 / std::sqrt(q)) * s.log_lambda_n[i - 1], 1e-12);
  }
}

TEST(Schedule, MonotoneInEveryClass) {
  // monotone once q_{N-1} > 16 and the first level is still above one
  const auto t = parse_frequency("spike:1:7:200:14").table();
  for (SmoothnessClass c : {SmoothnessClass(classes::Cl{}), SmoothnessClass(classes::Cinf{}),
                            SmoothnessClass(classes::Gevrey{})}) {
    const auto s = lambda_schedule(c, 100.0, 8, 11, *t, 0.1, 1e3);
    EXPECT_TRUE(s.strictly_decreasing) << class_name(c);
    for (std::size_t i = 1; i < s.log_lambda_n.size(); ++i) EXPECT_LT(s.log_lambda_n[i], s.log_lambda_n[i - 1]);
  }
}

TEST(ExceptionalSet, MeasureAndMembership) {
  const auto t = parse_frequency("spike:1:7:200:12").table();
  for (int n = 3; n <= 5; ++n) {
    const auto bn = exceptional_set(*t, n);
    const BigInt q = t->q(n + 1);
    EXPECT_EQ(bn.ball_count, boost::multiprecision::sqrt(BigInt(q * q * q)));
    EXPECT_LE(to_double(bn.measure), 2 / std::sqrt(to_double(Rational(q))));
    EXPECT_TRUE(bn.contains(frac(-t->alpha_hat())));
    for (std::size_t i = 1; i < bn.intervals.size(); ++i) EXPECT_LT(bn.intervals[i - 1].hi(), bn.intervals[i].lo);
  }
  // frozen desk value at n = 5
  const auto b5 = exceptional_set(*t, 5);
  EXPECT_EQ(b5.ball_count, 46);
  EXPECT_EQ(b5.intervals.size(), 13u);
  EXPECT_NEAR(to_double(b5.measure), 0.16646023000841673, 1e-15);
}

TEST(Seminorm, ConstantAndSine) {
  const auto c = gevrey_seminorm([](double, int k) { return k == 0 ? -2.5 : 0.0; }, 1.0, 2.0, 10.0, 6);
  EXPECT_NEAR(c.value, 4 * kPi * kPi / 3 * 2.5, 1e-12);
  auto sine = [](double x, int k) {
    const double w = std::pow(2 * kPi, k);
    switch (k % 4) {
      case 0: return w * std::sin(2 * kPi * x);
      case 1: return w * std::cos(2 * kPi * x);
      case 2: return -w * std::sin(2 * kPi * x);
      default: return -w * std::cos(2 * kPi * x);
    }
  };
  EXPECT_EQ(gevrey_seminorm(sine, 1.0, 2.0, 1e3, 8).argmax_order, 0);
}

TEST(Seminorm, GevreySampleIsFinite) {
  const SampleFunction f(classes::Gevrey{});
  const auto r = gevrey_seminorm([&](double t, int k) { return f.theta_derivative(t + kPi, k); }, 2 * kPi, 2.5, 5.0, 8);
  EXPECT_TRUE(std::isfinite(r.value));
  EXPECT_GT(r.value, 0);
}

TEST(DeskStep, BuildAndTilde) {
  const auto cfg = desk();
  const auto table = cfg.frequency.table();
  const auto ctx = make_context(cfg, table, cfg.lambda);
  // frozen schedule value at the desk level
  EXPECT_NEAR(ctx.schedule.log_lambda_at(5), 0.56457723763141798, 1e-12);
  const CorrectionLedger base(ctx.base);
  const auto built = build_phi_n(base, 5, ctx);
  ASSERT_TRUE(built.report.accepted) << (built.report.failures.empty() ? "" : built.report.failures.front());
  EXPECT_LE(built.report.identity_residual, 1e-6);
  EXPECT_TRUE(built.report.support_exact);
  EXPECT_EQ(built.report.hyperbolicity.failures, 0);
  const double b = built.ledger.steps().back()->bump.half_width_value();
  for (double x = b * 1.0001; x < 0.5; x += 0.0037) {
    EXPECT_EQ(built.ledger.phi(x), ctx.base(x));
    EXPECT_EQ(built.ledger.phi(-x), ctx.base(-x));
  }
  const auto tilde = build_phi_tilde_n(built.ledger, 5, ctx);
  ASSERT_TRUE(tilde.report.accepted) << (tilde.report.failures.empty() ? "" : tilde.report.failures.front());
  EXPECT_LE(tilde.report.identity_residual, 1e-8);
  for (double x = b * 1.0001; x < 0.5; x += 0.0037) EXPECT_EQ(tilde.ledger.phi_tilde(x), tilde.ledger.phi(x));
  const auto trace = cancellation_trace(tilde.ledger, 5, ctx);
  EXPECT_TRUE(trace.available);
  EXPECT_TRUE(trace.holds);
}

TEST(DeskStep, RejectsOutOfOrderLevels) {
  const auto cfg = desk();
  const auto ctx = make_context(cfg, cfg.frequency.table(), cfg.lambda);
  const auto built = build_phi_n(CorrectionLedger(ctx.base), 5, ctx);
  EXPECT_THROW(build_phi_n(built.ledger, 5, ctx), DomainError);
}
