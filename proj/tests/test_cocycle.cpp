#include <gtest/gtest.h>

#include "qpc/suites.hpp"

using namespace qpc;

namespace {

std::shared_ptr<const ConvergentTable> golden() { return parse_frequency("golden:20").table(); }

CocycleSpec rot_hyp(double lambda, PhiField phi, std::shared_ptr<const ConvergentTable> t = golden()) {
  CocycleSpec s{std::move(t), generators::RotHyp{std::log(lambda), std::move(phi)}};
  s.validate();
  return s;
}

CocycleSpec wavy(double lambda) {
  return rot_hyp(lambda, function_phi([](double x) { return 1.0 + 0.6 * std::cos(2 * kPi * x); }));
}

}  // namespace

TEST(Iterate, ZeroIsIdentity) {
  const auto m = iterate(wavy(30), CirclePoint(Rational(1, 7)), 0);
  EXPECT_EQ(m.log_norm(), 0.0);
  EXPECT_EQ(m.unit().a, 1.0);
  EXPECT_EQ(m.unit().d, 1.0);
}

TEST(Iterate, HalfPiPhaseGivesPowersOfLambda) {
  const auto spec = rot_hyp(30, constant_phi(kPi / 2));
  for (std::int64_t n : {1, 10, 1000}) {
    const auto m = iterate(spec, CirclePoint(Rational(2, 9)), n);
    EXPECT_NEAR(m.log_norm(), static_cast<double>(n) * std::log(30.0), 1e-12 * static_cast<double>(n));
  }
}

TEST(Iterate, CocycleIdentity) {
  const auto spec = wavy(20);
  auto gen = stream(2, 200);
  boost::random::uniform_int_distribution<int> len(0, 400), num(0, 999);
  const BigInt mod = golden()->q(golden()->depth());
  for (int i = 0; i < 200; ++i) {
    const std::int64_t m = len(gen), n = len(gen);
    const CirclePoint x(Rational(num(gen), 1000));
    const CirclePoint tnx(x.value() + Rational(n) * spec.frequency->alpha_hat());
    const auto whole = iterate(spec, x, m + n);
    const auto split = compose(iterate(spec, tnx, m), iterate(spec, x, n));
    EXPECT_LE(log_relative_distance(whole, split), 1e-9) << "m=" << m << " n=" << n;
  }
}

TEST(Iterate, InverseConsistency) {
  const auto spec = wavy(20);
  for (std::int64_t n : {1, 17, 250}) {
    const CirclePoint x(Rational(3, 11));
    const CirclePoint back(x.value() - Rational(n) * spec.frequency->alpha_hat());
    const auto neg = iterate(spec, x, -n);
    const auto inv = iterate(spec, back, n).inverse();
    EXPECT_LE(log_relative_distance(neg, inv), 1e-9);
  }
}

TEST(Iterate, Budget) { EXPECT_THROW(iterate(wavy(2), CirclePoint(Rational(0)), 20'000'000), CapError); }

TEST(FiniteLE, RotationIsZero) {
  const auto spec = rot_hyp(1, function_phi([](double x) { return 0.3 + std::sin(2 * kPi * x); }));
  const auto est = finite_le(spec, 10000, 64);
  EXPECT_LE(std::abs(est.value), 1e-12);
}

TEST(FiniteLE, ConstantLambdaIsLogLambda) {
  const auto est = finite_le(rot_hyp(30, constant_phi(kPi / 2)), 1000, 32);
  EXPECT_NEAR(est.value, std::log(30.0), 1e-13);
  EXPECT_NEAR(est.std_error, 0, 1e-13);
}

// S = (3, -1; 1, 0) has spectral radius (3 + sqrt 5)/2.  The finite-horizon
// estimate carries an O(1/N) term log(c)/N from the eigenbasis change; check
// that it decays like 1/N rather than asserting 1e-9 at N = 1e4.
TEST(FiniteLE, SchrodingerFreeConvergesAtRateOneOverN) {
  const CocycleSpec spec{golden(), generators::Schrodinger{3.0, constant_phi(0.0)}};
  const double exact = std::log((3 + std::sqrt(5.0)) / 2);
  const double b3 = finite_le(spec, 1000, 8).value - exact;
  const double b4 = finite_le(spec, 10000, 8).value - exact;
  EXPECT_GT(b4, 0);
  EXPECT_NEAR(b3 / b4, 10.0, 0.01);
  EXPECT_NEAR(b4, 2.9e-5, 0.2e-5);
}

TEST(FiniteLE, EmptyExclusionMatches) {
  const auto spec = wavy(10);
  const auto a = finite_le(spec, 200, 128), b = finite_le_excluding(spec, 200, 128, ArcUnion{});
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(b.excluded_fraction, 0);
}

TEST(FiniteLE, ExcludedFractionTracksMeasure) {
  const auto spec = wavy(10);
  const ArcUnion ex({Arc{Rational(1, 10), Rational(1, 40), Closure::left}, Arc{Rational(7, 10), Rational(3, 80), Closure::left}});
  for (std::int64_t g : {100, 333, 1024}) {
    const auto est = finite_le_excluding(spec, 50, g, ex);
    EXPECT_LE(std::abs(est.excluded_fraction - to_double(ex.total_length())), 2.0 / static_cast<double>(g));
  }
  EXPECT_THROW(finite_le_excluding(spec, 10, 16, ArcUnion({Arc{0, 1, Closure::left}})), DomainError);
}

TEST(FiniteLE, DeterministicAcrossWorkers) {
  const auto spec = wavy(10);
  const auto a = finite_le(spec, 300, 97, 1), b = finite_le(spec, 300, 97, 4);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(FiniteLE, Subadditive) {
  const auto spec = wavy(5);
  const std::int64_t G = 128;
  auto total = [&](std::int64_t n) { return finite_le(spec, n, G).value * static_cast<double>(n); };
  for (auto [m, n] : {std::pair<std::int64_t, std::int64_t>{10, 15}, {40, 60}, {100, 33}}) {
    const auto e = finite_le(spec, m + n, G);
    EXPECT_LE(total(m + n), total(m) + total(n) + 3 * e.std_error * static_cast<double>(m + n));
  }
}

TEST(Frames, ConstantLambda) {
  const auto spec = rot_hyp(30, constant_phi(kPi / 2));
  CriticalIntervalFamily fam(*spec.frequency, 4, Convention::symmetric);
  std::vector<Rational> xs;
  for (int k = 0; k < 10; ++k) xs.push_back(frac(fam.whole().lo + fam.whole().len * Rational(k, 10)));
  for (const auto& f : frame_fields(spec, 4, xs)) {
    EXPECT_TRUE(f.well_defined);
    EXPECT_NEAR(angle_diff(f.s_angle, kPi / 2), 0, 1e-12);
    EXPECT_NEAR(angle_diff(f.u_angle, 0), 0, 1e-12);
  }
}

TEST(Frames, RotationIsFlagged) {
  const auto spec = rot_hyp(1, constant_phi(0.2));
  const auto f = frame_fields(spec, 3, {Rational(0)});
  EXPECT_FALSE(f[0].well_defined);
}
