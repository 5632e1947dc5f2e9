#include <gtest/gtest.h>

#include "qpc/config.hpp"

using namespace qpc;

namespace {

ConvergentTable table_of(const std::string& text) { return *parse_frequency(text).table(); }

void expect_table_identities(const ConvergentTable& t) {
  for (int n = 0; n + 1 <= t.depth(); ++n) {
    EXPECT_EQ(Rational(t.q(n + 1)) * t.abs_z(n) + Rational(t.q(n)) * t.abs_z(n + 1), Rational(1)) << "n=" << n;
    if (n <= t.validity_depth()) {  // strict bounds need the tail beyond n+1
      EXPECT_LT(Rational(1) / Rational(t.q(n) + t.q(n + 1)), t.abs_z(n));
      EXPECT_LT(t.abs_z(n), Rational(1) / Rational(t.q(n + 1)));
    }
    EXPECT_EQ(boost::multiprecision::gcd(t.p(n), t.q(n)), 1);
  }
  for (int n = 1; n < t.depth(); ++n) {
    EXPECT_EQ(t.z(n) > 0, n % 2 == 0) << "sign of z_" << n;
    if (n <= t.validity_depth()) {
      EXPECT_LT(t.abs_z(n), t.abs_z(n - 1));
    }
    EXPECT_LE(t.q(n), t.q(n + 1));
  }
  // z_n = a_n z_{n-1} + z_{n-2} with z_{-1} = -1, z_0 = alpha - a_0
  Rational zm2 = -1, zm1 = t.alpha_hat() - Rational(t.a(0));
  EXPECT_EQ(zm1, t.z(0));
  for (int n = 1; n <= t.depth(); ++n) {
    const Rational z = Rational(t.a(n)) * zm1 + zm2;
    EXPECT_EQ(z, t.z(n));
    zm2 = zm1;
    zm1 = z;
  }
}

}  // namespace

TEST(ExpandReal, SevenTenthsTerminates) {
  const auto pq = expand_real(Rational(7, 10), 4);
  EXPECT_TRUE(pq.finite);
  ASSERT_EQ(pq.quotients.size(), 3u);
  EXPECT_EQ(pq.quotients[0], 1);
  EXPECT_EQ(pq.quotients[1], 2);
  EXPECT_EQ(pq.quotients[2], 3);
}

TEST(ExpandReal, GoldenDigits) {
  const Rational golden = parse_rational("618033988749894848204586834365638117720309179805762862135448/"
                                         "1000000000000000000000000000000000000000000000000000000000000");
  const auto pq = expand_real(golden, 10);
  ASSERT_EQ(pq.quotients.size(), 10u);
  for (const auto& a : pq.quotients) EXPECT_EQ(a, 1);
}

TEST(ExpandReal, HalfIsTooShort) { EXPECT_THROW(expand_real(Rational(1, 2), 3), FiniteExpansion); }

TEST(ExpandReal, RejectsOutsideUnitInterval) {
  EXPECT_THROW(expand_real(Rational(3, 2), 4), DomainError);
  EXPECT_THROW(expand_real(Rational(0), 4), DomainError);
}

TEST(Convergents, SevenTenthsRows) {
  const ConvergentTable t(expand_real(Rational(7, 10), 4));
  const std::vector<std::pair<int, int>> pq{{0, 1}, {1, 1}, {2, 3}, {7, 10}};
  ASSERT_EQ(t.depth(), 3);
  for (int n = 0; n <= 3; ++n) {
    EXPECT_EQ(t.p(n), pq[n].first);
    EXPECT_EQ(t.q(n), pq[n].second);
  }
  EXPECT_EQ(t.alpha_hat(), Rational(7, 10));
}

TEST(Convergents, GoldenIsFibonacci) {
  const auto t = table_of("golden:20");
  BigInt a = 1, b = 1;
  for (int n = 0; n <= 20; ++n) {
    EXPECT_EQ(t.q(n), a);
    const BigInt c = a + b;
    a = b;
    b = c;
  }
}

TEST(Convergents, IdentitiesHoldForEveryRule) {
  for (const char* f : {"golden:30", "silver:25", "spike:1:5:200:15", "random:7:1:9:20", "linear:15",
                        "spike:2:3,6:1000:12", "cf:0;3,1,4,1,5,9,2,6"})
    expect_table_identities(table_of(f));
}

TEST(Convergents, BestApproximation) {
  const auto t = table_of("random:7:1:9:12");
  const Rational alpha = t.alpha_hat();
  for (int n = 1; n + 1 <= 6; ++n) {
    const std::int64_t qn1 = to_int64(t.q(n + 1));
    ASSERT_LE(qn1, 100000);
    for (std::int64_t q = 1; q < qn1; ++q) {
      if (q == to_int64(t.q(n))) continue;
      const Rational x = Rational(q) * alpha;
      const Rational f = frac(x);
      const Rational dist = f < Rational(1, 2) ? f : 1 - f;
      EXPECT_GT(dist, t.abs_z(n)) << "q=" << q << " n=" << n;
    }
  }
}

TEST(Convergents, ValidityDepth) {
  const auto t = table_of("golden:12");
  EXPECT_EQ(t.validity_depth(), 9);
  EXPECT_THROW(t.require_level(11, 3), DepthError);
}

TEST(Synthesize, ConstantOneIsGolden) {
  const auto pq = synthesize(rules::Constant{1}, 8);
  ASSERT_EQ(pq.depth(), 8u);
  for (const auto& a : pq.quotients) EXPECT_EQ(a, 1);
}

TEST(Synthesize, SpikeMultipliesDenominator) {
  const auto t = table_of("spike:1:5:200:15");
  EXPECT_GE(t.a(5), 200);
  EXPECT_GE(t.q(5), 200 * t.q(4));
  // frozen: 1 1 2 3 5 1003 1008 2011 3019 5030
  const std::vector<int> q{1, 1, 2, 3, 5, 1003, 1008, 2011, 3019, 5030};
  for (int n = 0; n < 10; ++n) EXPECT_EQ(t.q(n), q[n]);
}

TEST(Synthesize, RandomIsDeterministic) {
  const auto a = synthesize(rules::Random{7, 1, 9}, 15);
  const auto b = synthesize(rules::Random{7, 1, 9}, 15);
  EXPECT_EQ(a.quotients, b.quotients);
  for (const auto& v : a.quotients) {
    EXPECT_GE(v, 1);
    EXPECT_LE(v, 9);
  }
  // frozen seed-7 prefix
  const std::vector<int> expect{7, 9, 2, 9, 2, 1, 8, 9, 3, 7, 7, 6, 4, 3, 8};
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(a.quotients[i], expect[i]);
}

TEST(Synthesize, LinearDenominators) {
  const auto t = table_of("linear:10");
  const std::vector<std::int64_t> q{1, 1, 3, 10, 43, 225, 1393, 9976, 81201, 740785, 7489051};
  for (int n = 0; n <= 10; ++n) EXPECT_EQ(t.q(n), q[static_cast<std::size_t>(n)]);
}

TEST(Classify, GoldenIsBoundedType) {
  const auto rep = classify(table_of("golden:30"), {});
  EXPECT_LE(rep.bounded_M_hat, 2.0);
  EXPECT_TRUE(rep.bounded_pass);
  EXPECT_NEAR(rep.tail_log_ratio, std::log((1 + std::sqrt(5.0)) / 2), 1e-10);
  EXPECT_TRUE(rep.caveat);
}

TEST(Classify, LinearFailsBoundedPassesDC) {
  ClassifyParams p;
  p.gamma = 0.1;
  p.tau = 2;
  const auto rep = classify(table_of("linear:15"), p);
  EXPECT_FALSE(rep.bounded_pass);
  EXPECT_TRUE(rep.dc_pass);
  for (const auto& l : rep.levels) EXPECT_TRUE(l.dc_pass) << "n=" << l.n;
}

TEST(Classify, DoublingRuleDirectEvaluation) {
  // a_{k+1} = q_k makes q_{n+1} close to q_n^2, so log q_{n+1} / q_n^delta
  // decays with n and both maxima are reached at the first levels.
  auto build = [](int depth) {
    std::vector<BigInt> a;
    BigInt q_prev = 0, q = 1;  // q_{-1}, q_0
    for (int k = 1; k <= depth; ++k) {
      a.push_back(q);
      const BigInt next = q * q + q_prev;
      q_prev = q;
      q = next;
    }
    return ConvergentTable(PartialQuotients{0, a, false});
  };
  ClassifyParams p;
  p.delta = 0.5;
  const auto shallow = classify(build(6), p), deep = classify(build(9), p);
  EXPECT_LT(deep.beta_hat, 2.0);
  EXPECT_EQ(deep.beta_delta_hat, shallow.beta_delta_hat);
  const auto t = build(9);
  double direct = -INFINITY;
  for (const auto& l : deep.levels) {
    const double lq = log_big(t.q(l.n)), lq1 = log_big(t.q(l.n + 1));
    direct = std::max(direct, lq1 / std::exp(0.5 * lq));
  }
  EXPECT_DOUBLE_EQ(deep.beta_delta_hat, direct);
}

TEST(FrequencyConfig, JsonRoundTrip) {
  for (const char* f : {"golden:12", "spike:1:7:200:12", "random:7:1:9:15", "linear:10", "rational:113/355:6",
                        "cf:0;1,2,3"}) {
    const auto spec = parse_frequency(f);
    const Json j = to_json(spec);
    EXPECT_EQ(to_json(frequency_from_json(j)), j) << f;
  }
}

TEST(FrequencyConfig, RejectsUnknownFields) {
  Json j = {{"rule", "linear"}, {"depth", 8}, {"extra", 1}};
  EXPECT_THROW(frequency_from_json(j), ConfigError);
  EXPECT_THROW(parse_frequency("bogus:3"), ConfigError);
}
