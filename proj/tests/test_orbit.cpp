#include <gtest/gtest.h>

#include "qpc/suites.hpp"

using namespace qpc;

namespace {

std::shared_ptr<const ConvergentTable> table_of(const std::string& text) { return parse_frequency(text).table(); }

BigInt cap_for(const ConvergentTable& t, int n) { return t.q(n) + t.q(n + 1) + t.q(n + 2); }

}  // namespace

TEST(ThreeDistance, GoldenLevelTwo) {
  const auto t = table_of("golden:12");
  const auto td = three_distance(*t, 2);
  ASSERT_EQ(t->q(3), 3);
  EXPECT_EQ(td.gaps.size(), 3u);
  EXPECT_TRUE(td.gaps_two_valued);
  EXPECT_TRUE(td.successor_rule_holds);
  for (std::size_t i = 0; i < td.gaps.size(); ++i) {
    const Rational g = td.gap(i);
    EXPECT_TRUE(g == t->abs_z(2) || g == t->abs_z(2) + t->abs_z(3));
  }
}

TEST(ThreeDistance, LargeGapCountIsQn) {
  for (const char* f : {"golden:15", "silver:12", "spike:1:5:200:12", "random:7:1:9:10", "linear:9"}) {
    const auto t = table_of(f);
    for (int n = 1; n <= t->validity_depth(); ++n) {
      if (t->q(n + 1) > 200000) break;
      const auto td = three_distance(*t, n);
      EXPECT_TRUE(td.gaps_two_valued) << f << " n=" << n;
      EXPECT_TRUE(td.successor_rule_holds) << f << " n=" << n;
      EXPECT_EQ(BigInt(td.large_gap_count), t->q(n)) << f << " n=" << n;
    }
  }
}

TEST(ThreeDistance, CountsFollowRecurrenceWhenQuotientIsOne) {
  const auto t = table_of("golden:15");
  for (int n = 2; n <= 8; ++n) {
    ASSERT_EQ(t->a(n + 1), 1);
    const auto td = three_distance(*t, n);
    EXPECT_EQ(BigInt(static_cast<std::int64_t>(td.gaps.size())), t->q(n) + t->q(n - 1));
  }
}

TEST(ThreeDistance, BudgetIsEnforced) {
  const auto t = table_of("linear:14");
  EXPECT_THROW(three_distance(*t, 10, 1000), CapError);
}

TEST(Partition, CoverIsExactAndDisjoint) {
  for (const char* f : {"golden:14", "spike:1:5:200:12", "random:7:1:9:12"}) {
    const auto t = table_of(f);
    for (int n = 2; n <= 7; ++n)
      for (Convention conv : {Convention::asymmetric, Convention::symmetric}) {
        CriticalIntervalFamily fam(*t, n, conv);
        Rational total = 0;
        for (const auto& tag : fam.tags()) {
          const Arc p = fam.piece(tag);
          total += p.len;
          EXPECT_TRUE(fam.whole().includes(p)) << f << " n=" << n << " " << tag.str();
          // interior and closed endpoint locate back to the piece
          EXPECT_EQ(*fam.locate(p.lo + p.len / 2), tag);
          EXPECT_EQ(*fam.locate(closed_endpoint(p)), tag);
        }
        EXPECT_EQ(total, fam.length());
      }
  }
}

TEST(Partition, AsymmetricClosures) {
  const auto t = table_of("golden:14");
  EXPECT_EQ(CriticalIntervalFamily(*t, 4, Convention::asymmetric).closure(), Closure::left);
  EXPECT_EQ(CriticalIntervalFamily(*t, 5, Convention::asymmetric).closure(), Closure::right);
  EXPECT_EQ(CriticalIntervalFamily(*t, 5, Convention::symmetric).closure(), Closure::left);
}

TEST(ReturnTime, ZeroOnEvenLevelIsFast) {
  const auto t = table_of("golden:14");
  for (int n : {2, 4, 6}) {
    const auto r = return_time_closed(CirclePoint(Rational(0)), *t, n, Direction::forward);
    EXPECT_EQ(r.time, t->q(n));
    EXPECT_EQ(r.piece, SubTag::zero());
  }
}

TEST(ReturnTime, StarLeftEndpointIsSlow) {
  const auto t = table_of("spike:1:5:200:12");
  for (int n : {2, 4}) {
    const auto r = return_time_closed(CirclePoint(t->abs_z(n + 1)), *t, n, Direction::forward);
    EXPECT_EQ(r.time, t->q(n + 1));
    EXPECT_EQ(r.piece, SubTag::star());
  }
}

TEST(ReturnTime, ClosedMatchesBruteOnSmallLevels) {
  auto gen = stream(3, 0);
  for (const char* f : {"golden:14", "silver:12", "spike:1:5:200:12", "random:7:1:9:12", "linear:10"}) {
    const auto t = table_of(f);
    for (int n = 2; n <= 5; ++n)
      for (Convention conv : {Convention::asymmetric, Convention::symmetric}) {
        CriticalIntervalFamily fam(*t, n, conv);
        for (const auto& tag : fam.tags()) {
          std::vector<Rational> xs{closed_endpoint(fam.piece(tag))};
          for (int k = 0; k < 5; ++k) xs.push_back(sample_in(fam.piece(tag), gen));
          for (const auto& x : xs)
            for (Direction d : {Direction::forward, Direction::backward}) {
              const auto closed = return_time_closed(CirclePoint(x), *t, n, d, conv);
              EXPECT_EQ(closed.time, return_time_brute(CirclePoint(x), *t, n, d, cap_for(*t, n), conv))
                  << f << " n=" << n << " x=" << to_string(x);
              EXPECT_EQ(closed.time, return_time_search(CirclePoint(x), *t, n, d, conv));
            }
        }
      }
  }
}

// Fast-return sets measured by brute force on the symmetric interval [-b_n, b_n),
// as offsets from -b_n.  Frozen from a 2000-point scan.
TEST(ReturnTime, SymmetricPartitionGolden) {
  const auto t = table_of("golden:15");
  struct Frozen {
    int n;
    Rational fwd_lo, fwd_len, bwd_lo, bwd_len;
  };
  for (const auto& fz : {Frozen{4, 0, Rational(55, 987), Rational(89, 987), Rational(55, 987)},
                         Frozen{5, Rational(55, 987), Rational(34, 987), 0, Rational(34, 987)}}) {
    CriticalIntervalFamily fam(*t, fz.n, Convention::symmetric);
    const Arc whole = fam.whole();
    EXPECT_EQ(fam.piece(fam.fast_piece(Direction::forward)), (Arc{frac(whole.lo + fz.fwd_lo), fz.fwd_len, Closure::left}));
    EXPECT_EQ(fam.piece(fam.fast_piece(Direction::backward)),
              (Arc{frac(whole.lo + fz.bwd_lo), fz.bwd_len, Closure::left}));
    const int K = 400;
    for (int k = 0; k < K; ++k) {
      const Rational x = frac(whole.lo + whole.len * Rational(k, K));
      for (Direction d : {Direction::forward, Direction::backward}) {
        const BigInt r = return_time_brute(CirclePoint(x), *t, fz.n, d, cap_for(*t, fz.n), Convention::symmetric);
        EXPECT_TRUE(r == t->q(fz.n) || r == t->q(fz.n + 1));
        EXPECT_EQ(r == t->q(fz.n), fam.piece(fam.fast_piece(d)).contains(x)) << "n=" << fz.n << " k=" << k;
      }
    }
  }
}

TEST(ReturnTime, BruteHonoursCap) {
  const auto t = table_of("golden:14");
  EXPECT_THROW(return_time_brute(CirclePoint(Rational(0)), *t, 6, Direction::forward, BigInt(3)), CapError);
  EXPECT_THROW(return_time_closed(CirclePoint(Rational(1, 2)), *t, 6, Direction::forward), DomainError);
}

TEST(SelfReturn, InZeroPiece) {
  auto gen = stream(5, 0);
  for (const char* f : {"golden:14", "spike:1:5:200:12", "linear:10"}) {
    const auto t = table_of(f);
    for (int n = 2; n <= 5; ++n) {
      CriticalIntervalFamily fam(*t, n, Convention::asymmetric);
      for (int k = 0; k < 20; ++k) {
        const Rational x = sample_in(fam.piece(SubTag::zero()), gen);
        const BigInt r = self_return_brute(CirclePoint(x), *t, n, t->q(n + 2) + t->q(n + 1));
        EXPECT_TRUE(r == t->q(n + 2) || r == t->q(n + 2) + t->q(n + 1)) << f << " n=" << n;
        EXPECT_EQ(r, self_return_search(CirclePoint(x), *t, n));
      }
    }
  }
}

TEST(FirstEntry, InsideIsZero) {
  const auto t = table_of("golden:14");
  EXPECT_EQ(first_entry_time(CirclePoint(Rational(0)), *t, 4), 0);
}

TEST(FirstEntry, AntipodalGoldenLevelFour) {
  const auto t = table_of("golden:14");
  const BigInt e = first_entry_time(CirclePoint(Rational(1, 2)), *t, 4);
  EXPECT_LT(e, 8);
  EXPECT_EQ(e, first_entry_search(CirclePoint(Rational(1, 2)), *t, 4));
}

TEST(FirstEntry, RandomPhasesBelowQnPlusOne) {
  auto gen = stream(9, 0);
  const auto t = table_of("random:7:1:9:12");
  for (int n = 2; n <= 7; ++n)
    for (int k = 0; k < 1000; ++k) {
      const Rational x = sample_in(Arc{0, 1, Closure::left}, gen);
      EXPECT_LT(first_entry_search(CirclePoint(x), *t, n), t->q(n + 1));
    }
}

TEST(ReturnMap, Images) {
  for (const char* f : {"golden:14", "spike:1:5:200:12"}) {
    const auto t = table_of(f);
    for (int n = 2; n <= 6; ++n) {
      CriticalIntervalFamily fam(*t, n, Convention::asymmetric);
      const auto z = return_map_image(*t, n, SubTag::zero());
      EXPECT_TRUE(z.exact);
      EXPECT_EQ(z.image.front(), SubTag::at(1));
      for (const auto& tag : fam.tags()) EXPECT_TRUE(return_map_image(*t, n, tag).exact) << f << " " << tag.str();
      if (fam.index_count() >= 2) {
        const auto one = return_map_image(*t, n, SubTag::at(1));
        EXPECT_EQ(one.image.front(), SubTag::at(2));
        EXPECT_EQ(one.time, t->q(n + 1));
      }
    }
  }
}

TEST(ModRangeMin, AgreesWithScan) {
  auto gen = stream(11, 0);
  boost::random::uniform_int_distribution<int> mod(2, 300);
  for (int trial = 0; trial < 3000; ++trial) {
    const int m = mod(gen);
    boost::random::uniform_int_distribution<int> in(0, m - 1);
    const int a = in(gen);
    int l = in(gen), r = in(gen);
    if (l > r) std::swap(l, r);
    std::optional<int> expect;
    for (int x = 0; x < m && !expect; ++x)
      if ((a * x) % m >= l && (a * x) % m <= r) expect = x;
    const auto got = mod_range_min(BigInt(a), BigInt(m), BigInt(l), BigInt(r));
    ASSERT_EQ(got.has_value(), expect.has_value()) << a << " " << m << " " << l << " " << r;
    if (got) {
      EXPECT_EQ(*got, *expect);
    }
  }
}
