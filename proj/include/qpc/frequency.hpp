#pragma once

#include "qpc/rational.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace qpc {

struct FiniteExpansion : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Truncated continued fraction [a0; a_1, ..., a_M].
struct PartialQuotients {
  BigInt a0 = 0;
  std::vector<BigInt> quotients;
  bool finite = false;  // the expanded number was rational and the expansion terminated

  std::size_t depth() const { return quotients.size(); }

  void validate() const {
    if (quotients.size() < 3) throw DomainError("at least three partial quotients are required");
    for (const auto& a : quotients)
      if (a < 1) throw DomainError("partial quotients must be positive");
  }
};

// Gauss-map expansion of a rational x in (0,1).  A terminating expansion is
// returned with finite = true; it is an error only when it is too short to be
// a usable frequency (fewer than three quotients).
inline PartialQuotients expand_real(const Rational& x, std::size_t depth) {
  if (!(x > 0 && x < 1)) throw DomainError("expand_real expects 0 < x < 1");
  if (depth < 1) throw DomainError("expand_real expects depth >= 1");
  PartialQuotients pq;
  Rational y = x;
  while (pq.quotients.size() < depth) {
    if (y == 0) {
      pq.finite = true;
      break;
    }
    Rational inv = 1 / y;
    BigInt a = floor_of(inv);
    pq.quotients.push_back(a);
    y = inv - Rational(a);
  }
  if (y == 0) pq.finite = true;
  if (pq.finite && pq.quotients.size() < std::min<std::size_t>(depth, 3)) {
    std::string seen = "[0;";
    for (std::size_t i = 0; i < pq.quotients.size(); ++i)
      seen += (i ? "," : "") + pq.quotients[i].str();
    throw FiniteExpansion("rational input terminates after " + seen + "]");
  }
  return pq;
}

struct ConvergentRow {
  int n = 0;
  BigInt a;
  BigInt p;
  BigInt q;
  Rational z;  // q_n * alpha_hat - p_n
};

// Exact convergents of a truncated expansion.  alpha_hat = p_M / q_M is the
// exact stand-in for the frequency; level-n structure agrees with the
// infinite expansion for n <= M - 3.
class ConvergentTable {
 public:
  ConvergentTable() = default;

  explicit ConvergentTable(const PartialQuotients& pq) : quotients_(pq) {
    pq.validate();
    BigInt p_prev2 = 0, p_prev1 = 1;  // p_{-2}, p_{-1}
    BigInt q_prev2 = 1, q_prev1 = 0;  // q_{-2}, q_{-1}
    const std::size_t m = pq.depth();
    rows_.reserve(m + 1);
    for (std::size_t n = 0; n <= m; ++n) {
      BigInt a = n == 0 ? pq.a0 : pq.quotients[n - 1];
      BigInt p = a * p_prev1 + p_prev2;
      BigInt q = a * q_prev1 + q_prev2;
      rows_.push_back({static_cast<int>(n), a, p, q, Rational(0)});
      p_prev2 = p_prev1;
      p_prev1 = p;
      q_prev2 = q_prev1;
      q_prev1 = q;
    }
    alpha_ = Rational(rows_.back().p, rows_.back().q);
    for (auto& r : rows_) r.z = Rational(r.q) * alpha_ - Rational(r.p);
  }

  int depth() const { return static_cast<int>(rows_.size()) - 1; }
  const std::vector<ConvergentRow>& rows() const { return rows_; }
  const PartialQuotients& quotients() const { return quotients_; }
  const Rational& alpha_hat() const { return alpha_; }

  const ConvergentRow& row(int n) const {
    if (n < 0 || n > depth()) throw DepthError("convergent index " + std::to_string(n) + " outside table");
    return rows_[static_cast<std::size_t>(n)];
  }
  const BigInt& a(int n) const { return row(n).a; }
  const BigInt& p(int n) const { return row(n).p; }
  const BigInt& q(int n) const { return row(n).q; }
  const Rational& z(int n) const { return row(n).z; }
  Rational abs_z(int n) const { return abs_of(row(n).z); }

  // Deepest level whose return-time structure is exact for alpha_hat.
  int validity_depth() const { return depth() - 3; }

  void require_level(int n, int margin) const {
    if (n < 0 || n + margin > depth())
      throw DepthError("level " + std::to_string(n) + " needs depth >= " + std::to_string(n + margin) +
                       ", table has " + std::to_string(depth()));
  }

 private:
  PartialQuotients quotients_;
  std::vector<ConvergentRow> rows_;
  Rational alpha_;
};

inline ConvergentTable convergents(const PartialQuotients& pq) { return ConvergentTable(pq); }

struct ClassifyParams {
  double gamma = 1.0;
  double tau = 2.0;
  double delta = 0.5;
  double bound = 2.0;  // bounded-type threshold on q_{n+1}/q_n
};

struct LevelClass {
  int n = 0;
  bool evaluated = false;  // q_n >= 3, so log log q_n > 0
  bool bounded_pass = false;
  bool sdc_pass = false;
  bool dc_pass = false;
};

// Finite-truncation estimates; none of these are membership proofs.
struct FrequencyClassReport {
  double beta_hat = 0;          // max log q_{n+1} / q_n
  double beta_delta_hat = 0;    // max log q_{n+1} / q_n^delta
  double bounded_M_hat = 0;     // max q_{n+1} / q_n
  double tail_log_ratio = 0;    // log(q_M / q_{M-1})
  std::vector<LevelClass> levels;
  bool bounded_pass = true;
  bool sdc_pass = true;
  bool dc_pass = true;
  bool caveat = true;
};

inline double log_big(const BigInt& v) {
  // log of a positive big integer without overflowing double
  std::size_t bits = boost::multiprecision::msb(v) + 1;
  if (bits <= 1000) return std::log(v.convert_to<double>());
  std::size_t shift = bits - 64;
  BigInt top = v >> shift;
  return std::log(top.convert_to<double>()) + static_cast<double>(shift) * std::log(2.0);
}

inline FrequencyClassReport classify(const ConvergentTable& table, const ClassifyParams& params) {
  if (table.depth() < 4) throw DepthError("classify needs depth >= 4");
  FrequencyClassReport rep;
  rep.beta_hat = -INFINITY;
  rep.beta_delta_hat = -INFINITY;
  for (int n = 0; n < table.depth(); ++n) {
    const double lq = log_big(table.q(n));
    const double lq1 = log_big(table.q(n + 1));
    const double qn = std::exp(lq);
    rep.beta_hat = std::max(rep.beta_hat, lq1 / qn);
    rep.beta_delta_hat = std::max(rep.beta_delta_hat, lq1 / std::exp(params.delta * lq));
    rep.bounded_M_hat = std::max(rep.bounded_M_hat, std::exp(lq1 - lq));
    LevelClass lc;
    lc.n = n;
    lc.bounded_pass = lq1 - lq <= std::log(params.bound);
    lc.dc_pass = lq1 <= -std::log(params.gamma) + params.tau * lq;
    lc.evaluated = table.q(n) >= 3;
    lc.sdc_pass = lc.evaluated && lq1 <= -std::log(params.gamma) + lq + params.tau * std::log(lq);
    if (lc.evaluated) {
      rep.bounded_pass = rep.bounded_pass && lc.bounded_pass;
      rep.dc_pass = rep.dc_pass && lc.dc_pass;
      rep.sdc_pass = rep.sdc_pass && lc.sdc_pass;
    }
    rep.levels.push_back(lc);
  }
  const int m = table.depth();
  rep.tail_log_ratio = log_big(table.q(m)) - log_big(table.q(m - 1));
  return rep;
}

namespace rules {

struct Constant {
  BigInt a = 1;
};
struct Pattern {
  std::vector<BigInt> values;
};
// a_k = base except at spike positions, where a_k is the least integer with
// q_k >= factor * q_{k-1}.
struct Spike {
  BigInt base = 1;
  std::vector<int> positions;
  BigInt factor = 200;
};
struct Random {
  std::uint64_t seed = 7;
  std::int64_t lo = 1;
  std::int64_t hi = 9;
};
// a_k = k.
struct Linear {};

}  // namespace rules

using GrowthRule = std::variant<rules::Constant, rules::Pattern, rules::Spike, rules::Random, rules::Linear>;

inline PartialQuotients synthesize(const GrowthRule& rule, std::size_t depth) {
  PartialQuotients pq;
  pq.quotients.reserve(depth);
  if (const auto* c = std::get_if<rules::Constant>(&rule)) {
    pq.quotients.assign(depth, c->a);
  } else if (const auto* pat = std::get_if<rules::Pattern>(&rule)) {
    if (pat->values.empty()) throw DomainError("empty pattern");
    for (std::size_t k = 0; k < depth; ++k) pq.quotients.push_back(pat->values[k % pat->values.size()]);
  } else if (const auto* sp = std::get_if<rules::Spike>(&rule)) {
    BigInt q_prev2 = 0, q_prev1 = 1;  // q_{-1}, q_0
    for (std::size_t k = 1; k <= depth; ++k) {
      BigInt a = sp->base;
      bool spike = false;
      for (int pos : sp->positions) spike = spike || pos == static_cast<int>(k);
      if (spike) {
        BigInt need = sp->factor * q_prev1 - q_prev2;
        BigInt a_min = need <= 0 ? BigInt(1) : BigInt((need + q_prev1 - 1) / q_prev1);
        if (a_min > a) a = a_min;
      }
      pq.quotients.push_back(a);
      BigInt q = a * q_prev1 + q_prev2;
      q_prev2 = q_prev1;
      q_prev1 = q;
    }
  } else if (const auto* rnd = std::get_if<rules::Random>(&rule)) {
    if (rnd->lo < 1 || rnd->hi < rnd->lo) throw DomainError("random rule needs 1 <= lo <= hi");
    boost::random::mt19937_64 gen(rnd->seed);
    boost::random::uniform_int_distribution<std::int64_t> dist(rnd->lo, rnd->hi);
    for (std::size_t k = 0; k < depth; ++k) pq.quotients.push_back(BigInt(dist(gen)));
  } else {
    for (std::size_t k = 1; k <= depth; ++k) pq.quotients.push_back(BigInt(static_cast<long>(k)));
  }
  return pq;
}

}  // namespace qpc
