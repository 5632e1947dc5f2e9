#pragma once

#include "qpc/frequency.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace qpc {

// A point of R/Z, kept reduced to [0,1).
class CirclePoint {
 public:
  CirclePoint() = default;
  explicit CirclePoint(const Rational& v) : value_(frac(v)) {}
  const Rational& value() const { return value_; }
  // Representative in [-1/2, 1/2).
  Rational centered() const { return value_ >= Rational(1, 2) ? Rational(value_ - 1) : value_; }
  friend bool operator==(const CirclePoint& a, const CirclePoint& b) { return a.value_ == b.value_; }

 private:
  Rational value_ = 0;
};

enum class Closure { left, right };  // [lo, lo+len) or (lo, lo+len]
enum class Direction { forward, backward };
enum class Convention { asymmetric, symmetric };

inline const char* to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }
inline const char* to_string(Convention c) { return c == Convention::asymmetric ? "asymmetric" : "symmetric"; }

// Arc of the circle of length 0 < len < 1.
struct Arc {
  Rational lo;
  Rational len;
  Closure closure = Closure::left;

  Rational hi() const { return lo + len; }

  bool contains(const Rational& x) const {
    Rational d = frac(x - lo);
    if (closure == Closure::left) return d < len;
    return d > 0 && d <= len;
  }

  Arc shifted(const Rational& by) const { return {frac(lo + by), len, closure}; }

  // Exact inclusion of arcs with the same closure.
  bool includes(const Arc& inner) const {
    if (inner.closure != closure) throw DomainError("arc inclusion needs matching closures");
    Rational d = frac(inner.lo - lo);
    return d + inner.len <= len;
  }

  friend bool operator==(const Arc& a, const Arc& b) {
    return frac(a.lo) == frac(b.lo) && a.len == b.len && a.closure == b.closure;
  }
};

struct SubTag {
  enum class Kind { zero, indexed, star };
  Kind kind = Kind::zero;
  std::int64_t index = 0;

  static SubTag zero() { return {Kind::zero, 0}; }
  static SubTag star() { return {Kind::star, 0}; }
  static SubTag at(std::int64_t i) { return {Kind::indexed, i}; }

  std::string str() const {
    switch (kind) {
      case Kind::zero: return "I0";
      case Kind::star: return "I*";
      default: return "I" + std::to_string(index);
    }
  }
  friend bool operator==(const SubTag& a, const SubTag& b) { return a.kind == b.kind && a.index == b.index; }
  friend bool operator!=(const SubTag& a, const SubTag& b) { return !(a == b); }
};

// I_n together with its return-time partition.  Offsets are measured from
// the base point; the even layout is the one written for even n, the odd
// layout is its mirror.
class CriticalIntervalFamily {
 public:
  CriticalIntervalFamily(const ConvergentTable& table, int n, Convention convention)
      : n_(n), convention_(convention) {
    table.require_level(n, 2);
    z0_ = table.abs_z(n);
    z1_ = table.abs_z(n + 1);
    z2_ = table.abs_z(n + 2);
    qn_ = table.q(n);
    qn1_ = table.q(n + 1);
    qn2_ = table.q(n + 2);
    shift_n_ = table.z(n);
    shift_n1_ = table.z(n + 1);
    const BigInt& a = table.a(n + 2);
    if (!fits_int64(a)) throw CapError("a_{n+2} too large to index subintervals");
    a_next_ = a.convert_to<std::int64_t>();
    odd_layout_ = n % 2 != 0;
    if (convention == Convention::asymmetric) {
      base_ = 0;
      closure_ = odd_layout_ ? Closure::right : Closure::left;
    } else {
      base_ = -half_width();
      closure_ = Closure::left;
    }
  }

  int level() const { return n_; }
  Convention convention() const { return convention_; }
  Closure closure() const { return closure_; }
  bool odd_layout() const { return odd_layout_; }
  const Rational& base() const { return base_; }
  Rational length() const { return z0_ + z1_; }
  Rational half_width() const { return (z0_ + z1_) / 2; }
  const Rational& gap_small() const { return z0_; }   // |z_n|
  const Rational& z_next() const { return z1_; }      // |z_{n+1}|
  const Rational& z_next2() const { return z2_; }     // |z_{n+2}|
  std::int64_t index_count() const { return a_next_; }
  const BigInt& q_n() const { return qn_; }
  const BigInt& q_n1() const { return qn1_; }
  const BigInt& q_n2() const { return qn2_; }
  // T^{q_n} x = x + z_n and T^{q_{n+1}} x = x + z_{n+1} modulo 1.
  const Rational& shift_qn() const { return shift_n_; }
  const Rational& shift_qn1() const { return shift_n1_; }

  Arc whole() const { return {frac(base_), length(), closure_}; }

  Arc piece(const SubTag& tag) const {
    Rational lo, len;
    if (!odd_layout_) {
      switch (tag.kind) {
        case SubTag::Kind::zero: lo = 0; len = z1_; break;
        case SubTag::Kind::star: lo = z1_; len = z2_; break;
        default:
          check_index(tag.index);
          lo = z0_ - Rational(tag.index - 1) * z1_;
          len = z1_;
      }
    } else {
      switch (tag.kind) {
        case SubTag::Kind::zero: lo = z0_; len = z1_; break;
        case SubTag::Kind::star: lo = z0_ - z2_; len = z2_; break;
        default:
          check_index(tag.index);
          lo = Rational(tag.index - 1) * z1_;
          len = z1_;
      }
    }
    return {frac(base_ + lo), len, closure_};
  }

  std::vector<SubTag> tags() const {
    std::vector<SubTag> out{SubTag::zero()};
    for (std::int64_t i = 1; i <= a_next_; ++i) out.push_back(SubTag::at(i));
    out.push_back(SubTag::star());
    return out;
  }

  std::optional<SubTag> locate(const Rational& x) const {
    Rational d = frac(x - base_);
    const Rational len = length();
    if (closure_ == Closure::left) {
      if (d >= len) return std::nullopt;
      if (!odd_layout_) {
        if (d < z1_) return SubTag::zero();
        if (d < z1_ + z2_) return SubTag::star();
        BigInt k = floor_of((d - z0_) / z1_);
        return SubTag::at(1 - k.convert_to<std::int64_t>());
      }
      if (d >= z0_) return SubTag::zero();
      if (d >= z0_ - z2_) return SubTag::star();
      BigInt k = floor_of(d / z1_);
      return SubTag::at(k.convert_to<std::int64_t>() + 1);
    }
    if (d == 0 || d > len) return std::nullopt;
    if (!odd_layout_) throw DomainError("right-closed families use the odd layout");
    if (d > z0_) return SubTag::zero();
    if (d > z0_ - z2_) return SubTag::star();
    BigInt k = ceil_of(d / z1_);
    return SubTag::at(k.convert_to<std::int64_t>());
  }

  bool contains(const Rational& x) const { return whole().contains(x); }

  // Subinterval on which the return time in the given direction is q_n.
  SubTag fast_piece(Direction dir) const { return dir == Direction::forward ? SubTag::zero() : SubTag::at(1); }

 private:
  void check_index(std::int64_t i) const {
    if (i < 1 || i > a_next_) throw DomainError("subinterval index out of range");
  }

  int n_;
  Convention convention_;
  Closure closure_ = Closure::left;
  bool odd_layout_ = false;
  Rational base_;
  Rational z0_, z1_, z2_;
  Rational shift_n_, shift_n1_;
  BigInt qn_, qn1_, qn2_;
  std::int64_t a_next_ = 0;
};

struct ReturnTime {
  BigInt time;
  SubTag piece;
};

inline ReturnTime return_time_closed(const CirclePoint& x, const ConvergentTable& table, int n, Direction dir,
                                     Convention convention = Convention::asymmetric) {
  table.require_level(n, 3);
  CriticalIntervalFamily fam(table, n, convention);
  auto tag = fam.locate(x.value());
  if (!tag) throw DomainError("point " + to_string(x.value()) + " is not in I_" + std::to_string(n));
  const bool fast = *tag == fam.fast_piece(dir);
  return {fast ? fam.q_n() : fam.q_n1(), *tag};
}

// ---------------------------------------------------------------------------
// Integer lattice: circle points j / modulus.  Exact, and fast when Int is a
// machine integer.

template <class Int>
struct Lattice {
  Int modulus;
  Int step;  // alpha_hat * modulus

  Int add(Int p, Int d) const {
    p += d;
    if (p >= modulus) p -= modulus;
    return p;
  }
  Int forward_step(Direction dir) const { return dir == Direction::forward ? step : Int(modulus - step); }
};

template <class Int>
struct LatticeArc {
  Int lo;
  Int len;
  Int modulus;
  Closure closure;

  bool contains(Int p) const {
    Int d = p - lo;
    if (d < 0) d += modulus;
    if (closure == Closure::left) return d < len;
    return d > 0 && d <= len;
  }
};

inline BigInt lattice_index(const Rational& x, const BigInt& modulus) {
  Rational scaled = frac(x) * Rational(modulus);
  if (den_of(scaled) != 1) throw DomainError("point not on lattice");
  return num_of(scaled);
}

inline BigInt lcm_big(const BigInt& a, const BigInt& b) { return a / boost::multiprecision::gcd(a, b) * b; }

// Smallest lattice containing alpha_hat, the level-n endpoints and the point.
inline BigInt lattice_modulus(const ConvergentTable& table, const Rational& x) {
  return lcm_big(BigInt(2) * table.q(table.depth()), den_of(frac(x)));
}

template <class Int>
Int to_int(const BigInt& v) {
  if constexpr (std::is_same_v<Int, BigInt>) {
    return v;
  } else {
    return static_cast<Int>(to_int64(v));
  }
}

template <class Int>
Lattice<Int> make_lattice(const ConvergentTable& table, const BigInt& modulus) {
  return {to_int<Int>(modulus), to_int<Int>(lattice_index(table.alpha_hat(), modulus))};
}

template <class Int>
LatticeArc<Int> to_lattice(const Arc& arc, const BigInt& modulus) {
  Rational len = arc.len * Rational(modulus);
  if (den_of(len) != 1) throw DomainError("arc length not on lattice");
  return {to_int<Int>(lattice_index(arc.lo, modulus)), to_int<Int>(num_of(len)), to_int<Int>(modulus), arc.closure};
}

inline bool lattice_fits_machine(const BigInt& modulus) { return modulus < (BigInt(1) << 62); }

// Smallest j >= first with T^{+-j}(p) in target.
template <class Int>
Int brute_hit(const Lattice<Int>& lat, Int p, const LatticeArc<Int>& target, Direction dir, Int first, Int cap) {
  const Int step = lat.forward_step(dir);
  Int j = 0;
  if (first == 0) {
    if (target.contains(p)) return 0;
  }
  for (j = 1; j <= cap; ++j) {
    p = lat.add(p, step);
    if (target.contains(p)) return j;
  }
  throw CapError("no hit within cap " + BigInt(cap).str());
}

inline BigInt return_time_brute(const CirclePoint& x, const ConvergentTable& table, int n, Direction dir,
                                const BigInt& cap, Convention convention = Convention::asymmetric) {
  CriticalIntervalFamily fam(table, n, convention);
  if (!fam.contains(x.value())) throw DomainError("point is not in I_" + std::to_string(n));
  const BigInt modulus = lattice_modulus(table, x.value());
  if (lattice_fits_machine(modulus) && fits_int64(cap)) {
    auto lat = make_lattice<std::int64_t>(table, modulus);
    auto arc = to_lattice<std::int64_t>(fam.whole(), modulus);
    auto p = to_int<std::int64_t>(lattice_index(x.value(), modulus));
    return BigInt(brute_hit<std::int64_t>(lat, p, arc, dir, 1, to_int64(cap)));
  }
  auto lat = make_lattice<BigInt>(table, modulus);
  auto arc = to_lattice<BigInt>(fam.whole(), modulus);
  return brute_hit<BigInt>(lat, lattice_index(x.value(), modulus), arc, dir, BigInt(1), cap);
}

// ---------------------------------------------------------------------------
// Exact search without iteration: min x >= 0 with l <= (a x) mod m <= r.

inline std::optional<BigInt> mod_range_min(const BigInt& a_in, const BigInt& m, const BigInt& l, const BigInt& r) {
  if (!(0 <= l && l <= r && r < m)) throw DomainError("mod_range_min needs 0 <= l <= r < m");
  const BigInt a = a_in % m;
  if (l == 0) return BigInt(0);
  if (a == 0) return std::nullopt;
  const BigInt k = (l + a - 1) / a;
  if (a * k <= r) return k;
  // a x = l' + m y with y >= 1 minimal: (-m) y mod a must land in [(-r) mod a, (-l) mod a]
  // no multiple of a lies in [l, r] here, so 1 <= lo <= hi < a
  const BigInt lo = (a - r % a) % a, hi = (a - l % a) % a;
  auto y = mod_range_min(m % a, a, lo, hi);
  if (!y) return std::nullopt;
  return BigInt((l + m * *y + a - 1) / a);
}

// Smallest j >= first with (p + j step) mod m in the lattice arc.
inline std::optional<BigInt> first_hit_search(const BigInt& m, const BigInt& step, const BigInt& p,
                                              const LatticeArc<BigInt>& arc, const BigInt& first) {
  // integer range of the arc, possibly wrapping
  BigInt lo = arc.closure == Closure::left ? arc.lo : BigInt((arc.lo + 1) % m);
  const BigInt len = arc.len;
  if (len <= 0) return std::nullopt;
  const BigInt start = (p + step * first) % m;
  std::optional<BigInt> best;
  auto consider = [&](BigInt l, BigInt r) {
    // (start + step j) in [l, r]  <=>  (step j) in [l - start, r - start] mod m
    BigInt sl = ((l - start) % m + m) % m;
    BigInt sr = sl + (r - l);
    std::optional<BigInt> j;
    if (sr < m) {
      j = mod_range_min(step, m, sl, sr);
    } else {
      auto j1 = mod_range_min(step, m, sl, BigInt(m - 1));
      auto j2 = mod_range_min(step, m, BigInt(0), BigInt(sr - m));
      j = j1;
      if (j2 && (!j || *j2 < *j)) j = j2;
    }
    if (j && (!best || *j < *best)) best = j;
  };
  const BigInt hi = lo + len - 1;
  if (hi < m) {
    consider(lo, hi);
  } else {
    consider(lo, m - 1);
    consider(0, hi - m);
  }
  if (best) *best += first;
  return best;
}

inline BigInt search_hit(const ConvergentTable& table, const Rational& x, const Arc& target, Direction dir,
                         int first) {
  const BigInt modulus = lattice_modulus(table, x);
  auto lat = make_lattice<BigInt>(table, modulus);
  auto arc = to_lattice<BigInt>(target, modulus);
  auto hit = first_hit_search(modulus, lat.forward_step(dir), lattice_index(x, modulus), arc, BigInt(first));
  if (!hit) throw CapError("orbit never meets the target arc");
  return *hit;
}

// Same contract as return_time_brute, computed by exact search.
inline BigInt return_time_search(const CirclePoint& x, const ConvergentTable& table, int n, Direction dir,
                                 Convention convention = Convention::asymmetric) {
  CriticalIntervalFamily fam(table, n, convention);
  if (!fam.contains(x.value())) throw DomainError("point is not in I_" + std::to_string(n));
  return search_hit(table, x.value(), fam.whole(), dir, 1);
}

inline BigInt self_return_search(const CirclePoint& x, const ConvergentTable& table, int n) {
  CriticalIntervalFamily fam(table, n, Convention::asymmetric);
  const Arc target = fam.piece(SubTag::zero());
  if (!target.contains(x.value())) throw DomainError("point is not in I_n^0");
  return search_hit(table, x.value(), target, Direction::forward, 1);
}

inline BigInt first_entry_search(const CirclePoint& x, const ConvergentTable& table, int n) {
  table.require_level(n, 2);
  CriticalIntervalFamily fam(table, n, Convention::symmetric);
  return search_hit(table, x.value(), fam.whole(), Direction::forward, 0);
}

// Smallest j >= 1 with T^j x back in the forward fast piece I_n^0.
inline BigInt self_return_brute(const CirclePoint& x, const ConvergentTable& table, int n, const BigInt& cap,
                                Convention convention = Convention::asymmetric) {
  CriticalIntervalFamily fam(table, n, convention);
  const Arc target = fam.piece(SubTag::zero());
  if (!target.contains(x.value())) throw DomainError("point is not in I_n^0");
  const BigInt modulus = lattice_modulus(table, x.value());
  if (lattice_fits_machine(modulus) && fits_int64(cap)) {
    auto lat = make_lattice<std::int64_t>(table, modulus);
    auto arc = to_lattice<std::int64_t>(target, modulus);
    auto p = to_int<std::int64_t>(lattice_index(x.value(), modulus));
    return BigInt(brute_hit<std::int64_t>(lat, p, arc, Direction::forward, 1, to_int64(cap)));
  }
  auto lat = make_lattice<BigInt>(table, modulus);
  auto arc = to_lattice<BigInt>(target, modulus);
  return brute_hit<BigInt>(lat, lattice_index(x.value(), modulus), arc, Direction::forward, BigInt(1), cap);
}

// First j >= 0 with T^j x in the symmetric I_n = [-b_n, b_n).
inline BigInt first_entry_time(const CirclePoint& x, const ConvergentTable& table, int n) {
  table.require_level(n, 2);
  CriticalIntervalFamily fam(table, n, Convention::symmetric);
  const BigInt modulus = lattice_modulus(table, x.value());
  const BigInt cap = fam.q_n1() - 1;
  if (lattice_fits_machine(modulus) && fits_int64(cap)) {
    auto lat = make_lattice<std::int64_t>(table, modulus);
    auto arc = to_lattice<std::int64_t>(fam.whole(), modulus);
    auto p = to_int<std::int64_t>(lattice_index(x.value(), modulus));
    return BigInt(brute_hit<std::int64_t>(lat, p, arc, Direction::forward, 0, to_int64(cap)));
  }
  auto lat = make_lattice<BigInt>(table, modulus);
  auto arc = to_lattice<BigInt>(fam.whole(), modulus);
  return brute_hit<BigInt>(lat, lattice_index(x.value(), modulus), arc, Direction::forward, BigInt(0), cap);
}

// ---------------------------------------------------------------------------
// Three-distance structure of X_n = {q alpha_hat mod 1 : 0 <= q < q_{n+1}}.

struct ThreeDistanceStructure {
  int n = 0;
  BigInt modulus;                      // points are numerators over this modulus
  std::vector<std::int64_t> numerators;  // q of each point, in circular order starting at 0
  std::vector<std::int64_t> positions;   // lattice position of each point
  std::vector<std::int64_t> gaps;        // gap after each point (lattice units)
  std::int64_t small_gap = 0;           // |z_n| * modulus
  std::int64_t large_gap = 0;           // (|z_n| + |z_{n+1}|) * modulus
  std::int64_t large_gap_count = 0;
  bool gaps_two_valued = true;
  bool successor_rule_holds = true;
  std::int64_t first_rule_violation = -1;

  Rational gap(std::size_t i) const { return Rational(BigInt(gaps[i]), modulus); }
};

inline ThreeDistanceStructure three_distance(const ConvergentTable& table, int n,
                                             std::int64_t max_points = 20'000'000) {
  table.require_level(n, 2);
  ThreeDistanceStructure out;
  out.n = n;
  const BigInt Q = table.q(table.depth());
  const BigInt count_big = table.q(n + 1);
  if (!fits_int64(Q) || count_big > max_points) throw CapError("three_distance beyond point budget");
  out.modulus = Q;
  const std::int64_t L = to_int64(Q);
  const std::int64_t step = to_int64(table.p(table.depth()) % Q);
  const std::int64_t count = to_int64(count_big);
  const std::int64_t qn = to_int64(table.q(n));
  std::vector<std::pair<std::int64_t, std::int64_t>> pts;  // (position, q)
  pts.reserve(static_cast<std::size_t>(count));
  std::int64_t pos = 0;
  for (std::int64_t q = 0; q < count; ++q) {
    pts.emplace_back(pos, q);
    pos += step;
    if (pos >= L) pos -= L;
  }
  std::sort(pts.begin(), pts.end());
  out.small_gap = to_int64(num_of(table.abs_z(n) * Rational(Q)));
  out.large_gap = to_int64(num_of((table.abs_z(n) + table.abs_z(n + 1)) * Rational(Q)));
  const std::size_t m = pts.size();
  out.numerators.resize(m);
  out.positions.resize(m);
  out.gaps.resize(m);
  const bool even = n % 2 == 0;
  for (std::size_t i = 0; i < m; ++i) {
    out.positions[i] = pts[i].first;
    out.numerators[i] = pts[i].second;
    std::int64_t next = i + 1 < m ? pts[i + 1].first : pts[0].first + L;
    out.gaps[i] = next - pts[i].first;
    if (out.gaps[i] == out.large_gap) ++out.large_gap_count;
    else if (out.gaps[i] != out.small_gap) out.gaps_two_valued = false;
  }
  // Even n: the gap after the point with numerator q is |z_n| iff q < q_{n+1} - q_n.
  // Odd n: the same statement holds for the gap before the point.
  for (std::size_t i = 0; i < m; ++i) {
    const std::int64_t q = out.numerators[i];
    const std::int64_t g = even ? out.gaps[i] : out.gaps[(i + m - 1) % m];
    const std::int64_t expect = q < count - qn ? out.small_gap : out.large_gap;
    if (g != expect && out.successor_rule_holds) {
      out.successor_rule_holds = false;
      out.first_rule_violation = q;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Image chain of the return map on the asymmetric partition.

struct ImageCheck {
  SubTag source;
  BigInt time;
  std::vector<SubTag> image;  // target pieces
  bool exact = false;         // equality (single target) or inclusion (union)
};

inline ImageCheck return_map_image(const ConvergentTable& table, int n, const SubTag& sub,
                                   Convention convention = Convention::asymmetric) {
  CriticalIntervalFamily fam(table, n, convention);
  const std::int64_t a = fam.index_count();
  ImageCheck out;
  out.source = sub;
  if (sub.kind == SubTag::Kind::zero) {
    out.time = fam.q_n();
    out.image = {SubTag::at(1)};
    out.exact = fam.piece(sub).shifted(fam.shift_qn()) == fam.piece(SubTag::at(1));
    return out;
  }
  out.time = fam.q_n1();
  const Arc moved = fam.piece(sub).shifted(fam.shift_qn1());
  if (sub.kind == SubTag::Kind::indexed && sub.index < a) {
    out.image = {SubTag::at(sub.index + 1)};
    out.exact = moved == fam.piece(out.image[0]);
    return out;
  }
  if (sub.kind == SubTag::Kind::indexed) {
    out.image = {SubTag::star(), SubTag::zero()};
    const Arc star = fam.piece(SubTag::star());
    const Arc zero = fam.piece(SubTag::zero());
    // I^* and I^0 are adjacent; their union is a single arc.
    Arc uni = fam.odd_layout() ? Arc{star.lo, star.len + zero.len, star.closure}
                               : Arc{zero.lo, zero.len + star.len, zero.closure};
    out.exact = uni.includes(moved);
    return out;
  }
  out.image = {SubTag::zero()};
  out.exact = fam.piece(SubTag::zero()).includes(moved);
  return out;
}

}  // namespace qpc
