#pragma once

#include "qpc/orbit.hpp"
#include "qpc/rational.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace qpc {

constexpr double kPi = std::numbers::pi;
constexpr double kLn2 = std::numbers::ln2;

struct Mat2 {
  double a = 1, b = 0;
  double c = 0, d = 1;

  friend Mat2 operator*(const Mat2& x, const Mat2& y) {
    return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d, x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d};
  }
  Mat2 scaled(double s) const { return {a * s, b * s, c * s, d * s}; }
  Mat2 adjugate() const { return {d, -b, -c, a}; }
  Mat2 transposed() const { return {a, c, b, d}; }
  double det() const { return a * d - b * c; }
  bool finite() const { return std::isfinite(a) && std::isfinite(b) && std::isfinite(c) && std::isfinite(d); }
};

inline Mat2 rotation(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c, -s, s, c};
}

inline Mat2 diagonal(double x, double y) { return {x, 0, 0, y}; }

// M = R(left) * diag(sigma1, sigma2) * R(right), sigma1 >= |sigma2|.
struct Svd2 {
  double sigma1 = 0;
  double sigma2 = 0;
  double left = 0;
  double right = 0;
};

inline Svd2 svd2(const Mat2& m) {
  const double e = (m.a + m.d) / 2, f = (m.a - m.d) / 2;
  const double g = (m.c + m.b) / 2, h = (m.c - m.b) / 2;
  const double q = std::sqrt(e * e + h * h), r = std::sqrt(f * f + g * g);
  const double a1 = std::atan2(g, f), a2 = std::atan2(h, e);
  return {q + r, q - r, (a2 + a1) / 2, (a2 - a1) / 2};
}

inline double op_norm(const Mat2& m) {
  const double e = m.a + m.d, f = m.a - m.d, g = m.c + m.b, h = m.c - m.b;
  return (std::sqrt(e * e + h * h) + std::sqrt(f * f + g * g)) / 2;
}

inline double frobenius(const Mat2& m) { return std::sqrt(m.a * m.a + m.b * m.b + m.c * m.c + m.d * m.d); }

// Representative of an RP^1 angle in [0, pi).
inline double canonical_angle(double t) {
  double r = std::fmod(t, kPi);
  if (r < 0) r += kPi;
  if (r >= kPi) r -= kPi;
  return r;
}

// a - b as an RP^1 difference in (-pi/2, pi/2].
inline double angle_diff(double a, double b) {
  double d = std::fmod(a - b, kPi);
  if (d > kPi / 2) d -= kPi;
  if (d <= -kPi / 2) d += kPi;
  return d;
}

// 2^exp2 * unit with ||unit|| in [1, 2).  Scaling by powers of two is exact,
// so log-scales accumulate without rounding.
class LogScaledMat2 {
 public:
  LogScaledMat2() = default;

  static LogScaledMat2 from(const Mat2& m) {
    LogScaledMat2 out;
    out.unit_ = m;
    out.normalize();
    return out;
  }

  static LogScaledMat2 from_log(const Mat2& unit, double logscale) {
    const double k = std::floor(logscale / kLn2);
    LogScaledMat2 out;
    out.unit_ = unit.scaled(std::exp(logscale - k * kLn2));
    out.exp2_ = static_cast<std::int64_t>(k);
    out.normalize();
    return out;
  }

  const Mat2& unit() const { return unit_; }
  std::int64_t exp2() const { return exp2_; }
  double logscale() const { return static_cast<double>(exp2_) * kLn2; }
  double log_norm() const { return logscale() + std::log(op_norm(unit_)); }
  std::uint64_t op_count() const { return ops_; }

  // Matrix value; overflows for large log-scales.
  Mat2 value() const { return unit_.scaled(std::ldexp(1.0, static_cast<int>(exp2_))); }

  // Inverse of an SL(2,R) element: its adjugate.
  LogScaledMat2 inverse() const {
    LogScaledMat2 out = *this;
    out.unit_ = unit_.adjugate();
    return out;
  }

  // this <- m * this
  void left_multiply(const Mat2& m) {
    unit_ = m * unit_;
    ++ops_;
    normalize();
  }

  // 2c + log|det(unit)|; empty when det(unit) is not a normal double.
  std::optional<double> det_residual() const {
    const double dt = std::abs(unit_.det());
    if (!(dt >= std::numeric_limits<double>::min())) return std::nullopt;
    return 2 * logscale() + std::log(dt);
  }

  friend LogScaledMat2 compose(const LogScaledMat2& b, const LogScaledMat2& a) {
    LogScaledMat2 out;
    out.unit_ = b.unit_ * a.unit_;
    out.exp2_ = a.exp2_ + b.exp2_;
    out.ops_ = a.ops_ + b.ops_ + 1;
    out.normalize();
    return out;
  }

 private:
  void normalize() {
    const double n = op_norm(unit_);
    if (!(n > 0) || !std::isfinite(n)) return;
    int e = 0;
    std::frexp(n, &e);
    const int shift = e - 1;
    if (shift == 0) return;
    unit_ = {std::ldexp(unit_.a, -shift), std::ldexp(unit_.b, -shift), std::ldexp(unit_.c, -shift),
             std::ldexp(unit_.d, -shift)};
    exp2_ += shift;
  }

  Mat2 unit_{};
  std::int64_t exp2_ = 0;
  std::uint64_t ops_ = 0;
};

inline LogScaledMat2 operator*(const LogScaledMat2& b, const LogScaledMat2& a) { return compose(b, a); }

// Relative distance between two log-scaled matrices, measured after bringing
// both to the larger scale.
inline double log_relative_distance(const LogScaledMat2& x, const LogScaledMat2& y) {
  const std::int64_t k = std::max(x.exp2(), y.exp2());
  const Mat2 ux = x.unit().scaled(std::ldexp(1.0, static_cast<int>(std::max<std::int64_t>(x.exp2() - k, -1074))));
  const Mat2 uy = y.unit().scaled(std::ldexp(1.0, static_cast<int>(std::max<std::int64_t>(y.exp2() - k, -1074))));
  const Mat2 d{ux.a - uy.a, ux.b - uy.b, ux.c - uy.c, ux.d - uy.d};
  return frobenius(d) / std::max(frobenius(ux), frobenius(uy));
}

// A = R_u * diag(e^l, e^-l) * R_{pi/2 - s}.
struct FrameDecomp {
  double u_angle = 0;
  double log_norm = 0;
  double s_angle = 0;
  bool well_defined = false;
};

constexpr double kDefaultFrameFloor = 10.0;

inline FrameDecomp svd_frame(const LogScaledMat2& m, double frame_floor = kDefaultFrameFloor) {
  const Svd2 sv = svd2(m.unit());
  FrameDecomp f;
  f.log_norm = m.logscale() + std::log(sv.sigma1);
  f.u_angle = canonical_angle(sv.left);
  f.s_angle = canonical_angle(kPi / 2 - sv.right);
  f.well_defined = f.log_norm >= std::log(frame_floor);
  return f;
}

inline FrameDecomp svd_frame(const Mat2& m, double frame_floor = kDefaultFrameFloor) {
  return svd_frame(LogScaledMat2::from(m), frame_floor);
}

inline Mat2 frame_matrix(const FrameDecomp& f) {
  const double e = std::exp(f.log_norm);
  return rotation(f.u_angle) * diagonal(e, 1 / e) * rotation(kPi / 2 - f.s_angle);
}

struct IllDefinedFrame : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// s(next) - u(prev) in (-pi/2, pi/2].
inline double angle_between(const FrameDecomp& prev, const FrameDecomp& next) {
  if (!prev.well_defined || !next.well_defined) throw IllDefinedFrame("angle between ill-defined frames");
  return angle_diff(next.s_angle, prev.u_angle);
}

// ---------------------------------------------------------------------------
// Product lemmas.

struct NonresonantReport {
  bool admissible = false;
  double e0 = 0, e1 = 0, e2 = 0, e3 = 0;
  double theta = 0;
  double predicted = 0;    // e1 e2 |sin theta|
  double discrepancy = 0;  // |e3 - predicted|
  double norm_bound = 0;   // 10 e0^{-1/2}
  double drift_u = 0;      // |u3 - u2|
  double drift_s = 0;      // |s3 - s1|
  double bound_u = 0;      // e2^{-7/4}
  double bound_s = 0;      // e1^{-7/4}
  bool passes = false;
};

constexpr double kNonresonantConstant = 10.0;

// E3 = E2 E1 with theta = s(E2) - u(E1).
inline NonresonantReport nonresonant_product_check(const LogScaledMat2& e1m, const LogScaledMat2& e2m, double eta) {
  NonresonantReport r;
  const FrameDecomp f1 = svd_frame(e1m, 1.0), f2 = svd_frame(e2m, 1.0);
  const LogScaledMat2 e3m = compose(e2m, e1m);
  const FrameDecomp f3 = svd_frame(e3m, 1.0);
  r.e1 = std::exp(f1.log_norm);
  r.e2 = std::exp(f2.log_norm);
  r.e3 = std::exp(f3.log_norm);
  r.e0 = std::min(r.e1, r.e2);
  r.theta = angle_diff(f2.s_angle, f1.u_angle);
  r.admissible = eta <= 1e-2 && r.e0 > 1 && std::isfinite(r.e3) && std::abs(r.theta) >= std::pow(r.e0, -eta);
  if (!r.admissible) return r;
  r.predicted = r.e1 * r.e2 * std::abs(std::sin(r.theta));
  r.discrepancy = std::abs(r.e3 - r.predicted);
  r.norm_bound = kNonresonantConstant / std::sqrt(r.e0);
  r.drift_u = std::abs(angle_diff(f3.u_angle, f2.u_angle));
  r.drift_s = std::abs(angle_diff(f3.s_angle, f1.s_angle));
  r.bound_u = std::pow(r.e2, -1.75);
  r.bound_s = std::pow(r.e1, -1.75);
  r.passes = r.discrepancy <= r.norm_bound && r.drift_u <= r.bound_u && r.drift_s <= r.bound_s;
  return r;
}

// ||block|| = base^power, in log form.
struct BlockScale {
  double log_base = 0;
  double power = 1;
  double log_norm() const { return log_base * power; }
};

struct ResonantReport {
  bool aligned = false;
  double angle = 0;
  double log_norm_product = 0;  // log ||BA||
  double log_bound = 0;         // log(2 max{l1^m l2^-n, l1^n l2^-m})
  bool holds = false;
};

constexpr double kAlignmentTolerance = 1e-12;

inline ResonantReport resonant_cancellation_check(const LogScaledMat2& a, const LogScaledMat2& b, BlockScale sa,
                                                  BlockScale sb) {
  ResonantReport r;
  const FrameDecomp fa = svd_frame(a, 1.0), fb = svd_frame(b, 1.0);
  r.angle = angle_diff(fb.s_angle, fa.u_angle);
  r.aligned = std::abs(r.angle) <= kAlignmentTolerance;
  r.log_norm_product = compose(b, a).log_norm();
  const double t1 = sa.log_base * sa.power - sb.log_base * sb.power;
  const double t2 = sa.log_base * sb.power - sb.log_base * sa.power;
  r.log_bound = kLn2 + std::max(t1, t2);
  r.holds = r.log_norm_product <= r.log_bound;
  return r;
}

struct HyperbolicityReport {
  bool passes = false;
  double worst_ratio = 0;  // min_i log||A^i|| / (i (1 - eps) log mu)
  Direction direction = Direction::forward;
  std::size_t worst_index = 0;  // i attaining the minimum
  double forward_ratio = 0;
  double backward_ratio = 0;
  double max_step_log_norm = 0;
  bool vacuous = false;  // (1 - eps) log mu <= 0: growth condition is empty
  std::optional<std::size_t> first_forward_failure;  // block index closing the first failing forward product
};

constexpr double kRatioSlack = 1e-12;

// Forward partial products A_{i-1}...A_0 and backward partial products
// A_{n-1}...A_{n-i} (the norms of the inverse products), i = 1..n.
inline HyperbolicityReport check_mu_hyperbolic(const std::vector<Mat2>& blocks, double mu, double lambda, double eps) {
  if (blocks.empty()) throw DomainError("check_mu_hyperbolic needs a nonempty block");
  HyperbolicityReport r;
  const double rate = (1 - eps) * std::log(mu);
  r.vacuous = !(rate > 0);
  r.max_step_log_norm = -INFINITY;
  for (const auto& m : blocks) r.max_step_log_norm = std::max(r.max_step_log_norm, std::log(op_norm(m)));
  auto scan = [&](bool forward, double& ratio, std::size_t& where) {
    ratio = INFINITY;
    where = 0;
    LogScaledMat2 p;
    const std::size_t n = blocks.size();
    for (std::size_t i = 1; i <= n; ++i) {
      const Mat2& m = forward ? blocks[i - 1] : blocks[n - i];
      if (forward) p.left_multiply(m);
      else p = compose(p, LogScaledMat2::from(m));
      if (r.vacuous) continue;
      const double q = p.log_norm() / (static_cast<double>(i) * rate);
      if (forward && q < 1 - kRatioSlack && !r.first_forward_failure) r.first_forward_failure = i - 1;
      if (q < ratio) {
        ratio = q;
        where = i;
      }
    }
  };
  std::size_t wf = 0, wb = 0;
  scan(true, r.forward_ratio, wf);
  scan(false, r.backward_ratio, wb);
  if (r.backward_ratio < r.forward_ratio) {
    r.worst_ratio = r.backward_ratio;
    r.direction = Direction::backward;
    r.worst_index = wb;
  } else {
    r.worst_ratio = r.forward_ratio;
    r.direction = Direction::forward;
    r.worst_index = wf;
  }
  r.passes = r.worst_ratio >= 1 - kRatioSlack && r.max_step_log_norm <= std::log(lambda) + kRatioSlack;
  return r;
}

// Sum over k_1 + 2k_2 + ... + n k_n = n of k!/(k_1!...k_n!) R^k, k = sum k_i.
inline Rational faa_di_bruno_partition_sum(int n, const Rational& R) {
  if (n < 1 || n > 20) throw DomainError("partition sum supports 1 <= n <= 20");
  std::vector<BigInt> fact(static_cast<std::size_t>(n) + 1, BigInt(1));
  for (int i = 1; i <= n; ++i) fact[static_cast<std::size_t>(i)] = fact[static_cast<std::size_t>(i) - 1] * i;
  std::vector<Rational> rpow(static_cast<std::size_t>(n) + 1, Rational(1));
  for (int i = 1; i <= n; ++i) rpow[static_cast<std::size_t>(i)] = rpow[static_cast<std::size_t>(i) - 1] * R;
  Rational total = 0;
  // parts chosen in decreasing order: part size j, remaining sum, current k and 1/prod k_i!
  std::function<void(int, int, int, BigInt)> rec = [&](int j, int remaining, int k, BigInt denom) {
    if (remaining == 0) {
      total += Rational(fact[static_cast<std::size_t>(k)], denom) * rpow[static_cast<std::size_t>(k)];
      return;
    }
    if (j == 0) return;
    for (int kj = 0; kj * j <= remaining; ++kj)
      rec(j - 1, remaining - kj * j, k + kj, denom * fact[static_cast<std::size_t>(kj)]);
  };
  rec(n, n, 0, BigInt(1));
  return total;
}

inline Rational faa_di_bruno_closed_form(int n, const Rational& R) {
  Rational out = R;
  for (int i = 1; i < n; ++i) out *= (1 + R);
  return out;
}

// Finite-difference derivatives of the product frame along a parameter.
struct DriftOrder {
  int k = 0;
  double max_abs_norm_derivative = 0;  // max |d^k log e3|
  double max_abs_drift_derivative = 0; // max |d^k (u3 - u2)|
  double lemma_shape = 0;              // k! e2^{-2 + (k+1) eta}
  double fitted_constant = 0;          // (max drift derivative / shape)^{1/k}
  double norm_ratio = 0;               // max |d^k e3| / e3^{1 + k eta}
  bool inconclusive = false;           // Richardson disagreement above 10%
};

struct DriftReport {
  std::vector<DriftOrder> orders;
  bool inconclusive = false;
};

using MatrixField = std::function<Mat2(double)>;

inline DriftReport derivative_drift_check(const MatrixField& e1, const MatrixField& e2, double x0, double x1, int k_max,
                                          double eta, int grid = 21) {
  if (k_max < 1 || k_max > 2) throw DomainError("derivative_drift_check supports orders 1 and 2");
  struct Sample {
    double log_e3, drift, e2;
  };
  auto eval = [&](double x) {
    const LogScaledMat2 a = LogScaledMat2::from(e1(x)), b = LogScaledMat2::from(e2(x));
    const FrameDecomp f2 = svd_frame(b, 1.0), f3 = svd_frame(compose(b, a), 1.0);
    return Sample{f3.log_norm, angle_diff(f3.u_angle, f2.u_angle), std::exp(f2.log_norm)};
  };
  const double span = x1 - x0;
  DriftReport rep;
  for (int k = 1; k <= k_max; ++k) {
    DriftOrder d;
    d.k = k;
    double worst_shape_e2 = INFINITY;
    for (int i = 0; i < grid; ++i) {
      const double x = x0 + span * (i + 0.5) / grid;
      auto fd = [&](double h, auto pick) {
        if (k == 1) return (pick(eval(x + h)) - pick(eval(x - h))) / (2 * h);
        return (pick(eval(x + h)) - 2 * pick(eval(x)) + pick(eval(x - h))) / (h * h);
      };
      auto pick_log = [](const Sample& s) { return s.log_e3; };
      auto pick_drift = [](const Sample& s) { return s.drift; };
      const double h = span * 1e-3;
      const double dl_h = fd(h, pick_log), dl_h2 = fd(h / 2, pick_log);
      const double dd_h = fd(h, pick_drift), dd_h2 = fd(h / 2, pick_drift);
      const double rich_l = dl_h2 + (dl_h2 - dl_h) / 3, rich_d = dd_h2 + (dd_h2 - dd_h) / 3;
      auto disagree = [](double a, double b) {
        const double scale = std::max(std::abs(a), std::abs(b));
        return scale > 1e-9 && std::abs(a - b) > 0.1 * scale;
      };
      if (disagree(dl_h2, rich_l) || disagree(dd_h2, rich_d)) d.inconclusive = true;
      const Sample s = eval(x);
      d.max_abs_norm_derivative = std::max(d.max_abs_norm_derivative, std::abs(rich_l));
      d.max_abs_drift_derivative = std::max(d.max_abs_drift_derivative, std::abs(rich_d));
      d.norm_ratio = std::max(d.norm_ratio, std::abs(rich_l) * std::exp(s.log_e3) /
                                                std::exp((1 + k * eta) * s.log_e3));
      worst_shape_e2 = std::min(worst_shape_e2, s.e2);
    }
    double kfact = k == 1 ? 1.0 : 2.0;
    d.lemma_shape = kfact * std::pow(worst_shape_e2, -2 + (k + 1) * eta);
    d.fitted_constant = std::pow(d.max_abs_drift_derivative / d.lemma_shape, 1.0 / k);
    rep.inconclusive = rep.inconclusive || d.inconclusive;
    rep.orders.push_back(d);
  }
  return rep;
}

}  // namespace qpc
