#pragma once

#include "qpc/cocycle.hpp"
#include "qpc/jet.hpp"

#include <boost/multiprecision/integer.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace qpc {

constexpr int kMaxDerivativeOrder = 8;
using DerivJet = Jet<kMaxDerivativeOrder>;

// ---------------------------------------------------------------------------
// Sample functions.  Each is written in the 2pi-periodic variable theta and
// evaluated at theta = 2 pi x for the centered phase x.

namespace classes {

struct Cl {
  int l = 1;
  double delta0 = 0.5;
  double delta1 = 1.0;    // end of the ramp
  double plateau = 1.5;   // value for |theta| >= delta1
};

struct Cinf {
  double sigma = 1.5;
  double brjuno_delta = 0.25;  // delta of the Brjuno-type condition, sigma sqrt(delta) < 1
};

struct Gevrey {
  double s = 3.0;
  bool strong = false;  // SDC schedule instead of DC
  double tau = 1.5;
  double gamma = 1.0;
};

}  // namespace classes

using SmoothnessClass = std::variant<classes::Cl, classes::Cinf, classes::Gevrey>;

inline std::string class_name(const SmoothnessClass& c) {
  if (std::holds_alternative<classes::Cl>(c)) return "Cl";
  if (std::holds_alternative<classes::Cinf>(c)) return "Cinf";
  return "Gevrey";
}

inline void validate_class(const SmoothnessClass& c) {
  if (const auto* p = std::get_if<classes::Cl>(&c)) {
    if (p->l < 1 || p->l > 6) throw DomainError("Cl needs 1 <= l <= 6");
    if (!(p->delta0 > 0 && p->delta0 < p->delta1 && p->delta1 < kPi)) throw DomainError("Cl needs 0 < delta0 < delta1 < pi");
    if (!(std::pow(p->delta1, p->l + 1) < kPi / 2)) throw DomainError("Cl needs delta1^(l+1) < pi/2");
    if (!(p->plateau > std::pow(p->delta0, p->l + 1) && p->plateau < kPi / 2))
      throw DomainError("Cl plateau must lie in (delta0^(l+1), pi/2)");
  } else if (const auto* p = std::get_if<classes::Cinf>(&c)) {
    if (!(p->sigma > 1)) throw DomainError("Cinf needs sigma > 1");
    if (!(p->brjuno_delta > 0 && p->brjuno_delta < 1)) throw DomainError("Cinf needs 0 < delta < 1");
    if (!(p->sigma * std::sqrt(p->brjuno_delta) < 1)) throw DomainError("Cinf needs sigma sqrt(delta) < 1");
  } else {
    const auto& g = std::get<classes::Gevrey>(c);
    if (!(g.s > 1)) throw DomainError("Gevrey needs s > 1");
    if (g.strong && !(g.s > 2)) throw DomainError("Gevrey SDC schedule needs s > 2");
    if (!g.strong && !(g.tau > 1 && g.s > g.tau + 1)) throw DomainError("Gevrey DC schedule needs tau > 1, s > tau + 1");
    if (!(g.gamma > 0)) throw DomainError("Gevrey needs gamma > 0");
  }
}

// psi(t) = g(t) / (g(t) + g(1-t)) with g(t) = exp(-t^{-p}); 0 for t <= 0, 1 for t >= 1.
template <class T>
T smooth_step(const T& t, double p = 1.0) {
  using std::exp;
  using std::pow;
  const double tv = value_of(t);
  if (tv <= 0) return constant_like<T>(0.0);
  if (tv >= 1) return constant_like<T>(1.0);
  const T a = exp(-pow(t, -p));
  const T b = exp(-pow(1.0 - t, -p));
  if (value_of(b) == 0) return constant_like<T>(1.0);
  return a / (a + b);
}

class SampleFunction {
 public:
  SampleFunction() : cls_(classes::Cl{}) {}
  explicit SampleFunction(SmoothnessClass cls) : cls_(std::move(cls)) { validate_class(cls_); }

  const SmoothnessClass& smoothness() const { return cls_; }

  template <class T>
  T eval_theta(const T& theta) const {
    using std::exp;
    using std::log;
    using std::pow;
    const T t = value_of(theta) < 0 ? T(-theta) : theta;
    const double tv = value_of(t);
    if (const auto* p = std::get_if<classes::Cl>(&cls_)) {
      if (tv >= p->delta1) return constant_like<T>(p->plateau);
      const T core = ipow(t, p->l + 1);
      if (tv <= p->delta0) return core;
      const T psi = smooth_step((t - p->delta0) / (p->delta1 - p->delta0));
      return (1.0 - psi) * core + psi * p->plateau;
    }
    if (tv == 0) return constant_like<T>(0.0);
    const double two_pi = 2 * kPi;
    if (const auto* p = std::get_if<classes::Cinf>(&cls_)) {
      const T l1 = log((8 * kPi) / t), l2 = log((8 * kPi) / (two_pi - t));
      return exp(-pow(l1, p->sigma) - pow(l2, p->sigma));
    }
    const auto& g = std::get<classes::Gevrey>(cls_);
    const double e = 1.0 / (g.s - 1);
    return exp(-pow(t, -e) - pow(two_pi - t, -e));
  }

  // Centered phase x in [-1/2, 1/2).
  double operator()(double x) const { return eval_theta(2 * kPi * x); }

  // d^k/dx^k at the centered phase x.
  double derivative(double x, int k) const {
    check_order(k);
    return eval_theta(DerivJet::variable(x) * (2 * kPi)).derivative(k);
  }

  // d^k/dtheta^k.
  double theta_derivative(double theta, int k) const {
    check_order(k);
    return eval_theta(DerivJet::variable(theta)).derivative(k);
  }

 private:
  static void check_order(int k) {
    if (k < 0 || k > kMaxDerivativeOrder) throw DomainError("derivative order above 8");
  }
  SmoothnessClass cls_;
};

class SamplePhi final : public PhiSource {
 public:
  explicit SamplePhi(SampleFunction f) : f_(std::move(f)) {}
  double value(double x) const override { return f_(x); }
  double derivative(double x, int k) const override { return f_.derivative(x, k); }

 private:
  SampleFunction f_;
};

// ---------------------------------------------------------------------------
// Bump f_n: 1 on I_n/10, in (0, 1] on I_n \ I_n/10, 0 off I_n.

class BumpFunction {
 public:
  BumpFunction() = default;
  BumpFunction(int n, double nu, const Rational& half_width)
      : level_(n), nu_(nu), half_width_(half_width), b_(to_double(half_width)) {
    if (!(nu > 1)) throw DomainError("bump needs nu > 1");
    if (!(half_width > 0)) throw DomainError("bump needs a positive half width");
  }

  int level() const { return level_; }
  double nu() const { return nu_; }
  const Rational& half_width() const { return half_width_; }
  double half_width_value() const { return b_; }

  // w(y) = 1 for |y| <= 1, 0 for |y| >= 10, a Gevrey-nu step in between.
  template <class T>
  T profile(const T& y) const {
    const T a = value_of(y) < 0 ? T(-y) : y;
    const double av = value_of(a);
    if (av <= 1) return constant_like<T>(1.0);
    if (av >= 10) return constant_like<T>(0.0);
    return smooth_step((10.0 - a) / 9.0, 1.0 / (nu_ - 1));
  }

  template <class T>
  T eval(const T& x) const {
    return profile(x * (10.0 / b_));
  }

  double operator()(double x) const { return eval(x); }
  double derivative(double x, int k) const { return eval(DerivJet::variable(x)).derivative(k); }

 private:
  int level_ = 0;
  double nu_ = 2.0;
  Rational half_width_ = 1;
  double b_ = 1.0;
};

inline BumpFunction bump(int n, double nu, const ConvergentTable& table) {
  table.require_level(n, 2);
  return BumpFunction(n, nu, (table.abs_z(n) + table.abs_z(n + 1)) / 2);
}

// ---------------------------------------------------------------------------
// Natural cubic spline on uniform knots x_i = x0 + i h.

class NaturalSpline {
 public:
  NaturalSpline() = default;
  NaturalSpline(double x0, double h, std::vector<double> y) : x0_(x0), h_(h), y_(std::move(y)) {
    const std::size_t k = y_.size();
    if (k < 4 || !(h > 0)) throw DomainError("spline needs >= 4 knots and h > 0");
    m_.assign(k, 0.0);
    // m_{i-1} + 4 m_i + m_{i+1} = 6 (y_{i+1} - 2 y_i + y_{i-1}) / h^2, m_0 = m_{k-1} = 0
    std::vector<double> c(k, 0.0), d(k, 0.0);
    for (std::size_t i = 1; i + 1 < k; ++i) {
      const double rhs = 6 * (y_[i + 1] - 2 * y_[i] + y_[i - 1]) / (h * h);
      const double denom = 4 - (i > 1 ? c[i - 1] : 0.0);
      c[i] = 1 / denom;
      d[i] = (rhs - (i > 1 ? d[i - 1] : 0.0)) / denom;
    }
    for (std::size_t i = k - 2; i >= 1; --i) {
      m_[i] = d[i] - c[i] * m_[i + 1];
      if (i == 1) break;
    }
  }

  std::size_t knots() const { return y_.size(); }
  double x0() const { return x0_; }
  double step() const { return h_; }
  const std::vector<double>& values() const { return y_; }
  double knot(std::size_t i) const { return x0_ + static_cast<double>(i) * h_; }

  double operator()(double x) const {
    const std::size_t k = y_.size();
    if (k == 0) return 0.0;
    const double xl = x0_, xr = knot(k - 1);
    if (x <= xl) {
      const double slope = (y_[1] - y_[0]) / h_ - h_ * (2 * m_[0] + m_[1]) / 6;
      return y_[0] + slope * (x - xl);
    }
    if (x >= xr) {
      const double slope = (y_[k - 1] - y_[k - 2]) / h_ + h_ * (m_[k - 2] + 2 * m_[k - 1]) / 6;
      return y_[k - 1] + slope * (x - xr);
    }
    std::size_t i = static_cast<std::size_t>((x - xl) / h_);
    if (i > k - 2) i = k - 2;
    const double a = knot(i + 1) - x, b = x - knot(i);
    return m_[i] * a * a * a / (6 * h_) + m_[i + 1] * b * b * b / (6 * h_) + (y_[i] / h_ - m_[i] * h_ / 6) * a +
           (y_[i + 1] / h_ - m_[i + 1] * h_ / 6) * b;
  }

 private:
  double x0_ = 0;
  double h_ = 1;
  std::vector<double> y_;
  std::vector<double> m_;
};

// ---------------------------------------------------------------------------
// lambda_n schedules.

struct SmallnessSum {
  std::string name;
  double value = 0;
  double bound = 0;
  bool holds = false;
  int terms = 0;
};

struct ThresholdReport {
  std::string name;
  double log_log_required = 0;  // log of the required log(lambda)
  double log_log_lambda = 0;
  double relaxation = 1;
  bool holds_literal = false;
  bool holds_relaxed = false;
};

struct LambdaSchedule {
  std::string cls;
  double log_lambda = 0;
  int first_level = 0;  // N
  int last_level = 0;   // n_max
  std::vector<double> log_lambda_n;        // levels N..n_max
  std::vector<double> log_lambda_tilde_n;  // Gevrey only
  double log_lambda_inf = 0;               // log lambda_{n_max}
  bool strictly_decreasing = true;
  bool all_above_one = true;
  bool band_holds = false;  // lambda_inf > lambda^{1 - eps * band}
  double band_factor = 0;
  std::vector<SmallnessSum> sums;
  ThresholdReport threshold;

  double log_lambda_at(int n) const {
    if (n < first_level || n > last_level) throw DomainError("level outside schedule");
    return log_lambda_n[static_cast<std::size_t>(n - first_level)];
  }
};

inline double q_double(const ConvergentTable& t, int n) { return std::exp(log_big(t.q(n))); }

inline LambdaSchedule lambda_schedule(const SmoothnessClass& cls, double log_lambda, int N, int n_max,
                                      const ConvergentTable& table, double epsilon, double relaxation) {
  validate_class(cls);
  if (N < 1 || n_max < N) throw DomainError("schedule needs 1 <= N <= n_max");
  table.require_level(n_max, 3);
  if (!(epsilon > 0 && epsilon < 1)) throw DomainError("schedule needs 0 < epsilon < 1");
  if (!(relaxation >= 1)) throw DomainError("relaxation factor must be >= 1");
  LambdaSchedule s;
  s.cls = class_name(cls);
  s.log_lambda = log_lambda;
  s.first_level = N;
  s.last_level = n_max;
  s.threshold.relaxation = relaxation;
  s.threshold.log_log_lambda = std::log(log_lambda);
  auto add_sum = [&](std::string name, int from, int to, auto term, double bound) {
    SmallnessSum ss{std::move(name), 0, bound, false, 0};
    for (int n = from; n <= to; ++n) {
      ss.value += term(n);
      ++ss.terms;
    }
    ss.holds = ss.value <= bound;
    s.sums.push_back(ss);
  };
  const int top = table.depth() - 1;  // deepest n with q_{n+1} available
  auto qn_log_qn = [&](int n) {
    const double lq = log_big(table.q(n));
    return lq > 0 ? std::log(lq) + lq : -INFINITY;  // log(q log q) = log(log(q^q))
  };
  auto log_q = [&](int n) { return log_big(table.q(n)); };

  if (const auto* p = std::get_if<classes::Cl>(&cls)) {
    const double b = to_double((table.abs_z(N) + table.abs_z(N + 1)) / 2);
    double cur = log_lambda + (p->l + 1) * std::log(2 * kPi * b);
    s.log_lambda_n.push_back(cur);
    for (int n = N + 1; n <= n_max; ++n) {
      cur = (1 - 2.0 * (p->l + 1) / std::sqrt(q_double(table, n - 1))) * cur;
      s.log_lambda_n.push_back(cur);
    }
    add_sum("sum_{n>N} (l+1) q_{n+1}^{-1/2} <= eps/8", N + 1, top,
            [&](int n) { return (p->l + 1) / std::sqrt(q_double(table, n + 1)); }, epsilon / 8);
    s.threshold.name = "lambda > q_{N+1}^{100 (l+1) / eps}";
    s.threshold.log_log_required = std::log(100.0 * (p->l + 1) / epsilon) + std::log(log_q(N + 1));
    s.band_factor = 0.25;
  } else if (const auto* p = std::get_if<classes::Cinf>(&cls)) {
    const double expo = 1 - std::sqrt(p->brjuno_delta);
    double cur = log_lambda;
    for (int n = N; n <= n_max; ++n) {
      cur -= 10 * std::pow(q_double(table, n - 1), -expo);
      s.log_lambda_n.push_back(cur);
    }
    add_sum("sum_{n>=N} q_{n-1}^{-(1-sqrt(delta))} < eps/10", N, top,
            [&](int n) { return std::pow(q_double(table, n - 1), -expo); }, epsilon / 10);
    add_sum("sum_{n>N} q_{n+1}^{-1/2} <= eps/4", N + 1, top,
            [&](int n) { return 1 / std::sqrt(q_double(table, n + 1)); }, epsilon / 4);
    ClassifyParams cp;
    cp.delta = p->brjuno_delta;
    const double beta_delta = classify(table, cp).beta_delta_hat;
    s.threshold.name = "lambda > max(e^{(2 beta_delta)^sigma}, e^{q_N^{q_N}})";
    s.threshold.log_log_required = std::max(p->sigma * std::log(2 * beta_delta), qn_log_qn(N));
    s.band_factor = 0.1;
  } else {
    const auto& g = std::get<classes::Gevrey>(cls);
    const double kappa = g.strong ? (2 - g.s) / (2 * (g.s - 1)) : g.tau / (g.s - 1) - 1;
    double prev = log_lambda;
    for (int n = N; n <= n_max; ++n) {
      const double d = 2e3 * std::pow(q_double(table, n - 1), kappa);
      s.log_lambda_n.push_back(prev - d);
      s.log_lambda_tilde_n.push_back(prev + d);
      prev -= d;
    }
    if (g.strong) {
      add_sum("sum_{n>=N} q_n^{(2-s)/(2(s-1))} < eps/1e4", N, top,
              [&](int n) { return std::pow(q_double(table, n), kappa); }, epsilon / 1e4);
      add_sum("sum_{n>=N} q_n^{(2-s)/2} < eps/1e4", N, top,
              [&](int n) { return std::pow(q_double(table, n), (2 - g.s) / 2); }, epsilon / 1e4);
      s.threshold.name = "lambda > max(e^{1e3/eps}, e^{q_N^{q_N}})";
      s.threshold.log_log_required = std::max(std::log(1e3 / epsilon), qn_log_qn(N));
    } else {
      add_sum("sum_{n>=N} q_n^{tau/(s-1)-1} < eps/1e4", N, top,
              [&](int n) { return std::pow(q_double(table, n), kappa); }, epsilon / 1e4);
      add_sum("sum_{n>=N} q_n^{(1-(s-1)/tau)/2} < eps/1e4", N, top,
              [&](int n) { return std::pow(q_double(table, n), 0.5 * (1 - (g.s - 1) / g.tau)); }, epsilon / 1e4);
      s.threshold.name = "lambda > max(exp(1e4/eps gamma^{-1/tau}), e^{q_N^{q_N}})";
      s.threshold.log_log_required =
          std::max(std::log(1e4 / epsilon) - std::log(g.gamma) / g.tau, qn_log_qn(N));
    }
    s.band_factor = 0.1;
  }
  s.log_lambda_inf = s.log_lambda_n.back();
  double last = log_lambda;
  for (double v : s.log_lambda_n) {
    if (!(v < last)) s.strictly_decreasing = false;
    if (!(v > 0)) s.all_above_one = false;
    last = v;
  }
  s.band_holds = s.log_lambda_inf > (1 - epsilon * s.band_factor) * log_lambda;
  s.threshold.holds_literal = s.threshold.log_log_lambda > s.threshold.log_log_required;
  s.threshold.holds_relaxed = s.threshold.log_log_lambda + std::log(relaxation) > s.threshold.log_log_required;
  return s;
}

// ---------------------------------------------------------------------------
// Exceptional set B_n = union_{l=1}^{[q_{n+1}^{3/2}]} (B(0, q_{n+1}^{-2}) - l alpha_hat).

struct ExceptionalSet {
  int n = 0;
  BigInt ball_count;
  Rational radius;
  std::vector<Arc> intervals;  // merged, disjoint, [lo, lo + len)
  Rational measure;

  bool contains(const Rational& x) const {
    for (const auto& a : intervals)
      if (a.contains(x)) return true;
    return false;
  }
  ArcUnion as_union() const { return ArcUnion(intervals); }
};

inline ExceptionalSet exceptional_set(const ConvergentTable& table, int n, std::int64_t max_balls = 5'000'000) {
  table.require_level(n, 2);
  ExceptionalSet out;
  out.n = n;
  const BigInt q = table.q(n + 1);
  out.ball_count = boost::multiprecision::sqrt(BigInt(q * q * q));
  if (out.ball_count > max_balls) throw CapError("exceptional set beyond ball budget");
  out.radius = Rational(BigInt(1), q * q);
  const std::int64_t count = to_int64(out.ball_count);
  std::vector<std::pair<Rational, Rational>> spans;  // [lo, hi) with lo in [0,1)
  spans.reserve(static_cast<std::size_t>(count));
  Rational center = 0;
  for (std::int64_t l = 1; l <= count; ++l) {
    center = frac(center - table.alpha_hat());
    Rational lo = frac(center - out.radius);
    spans.emplace_back(lo, lo + 2 * out.radius);
  }
  std::sort(spans.begin(), spans.end());
  std::vector<std::pair<Rational, Rational>> merged;
  for (auto& sp : spans) {
    if (!merged.empty() && sp.first <= merged.back().second) {
      if (sp.second > merged.back().second) merged.back().second = sp.second;
    } else {
      merged.push_back(sp);
    }
  }
  // wrap-around: the last span may reach past 1 into the first ones
  while (merged.size() > 1 && merged.back().second - 1 >= merged.front().first) {
    const Rational hi = merged.front().second + 1;
    if (hi > merged.back().second) merged.back().second = hi;
    merged.erase(merged.begin());
  }
  out.measure = 0;
  for (auto& m : merged) {
    Rational len = m.second - m.first;
    if (len >= 1) {
      out.intervals = {Arc{Rational(0), Rational(1), Closure::left}};
      out.measure = 1;
      return out;
    }
    out.intervals.push_back(Arc{m.first, len, Closure::left});
    out.measure += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Correction ledger.

struct Tolerances {
  double angle = 1e-6;        // angle identity on I_n/10
  double resonance = 1e-8;    // s~ = u~ on I_n/10
  double epsilon = 0.1;       // hyperbolicity slack
  double frame_floor = 10.0;  // frames with ||A|| below this are flagged
  double eta = 0.0;           // 0 selects 1 / (200 l)
  double schedule_epsilon = 0.1;
  double lambda_relaxation = 1e3;
  double cancellation_epsilon = 0.5;  // eps' of the cancellation trace
  int knots_initial = 256;
  int knots_max = 1 << 16;
  int check_points = 1000;
  int ramp_points = 2000;
  int hyperbolicity_samples = 200;
  int support_samples = 4096;
};

struct HyperbolicitySummary {
  std::int64_t samples = 0;
  std::int64_t failures = 0;
  double worst_ratio = INFINITY;
  std::string worst_x;
  std::string worst_direction = "forward";
  std::int64_t worst_index = 0;
  double log_mu = 0;
  bool vacuous = false;
};

struct StepVerification {
  int n = 0;
  bool tilde = false;
  bool accepted = false;
  double identity_residual = 0;  // max |s-u-phi_0|, or max |s~-u~| for tilde steps
  double identity_tolerance = 0;
  double ramp_min_ratio = INFINITY;  // min |s-u| / (phi_0 / 2) on I_n \ I_n/10
  HyperbolicitySummary hyperbolicity;
  double sup_correction = 0;
  double bound_shape = 0;
  double fitted_constant = 0;
  bool support_exact = true;
  std::int64_t support_samples = 0;
  int knots = 0;
  double refinement_change = 0;
  bool refinement_converged = false;
  std::int64_t ill_defined_frames = 0;
  std::vector<std::string> failures;
};

struct CorrectionStep {
  int n = 0;
  Rational half_width;
  BumpFunction bump;
  NaturalSpline e_spline;  // e_n on I_n
  StepVerification verification;
  bool has_tilde = false;
  NaturalSpline tilde_spline;  // s_n - u_n on I_n
  StepVerification tilde_verification;

  bool inside(double x) const { return std::abs(x) < bump.half_width_value() || x == -bump.half_width_value(); }
  double e_hat(double x) const { return bump(x) * e_spline(x); }
  double e_tilde(double x) const { return -bump(x) * tilde_spline(x); }
};

class CorrectionLedger {
 public:
  CorrectionLedger() = default;
  explicit CorrectionLedger(SampleFunction base) : base_(std::move(base)) {}

  const SampleFunction& base() const { return base_; }
  const std::vector<std::shared_ptr<const CorrectionStep>>& steps() const { return steps_; }
  bool empty() const { return steps_.empty(); }
  int level() const { return steps_.empty() ? -1 : steps_.back()->n; }

  // phi_n = phi_0 + sum of e_hat_k; unchanged (bitwise) outside every I_k.
  double phi(double x) const {
    double v = base_(x);
    for (const auto& s : steps_)
      if (s->inside(x)) v += s->e_hat(x);
    return v;
  }

  // phi_n + e_tilde_n for the last step.
  double phi_tilde(double x) const {
    double v = phi(x);
    if (!steps_.empty() && steps_.back()->has_tilde && steps_.back()->inside(x)) v += steps_.back()->e_tilde(x);
    return v;
  }

  CorrectionLedger with_step(std::shared_ptr<const CorrectionStep> step) const {
    CorrectionLedger out = *this;
    out.steps_.push_back(std::move(step));
    return out;
  }
  CorrectionLedger with_last_replaced(std::shared_ptr<const CorrectionStep> step) const {
    CorrectionLedger out = *this;
    out.steps_.back() = std::move(step);
    return out;
  }

 private:
  SampleFunction base_;
  std::vector<std::shared_ptr<const CorrectionStep>> steps_;
};

class LedgerPhi final : public PhiSource {
 public:
  LedgerPhi(CorrectionLedger ledger, bool tilde) : ledger_(std::move(ledger)), tilde_(tilde) {}
  double value(double x) const override { return tilde_ ? ledger_.phi_tilde(x) : ledger_.phi(x); }

 private:
  CorrectionLedger ledger_;
  bool tilde_;
};

struct ConstructionContext {
  std::shared_ptr<const ConvergentTable> table;
  SampleFunction base;
  double log_lambda = 0;
  LambdaSchedule schedule;
  Tolerances tol;
  double bump_nu = 2.0;
  unsigned workers = 0;

  double eta() const {
    if (tol.eta > 0) return tol.eta;
    const auto* cl = std::get_if<classes::Cl>(&base.smoothness());
    return 1.0 / (200.0 * (cl ? cl->l : 1));
  }
};

inline CocycleSpec ledger_cocycle(const ConstructionContext& ctx, const CorrectionLedger& ledger, bool tilde) {
  generators::RotHyp g{ctx.log_lambda, PhiField(std::make_shared<LedgerPhi>(ledger, tilde))};
  return CocycleSpec{ctx.table, g};
}

namespace detail {

inline std::vector<Rational> midpoint_knots(const Rational& lo, const Rational& width, int k) {
  std::vector<Rational> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(lo + width * Rational(2 * i + 1, 2 * k));
  return out;
}

// Points strictly inside [lo, lo + width), away from the spline knots.
inline std::vector<Rational> check_grid(const Rational& lo, const Rational& width, int count) {
  std::vector<Rational> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) out.push_back(lo + width * Rational(3 * j + 1, 3 * count));
  return out;
}

inline std::string bits_of(double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, sizeof u);
  return std::to_string(u);
}

// Spline of values(x) on midpoint knots over I_n, doubling the knot count until
// the coarse spline predicts the fine knots on I_n/10 within target.
template <class ValueAt>
NaturalSpline refine_spline(const Rational& b, const Tolerances& tol, double target, ValueAt&& value_at,
                            StepVerification& rep) {
  const Rational lo = -b, width = 2 * b;
  const double bv = to_double(b), inner = bv / 10;
  auto build = [&](int k) {
    const auto knots = midpoint_knots(lo, width, k);
    std::vector<double> ys = value_at(knots);
    const double h = to_double(width) / k;
    return NaturalSpline(to_double(knots.front()), h, std::move(ys));
  };
  int k = tol.knots_initial;
  NaturalSpline coarse = build(k);
  while (true) {
    const int k2 = 2 * k;
    NaturalSpline fine = build(k2);
    double change = 0;
    for (std::size_t i = 0; i < fine.knots(); ++i) {
      const double x = fine.knot(i);
      if (std::abs(x) <= inner) change = std::max(change, std::abs(coarse(x) - fine.values()[i]));
    }
    rep.knots = k2;
    rep.refinement_change = change;
    if (change <= target) {
      rep.refinement_converged = true;
      return fine;
    }
    if (k2 >= tol.knots_max) {
      rep.refinement_converged = false;
      rep.failures.push_back("interpolation refinement did not converge (change " + std::to_string(change) + ")");
      return fine;
    }
    coarse = std::move(fine);
    k = k2;
  }
}

inline HyperbolicitySummary hyperbolicity_scan(const CocycleSpec& spec, const ConvergentTable& table, int n,
                                               double log_mu, const Tolerances& tol, unsigned workers) {
  CriticalIntervalFamily fam(table, n, Convention::symmetric);
  std::vector<Rational> xs = check_grid(-fam.half_width(), fam.length(), tol.hyperbolicity_samples);
  for (const auto& tag : fam.tags()) xs.push_back(fam.piece(tag).lo);
  for (auto& x : xs) x = frac(x);
  std::vector<HyperbolicityReport> reps(xs.size());
  const double lambda = std::exp(
      std::get<generators::RotHyp>(spec.generator).log_lambda);
  const double mu = std::exp(log_mu);
  parallel_for(xs.size(), workers, [&](std::size_t i) {
    const CirclePoint pt(xs[i]);
    const BigInt r = return_time_closed(pt, table, n, Direction::forward, Convention::symmetric).time;
    reps[i] = check_mu_hyperbolic(orbit_blocks(spec, xs[i], to_int64(r)), mu, lambda, tol.epsilon);
  });
  HyperbolicitySummary out;
  out.samples = static_cast<std::int64_t>(xs.size());
  out.log_mu = log_mu;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.vacuous = out.vacuous || reps[i].vacuous;
    if (!reps[i].passes) ++out.failures;
    if (reps[i].worst_ratio < out.worst_ratio || !reps[i].passes) {
      if (reps[i].worst_ratio < out.worst_ratio) {
        out.worst_ratio = reps[i].worst_ratio;
        out.worst_x = to_string(xs[i]);
        out.worst_direction = to_string(reps[i].direction);
        out.worst_index = static_cast<std::int64_t>(reps[i].worst_index);
      }
    }
  }
  return out;
}

// phi_after == phi_before bitwise on grid points outside I_n.
template <class After, class Before>
void support_scan(const Rational& b, int samples, After&& after, Before&& before, StepVerification& rep) {
  const double bv = to_double(b);
  rep.support_samples = 0;
  for (int j = 0; j < samples; ++j) {
    const Rational x = frac(Rational(2 * j + 1, 2 * samples));
    const double xc = to_double(x >= Rational(1, 2) ? Rational(x - 1) : x);
    const Rational xcr = x >= Rational(1, 2) ? Rational(x - 1) : x;
    if (xcr >= -b && xcr < b) continue;
    (void)bv;
    ++rep.support_samples;
    const double va = after(xc), vb = before(xc);
    if (std::memcmp(&va, &vb, sizeof va) != 0) {
      if (rep.support_exact)
        rep.failures.push_back("support: phi changed outside I_" + std::to_string(rep.n) + " at x=" + to_string(x) +
                               " (" + bits_of(va) + " vs " + bits_of(vb) + ")");
      rep.support_exact = false;
    }
  }
}

}  // namespace detail

struct BuildResult {
  CorrectionLedger ledger;  // unchanged when the step is rejected
  StepVerification report;
};

// e_n = phi_0 - (s_bar - u_bar) on I_n; e_hat = f_n * spline(e_n).
inline BuildResult build_phi_n(const CorrectionLedger& ledger, int n, const ConstructionContext& ctx) {
  const ConvergentTable& table = *ctx.table;
  table.require_level(n, 3);
  if (!ledger.empty() && ledger.level() >= n) throw DomainError("steps must be built in increasing level order");
  StepVerification rep;
  rep.n = n;
  rep.identity_tolerance = ctx.tol.angle;
  CriticalIntervalFamily fam(table, n, Convention::symmetric);
  const Rational b = fam.half_width();
  const double log_mu = ctx.schedule.log_lambda_at(n);
  const CocycleSpec prev = ledger_cocycle(ctx, ledger, false);
  const SampleFunction& phi0 = ctx.base;

  std::int64_t ill = 0;
  auto e_at = [&](const std::vector<Rational>& xs) {
    auto frames = frame_fields(prev, n, xs, ctx.tol.frame_floor, ctx.workers);
    std::vector<double> ys(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!frames[i].well_defined) ++ill;
      ys[i] = phi0(to_double(xs[i])) - angle_diff(frames[i].s_angle, frames[i].u_angle);
    }
    return ys;
  };
  auto step = std::make_shared<CorrectionStep>();
  step->n = n;
  step->half_width = b;
  step->bump = BumpFunction(n, ctx.bump_nu, b);
  step->e_spline = detail::refine_spline(b, ctx.tol, ctx.tol.angle / 10, e_at, rep);
  rep.ill_defined_frames = ill;
  const CorrectionLedger next = ledger.with_step(step);
  const CocycleSpec cur = ledger_cocycle(ctx, next, false);

  // angle identity on I_n/10, off the knots
  const auto inner = detail::check_grid(-b / 10, b / 5, ctx.tol.check_points);
  const auto fin = frame_fields(cur, n, inner, ctx.tol.frame_floor, ctx.workers);
  for (std::size_t i = 0; i < inner.size(); ++i) {
    const double r = std::abs(angle_diff(angle_diff(fin[i].s_angle, fin[i].u_angle), phi0(to_double(inner[i]))));
    if (!fin[i].well_defined) ++rep.ill_defined_frames;
    if (r > rep.identity_residual) rep.identity_residual = r;
  }
  if (!(rep.identity_residual <= ctx.tol.angle))
    rep.failures.push_back("angle identity: |s_n - u_n - phi_0| = " + std::to_string(rep.identity_residual) + " on I_n/10");

  // ramp bound on I_n \ I_n/10
  const auto ramp_all = detail::check_grid(-b, 2 * b, ctx.tol.ramp_points);
  std::vector<Rational> ramp;
  for (const auto& x : ramp_all)
    if (abs_of(x) >= b / 10) ramp.push_back(x);
  const auto fr = frame_fields(cur, n, ramp, ctx.tol.frame_floor, ctx.workers);
  std::string ramp_witness;
  for (std::size_t i = 0; i < ramp.size(); ++i) {
    const double half = phi0(to_double(ramp[i])) / 2;
    const double ratio = std::abs(angle_diff(fr[i].s_angle, fr[i].u_angle)) / half;
    if (ratio < rep.ramp_min_ratio) {
      rep.ramp_min_ratio = ratio;
      ramp_witness = to_string(ramp[i]);
    }
  }
  if (!(rep.ramp_min_ratio >= 1))
    rep.failures.push_back("ramp bound: |s_n - u_n| < phi_0/2 at x=" + ramp_witness);

  // hyperbolicity of the return blocks
  rep.hyperbolicity = detail::hyperbolicity_scan(cur, table, n, log_mu, ctx.tol, ctx.workers);
  if (rep.hyperbolicity.failures > 0)
    rep.failures.push_back("hyperbolicity: block not lambda_n-hyperbolic from x=" + rep.hyperbolicity.worst_x + " (" +
                           rep.hyperbolicity.worst_direction + " index " +
                           std::to_string(rep.hyperbolicity.worst_index) + ")");

  // smallness, reported with a fitted constant
  const auto dense = detail::check_grid(-b, 2 * b, 4 * ctx.tol.ramp_points);
  for (const auto& x : dense) rep.sup_correction = std::max(rep.sup_correction, std::abs(step->e_hat(to_double(x))));
  if (ledger.empty()) {
    rep.bound_shape = std::exp(-2 * ctx.log_lambda);
  } else {
    rep.bound_shape = std::exp(-log_mu * q_double(table, n - 1) / 3);
  }
  rep.fitted_constant = rep.sup_correction / rep.bound_shape;

  detail::support_scan(
      b, ctx.tol.support_samples, [&](double x) { return next.phi(x); }, [&](double x) { return ledger.phi(x); },
      rep);
  if (rep.ill_defined_frames > 0)
    rep.failures.push_back("frames ill-defined at " + std::to_string(rep.ill_defined_frames) + " samples");

  rep.accepted = rep.failures.empty();
  step->verification = rep;
  if (!rep.accepted) return {ledger, rep};
  return {next, rep};
}

// e_tilde_n = -(s_n - u_n) f_n, built on top of an accepted step n.
inline BuildResult build_phi_tilde_n(const CorrectionLedger& ledger, int n, const ConstructionContext& ctx) {
  if (ledger.empty() || ledger.level() != n || !ledger.steps().back()->verification.accepted)
    throw DomainError("build_phi_tilde_n needs an accepted step " + std::to_string(n));
  const ConvergentTable& table = *ctx.table;
  StepVerification rep;
  rep.n = n;
  rep.tilde = true;
  rep.identity_tolerance = ctx.tol.resonance;
  const Rational b = ledger.steps().back()->half_width;
  const CocycleSpec cur = ledger_cocycle(ctx, ledger, false);
  std::int64_t ill = 0;
  auto d_at = [&](const std::vector<Rational>& xs) {
    auto frames = frame_fields(cur, n, xs, ctx.tol.frame_floor, ctx.workers);
    std::vector<double> ys(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!frames[i].well_defined) ++ill;
      ys[i] = angle_diff(frames[i].s_angle, frames[i].u_angle);
    }
    return ys;
  };
  auto step = std::make_shared<CorrectionStep>(*ledger.steps().back());
  step->tilde_spline = detail::refine_spline(b, ctx.tol, ctx.tol.resonance / 10, d_at, rep);
  step->has_tilde = true;
  rep.ill_defined_frames = ill;
  const CorrectionLedger next = ledger.with_last_replaced(step);
  const CocycleSpec tilde = ledger_cocycle(ctx, next, true);

  const auto inner = detail::check_grid(-b / 10, b / 5, ctx.tol.check_points);
  const auto fin = frame_fields(tilde, n, inner, ctx.tol.frame_floor, ctx.workers);
  for (std::size_t i = 0; i < inner.size(); ++i) {
    if (!fin[i].well_defined) ++rep.ill_defined_frames;
    rep.identity_residual = std::max(rep.identity_residual, std::abs(angle_diff(fin[i].s_angle, fin[i].u_angle)));
  }
  if (!(rep.identity_residual <= ctx.tol.resonance))
    rep.failures.push_back("resonance identity: |s~_n - u~_n| = " + std::to_string(rep.identity_residual) + " on I_n/10");

  rep.hyperbolicity = detail::hyperbolicity_scan(tilde, table, n, ctx.schedule.log_lambda_at(n), ctx.tol, ctx.workers);
  if (rep.hyperbolicity.failures > 0)
    rep.failures.push_back("hyperbolicity: block not lambda_n-hyperbolic from x=" + rep.hyperbolicity.worst_x);

  const auto dense = detail::check_grid(-b, 2 * b, 4 * ctx.tol.ramp_points);
  for (const auto& x : dense)
    rep.sup_correction = std::max(rep.sup_correction, std::abs(step->e_tilde(to_double(x))));
  rep.bound_shape = 1 / (q_double(table, n + 1) * q_double(table, n + 1));
  rep.fitted_constant = rep.sup_correction / rep.bound_shape;

  detail::support_scan(
      b, ctx.tol.support_samples, [&](double x) { return next.phi_tilde(x); },
      [&](double x) { return ledger.phi(x); }, rep);
  if (rep.ill_defined_frames > 0)
    rep.failures.push_back("frames ill-defined at " + std::to_string(rep.ill_defined_frames) + " samples");

  rep.accepted = rep.failures.empty();
  step->tilde_verification = rep;
  if (!rep.accepted) return {ledger, rep};
  return {ledger.with_last_replaced(step), rep};
}

// ---------------------------------------------------------------------------
// Cancellation along consecutive q_{n+1}-returns inside I_n/10.

struct CancellationTrace {
  bool available = false;
  std::int64_t returns = 0;
  std::string start;
  double per_step_a = 0;      // log||A_n^{m q_{n+1}}|| / (m q_{n+1})
  double per_step_tilde = 0;  // same for A~_n
  double log_lambda = 0;
  bool holds = false;  // per_step_tilde <= log(lambda)/2 and per_step_a >= (1 - eps') log(lambda)
};

inline CancellationTrace cancellation_trace(const CorrectionLedger& ledger, int n, const ConstructionContext& ctx,
                                            std::int64_t returns = 10) {
  const ConvergentTable& table = *ctx.table;
  CancellationTrace out;
  out.log_lambda = ctx.log_lambda;
  out.returns = returns;
  const Rational b = (table.abs_z(n) + table.abs_z(n + 1)) / 2;
  const Rational shift = table.z(n + 1);
  const Rational inner_width = b / 5;
  if (Rational(returns + 1) * abs_of(shift) > inner_width) return out;
  const Rational start = shift > 0 ? Rational(-b / 10 + abs_of(shift) / 3) : Rational(b / 10 - abs_of(shift) / 3);
  out.available = true;
  out.start = to_string(start);
  const std::int64_t len = returns * to_int64(table.q(n + 1));
  const CirclePoint x(start);
  out.per_step_a = iterate(ledger_cocycle(ctx, ledger, false), x, len).log_norm() / static_cast<double>(len);
  out.per_step_tilde = iterate(ledger_cocycle(ctx, ledger, true), x, len).log_norm() / static_cast<double>(len);
  out.holds = out.per_step_tilde <= ctx.log_lambda / 2 &&
              out.per_step_a >= (1 - ctx.tol.cancellation_epsilon) * ctx.log_lambda;
  return out;
}

// ---------------------------------------------------------------------------
// Finite-horizon LE gap between A_n (off B_n) and A~_n.

struct GapPoint {
  std::int64_t grid = 0;
  FiniteLEEstimate le_a;        // A_n excluding B_n
  FiniteLEEstimate le_tilde;    // A~_n
  FiniteLEEstimate le_a_full;   // A_n without exclusion (control)
  double gap = 0;               // le_a - le_tilde
  double control_gap = 0;       // le_a - le_a_full
  double gap_over_log_lambda = 0;
};

struct GapExperiment {
  int n = 0;
  std::int64_t horizon = 0;
  std::int64_t requested_horizon = 0;
  bool cap_bound = false;
  double log_lambda = 0;
  Rational exclusion_measure;
  std::vector<GapPoint> points;
};

inline GapExperiment le_gap_experiment(const CorrectionLedger& ledger, int n, const ConstructionContext& ctx,
                                       const std::vector<std::int64_t>& grids, std::int64_t horizon,
                                       std::int64_t horizon_cap) {
  const ConvergentTable& table = *ctx.table;
  GapExperiment out;
  out.n = n;
  out.log_lambda = ctx.log_lambda;
  const std::int64_t qn2 = to_int64(table.q(n + 2));
  out.requested_horizon = horizon > 0 ? horizon : 2 * qn2;
  out.horizon = out.requested_horizon;
  if (horizon_cap > 0 && out.horizon > horizon_cap) {
    out.horizon = horizon_cap;
    out.cap_bound = true;
  }
  const ExceptionalSet bn = exceptional_set(table, n);
  out.exclusion_measure = bn.measure;
  const CocycleSpec a = ledger_cocycle(ctx, ledger, false);
  const CocycleSpec at = ledger_cocycle(ctx, ledger, true);
  for (std::int64_t g : grids) {
    GapPoint p;
    p.grid = g;
    const auto va = le_samples(a, out.horizon, g, ctx.workers);
    std::vector<char> used(va.size());
    for (std::size_t j = 0; j < va.size(); ++j) used[j] = !bn.contains(Rational(static_cast<std::int64_t>(j), g));
    p.le_a = detail::le_from_values(out.horizon, g, va, used);
    p.le_a_full = detail::le_from_values(out.horizon, g, va, std::vector<char>(va.size(), 1));
    p.le_tilde = finite_le(at, out.horizon, g, ctx.workers);
    p.gap = p.le_a.value - p.le_tilde.value;
    p.control_gap = p.le_a.value - p.le_a_full.value;
    p.gap_over_log_lambda = p.gap / ctx.log_lambda;
    out.points.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Truncated Gevrey seminorm (4 pi^2 / 3) max_{k <= k_max} (1+k)^2 / (K^k (k!)^s) sup |f^{(k)}|.

struct SeminormReport {
  double value = 0;
  int argmax_order = 0;
  std::vector<double> terms;
  bool truncated = true;
};

using DerivativeEval = std::function<double(double, int)>;

inline SeminormReport gevrey_seminorm(const DerivativeEval& f, double period, double s, double K, int k_max,
                                      int samples = 2001) {
  if (k_max < 0 || k_max > kMaxDerivativeOrder) throw DomainError("derivative unavailable at requested order");
  SeminormReport out;
  double kfact = 1;
  for (int k = 0; k <= k_max; ++k) {
    if (k > 0) kfact *= k;
    double sup = 0;
    for (int i = 0; i < samples; ++i) {
      const double x = -period / 2 + period * (i + 0.5) / samples;
      sup = std::max(sup, std::abs(f(x, k)));
    }
    const double w = (1.0 + k) * (1.0 + k) / (std::pow(K, k) * std::pow(kfact, s));
    const double term = 4 * kPi * kPi / 3 * w * sup;
    out.terms.push_back(term);
    if (term > out.value) {
      out.value = term;
      out.argmax_order = k;
    }
  }
  return out;
}

}  // namespace qpc
