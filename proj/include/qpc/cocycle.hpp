#pragma once

#include "qpc/frequency.hpp"
#include "qpc/orbit.hpp"
#include "qpc/parallel.hpp"
#include "qpc/sl2.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace qpc {

// A 1-periodic real function of the centered phase x in [-1/2, 1/2).
class PhiSource {
 public:
  virtual ~PhiSource() = default;
  virtual double value(double x) const = 0;
  virtual double derivative(double x, int k) const {
    (void)x;
    throw DomainError("derivative of order " + std::to_string(k) + " unavailable");
  }
};

class PhiField {
 public:
  PhiField() = default;
  explicit PhiField(std::shared_ptr<const PhiSource> source) : source_(std::move(source)) {}

  double operator()(double x) const { return source_->value(x); }
  double derivative(double x, int k) const { return k == 0 ? source_->value(x) : source_->derivative(x, k); }
  const PhiSource& source() const { return *source_; }
  explicit operator bool() const { return static_cast<bool>(source_); }

 private:
  std::shared_ptr<const PhiSource> source_;
};

class ConstantPhi final : public PhiSource {
 public:
  explicit ConstantPhi(double c) : c_(c) {}
  double value(double) const override { return c_; }
  double derivative(double, int) const override { return 0.0; }

 private:
  double c_;
};

class FunctionPhi final : public PhiSource {
 public:
  explicit FunctionPhi(std::function<double(double)> f) : f_(std::move(f)) {}
  double value(double x) const override { return f_(x); }

 private:
  std::function<double(double)> f_;
};

inline PhiField constant_phi(double c) { return PhiField(std::make_shared<ConstantPhi>(c)); }
inline PhiField function_phi(std::function<double(double)> f) {
  return PhiField(std::make_shared<FunctionPhi>(std::move(f)));
}

namespace generators {

// Lambda R_{pi/2 - phi(x)} with Lambda = diag(lambda, 1/lambda).  log_lambda = 0
// gives the rotation cocycle R_{pi/2 - phi}.
struct RotHyp {
  double log_lambda = 0;
  PhiField phi;
};

// (E - v(x), -1; 1, 0)
struct Schrodinger {
  double energy = 0;
  PhiField potential;
};

}  // namespace generators

using Generator = std::variant<generators::RotHyp, generators::Schrodinger>;

inline Mat2 rot_hyp_matrix(double lambda, double phi) {
  const double s = std::sin(phi), c = std::cos(phi);
  return {lambda * s, -lambda * c, c / lambda, s / lambda};
}

struct CocycleSpec {
  std::shared_ptr<const ConvergentTable> frequency;
  Generator generator;

  Mat2 at(double x) const {
    if (const auto* g = std::get_if<generators::RotHyp>(&generator))
      return rot_hyp_matrix(std::exp(g->log_lambda), g->phi(x));
    const auto& s = std::get<generators::Schrodinger>(generator);
    return {s.energy - s.potential(x), -1, 1, 0};
  }

  void validate() const {
    if (!frequency) throw DomainError("cocycle needs a frequency");
    if (const auto* g = std::get_if<generators::RotHyp>(&generator)) {
      if (!(g->log_lambda >= 0) || !std::isfinite(g->log_lambda)) throw DomainError("log_lambda must be >= 0");
      if (!g->phi) throw DomainError("RotHyp needs a phase field");
    } else if (!std::get<generators::Schrodinger>(generator).potential) {
      throw DomainError("Schrodinger needs a potential");
    }
  }
};

inline CocycleSpec make_cocycle(const ConvergentTable& table, Generator g) {
  CocycleSpec spec{std::make_shared<const ConvergentTable>(table), std::move(g)};
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Orbit walking on the lattice (1/modulus)Z/Z, which contains alpha_hat and
// every point handed to it.

class OrbitLattice {
 public:
  OrbitLattice(const ConvergentTable& table, const BigInt& extra_denominator) {
    const BigInt q = table.q(table.depth());
    const BigInt m = lcm_big(BigInt(2) * q, extra_denominator);
    if (!lattice_fits_machine(m)) throw CapError("orbit lattice modulus exceeds 2^62: " + m.str());
    modulus_ = to_int64(m);
    step_ = to_int64(lattice_index(table.alpha_hat(), m));
  }

  std::int64_t modulus() const { return modulus_; }
  std::int64_t step() const { return step_; }

  std::int64_t index_of(const Rational& x) const { return to_int64(lattice_index(x, BigInt(modulus_))); }

  std::int64_t advance(std::int64_t p, std::int64_t j) const {
    const std::int64_t shift = static_cast<std::int64_t>(
        (static_cast<__int128>(j % modulus_) * step_ % modulus_ + modulus_) % modulus_);
    std::int64_t r = p + shift;
    if (r >= modulus_) r -= modulus_;
    return r;
  }
  std::int64_t next(std::int64_t p) const {
    p += step_;
    return p >= modulus_ ? p - modulus_ : p;
  }

  // Centered phase in [-1/2, 1/2).
  double centered(std::int64_t p) const {
    const std::int64_t c = 2 * p >= modulus_ ? p - modulus_ : p;
    return static_cast<double>(c) / static_cast<double>(modulus_);
  }

 private:
  std::int64_t modulus_ = 1;
  std::int64_t step_ = 0;
};

constexpr std::int64_t kIterateBudget = 10'000'000;

// A^n(x) for n >= 0 on the lattice, starting at lattice index p.
inline LogScaledMat2 forward_product(const CocycleSpec& spec, const OrbitLattice& lat, std::int64_t p,
                                     std::int64_t n) {
  LogScaledMat2 out;
  for (std::int64_t j = 0; j < n; ++j) {
    out.left_multiply(spec.at(lat.centered(p)));
    p = lat.next(p);
  }
  return out;
}

// A^n(x) = A(T^{n-1}x)...A(x); A^0 = Id; A^{-n}(x) = (A^n(T^{-n}x))^{-1}.
inline LogScaledMat2 iterate(const CocycleSpec& spec, const CirclePoint& x, std::int64_t n) {
  if (n > kIterateBudget || n < -kIterateBudget) throw CapError("iterate budget exceeded");
  const OrbitLattice lat(*spec.frequency, den_of(x.value()));
  const std::int64_t p = lat.index_of(x.value());
  if (n >= 0) return forward_product(spec, lat, p, n);
  return forward_product(spec, lat, lat.advance(p, n), -n).inverse();
}

struct FiniteLEEstimate {
  std::int64_t horizon = 0;
  std::int64_t grid = 0;
  double value = 0;
  double std_error = 0;
  double excluded_fraction = 0;
  std::int64_t used_points = 0;
};

// Finite union of half-open circle arcs [lo, lo + len).
class ArcUnion {
 public:
  ArcUnion() = default;
  explicit ArcUnion(std::vector<Arc> arcs) : arcs_(std::move(arcs)) {
    for (const auto& a : arcs_)
      if (a.closure != Closure::left) throw DomainError("arc unions use [lo, hi) arcs");
  }
  const std::vector<Arc>& arcs() const { return arcs_; }
  bool contains(const Rational& x) const {
    for (const auto& a : arcs_)
      if (a.contains(x)) return true;
    return false;
  }
  Rational total_length() const {
    Rational s = 0;
    for (const auto& a : arcs_) s += a.len;
    return s;
  }

 private:
  std::vector<Arc> arcs_;
};

namespace detail {

inline FiniteLEEstimate le_from_values(std::int64_t horizon, std::int64_t grid, const std::vector<double>& values,
                                       const std::vector<char>& used) {
  FiniteLEEstimate est;
  est.horizon = horizon;
  est.grid = grid;
  double sum = 0;
  std::int64_t count = 0;
  for (std::size_t j = 0; j < values.size(); ++j)
    if (used[j]) {
      sum += values[j];
      ++count;
    }
  if (count == 0) throw DomainError("exclusion covers the whole grid");
  est.used_points = count;
  est.value = sum / static_cast<double>(count);
  double sq = 0;
  for (std::size_t j = 0; j < values.size(); ++j)
    if (used[j]) sq += (values[j] - est.value) * (values[j] - est.value);
  est.std_error = count > 1 ? std::sqrt(sq / static_cast<double>(count - 1) / static_cast<double>(count)) : 0.0;
  est.excluded_fraction = 1.0 - static_cast<double>(count) / static_cast<double>(grid);
  return est;
}

}  // namespace detail

// Per-point values (1/N) log||A^N(j/G)||, j = 0..G-1.
inline std::vector<double> le_samples(const CocycleSpec& spec, std::int64_t horizon, std::int64_t grid,
                                      unsigned workers = 0) {
  if (horizon < 1 || grid < 1) throw DomainError("finite_le needs N >= 1 and G >= 1");
  if (horizon > kIterateBudget) throw CapError("horizon over budget");
  const OrbitLattice lat(*spec.frequency, BigInt(grid));
  const std::int64_t per_point = lat.modulus() / grid;
  std::vector<double> values(static_cast<std::size_t>(grid));
  parallel_for(static_cast<std::size_t>(grid), workers, [&](std::size_t j) {
    const LogScaledMat2 m = forward_product(spec, lat, static_cast<std::int64_t>(j) * per_point, horizon);
    values[j] = m.log_norm() / static_cast<double>(horizon);
  });
  return values;
}

inline FiniteLEEstimate finite_le(const CocycleSpec& spec, std::int64_t horizon, std::int64_t grid,
                                  unsigned workers = 0) {
  const auto values = le_samples(spec, horizon, grid, workers);
  return detail::le_from_values(horizon, grid, values, std::vector<char>(values.size(), 1));
}

inline FiniteLEEstimate finite_le_excluding(const CocycleSpec& spec, std::int64_t horizon, std::int64_t grid,
                                            const ArcUnion& exclusion, unsigned workers = 0) {
  if (horizon < 1 || grid < 1) throw DomainError("finite_le needs N >= 1 and G >= 1");
  std::vector<char> used(static_cast<std::size_t>(grid));
  for (std::int64_t j = 0; j < grid; ++j) used[static_cast<std::size_t>(j)] = !exclusion.contains(Rational(j, grid));
  if (std::none_of(used.begin(), used.end(), [](char c) { return c != 0; }))
    throw DomainError("exclusion covers the whole grid");
  if (horizon > kIterateBudget) throw CapError("horizon over budget");
  const OrbitLattice lat(*spec.frequency, BigInt(grid));
  const std::int64_t per_point = lat.modulus() / grid;
  std::vector<double> values(static_cast<std::size_t>(grid), 0.0);
  parallel_for(static_cast<std::size_t>(grid), workers, [&](std::size_t j) {
    if (!used[j]) return;
    const LogScaledMat2 m = forward_product(spec, lat, static_cast<std::int64_t>(j) * per_point, horizon);
    values[j] = m.log_norm() / static_cast<double>(horizon);
  });
  return detail::le_from_values(horizon, grid, values, used);
}

// ---------------------------------------------------------------------------
// Frame fields s_n = s(A^{r+}(x)) and u_n = s(A^{-r-}(x)) = u(A^{r-}(T^{-r-}x)).

struct FrameSample {
  Rational x;
  BigInt r_plus;
  BigInt r_minus;
  double s_angle = 0;
  double u_angle = 0;
  double log_norm_forward = 0;
  double log_norm_backward = 0;
  bool well_defined = false;
};

inline FrameSample frame_at(const CocycleSpec& spec, const ConvergentTable& table, int n, const Rational& x,
                            double frame_floor = kDefaultFrameFloor) {
  const CirclePoint pt(x);
  FrameSample out;
  out.x = x;
  out.r_plus = return_time_closed(pt, table, n, Direction::forward, Convention::symmetric).time;
  out.r_minus = return_time_closed(pt, table, n, Direction::backward, Convention::symmetric).time;
  const OrbitLattice lat(*spec.frequency, den_of(pt.value()));
  const std::int64_t p = lat.index_of(pt.value());
  const std::int64_t rp = to_int64(out.r_plus), rm = to_int64(out.r_minus);
  const FrameDecomp fwd = svd_frame(forward_product(spec, lat, p, rp), frame_floor);
  const FrameDecomp bwd = svd_frame(forward_product(spec, lat, lat.advance(p, -rm), rm), frame_floor);
  out.s_angle = fwd.s_angle;
  out.u_angle = bwd.u_angle;
  out.log_norm_forward = fwd.log_norm;
  out.log_norm_backward = bwd.log_norm;
  out.well_defined = fwd.well_defined && bwd.well_defined;
  return out;
}

inline std::vector<FrameSample> frame_fields(const CocycleSpec& spec, int n, const std::vector<Rational>& samples,
                                             double frame_floor = kDefaultFrameFloor, unsigned workers = 0) {
  const ConvergentTable& table = *spec.frequency;
  table.require_level(n, 3);
  std::vector<FrameSample> out(samples.size());
  parallel_for(samples.size(), workers,
               [&](std::size_t i) { out[i] = frame_at(spec, table, n, samples[i], frame_floor); });
  return out;
}

// Blocks {A(x), A(Tx), ..., A(T^{len-1}x)} as raw matrices.
inline std::vector<Mat2> orbit_blocks(const CocycleSpec& spec, const Rational& x, std::int64_t len) {
  const OrbitLattice lat(*spec.frequency, den_of(frac(x)));
  std::int64_t p = lat.index_of(frac(x));
  std::vector<Mat2> out;
  out.reserve(static_cast<std::size_t>(len));
  for (std::int64_t j = 0; j < len; ++j) {
    out.push_back(spec.at(lat.centered(p)));
    p = lat.next(p);
  }
  return out;
}

}  // namespace qpc
