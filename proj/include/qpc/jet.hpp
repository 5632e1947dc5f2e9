#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <type_traits>

namespace qpc {

// Truncated Taylor series: c[k] = f^{(k)}(x0) / k!.
template <int K>
struct Jet {
  std::array<double, K + 1> c{};

  static Jet constant(double v) {
    Jet j;
    j.c[0] = v;
    return j;
  }
  static Jet variable(double x0) {
    Jet j;
    j.c[0] = x0;
    if constexpr (K >= 1) j.c[1] = 1;
    return j;
  }

  double value() const { return c[0]; }
  double derivative(int k) const {
    double f = 1;
    for (int i = 2; i <= k; ++i) f *= i;
    return c[static_cast<std::size_t>(k)] * f;
  }

  Jet operator-() const {
    Jet r;
    for (int k = 0; k <= K; ++k) r.c[k] = -c[k];
    return r;
  }
  friend Jet operator+(const Jet& a, const Jet& b) {
    Jet r;
    for (int k = 0; k <= K; ++k) r.c[k] = a.c[k] + b.c[k];
    return r;
  }
  friend Jet operator-(const Jet& a, const Jet& b) {
    Jet r;
    for (int k = 0; k <= K; ++k) r.c[k] = a.c[k] - b.c[k];
    return r;
  }
  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    for (int k = 0; k <= K; ++k)
      for (int j = 0; j <= k; ++j) r.c[k] += a.c[j] * b.c[k - j];
    return r;
  }
  friend Jet operator/(const Jet& a, const Jet& b) {
    Jet r;
    for (int k = 0; k <= K; ++k) {
      double s = a.c[k];
      for (int j = 1; j <= k; ++j) s -= b.c[j] * r.c[k - j];
      r.c[k] = s / b.c[0];
    }
    return r;
  }
  friend Jet operator+(const Jet& a, double b) { return a + constant(b); }
  friend Jet operator+(double a, const Jet& b) { return constant(a) + b; }
  friend Jet operator-(const Jet& a, double b) { return a - constant(b); }
  friend Jet operator-(double a, const Jet& b) { return constant(a) - b; }
  friend Jet operator*(const Jet& a, double b) {
    Jet r = a;
    for (auto& v : r.c) v *= b;
    return r;
  }
  friend Jet operator*(double a, const Jet& b) { return b * a; }
  friend Jet operator/(const Jet& a, double b) { return a * (1.0 / b); }
  friend Jet operator/(double a, const Jet& b) { return constant(a) / b; }
};

template <int K>
Jet<K> exp(const Jet<K>& a) {
  Jet<K> r;
  r.c[0] = std::exp(a.c[0]);
  for (int k = 1; k <= K; ++k) {
    double s = 0;
    for (int j = 1; j <= k; ++j) s += j * a.c[j] * r.c[k - j];
    r.c[k] = s / k;
  }
  return r;
}

template <int K>
Jet<K> log(const Jet<K>& a) {
  Jet<K> r;
  r.c[0] = std::log(a.c[0]);
  for (int k = 1; k <= K; ++k) {
    double s = a.c[k];
    for (int j = 1; j < k; ++j) s -= j * r.c[j] * a.c[k - j] / k;
    r.c[k] = s / a.c[0];
  }
  return r;
}

// a^p for a > 0.
template <int K>
Jet<K> pow(const Jet<K>& a, double p) {
  return exp(log(a) * p);
}

template <int K>
void sincos(const Jet<K>& a, Jet<K>& s, Jet<K>& c) {
  s = Jet<K>{};
  c = Jet<K>{};
  s.c[0] = std::sin(a.c[0]);
  c.c[0] = std::cos(a.c[0]);
  for (int k = 1; k <= K; ++k) {
    double ss = 0, cc = 0;
    for (int j = 1; j <= k; ++j) {
      ss += j * a.c[j] * c.c[k - j];
      cc -= j * a.c[j] * s.c[k - j];
    }
    s.c[k] = ss / k;
    c.c[k] = cc / k;
  }
}

template <int K>
Jet<K> sin(const Jet<K>& a) {
  Jet<K> s, c;
  sincos(a, s, c);
  return s;
}

template <int K>
Jet<K> cos(const Jet<K>& a) {
  Jet<K> s, c;
  sincos(a, s, c);
  return c;
}

template <class T>
T ipow(const T& a, int n) {
  T r = a;
  for (int i = 1; i < n; ++i) r = r * a;
  return r;
}

inline double value_of(double x) { return x; }
template <int K>
double value_of(const Jet<K>& j) {
  return j.value();
}

template <class T>
T constant_like(double v) {
  if constexpr (std::is_same_v<T, double>) {
    return v;
  } else {
    return T::constant(v);
  }
}

}  // namespace qpc
