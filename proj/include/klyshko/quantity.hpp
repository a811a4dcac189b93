#pragma once
// Value carrying one standard uncertainty. Combination rules assume
// independent inputs and propagate to first order (quadrature).

#include <cmath>
#include <stdexcept>

namespace klyshko {

struct Quantity {
  double value = 0.0;
  double sigma = 0.0;  // one standard uncertainty, >= 0
};

// Relative standard uncertainty; defined only for nonzero value.
inline double rel_sigma(const Quantity& q) {
  if (q.value == 0.0)
    throw std::domain_error("rel_sigma: undefined for zero value");
  return q.sigma / std::abs(q.value);
}

inline Quantity operator+(const Quantity& a, const Quantity& b) {
  return {a.value + b.value, std::hypot(a.sigma, b.sigma)};
}

inline Quantity operator-(const Quantity& a, const Quantity& b) {
  return {a.value - b.value, std::hypot(a.sigma, b.sigma)};
}

inline Quantity operator*(const Quantity& a, double k) {
  return {a.value * k, a.sigma * std::abs(k)};
}

inline Quantity operator*(double k, const Quantity& a) { return a * k; }

inline Quantity operator*(const Quantity& a, const Quantity& b) {
  return {a.value * b.value, std::hypot(a.sigma * b.value, b.sigma * a.value)};
}

// a / b with first-order sigma; valid also when a.value == 0.
inline Quantity operator/(const Quantity& a, const Quantity& b) {
  if (b.value == 0.0)
    throw std::domain_error("Quantity division by zero");
  const double v = a.value / b.value;
  return {v, std::hypot(a.sigma / b.value, v * b.sigma / b.value)};
}

inline Quantity operator/(const Quantity& a, double k) {
  if (k == 0.0) throw std::domain_error("Quantity division by zero");
  return {a.value / k, a.sigma / std::abs(k)};
}

}  // namespace klyshko
