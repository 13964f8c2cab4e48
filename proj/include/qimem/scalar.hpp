#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

#include <Eigen/Dense>
#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/gmp.hpp>

namespace qimem {

/// Exact rational scalar. Expression templates are disabled so Eigen sees a
/// plain value type.
using Rational = boost::multiprecision::number<boost::multiprecision::gmp_rational,
                                               boost::multiprecision::et_off>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

template <typename Scalar>
inline constexpr bool is_exact_v = !std::is_floating_point_v<Scalar>;

/// Thrown when iterative numerics fail or a computed quantity violates an
/// invariant it must satisfy.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
double to_double(const Scalar& x) {
  if constexpr (std::is_floating_point_v<Scalar>) {
    return static_cast<double>(x);
  } else {
    return x.template convert_to<double>();
  }
}

template <typename Scalar>
Matrix<double> to_double(const Matrix<Scalar>& m) {
  return m.unaryExpr([](const Scalar& x) { return to_double(x); });
}

/// Absolute tolerance used for "sums to one" style checks: 1e-12 for
/// floating point, exact for rationals.
template <typename Scalar>
Scalar stochastic_tolerance() {
  if constexpr (is_exact_v<Scalar>) {
    return Scalar(0);
  } else {
    return Scalar(1e-12);
  }
}

template <typename Scalar>
Scalar abs_value(const Scalar& x) {
  return x < Scalar(0) ? Scalar(-x) : x;
}

/// Parses "3/7", "-2", "0.125" or "1e-3". Decimal input is converted to the
/// exact rational with the same decimal expansion.
Rational parse_rational(std::string_view text);

std::string to_string(const Rational& r);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

/// x log2 x with the 0 log 0 = 0 convention.
inline double xlog2x(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

inline double binary_entropy(double p) { return 0.0 - xlog2x(p) - xlog2x(1.0 - p); }

template <typename Derived>
double shannon_entropy(const Eigen::MatrixBase<Derived>& probs) {
  double h = 0.0;
  for (Index i = 0; i < probs.size(); ++i) h -= xlog2x(to_double(probs(i)));
  return h;
}

}  // namespace qimem
