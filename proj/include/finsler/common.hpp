#pragma once

#include <Eigen/Dense>

#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace finsler {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kEps = std::numeric_limits<double>::epsilon();

enum class ErrorKind {
  configuration,
  domain,
  regularization_too_coarse,
  ambiguous_threshold,
  numeric,
  meshing,
  empty_domain,
  convergence,
  precondition,
  resolution,
};

const char* to_string(ErrorKind kind);

/// Every recoverable failure in the library is reported through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Vec2 unit(double theta) { return {std::cos(theta), std::sin(theta)}; }
inline Vec2 perp(const Vec2& v) { return {-v.y(), v.x()}; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace finsler
