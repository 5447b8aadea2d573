#pragma once

#include <vector>

namespace finsler {

struct SplineValue {
  double f = 0, df = 0, d2f = 0;
};

/// C^2 periodic cubic spline on non-uniform knots x_0 < ... < x_{n-1} < x_0 + period.
class PeriodicSpline {
 public:
  PeriodicSpline() = default;
  PeriodicSpline(std::vector<double> x, std::vector<double> y, double period);
  SplineValue eval(double t) const;
  std::size_t size() const { return x_.size(); }
  const std::vector<double>& knots() const { return x_; }
  const std::vector<double>& values() const { return y_; }

 private:
  std::vector<double> x_, y_, m_;  // m_: second derivatives at knots
  double period_ = 0;
};

/// C^1 periodic cubic Hermite interpolant from values and slopes at the knots.
class PeriodicHermite {
 public:
  PeriodicHermite() = default;
  PeriodicHermite(std::vector<double> x, std::vector<double> y, std::vector<double> dy,
                  double period);
  SplineValue eval(double t) const;
  /// |f''(x_i+) - f''(x_i-)|, a local estimate of the second-derivative error.
  double d2_jump(std::size_t i) const;
  std::size_t size() const { return x_.size(); }
  const std::vector<double>& knots() const { return x_; }
  const std::vector<double>& values() const { return y_; }

 private:
  double d2_left(std::size_t i) const;   // f'' at u = 0 of piece i
  double d2_right(std::size_t i) const;  // f'' at u = 1 of piece i
  std::vector<double> x_, y_, dy_;
  double period_ = 0;
};

/// Natural cubic spline, constant extension outside [x_0, x_{n-1}].
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(std::vector<double> x, std::vector<double> y);
  SplineValue eval(double t) const;
  const std::vector<double>& knots() const { return x_; }
  const std::vector<double>& values() const { return y_; }

 private:
  std::vector<double> x_, y_, m_;
};

}  // namespace finsler
