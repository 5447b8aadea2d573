#include "finsler/spline.hpp"

#include "finsler/common.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>

namespace finsler {

namespace {

SplineValue eval_piece(double t, double x0, double x1, double y0, double y1, double m0,
                       double m1) {
  const double h = x1 - x0;
  const double A = (x1 - t) / h;
  const double B = (t - x0) / h;
  SplineValue v;
  v.f = A * y0 + B * y1 + ((A * A * A - A) * m0 + (B * B * B - B) * m1) * h * h / 6.0;
  v.df = (y1 - y0) / h - (3 * A * A - 1) / 6.0 * h * m0 + (3 * B * B - 1) / 6.0 * h * m1;
  v.d2f = A * m0 + B * m1;
  return v;
}

}  // namespace

PeriodicSpline::PeriodicSpline(std::vector<double> x, std::vector<double> y, double period)
    : x_(std::move(x)), y_(std::move(y)), period_(period) {
  const int n = static_cast<int>(x_.size());
  if (n < 3 || y_.size() != x_.size())
    throw Error(ErrorKind::numeric, "periodic spline needs at least 3 knots");
  auto h = [&](int i) {
    return i == n - 1 ? x_[0] + period_ - x_[n - 1] : x_[i + 1] - x_[i];
  };
  for (int i = 0; i < n; ++i)
    if (!(h(i) > 0)) throw Error(ErrorKind::numeric, "periodic spline knots not increasing");

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    const int im = (i + n - 1) % n, ip = (i + 1) % n;
    const double hm = h(im), hi = h(i);
    trip.emplace_back(i, im, hm);
    trip.emplace_back(i, i, 2 * (hm + hi));
    trip.emplace_back(i, ip, hi);
    rhs[i] = 6 * ((y_[ip] - y_[i]) / hi - (y_[i] - y_[im]) / hm);
  }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::numeric, "spline system singular");
  Eigen::VectorXd m = solver.solve(rhs);
  m_.assign(m.data(), m.data() + n);
}

SplineValue PeriodicSpline::eval(double t) const {
  const int n = static_cast<int>(x_.size());
  double s = std::fmod(t - x_[0], period_);
  if (s < 0) s += period_;
  s += x_[0];
  auto it = std::upper_bound(x_.begin(), x_.end(), s);
  int i = static_cast<int>(it - x_.begin()) - 1;
  if (i < 0) i = 0;
  if (i == n - 1)
    return eval_piece(s, x_[n - 1], x_[0] + period_, y_[n - 1], y_[0], m_[n - 1], m_[0]);
  return eval_piece(s, x_[i], x_[i + 1], y_[i], y_[i + 1], m_[i], m_[i + 1]);
}

PeriodicHermite::PeriodicHermite(std::vector<double> x, std::vector<double> y,
                                 std::vector<double> dy, double period)
    : x_(std::move(x)), y_(std::move(y)), dy_(std::move(dy)), period_(period) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n || dy_.size() != n)
    throw Error(ErrorKind::numeric, "hermite interpolant needs matching knots, values, slopes");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(x_[i + 1] > x_[i])) throw Error(ErrorKind::numeric, "hermite knots not increasing");
  if (!(x_[0] + period_ > x_[n - 1])) throw Error(ErrorKind::numeric, "hermite knots exceed period");
}

SplineValue PeriodicHermite::eval(double t) const {
  const std::size_t n = x_.size();
  double s = std::fmod(t - x_[0], period_);
  if (s < 0) s += period_;
  s += x_[0];
  auto it = std::upper_bound(x_.begin(), x_.end(), s);
  std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
  const std::size_t j = i + 1 < n ? i + 1 : 0;
  const double x0 = x_[i], x1 = j == 0 ? x_[0] + period_ : x_[j];
  const double h = x1 - x0, u = (s - x0) / h;
  const double y0 = y_[i], y1 = y_[j], d0 = dy_[i] * h, d1 = dy_[j] * h;
  const double u2 = u * u, u3 = u2 * u;
  SplineValue v;
  v.f = (2 * u3 - 3 * u2 + 1) * y0 + (u3 - 2 * u2 + u) * d0 + (-2 * u3 + 3 * u2) * y1 +
        (u3 - u2) * d1;
  v.df = ((6 * u2 - 6 * u) * y0 + (3 * u2 - 4 * u + 1) * d0 + (-6 * u2 + 6 * u) * y1 +
          (3 * u2 - 2 * u) * d1) / h;
  v.d2f = ((12 * u - 6) * y0 + (6 * u - 4) * d0 + (6 - 12 * u) * y1 + (6 * u - 2) * d1) / (h * h);
  return v;
}

double PeriodicHermite::d2_left(std::size_t i) const {
  const std::size_t n = x_.size(), j = i + 1 < n ? i + 1 : 0;
  const double h = (j == 0 ? x_[0] + period_ : x_[j]) - x_[i];
  return (-6 * y_[i] - 4 * dy_[i] * h + 6 * y_[j] - 2 * dy_[j] * h) / (h * h);
}

double PeriodicHermite::d2_right(std::size_t i) const {
  const std::size_t n = x_.size(), j = i + 1 < n ? i + 1 : 0;
  const double h = (j == 0 ? x_[0] + period_ : x_[j]) - x_[i];
  return (6 * y_[i] + 2 * dy_[i] * h - 6 * y_[j] + 4 * dy_[j] * h) / (h * h);
}

double PeriodicHermite::d2_jump(std::size_t i) const {
  const std::size_t n = x_.size();
  return std::abs(d2_left(i) - d2_right((i + n - 1) % n));
}

CubicSpline::CubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw Error(ErrorKind::configuration, "table needs >= 2 points");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(x_[i + 1] > x_[i])) throw Error(ErrorKind::configuration, "table abscissae not increasing");
  m_.assign(n, 0.0);
  if (n < 3) return;
  // Thomas algorithm for the interior second derivatives.
  std::vector<double> c(n, 0.0), d(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double hm = x_[i] - x_[i - 1], hi = x_[i + 1] - x_[i];
    const double a = hm, b = 2 * (hm + hi), cc = hi;
    const double r = 6 * ((y_[i + 1] - y_[i]) / hi - (y_[i] - y_[i - 1]) / hm);
    const double denom = b - a * c[i - 1];
    c[i] = cc / denom;
    d[i] = (r - a * d[i - 1]) / denom;
  }
  for (std::size_t i = n - 2; i >= 1; --i) {
    m_[i] = d[i] - c[i] * m_[i + 1];
    if (i == 1) break;
  }
}

SplineValue CubicSpline::eval(double t) const {
  const std::size_t n = x_.size();
  if (t <= x_.front()) return {y_.front(), 0, 0};
  if (t >= x_.back()) return {y_.back(), 0, 0};
  auto it = std::upper_bound(x_.begin(), x_.end(), t);
  std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  if (i >= n - 1) i = n - 2;
  return eval_piece(t, x_[i], x_[i + 1], y_[i], y_[i + 1], m_[i], m_[i + 1]);
}

}  // namespace finsler
