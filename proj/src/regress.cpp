#include "flk/regress.hpp"

#include <algorithm>
#include <set>
#include <utility>

namespace flk {

DisplacementDomain DisplacementDomain::grid(int radius, double rho) {
  if (radius < 1) throw Error(ErrorCode::invalid_argument, "domain radius must be >= 1");
  DisplacementDomain d;
  d.rho = rho;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) d.offsets.emplace_back(dx, dy);
  }
  return d;
}

DisplacementDomain DisplacementDomain::cross(double rho) {
  return {{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}, rho};
}

int DisplacementDomain::radius() const {
  int r = 0;
  for (const auto& o : offsets) r = std::max({r, std::abs(o.x()), std::abs(o.y())});
  return r;
}

bool DisplacementDomain::symmetric() const {
  std::set<std::pair<int, int>> seen;
  for (const auto& o : offsets) {
    if (!seen.emplace(o.x(), o.y()).second) return false;
  }
  return std::all_of(offsets.begin(), offsets.end(),
                     [&](const Eigen::Vector2i& o) { return seen.count({-o.x(), -o.y()}) > 0; });
}

Eigen::Matrix2d DisplacementDomain::normal_matrix() const {
  Eigen::Matrix2d m = rho * Eigen::Matrix2d::Identity();
  for (const auto& o : offsets) {
    const Eigen::Vector2d d = o.cast<double>();
    m += d * d.transpose();
  }
  return m;
}

const char* to_string(RegressorMethod m) {
  switch (m) {
    case RegressorMethod::central_difference: return "cd";
    case RegressorMethod::least_squares: return "ls";
    case RegressorMethod::svr: return "svr";
  }
  return "?";
}

RegressorMethod regressor_method_from_string(const std::string& name) {
  if (name == "cd") return RegressorMethod::central_difference;
  if (name == "ls") return RegressorMethod::least_squares;
  if (name == "svr") return RegressorMethod::svr;
  throw Error(ErrorCode::invalid_argument, "unknown regressor method: " + name);
}

DescentRegressor DescentRegressor::crop(const Rect& r) const {
  if (!Rect{0, 0, width(), height()}.contains(r)) {
    throw Error(ErrorCode::invalid_argument, "regressor crop outside its support");
  }
  DescentRegressor out;
  out.method = method;
  for (int k = 0; k < channels(); ++k) {
    out.rx.emplace_back(rx[k].block(r.y, r.x, r.height, r.width));
    out.ry.emplace_back(ry[k].block(r.y, r.x, r.height, r.width));
  }
  return out;
}

namespace {

void require_finite(const FeatureImage& tmpl) {
  if (!tmpl.all_finite()) throw Error(ErrorCode::non_finite, "template has non-finite values");
}

Eigen::Matrix2d checked_inverse(const Eigen::Matrix2d& m) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  if (!(m(0, 0) > 0 && det > 1e-12)) {
    throw Error(ErrorCode::singular, "domain normal matrix is not positive definite");
  }
  Eigen::Matrix2d inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv / det;
}

// Correlation with an odd kernel k(-o) = -k(o), summed as k(o) (T(x+o) - T(x-o))
// over half the offsets so constant regions give exactly zero.
Plane odd_correlate(const Plane& img, const Kernel& k) {
  const Eigen::Index h = img.rows();
  const Eigen::Index w = img.cols();
  const Eigen::Index r = k.rows() / 2;
  Plane padded(h + 2 * r, w + 2 * r);
  for (Eigen::Index y = 0; y < padded.rows(); ++y) {
    const Eigen::Index sy = std::clamp<Eigen::Index>(y - r, 0, h - 1);
    for (Eigen::Index x = 0; x < padded.cols(); ++x) {
      padded(y, x) = img(sy, std::clamp<Eigen::Index>(x - r, 0, w - 1));
    }
  }
  Plane out = Plane::Zero(h, w);
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      if (i < r || (i == r && j <= r)) continue;
      const double kij = k(i, j);
      if (kij == 0) continue;
      out += kij * (padded.block(i, j, h, w) - padded.block(2 * r - i, 2 * r - j, h, w));
    }
  }
  return out;
}

}  // namespace

DerivativeFilters derivative_filters(const DisplacementDomain& domain) {
  if (domain.offsets.empty()) throw Error(ErrorCode::invalid_argument, "empty displacement domain");
  if (!domain.symmetric()) {
    throw Error(ErrorCode::invalid_argument, "displacement domain must be symmetric for the filter path");
  }
  const int n = domain.radius();
  DerivativeFilters f{Kernel::Zero(2 * n + 1, 2 * n + 1), Kernel::Zero(2 * n + 1, 2 * n + 1),
                      checked_inverse(domain.normal_matrix())};
  for (const auto& o : domain.offsets) {
    f.fx(o.y() + n, o.x() + n) = o.x();
    f.fy(o.y() + n, o.x() + n) = o.y();
  }
  return f;
}

DescentRegressor build_ls_regressor(const FeatureImage& tmpl, const DisplacementDomain& domain) {
  require_finite(tmpl);
  const DerivativeFilters f = derivative_filters(domain);
  DescentRegressor reg;
  reg.method = RegressorMethod::least_squares;
  for (int k = 0; k < tmpl.channels(); ++k) {
    const Plane sx = odd_correlate(tmpl.plane(k), f.fx);
    const Plane sy = odd_correlate(tmpl.plane(k), f.fy);
    reg.rx.emplace_back(f.m_inv(0, 0) * sx + f.m_inv(0, 1) * sy);
    reg.ry.emplace_back(f.m_inv(1, 0) * sx + f.m_inv(1, 1) * sy);
  }
  return reg;
}

Eigen::Vector2d solve_pixel_regressor(const FeatureImage& tmpl, int x, int y, int channel,
                                      const DisplacementDomain& domain) {
  if (domain.offsets.empty()) throw Error(ErrorCode::invalid_argument, "empty displacement domain");
  const Plane& t = tmpl.plane(channel);
  const double centre = t(y, x);
  double m00 = domain.rho, m01 = 0, m11 = domain.rho;
  double b0 = 0, b1 = 0;
  for (const auto& o : domain.offsets) {
    const int sx = std::clamp(x + o.x(), 0, tmpl.width() - 1);
    const int sy = std::clamp(y + o.y(), 0, tmpl.height() - 1);
    const double diff = t(sy, sx) - centre;
    m00 += double(o.x()) * o.x();
    m01 += double(o.x()) * o.y();
    m11 += double(o.y()) * o.y();
    b0 += o.x() * diff;
    b1 += o.y() * diff;
  }
  const double det = m00 * m11 - m01 * m01;
  if (!(std::abs(det) > 1e-12)) throw Error(ErrorCode::singular, "singular per-pixel normal matrix");
  return {(m11 * b0 - m01 * b1) / det, (m00 * b1 - m01 * b0) / det};
}

DescentRegressor build_cd_regressor(const FeatureImage& tmpl) {
  const int w = tmpl.width();
  const int h = tmpl.height();
  DescentRegressor reg;
  reg.method = RegressorMethod::central_difference;
  for (const auto& t : tmpl.planes()) {
    Plane rx(h, w), ry(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        rx(y, x) = (t(y, std::min(x + 1, w - 1)) - t(y, std::max(x - 1, 0))) / 2;
        ry(y, x) = (t(std::min(y + 1, h - 1), x) - t(std::max(y - 1, 0), x)) / 2;
      }
    }
    reg.rx.push_back(std::move(rx));
    reg.ry.push_back(std::move(ry));
  }
  return reg;
}

SteepestDescentImages steepest_descent_images(const DescentRegressor& reg, WarpKind kind,
                                              const Eigen::Vector2d& centre) {
  auto out = steepest_descent_images(reg, parameter_count(kind), centre,
                                     [kind](const Eigen::Vector2d& x) { return jacobian(kind, x); });
  out.kind = kind;
  return out;
}

}  // namespace flk
