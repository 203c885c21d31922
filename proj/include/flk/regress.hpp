#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flk/image.hpp"
#include "flk/warp.hpp"

namespace flk {

/// Training displacements D and the ridge weight rho.
struct DisplacementDomain {
  std::vector<Eigen::Vector2i> offsets;
  double rho = 0;

  /// Full square grid [-n, n]^2.
  static DisplacementDomain grid(int radius, double rho = 0);
  /// {(-1,0), (1,0), (0,-1), (0,1)}: the central-difference domain.
  static DisplacementDomain cross(double rho = 0);

  /// Largest |component| over the offsets.
  int radius() const;
  /// Closed under negation, with no repeated offsets.
  bool symmetric() const;
  /// sum dx dx^T + rho I.
  Eigen::Matrix2d normal_matrix() const;
};

enum class RegressorMethod { central_difference, least_squares, svr };

const char* to_string(RegressorMethod m);
RegressorMethod regressor_method_from_string(const std::string& name);

/// Per-pixel, per-channel descent directions (rx, ry) replacing the image gradient.
struct DescentRegressor {
  std::vector<Plane> rx;
  std::vector<Plane> ry;
  RegressorMethod method = RegressorMethod::least_squares;

  int channels() const { return static_cast<int>(rx.size()); }
  int width() const { return rx.empty() ? 0 : int(rx.front().cols()); }
  int height() const { return rx.empty() ? 0 : int(rx.front().rows()); }

  DescentRegressor crop(const Rect& r) const;
};

/// Correlation filters over the domain's bounding grid plus (sum dx dx^T + rho I)^-1.
///
/// fx holds dx at offset (dx, dy), fy holds dy; index [dy + n][dx + n].
/// For a symmetric domain sum dx = 0, so the T(x) term of the regression
/// target drops out and fx, fy applied by correlation give the full right-hand side.
struct DerivativeFilters {
  Kernel fx;
  Kernel fy;
  Eigen::Matrix2d m_inv;
};

DerivativeFilters derivative_filters(const DisplacementDomain& domain);

/// Least-squares regressor at every pixel via two filters and one 2x2 inverse.
DescentRegressor build_ls_regressor(const FeatureImage& tmpl, const DisplacementDomain& domain);

/// Reference solve of one pixel's ridge normal equations; accepts any domain.
/// Out-of-image displaced samples are clamped to the border.
Eigen::Vector2d solve_pixel_regressor(const FeatureImage& tmpl, int x, int y, int channel,
                                      const DisplacementDomain& domain);

/// rx = (T(x+1,y) - T(x-1,y)) / 2, ry likewise, replicate borders.
DescentRegressor build_cd_regressor(const FeatureImage& tmpl);

struct SvrParams {
  double epsilon = 0;   // half-width of the insensitive tube
  double c = 100;       // loss weight against 0.5 |r|^2
  int iterations = 200;
};

/// Linear epsilon-insensitive SVR without intercept for one site.
///
/// Minimizes 0.5 |r|^2 + c * mean_i max(0, |r . x_i - d_i| - epsilon) by
/// normalized subgradient steps with a geometric step schedule, starting from
/// the least-squares fit; returns the best objective seen (r = 0 included).
Eigen::Vector2d fit_svr(std::span<const Eigen::Vector2d> inputs, std::span<const double> targets,
                        const SvrParams& params);

bool svr_available();

/// Per-pixel, per-channel SVR over the same (offset -> appearance difference) pairs.
DescentRegressor build_svr_regressor(const FeatureImage& tmpl, const DisplacementDomain& domain,
                                     const SvrParams& params);

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rows (pixel i, channel k) at index i * K + k hold (rx, ry)_{ik} * dW/dp(x_i - centre),
/// so the K x P block of each pixel is contiguous.
struct SteepestDescentImages {
  RowMajorMatrix sd;              // KN x P
  Eigen::MatrixXd hessian;        // P x P, sd^T sd
  RowMajorMatrix pixel_hessians;  // N x P^2: per-pixel sum over channels, column-major P x P
  WarpKind kind = WarpKind::affine;
  int width = 0;
  int height = 0;
  int channels = 0;
};

SteepestDescentImages steepest_descent_images(const DescentRegressor& reg, WarpKind kind,
                                              const Eigen::Vector2d& centre);

/// Generic-P form: `jacobian_at(x)` returns the 2 x P Jacobian at a centred pixel.
template <typename JacobianFn>
SteepestDescentImages steepest_descent_images(const DescentRegressor& reg, int parameters,
                                              const Eigen::Vector2d& centre,
                                              JacobianFn&& jacobian_at) {
  SteepestDescentImages out;
  out.width = reg.width();
  out.height = reg.height();
  out.channels = reg.channels();
  const Eigen::Index n = Eigen::Index(out.width) * out.height;
  const int p = parameters;
  out.sd.resize(n * out.channels, p);
  out.pixel_hessians = RowMajorMatrix::Zero(n, p * p);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const Eigen::Index i = Eigen::Index(y) * out.width + x;
      const Eigen::Matrix<double, 2, Eigen::Dynamic> j =
          jacobian_at(Eigen::Vector2d(x - centre.x(), y - centre.y()));
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
      for (int k = 0; k < out.channels; ++k) {
        const Eigen::RowVector2d r(reg.rx[k](y, x), reg.ry[k](y, x));
        const Eigen::RowVectorXd row = r * j;
        out.sd.row(i * out.channels + k) = row;
        h.noalias() += row.transpose() * row;
      }
      out.pixel_hessians.row(i) = Eigen::Map<const Eigen::RowVectorXd>(h.data(), p * p);
    }
  }
  out.hessian = out.sd.transpose() * out.sd;
  return out;
}

}  // namespace flk
