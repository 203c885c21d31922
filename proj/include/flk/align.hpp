#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flk/image.hpp"
#include "flk/regress.hpp"
#include "flk/warp.hpp"

namespace flk {

struct AlignConfig {
  int max_iters = 100;
  double stop_tol = 1e-3;            // corner motion of the update, px
  double min_valid_fraction = 0.5;
  double hessian_damping = 1e-8;     // multiplied by trace(H) / P

  void validate() const;
};

struct AlignResult {
  AffineWarp warp;
  int iterations = 0;
  std::vector<double> residual_history;  // masked MSR at the start of each iteration
  std::vector<double> update_motion;     // corner motion of each update, px
  bool converged = false;
  std::string failure;                   // empty unless the run failed
};

inline constexpr const char* kInsufficientValid = "insufficient valid pixels";

struct Residual {
  Eigen::VectorXd error;  // warped - template at index i * K + k; zero at invalid sites
  double msr = 0;         // mean over valid sites and channels
  Eigen::Index valid_pixels = 0;
};

/// Masked difference `warped - tmpl`. Throws when no site is valid.
Residual residual(const FeatureImage& tmpl, const FeatureImage& warped, const ValidityMask& mask);

/// Gauss-Newton system at one warp: b = sum of SD_i^T e_i and H = sum of the
/// pixel Hessians, both over the valid pixels i only.
struct Linearization {
  Eigen::VectorXd b;
  Eigen::MatrixXd hessian;
  double msr = 0;
  Eigen::Index valid_pixels = 0;
};

/// Resamples `image` at `frame_to_image * (u, v, 1)` for every template pixel
/// and accumulates the residual against `tmpl` into the system in one pass.
/// Validity and interpolation match warp_image.
Linearization linearize(const PixelMajorImage& image, const Eigen::Matrix<double, 2, 3>& frame_to_image,
                        const PixelMajorImage& tmpl, const SteepestDescentImages& sd);

/// dp = (H + damping * trace(H) / P * I)^-1 b. Throws singular on failure.
Eigen::VectorXd solve_update(Eigen::MatrixXd hessian, const Eigen::VectorXd& b, double damping);

/// How the descent regressor is trained on the template.
struct RegressorSpec {
  RegressorMethod method = RegressorMethod::least_squares;
  DisplacementDomain domain = DisplacementDomain::grid(2);
  SvrParams svr;
};

DescentRegressor build_regressor(const FeatureImage& tmpl, const RegressorSpec& spec);

/// Inverse-compositional solver with the regressor and steepest-descent
/// images precomputed once for a fixed template.
///
/// Warps map template-frame pixels u to W(u - c; p) + c + origin in the
/// image, with c the centre of the template box. The identity warp thus
/// overlays the box on the same location in the image.
class InverseCompositionalAligner {
 public:
  /// `tmpl` is the whole template feature image; `box` selects the region
  /// to align. The regressor sees real neighbours outside the box.
  InverseCompositionalAligner(const FeatureImage& tmpl, const Rect& box, const RegressorSpec& spec,
                              WarpKind kind);

  /// Builds from an already trained regressor covering `tmpl` exactly.
  InverseCompositionalAligner(FeatureImage tmpl, const DescentRegressor& reg, WarpKind kind,
                              const Eigen::Vector2d& image_origin = Eigen::Vector2d::Zero());

  AlignResult align(const FeatureImage& image, const AffineWarp& init, const AlignConfig& cfg) const;
  AlignResult align(const PixelMajorImage& image, const AffineWarp& init, const AlignConfig& cfg) const;

  /// One linearization: the update dp for the current warp, or nullopt with
  /// `failure` set. Exposed for timing and fixed-point checks.
  struct Step {
    AffineWarp update;
    double msr = 0;
    double valid_fraction = 0;
  };
  std::optional<Step> step(const PixelMajorImage& image, const AffineWarp& current, const AlignConfig& cfg,
                           std::string& failure) const;

  const WarpConvention& convention() const { return convention_; }
  const FeatureImage& template_crop() const { return tmpl_; }
  const SteepestDescentImages& sd() const { return sd_; }
  WarpKind kind() const { return kind_; }
  /// Template box corners, in warp coordinates.
  const Box& corner_box() const { return corner_box_; }

 private:
  void init_sd(const DescentRegressor& reg);

  FeatureImage tmpl_;
  PixelMajorImage tmpl_pixels_;
  WarpKind kind_;
  WarpConvention convention_;
  Box corner_box_;
  SteepestDescentImages sd_;
};

/// Convenience wrapper: builds the aligner and runs it once.
AlignResult lk_align(const FeatureImage& tmpl, const FeatureImage& image, const Rect& box,
                     const AffineWarp& init, const RegressorSpec& spec, const AlignConfig& cfg);

/// Gauss-Newton solve shared by the aligner: masked rows are dropped from
/// sd^T e, and H is the sum of per-pixel Hessians over valid pixels.
Eigen::VectorXd descent_update(const SteepestDescentImages& sd, const Eigen::VectorXd& error,
                               const ValidityMask& mask, double damping);

}  // namespace flk
