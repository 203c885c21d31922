#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "flk/align.hpp"
#include "flk/image.hpp"

namespace flk {

/// Image ensemble aligned into a common frame_width x frame_height frame.
///
/// Frame pixel u of image i samples W(u - frame centre; warps[i]) + centre
/// of image i, so identity warps overlay the frame on each image's centre.
struct Stack {
  std::vector<GrayImage> images;
  std::vector<FeatureImage> features;
  std::vector<AffineWarp> warps;
  int frame_width = 0;
  int frame_height = 0;

  /// Computes features once per image; warps start at identity of `kind`.
  static Stack build(std::vector<GrayImage> images, int frame_width, int frame_height,
                     const std::function<FeatureImage(const GrayImage&)>& features,
                     WarpKind kind = WarpKind::affine);

  size_t size() const { return images.size(); }
  WarpConvention convention(size_t i) const;
  void validate() const;
};

enum class AnchorPolicy { fix_first, normalize_mean };

struct CongealConfig {
  int outer_iters = 30;
  AlignConfig inner = [] {
    AlignConfig c;
    c.max_iters = 5;
    return c;
  }();
  double mean_change_tol = 1e-4;
  AnchorPolicy anchor = AnchorPolicy::normalize_mean;
  RegressorSpec regressor;
  int threads = 0;

  void validate() const;
};

/// Site-wise mean of the warped feature images over their validity masks.
/// Sites no image covers are zero. `skip` flags images left out entirely.
FeatureImage stack_mean(const Stack& stack, std::optional<size_t> exclude = std::nullopt,
                        const std::vector<bool>& skip = {});

struct CongealResult {
  std::vector<AffineWarp> warps;
  std::vector<double> total_msr;      // per outer iteration, before its updates
  std::vector<double> mean_history;   // MSR between successive full-stack means
  std::vector<size_t> failures;       // images below the valid-pixel floor
  int outer_iterations = 0;
  bool converged = false;
};

/// Least-squares congealing: each image is aligned to the leave-one-out mean
/// of the others, regressors retrained every outer iteration.
CongealResult congeal(const Stack& stack, const CongealConfig& cfg);

/// Right-composes every warp with one common warp so the parameter-wise
/// mean of the non-skipped warps becomes the identity.
void normalize_mean_warp(std::vector<AffineWarp>& warps, const std::vector<bool>& skip = {});

struct MeanReport {
  GrayImage before;
  GrayImage after;
};

/// Pixel-domain stack means at the initial and final warps.
MeanReport mean_image_report(const Stack& stack, const std::vector<AffineWarp>& initial,
                             const std::vector<AffineWarp>& final);

/// Mean over frame sites of the across-image variance of warped pixels
/// (sites covered by at least two images).
double stack_variance(const Stack& stack, const std::vector<AffineWarp>& warps);

/// Sum of squared central differences over interior pixels.
double gradient_energy(const GrayImage& img);

}  // namespace flk
