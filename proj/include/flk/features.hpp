#pragma once

#include "flk/image.hpp"

namespace flk {

/// Dense SIFT configuration. Descriptor length is grid^2 * orientations.
struct SiftParams {
  int cell_size = 4;
  int grid = 4;
  int orientations = 8;
  double clip = 0.2;
  double normalize_epsilon = 1e-10;

  int descriptor_length() const { return grid * grid * orientations; }
  int support() const { return grid * cell_size; }
  void validate() const;

  /// Cell sizes that cross-validate best for each regressor family.
  static SiftParams least_squares_preset() { return SiftParams{}; }
  static SiftParams svr_preset() {
    SiftParams p;
    p.cell_size = 8;
    return p;
  }
};

/// Upright SIFT descriptor at every pixel (stride 1).
///
/// Channel layout is (cell_row * grid + cell_col) * orientations + bin with
/// cells ordered top-left to bottom-right. Gradients come from central
/// differences; each pixel's magnitude is split linearly between the two
/// nearest orientation bins (bin b centred on 2*pi*b/orientations) and
/// bilinearly between the 2x2 nearest cells of the grid centred on the output
/// pixel. Descriptors are L2-normalized, clipped and renormalized. A support
/// without gradient yields the zero descriptor.
FeatureImage dense_sift(const GrayImage& img, const SiftParams& params = {});

/// Single-channel raw-intensity features, optionally Gaussian blurred.
FeatureImage pixel_features(const GrayImage& img, double blur_sigma);

}  // namespace flk
