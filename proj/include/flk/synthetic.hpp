#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flk/image.hpp"
#include "flk/warp.hpp"

namespace flk {

/// Analytic test textures with values in [0,1], evaluable at any real point
/// so warped renderings are exact rather than resampled.
class SyntheticTexture {
 public:
  /// Random-phase plane waves over `octaves` octaves, period halving from `base_period`.
  static SyntheticTexture band_limited(std::uint64_t seed, double base_period = 32, int octaves = 3,
                                       int waves_per_octave = 6);
  /// Smooth-edged checkerboard plus bilinear value noise.
  static SyntheticTexture checkerboard(std::uint64_t seed, double square = 12, double noise = 0.15);
  /// Low-frequency sum of three sinusoids.
  static SyntheticTexture smooth(std::uint64_t seed);

  double operator()(double x, double y) const;

 private:
  struct Wave {
    double kx, ky, phase, amplitude;
  };
  enum class Kind { waves, checker };

  double lattice(long i, long j) const;

  Kind kind_ = Kind::waves;
  std::vector<Wave> waves_;
  double gain_ = 1;
  double square_ = 12;
  double noise_ = 0;
  std::uint64_t seed_ = 0;
};

/// "texture" (band-limited), "checker" or "smooth" with default parameters.
SyntheticTexture texture_named(const std::string& name, std::uint64_t seed);

/// Renders `tex` so that rendered(W(u)) = tex(u) under the convention, i.e.
/// rendered(y) = tex(W^-1(y)). Identity warp gives the plain texture.
GrayImage render(const SyntheticTexture& tex, int width, int height, const AffineWarp& warp = {},
                 const WarpConvention& convention = {});

/// Similarity-plus-translation warp: scale s, rotation (degrees), offset.
AffineWarp similarity_warp(double scale, double degrees, double tx, double ty);

/// Image pair with a known template-to-image warp.
struct GroundTruthPair {
  GrayImage tmpl;
  GrayImage image;
  AffineWarp truth;
  Rect box;  // region of `tmpl` aligned into `image`
};

struct SyntheticPairSpec {
  std::string texture = "texture";  // "texture" | "checker" | "smooth"
  bool invert_contrast = false;
  int size = 128;
  double box_fraction = 0.5;        // of the template area
  AffineWarp truth = similarity_warp(1.04, 3, 1.5, -1.0);
  double noise_sigma = 0;
  std::uint64_t seed = 1;
};

/// Centred square box covering `fraction` of a width x height image.
Rect centered_box(int width, int height, double fraction);

GroundTruthPair make_synthetic_pair(const SyntheticPairSpec& spec);

}  // namespace flk
