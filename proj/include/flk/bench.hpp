#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "flk/align.hpp"
#include "flk/features.hpp"
#include "flk/synthetic.hpp"

namespace flk {

/// One benchmarked configuration, written `<features>-<method>:<param>[:<cell>]`.
///
/// For cd the parameter is the blur sigma applied to the feature planes; for
/// ls and svr it is the training domain radius. The optional cell size
/// overrides the SIFT preset (4 for cd/ls, 8 for svr).
struct MethodSpec {
  std::string features = "sift";  // "sift" | "pixel"
  RegressorMethod method = RegressorMethod::least_squares;
  double param = 2;
  int cell_size = 0;

  static MethodSpec parse(const std::string& text);
  std::string id() const;

  SiftParams sift_params() const;
  double blur_sigma() const;
  RegressorSpec regressor(double rho, const SvrParams& svr) const;
  FeatureImage features_of(const GrayImage& img) const;
};

struct BasinConfig {
  std::vector<double> error_levels{1, 2, 4, 8, 16};
  int trials = 1000;
  double epsilon = 1.0;
  std::uint64_t seed = 7;
  std::vector<MethodSpec> methods;
  WarpKind kind = WarpKind::affine;
  AlignConfig align;
  double rho = 0;
  SvrParams svr;
  int threads = 0;

  void validate() const;
};

struct BasinRow {
  std::string method;
  double error_px = 0;
  int trials = 0;
  int converged = 0;
  double mean_iters = 0;
  double mean_final_rmse = 0;

  double fraction() const { return trials == 0 ? 0.0 : double(converged) / trials; }
  bool operator==(const BasinRow&) const = default;
};

/// Initialization at corner RMSE `magnitude` from `truth` on `box`.
///
/// The box corners' images under truth are displaced by isotropic Gaussian
/// offsets, a least-squares warp of `truth.kind()` is fitted through them,
/// and the fitted deviation from truth is rescaled to the exact magnitude.
AffineWarp perturb_warp(const AffineWarp& truth, const Box& box, double magnitude, std::mt19937_64& rng);

/// Copies of one texture, each rendered under its own random warp.
struct PerturbedStackSpec {
  std::string texture = "texture";  // "texture" | "checker" | "smooth"
  int size = 96;
  double frame_fraction = 0.5;      // of the image area
  int count = 10;
  double magnitude = 3;             // corner RMSE of each warp on the frame box, px
  std::uint64_t seed = 1;
};

/// `truth[i]` maps the common frame into `images[i]` under the Stack convention.
struct PerturbedStack {
  std::vector<GrayImage> images;
  std::vector<AffineWarp> truth;
  int frame_width = 0;
  int frame_height = 0;
};

PerturbedStack make_perturbed_stack(const PerturbedStackSpec& spec);

/// Seed of the RNG stream for one trial; independent of scheduling.
std::uint64_t trial_seed(std::uint64_t seed, const std::string& method, double level, int trial);

struct TrialOutcome {
  bool converged = false;
  int iterations = 0;
  double final_rmse = 0;
};

/// Precomputed features and solver for one method on one pair.
class BasinMethod {
 public:
  BasinMethod(const GroundTruthPair& pair, const MethodSpec& method, const BasinConfig& cfg);

  TrialOutcome run_trial(double level, int trial, const BasinConfig& cfg) const;
  const std::string& id() const { return id_; }

 private:
  std::string id_;
  AffineWarp truth_;
  PixelMajorImage image_features_;
  InverseCompositionalAligner aligner_;
};

std::vector<BasinRow> run_basin(const GroundTruthPair& pair, const BasinConfig& cfg);

std::string format_csv(const std::vector<BasinRow>& rows);
std::vector<BasinRow> parse_csv(const std::string& text);
void emit_csv(const std::vector<BasinRow>& rows, const std::filesystem::path& path);

}  // namespace flk
