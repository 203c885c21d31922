#include "flk/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace flk {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

SyntheticTexture SyntheticTexture::band_limited(std::uint64_t seed, double base_period, int octaves,
                                                int waves_per_octave) {
  SyntheticTexture t;
  t.kind_ = Kind::waves;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0, 2 * std::numbers::pi);
  std::uniform_real_distribution<double> jitter(0.8, 1.25);
  double energy = 0;
  for (int o = 0; o < octaves; ++o) {
    const double period = base_period / std::pow(2.0, o);
    const double amplitude = std::pow(0.8, o);
    for (int i = 0; i < waves_per_octave; ++i) {
      const double dir = angle(rng);
      const double f = 2 * std::numbers::pi / (period * jitter(rng));
      t.waves_.push_back({f * std::cos(dir), f * std::sin(dir), angle(rng), amplitude});
      energy += amplitude * amplitude / 2;
    }
  }
  // tanh keeps the range inside (0,1) while staying smooth.
  t.gain_ = 1.0 / (1.5 * std::sqrt(energy));
  return t;
}

SyntheticTexture SyntheticTexture::checkerboard(std::uint64_t seed, double square, double noise) {
  SyntheticTexture t;
  t.kind_ = Kind::checker;
  t.square_ = square;
  t.noise_ = noise;
  t.seed_ = seed;
  return t;
}

SyntheticTexture SyntheticTexture::smooth(std::uint64_t seed) {
  SyntheticTexture t;
  t.kind_ = Kind::waves;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0, 2 * std::numbers::pi);
  const double periods[3] = {48, 36, 28};
  double energy = 0;
  for (double period : periods) {
    const double dir = angle(rng);
    const double f = 2 * std::numbers::pi / period;
    t.waves_.push_back({f * std::cos(dir), f * std::sin(dir), angle(rng), 1.0});
    energy += 0.5;
  }
  t.gain_ = 1.0 / (1.5 * std::sqrt(energy));
  return t;
}

double SyntheticTexture::lattice(long i, long j) const {
  const std::uint64_t h = splitmix(seed_ ^ splitmix(std::uint64_t(i) * 0x100000001b3ULL ^ std::uint64_t(j)));
  return double(h >> 11) * 0x1.0p-53;
}

double SyntheticTexture::operator()(double x, double y) const {
  if (kind_ == Kind::waves) {
    double s = 0;
    for (const Wave& w : waves_) s += w.amplitude * std::cos(w.kx * x + w.ky * y + w.phase);
    return 0.5 + 0.5 * std::tanh(gain_ * s);
  }
  const double c = std::tanh(3 * std::sin(std::numbers::pi * x / square_)) *
                   std::tanh(3 * std::sin(std::numbers::pi * y / square_));
  // Value noise on a 2 px lattice, bilinearly interpolated.
  const double gx = x / 2;
  const double gy = y / 2;
  const long i = long(std::floor(gx));
  const long j = long(std::floor(gy));
  const double fx = gx - i;
  const double fy = gy - j;
  const double n = (1 - fy) * ((1 - fx) * lattice(i, j) + fx * lattice(i + 1, j)) +
                   fy * ((1 - fx) * lattice(i, j + 1) + fx * lattice(i + 1, j + 1));
  return std::clamp(0.5 + 0.35 * c + noise_ * (n - 0.5) * 2, 0.0, 1.0);
}

GrayImage render(const SyntheticTexture& tex, int width, int height, const AffineWarp& warp,
                 const WarpConvention& convention) {
  const AffineWarp inv = invert(warp);
  GrayImage img(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector2d u =
          apply(inv, Eigen::Vector2d(Eigen::Vector2d(x, y) - convention.image_center)) + convention.frame_center;
      img(y, x) = tex(u.x(), u.y());
    }
  }
  return img;
}

AffineWarp similarity_warp(double scale, double degrees, double tx, double ty) {
  const double a = degrees * std::numbers::pi / 180;
  AffineWarp::Params p;
  p << scale * std::cos(a) - 1, scale * std::sin(a), -scale * std::sin(a), scale * std::cos(a) - 1, tx, ty;
  return AffineWarp(WarpKind::affine, p);
}

Rect centered_box(int width, int height, double fraction) {
  if (!(fraction > 0 && fraction <= 1)) {
    throw Error(ErrorCode::invalid_argument, "box fraction must be in (0,1]");
  }
  const int w = std::max(2, int(std::lround(width * std::sqrt(fraction))));
  const int h = std::max(2, int(std::lround(height * std::sqrt(fraction))));
  return {(width - w) / 2, (height - h) / 2, w, h};
}

SyntheticTexture texture_named(const std::string& name, std::uint64_t seed) {
  if (name == "texture") return SyntheticTexture::band_limited(seed);
  if (name == "checker") return SyntheticTexture::checkerboard(seed);
  if (name == "smooth") return SyntheticTexture::smooth(seed);
  throw Error(ErrorCode::invalid_argument, "unknown synthetic texture: " + name);
}

GroundTruthPair make_synthetic_pair(const SyntheticPairSpec& spec) {
  const SyntheticTexture tex = texture_named(spec.texture, spec.seed);
  GroundTruthPair pair;
  pair.box = centered_box(spec.size, spec.size, spec.box_fraction);
  pair.truth = spec.truth;
  WarpConvention conv;
  conv.frame_center = pair.box.center();
  conv.image_center = pair.box.center();
  pair.tmpl = render(tex, spec.size, spec.size);
  pair.image = render(tex, spec.size, spec.size, spec.truth, conv);
  if (spec.noise_sigma > 0) {
    std::mt19937_64 rng(splitmix(spec.seed + 17));
    std::normal_distribution<double> noise(0, spec.noise_sigma);
    for (Eigen::Index i = 0; i < pair.image.size(); ++i) {
      pair.image.data()[i] = std::clamp(pair.image.data()[i] + noise(rng), 0.0, 1.0);
    }
  }
  if (spec.invert_contrast) pair.image = 1.0 - pair.image;
  return pair;
}

}  // namespace flk
