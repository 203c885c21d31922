#include "flk/features.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace flk {

void SiftParams::validate() const {
  if (cell_size < 1) throw Error(ErrorCode::invalid_argument, "sift cell_size must be >= 1");
  if (grid < 1) throw Error(ErrorCode::invalid_argument, "sift grid must be >= 1");
  if (orientations < 2) throw Error(ErrorCode::invalid_argument, "sift orientations must be >= 2");
  if (!(clip > 0 && clip <= 1)) throw Error(ErrorCode::invalid_argument, "sift clip must be in (0,1]");
  if (!(normalize_epsilon >= 0)) {
    throw Error(ErrorCode::invalid_argument, "sift normalize_epsilon must be >= 0");
  }
}

namespace {

// Tent weights of one spatial cell along one axis, as a correlation kernel
// over integer offsets |t| <= support/2 from the descriptor centre.
Eigen::ArrayXd cell_taps(const SiftParams& p, int cell) {
  const int radius = p.support() / 2;
  const double centre = (cell - (p.grid - 1) / 2.0) * p.cell_size;
  Eigen::ArrayXd taps(2 * radius + 1);
  for (int t = -radius; t <= radius; ++t) {
    taps(t + radius) = std::max(0.0, 1.0 - std::abs(t - centre) / p.cell_size);
  }
  return taps;
}

std::vector<Plane> orientation_planes(const GrayImage& img, int bins) {
  const Eigen::Index h = img.rows();
  const Eigen::Index w = img.cols();
  std::vector<Plane> out(bins, Plane::Zero(h, w));
  const double to_bin = bins / (2 * std::numbers::pi);
  for (Eigen::Index y = 0; y < h; ++y) {
    const Eigen::Index yu = std::max<Eigen::Index>(y - 1, 0);
    const Eigen::Index yd = std::min<Eigen::Index>(y + 1, h - 1);
    for (Eigen::Index x = 0; x < w; ++x) {
      const Eigen::Index xl = std::max<Eigen::Index>(x - 1, 0);
      const Eigen::Index xr = std::min<Eigen::Index>(x + 1, w - 1);
      const double gx = (img(y, xr) - img(y, xl)) / 2;
      const double gy = (img(yd, x) - img(yu, x)) / 2;
      const double mag = std::hypot(gx, gy);
      if (mag == 0) continue;
      double theta = std::atan2(gy, gx);
      if (theta < 0) theta += 2 * std::numbers::pi;
      const double t = theta * to_bin;
      const double lower = std::floor(t);
      const double frac = t - lower;
      const int b0 = static_cast<int>(lower) % bins;
      const int b1 = (b0 + 1) % bins;
      out[b0](y, x) += mag * (1 - frac);
      out[b1](y, x) += mag * frac;
    }
  }
  return out;
}

void normalize_descriptors(std::vector<Plane>& planes, const SiftParams& p) {
  const Eigen::Index n = planes.front().size();
  const size_t k = planes.size();
  Eigen::VectorXd v(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (size_t c = 0; c < k; ++c) v(c) = planes[c].data()[i];
    const double norm = v.norm();
    if (norm == 0) continue;
    v /= norm + p.normalize_epsilon;
    v = v.cwiseMin(p.clip);
    const double renorm = v.norm();
    if (renorm == 0) {
      v.setZero();
    } else {
      v /= renorm + p.normalize_epsilon;
    }
    for (size_t c = 0; c < k; ++c) planes[c].data()[i] = v(c);
  }
}

}  // namespace

FeatureImage dense_sift(const GrayImage& img, const SiftParams& params) {
  params.validate();
  if (img.rows() < params.support() || img.cols() < params.support()) {
    throw Error(ErrorCode::invalid_argument,
                "image smaller than the descriptor support of " + std::to_string(params.support()) + " px");
  }
  const auto orient = orientation_planes(img, params.orientations);

  std::vector<Eigen::ArrayXd> taps;
  for (int c = 0; c < params.grid; ++c) taps.push_back(cell_taps(params, c));

  std::vector<Plane> planes(params.descriptor_length());
  for (int b = 0; b < params.orientations; ++b) {
    for (int col = 0; col < params.grid; ++col) {
      const Plane horizontal = detail::correlate_plane(orient[b], Kernel(taps[col].transpose()));
      for (int row = 0; row < params.grid; ++row) {
        const int channel = (row * params.grid + col) * params.orientations + b;
        planes[channel] = detail::correlate_plane(horizontal, Kernel(taps[row]));
      }
    }
  }
  normalize_descriptors(planes, params);
  return FeatureImage(std::move(planes));
}

FeatureImage pixel_features(const GrayImage& img, double blur_sigma) {
  return FeatureImage(gaussian_blur(img, blur_sigma));
}

}  // namespace flk
