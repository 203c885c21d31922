#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "flk/error.hpp"
#include "flk/warp.hpp"

namespace flk {

/// One row-major raster plane: rows = height, cols = width.
template <typename Scalar>
using PlaneT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Plane = PlaneT<double>;

/// Single-channel intensity image, values in [0,1] after load.
using GrayImage = Plane;

/// Per-pixel flag: true where the warped sample came from inside the source.
using ValidityMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 2-D kernel for convolve2d. Odd side lengths.
using Kernel = Eigen::ArrayXXd;

/// Integer pixel rectangle.
struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool contains(const Rect& r) const {
    return r.x >= x && r.y >= y && r.x + r.width <= x + width && r.y + r.height <= y + height;
  }

  /// Centre of the rectangle in the pixel-centre coordinates of its parent image.
  Eigen::Vector2d center() const {
    return {x + (width - 1) / 2.0, y + (height - 1) / 2.0};
  }

  /// Centre in local (crop) coordinates.
  Eigen::Vector2d local_center() const { return {(width - 1) / 2.0, (height - 1) / 2.0}; }

  /// Box spanned by the outer pixel centres, in coordinates centred on center().
  Box corner_box() const { return Box::centered(width - 1, height - 1); }
};

/// K-channel dense raster. Every plane shares the same width and height.
template <typename Scalar>
class FeatureImageT {
 public:
  using PlaneType = PlaneT<Scalar>;

  FeatureImageT() = default;

  FeatureImageT(int width, int height, int channels)
      : width_(width), height_(height), planes_(channels, PlaneType::Zero(height, width)) {}

  explicit FeatureImageT(PlaneType gray) : width_(gray.cols()), height_(gray.rows()) {
    planes_.push_back(std::move(gray));
  }

  explicit FeatureImageT(std::vector<PlaneType> planes) : planes_(std::move(planes)) {
    if (planes_.empty()) return;
    height_ = planes_.front().rows();
    width_ = planes_.front().cols();
    for (const auto& p : planes_) {
      if (p.rows() != height_ || p.cols() != width_) {
        throw Error(ErrorCode::invalid_argument, "feature planes differ in size");
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return static_cast<int>(planes_.size()); }
  Eigen::Index pixels() const { return Eigen::Index(width_) * height_; }
  bool empty() const { return planes_.empty() || pixels() == 0; }

  const PlaneType& plane(int k) const { return planes_[k]; }
  PlaneType& plane(int k) { return planes_[k]; }
  const std::vector<PlaneType>& planes() const { return planes_; }

  Scalar operator()(int k, int y, int x) const { return planes_[k](y, x); }
  Scalar& operator()(int k, int y, int x) { return planes_[k](y, x); }

  bool all_finite() const {
    return std::all_of(planes_.begin(), planes_.end(),
                       [](const PlaneType& p) { return p.allFinite(); });
  }

  FeatureImageT crop(const Rect& r) const {
    if (!Rect{0, 0, width_, height_}.contains(r) || r.width <= 0 || r.height <= 0) {
      throw Error(ErrorCode::invalid_argument, "crop rectangle outside image");
    }
    std::vector<PlaneType> out;
    out.reserve(planes_.size());
    for (const auto& p : planes_) out.emplace_back(p.block(r.y, r.x, r.height, r.width));
    return FeatureImageT(std::move(out));
  }

  /// Values stacked channel-major: index k * N + (y * width + x).
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> stacked() const {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v(pixels() * channels());
    for (int k = 0; k < channels(); ++k) {
      v.segment(k * pixels(), pixels()) =
          Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(planes_[k].data(), pixels());
    }
    return v;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<PlaneType> planes_;
};

using FeatureImage = FeatureImageT<double>;

/// The same raster stored pixel-major: column y * width + x holds that pixel's K-vector.
struct PixelMajorImage {
  Eigen::MatrixXd data;  // K x N
  int width = 0;
  int height = 0;

  int channels() const { return int(data.rows()); }
  Eigen::Index pixels() const { return data.cols(); }
};

inline PixelMajorImage to_pixel_major(const FeatureImage& f) {
  PixelMajorImage out{Eigen::MatrixXd(f.channels(), f.pixels()), f.width(), f.height()};
  for (int k = 0; k < f.channels(); ++k) {
    out.data.row(k) = Eigen::Map<const Eigen::RowVectorXd>(f.plane(k).data(), f.pixels());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interpolation

/// Bilinear sample at (x, y); nullopt when any support pixel is outside the image.
template <typename Scalar>
std::optional<Scalar> bilinear_sample(const PlaneT<Scalar>& img, double x, double y) {
  const Eigen::Index w = img.cols();
  const Eigen::Index h = img.rows();
  if (!(x >= 0 && y >= 0 && x <= w - 1 && y <= h - 1)) return std::nullopt;
  Eigen::Index x0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(x), std::max<Eigen::Index>(w - 2, 0));
  Eigen::Index y0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(y), std::max<Eigen::Index>(h - 2, 0));
  const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, w - 1);
  const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, h - 1);
  const Scalar fx = Scalar(x - x0);
  const Scalar fy = Scalar(y - y0);
  const Scalar top = (1 - fx) * img(y0, x0) + fx * img(y0, x1);
  const Scalar bottom = (1 - fx) * img(y1, x0) + fx * img(y1, x1);
  return (1 - fy) * top + fy * bottom;
}

template <typename Scalar>
std::optional<Scalar> bilinear_sample(const FeatureImageT<Scalar>& img, double x, double y,
                                      int channel) {
  if (channel < 0 || channel >= img.channels()) {
    throw Error(ErrorCode::invalid_argument, "channel index out of range");
  }
  return bilinear_sample(img.plane(channel), x, y);
}

// ---------------------------------------------------------------------------
// Convolution

namespace detail {

inline void check_odd_kernel(const Kernel& k) {
  if (k.rows() % 2 == 0 || k.cols() % 2 == 0) {
    throw Error(ErrorCode::invalid_argument, "kernel side lengths must be odd");
  }
}

/// out(y,x) = sum_ij k(i,j) * img(y + i - ry, x + j - rx), replicate borders.
template <typename Scalar>
PlaneT<Scalar> correlate_plane(const PlaneT<Scalar>& img, const Kernel& k) {
  const Eigen::Index h = img.rows();
  const Eigen::Index w = img.cols();
  const Eigen::Index ry = k.rows() / 2;
  const Eigen::Index rx = k.cols() / 2;
  PlaneT<Scalar> padded(h + 2 * ry, w + 2 * rx);
  for (Eigen::Index y = 0; y < padded.rows(); ++y) {
    const Eigen::Index sy = std::clamp<Eigen::Index>(y - ry, 0, h - 1);
    for (Eigen::Index x = 0; x < padded.cols(); ++x) {
      padded(y, x) = img(sy, std::clamp<Eigen::Index>(x - rx, 0, w - 1));
    }
  }
  PlaneT<Scalar> out = PlaneT<Scalar>::Zero(h, w);
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) {
      const double kij = k(i, j);
      if (kij == 0) continue;
      out += Scalar(kij) * padded.block(i, j, h, w);
    }
  }
  return out;
}

}  // namespace detail

/// Per-channel correlation (no kernel flip), same size, replicate borders.
template <typename Scalar>
FeatureImageT<Scalar> correlate2d(const FeatureImageT<Scalar>& img, const Kernel& kernel) {
  detail::check_odd_kernel(kernel);
  std::vector<PlaneT<Scalar>> out;
  out.reserve(img.channels());
  for (const auto& p : img.planes()) out.push_back(detail::correlate_plane(p, kernel));
  return FeatureImageT<Scalar>(std::move(out));
}

/// True convolution with the kernel (flipped), same size, replicate borders.
template <typename Scalar>
FeatureImageT<Scalar> convolve2d(const FeatureImageT<Scalar>& img, const Kernel& kernel) {
  detail::check_odd_kernel(kernel);
  return correlate2d(img, Kernel(kernel.reverse()));
}

/// Normalized 1-D Gaussian taps, radius ceil(3 sigma). sigma = 0 gives [1].
inline Eigen::ArrayXd gaussian_kernel(double sigma) {
  if (!(sigma >= 0)) throw Error(ErrorCode::invalid_argument, "negative blur sigma");
  if (sigma == 0) return Eigen::ArrayXd::Ones(1);
  const int r = static_cast<int>(std::ceil(3 * sigma));
  Eigen::ArrayXd k(2 * r + 1);
  for (int i = -r; i <= r; ++i) k(i + r) = std::exp(-0.5 * i * i / (sigma * sigma));
  return k / k.sum();
}

template <typename Scalar>
PlaneT<Scalar> gaussian_blur(const PlaneT<Scalar>& img, double sigma) {
  const Eigen::ArrayXd g = gaussian_kernel(sigma);
  if (g.size() == 1) return img;
  const PlaneT<Scalar> horizontal = detail::correlate_plane(img, Kernel(g.transpose()));
  return detail::correlate_plane(horizontal, Kernel(g));
}

template <typename Scalar>
FeatureImageT<Scalar> gaussian_blur(const FeatureImageT<Scalar>& img, double sigma) {
  std::vector<PlaneT<Scalar>> out;
  out.reserve(img.channels());
  for (const auto& p : img.planes()) out.push_back(gaussian_blur(p, sigma));
  return FeatureImageT<Scalar>(std::move(out));
}

// ---------------------------------------------------------------------------
// Warping

template <typename Scalar>
struct WarpedImage {
  FeatureImageT<Scalar> image;
  ValidityMask mask;
};

/// Resamples src at the points `m * (u, v, 1)` for every output pixel (u, v).
template <typename Scalar>
WarpedImage<Scalar> warp_image(const FeatureImageT<Scalar>& src,
                               const Eigen::Matrix<double, 2, 3>& m, int out_width,
                               int out_height) {
  WarpedImage<Scalar> out{FeatureImageT<Scalar>(out_width, out_height, src.channels()),
                          ValidityMask::Constant(out_height, out_width, false)};
  const Eigen::Index w = src.width();
  const Eigen::Index h = src.height();
  // With x0 <= w-2 and y0 <= h-2 the four neighbours of a tap are
  // i00, i00+1, i00+w and i00+w+1 (single rows/columns fall back to w == 1).
  struct Tap {
    Eigen::Index dst, i00;
    Scalar fx, fy;
  };
  const Eigen::Index dx = w > 1 ? 1 : 0;
  const Eigen::Index dy = h > 1 ? w : 0;
  std::vector<Tap> taps;
  taps.reserve(static_cast<size_t>(out_width) * out_height);
  for (int v = 0; v < out_height; ++v) {
    for (int u = 0; u < out_width; ++u) {
      const double x = m(0, 0) * u + m(0, 1) * v + m(0, 2);
      const double y = m(1, 0) * u + m(1, 1) * v + m(1, 2);
      if (!(x >= 0 && y >= 0 && x <= w - 1 && y <= h - 1)) continue;
      const Eigen::Index x0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(x), std::max<Eigen::Index>(w - 2, 0));
      const Eigen::Index y0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(y), std::max<Eigen::Index>(h - 2, 0));
      out.mask(v, u) = true;
      taps.push_back({Eigen::Index(v) * out_width + u, y0 * w + x0, Scalar(x - x0), Scalar(y - y0)});
    }
  }
  // Chunks of taps stay cache resident while every channel is resampled.
  constexpr size_t kChunk = 512;
  for (size_t begin = 0; begin < taps.size(); begin += kChunk) {
    const size_t end = std::min(taps.size(), begin + kChunk);
    for (int k = 0; k < src.channels(); ++k) {
      const Scalar* s = src.plane(k).data();
      Scalar* d = out.image.plane(k).data();
      for (size_t j = begin; j < end; ++j) {
        const Tap& t = taps[j];
        const Scalar* q = s + t.i00;
        const Scalar top = (1 - t.fx) * q[0] + t.fx * q[dx];
        const Scalar bottom = (1 - t.fx) * q[dy] + t.fx * q[dy + dx];
        d[t.dst] = (1 - t.fy) * top + t.fy * bottom;
      }
    }
  }
  return out;
}

/// Output pixel (u,v) = src sampled at the warp convention's image of (u,v).
template <typename Scalar>
WarpedImage<Scalar> warp_image(const FeatureImageT<Scalar>& src, const AffineWarp& warp,
                               int out_width, int out_height,
                               const WarpConvention& convention = {}) {
  if (!warp.is_finite()) throw Error(ErrorCode::non_finite, "warp parameters are not finite");
  return warp_image(src, convention.frame_to_image(warp), out_width, out_height);
}

}  // namespace flk
