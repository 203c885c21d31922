#pragma once

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "flk/error.hpp"

namespace flk {

enum class WarpKind { affine, translation };

constexpr int parameter_count(WarpKind kind) {
  return kind == WarpKind::affine ? 6 : 2;
}

const char* to_string(WarpKind kind);
WarpKind warp_kind_from_string(const std::string& name);

/// Affine warp W((x,y); p) = ((1+p1)x + p3 y + p5, p2 x + (1+p4) y + p6).
///
/// The identity is p = 0. The translation kind pins p1..p4 at zero and
/// exposes only (p5, p6) as its free parameters.
template <typename Scalar>
class AffineWarpT {
 public:
  using Params = Eigen::Matrix<Scalar, 6, 1>;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  AffineWarpT() : AffineWarpT(WarpKind::affine) {}
  explicit AffineWarpT(WarpKind kind) : kind_(kind), p_(Params::Zero()) {}

  AffineWarpT(WarpKind kind, const Params& p) : kind_(kind), p_(p) {
    if (kind == WarpKind::translation) {
      if (p(0) != 0 || p(1) != 0 || p(2) != 0 || p(3) != 0) {
        throw Error(ErrorCode::invalid_argument,
                    "translation warp with non-zero linear parameters");
      }
    }
  }

  static AffineWarpT identity(WarpKind kind = WarpKind::affine) {
    return AffineWarpT(kind);
  }

  static AffineWarpT translation(Scalar tx, Scalar ty) {
    Params p = Params::Zero();
    p(4) = tx;
    p(5) = ty;
    return AffineWarpT(WarpKind::translation, p);
  }

  /// From the free parameter vector (length 6 for affine, 2 for translation).
  static AffineWarpT from_parameters(WarpKind kind, const VectorX& v) {
    if (v.size() != flk::parameter_count(kind)) {
      throw Error(ErrorCode::invalid_argument, "parameter vector length does not match warp kind");
    }
    if (kind == WarpKind::translation) return translation(v(0), v(1));
    return AffineWarpT(kind, Params(v));
  }

  /// From a homogeneous 3x3 matrix. The translation kind keeps only the offset.
  static AffineWarpT from_matrix(WarpKind kind, const Matrix3& a) {
    if (kind == WarpKind::translation) return translation(a(0, 2), a(1, 2));
    Params p;
    p << a(0, 0) - 1, a(1, 0), a(0, 1), a(1, 1) - 1, a(0, 2), a(1, 2);
    return AffineWarpT(kind, p);
  }

  WarpKind kind() const { return kind_; }
  int parameter_count() const { return flk::parameter_count(kind_); }
  const Params& params() const { return p_; }

  VectorX parameters() const {
    if (kind_ == WarpKind::translation) return p_.template tail<2>();
    return p_;
  }

  Matrix3 matrix() const {
    Matrix3 a;
    a << 1 + p_(0), p_(2), p_(4),
         p_(1), 1 + p_(3), p_(5),
         0, 0, 1;
    return a;
  }

  Eigen::Matrix<Scalar, 2, 2> linear() const { return matrix().template topLeftCorner<2, 2>(); }
  Vector2 offset() const { return p_.template tail<2>(); }

  bool is_finite() const { return p_.allFinite(); }

  template <typename Other>
  AffineWarpT<Other> cast() const {
    return AffineWarpT<Other>(kind_, p_.template cast<Other>());
  }

  bool operator==(const AffineWarpT& other) const {
    return kind_ == other.kind_ && p_ == other.p_;
  }

 private:
  WarpKind kind_;
  Params p_;
};

using AffineWarp = AffineWarpT<double>;

/// Axis-aligned rectangle in warp coordinates, used for corner metrics.
struct Box {
  double x = 0;
  double y = 0;
  double width = 0;
  double height = 0;

  std::array<Eigen::Vector2d, 4> corners() const {
    return {Eigen::Vector2d(x, y), Eigen::Vector2d(x + width, y),
            Eigen::Vector2d(x + width, y + height), Eigen::Vector2d(x, y + height)};
  }

  /// Box of the given size centred on the origin.
  static Box centered(double width, double height) {
    return {-width / 2, -height / 2, width, height};
  }
};

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> apply(const AffineWarpT<Scalar>& w,
                                  const Eigen::Matrix<Scalar, 2, 1>& x) {
  const auto& p = w.params();
  return {(1 + p(0)) * x(0) + p(2) * x(1) + p(4), p(1) * x(0) + (1 + p(3)) * x(1) + p(5)};
}

/// dW/dp at x. Affine: [[x,0,y,0,1,0],[0,x,0,y,0,1]]; translation: I2.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, Eigen::Dynamic> jacobian(WarpKind kind,
                                                  const Eigen::Matrix<Scalar, 2, 1>& x) {
  Eigen::Matrix<Scalar, 2, Eigen::Dynamic> j(2, parameter_count(kind));
  if (kind == WarpKind::translation) {
    j.setIdentity();
    return j;
  }
  j << x(0), 0, x(1), 0, 1, 0,
       0, x(0), 0, x(1), 0, 1;
  return j;
}

/// Parameters of A(p) * A(q): x -> p(q(x)).
template <typename Scalar>
AffineWarpT<Scalar> compose(const AffineWarpT<Scalar>& p, const AffineWarpT<Scalar>& q) {
  if (p.kind() != q.kind()) {
    throw Error(ErrorCode::invalid_argument, "cannot compose warps of different kinds");
  }
  if (p.kind() == WarpKind::translation) {
    return AffineWarpT<Scalar>::translation(p.params()(4) + q.params()(4),
                                            p.params()(5) + q.params()(5));
  }
  return AffineWarpT<Scalar>::from_matrix(p.kind(), p.matrix() * q.matrix());
}

template <typename Scalar>
AffineWarpT<Scalar> invert(const AffineWarpT<Scalar>& w) {
  if (w.kind() == WarpKind::translation) {
    return AffineWarpT<Scalar>::translation(-w.params()(4), -w.params()(5));
  }
  const auto l = w.linear();
  const Scalar det = l.determinant();
  if (!(std::abs(det) > Scalar(1e-12))) {
    throw Error(ErrorCode::singular, "warp is not invertible");
  }
  const Eigen::Matrix<Scalar, 2, 2> li = l.inverse();
  typename AffineWarpT<Scalar>::Matrix3 a = AffineWarpT<Scalar>::Matrix3::Identity();
  a.template topLeftCorner<2, 2>() = li;
  a.template topRightCorner<2, 1>() = -li * w.offset();
  return AffineWarpT<Scalar>::from_matrix(w.kind(), a);
}

/// Root-mean-square distance between the images of the four box corners.
template <typename Scalar>
Scalar corner_rmse(const AffineWarpT<Scalar>& p, const AffineWarpT<Scalar>& q, const Box& box) {
  Scalar sum = 0;
  for (const auto& c : box.corners()) {
    const Eigen::Matrix<Scalar, 2, 1> x = c.template cast<Scalar>();
    sum += (apply(p, x) - apply(q, x)).squaredNorm();
  }
  return std::sqrt(sum / 4);
}

/// Maps template-frame pixel coordinates into source-image coordinates.
///
/// A frame pixel u lands at W(u - frame_center; p) + image_center, so the
/// parameters act about frame_center. With both centres at zero this is the
/// plain warp.
struct WarpConvention {
  Eigen::Vector2d frame_center = Eigen::Vector2d::Zero();
  Eigen::Vector2d image_center = Eigen::Vector2d::Zero();

  Eigen::Matrix<double, 2, 3> frame_to_image(const AffineWarp& w) const {
    Eigen::Matrix<double, 2, 3> m;
    const Eigen::Matrix2d l = w.linear();
    m.leftCols<2>() = l;
    m.col(2) = w.offset() + image_center - l * frame_center;
    return m;
  }

  Eigen::Vector2d to_image(const AffineWarp& w, const Eigen::Vector2d& u) const {
    return apply(w, Eigen::Vector2d(u - frame_center)) + image_center;
  }
};

inline const char* to_string(WarpKind kind) {
  return kind == WarpKind::affine ? "affine" : "translation";
}

inline WarpKind warp_kind_from_string(const std::string& name) {
  if (name == "affine") return WarpKind::affine;
  if (name == "translation") return WarpKind::translation;
  throw Error(ErrorCode::invalid_argument, "unknown warp kind: " + name);
}

}  // namespace flk
