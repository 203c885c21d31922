#include "flk/align.hpp"

#include <cmath>

namespace flk {

void AlignConfig::validate() const {
  if (max_iters < 1) throw Error(ErrorCode::invalid_argument, "max_iters must be >= 1");
  if (!(stop_tol > 0)) throw Error(ErrorCode::invalid_argument, "stop_tol must be > 0");
  if (!(min_valid_fraction > 0 && min_valid_fraction <= 1)) {
    throw Error(ErrorCode::invalid_argument, "min_valid_fraction must be in (0,1]");
  }
  if (!(hessian_damping > 0)) throw Error(ErrorCode::invalid_argument, "hessian_damping must be > 0");
}

Residual residual(const FeatureImage& tmpl, const FeatureImage& warped, const ValidityMask& mask) {
  if (tmpl.width() != warped.width() || tmpl.height() != warped.height() ||
      tmpl.channels() != warped.channels() || mask.rows() != tmpl.height() ||
      mask.cols() != tmpl.width()) {
    throw Error(ErrorCode::invalid_argument, "residual operands differ in shape");
  }
  Residual r;
  r.valid_pixels = mask.count();
  if (r.valid_pixels == 0) throw Error(ErrorCode::invalid_argument, "zero valid sites");
  const Eigen::Index n = tmpl.pixels();
  r.error.resize(n * tmpl.channels());
  Eigen::Map<Eigen::MatrixXd> e(r.error.data(), tmpl.channels(), n);
  const Eigen::Map<const Eigen::Array<bool, 1, Eigen::Dynamic>> valid(mask.data(), n);
  for (int k = 0; k < tmpl.channels(); ++k) {
    const Eigen::Map<const Eigen::ArrayXXd> t(tmpl.plane(k).data(), 1, n);
    const Eigen::Map<const Eigen::ArrayXXd> w(warped.plane(k).data(), 1, n);
    e.row(k) = valid.select(w - t, 0.0).matrix();
  }
  r.msr = r.error.squaredNorm() / (double(r.valid_pixels) * tmpl.channels());
  return r;
}

DescentRegressor build_regressor(const FeatureImage& tmpl, const RegressorSpec& spec) {
  switch (spec.method) {
    case RegressorMethod::central_difference: return build_cd_regressor(tmpl);
    case RegressorMethod::least_squares: return build_ls_regressor(tmpl, spec.domain);
    case RegressorMethod::svr: return build_svr_regressor(tmpl, spec.domain, spec.svr);
  }
  throw Error(ErrorCode::invalid_argument, "unknown regressor method");
}

Eigen::VectorXd solve_update(Eigen::MatrixXd h, const Eigen::VectorXd& b, double damping) {
  const Eigen::Index p = h.rows();
  const double trace = h.trace();
  if (!(trace > 0) || !std::isfinite(trace)) throw Error(ErrorCode::singular, "singular Hessian");
  h.diagonal().array() += damping * trace / double(p);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw Error(ErrorCode::singular, "singular Hessian");
  }
  Eigen::VectorXd dp = ldlt.solve(b);
  if (!dp.allFinite()) throw Error(ErrorCode::singular, "singular Hessian");
  return dp;
}

Eigen::VectorXd descent_update(const SteepestDescentImages& sd, const Eigen::VectorXd& error,
                               const ValidityMask& mask, double damping) {
  const Eigen::Index p = sd.sd.cols();
  const Eigen::VectorXd b = sd.sd.transpose() * error;
  const Eigen::Index n = sd.pixel_hessians.rows();
  const Eigen::VectorXd weights =
      Eigen::Map<const Eigen::Array<bool, Eigen::Dynamic, 1>>(mask.data(), n).cast<double>().matrix();
  const Eigen::VectorXd hv = sd.pixel_hessians.transpose() * weights;
  return solve_update(Eigen::Map<const Eigen::MatrixXd>(hv.data(), p, p), b, damping);
}

Linearization linearize(const PixelMajorImage& image, const Eigen::Matrix<double, 2, 3>& m,
                        const PixelMajorImage& tmpl, const SteepestDescentImages& sd) {
  const Eigen::Index k = tmpl.channels();
  const Eigen::Index p = sd.sd.cols();
  if (image.channels() != k || sd.channels != k || sd.width != tmpl.width || sd.height != tmpl.height) {
    throw Error(ErrorCode::invalid_argument, "linearize operands differ in shape");
  }
  const Eigen::Index w = image.width;
  const Eigen::Index h = image.height;
  const Eigen::Index dx = w > 1 ? k : 0;
  const Eigen::Index dy = h > 1 ? w * k : 0;
  Linearization out;
  out.b = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd hsum = Eigen::VectorXd::Zero(p * p);
  Eigen::VectorXd e(k);
  double sse = 0;
  const double* src = image.data.data();
  for (int v = 0; v < tmpl.height; ++v) {
    for (int u = 0; u < tmpl.width; ++u) {
      const double x = m(0, 0) * u + m(0, 1) * v + m(0, 2);
      const double y = m(1, 0) * u + m(1, 1) * v + m(1, 2);
      if (!(x >= 0 && y >= 0 && x <= w - 1 && y <= h - 1)) continue;
      const Eigen::Index x0 = std::min<Eigen::Index>(Eigen::Index(x), std::max<Eigen::Index>(w - 2, 0));
      const Eigen::Index y0 = std::min<Eigen::Index>(Eigen::Index(y), std::max<Eigen::Index>(h - 2, 0));
      const double fx = x - x0, fy = y - y0;
      const double* q = src + (y0 * w + x0) * k;
      using Vec = Eigen::Map<const Eigen::VectorXd>;
      const Eigen::Index i = Eigen::Index(v) * tmpl.width + u;
      e = (1 - fy) * ((1 - fx) * Vec(q, k) + fx * Vec(q + dx, k)) +
          fy * ((1 - fx) * Vec(q + dy, k) + fx * Vec(q + dy + dx, k)) - tmpl.data.col(i);
      sse += e.squaredNorm();
      out.b.noalias() += sd.sd.middleRows(i * k, k).transpose() * e;
      hsum += sd.pixel_hessians.row(i).transpose();
      ++out.valid_pixels;
    }
  }
  out.hessian = Eigen::Map<const Eigen::MatrixXd>(hsum.data(), p, p);
  if (out.valid_pixels > 0) out.msr = sse / (double(out.valid_pixels) * k);
  return out;
}

InverseCompositionalAligner::InverseCompositionalAligner(const FeatureImage& tmpl, const Rect& box,
                                                         const RegressorSpec& spec, WarpKind kind)
    : kind_(kind) {
  const Rect full{0, 0, tmpl.width(), tmpl.height()};
  if (box.width < 2 || box.height < 2 || !full.contains(box)) {
    throw Error(ErrorCode::invalid_argument, "template box must lie inside the template");
  }
  // Regressors only look `margin` pixels away, so training on the box plus
  // that margin gives the same values as training on the whole template.
  const int margin = spec.method == RegressorMethod::central_difference ? 1 : spec.domain.radius();
  const int x0 = std::max(box.x - margin, 0);
  const int y0 = std::max(box.y - margin, 0);
  const int x1 = std::min(box.x + box.width + margin, tmpl.width());
  const int y1 = std::min(box.y + box.height + margin, tmpl.height());
  const Rect padded{x0, y0, x1 - x0, y1 - y0};
  const DescentRegressor reg = build_regressor(tmpl.crop(padded), spec)
                                   .crop({box.x - x0, box.y - y0, box.width, box.height});
  tmpl_ = tmpl.crop(box);
  convention_.frame_center = box.local_center();
  convention_.image_center = box.center();
  init_sd(reg);
}

InverseCompositionalAligner::InverseCompositionalAligner(FeatureImage tmpl, const DescentRegressor& reg,
                                                         WarpKind kind, const Eigen::Vector2d& image_origin)
    : tmpl_(std::move(tmpl)), kind_(kind) {
  if (reg.width() != tmpl_.width() || reg.height() != tmpl_.height() ||
      reg.channels() != tmpl_.channels()) {
    throw Error(ErrorCode::invalid_argument, "regressor does not match the template");
  }
  const Rect local{0, 0, tmpl_.width(), tmpl_.height()};
  convention_.frame_center = local.local_center();
  convention_.image_center = local.local_center() + image_origin;
  init_sd(reg);
}

void InverseCompositionalAligner::init_sd(const DescentRegressor& reg) {
  corner_box_ = Rect{0, 0, tmpl_.width(), tmpl_.height()}.corner_box();
  tmpl_pixels_ = to_pixel_major(tmpl_);
  sd_ = steepest_descent_images(reg, kind_, convention_.frame_center);
}

std::optional<InverseCompositionalAligner::Step> InverseCompositionalAligner::step(
    const PixelMajorImage& image, const AffineWarp& current, const AlignConfig& cfg,
    std::string& failure) const {
  if (image.channels() != tmpl_.channels()) {
    throw Error(ErrorCode::invalid_argument, "image and template channel counts differ");
  }
  if (!current.is_finite()) throw Error(ErrorCode::non_finite, "warp parameters are not finite");
  const Linearization lin = linearize(image, convention_.frame_to_image(current), tmpl_pixels_, sd_);
  Step s;
  s.valid_fraction = double(lin.valid_pixels) / double(tmpl_.pixels());
  if (s.valid_fraction < cfg.min_valid_fraction || lin.valid_pixels == 0) {
    failure = kInsufficientValid;
    return std::nullopt;
  }
  s.msr = lin.msr;
  try {
    s.update = AffineWarp::from_parameters(kind_, solve_update(lin.hessian, lin.b, cfg.hessian_damping));
  } catch (const Error& e) {
    failure = e.what();
    return std::nullopt;
  }
  return s;
}

AlignResult InverseCompositionalAligner::align(const FeatureImage& image, const AffineWarp& init,
                                               const AlignConfig& cfg) const {
  if (image.channels() != tmpl_.channels()) {
    throw Error(ErrorCode::invalid_argument, "image and template channel counts differ");
  }
  return align(to_pixel_major(image), init, cfg);
}

AlignResult InverseCompositionalAligner::align(const PixelMajorImage& image, const AffineWarp& init,
                                               const AlignConfig& cfg) const {
  cfg.validate();
  if (init.kind() != kind_) throw Error(ErrorCode::invalid_argument, "initial warp kind mismatch");
  AlignResult result;
  result.warp = init;
  const AffineWarp identity(kind_);
  for (int it = 0; it < cfg.max_iters; ++it) {
    const auto s = step(image, result.warp, cfg, result.failure);
    if (!s) break;
    const double motion = corner_rmse(s->update, identity, corner_box_);
    AffineWarp next;
    try {
      next = compose(result.warp, invert(s->update));
    } catch (const Error&) {
      result.failure = "non-invertible update";
      break;
    }
    if (!next.is_finite()) {
      result.failure = "non-finite warp";
      break;
    }
    result.warp = next;
    result.residual_history.push_back(s->msr);
    result.update_motion.push_back(motion);
    ++result.iterations;
    if (motion < cfg.stop_tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

AlignResult lk_align(const FeatureImage& tmpl, const FeatureImage& image, const Rect& box,
                     const AffineWarp& init, const RegressorSpec& spec, const AlignConfig& cfg) {
  const InverseCompositionalAligner aligner(tmpl, box, spec, init.kind());
  return aligner.align(image, init, cfg);
}

}  // namespace flk
