#include "flk/congeal.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "flk/parallel.hpp"

namespace flk {

Stack Stack::build(std::vector<GrayImage> images, int frame_width, int frame_height,
                   const std::function<FeatureImage(const GrayImage&)>& features, WarpKind kind) {
  Stack s;
  s.frame_width = frame_width;
  s.frame_height = frame_height;
  s.images = std::move(images);
  for (const auto& img : s.images) {
    s.features.push_back(features(img));
    s.warps.emplace_back(kind);
  }
  return s;
}

WarpConvention Stack::convention(size_t i) const {
  WarpConvention c;
  c.frame_center = Rect{0, 0, frame_width, frame_height}.local_center();
  c.image_center = Rect{0, 0, int(images[i].cols()), int(images[i].rows())}.local_center();
  return c;
}

void Stack::validate() const {
  if (images.empty()) throw Error(ErrorCode::invalid_argument, "empty stack");
  if (features.size() != images.size() || warps.size() != images.size()) {
    throw Error(ErrorCode::invalid_argument, "stack images, features and warps differ in count");
  }
  if (frame_width < 2 || frame_height < 2) throw Error(ErrorCode::invalid_argument, "frame too small");
  for (size_t i = 0; i < size(); ++i) {
    if (features[i].channels() != features[0].channels()) {
      throw Error(ErrorCode::invalid_argument, "stack feature images differ in channel count");
    }
    if (warps[i].kind() != warps[0].kind()) {
      throw Error(ErrorCode::invalid_argument, "stack warps differ in kind");
    }
    if (std::abs(warps[i].linear().determinant()) <= 1e-12) {
      throw Error(ErrorCode::invalid_argument, "stack warp is not invertible");
    }
  }
}

void CongealConfig::validate() const {
  if (outer_iters < 1) throw Error(ErrorCode::invalid_argument, "outer_iters must be >= 1");
  if (!(mean_change_tol > 0)) throw Error(ErrorCode::invalid_argument, "mean_change_tol must be > 0");
  inner.validate();
}

namespace {

using Warped = WarpedImage<double>;

// Processing order depends only on image content and warp, never on the
// input position, so permuting the stack permutes results bit for bit.
std::vector<size_t> canonical_order(const Stack& s, const std::vector<AffineWarp>& warps) {
  std::vector<std::uint64_t> keys(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* data, size_t bytes) {
      const auto* p = static_cast<const unsigned char*>(data);
      for (size_t b = 0; b < bytes; ++b) h = (h ^ p[b]) * 0x100000001b3ULL;
    };
    feed(s.images[i].data(), sizeof(double) * size_t(s.images[i].size()));
    feed(warps[i].params().data(), sizeof(double) * 6);
    keys[i] = h;
  }
  std::vector<size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return keys[a] < keys[b]; });
  return order;
}

std::vector<Warped> warp_all(const Stack& s, const std::vector<AffineWarp>& warps, int threads) {
  std::vector<Warped> out(s.size());
  parallel_for(s.size(), threads, [&](size_t i) {
    out[i] = warp_image(s.features[i], warps[i], s.frame_width, s.frame_height, s.convention(i));
  });
  return out;
}

FeatureImage masked_mean(const std::vector<Warped>& warped, const std::vector<size_t>& order,
                         std::optional<size_t> exclude, const std::vector<bool>& skip) {
  const int w = warped.front().image.width();
  const int h = warped.front().image.height();
  const int k = warped.front().image.channels();
  FeatureImage sum(w, h, k);
  Plane count = Plane::Zero(h, w);
  for (size_t i : order) {
    if ((exclude && *exclude == i) || (!skip.empty() && skip[i])) continue;
    const Plane valid = warped[i].mask.cast<double>();
    count += valid;
    for (int c = 0; c < k; ++c) sum.plane(c) += (warped[i].mask).select(warped[i].image.plane(c), 0.0);
  }
  const Plane inv = (count > 0).select(count.inverse(), 0.0);
  for (int c = 0; c < k; ++c) sum.plane(c) *= inv;
  return sum;
}

double mean_change(const FeatureImage& a, const FeatureImage& b) {
  double s = 0;
  for (int c = 0; c < a.channels(); ++c) s += (a.plane(c) - b.plane(c)).square().sum();
  return s / (double(a.pixels()) * a.channels());
}

std::vector<bool> below_floor(const std::vector<Warped>& warped, double min_fraction) {
  std::vector<bool> out(warped.size());
  for (size_t i = 0; i < warped.size(); ++i) {
    out[i] = double(warped[i].mask.count()) / double(warped[i].mask.size()) < min_fraction;
  }
  return out;
}

}  // namespace

FeatureImage stack_mean(const Stack& stack, std::optional<size_t> exclude, const std::vector<bool>& skip) {
  stack.validate();
  size_t contributors = 0;
  for (size_t i = 0; i < stack.size(); ++i) {
    if (!(exclude && *exclude == i) && (skip.empty() || !skip[i])) ++contributors;
  }
  if (contributors == 0) throw Error(ErrorCode::invalid_argument, "stack mean has no contributing image");
  return masked_mean(warp_all(stack, stack.warps, 1), canonical_order(stack, stack.warps), exclude, skip);
}

void normalize_mean_warp(std::vector<AffineWarp>& warps, const std::vector<bool>& skip) {
  if (warps.empty()) return;
  const WarpKind kind = warps.front().kind();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(parameter_count(kind));
  int n = 0;
  for (size_t i = 0; i < warps.size(); ++i) {
    if (!skip.empty() && skip[i]) continue;
    mean += warps[i].parameters();
    ++n;
  }
  if (n == 0) return;
  // A(p) is affine in p, so the mean of A(p_i) G is A(mean p) G; choosing
  // G = A(mean p)^-1 makes the new mean exactly the identity.
  const AffineWarp g = invert(AffineWarp::from_parameters(kind, mean / n));
  for (auto& w : warps) w = compose(w, g);
}

CongealResult congeal(const Stack& stack, const CongealConfig& cfg) {
  stack.validate();
  cfg.validate();
  if (stack.size() < 2) throw Error(ErrorCode::invalid_argument, "congealing needs at least two images");
  const size_t n = stack.size();
  const WarpKind kind = stack.warps.front().kind();
  const std::vector<size_t> order = canonical_order(stack, stack.warps);
  const Eigen::Vector2d frame_center = Rect{0, 0, stack.frame_width, stack.frame_height}.local_center();

  CongealResult result;
  result.warps = stack.warps;
  std::vector<Warped> warped = warp_all(stack, result.warps, cfg.threads);
  std::vector<bool> skip = below_floor(warped, cfg.inner.min_valid_fraction);
  FeatureImage mean = masked_mean(warped, order, std::nullopt, skip);

  for (int outer = 0; outer < cfg.outer_iters; ++outer) {
    if (std::count(skip.begin(), skip.end(), false) < 2) break;
    std::vector<AffineWarp> next = result.warps;
    std::vector<double> msr(n, 0.0);
    parallel_for(n, cfg.threads, [&](size_t i) {
      if (skip[i]) return;
      const FeatureImage tmpl = masked_mean(warped, order, i, skip);
      const DescentRegressor reg = build_regressor(tmpl, cfg.regressor);
      const InverseCompositionalAligner aligner(tmpl, reg, kind,
                                                stack.convention(i).image_center - frame_center);
      const AlignResult r = aligner.align(stack.features[i], result.warps[i], cfg.inner);
      if (!r.residual_history.empty()) msr[i] = r.residual_history.front();
      if (r.failure.empty()) next[i] = r.warp;
    });
    double total = 0;
    for (size_t i : order) total += msr[i];
    result.total_msr.push_back(total);

    if (cfg.anchor == AnchorPolicy::normalize_mean) {
      std::vector<AffineWarp> ordered;
      std::vector<bool> ordered_skip;
      for (size_t i : order) {
        ordered.push_back(next[i]);
        ordered_skip.push_back(skip[i]);
      }
      normalize_mean_warp(ordered, ordered_skip);
      for (size_t j = 0; j < n; ++j) next[order[j]] = ordered[j];
    } else {
      const AffineWarp g = compose(invert(next.front()), stack.warps.front());
      for (auto& w : next) w = compose(w, g);
    }
    result.warps = std::move(next);

    warped = warp_all(stack, result.warps, cfg.threads);
    skip = below_floor(warped, cfg.inner.min_valid_fraction);
    FeatureImage updated = masked_mean(warped, order, std::nullopt, skip);
    const double change = mean_change(updated, mean);
    mean = std::move(updated);
    result.mean_history.push_back(change);
    ++result.outer_iterations;
    if (change < cfg.mean_change_tol) {
      result.converged = true;
      break;
    }
  }
  for (size_t i = 0; i < n; ++i) {
    if (skip[i]) result.failures.push_back(i);
  }
  return result;
}

namespace {

std::vector<Warped> warp_pixels(const Stack& stack, const std::vector<AffineWarp>& warps) {
  std::vector<Warped> out;
  for (size_t i = 0; i < stack.size(); ++i) {
    out.push_back(warp_image(FeatureImage(stack.images[i]), warps[i], stack.frame_width,
                             stack.frame_height, stack.convention(i)));
  }
  return out;
}

}  // namespace

MeanReport mean_image_report(const Stack& stack, const std::vector<AffineWarp>& initial,
                             const std::vector<AffineWarp>& final) {
  if (initial.size() != stack.size() || final.size() != stack.size()) {
    throw Error(ErrorCode::invalid_argument, "warp count does not match the stack");
  }
  const auto order = canonical_order(stack, initial);
  return {masked_mean(warp_pixels(stack, initial), order, std::nullopt, {}).plane(0),
          masked_mean(warp_pixels(stack, final), order, std::nullopt, {}).plane(0)};
}

double stack_variance(const Stack& stack, const std::vector<AffineWarp>& warps) {
  const auto warped = warp_pixels(stack, warps);
  const int w = stack.frame_width;
  const int h = stack.frame_height;
  Plane sum = Plane::Zero(h, w), sq = Plane::Zero(h, w), count = Plane::Zero(h, w);
  for (const auto& wi : warped) {
    const Plane v = wi.mask.select(wi.image.plane(0), 0.0);
    sum += v;
    sq += v.square();
    count += wi.mask.cast<double>();
  }
  double total = 0;
  long sites = 0;
  for (Eigen::Index i = 0; i < sum.size(); ++i) {
    const double c = count.data()[i];
    if (c < 2) continue;
    const double m = sum.data()[i] / c;
    total += std::max(0.0, sq.data()[i] / c - m * m);
    ++sites;
  }
  return sites == 0 ? 0.0 : total / double(sites);
}

double gradient_energy(const GrayImage& img) {
  double e = 0;
  for (Eigen::Index y = 1; y + 1 < img.rows(); ++y) {
    for (Eigen::Index x = 1; x + 1 < img.cols(); ++x) {
      const double gx = (img(y, x + 1) - img(y, x - 1)) / 2;
      const double gy = (img(y + 1, x) - img(y - 1, x)) / 2;
      e += gx * gx + gy * gy;
    }
  }
  return e;
}

}  // namespace flk
