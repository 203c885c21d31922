#include <cmath>
#include <vector>

#include "flk/regress.hpp"

namespace flk {

bool svr_available() {
#ifdef FLK_ENABLE_SVR
  return true;
#else
  return false;
#endif
}

namespace {

double svr_objective(const Eigen::Vector2d& r, std::span<const Eigen::Vector2d> x,
                     std::span<const double> d, const SvrParams& p) {
  double loss = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    loss += std::max(0.0, std::abs(r.dot(x[i]) - d[i]) - p.epsilon);
  }
  return 0.5 * r.squaredNorm() + p.c * loss / double(x.size());
}

}  // namespace

Eigen::Vector2d fit_svr(std::span<const Eigen::Vector2d> inputs, std::span<const double> targets,
                        const SvrParams& params) {
  if (inputs.empty() || inputs.size() != targets.size()) {
    throw Error(ErrorCode::invalid_argument, "SVR needs matching, non-empty inputs and targets");
  }
  Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  double max_target = 0;
  double max_input = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].allFinite() || !std::isfinite(targets[i])) {
      throw Error(ErrorCode::non_finite, "SVR training data is not finite");
    }
    m += inputs[i] * inputs[i].transpose();
    b += inputs[i] * targets[i];
    max_target = std::max(max_target, std::abs(targets[i]));
    max_input = std::max(max_input, inputs[i].norm());
  }

  Eigen::Vector2d best = Eigen::Vector2d::Zero();
  double best_obj = svr_objective(best, inputs, targets, params);
  Eigen::Vector2d r = Eigen::Vector2d::Zero();
  if (std::abs(m.determinant()) > 1e-12) {
    r = m.inverse() * b;
    const double obj = svr_objective(r, inputs, targets, params);
    if (obj < best_obj) {
      best_obj = obj;
      best = r;
    }
  }
  if (max_input == 0) return best;

  const double step0 = 0.5 * std::max({r.norm(), max_target / max_input, 1e-12});
  const double decay = std::exp(std::log(1e-6) / std::max(params.iterations, 1));
  double step = step0;
  const double scale = params.c / double(inputs.size());
  for (int it = 0; it < params.iterations; ++it, step *= decay) {
    Eigen::Vector2d g = r;
    for (size_t i = 0; i < inputs.size(); ++i) {
      const double res = r.dot(inputs[i]) - targets[i];
      if (std::abs(res) > params.epsilon) g += scale * (res > 0 ? 1.0 : -1.0) * inputs[i];
    }
    const double gn = g.norm();
    if (gn == 0) break;
    r -= (step / gn) * g;
    const double obj = svr_objective(r, inputs, targets, params);
    if (obj < best_obj) {
      best_obj = obj;
      best = r;
    }
  }
  return best;
}

DescentRegressor build_svr_regressor(const FeatureImage& tmpl, const DisplacementDomain& domain,
                                     const SvrParams& params) {
  if (!svr_available()) {
    throw Error(ErrorCode::invalid_argument, "SVR regressor support was not built");
  }
  if (domain.offsets.empty()) throw Error(ErrorCode::invalid_argument, "empty displacement domain");
  if (!tmpl.all_finite()) throw Error(ErrorCode::non_finite, "template has non-finite values");
  const int w = tmpl.width();
  const int h = tmpl.height();
  std::vector<Eigen::Vector2d> inputs;
  for (const auto& o : domain.offsets) inputs.push_back(o.cast<double>());
  std::vector<double> targets(inputs.size());

  DescentRegressor reg;
  reg.method = RegressorMethod::svr;
  for (const auto& t : tmpl.planes()) {
    Plane rx(h, w), ry(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (size_t i = 0; i < domain.offsets.size(); ++i) {
          const auto& o = domain.offsets[i];
          targets[i] = t(std::clamp(y + o.y(), 0, h - 1), std::clamp(x + o.x(), 0, w - 1)) - t(y, x);
        }
        const Eigen::Vector2d r = fit_svr(inputs, targets, params);
        rx(y, x) = r.x();
        ry(y, x) = r.y();
      }
    }
    reg.rx.push_back(std::move(rx));
    reg.ry.push_back(std::move(ry));
  }
  return reg;
}

}  // namespace flk
