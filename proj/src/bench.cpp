#include "flk/bench.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flk/parallel.hpp"

namespace flk {

MethodSpec MethodSpec::parse(const std::string& text) {
  const auto dash = text.find('-');
  const auto colon = text.find(':');
  if (dash == std::string::npos || colon == std::string::npos || colon < dash) {
    throw Error(ErrorCode::invalid_argument, "method spec must look like sift-ls:4, got '" + text + "'");
  }
  MethodSpec m;
  m.features = text.substr(0, dash);
  if (m.features != "sift" && m.features != "pixel") {
    throw Error(ErrorCode::invalid_argument, "unknown feature type '" + m.features + "'");
  }
  m.method = regressor_method_from_string(text.substr(dash + 1, colon - dash - 1));
  std::string rest = text.substr(colon + 1);
  const auto colon2 = rest.find(':');
  try {
    size_t used = 0;
    m.param = std::stod(rest.substr(0, colon2), &used);
    if (used != rest.substr(0, colon2).size()) throw std::invalid_argument("trailing");
    if (colon2 != std::string::npos) {
      const std::string cell = rest.substr(colon2 + 1);
      m.cell_size = std::stoi(cell, &used);
      if (used != cell.size()) throw std::invalid_argument("trailing");
      if (m.cell_size < 1) throw Error(ErrorCode::invalid_argument, "cell size must be >= 1 in '" + text + "'");
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(ErrorCode::invalid_argument, "bad numeric field in method spec '" + text + "'");
  }
  if (m.method == RegressorMethod::central_difference) {
    if (!(m.param >= 0)) throw Error(ErrorCode::invalid_argument, "blur sigma must be >= 0 in '" + text + "'");
  } else if (m.param < 1 || m.param != std::floor(m.param)) {
    throw Error(ErrorCode::invalid_argument, "domain radius must be a positive integer in '" + text + "'");
  }
  return m;
}

std::string MethodSpec::id() const {
  std::ostringstream os;
  os << features << '-' << to_string(method) << ':' << param;
  if (cell_size > 0) os << ':' << cell_size;
  return os.str();
}

SiftParams MethodSpec::sift_params() const {
  SiftParams p = method == RegressorMethod::svr ? SiftParams::svr_preset() : SiftParams::least_squares_preset();
  if (cell_size > 0) p.cell_size = cell_size;
  return p;
}

double MethodSpec::blur_sigma() const {
  return method == RegressorMethod::central_difference ? param : 0.0;
}

RegressorSpec MethodSpec::regressor(double rho, const SvrParams& svr) const {
  RegressorSpec spec;
  spec.method = method;
  spec.svr = svr;
  if (method != RegressorMethod::central_difference) spec.domain = DisplacementDomain::grid(int(param), rho);
  return spec;
}

FeatureImage MethodSpec::features_of(const GrayImage& img) const {
  if (features == "pixel") return pixel_features(img, blur_sigma());
  FeatureImage f = dense_sift(img, sift_params());
  return blur_sigma() > 0 ? gaussian_blur(f, blur_sigma()) : f;
}

void BasinConfig::validate() const {
  if (error_levels.empty()) throw Error(ErrorCode::invalid_argument, "no error levels given");
  for (size_t i = 0; i < error_levels.size(); ++i) {
    if (!(error_levels[i] >= 0) || (i > 0 && !(error_levels[i] > error_levels[i - 1]))) {
      throw Error(ErrorCode::invalid_argument, "error levels must be non-negative and ascending");
    }
  }
  if (trials < 1) throw Error(ErrorCode::invalid_argument, "trials must be >= 1");
  if (!(epsilon > 0)) throw Error(ErrorCode::invalid_argument, "epsilon must be > 0");
  if (!(rho >= 0)) throw Error(ErrorCode::invalid_argument, "rho must be >= 0");
  align.validate();
}

AffineWarp perturb_warp(const AffineWarp& truth, const Box& box, double magnitude, std::mt19937_64& rng) {
  if (!(magnitude >= 0)) throw Error(ErrorCode::invalid_argument, "perturbation magnitude must be >= 0");
  if (magnitude == 0) return truth;
  const WarpKind kind = truth.kind();
  const int p = parameter_count(kind);
  const auto corners = box.corners();

  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(p, p);
  for (const auto& c : corners) {
    const auto j = jacobian(kind, c);
    normal += j.transpose() * j;
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || std::abs(normal.determinant()) < 1e-12) {
    throw Error(ErrorCode::invalid_argument, "degenerate box for perturbation");
  }

  std::normal_distribution<double> gauss(0, 1);
  for (int attempt = 0; attempt < 100; ++attempt) {
    // Because apply() is affine in the parameters, the corner offsets map
    // linearly to a parameter delta and rescaling the delta rescales them.
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (const auto& c : corners) {
      const Eigen::Vector2d offset(gauss(rng), gauss(rng));
      rhs += jacobian(kind, c).transpose() * offset;
    }
    const Eigen::VectorXd delta = ldlt.solve(rhs);
    double sq = 0;
    for (const auto& c : corners) sq += (jacobian(kind, c) * delta).squaredNorm();
    const double rmse = std::sqrt(sq / 4);
    if (!(rmse > 1e-9)) continue;
    const Eigen::VectorXd params = truth.parameters() + delta * (magnitude / rmse);
    const AffineWarp out = AffineWarp::from_parameters(kind, params);
    if (kind == WarpKind::affine && std::abs(out.linear().determinant()) < 1e-6) continue;
    return out;
  }
  throw Error(ErrorCode::invalid_argument, "could not draw a non-degenerate perturbation");
}

PerturbedStack make_perturbed_stack(const PerturbedStackSpec& spec) {
  if (spec.count < 1) throw Error(ErrorCode::invalid_argument, "stack count must be >= 1");
  const Rect frame = centered_box(spec.size, spec.size, spec.frame_fraction);
  const SyntheticTexture tex = texture_named(spec.texture, spec.seed);
  PerturbedStack out;
  out.frame_width = frame.width;
  out.frame_height = frame.height;
  WarpConvention conv;
  conv.frame_center = conv.image_center = Rect{0, 0, spec.size, spec.size}.local_center();
  std::mt19937_64 rng(spec.seed + 0x5eedULL);
  const Box box = Rect{0, 0, frame.width, frame.height}.corner_box();
  for (int i = 0; i < spec.count; ++i) {
    const AffineWarp w = perturb_warp(AffineWarp(), box, spec.magnitude, rng);
    out.truth.push_back(w);
    out.images.push_back(render(tex, spec.size, spec.size, w, conv));
  }
  return out;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::invalid_argument, "bad number in CSV: '" + s + "'");
  }
  return v;
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t seed, const std::string& method, double level, int trial) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : method) h = (h ^ c) * 0x100000001b3ULL;
  std::uint64_t level_bits;
  std::memcpy(&level_bits, &level, sizeof(level_bits));
  return mix(mix(mix(mix(seed) ^ h) ^ level_bits) ^ std::uint64_t(trial));
}

namespace {

AffineWarp truth_for(const AffineWarp& truth, WarpKind kind) {
  if (truth.kind() == kind) return truth;
  if (kind == WarpKind::affine) return AffineWarp(kind, truth.params());
  return AffineWarp(kind, truth.params());  // throws unless the linear part is zero
}

}  // namespace

BasinMethod::BasinMethod(const GroundTruthPair& pair, const MethodSpec& method, const BasinConfig& cfg)
    : id_(method.id()),
      truth_(truth_for(pair.truth, cfg.kind)),
      image_features_(to_pixel_major(method.features_of(pair.image))),
      aligner_(method.features_of(pair.tmpl), pair.box, method.regressor(cfg.rho, cfg.svr), cfg.kind) {}

TrialOutcome BasinMethod::run_trial(double level, int trial, const BasinConfig& cfg) const {
  std::mt19937_64 rng(trial_seed(cfg.seed, id_, level, trial));
  const Box& box = aligner_.corner_box();
  const AffineWarp init = perturb_warp(truth_, box, level, rng);
  const AlignResult r = aligner_.align(image_features_, init, cfg.align);
  TrialOutcome out;
  out.iterations = r.iterations;
  out.final_rmse = corner_rmse(r.warp, truth_, box);
  out.converged = r.failure.empty() && out.final_rmse < cfg.epsilon;
  return out;
}

std::vector<BasinRow> run_basin(const GroundTruthPair& pair, const BasinConfig& cfg) {
  cfg.validate();
  std::vector<BasinRow> rows;
  for (const MethodSpec& spec : cfg.methods) {
    const BasinMethod method(pair, spec, cfg);
    for (double level : cfg.error_levels) {
      std::vector<TrialOutcome> outcomes(cfg.trials);
      parallel_for(outcomes.size(), cfg.threads,
                   [&](size_t t) { outcomes[t] = method.run_trial(level, int(t), cfg); });
      BasinRow row;
      row.method = method.id();
      row.error_px = level;
      row.trials = cfg.trials;
      double iters = 0, rmse = 0;
      for (const auto& o : outcomes) {
        row.converged += o.converged ? 1 : 0;
        iters += o.iterations;
        rmse += o.final_rmse;
      }
      row.mean_iters = iters / cfg.trials;
      row.mean_final_rmse = rmse / cfg.trials;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string format_csv(const std::vector<BasinRow>& rows) {
  std::string out = "method,error_px,trials,converged,fraction,mean_iters,mean_final_rmse\n";
  for (const auto& r : rows) {
    char fraction[32];
    std::snprintf(fraction, sizeof(fraction), "%.6g", r.fraction());
    out += r.method + ',' + shortest(r.error_px) + ',' + std::to_string(r.trials) + ',' +
           std::to_string(r.converged) + ',' + fraction + ',' + shortest(r.mean_iters) + ',' +
           shortest(r.mean_final_rmse) + '\n';
  }
  return out;
}

std::vector<BasinRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<BasinRow> rows;
  if (!std::getline(in, line) || line != "method,error_px,trials,converged,fraction,mean_iters,mean_final_rmse") {
    throw Error(ErrorCode::invalid_argument, "missing basin CSV header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw Error(ErrorCode::invalid_argument, "basin CSV row needs 7 fields");
    BasinRow r;
    r.method = f[0];
    r.error_px = parse_double(f[1]);
    r.trials = int(parse_double(f[2]));
    r.converged = int(parse_double(f[3]));
    r.mean_iters = parse_double(f[5]);
    r.mean_final_rmse = parse_double(f[6]);
    rows.push_back(r);
  }
  return rows;
}

void emit_csv(const std::vector<BasinRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::unwritable, "cannot open " + path.string() + " for writing");
  out << format_csv(rows);
  if (!out) throw Error(ErrorCode::unwritable, "write failed: " + path.string());
}

}  // namespace flk
