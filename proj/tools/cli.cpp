#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "flk/features.hpp"
#include "flk/image_io.hpp"
#include "flk/parallel.hpp"
#include "flk/warp_json.hpp"

namespace flk::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, sep);) out.push_back(item);
  return out;
}

double to_number(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("bad number '" + s + "' in " + what);
}

int to_int(const std::string& s, const std::string& what) {
  const double v = to_number(s, what);
  if (v != std::floor(v)) throw UsageError("expected an integer, got '" + s + "' in " + what);
  return int(v);
}

Rect parse_box(const std::string& text) {
  const auto f = split(text, ',');
  if (f.size() != 4) throw UsageError("--box expects x,y,w,h");
  const Rect r{to_int(f[0], "--box"), to_int(f[1], "--box"), to_int(f[2], "--box"), to_int(f[3], "--box")};
  if (r.width < 2 || r.height < 2) throw UsageError("--box width and height must be >= 2");
  return r;
}

std::pair<int, int> parse_frame(const std::string& text) {
  const auto f = split(text, 'x');
  if (f.size() != 2) throw UsageError("--frame expects WxH");
  const int w = to_int(f[0], "--frame"), h = to_int(f[1], "--frame");
  if (w < 2 || h < 2) throw UsageError("--frame sides must be >= 2");
  return {w, h};
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split(text, ',')) out.push_back(to_number(s, "--levels"));
  return out;
}

void require_svr(RegressorMethod m) {
  if (m == RegressorMethod::svr && !svr_available()) {
    throw UsageError("method svr is unsupported: this build was configured with FLK_ENABLE_SVR=OFF");
  }
}

RegressorSpec regressor_of(const SolverOptions& s) {
  RegressorSpec spec;
  spec.method = regressor_method_from_string(s.method);
  require_svr(spec.method);
  spec.domain = DisplacementDomain::grid(s.radius, s.rho);
  return spec;
}

FeatureImage features_of(const GrayImage& img, const SolverOptions& s) {
  if (s.features == "pixel") return pixel_features(img, s.blur);
  SiftParams p = s.method == "svr" ? SiftParams::svr_preset() : SiftParams::least_squares_preset();
  if (s.cell > 0) p.cell_size = s.cell;
  FeatureImage f = dense_sift(img, p);
  return s.blur > 0 ? gaussian_blur(f, s.blur) : f;
}

class Logger {
 public:
  Logger(std::ostream& err, int level) : err_(err), level_(level) {}
  void operator()(int level, const std::string& msg) const {
    if (level <= level_) err_ << "[flk] " << msg << '\n';
  }

 private:
  std::ostream& err_;
  int level_;
};

void add_solver_options(CLI::App* sub, SolverOptions& s) {
  sub->add_option("--features", s.features, "Feature transform")->check(CLI::IsMember({"sift", "pixel"}));
  sub->add_option("--method", s.method, "Descent regressor: cd, ls or svr")
      ->check(CLI::IsMember({"cd", "ls", "svr"}));
  sub->add_option("--warp", s.warp, "Warp model")->check(CLI::IsMember({"affine", "translation"}));
  sub->add_option("--radius", s.radius, "Training domain radius n (grid [-n,n]^2)")->check(CLI::Range(1, 64));
  sub->add_option("--rho", s.rho, "Ridge weight of the regressor")->check(CLI::NonNegativeNumber);
  sub->add_option("--blur", s.blur, "Gaussian blur sigma on the feature planes, px")->check(CLI::NonNegativeNumber);
  sub->add_option("--cell", s.cell, "SIFT cell size, px (0: 4 for cd/ls, 8 for svr)")->check(CLI::Range(0, 64));
}

// ---------------------------------------------------------------------------

int run_align(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  const AlignOptions& o = cfg.align;
  const RegressorSpec spec = regressor_of(o.solver);
  const WarpKind kind = warp_kind_from_string(o.solver.warp);
  const GrayImage tmpl = load_image(o.tmpl);
  const GrayImage image = load_image(o.image);
  const Rect box = o.box.empty() ? centered_box(int(tmpl.cols()), int(tmpl.rows()), 0.5) : parse_box(o.box);
  if (!Rect{0, 0, int(tmpl.cols()), int(tmpl.rows())}.contains(box)) {
    throw UsageError("--box lies outside the template");
  }
  AffineWarp init(kind);
  if (!o.init.empty()) {
    std::ifstream in(o.init);
    if (!in) throw Error(ErrorCode::unreadable, "cannot open " + o.init);
    init = warp_from_json(json::parse(in, nullptr, true));
    if (init.kind() != kind) throw UsageError("--init warp kind differs from --warp");
  }
  log(1, "computing " + o.solver.features + " features");
  const FeatureImage tf = features_of(tmpl, o.solver);
  const FeatureImage imf = features_of(image, o.solver);
  log(1, "training " + o.solver.method + " regressor");
  const InverseCompositionalAligner aligner(tf, box, spec, kind);
  const AlignResult r = aligner.align(imf, init, o.align);
  log(1, "finished after " + std::to_string(r.iterations) + " iterations");

  if (!o.out_crop.empty()) {
    const auto crop = warp_image(FeatureImage(image), r.warp, box.width, box.height, aligner.convention());
    save_image(crop.image.plane(0), o.out_crop);
  }
  if (cfg.json) {
    json j{{"schema", 1},
           {"command", "align"},
           {"warp", warp_to_json(r.warp)},
           {"iterations", r.iterations},
           {"converged", r.converged},
           {"failure", r.failure},
           {"box", {box.x, box.y, box.width, box.height}},
           {"residuals", r.residual_history}};
    out << j.dump() << '\n';
  } else {
    out << warp_to_json(r.warp).dump() << '\n';
    out << "iteration,msr,update_motion\n";
    for (size_t i = 0; i < r.residual_history.size(); ++i) {
      out << i + 1 << ',' << r.residual_history[i] << ',' << r.update_motion[i] << '\n';
    }
  }
  if (!r.failure.empty()) {
    log(0, "alignment failed: " + r.failure);
    return kExitFailed;
  }
  return kExitOk;
}

std::vector<fs::path> image_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (ext == ".png" || ext == ".pgm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int run_congeal(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  const CongealOptions& o = cfg.congeal;
  CongealConfig cc = o.congeal;
  cc.regressor = regressor_of(o.solver);
  cc.anchor = o.anchor == "fix-first" ? AnchorPolicy::fix_first : AnchorPolicy::normalize_mean;
  cc.threads = cfg.threads;
  const WarpKind kind = warp_kind_from_string(o.solver.warp);

  const auto files = image_files(o.dir);
  if (files.size() < 2) throw UsageError("congeal needs at least two .png/.pgm images in " + o.dir);
  std::vector<GrayImage> images;
  for (const auto& f : files) images.push_back(load_image(f));
  int fw, fh;
  if (o.frame.empty()) {
    const Rect r = centered_box(int(images[0].cols()), int(images[0].rows()), 0.5);
    fw = r.width;
    fh = r.height;
  } else {
    std::tie(fw, fh) = parse_frame(o.frame);
  }
  log(1, "computing features for " + std::to_string(images.size()) + " images");
  const Stack stack = Stack::build(std::move(images), fw, fh,
                                   [&](const GrayImage& g) { return features_of(g, o.solver); }, kind);
  const CongealResult r = congeal(stack, cc);
  log(1, "congealing stopped after " + std::to_string(r.outer_iterations) + " outer iterations");

  const fs::path dir(o.out);
  fs::create_directories(dir / "warps");
  json summary_images = json::array();
  for (size_t i = 0; i < files.size(); ++i) {
    const bool failed = std::find(r.failures.begin(), r.failures.end(), i) != r.failures.end();
    const json w = warp_to_json(r.warps[i]);
    std::ofstream(dir / "warps" / (files[i].stem().string() + ".json")) << w.dump(2) << '\n';
    summary_images.push_back({{"file", files[i].filename().string()}, {"warp", w}, {"failed", failed}});
  }
  const MeanReport means = mean_image_report(stack, stack.warps, r.warps);
  save_image(means.before, dir / "mean_before.png");
  save_image(means.after, dir / "mean_after.png");
  {
    std::ofstream csv(dir / "convergence.csv", std::ios::binary);
    csv << "outer_iter,total_msr,mean_change\n";
    for (size_t i = 0; i < r.total_msr.size(); ++i) {
      csv << i + 1 << ',' << r.total_msr[i] << ',' << r.mean_history[i] << '\n';
    }
    if (!csv) throw Error(ErrorCode::unwritable, "cannot write " + (dir / "convergence.csv").string());
  }
  if (cfg.json) {
    out << json{{"schema", 1},
                {"command", "congeal"},
                {"outer_iterations", r.outer_iterations},
                {"converged", r.converged},
                {"failures", r.failures},
                {"images", summary_images},
                {"out", dir.string()}}
               .dump()
        << '\n';
  } else {
    out << "congealed " << files.size() << " images in " << r.outer_iterations << " outer iterations"
        << (r.converged ? " (converged)" : "") << "; outputs in " << dir.string() << '\n';
  }
  if (!r.failures.empty()) {
    log(0, std::to_string(r.failures.size()) + " image(s) left the frame and were excluded");
    return kExitFailed;
  }
  return kExitOk;
}

int run_bench(const RunConfig& cfg, std::ostream& out, const Logger& log) {
  const BenchOptions& o = cfg.bench;
  BasinConfig bc = o.basin;
  bc.seed = cfg.seed;
  bc.threads = cfg.threads;
  bc.kind = warp_kind_from_string(o.warp);
  bc.error_levels = parse_levels(o.levels);
  bc.methods.clear();
  for (const auto& m : split(o.methods, ',')) {
    bc.methods.push_back(MethodSpec::parse(m));
    require_svr(bc.methods.back().method);
  }
  bc.validate();

  GroundTruthPair pair;
  if (!o.pair.empty()) {
    const auto f = split(o.pair, ',');
    if (f.size() != 3) throw UsageError("--pair expects template,image,truth.json");
    pair.tmpl = load_image(f[0]);
    pair.image = load_image(f[1]);
    std::ifstream in(f[2]);
    if (!in) throw Error(ErrorCode::unreadable, "cannot open " + f[2]);
    pair.truth = warp_from_json(json::parse(in, nullptr, true));
    pair.box = o.box.empty() ? centered_box(int(pair.tmpl.cols()), int(pair.tmpl.rows()), 0.5) : parse_box(o.box);
  } else {
    SyntheticPairSpec s;
    s.texture = o.texture;
    s.invert_contrast = o.invert;
    s.size = o.size;
    s.noise_sigma = o.noise;
    pair = make_synthetic_pair(s);
  }
  log(1, "running " + std::to_string(bc.methods.size()) + " method(s) x " + std::to_string(bc.error_levels.size()) +
             " level(s) x " + std::to_string(bc.trials) + " trials");
  const auto rows = run_basin(pair, bc);
  emit_csv(rows, o.out);
  for (const auto& r : rows) {
    log(1, r.method + " at " + std::to_string(r.error_px) + " px: " + std::to_string(r.converged) + "/" +
               std::to_string(r.trials));
  }
  if (cfg.json) {
    json jr = json::array();
    for (const auto& r : rows) {
      jr.push_back({{"method", r.method},
                    {"error_px", r.error_px},
                    {"trials", r.trials},
                    {"converged", r.converged},
                    {"fraction", r.fraction()},
                    {"mean_iters", r.mean_iters},
                    {"mean_final_rmse", r.mean_final_rmse}});
    }
    out << json{{"schema", 1}, {"command", "bench"}, {"out", o.out}, {"rows", jr}}.dump() << '\n';
  } else {
    out << "wrote " << rows.size() << " rows to " << o.out << '\n';
  }
  return kExitOk;
}

int run_features_dump(const RunConfig& cfg, std::ostream& out, const Logger&) {
  const FeaturesOptions& o = cfg.features;
  SolverOptions s;
  s.features = o.features;
  s.cell = o.cell;
  s.blur = o.blur;
  const FeatureImage f = features_of(load_image(o.image), s);
  save_feature_dump(f, o.out);
  if (cfg.json) {
    out << json{{"schema", 1},
                {"command", "features dump"},
                {"width", f.width()},
                {"height", f.height()},
                {"channels", f.channels()},
                {"out", o.out}}
               .dump()
        << '\n';
  } else {
    out << "wrote " << f.width() << "x" << f.height() << "x" << f.channels() << " features to " << o.out << '\n';
  }
  return kExitOk;
}

}  // namespace

std::unique_ptr<CLI::App> make_app(RunConfig& cfg) {
  auto app = std::make_unique<CLI::App>(
      "Inverse-compositional Lucas-Kanade alignment with regressed descent directions over dense features", "flk");
  app->option_defaults()->always_capture_default();
  app->require_subcommand(1);
  app->fallthrough();
  app->add_option("--threads", cfg.threads, "Worker threads (0: FEATURE_LK_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  app->add_flag("--json", cfg.json, "Print a JSON summary (schema 1) on stdout");
  app->add_flag("-v,--verbose", cfg.verbose, "Log progress to stderr; repeat for more detail");
  app->add_option("--seed", cfg.seed, "Seed for all random draws");

  auto* align = app->add_subcommand("align", "Align an image to a template box");
  align->add_option("--template", cfg.align.tmpl, "Template image (PNG or PGM)")->required()->check(CLI::ExistingFile);
  align->add_option("--image", cfg.align.image, "Image to align (PNG or PGM)")->required()->check(CLI::ExistingFile);
  align->add_option("--box", cfg.align.box, "Template box x,y,w,h (empty: centred, half the area)");
  align->add_option("--init", cfg.align.init, "Initial warp JSON (empty: identity)");
  align->add_option("--out-crop", cfg.align.out_crop, "Write the image resampled into the box frame");
  add_solver_options(align, cfg.align.solver);
  align->add_option("--max-iters", cfg.align.align.max_iters, "Iteration cap")->check(CLI::PositiveNumber);
  align->add_option("--stop-tol", cfg.align.align.stop_tol, "Stop when the update moves corners less, px")
      ->check(CLI::PositiveNumber);
  align->add_option("--min-valid", cfg.align.align.min_valid_fraction, "Minimum valid pixel fraction")
      ->check(CLI::Range(1e-9, 1.0));
  align->add_option("--damping", cfg.align.align.hessian_damping, "Hessian damping, times trace(H)/P")
      ->check(CLI::PositiveNumber);

  auto* congeal = app->add_subcommand("congeal", "Jointly align a directory of images");
  congeal->add_option("--dir", cfg.congeal.dir, "Directory of .png/.pgm images")->required()->check(CLI::ExistingDirectory);
  congeal->add_option("--frame", cfg.congeal.frame, "Common frame WxH (empty: half the area of the first image)");
  congeal->add_option("--out", cfg.congeal.out, "Output directory");
  congeal->add_option("--outer", cfg.congeal.congeal.outer_iters, "Outer iterations")->check(CLI::PositiveNumber);
  congeal->add_option("--inner", cfg.congeal.congeal.inner.max_iters, "Alignment iterations per image and pass")
      ->check(CLI::PositiveNumber);
  congeal->add_option("--mean-tol", cfg.congeal.congeal.mean_change_tol, "Stop when the mean changes less (MSR)")
      ->check(CLI::PositiveNumber);
  congeal->add_option("--min-valid", cfg.congeal.congeal.inner.min_valid_fraction, "Minimum valid pixel fraction")
      ->check(CLI::Range(1e-9, 1.0));
  congeal->add_option("--anchor", cfg.congeal.anchor, "Gauge fixing after each pass")
      ->check(CLI::IsMember({"normalize-mean", "fix-first"}));
  add_solver_options(congeal, cfg.congeal.solver);

  auto* bench = app->add_subcommand("bench", "Convergence-basin benchmark");
  bench->add_option("--suite", cfg.bench.suite, "Benchmark suite")->check(CLI::IsMember({"synthetic"}));
  bench->add_option("--texture", cfg.bench.texture, "Synthetic texture")
      ->check(CLI::IsMember({"texture", "checker", "smooth"}));
  bench->add_flag("--invert", cfg.bench.invert, "Invert the image contrast against the template");
  bench->add_option("--size", cfg.bench.size, "Synthetic image side, px")->check(CLI::Range(32, 4096));
  bench->add_option("--noise", cfg.bench.noise, "Gaussian noise sigma on the synthetic image")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--pair", cfg.bench.pair, "User pair template,image,truth.json instead of the suite");
  bench->add_option("--box", cfg.bench.box, "Template box x,y,w,h for --pair (empty: centred, half the area)");
  bench->add_option("--methods", cfg.bench.methods, "Comma-separated features-method:param[:cell]");
  bench->add_option("--levels", cfg.bench.levels, "Comma-separated initialization errors, corner RMSE px");
  bench->add_option("--trials", cfg.bench.basin.trials, "Trials per method and level")->check(CLI::PositiveNumber);
  bench->add_option("--eps", cfg.bench.basin.epsilon, "Convergence tolerance, corner RMSE px")
      ->check(CLI::PositiveNumber);
  bench->add_option("--rho", cfg.bench.basin.rho, "Ridge weight of ls/svr regressors")->check(CLI::NonNegativeNumber);
  bench->add_option("--max-iters", cfg.bench.basin.align.max_iters, "Iteration cap per trial")
      ->check(CLI::PositiveNumber);
  bench->add_option("--warp", cfg.bench.warp, "Warp model")->check(CLI::IsMember({"affine", "translation"}));
  bench->add_option("--out", cfg.bench.out, "CSV output path");

  auto* features = app->add_subcommand("features", "Feature utilities");
  features->require_subcommand(1);
  auto* dump = features->add_subcommand("dump", "Write a feature image as a binary dump");
  dump->add_option("--image", cfg.features.image, "Input image")->required()->check(CLI::ExistingFile);
  dump->add_option("--out", cfg.features.out, "Output dump path")->required();
  dump->add_option("--features", cfg.features.features, "Feature transform")->check(CLI::IsMember({"sift", "pixel"}));
  dump->add_option("--cell", cfg.features.cell, "SIFT cell size, px")->check(CLI::Range(1, 64));
  dump->add_option("--blur", cfg.features.blur, "Gaussian blur sigma, px")->check(CLI::NonNegativeNumber);
  return app;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  auto app = make_app(cfg);
  try {
    app->parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version arrive here as "successful" parse errors.
    const int code = app->exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  const Logger log(err, cfg.verbose);
  try {
    if (app->got_subcommand("align")) return run_align(cfg, out, log);
    if (app->got_subcommand("congeal")) return run_congeal(cfg, out, log);
    if (app->got_subcommand("bench")) return run_bench(cfg, out, log);
    return run_features_dump(cfg, out, log);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    const bool solver = e.code() == ErrorCode::singular || e.code() == ErrorCode::non_finite;
    return solver ? kExitFailed : kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> storage{"flk"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(int(argv.size()), argv.data(), out, err);
}

}  // namespace flk::cli
