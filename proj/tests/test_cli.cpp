#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "cli.hpp"
#include "flk/image_io.hpp"
#include "flk/synthetic.hpp"
#include "flk/warp_json.hpp"

using namespace flk;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "flk_cli_test" / name;
  fs::create_directories(p.parent_path());
  return p;
}

// Default shown for `flag` in a CLI11 help listing, e.g. "--max-iters INT:POSITIVE [100]".
std::string help_default(const std::string& help, const std::string& flag) {
  // The default is the last bracketed group before the description column.
  const std::regex re(flag + R"( [^\n]*?\[([^\[\]]*)\](?:  | *\n))");
  std::smatch m;
  REQUIRE_MESSAGE(std::regex_search(help, m, re), "no default listed for " << flag);
  return m[1];
}

double as_double(const std::string& s) { return std::stod(s); }

}  // namespace

TEST_CASE("help lists the actual defaults") {
  cli::RunConfig cfg;
  auto app = cli::make_app(cfg);
  const std::string align = app->get_subcommand("align")->help();
  const std::string bench = app->get_subcommand("bench")->help();
  const std::string congeal = app->get_subcommand("congeal")->help();
  const AlignConfig a;
  const BasinConfig b;
  const CongealConfig c;

  CHECK(help_default(align, "--features") == "sift");
  CHECK(help_default(align, "--method") == "ls");
  CHECK(help_default(align, "--warp") == "affine");
  CHECK(std::stoi(help_default(align, "--radius")) == RegressorSpec{}.domain.radius());
  CHECK(std::stoi(help_default(align, "--max-iters")) == a.max_iters);
  CHECK(as_double(help_default(align, "--stop-tol")) == a.stop_tol);
  CHECK(as_double(help_default(align, "--min-valid")) == a.min_valid_fraction);
  CHECK(as_double(help_default(align, "--damping")) == a.hessian_damping);

  CHECK(std::stoi(help_default(bench, "--trials")) == b.trials);
  CHECK(as_double(help_default(bench, "--eps")) == b.epsilon);
  CHECK(std::stoi(help_default(bench, "--max-iters")) == b.align.max_iters);
  CHECK(help_default(bench, "--levels") == "1,2,4,8,16");
  CHECK(std::stoi(help_default(bench, "--size")) == SyntheticPairSpec{}.size);

  CHECK(std::stoi(help_default(congeal, "--outer")) == c.outer_iters);
  CHECK(std::stoi(help_default(congeal, "--inner")) == c.inner.max_iters);
  CHECK(as_double(help_default(congeal, "--mean-tol")) == c.mean_change_tol);

  const std::string top = app->help();
  CHECK(std::stoull(help_default(top, "--seed")) == b.seed);
  CHECK(std::stoi(help_default(top, "--threads")) == 0);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run_cli({}).code == cli::kExitUsage);
  CHECK(run_cli({"align", "--template", "/no/such.png", "--image", "/no/such.png"}).code == cli::kExitUsage);
  CHECK(run_cli({"bench", "--trials", "0"}).code == cli::kExitUsage);
  CHECK(run_cli({"bench", "--bogus"}).code == cli::kExitUsage);
  CHECK(run_cli({"bench", "--methods", "sift-zz:2"}).code == cli::kExitUsage);
  CHECK(run_cli({"--help"}).code == cli::kExitOk);
}

TEST_CASE("align end to end") {
  SyntheticPairSpec s;
  s.size = 64;
  s.truth = AffineWarp(WarpKind::affine, (AffineWarp::Params() << 0, 0, 0, 0, 1.0, -0.5).finished());
  const GroundTruthPair pair = make_synthetic_pair(s);
  const auto t = scratch("t.png"), i = scratch("i.png");
  save_image(pair.tmpl, t);
  save_image(pair.image, i);
  const std::string box = std::to_string(pair.box.x) + "," + std::to_string(pair.box.y) + "," +
                          std::to_string(pair.box.width) + "," + std::to_string(pair.box.height);

  SUBCASE("defaults recover the warp") {
    const Outcome o = run_cli({"align", "--template", t.string(), "--image", i.string(), "--json", "--box", box});
    REQUIRE(o.code == cli::kExitOk);
    const auto j = nlohmann::json::parse(o.out);
    CHECK(j["schema"] == 1);
    const AffineWarp w = warp_from_json(j["warp"]);
    CHECK(corner_rmse(w, pair.truth, pair.box.corner_box()) < 0.3);
  }
  SUBCASE("plain output starts with the warp JSON") {
    const auto crop = scratch("crop.png");
    const Outcome o = run_cli({"align", "--template", t.string(), "--image", i.string(), "--features", "pixel",
                               "--method", "cd", "--out-crop", crop.string()});
    CHECK(o.code == cli::kExitOk);
    const std::string first = o.out.substr(0, o.out.find('\n'));
    CHECK(nlohmann::json::parse(first)["kind"] == "affine");
    CHECK(o.out.find("iteration,msr,update_motion") != std::string::npos);
    CHECK(fs::exists(crop));
  }
  SUBCASE("divergence exits with 1") {
    const auto init = scratch("far.json");
    std::ofstream(init) << warp_to_json(AffineWarp(WarpKind::affine, (AffineWarp::Params() << 0, 0, 0, 0, 500, 0).finished()));
    const Outcome o = run_cli({"align", "--template", t.string(), "--image", i.string(), "--init", init.string()});
    CHECK(o.code == cli::kExitFailed);
    CHECK(o.err.find(kInsufficientValid) != std::string::npos);
  }
  SUBCASE("svr availability") {
    const Outcome o = run_cli({"align", "--template", t.string(), "--image", i.string(), "--method", "svr",
                               "--features", "pixel", "--radius", "1"});
    if (svr_available()) {
      CHECK(o.code != cli::kExitUsage);
    } else {
      CHECK(o.code == cli::kExitUsage);
      CHECK(o.err.find("svr is unsupported") != std::string::npos);
    }
  }
}

TEST_CASE("bench CSV does not depend on the thread count") {
  const auto a = scratch("a.csv"), b = scratch("b.csv");
  const std::vector<std::string> common{"bench", "--size", "64", "--methods", "pixel-cd:1,pixel-ls:2",
                                        "--levels", "1,3", "--trials", "5", "--seed", "11"};
  auto with = [&](const fs::path& out, const std::string& threads) {
    auto v = common;
    v.insert(v.end(), {"--out", out.string(), "--threads", threads});
    return v;
  };
  REQUIRE(run_cli(with(a, "1")).code == cli::kExitOk);
  REQUIRE(run_cli(with(b, "3")).code == cli::kExitOk);
  std::ifstream fa(a), fb(b);
  const std::string ta((std::istreambuf_iterator<char>(fa)), {}), tb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(ta == tb);
  CHECK(parse_csv(ta).size() == 4);
}

TEST_CASE("congeal writes warps, means and a convergence log") {
  const fs::path dir = scratch("stack");
  fs::remove_all(dir);
  fs::create_directories(dir);
  const SyntheticTexture tex = SyntheticTexture::band_limited(3);
  WarpConvention conv;
  conv.frame_center = conv.image_center = Eigen::Vector2d(23.5, 23.5);
  for (int k = 0; k < 3; ++k) {
    save_image(render(tex, 48, 48, AffineWarp::translation(0.5 * k, -0.3 * k).cast<double>(), conv),
               dir / ("img" + std::to_string(k) + ".png"));
  }
  const fs::path out = scratch("congeal_out");
  fs::remove_all(out);
  const Outcome o = run_cli({"congeal", "--dir", dir.string(), "--out", out.string(), "--outer", "3", "--json"});
  CHECK(o.code == cli::kExitOk);
  CHECK(fs::exists(out / "warps" / "img1.json"));
  CHECK(fs::exists(out / "mean_before.png"));
  CHECK(fs::exists(out / "mean_after.png"));
  std::ifstream csv(out / "convergence.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "outer_iter,total_msr,mean_change");
  CHECK(nlohmann::json::parse(o.out)["images"].size() == 3);
}

TEST_CASE("features dump") {
  const auto img = scratch("f.png"), dump = scratch("f.flkf");
  save_image(render(SyntheticTexture::band_limited(2), 20, 18), img);
  const Outcome o = run_cli({"features", "dump", "--image", img.string(), "--out", dump.string()});
  CHECK(o.code == cli::kExitOk);
  const FeatureImage f = load_feature_dump(dump);
  CHECK(f.channels() == 128);
  CHECK(f.width() == 20);
  CHECK(f.height() == 18);
}
