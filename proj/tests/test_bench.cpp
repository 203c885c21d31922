#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "flk/bench.hpp"
#include "flk/parallel.hpp"

using namespace flk;

namespace {

GroundTruthPair small_pair() {
  SyntheticPairSpec s;
  s.size = 64;
  s.truth = similarity_warp(1.02, 2, 0.5, -0.5);
  return make_synthetic_pair(s);
}

BasinConfig small_config() {
  BasinConfig c;
  c.error_levels = {0, 1, 3};
  c.trials = 6;
  c.methods = {MethodSpec::parse("pixel-cd:1"), MethodSpec::parse("pixel-ls:2")};
  c.threads = 1;
  return c;
}

}  // namespace

TEST_CASE("MethodSpec") {
  const MethodSpec a = MethodSpec::parse("sift-ls:4");
  CHECK(a.features == "sift");
  CHECK(a.method == RegressorMethod::least_squares);
  CHECK(a.param == 4);
  CHECK(a.id() == "sift-ls:4");
  CHECK(a.sift_params().cell_size == 4);
  CHECK(a.regressor(0, {}).domain.radius() == 4);
  CHECK(a.blur_sigma() == 0);

  const MethodSpec b = MethodSpec::parse("pixel-cd:1.5");
  CHECK(b.blur_sigma() == 1.5);
  CHECK(b.id() == "pixel-cd:1.5");

  const MethodSpec c = MethodSpec::parse("sift-svr:2");
  CHECK(c.sift_params().cell_size == 8);
  CHECK(MethodSpec::parse("sift-svr:2:4").sift_params().cell_size == 4);
  CHECK(MethodSpec::parse("sift-svr:2:4").id() == "sift-svr:2:4");

  for (const char* bad : {"sift", "hog-ls:2", "sift-xx:2", "sift-ls:", "sift-ls:a", "sift-ls:2:0"}) {
    CHECK_THROWS_AS(MethodSpec::parse(bad), Error);
  }
}

TEST_CASE("perturb_warp") {
  const Box box = Box::centered(90, 90);
  SUBCASE("zero magnitude returns the truth") {
    std::mt19937_64 rng(1);
    const AffineWarp truth = similarity_warp(1.1, 4, 2, 3);
    CHECK(perturb_warp(truth, box, 0, rng) == truth);
  }
  SUBCASE("corner RMSE equals the magnitude") {
    std::mt19937_64 rng(2);
    const AffineWarp truth = similarity_warp(0.95, -3, 1, 0);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
      for (double m : {0.5, 4.0, 16.0}) {
        worst = std::max(worst, std::abs(corner_rmse(perturb_warp(truth, box, m, rng), truth, box) - m));
      }
    }
    CHECK(worst < 1e-9);
    const AffineWarp t = AffineWarp::translation(1, 2);
    CHECK(corner_rmse(perturb_warp(t, box, 3, rng), t, box) == doctest::Approx(3).epsilon(1e-12));
  }
  SUBCASE("offsets have no preferred direction") {
    std::mt19937_64 rng(3);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    const int n = 2000;
    for (int i = 0; i < n; ++i) mean += perturb_warp(AffineWarp(), box, 2, rng).offset();
    CHECK((mean / n).norm() < 0.1);
  }
  SUBCASE("same seed, same sequence") {
    std::mt19937_64 a(9), b(9);
    for (int i = 0; i < 20; ++i) CHECK(perturb_warp(AffineWarp(), box, 2, a) == perturb_warp(AffineWarp(), box, 2, b));
  }
  SUBCASE("negative magnitude") {
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(perturb_warp(AffineWarp(), box, -1, rng), Error);
  }
}

TEST_CASE("trial_seed separates its inputs") {
  const auto s = trial_seed(7, "sift-ls:2", 2, 0);
  CHECK(s == trial_seed(7, "sift-ls:2", 2, 0));
  CHECK(s != trial_seed(8, "sift-ls:2", 2, 0));
  CHECK(s != trial_seed(7, "sift-ls:3", 2, 0));
  CHECK(s != trial_seed(7, "sift-ls:2", 4, 0));
  CHECK(s != trial_seed(7, "sift-ls:2", 2, 1));
}

TEST_CASE("CSV") {
  SUBCASE("empty rows give the header only") {
    CHECK(format_csv({}) == "method,error_px,trials,converged,fraction,mean_iters,mean_final_rmse\n");
  }
  SUBCASE("fraction with six significant digits") {
    BasinRow r{"sift-ls:2", 2, 1000, 700, 12.5, 0.25};
    CHECK(format_csv({r}).find("sift-ls:2,2,1000,700,0.7,12.5,0.25\n") != std::string::npos);
    BasinRow third{"pixel-cd:3", 4, 3, 1, 1.0 / 3, 0.1};
    CHECK(format_csv({third}).find(",0.333333,") != std::string::npos);
  }
  SUBCASE("round trip") {
    std::vector<BasinRow> rows{{"sift-ls:2", 2, 200, 187, 14.235, 0.123456789012345},
                               {"pixel-cd:3", 16, 200, 0, 100, 31.5}};
    CHECK(parse_csv(format_csv(rows)) == rows);
    const auto path = std::filesystem::temp_directory_path() / "flk_test_basin.csv";
    emit_csv(rows, path);
    std::ifstream in(path, std::ios::binary);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find('\r') == std::string::npos);
    CHECK(parse_csv(text) == rows);
  }
  SUBCASE("malformed") {
    CHECK_THROWS_AS(parse_csv("nope\n"), Error);
    CHECK_THROWS_AS(parse_csv("method,error_px,trials,converged,fraction,mean_iters,mean_final_rmse\na,b\n"), Error);
  }
  SUBCASE("unwritable path") {
    CHECK_THROWS_AS(emit_csv({}, "/nonexistent_dir/x.csv"), Error);
  }
}

TEST_CASE("BasinConfig validation") {
  BasinConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.trials = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config();
  c.error_levels = {2, 1};
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config();
  c.epsilon = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("run_basin") {
  const GroundTruthPair pair = small_pair();
  const BasinConfig cfg = small_config();
  const auto rows = run_basin(pair, cfg);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].method == "pixel-cd:1");
  CHECK(rows[0].error_px == 0);

  SUBCASE("level zero always converges") {
    CHECK(rows[0].fraction() == 1.0);
    CHECK(rows[3].fraction() == 1.0);
  }
  SUBCASE("identical across thread counts") {
    BasinConfig threaded = cfg;
    threaded.threads = 4;
    CHECK(format_csv(run_basin(pair, threaded)) == format_csv(rows));
  }
  SUBCASE("trials are independent of the rest of the run") {
    const BasinMethod m(pair, cfg.methods[1], cfg);
    BasinConfig more = cfg;
    more.trials = 2;
    const auto few = run_basin(pair, [&] {
      BasinConfig c = more;
      c.methods = {cfg.methods[1]};
      c.error_levels = {3};
      return c;
    }());
    int converged = 0;
    for (int t = 0; t < 2; ++t) converged += m.run_trial(3, t, cfg).converged;
    CHECK(few[0].converged == converged);
    const TrialOutcome once = m.run_trial(3, 4, cfg);
    const TrialOutcome again = m.run_trial(3, 4, more);
    CHECK(once.final_rmse == again.final_rmse);
    CHECK(once.iterations == again.iterations);
  }
}

TEST_CASE("fractions fall with the error level within binomial noise") {
  BasinConfig cfg = small_config();
  cfg.error_levels = {1, 4, 12};
  cfg.trials = 40;
  cfg.methods = {MethodSpec::parse("pixel-cd:1")};
  const auto rows = run_basin(small_pair(), cfg);
  for (size_t i = 1; i < rows.size(); ++i) {
    const double p = 0.5 * (rows[i].fraction() + rows[i - 1].fraction());
    const double band = 1.96 * std::sqrt(2 * p * (1 - p) / cfg.trials);
    CHECK(rows[i].fraction() <= rows[i - 1].fraction() + band);
  }
}

TEST_CASE("perturbed stack") {
  PerturbedStackSpec s;
  s.size = 48;
  s.count = 3;
  const PerturbedStack p = make_perturbed_stack(s);
  CHECK(p.images.size() == 3);
  CHECK(p.frame_width == 34);
  const Box box = Rect{0, 0, p.frame_width, p.frame_height}.corner_box();
  for (const auto& w : p.truth) CHECK(corner_rmse(w, AffineWarp(), box) == doctest::Approx(3).epsilon(1e-9));
  const PerturbedStack q = make_perturbed_stack(s);
  CHECK((q.images[2] == p.images[2]).all());
}

TEST_CASE("resolve_threads and parallel_for") {
  CHECK(resolve_threads(3) == 3);
  CHECK(resolve_threads(0) >= 1);
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, 3, [](size_t i) {
                    if (i == 5) throw Error(ErrorCode::invalid_argument, "boom");
                  }),
                  Error);
}
