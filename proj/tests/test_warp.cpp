#include "doctest.h"

#include <cmath>
#include <random>

#include "flk/warp.hpp"
#include "flk/warp_json.hpp"

using namespace flk;

namespace {

AffineWarp random_warp(std::mt19937_64& rng, double spread = 0.3) {
  std::uniform_real_distribution<double> u(-spread, spread);
  AffineWarp::Params p;
  for (int i = 0; i < 4; ++i) p(i) = u(rng);
  p(4) = 10 * u(rng);
  p(5) = 10 * u(rng);
  return AffineWarp(WarpKind::affine, p);
}

double param_diff(const AffineWarp& a, const AffineWarp& b) {
  return (a.params() - b.params()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("apply") {
  CHECK(apply(AffineWarp(), Eigen::Vector2d(3, 4)) == Eigen::Vector2d(3, 4));
  CHECK(apply(AffineWarp::translation(2, -1), Eigen::Vector2d(0, 0)) == Eigen::Vector2d(2, -1));
  const AffineWarp sx(WarpKind::affine, (AffineWarp::Params() << 1, 0, 0, 0, 0, 0).finished());
  CHECK(apply(sx, Eigen::Vector2d(1, 1)) == Eigen::Vector2d(2, 1));
}

TEST_CASE("jacobian") {
  SUBCASE("affine at (2,3)") {
    Eigen::Matrix<double, 2, 6> expected;
    expected << 2, 0, 3, 0, 1, 0,
                0, 2, 0, 3, 0, 1;
    CHECK(jacobian(WarpKind::affine, Eigen::Vector2d(2, 3)) == expected);
  }
  SUBCASE("translation is the identity") {
    CHECK(jacobian(WarpKind::translation, Eigen::Vector2d(5, 7)) == Eigen::Matrix2d::Identity());
  }
  SUBCASE("matches central finite differences") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-20, 20);
    const double h = 1e-4;
    for (int trial = 0; trial < 50; ++trial) {
      const AffineWarp w = random_warp(rng);
      const Eigen::Vector2d x(u(rng), u(rng));
      const auto j = jacobian(WarpKind::affine, x);
      for (int k = 0; k < 6; ++k) {
        AffineWarp::Params plus = w.params(), minus = w.params();
        plus(k) += h;
        minus(k) -= h;
        const Eigen::Vector2d fd = (apply(AffineWarp(WarpKind::affine, plus), x) -
                                    apply(AffineWarp(WarpKind::affine, minus), x)) / (2 * h);
        CHECK((fd - j.col(k)).cwiseAbs().maxCoeff() < 1e-6);
      }
    }
  }
}

TEST_CASE("compose") {
  std::mt19937_64 rng(4);
  const AffineWarp q = random_warp(rng);
  CHECK(compose(AffineWarp(), q) == q);
  CHECK(compose(AffineWarp::translation(1, 2), AffineWarp::translation(3, 4)) == AffineWarp::translation(4, 6));
  CHECK(param_diff(compose(q, invert(q)), AffineWarp()) < 1e-12);
  CHECK_THROWS_AS(compose(AffineWarp(), AffineWarp::translation(0, 0)), Error);
  SUBCASE("composition applies the right operand first") {
    const AffineWarp p = random_warp(rng);
    const Eigen::Vector2d x(3, -7);
    CHECK((apply(compose(p, q), x) - apply(p, apply(q, x))).norm() < 1e-12);
  }
}

TEST_CASE("invert") {
  CHECK(invert(AffineWarp()) == AffineWarp());
  CHECK(invert(AffineWarp::translation(3, 4)) == AffineWarp::translation(-3, -4));
  const AffineWarp sx(WarpKind::affine, (AffineWarp::Params() << 1, 0, 0, 0, 0, 0).finished());
  CHECK(invert(sx).params()(0) == doctest::Approx(-0.5));
  const AffineWarp singular(WarpKind::affine, (AffineWarp::Params() << -1, 0, 0, 0, 0, 0).finished());
  try {
    invert(singular);
    FAIL("expected singular");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::singular);
  }
}

TEST_CASE("group axioms on 1000 random triples") {
  std::mt19937_64 rng(11);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const AffineWarp a = random_warp(rng), b = random_warp(rng), c = random_warp(rng);
    worst = std::max(worst, param_diff(compose(compose(a, b), c), compose(a, compose(b, c))));
    worst = std::max(worst, param_diff(compose(a, AffineWarp()), a));
    worst = std::max(worst, param_diff(compose(AffineWarp(), a), a));
    worst = std::max(worst, param_diff(compose(a, invert(a)), AffineWarp()));
    worst = std::max(worst, param_diff(compose(invert(a), a), AffineWarp()));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("translation kind") {
  CHECK(AffineWarp::translation(1, 2).parameter_count() == 2);
  CHECK_THROWS_AS(AffineWarp(WarpKind::translation, (AffineWarp::Params() << 0.1, 0, 0, 0, 0, 0).finished()),
                  Error);
  const AffineWarp t = AffineWarp::from_parameters(WarpKind::translation, Eigen::Vector2d(5, 6));
  CHECK(t.parameters() == Eigen::Vector2d(5, 6));
  CHECK_THROWS_AS(AffineWarp::from_parameters(WarpKind::affine, Eigen::Vector2d(5, 6)), Error);
}

TEST_CASE("corner_rmse") {
  const Box unit{0, 0, 1, 1};
  const AffineWarp sx(WarpKind::affine, (AffineWarp::Params() << 1, 0, 0, 0, 0, 0).finished());
  CHECK(corner_rmse(AffineWarp(), sx, unit) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(corner_rmse(AffineWarp::translation(3, 4), AffineWarp::translation(0, 0), unit) == doctest::Approx(5));
  std::mt19937_64 rng(6);
  const AffineWarp w = random_warp(rng);
  CHECK(corner_rmse(w, w, Box::centered(10, 10)) == 0);
}

TEST_CASE("warp convention") {
  WarpConvention c;
  c.frame_center = {10, 10};
  c.image_center = {30, 20};
  CHECK(c.to_image(AffineWarp(), Eigen::Vector2d(10, 10)) == Eigen::Vector2d(30, 20));
  const AffineWarp rot(WarpKind::affine, (AffineWarp::Params() << 0, 0.1, -0.1, 0, 0, 0).finished());
  // The centre is a fixed point of every purely linear warp.
  CHECK(c.to_image(rot, Eigen::Vector2d(10, 10)) == Eigen::Vector2d(30, 20));
  const Eigen::Matrix<double, 2, 3> m = c.frame_to_image(rot);
  const Eigen::Vector2d u(3, 14);
  CHECK((m.leftCols<2>() * u + m.col(2) - c.to_image(rot, u)).norm() < 1e-12);
}

TEST_CASE("warp json round trip") {
  std::mt19937_64 rng(8);
  const AffineWarp w = random_warp(rng);
  const auto j = warp_to_json(w);
  CHECK(j["kind"] == "affine");
  CHECK(j["p"].size() == 6);
  CHECK(warp_from_json(j) == w);
  CHECK(warp_from_json(warp_to_json(AffineWarp::translation(1.5, -2))) == AffineWarp::translation(1.5, -2));
  CHECK_THROWS_AS(warp_from_json(nlohmann::json{{"kind", "projective"}, {"p", {0, 0, 0, 0, 0, 0}}}), Error);
}
