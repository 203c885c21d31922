#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <png.h>

#include "flk/image.hpp"
#include "flk/image_io.hpp"

using namespace flk;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("flk_test_" + name);
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

GrayImage ramp_x(int w, int h) {
  GrayImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(y, x) = x;
  return img;
}

Plane random_plane(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  Plane p(h, w);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

void write_png(const std::filesystem::path& path, int w, int h, int format, const std::vector<png_byte>& px) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = w;
  image.height = h;
  image.format = format;
  REQUIRE(png_image_write_to_file(&image, path.string().c_str(), 0, px.data(), 0, nullptr));
}

}  // namespace

TEST_CASE("load_image reads binary PGM scaled by maxval") {
  const auto path = temp_path("2x2.pgm");
  write_bytes(path, std::string("P5\n2 2\n255\n") + std::string("\x00\xff\xff\x00", 4));
  const GrayImage img = load_image(path);
  CHECK(img.rows() == 2);
  CHECK(img.cols() == 2);
  CHECK(img(0, 0) == 0.0);
  CHECK(img(0, 1) == 1.0);
  CHECK(img(1, 0) == 1.0);
  CHECK(img(1, 1) == 0.0);
}

TEST_CASE("load_image reads ASCII PGM with comments") {
  const auto path = temp_path("ascii.pgm");
  write_bytes(path, "P2\n# comment\n3 1\n4\n0 2 4\n");
  const GrayImage img = load_image(path);
  CHECK(img(0, 1) == doctest::Approx(0.5));
  CHECK(img(0, 2) == 1.0);
}

TEST_CASE("load_image converts RGB PNG to luma") {
  const auto path = temp_path("red.png");
  write_png(path, 1, 1, PNG_FORMAT_RGB, {255, 0, 0});
  const GrayImage img = load_image(path);
  CHECK(img(0, 0) == doctest::Approx(0.299).epsilon(1e-12));
}

TEST_CASE("load_image error kinds are distinct") {
  const auto truncated = temp_path("trunc.pgm");
  write_bytes(truncated, "P5\n2");
  const auto short_data = temp_path("short.pgm");
  write_bytes(short_data, "P5\n2 2\n255\n\x01");
  const auto zero = temp_path("zero.pgm");
  write_bytes(zero, "P5\n0 2\n255\n");
  const auto gray16 = temp_path("gray16.png");
  {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = 1;
    image.height = 1;
    image.format = PNG_FORMAT_LINEAR_Y;
    const std::uint16_t px = 1000;
    REQUIRE(png_image_write_to_file(&image, gray16.string().c_str(), 0, &px, 0, nullptr));
  }

  auto code_of = [](const std::filesystem::path& p) {
    try {
      load_image(p);
    } catch (const Error& e) {
      return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::invalid_argument;
  };
  CHECK(code_of(truncated) == ErrorCode::unreadable);
  CHECK(code_of(short_data) == ErrorCode::unreadable);
  CHECK(code_of(temp_path("does_not_exist.pgm")) == ErrorCode::unreadable);
  CHECK(code_of(zero) == ErrorCode::zero_size);
  CHECK(code_of(gray16) == ErrorCode::unsupported_format);
}

TEST_CASE("save_image clamps and rounds half up; PGM and PNG agree") {
  GrayImage img(1, 4);
  img << -0.5, 0.5 / 255.0, 0.5, 2.0;
  for (const char* name : {"out.pgm", "out.png"}) {
    const auto path = temp_path(name);
    save_image(img, path);
    const GrayImage back = load_image(path);
    CHECK(back(0, 0) == 0.0);
    CHECK(back(0, 1) == doctest::Approx(1 / 255.0));
    CHECK(back(0, 2) == doctest::Approx(128 / 255.0));
    CHECK(back(0, 3) == 1.0);
  }
}

TEST_CASE("feature dump header and layout") {
  FeatureImage f(3, 2, 2);
  f(1, 1, 2) = 0.25;
  const auto path = temp_path("dump.flkf");
  save_feature_dump(f, path);
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() == 16 + 3 * 2 * 2 * 4);
  CHECK(bytes.substr(0, 4) == "FLKF");
  std::uint32_t dims[3];
  std::memcpy(dims, bytes.data() + 4, 12);
  CHECK(dims[0] == 3);
  CHECK(dims[1] == 2);
  CHECK(dims[2] == 2);
  float v;
  std::memcpy(&v, bytes.data() + 16 + 4 * (6 + 1 * 3 + 2), 4);
  CHECK(v == 0.25f);
  const FeatureImage back = load_feature_dump(path);
  CHECK(back(1, 1, 2) == 0.25);
}

TEST_CASE("bilinear_sample") {
  Plane p(2, 3);
  p << 0, 1, 2,
       3, 4, 5;
  const FeatureImage img(p);
  SUBCASE("exact at grid points, including the last row and column") {
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) CHECK(*bilinear_sample(img, x, y, 0) == p(y, x));
  }
  SUBCASE("midpoint between 0 and 1") { CHECK(*bilinear_sample(img, 0.5, 0, 0) == 0.5); }
  SUBCASE("linear along each axis") {
    CHECK(*bilinear_sample(img, 1.25, 0.0, 0) == doctest::Approx(1.25));
    CHECK(*bilinear_sample(img, 2.0, 0.75, 0) == doctest::Approx(2 + 0.75 * 3));
  }
  SUBCASE("out of bounds") {
    CHECK_FALSE(bilinear_sample(img, -0.5, 0, 0).has_value());
    CHECK_FALSE(bilinear_sample(img, 2.01, 0, 0).has_value());
    CHECK_FALSE(bilinear_sample(img, 0, 1.5, 0).has_value());
  }
  SUBCASE("bad channel") { CHECK_THROWS_AS(bilinear_sample(img, 0, 0, 1), Error); }
}

TEST_CASE("convolve2d") {
  SUBCASE("identity kernel") {
    std::mt19937_64 rng(1);
    const FeatureImage img(random_plane(7, 5, rng));
    const FeatureImage out = convolve2d(img, Kernel::Ones(1, 1));
    CHECK((out.plane(0) == img.plane(0)).all());
  }
  SUBCASE("central difference of a ramp is 2 in the interior") {
    Kernel k(1, 3);
    k << -1, 0, 1;
    const FeatureImage out = convolve2d(FeatureImage(ramp_x(6, 4)), k);
    // True convolution flips the kernel: out = T(x-1) * 1 ... hence the sign.
    for (int y = 0; y < 4; ++y)
      for (int x = 1; x < 5; ++x) CHECK(std::abs(out(0, y, x)) == 2.0);
    Kernel flipped(1, 3);
    flipped << 1, 0, -1;
    const FeatureImage fwd = convolve2d(FeatureImage(ramp_x(6, 4)), flipped);
    for (int y = 0; y < 4; ++y)
      for (int x = 1; x < 5; ++x) CHECK(fwd(0, y, x) == 2.0);
  }
  SUBCASE("box filter preserves a constant") {
    const FeatureImage c(Plane::Constant(5, 5, 0.37));
    const FeatureImage out = convolve2d(c, Kernel::Constant(3, 3, 1.0 / 9));
    CHECK((out.plane(0) - 0.37).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("even kernel rejected") {
    CHECK_THROWS_AS(convolve2d(FeatureImage(Plane::Zero(3, 3)), Kernel::Ones(2, 3)), Error);
  }
  SUBCASE("linearity") {
    std::mt19937_64 rng(3);
    const Plane a = random_plane(9, 8, rng), b = random_plane(9, 8, rng);
    const Kernel k = Kernel::Random(3, 5);
    const Plane lhs = convolve2d(FeatureImage(Plane(2.5 * a - 1.5 * b)), k).plane(0);
    const Plane rhs = 2.5 * convolve2d(FeatureImage(a), k).plane(0) - 1.5 * convolve2d(FeatureImage(b), k).plane(0);
    CHECK((lhs - rhs).block(1, 2, 6, 5).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("replicate border") {
    Kernel k(1, 3);
    k << 1, 0, 0;  // after the flip this picks the right-hand neighbour
    const FeatureImage out = convolve2d(FeatureImage(ramp_x(4, 1)), k);
    CHECK(out(0, 0, 3) == 3.0);
    CHECK(out(0, 0, 0) == 1.0);
  }
}

TEST_CASE("warp_image") {
  std::mt19937_64 rng(5);
  const FeatureImage src(std::vector<Plane>{random_plane(8, 6, rng), random_plane(8, 6, rng)});
  SUBCASE("identity copies with a full mask") {
    const auto out = warp_image(src, AffineWarp(), 8, 6);
    CHECK(out.mask.all());
    CHECK((out.image.plane(1) == src.plane(1)).all());
  }
  SUBCASE("translation of a ramp shifts values by exactly one") {
    const FeatureImage ramp(ramp_x(8, 6));
    const auto out = warp_image(ramp, AffineWarp::translation(1, 0).cast<double>().cast<double>(), 8, 6);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 7; ++x) {
        CHECK(out.mask(y, x));
        CHECK(out.image(0, y, x) == x + 1.0);
      }
      CHECK_FALSE(out.mask(y, 7));
      CHECK(out.image(0, y, 7) == 0.0);
    }
  }
  SUBCASE("translation by the width leaves nothing valid") {
    const auto out = warp_image(src, AffineWarp(WarpKind::affine, (AffineWarp::Params() << 0, 0, 0, 0, 8, 0).finished()), 8, 6);
    CHECK_FALSE(out.mask.any());
  }
  SUBCASE("agrees with bilinear_sample") {
    const AffineWarp w(WarpKind::affine, (AffineWarp::Params() << 0.1, -0.05, 0.07, -0.1, 0.3, 0.4).finished());
    const auto out = warp_image(src, w, 8, 6);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 8; ++x) {
        const Eigen::Vector2d q = apply(w, Eigen::Vector2d(x, y));
        const auto s = bilinear_sample(src, q.x(), q.y(), 1);
        CHECK(out.mask(y, x) == s.has_value());
        if (s) CHECK(out.image(1, y, x) == doctest::Approx(*s).epsilon(1e-14));
      }
    }
  }
  SUBCASE("non-finite warp rejected") {
    AffineWarp::Params p = AffineWarp::Params::Zero();
    p(4) = std::nan("");
    CHECK_THROWS_AS(warp_image(src, AffineWarp(WarpKind::affine, p), 8, 6), Error);
  }
}

TEST_CASE("gaussian_blur") {
  std::mt19937_64 rng(9);
  SUBCASE("sigma 0 is the identity") {
    const Plane p = random_plane(6, 6, rng);
    CHECK((gaussian_blur(p, 0) == p).all());
  }
  SUBCASE("constant image unchanged") {
    const Plane c = Plane::Constant(12, 10, 0.6);
    CHECK((gaussian_blur(c, 1.7) - 0.6).abs().maxCoeff() < 1e-14);
  }
  SUBCASE("impulse centre equals the 2-D kernel centre weight") {
    Plane imp = Plane::Zero(15, 15);
    imp(7, 7) = 1;
    // Independent evaluation of the normalized sampled Gaussian, radius 3.
    double norm = 0;
    for (int i = -3; i <= 3; ++i) norm += std::exp(-0.5 * i * i);
    const double centre_1d = 1.0 / norm;
    CHECK(gaussian_blur(imp, 1.0)(7, 7) == doctest::Approx(centre_1d * centre_1d).epsilon(1e-12));
  }
  SUBCASE("interior mean preserved") {
    const Plane p = random_plane(40, 40, rng);
    const Plane b = gaussian_blur(p, 1.5);
    // Mass moves only across the 5 px border band.
    const double inner = p.block(5, 5, 30, 30).mean();
    CHECK(std::abs(b.block(5, 5, 30, 30).mean() - inner) < 5e-3);
    const Plane c = Plane::Constant(20, 20, 0.25);
    CHECK(std::abs(gaussian_blur(c, 2.0).mean() - 0.25) < 1e-6);
  }
  SUBCASE("negative sigma") { CHECK_THROWS_AS(gaussian_blur(random_plane(4, 4, rng), -1), Error); }
}
