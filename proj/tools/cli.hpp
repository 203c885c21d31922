#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flk/bench.hpp"
#include "flk/congeal.hpp"

namespace flk::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitUsage = 2;

/// Feature and regressor flags shared by align and congeal.
struct SolverOptions {
  std::string features = "sift";
  std::string method = "ls";
  std::string warp = "affine";
  int radius = 2;
  double rho = 0;
  double blur = 0;
  int cell = 0;  // 0: preset for the method
};

struct AlignOptions {
  std::string tmpl;
  std::string image;
  std::string box;  // "x,y,w,h"; empty: centred half-area box
  std::string init;
  std::string out_crop;
  SolverOptions solver;
  AlignConfig align;
};

struct CongealOptions {
  std::string dir;
  std::string frame;  // "WxH"; empty: centred half-area box of the first image
  std::string out = "congeal_out";
  std::string anchor = "normalize-mean";
  SolverOptions solver;
  CongealConfig congeal;
};

struct BenchOptions {
  std::string suite = "synthetic";
  std::string texture = "texture";
  bool invert = false;
  int size = 128;
  double noise = 0;
  std::string methods = "sift-ls:4,sift-cd:1,pixel-cd:3";
  std::string levels = "1,2,4,8,16";
  std::string pair;  // "template,image,truth.json"
  std::string box;
  std::string out = "basin.csv";
  std::string warp = "affine";
  BasinConfig basin;
};

struct FeaturesOptions {
  std::string image;
  std::string out;
  std::string features = "sift";
  int cell = 4;
  double blur = 0;
};

struct RunConfig {
  int threads = 0;
  bool json = false;
  int verbose = 0;
  std::uint64_t seed = BasinConfig{}.seed;
  AlignOptions align;
  CongealOptions congeal;
  BenchOptions bench;
  FeaturesOptions features;
};

/// Parser bound to `cfg`; defaults shown in --help are read from `cfg`.
std::unique_ptr<CLI::App> make_app(RunConfig& cfg);

/// Parses and dispatches. Exit codes: 0 success, 1 alignment or congealing
/// failure, 2 usage error, unreadable input or unsupported option.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flk::cli
