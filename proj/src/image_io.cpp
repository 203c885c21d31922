#include "flk/image_io.hpp"

#include <png.h>

#include <array>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace flk {
namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::unreadable, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Netpbm header tokenizer: whitespace separated, '#' starts a comment to end of line.
class PnmReader {
 public:
  explicit PnmReader(const std::vector<unsigned char>& bytes) : b_(bytes) {}

  std::string token() {
    skip_space();
    std::string t;
    while (pos_ < b_.size() && !std::isspace(b_[pos_]) && b_[pos_] != '#') t.push_back(char(b_[pos_++]));
    if (t.empty()) throw Error(ErrorCode::unreadable, "truncated PGM header");
    return t;
  }

  long number() {
    const std::string t = token();
    long v = 0;
    for (char c : t) {
      if (!std::isdigit(static_cast<unsigned char>(c))) {
        throw Error(ErrorCode::unreadable, "malformed PGM header field '" + t + "'");
      }
      v = v * 10 + (c - '0');
      if (v > (1L << 30)) throw Error(ErrorCode::unreadable, "PGM header value too large");
    }
    return v;
  }

  // After maxval exactly one whitespace byte precedes binary data.
  void skip_single_space() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) {
      throw Error(ErrorCode::unreadable, "truncated PGM header");
    }
    ++pos_;
  }

  size_t pos() const { return pos_; }

 private:
  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& b_;
  size_t pos_ = 0;
};

GrayImage load_pgm(const std::vector<unsigned char>& bytes) {
  PnmReader r(bytes);
  const std::string magic = r.token();
  if (magic != "P2" && magic != "P5") {
    throw Error(ErrorCode::unsupported_format, "unsupported netpbm variant " + magic);
  }
  const long width = r.number();
  const long height = r.number();
  const long maxval = r.number();
  if (width == 0 || height == 0) throw Error(ErrorCode::zero_size, "PGM has zero size");
  if (maxval == 0) throw Error(ErrorCode::unreadable, "PGM maxval is zero");
  if (maxval > 65535) throw Error(ErrorCode::unsupported_format, "PGM maxval above 16 bits");

  GrayImage img(height, width);
  const double scale = 1.0 / double(maxval);
  if (magic == "P2") {
    for (long i = 0; i < width * height; ++i) {
      long v;
      try {
        v = r.number();
      } catch (const Error&) {
        throw Error(ErrorCode::unreadable, "truncated PGM pixel data");
      }
      if (v > maxval) throw Error(ErrorCode::unreadable, "PGM sample exceeds maxval");
      img.data()[i] = double(v) * scale;
    }
    return img;
  }

  r.skip_single_space();
  const size_t bpp = maxval < 256 ? 1 : 2;
  const size_t need = size_t(width) * size_t(height) * bpp;
  if (bytes.size() - r.pos() < need) throw Error(ErrorCode::unreadable, "truncated PGM pixel data");
  const unsigned char* p = bytes.data() + r.pos();
  for (long i = 0; i < width * height; ++i) {
    const unsigned v = bpp == 1 ? p[i] : (unsigned(p[2 * i]) << 8) | p[2 * i + 1];
    if (long(v) > maxval) throw Error(ErrorCode::unreadable, "PGM sample exceeds maxval");
    img.data()[i] = double(v) * scale;
  }
  return img;
}

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
}

GrayImage load_png(const std::vector<unsigned char>& bytes) {
  // Signature (8) + IHDR length/type (8) + width, height, depth, colour type.
  if (bytes.size() < 26 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
    throw Error(ErrorCode::unreadable, "truncated PNG header");
  }
  const std::uint32_t width = be32(bytes.data() + 16);
  const std::uint32_t height = be32(bytes.data() + 20);
  const int depth = bytes[24];
  const int color_type = bytes[25];
  if (width == 0 || height == 0) throw Error(ErrorCode::zero_size, "PNG has zero size");
  if (depth != 8) {
    throw Error(ErrorCode::unsupported_format, "PNG bit depth " + std::to_string(depth) + " not supported");
  }
  if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB) {
    throw Error(ErrorCode::unsupported_format, "PNG colour type must be gray or RGB");
  }

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::unreadable, std::string("PNG: ") + image.message);
  }
  const bool rgb = color_type == PNG_COLOR_TYPE_RGB;
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::unreadable, "PNG: " + msg);
  }

  GrayImage img(height, width);
  const size_t n = size_t(width) * height;
  for (size_t i = 0; i < n; ++i) {
    if (rgb) {
      const png_byte* px = buf.data() + 3 * i;
      img.data()[i] = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
    } else {
      img.data()[i] = buf[i] / 255.0;
    }
  }
  return img;
}

std::vector<unsigned char> to_bytes(const GrayImage& img) {
  std::vector<unsigned char> out(img.size());
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.data()[i], 0.0, 1.0) * 255.0;
    out[i] = static_cast<unsigned char>(std::floor(v + 0.5));
  }
  return out;
}

bool has_extension(const std::filesystem::path& path, const char* ext) {
  std::string e = path.extension().string();
  for (auto& c : e) c = char(std::tolower(static_cast<unsigned char>(c)));
  return e == ext;
}

template <typename T>
void put_le(std::ofstream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "feature dumps assume a little-endian host");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

GrayImage load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 2) throw Error(ErrorCode::unreadable, "file too short: " + path.string());
  static constexpr std::array<unsigned char, 8> kPngSig = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  GrayImage img;
  if (bytes.size() >= 8 && std::equal(kPngSig.begin(), kPngSig.end(), bytes.begin())) {
    img = load_png(bytes);
  } else if (bytes[0] == 'P') {
    img = load_pgm(bytes);
  } else {
    throw Error(ErrorCode::unsupported_format, "not a PGM or PNG file: " + path.string());
  }
  if (!img.allFinite() || img.minCoeff() < 0 || img.maxCoeff() > 1) {
    throw Error(ErrorCode::unreadable, "intensities outside [0,1]");
  }
  return img;
}

void save_image(const GrayImage& img, const std::filesystem::path& path) {
  if (img.size() == 0) throw Error(ErrorCode::zero_size, "cannot write an empty image");
  const auto bytes = to_bytes(img);
  if (has_extension(path, ".png")) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = png_uint_32(img.cols());
    image.height = png_uint_32(img.rows());
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
      throw Error(ErrorCode::unwritable, std::string("PNG write failed: ") + image.message);
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::unwritable, "cannot open " + path.string() + " for writing");
  out << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error(ErrorCode::unwritable, "write failed: " + path.string());
}

void save_feature_dump(const FeatureImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::unwritable, "cannot open " + path.string() + " for writing");
  out.write("FLKF", 4);
  put_le(out, std::uint32_t(img.width()));
  put_le(out, std::uint32_t(img.height()));
  put_le(out, std::uint32_t(img.channels()));
  for (const auto& p : img.planes()) {
    for (Eigen::Index i = 0; i < p.size(); ++i) put_le(out, static_cast<float>(p.data()[i]));
  }
  if (!out) throw Error(ErrorCode::unwritable, "write failed: " + path.string());
}

FeatureImage load_feature_dump(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "FLKF", 4) != 0) {
    throw Error(ErrorCode::unreadable, "not a feature dump: " + path.string());
  }
  std::uint32_t dims[3];
  std::memcpy(dims, bytes.data() + 4, sizeof(dims));
  const size_t n = size_t(dims[0]) * dims[1];
  if (bytes.size() != 16 + n * dims[2] * sizeof(float)) {
    throw Error(ErrorCode::unreadable, "feature dump size mismatch");
  }
  FeatureImage img{static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])};
  const unsigned char* p = bytes.data() + 16;
  for (std::uint32_t k = 0; k < dims[2]; ++k) {
    for (size_t i = 0; i < n; ++i, p += sizeof(float)) {
      float v;
      std::memcpy(&v, p, sizeof(float));
      img.plane(int(k)).data()[i] = v;
    }
  }
  return img;
}

}  // namespace flk
