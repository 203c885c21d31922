#pragma once

#include <filesystem>

#include "flk/image.hpp"

namespace flk {

/// Loads a PGM (P2/P5) or PNG (8-bit gray or RGB) file as intensities in [0,1].
///
/// RGB is reduced to luma 0.299 R + 0.587 G + 0.114 B. Throws Error with
/// ErrorCode::unreadable, unsupported_format or zero_size.
GrayImage load_image(const std::filesystem::path& path);

/// Writes an 8-bit PGM (P5) or PNG depending on the extension. Values are
/// clamped to [0,1], scaled by 255 and rounded half up.
void save_image(const GrayImage& img, const std::filesystem::path& path);

/// Binary feature dump: "FLKF", u32 width, height, channels (little endian),
/// then channel-major float32 values.
void save_feature_dump(const FeatureImage& img, const std::filesystem::path& path);
FeatureImage load_feature_dump(const std::filesystem::path& path);

}  // namespace flk
