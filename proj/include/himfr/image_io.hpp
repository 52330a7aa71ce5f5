#pragma once

#include <string>

#include "himfr/image.hpp"

namespace himfr::imaging {

/// Loads a PNG/JPG as a 3-channel RGB float image in [0,1] (8-bit values
/// divided by 255). Throws IoError when the file is missing or undecodable.
ImageBuffer load_image(const std::string& path);

/// Saves as 8-bit PNG/JPG (per extension) with round-to-nearest conversion.
void save_image(const std::string& path, const ImageBuffer& img);

/// Loads an 8-bit single-channel mask PNG; pixels >= 128 count as occluded.
BinaryMask load_mask(const std::string& path);

/// Saves a mask as 8-bit single-channel PNG, 255 = occluded.
void save_mask(const std::string& path, const BinaryMask& mask);

}  // namespace himfr::imaging
