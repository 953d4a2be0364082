#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "mlmosaic/raster.hpp"

namespace mlmosaic {

enum class ImageIoErrc {
  FileNotFound,
  MalformedHeader,
  TruncatedPayload,
  UnsupportedFormat,
  UnsupportedBitDepth,
  Unwritable,
};

const char* to_string(ImageIoErrc code);

class ImageIoError : public std::runtime_error {
 public:
  ImageIoError(ImageIoErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ImageIoErrc code() const { return code_; }

 private:
  ImageIoErrc code_;
};

// Binary PGM (P5, maxval 255) or 8-bit PNG. Colour PNGs are converted to
// luminance 0.299R + 0.587G + 0.114B; values are mapped to [0,1] by v/255.
Raster load_image(const std::filesystem::path& path);

// Writes P5 PGM storing floor(clamp(v, 0, 1) * 255 + 0.5).
void save_image(const Raster& r, const std::filesystem::path& path);

std::uint8_t quantize_intensity(double v);

}  // namespace mlmosaic
