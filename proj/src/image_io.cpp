#include "mlmosaic/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <vector>

namespace mlmosaic {

const char* to_string(ImageIoErrc code) {
  switch (code) {
    case ImageIoErrc::FileNotFound: return "file not found";
    case ImageIoErrc::MalformedHeader: return "malformed header";
    case ImageIoErrc::TruncatedPayload: return "truncated payload";
    case ImageIoErrc::UnsupportedFormat: return "unsupported format";
    case ImageIoErrc::UnsupportedBitDepth: return "unsupported bit depth";
    case ImageIoErrc::Unwritable: return "unwritable path";
  }
  return "unknown image error";
}

namespace {

[[noreturn]] void fail(ImageIoErrc code, const std::filesystem::path& path,
                       const std::string& detail = {}) {
  std::string msg = path.string() + ": " + to_string(code);
  if (!detail.empty()) msg += " (" + detail + ")";
  throw ImageIoError(code, msg);
}

// Netpbm header tokenizer: whitespace separated, '#' starts a comment that
// runs to end of line.
class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  bool next_token(std::string& out) {
    out.clear();
    while (pos_ < bytes_.size()) {
      const unsigned char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) &&
           bytes_[pos_] != '#') {
      out.push_back(static_cast<char>(bytes_[pos_++]));
    }
    return !out.empty();
  }

  bool next_int(long& out) {
    std::string tok;
    if (!next_token(tok)) return false;
    if (!std::all_of(tok.begin(), tok.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      return false;
    }
    if (tok.size() > 9) return false;
    out = std::stol(tok);
    return true;
  }

  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

Raster parse_pgm(const std::vector<unsigned char>& bytes,
                 const std::filesystem::path& path) {
  HeaderReader reader(bytes);
  std::string magic;
  if (!reader.next_token(magic) || magic != "P5") {
    fail(ImageIoErrc::MalformedHeader, path, "expected P5 magic");
  }
  long width = 0;
  long height = 0;
  long maxval = 0;
  if (!reader.next_int(width) || !reader.next_int(height) ||
      !reader.next_int(maxval)) {
    fail(ImageIoErrc::MalformedHeader, path, "bad width/height/maxval");
  }
  if (width < 1 || height < 1 || maxval < 1) {
    fail(ImageIoErrc::MalformedHeader, path, "nonpositive header field");
  }
  if (maxval != 255) {
    fail(ImageIoErrc::UnsupportedBitDepth, path,
         "maxval " + std::to_string(maxval));
  }
  // Exactly one whitespace byte separates the header from the payload.
  if (reader.pos() >= bytes.size() ||
      !std::isspace(bytes[reader.pos()])) {
    fail(ImageIoErrc::TruncatedPayload, path, "missing payload");
  }
  reader.skip(1);

  const std::size_t count = static_cast<std::size_t>(width) * height;
  if (bytes.size() - reader.pos() < count) {
    fail(ImageIoErrc::TruncatedPayload, path,
         std::to_string(bytes.size() - reader.pos()) + " of " +
             std::to_string(count) + " bytes");
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = bytes[reader.pos() + i] / 255.0;
  }
  return Raster(static_cast<int>(width), static_cast<int>(height),
                std::move(data));
}

Raster parse_png(const std::vector<unsigned char>& bytes,
                 const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    fail(ImageIoErrc::MalformedHeader, path, image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    fail(ImageIoErrc::UnsupportedBitDepth, path, "16-bit PNG");
  }
  const bool colour = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ImageIoErrc::TruncatedPayload, path, msg);
  }

  std::vector<double> data(static_cast<std::size_t>(width) * height);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (colour) {
      const png_byte* px = &buffer[3 * i];
      data[i] = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
    } else {
      data[i] = buffer[i] / 255.0;
    }
  }
  return Raster(width, height, std::move(data));
}

}  // namespace

std::uint8_t quantize_intensity(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

Raster load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ImageIoErrc::FileNotFound, path);
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) {
    return parse_png(bytes, path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] != '5') {
    fail(ImageIoErrc::UnsupportedFormat, path, "only binary P5 is supported");
  }
  return parse_pgm(bytes, path);
}

void save_image(const Raster& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ImageIoErrc::Unwritable, path);
  out << "P5\n" << r.width() << ' ' << r.height() << "\n255\n";
  std::vector<char> payload(r.size());
  std::transform(r.data().begin(), r.data().end(), payload.begin(),
                 [](double v) { return static_cast<char>(quantize_intensity(v)); });
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) fail(ImageIoErrc::Unwritable, path, "write failed");
}

}  // namespace mlmosaic
