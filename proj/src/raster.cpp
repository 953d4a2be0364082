#include "mlmosaic/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mlmosaic {

namespace {

void check_dims(int width, int height) {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("raster dimensions must be positive, got " +
                                std::to_string(width) + "x" +
                                std::to_string(height));
  }
}

void require_at_least_2x2(const Raster& r, const char* op) {
  if (r.width() < 2 || r.height() < 2) {
    throw std::invalid_argument(std::string(op) +
                                ": raster must be at least 2x2");
  }
}

}  // namespace

Raster::Raster(int width, int height, double fill, Point origin)
    : width_(width), height_(height), origin_(origin) {
  check_dims(width, height);
  if (!std::isfinite(fill)) throw std::invalid_argument("non-finite fill");
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

Raster::Raster(int width, int height, std::vector<double> data, Point origin)
    : width_(width), height_(height), data_(std::move(data)), origin_(origin) {
  check_dims(width, height);
  if (data_.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("raster data length does not match dims");
  }
  if (!std::all_of(data_.begin(), data_.end(),
                   [](double v) { return std::isfinite(v); })) {
    throw std::invalid_argument("raster contains non-finite intensities");
  }
}

std::optional<double> sample_bilinear(const Raster& r, double x, double y) {
  const double max_x = r.width() - 1;
  const double max_y = r.height() - 1;
  if (!(x >= 0.0 && x <= max_x && y >= 0.0 && y <= max_y)) {
    return std::nullopt;
  }
  // Keep the cell inside the raster so that x == width-1 stays exact.
  const int x0 = std::min(static_cast<int>(x), std::max(r.width() - 2, 0));
  const int y0 = std::min(static_cast<int>(y), std::max(r.height() - 2, 0));
  const int x1 = std::min(x0 + 1, r.width() - 1);
  const int y1 = std::min(y0 + 1, r.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;

  const double top = (1.0 - fx) * r(x0, y0) + fx * r(x1, y0);
  const double bottom = (1.0 - fx) * r(x0, y1) + fx * r(x1, y1);
  return (1.0 - fy) * top + fy * bottom;
}

GradientField spatial_gradient(const Raster& r) {
  require_at_least_2x2(r, "spatial_gradient");
  const int w = r.width();
  const int h = r.height();
  GradientField g{Raster(w, h, 0.0, r.origin()), Raster(w, h, 0.0, r.origin())};

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x == 0) {
        g.gx(x, y) = r(1, y) - r(0, y);
      } else if (x == w - 1) {
        g.gx(x, y) = r(x, y) - r(x - 1, y);
      } else {
        g.gx(x, y) = 0.5 * (r(x + 1, y) - r(x - 1, y));
      }

      if (y == 0) {
        g.gy(x, y) = r(x, 1) - r(x, 0);
      } else if (y == h - 1) {
        g.gy(x, y) = r(x, y) - r(x, y - 1);
      } else {
        g.gy(x, y) = 0.5 * (r(x, y + 1) - r(x, y - 1));
      }
    }
  }
  return g;
}

Raster downsample(const Raster& r) {
  require_at_least_2x2(r, "downsample");
  static constexpr std::array<double, 5> kKernel{1.0 / 16, 4.0 / 16, 6.0 / 16,
                                                 4.0 / 16, 1.0 / 16};
  const int w = r.width();
  const int h = r.height();
  const int out_w = (w + 1) / 2;
  const int out_h = (h + 1) / 2;

  // Horizontal pass only at the kept columns.
  Raster tmp(out_w, h);
  for (int y = 0; y < h; ++y) {
    for (int ox = 0; ox < out_w; ++ox) {
      const int cx = 2 * ox;
      double acc = 0.0;
      for (int k = -2; k <= 2; ++k) {
        const int sx = std::clamp(cx + k, 0, w - 1);
        acc += kKernel[k + 2] * r(sx, y);
      }
      tmp(ox, y) = acc;
    }
  }

  Raster out(out_w, out_h, 0.0,
             Point{r.origin().x / 2.0, r.origin().y / 2.0});
  for (int oy = 0; oy < out_h; ++oy) {
    const int cy = 2 * oy;
    for (int ox = 0; ox < out_w; ++ox) {
      double acc = 0.0;
      for (int k = -2; k <= 2; ++k) {
        const int sy = std::clamp(cy + k, 0, h - 1);
        acc += kKernel[k + 2] * tmp(ox, sy);
      }
      out(ox, oy) = acc;
    }
  }
  return out;
}

Pyramid build_pyramid(const Raster& r, int max_levels) {
  if (max_levels < 1) throw std::invalid_argument("max_levels must be >= 1");
  Pyramid p;
  p.levels.push_back(r);
  while (static_cast<int>(p.levels.size()) < max_levels) {
    const Raster& top = p.levels.back();
    const int next_w = (top.width() + 1) / 2;
    const int next_h = (top.height() + 1) / 2;
    if (top.width() < 2 || top.height() < 2 || next_w < kPyramidMinSize ||
        next_h < kPyramidMinSize) {
      break;
    }
    p.levels.push_back(downsample(top));
  }
  return p;
}

}  // namespace mlmosaic
