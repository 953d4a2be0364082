#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mlmosaic/motion.hpp"
#include "mlmosaic/raster.hpp"

namespace mlmosaic {

/// Per-frame panorama-to-image parameters. params[anchor] is the gauge and
/// must be exactly the identity.
struct Registration {
  ModelKind kind = ModelKind::Translation;
  std::vector<MotionParams> params;
  int anchor = 0;

  std::size_t size() const { return params.size(); }
  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

/// Inclusive integer bounds of the panorama grid, unit spacing.
struct RefGrid {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min + 1; }
  int height() const { return y_max - y_min + 1; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width()) * static_cast<std::size_t>(height());
  }
  Point point(int ix, int iy) const { return {double(x_min + ix), double(y_min + iy)}; }
  friend bool operator==(const RefGrid&, const RefGrid&) = default;
};

/// Number of frames observing each grid pixel.
struct WeightMap {
  int width = 0;
  int height = 0;
  std::vector<int> counts;

  int operator()(int x, int y) const { return counts[static_cast<std::size_t>(y) * width + x]; }
  int max() const;
};

struct PanoramaEstimate {
  Raster image;       // origin = (x_min, y_min); 0 where undefined
  WeightMap weights;  // W = 0 marks undefined pixels

  bool defined(int x, int y) const { return weights(x, y) > 0; }
  /// 1 where W >= 1, else 0; same layout as image.
  std::vector<std::uint8_t> mask() const;
};

/// Bounding box of every frame's corners mapped to panorama coordinates
/// through invert(theta_i), grown by `margin` and rounded outward.
RefGrid compute_bounds(std::span<const Raster> images, const Registration& reg,
                       int margin = 0);

WeightMap weight_map(std::span<const Raster> images, const Registration& reg,
                     const RefGrid& grid);

/// Per-pixel average of every frame sample that observes the pixel.
PanoramaEstimate estimate_panorama(std::span<const Raster> images,
                                   const Registration& reg, const RefGrid& grid);

/// Sum over ordered pairs i != j and their overlap of
/// (I_i(m(theta_i; x0)) - I_j(m(theta_j; x0)))^2 / W(x0).
double ml_cost(std::span<const Raster> images, const Registration& reg,
               const RefGrid& grid);

/// Writes the panorama (undefined pixels as 0) and the weight map scaled by
/// 255 / max(W).
void render(const PanoramaEstimate& pe,
            const std::filesystem::path& panorama_path,
            const std::filesystem::path& weights_path);

}  // namespace mlmosaic
