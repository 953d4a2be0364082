#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace mlmosaic {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Grayscale image with row-major double intensities, nominally in [0,1].
///
/// `origin` is the position of pixel (0,0) in the raster's own coordinate
/// frame. Input frames use (0,0); panorama rasters carry the grid's lower
/// bound so that pixel (i,j) sits at (origin.x + i, origin.y + j).
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, double fill = 0.0, Point origin = {});
  Raster(int width, int height, std::vector<double> data, Point origin = {});

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  Point origin() const { return origin_; }
  void set_origin(Point origin) { origin_ = origin; }

  double operator()(int x, int y) const { return data_[index(x, y)]; }
  double& operator()(int x, int y) { return data_[index(x, y)]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
  Point origin_{};
};

struct GradientField {
  Raster gx;
  Raster gy;
};

/// Level 0 is full resolution; each further level halves both dimensions
/// (rounded up).
struct Pyramid {
  std::vector<Raster> levels;
};

/// Bilinear sample at pixel-index coordinates (origin ignored). Returns
/// nullopt outside [0, width-1] x [0, height-1]; that is the field-of-view
/// indicator H = 0.
std::optional<double> sample_bilinear(const Raster& r, double x, double y);

/// Same as sample_bilinear but with (x, y) expressed in the raster's own
/// coordinate frame, i.e. shifted by origin().
inline std::optional<double> sample_at(const Raster& r, Point p) {
  return sample_bilinear(r, p.x - r.origin().x, p.y - r.origin().y);
}

/// Central differences in the interior, one-sided on the border.
GradientField spatial_gradient(const Raster& r);

/// Binomial [1 4 6 4 1]/16 blur with replicated borders, then keep the
/// even-indexed pixels. Output dims are ceil(dims / 2).
Raster downsample(const Raster& r);

inline constexpr int kPyramidMinSize = 32;

/// Repeats downsample while fewer than max_levels exist and the next level
/// would still be at least kPyramidMinSize in both dimensions.
Pyramid build_pyramid(const Raster& r, int max_levels);

}  // namespace mlmosaic
