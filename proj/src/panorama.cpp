#include "mlmosaic/panorama.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mlmosaic/image_io.hpp"
#include "mlmosaic/parallel.hpp"

namespace mlmosaic {

void Registration::validate() const {
  if (params.empty()) throw std::invalid_argument("registration has no frames");
  if (anchor < 0 || anchor >= static_cast<int>(params.size())) {
    throw std::invalid_argument("registration anchor out of range");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].kind() != kind) {
      throw std::invalid_argument("frame " + std::to_string(i) +
                                  " has a different motion model");
    }
  }
  if (!(params[anchor] == identity(kind))) {
    throw std::invalid_argument("anchor frame parameters must be the identity");
  }
}

int WeightMap::max() const {
  return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

std::vector<std::uint8_t> PanoramaEstimate::mask() const {
  std::vector<std::uint8_t> m(weights.counts.size());
  std::transform(weights.counts.begin(), weights.counts.end(), m.begin(),
                 [](int w) { return static_cast<std::uint8_t>(w > 0); });
  return m;
}

namespace {

constexpr int kRowGrain = 16;

void check_inputs(std::span<const Raster> images, const Registration& reg) {
  if (images.size() != reg.size()) {
    throw std::invalid_argument("image count does not match registration");
  }
}

// Snaps values within 1e-9 of an integer so that exact corners do not get
// rounded outward by floating-point noise.
double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

RefGrid compute_bounds(std::span<const Raster> images, const Registration& reg,
                       int margin) {
  check_inputs(images, reg);
  if (margin < 0) throw std::invalid_argument("margin must be >= 0");
  double lo_x = std::numeric_limits<double>::infinity();
  double lo_y = lo_x;
  double hi_x = -lo_x;
  double hi_y = -lo_x;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const MotionParams to_panorama = invert(reg.params[i]);
    const Raster& img = images[i];
    const Point o = img.origin();
    const double w = img.width() - 1;
    const double h = img.height() - 1;
    for (const Point c : {Point{o.x, o.y}, Point{o.x + w, o.y},
                          Point{o.x, o.y + h}, Point{o.x + w, o.y + h}}) {
      const Point p = map_point(to_panorama, c);
      lo_x = std::min(lo_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_x = std::max(hi_x, p.x);
      hi_y = std::max(hi_y, p.y);
    }
  }
  return {static_cast<int>(std::floor(snap(lo_x))) - margin,
          static_cast<int>(std::floor(snap(lo_y))) - margin,
          static_cast<int>(std::ceil(snap(hi_x))) + margin,
          static_cast<int>(std::ceil(snap(hi_y))) + margin};
}

WeightMap weight_map(std::span<const Raster> images, const Registration& reg,
                     const RefGrid& grid) {
  check_inputs(images, reg);
  WeightMap wm{grid.width(), grid.height(),
               std::vector<int>(grid.pixel_count(), 0)};
  for (int iy = 0; iy < grid.height(); ++iy) {
    for (int ix = 0; ix < grid.width(); ++ix) {
      const Point x0 = grid.point(ix, iy);
      int w = 0;
      for (std::size_t i = 0; i < images.size(); ++i) {
        if (sample_at(images[i], map_point(reg.params[i], x0))) ++w;
      }
      wm.counts[static_cast<std::size_t>(iy) * grid.width() + ix] = w;
    }
  }
  return wm;
}

PanoramaEstimate estimate_panorama(std::span<const Raster> images,
                                   const Registration& reg, const RefGrid& grid) {
  check_inputs(images, reg);
  PanoramaEstimate pe{
      Raster(grid.width(), grid.height(), 0.0,
             Point{double(grid.x_min), double(grid.y_min)}),
      WeightMap{grid.width(), grid.height(), std::vector<int>(grid.pixel_count(), 0)}};
  for (int iy = 0; iy < grid.height(); ++iy) {
    for (int ix = 0; ix < grid.width(); ++ix) {
      const Point x0 = grid.point(ix, iy);
      double sum = 0.0;
      int w = 0;
      for (std::size_t i = 0; i < images.size(); ++i) {
        if (const auto s = sample_at(images[i], map_point(reg.params[i], x0))) {
          sum += *s;
          ++w;
        }
      }
      pe.weights.counts[static_cast<std::size_t>(iy) * grid.width() + ix] = w;
      if (w > 0) pe.image(ix, iy) = sum / w;
    }
  }
  return pe;
}

double ml_cost(std::span<const Raster> images, const Registration& reg,
               const RefGrid& grid) {
  check_inputs(images, reg);
  const std::size_t n = images.size();
  const auto parts = map_chunks<double>(
      grid.height(), kRowGrain, [&](int row_begin, int row_end) {
        std::vector<double> samples;
        samples.reserve(n);
        double acc = 0.0;
        for (int iy = row_begin; iy < row_end; ++iy) {
          for (int ix = 0; ix < grid.width(); ++ix) {
            const Point x0 = grid.point(ix, iy);
            samples.clear();
            for (std::size_t i = 0; i < n; ++i) {
              if (const auto s = sample_at(images[i], map_point(reg.params[i], x0))) {
                samples.push_back(*s);
              }
            }
            if (samples.size() < 2) continue;
            // Unordered pairs counted twice: (i,j) and (j,i) contribute equally.
            double pixel = 0.0;
            for (std::size_t a = 0; a < samples.size(); ++a) {
              for (std::size_t b = a + 1; b < samples.size(); ++b) {
                const double e = samples[a] - samples[b];
                pixel += e * e;
              }
            }
            acc += 2.0 * pixel / static_cast<double>(samples.size());
          }
        }
        return acc;
      });
  double total = 0.0;
  for (double p : parts) total += p;
  return total;
}

void render(const PanoramaEstimate& pe,
            const std::filesystem::path& panorama_path,
            const std::filesystem::path& weights_path) {
  const WeightMap& wm = pe.weights;
  Raster image = pe.image;
  for (std::size_t i = 0; i < wm.counts.size(); ++i) {
    if (wm.counts[i] == 0) image.data()[i] = 0.0;
  }
  save_image(image, panorama_path);
  const int max_w = wm.max();
  Raster weights(wm.width, wm.height, 0.0);
  if (max_w > 0) {
    for (std::size_t i = 0; i < wm.counts.size(); ++i) {
      weights.data()[i] = static_cast<double>(wm.counts[i]) / max_w;
    }
  }
  save_image(weights, weights_path);
}

}  // namespace mlmosaic
