#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "mlmosaic/motion.hpp"
#include "mlmosaic/panorama.hpp"
#include "mlmosaic/raster.hpp"

namespace testing {

using namespace mlmosaic;

inline Raster from_function(int w, int h, const std::function<double(double, double)>& f) {
  Raster r(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) r(x, y) = f(x, y);
  }
  return r;
}

// Band-limited analytic texture; every derivative is small, so bilinear
// interpolation and central differences are accurate on it.
inline double smooth_scene(double x, double y) {
  return 0.5 + 0.12 * std::sin(0.11 * x + 0.3) * std::cos(0.07 * y - 0.2) +
         0.08 * std::sin(0.05 * x + 0.09 * y + 1.0) + 0.05 * std::cos(0.13 * y - 0.04 * x);
}

inline Raster random_raster(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Raster r(w, h);
  for (double& v : r.data()) v = u(rng);
  return r;
}

inline MotionParams random_affine(std::mt19937_64& rng, double lin, double trans) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return MotionParams::affine(1 + lin * u(rng), lin * u(rng), lin * u(rng), 1 + lin * u(rng),
                              trans * u(rng), trans * u(rng));
}

// n frames cut from one smooth scene, frame i at `reg.params[i]`.
inline std::vector<Raster> frames_of(const std::function<double(double, double)>& scene,
                                     const Registration& reg, int w, int h) {
  std::vector<Raster> frames;
  for (const MotionParams& p : reg.params) {
    const MotionParams inv = invert(p);
    frames.push_back(from_function(w, h, [&](double x, double y) {
      const Point x0 = map_point(inv, {x, y});
      return scene(x0.x, x0.y);
    }));
  }
  return frames;
}

// Random registration with an identity anchor at frame 0.
inline Registration random_registration(std::mt19937_64& rng, int n, double lin, double trans) {
  Registration reg{ModelKind::Affine, {identity(ModelKind::Affine)}, 0};
  for (int i = 1; i < n; ++i) reg.params.push_back(random_affine(rng, lin, trans));
  return reg;
}

inline bool same_pixels(const Raster& a, const Raster& b) {
  return a.width() == b.width() && a.height() == b.height() &&
         std::ranges::equal(a.data(), b.data());
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mlmosaic_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
