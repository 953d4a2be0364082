#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mlmosaic/image_io.hpp"
#include "mlmosaic/panorama.hpp"
#include "support.hpp"

using namespace mlmosaic;

namespace {

// Samples of every frame that observes grid pixel (ix, iy).
std::vector<double> observers(std::span<const Raster> images, const Registration& reg,
                              const RefGrid& grid, int ix, int iy) {
  std::vector<double> s;
  const Point x0 = grid.point(ix, iy);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Point p = map_point(reg.params[i], x0);
    const Raster& im = images[i];
    if (p.x >= 0 && p.y >= 0 && p.x <= im.width() - 1 && p.y <= im.height() - 1) {
      s.push_back(*sample_bilinear(im, p.x, p.y));
    }
  }
  return s;
}

double brute_pairwise(std::span<const Raster> images, const Registration& reg, const RefGrid& grid) {
  double total = 0;
  for (int iy = 0; iy < grid.height(); ++iy) {
    for (int ix = 0; ix < grid.width(); ++ix) {
      const auto s = observers(images, reg, grid, ix, iy);
      for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
          if (i != j) total += (s[i] - s[j]) * (s[i] - s[j]) / double(s.size());
        }
      }
    }
  }
  return total;
}

// Residual term sum_x sum_i [I_i - P(x)]^2 H for an arbitrary panorama P.
double residual_term(std::span<const Raster> images, const Registration& reg, const RefGrid& grid,
                     const Raster& pano) {
  double total = 0;
  for (int iy = 0; iy < grid.height(); ++iy) {
    for (int ix = 0; ix < grid.width(); ++ix) {
      for (double v : observers(images, reg, grid, ix, iy)) {
        total += (v - pano(ix, iy)) * (v - pano(ix, iy));
      }
    }
  }
  return total;
}

struct Instance {
  std::vector<Raster> images;
  Registration reg;
  RefGrid grid;
};

Instance random_instance(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  Instance in;
  in.reg = testing::random_registration(rng, n, 0.08, 12);
  for (int i = 0; i < n; ++i) in.images.push_back(testing::random_raster(64, 64, seed * 31 + i));
  in.grid = compute_bounds(in.images, in.reg, 2);
  return in;
}

}  // namespace

TEST_SUITE("panorama") {
  TEST_CASE("registration invariants") {
    Registration r{ModelKind::Affine, {identity(ModelKind::Affine)}, 0};
    CHECK_NOTHROW(r.validate());
    r.params[0] = MotionParams::affine(1, 0, 0, 1, 1e-12, 0);
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    r = Registration{ModelKind::Affine, {}, 0};
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    r = Registration{ModelKind::Affine, {identity(ModelKind::Affine), identity(ModelKind::Translation)}, 0};
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  }

  TEST_CASE("compute_bounds") {
    const std::vector<Raster> one{Raster(100, 80)};
    const Registration id{ModelKind::Translation, {identity(ModelKind::Translation)}, 0};
    CHECK(compute_bounds(one, id) == RefGrid{0, 0, 99, 79});
    CHECK(compute_bounds(one, id, 5) == RefGrid{-5, -5, 104, 84});

    const std::vector<Raster> two{Raster(100, 80), Raster(100, 80)};
    const Registration r{ModelKind::Translation,
                         {identity(ModelKind::Translation), MotionParams::translation(-50, 0)}, 0};
    CHECK(compute_bounds(two, r) == RefGrid{0, 0, 149, 79});

    const Registration frac{ModelKind::Translation,
                            {identity(ModelKind::Translation), MotionParams::translation(0.5, -0.25)}, 0};
    CHECK(compute_bounds(two, frac) == RefGrid{-1, 0, 99, 80});
  }

  TEST_CASE("weight map") {
    const std::vector<Raster> one{Raster(10, 8)};
    const Registration id{ModelKind::Affine, {identity(ModelKind::Affine)}, 0};
    const RefGrid g = compute_bounds(one, id, 2);
    const WeightMap w = weight_map(one, id, g);
    for (int y = 0; y < g.height(); ++y) {
      for (int x = 0; x < g.width(); ++x) {
        const bool inside = x >= 2 && x < 12 && y >= 2 && y < 10;
        CHECK(w(x, y) == (inside ? 1 : 0));
      }
    }

    const std::vector<Raster> same{Raster(10, 8), Raster(10, 8)};
    const Registration twice{ModelKind::Affine, {identity(ModelKind::Affine), identity(ModelKind::Affine)}, 0};
    CHECK(weight_map(same, twice, compute_bounds(same, twice)).max() == 2);

    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const Instance in = random_instance(seed, 3);
      const WeightMap wm = weight_map(in.images, in.reg, in.grid);
      for (int y = 0; y < in.grid.height(); ++y) {
        for (int x = 0; x < in.grid.width(); ++x) {
          CHECK(wm(x, y) == int(observers(in.images, in.reg, in.grid, x, y).size()));
        }
      }
    }
  }

  TEST_CASE("estimate_panorama averages observers") {
    const Raster img = testing::random_raster(12, 9, 4);
    const std::vector<Raster> one{img};
    const Registration id{ModelKind::Affine, {identity(ModelKind::Affine)}, 0};
    const PanoramaEstimate pe = estimate_panorama(one, id, compute_bounds(one, id));
    CHECK(pe.image.origin().x == 0);
    for (int y = 0; y < 9; ++y) {
      for (int x = 0; x < 12; ++x) CHECK(pe.image(x, y) == img(x, y));
    }

    const std::vector<Raster> consts{Raster(8, 8, 0.2), Raster(8, 8, 0.6)};
    const Registration twice{ModelKind::Affine, {identity(ModelKind::Affine), identity(ModelKind::Affine)}, 0};
    const PanoramaEstimate avg = estimate_panorama(consts, twice, compute_bounds(consts, twice, 1));
    CHECK(avg.image(4, 4) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK_FALSE(avg.defined(0, 0));
    CHECK(avg.image(0, 0) == 0.0);
    const auto mask = avg.mask();
    CHECK(mask[0] == 0);
    CHECK(mask[static_cast<std::size_t>(4 * avg.weights.width + 4)] == 1);

    // Values stay within the observed range.
    const Instance in = random_instance(9, 4);
    const PanoramaEstimate r = estimate_panorama(in.images, in.reg, in.grid);
    for (int y = 0; y < in.grid.height(); ++y) {
      for (int x = 0; x < in.grid.width(); ++x) {
        const auto s = observers(in.images, in.reg, in.grid, x, y);
        if (s.empty()) continue;
        CHECK(r.image(x, y) >= *std::min_element(s.begin(), s.end()) - 1e-12);
        CHECK(r.image(x, y) <= *std::max_element(s.begin(), s.end()) + 1e-12);
      }
    }
  }

  TEST_CASE("noiseless smooth crops reproduce the scene") {
    std::mt19937_64 rng(4);
    const Registration truth = testing::random_registration(rng, 3, 0.03, 15);
    const auto frames = testing::frames_of(testing::smooth_scene, truth, 80, 64);
    const RefGrid grid = compute_bounds(frames, truth);
    const PanoramaEstimate pe = estimate_panorama(frames, truth, grid);
    double se = 0;
    int count = 0;
    for (int y = 0; y < grid.height(); ++y) {
      for (int x = 0; x < grid.width(); ++x) {
        if (!pe.defined(x, y)) continue;
        const Point p = grid.point(x, y);
        se += std::pow(pe.image(x, y) - testing::smooth_scene(p.x, p.y), 2);
        ++count;
      }
    }
    CHECK(std::sqrt(se / count) < 1e-3);

    int overlap = 0;
    const WeightMap w = pe.weights;
    for (int c : w.counts) overlap += c >= 2;
    CHECK(ml_cost(frames, truth, grid) / overlap < 1e-4);
  }

  TEST_CASE("ml_cost matches the pairwise and variance oracles") {
    const std::vector<Raster> consts{Raster(30, 30, 0.3), Raster(30, 30, 0.3), Raster(30, 30, 0.3)};
    std::mt19937_64 rng(1);
    const Registration any = testing::random_registration(rng, 3, 0.05, 8);
    CHECK(ml_cost(consts, any, compute_bounds(consts, any)) == 0.0);

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const Instance in = random_instance(seed, 3 + seed % 3);
      const double cost = ml_cost(in.images, in.reg, in.grid);
      CHECK(cost == doctest::Approx(brute_pairwise(in.images, in.reg, in.grid)).epsilon(1e-10));

      double variance_form = 0;
      for (int y = 0; y < in.grid.height(); ++y) {
        for (int x = 0; x < in.grid.width(); ++x) {
          const auto s = observers(in.images, in.reg, in.grid, x, y);
          if (s.empty()) continue;
          double mean = 0;
          for (double v : s) mean += v / s.size();
          double var = 0;
          for (double v : s) var += (v - mean) * (v - mean) / s.size();
          variance_form += 2.0 * s.size() * var;
        }
      }
      CHECK(cost == doctest::Approx(variance_form).epsilon(1e-10));
    }
  }

  TEST_CASE("bridge identity: residual term at P-hat is half the ml cost") {
    for (std::uint64_t seed = 11; seed <= 16; ++seed) {
      const Instance in = random_instance(seed, 3);
      const PanoramaEstimate pe = estimate_panorama(in.images, in.reg, in.grid);
      const double lhs = residual_term(in.images, in.reg, in.grid, pe.image);
      const double rhs = ml_cost(in.images, in.reg, in.grid) / 2;
      CHECK(std::abs(lhs - rhs) <= 1e-8 * rhs);
    }
  }

  TEST_CASE("P-hat minimises the residual term pixel by pixel") {
    const Instance in = random_instance(21, 3);
    const PanoramaEstimate pe = estimate_panorama(in.images, in.reg, in.grid);
    const double base = residual_term(in.images, in.reg, in.grid, pe.image);
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> ux(0, in.grid.width() - 1), uy(0, in.grid.height() - 1);
    int tested = 0;
    while (tested < 20) {
      const int x = ux(rng), y = uy(rng);
      if (!pe.defined(x, y)) continue;
      for (double eps : {0.01, -0.01}) {
        Raster p = pe.image;
        p(x, y) += eps;
        CHECK(residual_term(in.images, in.reg, in.grid, p) > base);
      }
      ++tested;
    }
  }

  TEST_CASE("ml_cost symmetry and permutation invariance") {
    const Instance in = random_instance(33, 4);
    const double cost = ml_cost(in.images, in.reg, in.grid);

    // Unordered pairs counted twice.
    double unordered = 0;
    for (int y = 0; y < in.grid.height(); ++y) {
      for (int x = 0; x < in.grid.width(); ++x) {
        const auto s = observers(in.images, in.reg, in.grid, x, y);
        for (std::size_t i = 0; i < s.size(); ++i) {
          for (std::size_t j = i + 1; j < s.size(); ++j) unordered += (s[i] - s[j]) * (s[i] - s[j]) / s.size();
        }
      }
    }
    CHECK(cost == doctest::Approx(2 * unordered).epsilon(1e-10));

    std::vector<int> order{2, 0, 3, 1};
    std::vector<Raster> images;
    Registration reg{in.reg.kind, {}, 1};
    for (int i : order) {
      images.push_back(in.images[i]);
      reg.params.push_back(in.reg.params[i]);
    }
    CHECK(ml_cost(images, reg, in.grid) == doctest::Approx(cost).epsilon(1e-12));

    // Every overlap pixel has at least two observers.
    const WeightMap w = weight_map(in.images, in.reg, in.grid);
    for (int y = 0; y < in.grid.height(); ++y) {
      for (int x = 0; x < in.grid.width(); ++x) {
        const auto s = observers(in.images, in.reg, in.grid, x, y);
        if (s.size() >= 2) CHECK(w(x, y) >= 2);
      }
    }
  }

  TEST_CASE("render") {
    testing::TempDir dir("render");
    PanoramaEstimate empty{Raster(3, 2, 0.0), WeightMap{3, 2, std::vector<int>(6, 0)}};
    render(empty, dir / "p.pgm", dir / "w.pgm");
    const Raster p = load_image(dir / "p.pgm");
    const Raster w = load_image(dir / "w.pgm");
    for (double v : p.data()) CHECK(v == 0.0);
    for (double v : w.data()) CHECK(v == 0.0);

    PanoramaEstimate pe{Raster(3, 1, std::vector<double>{0.5, 0.25, 0.9}),
                        WeightMap{3, 1, std::vector<int>{4, 2, 0}}};
    render(pe, dir / "p.pgm", dir / "w.pgm");
    const std::string wb = testing::read_bytes(dir / "w.pgm");
    CHECK(wb == std::string("P5\n3 1\n255\n") + '\xff' + '\x80' + '\x00');
    const std::string pb = testing::read_bytes(dir / "p.pgm");
    CHECK(pb.substr(pb.size() - 3) == std::string() + '\x80' + '\x40' + '\x00');
  }
}
