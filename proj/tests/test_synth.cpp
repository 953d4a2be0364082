#include <doctest.h>

#include <cmath>

#include "mlmosaic/synth.hpp"
#include "support.hpp"

using namespace mlmosaic;

namespace {

SynthConfig base_config(int n, double sigma) {
  TextureSpec ts;
  ts.width = 160;
  ts.height = 120;
  ts.seed = 2;
  SynthConfig cfg;
  cfg.source = make_texture(ts);
  cfg.n_frames = n;
  cfg.frame_width = 64;
  cfg.frame_height = 48;
  cfg.kind = ModelKind::Translation;
  for (int k = 0; k < n; ++k) cfg.trajectory.push_back(MotionParams::translation(-7.0 * k, -3.0 * k));
  cfg.offset = {20, 20};
  cfg.noise_sigma = sigma;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("texture statistics and determinism") {
    TextureSpec ts;
    ts.width = 128;
    ts.height = 96;
    ts.seed = 5;
    const Raster a = make_texture(ts);
    const Raster b = make_texture(ts);
    CHECK(testing::same_pixels(a, b));
    double mean = 0;
    for (double v : a.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      mean += v;
    }
    mean /= a.data().size();
    CHECK(mean == doctest::Approx(0.5).epsilon(0.05));
    ts.seed = 6;
    CHECK_FALSE(testing::same_pixels(make_texture(ts), a));
  }

  TEST_CASE("gaussian blur keeps constants and smooths") {
    const Raster c(20, 10, 0.3);
    const Raster blurred = gaussian_blur(c, 2.0);
    for (double v : blurred.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));
    const Raster r = testing::random_raster(40, 40, 1);
    CHECK(testing::same_pixels(gaussian_blur(r, 0.0), r));
    auto variance = [](const Raster& x) {
      double m = 0, s = 0;
      for (double v : x.data()) m += v;
      m /= x.data().size();
      for (double v : x.data()) s += (v - m) * (v - m);
      return s / x.data().size();
    };
    CHECK(variance(gaussian_blur(r, 1.5)) < variance(r) / 4);
  }

  TEST_CASE("chain trajectory") {
    ChainSpec spec;
    spec.step = {10, 2};
    spec.jitter_translation = 0;
    const auto t = make_chain_trajectory(4, ModelKind::Translation, spec);
    REQUIRE(t.size() == 4);
    CHECK(t[0] == identity(ModelKind::Translation));
    CHECK(t[3].tx() == -30);
    CHECK(t[3].ty() == -6);
    spec.jitter_linear = 0.02;
    spec.jitter_translation = 1;
    const auto a = make_chain_trajectory(5, ModelKind::Affine, spec);
    CHECK(a == make_chain_trajectory(5, ModelKind::Affine, spec));
    CHECK(a[0] == identity(ModelKind::Affine));
  }

  TEST_CASE("frame 0 reproduces the source") {
    SynthConfig cfg;
    cfg.source = testing::random_raster(30, 20, 4);
    cfg.n_frames = 1;
    cfg.frame_width = 30;
    cfg.frame_height = 20;
    cfg.kind = ModelKind::Affine;
    cfg.trajectory = {identity(ModelKind::Affine)};
    const SynthDataset ds = generate(cfg);
    CHECK(testing::same_pixels(ds.frames[0], cfg.source));
    CHECK(ds.truth.anchor == 0);
  }

  TEST_CASE("integer translations give exact crops") {
    const SynthConfig cfg = base_config(3, 0.0);
    const SynthDataset ds = generate(cfg);
    REQUIRE(ds.frames.size() == 3);
    for (int k = 0; k < 3; ++k) {
      for (int y = 0; y < 48; y += 5) {
        for (int x = 0; x < 64; x += 3) {
          CHECK(ds.frames[k](x, y) == cfg.source(x + 20 + 7 * k, y + 20 + 3 * k));
        }
      }
    }
    CHECK(ml_cost(ds.frames, ds.truth, compute_bounds(ds.frames, ds.truth)) == 0.0);
  }

  TEST_CASE("noise is deterministic and per-frame") {
    const SynthConfig cfg = base_config(3, 0.02);
    const SynthDataset a = generate(cfg);
    const SynthDataset b = generate(cfg);
    for (int k = 0; k < 3; ++k) CHECK(testing::same_pixels(a.frames[k], b.frames[k]));

    // Adding a frame does not reshuffle earlier frames' noise.
    SynthConfig more = base_config(4, 0.02);
    const SynthDataset c = generate(more);
    for (int k = 0; k < 3; ++k) CHECK(testing::same_pixels(c.frames[k], a.frames[k]));

    SynthConfig other = cfg;
    other.seed = 100;
    CHECK_FALSE(testing::same_pixels(generate(other).frames[1], a.frames[1]));
  }

  TEST_CASE("config errors name the frame") {
    SynthConfig cfg = base_config(3, 0.0);
    cfg.trajectory[2] = MotionParams::translation(-200, 0);
    try {
      generate(cfg);
      FAIL("expected SynthConfigError");
    } catch (const SynthConfigError& e) {
      CHECK(e.frame() == 2);
      CHECK(std::string(e.what()).find("frame 2") != std::string::npos);
    }
    cfg = base_config(2, 0.5);
    CHECK_THROWS_AS(generate(cfg), SynthConfigError);
    cfg = base_config(2, 0.0);
    cfg.trajectory.pop_back();
    CHECK_THROWS_AS(generate(cfg), SynthConfigError);
    cfg = base_config(2, 0.0);
    cfg.trajectory[0] = MotionParams::translation(1, 0);
    CHECK_THROWS_AS(generate(cfg), SynthConfigError);
  }

  TEST_CASE("expected ml_cost at truth grows with noise") {
    double previous = -1;
    for (double sigma : {0.0, 0.01, 0.02, 0.04}) {
      double mean = 0;
      for (int s = 0; s < 10; ++s) {
        SynthConfig cfg = base_config(3, sigma);
        cfg.seed = 1000 + s;
        const SynthDataset ds = generate(cfg);
        mean += ml_cost(ds.frames, ds.truth, compute_bounds(ds.frames, ds.truth));
      }
      mean /= 10;
      CHECK(mean > previous);
      previous = mean;
    }
  }

  TEST_CASE("corner error") {
    const MotionParams p = MotionParams::affine(1.02, 0.01, -0.01, 0.98, 4, -3);
    CHECK(corner_error(p, p, 64, 48) == 0.0);
    CHECK(corner_error(MotionParams::translation(1, 0), identity(ModelKind::Translation), 64, 48) == 1.0);
    // Scaling about the origin moves the far corner the most.
    const double e = corner_error(MotionParams::affine(0.5, 0, 0, 0.5, 0, 0), identity(ModelKind::Affine), 11, 11);
    CHECK(e == doctest::Approx(std::hypot(10.0, 10.0)));
  }

  TEST_CASE("evaluate") {
    const SynthConfig cfg = base_config(3, 0.0);
    const SynthDataset ds = generate(cfg);
    const EvalReport same = evaluate(ds.truth, ds.truth, ds.frames, cfg.source, cfg.offset);
    CHECK(same.max_corner_error == 0.0);
    for (double v : same.param_rmse) CHECK(v == 0.0);
    CHECK(same.ml_cost == 0.0);
    CHECK(same.psnr_db >= 50.0);

    Registration off = ds.truth;
    off.params[1] = MotionParams::translation(off.params[1].tx() + 1, off.params[1].ty());
    const EvalReport r = evaluate(off, ds.truth, ds.frames, cfg.source, cfg.offset);
    CHECK(r.corner_error[0] == 0.0);
    CHECK(r.corner_error[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.corner_error[2] == 0.0);
    CHECK(r.max_corner_error == doctest::Approx(1.0));
    CHECK(r.psnr_db < same.psnr_db);

    // A common gauge shift is removed before measuring.
    Registration shifted = ds.truth;
    for (MotionParams& p : shifted.params) p = compose(p, MotionParams::translation(3, -2));
    CHECK(evaluate(shifted, ds.truth, ds.frames, cfg.source, cfg.offset).max_corner_error < 1e-12);

    Registration short_reg = ds.truth;
    short_reg.params.pop_back();
    CHECK_THROWS_AS(evaluate(short_reg, ds.truth, ds.frames, cfg.source), std::invalid_argument);
  }

  TEST_CASE("noiseless PSNR at truth on a sub-pixel trajectory") {
    SynthConfig cfg = base_config(3, 0.0);
    cfg.kind = ModelKind::Affine;
    cfg.source = gaussian_blur(cfg.source, 3.0);
    cfg.trajectory = {identity(ModelKind::Affine), MotionParams::affine(1, 0, 0, 1, -7.3, -2.6),
                      MotionParams::affine(1.01, 0.005, -0.004, 0.99, -14.2, -5.5)};
    const SynthDataset ds = generate(cfg);
    const EvalReport r = evaluate(ds.truth, ds.truth, ds.frames, cfg.source, cfg.offset);
    CHECK(r.psnr_db >= 50.0);
    CHECK(std::isfinite(r.ml_cost));
  }
}
