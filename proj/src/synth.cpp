#include "mlmosaic/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mlmosaic {

namespace {

// Independent stream per (seed, stream) pair, so that adding frames never
// changes the noise of earlier ones.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x6d6c6d6fu};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kTextureStream = 0xffff0001ull;
constexpr std::uint64_t kTrajectoryStream = 0xffff0002ull;

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= sum;
  return k;
}

void normalise(Raster& r, double contrast) {
  const auto d = r.data();
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / d.size();
  double var = 0.0;
  for (double v : d) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / d.size());
  const double scale = sd > 0.0 ? contrast / sd : 0.0;
  for (double& v : d) v = std::clamp(0.5 + (v - mean) * scale, 0.0, 1.0);
}

}  // namespace

Raster gaussian_blur(const Raster& r, double sigma) {
  if (!(sigma > 0.0)) return r;
  const std::vector<double> k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int w = r.width();
  const int h = r.height();
  Raster tmp(w, h, 0.0, r.origin());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * r(std::clamp(x + i, 0, w - 1), y);
      tmp(x, y) = acc;
    }
  }
  Raster out(w, h, 0.0, r.origin());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(x, std::clamp(y + i, 0, h - 1));
      out(x, y) = acc;
    }
  }
  return out;
}

Raster make_texture(const TextureSpec& spec) {
  if (spec.width < 2 || spec.height < 2) throw std::invalid_argument("texture must be at least 2x2");
  std::mt19937_64 rng = make_rng(spec.seed, kTextureStream);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Raster acc(spec.width, spec.height, 0.0);

  // Smooth value noise, coarsest octave first.
  double amplitude = 1.0;
  for (int octave = 0; octave < spec.octaves; ++octave) {
    const int cell = 1 << (spec.octaves - octave);
    const int gw = spec.width / cell + 3;
    const int gh = spec.height / cell + 3;
    std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
    for (double& v : lattice) v = unit(rng);
    for (int y = 0; y < spec.height; ++y) {
      const double v = static_cast<double>(y) / cell;
      const int j = static_cast<int>(v);
      const double fy = v - j;
      const double sy = fy * fy * (3.0 - 2.0 * fy);
      for (int x = 0; x < spec.width; ++x) {
        const double u = static_cast<double>(x) / cell;
        const int i = static_cast<int>(u);
        const double fx = u - i;
        const double sx = fx * fx * (3.0 - 2.0 * fx);
        const auto at = [&](int a, int b) { return lattice[static_cast<std::size_t>(b) * gw + a]; };
        const double top = (1 - sx) * at(i, j) + sx * at(i + 1, j);
        const double bottom = (1 - sx) * at(i, j + 1) + sx * at(i + 1, j + 1);
        acc(x, y) += amplitude * ((1 - sy) * top + sy * bottom);
      }
    }
    amplitude *= spec.roughness;
  }

  // Soft-edged ellipses give the sharp structure natural images have.
  std::uniform_real_distribution<double> px(0.0, spec.width);
  std::uniform_real_distribution<double> py(0.0, spec.height);
  std::uniform_real_distribution<double> radius(3.0, std::max(4.0, spec.width / 10.0));
  std::uniform_real_distribution<double> angle(0.0, 3.141592653589793);
  for (int s = 0; s < spec.shapes; ++s) {
    const double cx = px(rng), cy = py(rng);
    const double rx = radius(rng), ry = radius(rng);
    const double a = angle(rng), value = 1.2 * unit(rng);
    const double ca = std::cos(a), sa = std::sin(a);
    const double reach = std::max(rx, ry) + 2.0;
    const int x0 = std::max(0, static_cast<int>(cx - reach));
    const int x1 = std::min(spec.width - 1, static_cast<int>(cx + reach));
    const int y0 = std::max(0, static_cast<int>(cy - reach));
    const int y1 = std::min(spec.height - 1, static_cast<int>(cy + reach));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double u = (x - cx) * ca + (y - cy) * sa;
        const double v = -(x - cx) * sa + (y - cy) * ca;
        const double d = std::sqrt((u / rx) * (u / rx) + (v / ry) * (v / ry));
        const double edge = std::clamp((1.0 - d) * std::min(rx, ry) + 0.5, 0.0, 1.0);
        acc(x, y) += value * edge;
      }
    }
  }

  Raster out = gaussian_blur(acc, spec.blur);
  normalise(out, spec.contrast);
  return out;
}

std::vector<MotionParams> make_chain_trajectory(int n_frames, ModelKind kind,
                                                const ChainSpec& spec) {
  if (n_frames < 1) throw std::invalid_argument("need at least one frame");
  std::mt19937_64 rng = make_rng(spec.seed, kTrajectoryStream);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<MotionParams> params{identity(kind)};
  for (int k = 1; k < n_frames; ++k) {
    const double tx = k * spec.step.x + spec.jitter_translation * unit(rng);
    const double ty = k * spec.step.y + spec.jitter_translation * unit(rng);
    MotionParams pose = MotionParams::translation(tx, ty);
    if (kind == ModelKind::Affine) {
      const double j = spec.jitter_linear;
      const double b11 = 1.0 + j * unit(rng);
      const double b12 = j * unit(rng);
      const double b21 = j * unit(rng);
      const double b22 = 1.0 + j * unit(rng);
      pose = MotionParams::affine(b11, b12, b21, b22, tx, ty);
    }
    // pose maps frame to panorama; parameters map panorama to frame.
    params.push_back(invert(pose));
  }
  return params;
}

void SynthConfig::validate() const {
  if (source.empty()) throw SynthConfigError(-1, "synth: empty source image");
  if (n_frames < 1) throw SynthConfigError(-1, "synth: n_frames must be >= 1");
  if (frame_width < 2 || frame_height < 2) {
    throw SynthConfigError(-1, "synth: frame size must be at least 2x2");
  }
  if (!(noise_sigma >= 0.0 && noise_sigma < 0.5)) {
    throw SynthConfigError(-1, "synth: noise_sigma must be in [0, 0.5)");
  }
  if (static_cast<int>(trajectory.size()) != n_frames) {
    throw SynthConfigError(-1, "synth: trajectory length does not match n_frames");
  }
  for (int i = 0; i < n_frames; ++i) {
    const MotionParams& p = trajectory[i];
    if (p.kind() != kind) throw SynthConfigError(i, "synth: frame " + std::to_string(i) + " has the wrong model kind");
    if (!p.is_invertible()) throw SynthConfigError(i, "synth: frame " + std::to_string(i) + " is singular");
  }
  if (!(trajectory[0] == identity(kind))) {
    throw SynthConfigError(0, "synth: frame 0 must have identity parameters");
  }
  constexpr double tol = 1e-9;
  for (int i = 0; i < n_frames; ++i) {
    const MotionParams to_panorama = invert(trajectory[i]);
    const double w = frame_width - 1, h = frame_height - 1;
    for (const Point c : {Point{0, 0}, Point{w, 0}, Point{0, h}, Point{w, h}}) {
      const Point p = map_point(to_panorama, c);
      const double sx = p.x + offset.x, sy = p.y + offset.y;
      if (sx < -tol || sy < -tol || sx > source.width() - 1 + tol ||
          sy > source.height() - 1 + tol) {
        throw SynthConfigError(i, "synth: frame " + std::to_string(i) +
                                      " exceeds the source bounds");
      }
    }
  }
}

SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset ds{{}, Registration{cfg.kind, cfg.trajectory, 0}, cfg};
  const double max_x = cfg.source.width() - 1, max_y = cfg.source.height() - 1;
  for (int i = 0; i < cfg.n_frames; ++i) {
    const MotionParams to_panorama = invert(cfg.trajectory[i]);
    std::mt19937_64 rng = make_rng(cfg.seed, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
    Raster frame(cfg.frame_width, cfg.frame_height);
    for (int y = 0; y < cfg.frame_height; ++y) {
      for (int x = 0; x < cfg.frame_width; ++x) {
        const Point p = map_point(to_panorama, Point{double(x), double(y)});
        // Corners were validated; clamp away last-ulp excursions.
        const double sx = std::clamp(p.x + cfg.offset.x, 0.0, max_x);
        const double sy = std::clamp(p.y + cfg.offset.y, 0.0, max_y);
        double v = *sample_bilinear(cfg.source, sx, sy);
        if (cfg.noise_sigma > 0.0) v += noise(rng);
        frame(x, y) = std::clamp(v, 0.0, 1.0);
      }
    }
    ds.frames.push_back(std::move(frame));
  }
  return ds;
}

double corner_error(const MotionParams& estimate, const MotionParams& truth,
                    int frame_width, int frame_height) {
  const MotionParams est_inv = invert(estimate);
  const MotionParams true_inv = invert(truth);
  const double w = frame_width - 1, h = frame_height - 1;
  double worst = 0.0;
  for (const Point c : {Point{0, 0}, Point{w, 0}, Point{0, h}, Point{w, h}}) {
    const Point a = map_point(est_inv, c);
    const Point b = map_point(true_inv, c);
    worst = std::max(worst, std::hypot(a.x - b.x, a.y - b.y));
  }
  return worst;
}

EvalReport evaluate(const Registration& estimate, const Registration& truth,
                    std::span<const Raster> images, const Raster& source,
                    Point offset) {
  if (estimate.size() != truth.size() || estimate.size() != images.size()) {
    throw std::invalid_argument("evaluate: frame counts differ");
  }
  if (estimate.kind != truth.kind) throw std::invalid_argument("evaluate: model kinds differ");
  if (estimate.anchor < 0 || estimate.anchor >= static_cast<int>(estimate.size()) ||
      truth.anchor < 0 || truth.anchor >= static_cast<int>(truth.size())) {
    throw std::invalid_argument("evaluate: anchor out of range");
  }

  // Gauge alignment: est_i o G with G = est_a^-1 o truth_a, a = truth anchor.
  const int a = truth.anchor;
  const MotionParams gauge = compose(invert(estimate.params[a]), truth.params[a]);
  Registration aligned = estimate;
  aligned.anchor = a;
  for (MotionParams& p : aligned.params) p = compose(p, gauge);
  aligned.params[a] = truth.params[a];

  EvalReport report;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double ce = corner_error(aligned.params[i], truth.params[i],
                                   images[i].width(), images[i].height());
    report.corner_error.push_back(ce);
    report.max_corner_error = std::max(report.max_corner_error, ce);
    double sq = 0.0;
    const auto est = aligned.params[i].theta();
    const auto tru = truth.params[i].theta();
    for (std::size_t k = 0; k < est.size(); ++k) sq += (est[k] - tru[k]) * (est[k] - tru[k]);
    report.param_rmse.push_back(std::sqrt(sq / est.size()));
  }

  const RefGrid grid = compute_bounds(images, aligned, 0);
  const PanoramaEstimate pe = estimate_panorama(images, aligned, grid);
  double sq = 0.0;
  std::size_t count = 0;
  for (int iy = 0; iy < grid.height(); ++iy) {
    for (int ix = 0; ix < grid.width(); ++ix) {
      if (!pe.defined(ix, iy)) continue;
      const Point x0 = grid.point(ix, iy);
      const auto s = sample_bilinear(source, x0.x + offset.x, x0.y + offset.y);
      if (!s) continue;
      const double e = pe.image(ix, iy) - *s;
      sq += e * e;
      ++count;
    }
  }
  const double mse = count > 0 ? sq / count : 1.0;
  report.psnr_db = 10.0 * std::log10(1.0 / std::max(mse, 1e-10));
  report.ml_cost = ml_cost(images, aligned, grid);
  return report;
}

}  // namespace mlmosaic
