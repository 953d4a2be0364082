#include "mlmosaic/mlm.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>

namespace mlmosaic {

void MlmOptions::validate() const {
  if (max_sweeps < 1 || max_levels < 1 || max_step_halvings < 0) {
    throw std::invalid_argument("MlmOptions: counts must be >= 1");
  }
  if (!(sweep_tol > 0.0) || !(min_update_norm > 0.0)) {
    throw std::invalid_argument("MlmOptions: tolerances must be > 0");
  }
  if (!(damping >= 0.0)) throw std::invalid_argument("MlmOptions: damping must be >= 0");
}

std::string_view to_string(LevelTermination t) {
  switch (t) {
    case LevelTermination::Converged: return "converged";
    case LevelTermination::SmallUpdates: return "small_updates";
    case LevelTermination::MaxSweeps: return "max_sweeps";
    case LevelTermination::NoProgress: return "no_progress";
    case LevelTermination::CostIncrease: return "cost_increase";
    case LevelTermination::SingleFrame: return "single_frame";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// MosaicState

MosaicState::MosaicState(std::span<const Raster> images,
                         std::span<const GradientField> gradients,
                         Registration reg, RefGrid grid)
    : images_(images), gradients_(gradients), reg_(std::move(reg)), grid_(grid) {
  reg_.validate();
  if (images_.size() != reg_.size() || gradients_.size() != reg_.size()) {
    throw std::invalid_argument("MosaicState: image/gradient/param counts differ");
  }
  layers_.reserve(reg_.size());
  for (std::size_t q = 0; q < reg_.size(); ++q) {
    layers_.push_back(sample_layer(static_cast<int>(q), reg_.params[q]));
  }
  weights_.assign(grid_.pixel_count(), 0);
  pixel_costs_.assign(grid_.pixel_count(), 0.0);
  for (int iy = 0; iy < grid_.height(); ++iy) {
    for (int ix = 0; ix < grid_.width(); ++ix) {
      int w = 0;
      pixel_costs_[pixel(ix, iy)] = pixel_cost(ix, iy, -1, std::nullopt, &w);
      weights_[pixel(ix, iy)] = w;
    }
  }
}

MosaicState::Layer MosaicState::sample_layer(int q, const MotionParams& params) const {
  const Raster& img = images_[q];
  const MotionParams to_panorama = invert(params);
  double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
  const double w = img.width() - 1;
  const double h = img.height() - 1;
  const Point o = img.origin();
  for (const Point c : {Point{o.x, o.y}, Point{o.x + w, o.y}, Point{o.x, o.y + h},
                        Point{o.x + w, o.y + h}}) {
    const Point p = map_point(to_panorama, c);
    lo_x = std::min(lo_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_x = std::max(hi_x, p.x);
    hi_y = std::max(hi_y, p.y);
  }
  // One extra pixel each side absorbs rounding at the footprint edge.
  auto clamp_x = [&](double v) { return static_cast<int>(std::clamp(v, 0.0, double(grid_.width()))); };
  auto clamp_y = [&](double v) { return static_cast<int>(std::clamp(v, 0.0, double(grid_.height()))); };
  Layer layer;
  layer.box = {clamp_x(std::floor(lo_x) - grid_.x_min - 1),
               clamp_y(std::floor(lo_y) - grid_.y_min - 1),
               clamp_x(std::ceil(hi_x) - grid_.x_min + 2),
               clamp_y(std::ceil(hi_y) - grid_.y_min + 2)};
  const int bw = std::max(layer.box.x1 - layer.box.x0, 0);
  const int bh = std::max(layer.box.y1 - layer.box.y0, 0);
  layer.box.x1 = layer.box.x0 + bw;
  layer.box.y1 = layer.box.y0 + bh;
  layer.values.assign(static_cast<std::size_t>(bw) * bh, 0.0);
  layer.valid.assign(static_cast<std::size_t>(bw) * bh, 0);
  for (int y = 0; y < bh; ++y) {
    for (int x = 0; x < bw; ++x) {
      const Point x0 = grid_.point(layer.box.x0 + x, layer.box.y0 + y);
      if (const auto s = sample_at(img, map_point(params, x0))) {
        const std::size_t k = static_cast<std::size_t>(y) * bw + x;
        layer.values[k] = *s;
        layer.valid[k] = 1;
      }
    }
  }
  return layer;
}

std::optional<double> MosaicState::layer_sample(const Layer& layer, int ix,
                                                int iy) const {
  if (ix < layer.box.x0 || ix >= layer.box.x1 || iy < layer.box.y0 ||
      iy >= layer.box.y1) {
    return std::nullopt;
  }
  const std::size_t k = static_cast<std::size_t>(iy - layer.box.y0) *
                            (layer.box.x1 - layer.box.x0) +
                        (ix - layer.box.x0);
  if (!layer.valid[k]) return std::nullopt;
  return layer.values[k];
}

double MosaicState::pixel_cost(int ix, int iy, int q,
                               std::optional<double> q_sample, int* weight) const {
  double samples[64];
  std::vector<double> overflow;
  int count = 0;
  auto push = [&](double v) {
    if (count < 64) {
      samples[count] = v;
    } else {
      if (overflow.empty()) overflow.assign(samples, samples + 64);
      overflow.push_back(v);
    }
    ++count;
  };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto s = static_cast<int>(i) == q ? q_sample : layer_sample(layers_[i], ix, iy);
    if (s) push(*s);
  }
  if (weight) *weight = count;
  if (count < 2) return 0.0;
  const double* a = count <= 64 ? samples : overflow.data();
  double acc = 0.0;
  for (int i = 0; i < count; ++i) {
    for (int j = i + 1; j < count; ++j) {
      const double e = a[i] - a[j];
      acc += e * e;
    }
  }
  return 2.0 * acc / count;
}

double MosaicState::cost() const {
  double total = 0.0;
  for (double c : pixel_costs_) total += c;
  return total;
}

PanoramaEstimate MosaicState::panorama() const {
  PanoramaEstimate pe{
      Raster(grid_.width(), grid_.height(), 0.0,
             Point{double(grid_.x_min), double(grid_.y_min)}),
      WeightMap{grid_.width(), grid_.height(), weights_}};
  for (int iy = 0; iy < grid_.height(); ++iy) {
    for (int ix = 0; ix < grid_.width(); ++ix) {
      double sum = 0.0;
      int w = 0;
      for (const Layer& layer : layers_) {
        if (const auto s = layer_sample(layer, ix, iy)) {
          sum += *s;
          ++w;
        }
      }
      if (w > 0) pe.image(ix, iy) = sum / w;
    }
  }
  return pe;
}

FrameSystem MosaicState::frame_system(int q) const {
  const MotionParams& theta = reg_.params[q];
  const int n = theta.dof();
  const GradientField& grad = gradients_[q];
  const Layer& own = layers_[q];
  FrameSystem sys{ParamMatrix::Zero(n, n), ParamVector::Zero(n), 0};
  Eigen::Vector2d g;
  for (int iy = own.box.y0; iy < own.box.y1; ++iy) {
    for (int ix = own.box.x0; ix < own.box.x1; ++ix) {
      const auto a_q = layer_sample(own, ix, iy);
      if (!a_q) continue;
      double sum = 0.0;
      int w = 0;
      for (const Layer& layer : layers_) {
        if (const auto s = layer_sample(layer, ix, iy)) {
          sum += *s;
          ++w;
        }
      }
      const double panorama_value = sum / w;
      const Point x0 = grid_.point(ix, iy);
      const Point warped = map_point(theta, x0);
      g << *sample_at(grad.gx, warped), *sample_at(grad.gy, warped);
      const ParamVector nabla = -(jacobian(theta, x0) * g);
      sys.gamma_matrix.noalias() += nabla * nabla.transpose();
      sys.gamma_vector += nabla * (panorama_value - *a_q);
      ++sys.pixels;
    }
  }
  return sys;
}

std::optional<MosaicState::Trial> MosaicState::try_params(
    int q, const MotionParams& candidate) const {
  if (!candidate.is_invertible()) return std::nullopt;
  Layer layer = sample_layer(q, candidate);
  const Layer& old = layers_[q];
  const PixelRect u{std::min(old.box.x0, layer.box.x0), std::min(old.box.y0, layer.box.y0),
                    std::max(old.box.x1, layer.box.x1), std::max(old.box.y1, layer.box.y1)};
  double delta = 0.0;
  for (int iy = u.y0; iy < u.y1; ++iy) {
    for (int ix = u.x0; ix < u.x1; ++ix) {
      const double c = pixel_cost(ix, iy, q, layer_sample(layer, ix, iy), nullptr);
      delta += c - pixel_costs_[pixel(ix, iy)];
    }
  }
  Trial t;
  t.frame = q;
  t.params = candidate;
  t.delta = delta;
  t.box = layer.box;
  t.values = std::move(layer.values);
  t.valid = std::move(layer.valid);
  return t;
}

void MosaicState::commit(Trial trial) {
  const int q = trial.frame;
  if (q == reg_.anchor) throw std::invalid_argument("the anchor frame is fixed");
  const PixelRect old_box = layers_[q].box;
  layers_[q] = Layer{trial.box, std::move(trial.values), std::move(trial.valid)};
  reg_.params[q] = trial.params;
  const PixelRect& nb = layers_[q].box;
  const PixelRect u{std::min(old_box.x0, nb.x0), std::min(old_box.y0, nb.y0),
                    std::max(old_box.x1, nb.x1), std::max(old_box.y1, nb.y1)};
  for (int iy = u.y0; iy < u.y1; ++iy) {
    for (int ix = u.x0; ix < u.x1; ++ix) {
      int w = 0;
      pixel_costs_[pixel(ix, iy)] = pixel_cost(ix, iy, -1, std::nullopt, &w);
      weights_[pixel(ix, iy)] = w;
    }
  }
}

// ---------------------------------------------------------------------------
// Initialisation

Registration chain_pairwise(std::span<const MotionParams> pairwise, int anchor) {
  const int n = static_cast<int>(pairwise.size()) + 1;
  if (anchor < 0 || anchor >= n) throw std::invalid_argument("anchor out of range");
  const ModelKind kind = pairwise.empty() ? ModelKind::Translation : pairwise[0].kind();
  Registration reg{kind, std::vector<MotionParams>(n, identity(kind)), anchor};
  for (int k = anchor; k + 1 < n; ++k) {
    reg.params[k + 1] = compose(pairwise[k], reg.params[k]);
  }
  for (int k = anchor - 1; k >= 0; --k) {
    reg.params[k] = compose(invert(pairwise[k]), reg.params[k + 1]);
  }
  return reg;
}

Registration sequential_init(std::span<const Raster> images, ModelKind kind,
                             const RegisterOptions& opts, int anchor) {
  if (images.empty()) throw std::invalid_argument("sequential_init: no images");
  if (images.size() == 1) return Registration{kind, {identity(kind)}, 0};
  std::vector<MotionParams> pairwise;
  pairwise.reserve(images.size() - 1);
  for (std::size_t k = 0; k + 1 < images.size(); ++k) {
    try {
      pairwise.push_back(
          register_pair(images[k], images[k + 1], identity(kind), opts).params);
    } catch (const RegistrationFailure& e) {
      throw SequentialInitError(static_cast<int>(k),
                                "registering frame " + std::to_string(k + 1) +
                                    " against frame " + std::to_string(k) +
                                    " failed: " + e.what());
    }
  }
  return chain_pairwise(pairwise, anchor);
}

Registration inject_offset(const Registration& reg, int frame, Point offset) {
  reg.validate();
  const int n = static_cast<int>(reg.size());
  if (frame <= reg.anchor || frame >= n) {
    throw std::invalid_argument("inject_offset: frame must follow the anchor");
  }
  const MotionParams shift =
      reg.kind == ModelKind::Translation
          ? MotionParams::translation(-offset.x, -offset.y)
          : MotionParams::affine(1, 0, 0, 1, -offset.x, -offset.y);
  Registration out = reg;
  for (int j = frame; j < n; ++j) out.params[j] = compose(reg.params[j], shift);
  return out;
}

// ---------------------------------------------------------------------------
// Frame systems

namespace {

std::vector<GradientField> gradients_of(std::span<const Raster> images) {
  std::vector<GradientField> grads;
  grads.reserve(images.size());
  for (const Raster& img : images) grads.push_back(spatial_gradient(img));
  return grads;
}

void check_frame(const Registration& reg, int q) {
  if (q < 0 || q >= static_cast<int>(reg.size())) {
    throw std::invalid_argument("frame index out of range");
  }
  if (q == reg.anchor) throw std::invalid_argument("the anchor frame is fixed");
}

}  // namespace

FrameSystem frame_system(std::span<const Raster> images, const Registration& reg,
                         int q, const RefGrid& grid) {
  check_frame(reg, q);
  const std::vector<GradientField> grads = gradients_of(images);
  const MosaicState state(images, grads, reg, grid);
  return state.frame_system(q);
}

FrameSystem frame_system_via_panorama(std::span<const Raster> images,
                                      const Registration& reg, int q,
                                      const RefGrid& grid) {
  check_frame(reg, q);
  const PanoramaEstimate pe = estimate_panorama(images, reg, grid);
  const NormalEquations ne = accumulate_normal_equations(
      pe.image, images[q], spatial_gradient(images[q]), reg.params[q],
      std::nullopt, pe.mask());
  return {ne.hessian, ne.rhs, ne.count};
}

ParamVector coordinate_update(std::span<const Raster> images,
                              const Registration& reg, int q,
                              const RefGrid& grid, double damping) {
  const FrameSystem sys = frame_system(images, reg, q, grid);
  if (sys.pixels == 0) {
    throw FrameUpdateError("frame " + std::to_string(q) +
                           " observes no panorama pixel");
  }
  NormalEquations ne{sys.gamma_matrix, sys.gamma_vector, 0.0, sys.pixels};
  try {
    return solve_normal_equations(ne, damping);
  } catch (const RegistrationFailure& e) {
    throw FrameUpdateError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Refinement

RefGrid refine_grid(std::span<const Raster> images, const Registration& reg,
                    const MlmOptions& opts) {
  int margin = opts.grid_margin;
  if (margin < 0) {
    int largest = 0;
    for (const Raster& img : images) largest = std::max({largest, img.width(), img.height()});
    margin = std::max(8, largest / 4);
  }
  return compute_bounds(images, reg, margin);
}

namespace {

RefGrid scale_grid(const RefGrid& g, int level) {
  const double s = std::ldexp(1.0, -level);
  return {static_cast<int>(std::floor(g.x_min * s)), static_cast<int>(std::floor(g.y_min * s)),
          static_cast<int>(std::ceil(g.x_max * s)), static_cast<int>(std::ceil(g.y_max * s))};
}

Registration rescale_all(const Registration& reg, double factor) {
  Registration out = reg;
  for (MotionParams& p : out.params) p = rescale(p, factor);
  return out;
}

}  // namespace

RefineResult refine(std::span<const Raster> images, const Registration& reg0,
                    const MlmOptions& opts) {
  opts.validate();
  reg0.validate();
  if (images.size() != reg0.size()) {
    throw std::invalid_argument("refine: image count does not match registration");
  }

  const RefGrid grid0 = refine_grid(images, reg0, opts);
  RefineResult result{reg0, {}};
  MlmTrace& trace = result.trace;
  const int n = static_cast<int>(images.size());

  std::vector<Pyramid> pyramids;
  int levels = opts.max_levels;
  for (const Raster& img : images) {
    pyramids.push_back(build_pyramid(img, opts.max_levels));
    levels = std::min(levels, static_cast<int>(pyramids.back().levels.size()));
  }

  double full_cost = ml_cost(images, reg0, grid0);
  trace.records.push_back({levels - 1, 0, full_cost, full_cost, 0.0, 0,
                           std::vector<double>(n, 0.0)});
  if (n == 1) {
    trace.level_termination.push_back(LevelTermination::SingleFrame);
    return result;
  }

  Registration reg = reg0;
  for (int level = levels - 1; level >= 0; --level) {
    trace.level_schedule.push_back(level);
    const double to_level = std::ldexp(1.0, -level);
    std::vector<Raster> level_images;
    for (const Pyramid& p : pyramids) level_images.push_back(p.levels[level]);
    const std::vector<GradientField> grads = gradients_of(level_images);
    const RefGrid grid = scale_grid(grid0, level);
    auto state = std::make_unique<MosaicState>(level_images, grads,
                                               rescale_all(reg, to_level), grid);

    LevelTermination why = LevelTermination::MaxSweeps;
    for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
      const Registration saved = state->registration();
      const double before = state->cost();
      double current = before;
      SweepRecord rec{level, sweep, 0.0, 0.0, 0.0, 0, std::vector<double>(n, 0.0)};
      int accepted = 0;

      for (int q = 0; q < n; ++q) {
        if (q == reg.anchor) continue;
        const FrameSystem sys = state->frame_system(q);
        if (sys.pixels == 0) {
          ++rec.frames_skipped;
          continue;
        }
        ParamVector step;
        try {
          step = solve_normal_equations({sys.gamma_matrix, sys.gamma_vector, 0.0, sys.pixels},
                                        opts.damping);
        } catch (const RegistrationFailure&) {
          ++rec.frames_skipped;
          continue;
        }
        const MotionParams theta = state->registration().params[q];
        for (int h = 0; h <= opts.max_step_halvings; ++h, step *= 0.5) {
          auto trial = state->try_params(q, theta.plus(step));
          if (trial && trial->delta < -1e-12 * current) {
            current += trial->delta;
            state->commit(std::move(*trial));
            rec.update_norms[q] = step.norm();
            ++accepted;
            break;
          }
        }
      }

      const double after = state->cost();
      const Registration full = rescale_all(state->registration(), 1.0 / to_level);
      const double candidate_full = ml_cost(images, full, grid0);
      if (candidate_full > full_cost) {
        state = std::make_unique<MosaicState>(level_images, grads, saved, grid);
        why = LevelTermination::CostIncrease;
        break;
      }
      full_cost = candidate_full;
      rec.ml_cost = full_cost;
      rec.level_cost = after;
      rec.max_update_norm = *std::max_element(rec.update_norms.begin(), rec.update_norms.end());
      trace.records.push_back(rec);

      if (accepted == 0) {
        why = LevelTermination::NoProgress;
        break;
      }
      if (before <= 0.0 || (before - after) / before < opts.sweep_tol) {
        why = LevelTermination::Converged;
        break;
      }
      if (rec.max_update_norm < opts.min_update_norm) {
        why = LevelTermination::SmallUpdates;
        break;
      }
    }
    trace.level_termination.push_back(why);
    reg = rescale_all(state->registration(), 1.0 / to_level);
  }

  // Rescaling leaves the anchor's identity untouched; restore it bit-exactly
  // regardless.
  reg.params[reg.anchor] = reg0.params[reg0.anchor];
  result.registration = std::move(reg);
  return result;
}

}  // namespace mlmosaic
