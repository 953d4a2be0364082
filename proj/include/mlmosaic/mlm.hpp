#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "mlmosaic/motion.hpp"
#include "mlmosaic/panorama.hpp"
#include "mlmosaic/raster.hpp"
#include "mlmosaic/two_frame.hpp"

namespace mlmosaic {

struct MlmOptions {
  int max_sweeps = 20;
  double sweep_tol = 1e-5;  // relative cost decrease over one sweep
  double damping = 1e-6;
  int max_levels = 3;
  double min_update_norm = 1e-4;
  int max_step_halvings = 8;
  int grid_margin = -1;  // < 0: a quarter of the largest frame dimension

  void validate() const;
};

enum class LevelTermination {
  Converged,         // relative decrease below sweep_tol
  SmallUpdates,      // every accepted update below min_update_norm
  MaxSweeps,
  NoProgress,        // no frame update was accepted in a sweep
  CostIncrease,      // sweep raised the full-resolution cost; reverted
  SingleFrame,
};

std::string_view to_string(LevelTermination t);

struct SweepRecord {
  int level = 0;
  int sweep = 0;       // 0 is the initial state
  double ml_cost = 0;  // full-resolution cost of the current parameters
  double level_cost = 0;
  double max_update_norm = 0;
  int frames_skipped = 0;
  std::vector<double> update_norms;  // accepted step norm per frame
};

struct MlmTrace {
  std::vector<SweepRecord> records;
  std::vector<int> level_schedule;
  std::vector<LevelTermination> level_termination;
};

class FrameUpdateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SequentialInitError : public RegistrationFailure {
 public:
  SequentialInitError(int pair_index, const std::string& what)
      : RegistrationFailure(what), pair_index_(pair_index) {}
  /// Registration of frame pair_index + 1 against frame pair_index failed.
  int pair_index() const { return pair_index_; }

 private:
  int pair_index_;
};

/// Gauss-Newton system for one frame: Gamma delta + gamma = 0.
struct FrameSystem {
  ParamMatrix gamma_matrix;
  ParamVector gamma_vector;
  int pixels = 0;
};

/// Per-grid-pixel bookkeeping of every frame's samples, the weight map and
/// the per-pixel pairwise cost. Changing one frame only touches the pixels
/// of its old and new footprints.
///
/// Holds non-owning views of the images and gradients; they must outlive
/// the state.
class MosaicState {
 public:
  struct Trial {
    int frame = 0;
    MotionParams params;
    double delta = 0.0;  // change of the total cost if committed
   private:
    friend class MosaicState;
    PixelRect box;
    std::vector<double> values;
    std::vector<std::uint8_t> valid;
  };

  MosaicState(std::span<const Raster> images,
              std::span<const GradientField> gradients, Registration reg,
              RefGrid grid);

  const Registration& registration() const { return reg_; }
  const RefGrid& grid() const { return grid_; }

  /// Sum of per-pixel costs; equals ml_cost on the same grid.
  double cost() const;
  int weight(int ix, int iy) const { return weights_[pixel(ix, iy)]; }
  PanoramaEstimate panorama() const;

  /// Gamma and gamma of the frozen-W linearisation for frame q.
  FrameSystem frame_system(int q) const;

  /// Cost change of replacing frame q's parameters; nullopt when the
  /// candidate is singular.
  std::optional<Trial> try_params(int q, const MotionParams& candidate) const;
  void commit(Trial trial);

 private:
  struct Layer {
    PixelRect box;  // grid-index rectangle containing the footprint
    std::vector<double> values;
    std::vector<std::uint8_t> valid;
  };

  std::size_t pixel(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * grid_.width() + ix;
  }
  Layer sample_layer(int q, const MotionParams& params) const;
  std::optional<double> layer_sample(const Layer& layer, int ix, int iy) const;
  // Pairwise cost at one pixel with frame `q` replaced by `q_sample`
  // (q < 0: no replacement).
  double pixel_cost(int ix, int iy, int q, std::optional<double> q_sample,
                    int* weight) const;

  std::span<const Raster> images_;
  std::span<const GradientField> gradients_;
  Registration reg_;
  RefGrid grid_;
  std::vector<Layer> layers_;
  std::vector<int> weights_;
  std::vector<double> pixel_costs_;
};

/// Chains consecutive pairwise results (pairwise[k] maps frame k
/// coordinates to frame k+1 coordinates) into anchor-relative parameters.
Registration chain_pairwise(std::span<const MotionParams> pairwise,
                            int anchor = 0);

/// Registers consecutive frames with register_pair from the identity and
/// chains the results. Throws SequentialInitError on the first failure.
Registration sequential_init(std::span<const Raster> images, ModelKind kind,
                             const RegisterOptions& opts = {}, int anchor = 0);

/// Moves the footprints of frames frame..n-1 by `offset` panorama pixels,
/// which is what adding a translation to the pairwise result between
/// frames frame-1 and frame does to the chained parameters.
Registration inject_offset(const Registration& reg, int frame, Point offset);

/// Gamma/gamma from the weight-averaged panorama (frozen W).
FrameSystem frame_system(std::span<const Raster> images, const Registration& reg,
                         int q, const RefGrid& grid);

/// The same system obtained by aligning the panorama estimate with frame q
/// through the two-frame accumulation (E_0q = P - I_q).
FrameSystem frame_system_via_panorama(std::span<const Raster> images,
                                      const Registration& reg, int q,
                                      const RefGrid& grid);

/// Solves (Gamma + damping I) delta = -gamma for frame q. Throws
/// std::invalid_argument for the anchor and FrameUpdateError when frame q
/// observes no grid pixel.
ParamVector coordinate_update(std::span<const Raster> images,
                              const Registration& reg, int q,
                              const RefGrid& grid, double damping = 1e-6);

struct RefineResult {
  Registration registration;
  MlmTrace trace;
};

/// Coarse-to-fine cyclic coordinatewise refinement of every non-anchor
/// frame. The recorded full-resolution cost never increases.
RefineResult refine(std::span<const Raster> images, const Registration& reg0,
                    const MlmOptions& opts = {});

/// Grid used by refine at full resolution.
RefGrid refine_grid(std::span<const Raster> images, const Registration& reg,
                    const MlmOptions& opts);

}  // namespace mlmosaic
