#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string_view>

#include <Eigen/Core>

#include "mlmosaic/raster.hpp"

namespace mlmosaic {

enum class ModelKind { Translation, Affine };

constexpr int dof(ModelKind kind) { return kind == ModelKind::Translation ? 2 : 6; }

std::string_view to_string(ModelKind kind);
// Accepts "translation" / "affine" (case-insensitive).
ModelKind parse_model_kind(std::string_view name);

inline constexpr int kMaxDof = 6;
inline constexpr double kDeterminantFloor = 1e-6;

using ParamVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDof, 1>;
using ParamMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDof, kMaxDof>;
/// d m / d theta, one row per parameter, columns (x, y).
using MotionJacobian = Eigen::Matrix<double, Eigen::Dynamic, 2, 0, kMaxDof, 2>;

class SingularMotionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Panorama-to-image mapping m(theta; x0) = A x0 + t.
///
/// Translation stores (tx, ty) with A = I. Affine stores
/// (a11, a12, a21, a22, tx, ty). This ordering is also the serialized one.
class MotionParams {
 public:
  MotionParams() : MotionParams(ModelKind::Translation) {}
  explicit MotionParams(ModelKind kind);

  static MotionParams translation(double tx, double ty);
  static MotionParams affine(double a11, double a12, double a21, double a22,
                             double tx, double ty);
  /// Throws std::invalid_argument when theta.size() != dof(kind).
  static MotionParams from_theta(ModelKind kind, std::span<const double> theta);

  ModelKind kind() const { return kind_; }
  int dof() const { return mlmosaic::dof(kind_); }
  std::span<const double> theta() const { return {values_.data(), static_cast<std::size_t>(dof())}; }
  double operator[](int k) const { return values_[k]; }
  ParamVector vector() const;

  double a11() const { return kind_ == ModelKind::Affine ? values_[0] : 1.0; }
  double a12() const { return kind_ == ModelKind::Affine ? values_[1] : 0.0; }
  double a21() const { return kind_ == ModelKind::Affine ? values_[2] : 0.0; }
  double a22() const { return kind_ == ModelKind::Affine ? values_[3] : 1.0; }
  double tx() const { return values_[kind_ == ModelKind::Affine ? 4 : 0]; }
  double ty() const { return values_[kind_ == ModelKind::Affine ? 5 : 1]; }

  double determinant() const { return a11() * a22() - a12() * a21(); }
  bool is_invertible() const;

  /// theta + delta, delta in the same parameter order.
  MotionParams plus(const ParamVector& delta) const;

  friend bool operator==(const MotionParams&, const MotionParams&) = default;

 private:
  ModelKind kind_;
  std::array<double, kMaxDof> values_{};
};

MotionParams identity(ModelKind kind);

inline Point map_point(const MotionParams& p, Point x0) {
  return {p.a11() * x0.x + p.a12() * x0.y + p.tx(),
          p.a21() * x0.x + p.a22() * x0.y + p.ty()};
}

MotionJacobian jacobian(const MotionParams& p, Point x0);

/// Writes -(d m / d theta) . g for an image gradient g = (gx, gy) sampled at
/// m(theta; x0). Equivalent to -jacobian(p, x0) * g without building the
/// matrix; used in the per-pixel accumulation loops.
inline void residual_gradient(ModelKind kind, Point x0, double gx, double gy,
                              double* out) {
  if (kind == ModelKind::Translation) {
    out[0] = -gx;
    out[1] = -gy;
  } else {
    out[0] = -x0.x * gx;
    out[1] = -x0.y * gx;
    out[2] = -x0.x * gy;
    out[3] = -x0.y * gy;
    out[4] = -gx;
    out[5] = -gy;
  }
}

/// map_point(result, x) == map_point(outer, map_point(inner, x)).
MotionParams compose(const MotionParams& outer, const MotionParams& inner);

/// Throws SingularMotionError when |det A| < kDeterminantFloor.
MotionParams invert(const MotionParams& p);

/// Expresses p in coordinates scaled by `factor` (2 = coarse to fine):
/// map_point(rescale(p, s), s * x) == s * map_point(p, x).
MotionParams rescale(const MotionParams& p, double factor);

/// Converts between kinds. Affine to translation requires A == I.
MotionParams convert(const MotionParams& p, ModelKind kind);

}  // namespace mlmosaic
