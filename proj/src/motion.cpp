#include "mlmosaic/motion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace mlmosaic {

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::Translation ? "translation" : "affine";
}

ModelKind parse_model_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "translation") return ModelKind::Translation;
  if (lower == "affine") return ModelKind::Affine;
  throw std::invalid_argument("unknown motion model '" + std::string(name) + "'");
}

MotionParams::MotionParams(ModelKind kind) : kind_(kind) {
  if (kind == ModelKind::Affine) {
    values_[0] = 1.0;
    values_[3] = 1.0;
  }
}

MotionParams MotionParams::translation(double tx, double ty) {
  MotionParams p(ModelKind::Translation);
  p.values_[0] = tx;
  p.values_[1] = ty;
  return p;
}

MotionParams MotionParams::affine(double a11, double a12, double a21,
                                  double a22, double tx, double ty) {
  MotionParams p(ModelKind::Affine);
  p.values_ = {a11, a12, a21, a22, tx, ty};
  return p;
}

MotionParams MotionParams::from_theta(ModelKind kind,
                                      std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != mlmosaic::dof(kind)) {
    throw std::invalid_argument(
        "theta length " + std::to_string(theta.size()) + " does not match " +
        std::string(to_string(kind)) + " model");
  }
  MotionParams p(kind);
  std::copy(theta.begin(), theta.end(), p.values_.begin());
  return p;
}

ParamVector MotionParams::vector() const {
  ParamVector v(dof());
  for (int k = 0; k < dof(); ++k) v[k] = values_[k];
  return v;
}

bool MotionParams::is_invertible() const {
  return std::abs(determinant()) >= kDeterminantFloor;
}

MotionParams MotionParams::plus(const ParamVector& delta) const {
  if (delta.size() != dof()) {
    throw std::invalid_argument("update length does not match model");
  }
  MotionParams p = *this;
  for (int k = 0; k < dof(); ++k) p.values_[k] += delta[k];
  return p;
}

MotionParams identity(ModelKind kind) { return MotionParams(kind); }

MotionJacobian jacobian(const MotionParams& p, Point x0) {
  MotionJacobian j = MotionJacobian::Zero(p.dof(), 2);
  if (p.kind() == ModelKind::Translation) {
    j(0, 0) = 1.0;
    j(1, 1) = 1.0;
  } else {
    j(0, 0) = x0.x;
    j(1, 0) = x0.y;
    j(2, 1) = x0.x;
    j(3, 1) = x0.y;
    j(4, 0) = 1.0;
    j(5, 1) = 1.0;
  }
  return j;
}

MotionParams compose(const MotionParams& outer, const MotionParams& inner) {
  if (outer.kind() != inner.kind()) {
    throw std::invalid_argument("compose: motion model kinds differ");
  }
  if (outer.kind() == ModelKind::Translation) {
    return MotionParams::translation(outer.tx() + inner.tx(),
                                     outer.ty() + inner.ty());
  }
  return MotionParams::affine(
      outer.a11() * inner.a11() + outer.a12() * inner.a21(),
      outer.a11() * inner.a12() + outer.a12() * inner.a22(),
      outer.a21() * inner.a11() + outer.a22() * inner.a21(),
      outer.a21() * inner.a12() + outer.a22() * inner.a22(),
      outer.a11() * inner.tx() + outer.a12() * inner.ty() + outer.tx(),
      outer.a21() * inner.tx() + outer.a22() * inner.ty() + outer.ty());
}

MotionParams invert(const MotionParams& p) {
  if (p.kind() == ModelKind::Translation) {
    return MotionParams::translation(-p.tx(), -p.ty());
  }
  if (!p.is_invertible()) {
    throw SingularMotionError("invert: singular linear part (det = " +
                              std::to_string(p.determinant()) + ")");
  }
  const double det = p.determinant();
  const double b11 = p.a22() / det;
  const double b12 = -p.a12() / det;
  const double b21 = -p.a21() / det;
  const double b22 = p.a11() / det;
  return MotionParams::affine(b11, b12, b21, b22,
                              -(b11 * p.tx() + b12 * p.ty()),
                              -(b21 * p.tx() + b22 * p.ty()));
}

MotionParams rescale(const MotionParams& p, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("rescale: factor must be > 0");
  if (p.kind() == ModelKind::Translation) {
    return MotionParams::translation(p.tx() * factor, p.ty() * factor);
  }
  return MotionParams::affine(p.a11(), p.a12(), p.a21(), p.a22(),
                              p.tx() * factor, p.ty() * factor);
}

MotionParams convert(const MotionParams& p, ModelKind kind) {
  if (p.kind() == kind) return p;
  if (kind == ModelKind::Affine) {
    return MotionParams::affine(1.0, 0.0, 0.0, 1.0, p.tx(), p.ty());
  }
  if (p.a11() != 1.0 || p.a12() != 0.0 || p.a21() != 0.0 || p.a22() != 1.0) {
    throw std::invalid_argument("convert: affine with non-identity linear part");
  }
  return MotionParams::translation(p.tx(), p.ty());
}

}  // namespace mlmosaic
