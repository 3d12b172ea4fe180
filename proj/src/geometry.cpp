#include "nvmag/geometry.hpp"

#include <algorithm>
#include <cstdlib>
#include <tuple>

#include "nvmag/errors.hpp"

namespace nvmag {

const std::array<Vec3, 4>& nv_axes() {
  static const std::array<Vec3, 4> axes = [] {
    const double s = 1.0 / std::sqrt(3.0);
    return std::array<Vec3, 4>{Vec3{s, s, s}, Vec3{s, -s, -s}, Vec3{-s, s, -s}, Vec3{-s, -s, s}};
  }();
  return axes;
}

RotationMatrix rotation_about_axis(const Vec3& axis, double angle) {
  const double n = norm(axis);
  if (!(std::fabs(n - 1.0) <= 1e-9)) throw ValidationError("rotation axis must be a unit vector");
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double t = 1.0 - c;
  const double x = axis.x, y = axis.y, z = axis.z;
  return RotationMatrix({c + x * x * t, x * y * t - z * s, x * z * t + y * s,  //
                         y * x * t + z * s, c + y * y * t, y * z * t - x * s,  //
                         z * x * t - y * s, z * y * t + x * s, c + z * z * t});
}

RotationMatrix orientation_matrix(double alpha, double beta, double zeta) {
  return rotation_about_axis(kAxis111, -zeta) * rotation_about_axis(kAxis1m10, -beta) *
         rotation_about_axis(kUnitZ, -alpha);
}

Orientation Orientation::from_angles(double alpha, double beta, double zeta) {
  return {alpha, beta, zeta, orientation_matrix(alpha, beta, zeta)};
}

EulerAngles decompose(const RotationMatrix& o) {
  // o^T * [111] = R_z(alpha) R_[1-10](beta) [111]: the [111] axis seen from
  // the lab sits at polar angle theta_c - beta and azimuth alpha + pi/4.
  const Vec3 v = o.transposed() * kAxis111;
  const double polar = std::atan2(std::hypot(v.x, v.y), v.z);
  EulerAngles e;
  e.beta = kThetaC - polar;
  if (polar < 1e-9) {
    const RotationMatrix rz = o.transposed() * rotation_about_axis(kAxis1m10, -kThetaC);
    e.beta = kThetaC;
    e.zeta = 0.0;
    e.alpha = wrap_angle(std::atan2(rz(1, 0), rz(0, 0)));
    return e;
  }
  e.alpha = wrap_angle(std::atan2(v.y, v.x) - 0.25 * kPi);
  // Remaining factor is R_[111](-zeta); read its angle off a vector normal to [111].
  const RotationMatrix q =
      o * rotation_about_axis(kUnitZ, e.alpha) * rotation_about_axis(kAxis1m10, e.beta);
  const Vec3 p = kAxis1m10;
  const Vec3 qp = q * p;
  e.zeta = wrap_angle(-std::atan2(dot(cross(kAxis111, p), qp), dot(p, qp)));
  return e;
}

bool in_fundamental_domain(const EulerAngles& e, double tol) {
  return e.alpha >= 0.0 && e.alpha < kTwoPi && e.beta >= -tol && e.beta <= kThetaC + tol &&
         e.zeta >= 0.0 && e.zeta < kZetaPeriod;
}

namespace {

std::vector<RotationMatrix> build_group() {
  const RotationMatrix c4z({0, -1, 0, 1, 0, 0, 0, 0, 1});
  const RotationMatrix c3_111({0, 0, 1, 1, 0, 0, 0, 1, 0});
  std::vector<RotationMatrix> group{RotationMatrix::identity()};
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (const auto& gen : {c4z, c3_111}) {
      const RotationMatrix next = gen * group[i];
      if (std::find(group.begin(), group.end(), next) == group.end()) group.push_back(next);
    }
  }
  return group;
}

}  // namespace

const std::vector<RotationMatrix>& symmetry_group() {
  static const std::vector<RotationMatrix> group = build_group();
  return group;
}

double rotation_angle(const RotationMatrix& r) {
  const Vec3 axis_sin{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
  return std::atan2(0.5 * norm(axis_sin), 0.5 * (r.trace() - 1.0));
}

double angular_distance(const RotationMatrix& a, const RotationMatrix& b) {
  return rotation_angle(a * b.transposed());
}

double symmetry_distance(const RotationMatrix& o1, const RotationMatrix& o2) {
  double best = kPi;
  for (const auto& g : symmetry_group()) best = std::min(best, angular_distance(o1, g * o2));
  return best;
}

bool orientations_equivalent(const RotationMatrix& o1, const RotationMatrix& o2, double tol) {
  return symmetry_distance(o1, o2) < tol;
}

namespace {

bool same_triple(const EulerAngles& a, const EulerAngles& b, double tol) {
  return std::fabs(periodic_delta(a.alpha, b.alpha, kTwoPi)) < tol &&
         std::fabs(a.beta - b.beta) < tol &&
         std::fabs(periodic_delta(a.zeta, b.zeta, kZetaPeriod)) < tol;
}

std::vector<Orientation> collect(const RotationMatrix& o, double beta_tol) {
  std::vector<Orientation> out;
  for (const auto& g : symmetry_group()) {
    const RotationMatrix m = g * o;
    EulerAngles e = decompose(m);
    if (!in_fundamental_domain(e, beta_tol)) continue;
    e.beta = std::clamp(e.beta, 0.0, kThetaC);
    const bool dup = std::any_of(out.begin(), out.end(), [&](const Orientation& r) {
      return same_triple(r.angles(), e, 1e-9);
    });
    if (!dup) out.push_back({e.alpha, e.beta, e.zeta, orientation_matrix(e.alpha, e.beta, e.zeta)});
  }
  return out;
}

}  // namespace

std::vector<Orientation> canonicalize(const RotationMatrix& o) {
  std::vector<Orientation> out = collect(o, 1e-12);
  // Orientations exactly on the beta = 0 boundary can round to just outside it.
  if (out.empty()) out = collect(o, 1e-9);
  std::sort(out.begin(), out.end(), [](const Orientation& a, const Orientation& b) {
    return std::tie(a.alpha, a.beta, a.zeta) < std::tie(b.alpha, b.beta, b.zeta);
  });
  return out;
}

RotationMatrix orientation_with_lab_z_along(const Vec3& crystal_direction) {
  const double n = norm(crystal_direction);
  if (!(n > 0.0)) throw ValidationError("crystal direction must be non-zero");
  const Vec3 d = crystal_direction / n;
  const Vec3 axis = cross(kUnitZ, d);
  const double s = norm(axis);
  const double angle = std::atan2(s, d.z);
  if (s < 1e-15) {
    return d.z > 0 ? RotationMatrix::identity() : rotation_about_axis({1, 0, 0}, kPi);
  }
  return rotation_about_axis(axis / s, angle);
}

}  // namespace nvmag
