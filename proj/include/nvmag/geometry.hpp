#pragma once

// Crystal geometry of the NV ensemble: the four NV axes, the Euler-like
// orientation parameterization of the lab -> sample rotation, and the
// 24-element rotation group that leaves the PL response unchanged.

#include <array>
#include <cmath>
#include <vector>

#include "nvmag/linalg.hpp"

namespace nvmag {

/// Angle between [111] and a cube axis; upper bound of the beta domain.
inline const double kThetaC = std::acos(1.0 / std::sqrt(3.0));
/// Period of the zeta angle in the reduced domain.
inline constexpr double kZetaPeriod = kTwoPi / 3.0;

/// Fixed rotation axes of the orientation parameterization.
inline const Vec3 kAxis111 = Vec3{1, 1, 1} / std::sqrt(3.0);
inline const Vec3 kAxis1m10 = Vec3{1, -1, 0} / std::sqrt(2.0);
inline constexpr Vec3 kUnitZ{0, 0, 1};

/// The four NV axes in the sample frame, in fixed order:
/// (1,1,1), (1,-1,-1), (-1,1,-1), (-1,-1,1), each divided by sqrt(3).
const std::array<Vec3, 4>& nv_axes();

/// Right-handed rotation by `angle` about the unit vector `axis`
/// (Rodrigues). Throws ValidationError if |axis| deviates from 1 by > 1e-9.
RotationMatrix rotation_about_axis(const Vec3& axis, double angle);

/// O = R_[111](-zeta) * R_[1-10](-beta) * R_z(-alpha), all axes fixed vectors.
RotationMatrix orientation_matrix(double alpha, double beta, double zeta);

struct EulerAngles {
  double alpha = 0.0;
  double beta = 0.0;
  double zeta = 0.0;
};

/// Point in the reduced orientation domain together with its matrix.
struct Orientation {
  double alpha = 0.0;  // [0, 2pi)
  double beta = 0.0;   // [0, theta_c]
  double zeta = 0.0;   // [0, 2pi/3)
  RotationMatrix matrix = RotationMatrix::identity();

  static Orientation from_angles(double alpha, double beta, double zeta);
  EulerAngles angles() const { return {alpha, beta, zeta}; }
};

/// Inverse of orientation_matrix on the branch beta <= theta_c.
/// alpha and zeta are returned in [0, 2pi). At the pole (beta within 1e-9 of
/// theta_c, where the [111] axis lines up with lab z) zeta is set to 0 and
/// the whole rotation about z is carried by alpha.
EulerAngles decompose(const RotationMatrix& o);

bool in_fundamental_domain(const EulerAngles& e, double tol = 0.0);

/// The proper rotations among signed permutation matrices, generated by
/// closure from the 4-fold z and 3-fold [111] rotations. Identity first.
const std::vector<RotationMatrix>& symmetry_group();

/// Rotation angle of R in [0, pi].
double rotation_angle(const RotationMatrix& r);

/// Rotation angle of a * b^T.
double angular_distance(const RotationMatrix& a, const RotationMatrix& b);

/// Smallest angular distance between o1 and g*o2 over the symmetry group.
double symmetry_distance(const RotationMatrix& o1, const RotationMatrix& o2);

/// True iff some group element g has angular_distance(o1, g*o2) < tol.
bool orientations_equivalent(const RotationMatrix& o1, const RotationMatrix& o2, double tol);

/// All representatives of the symmetry orbit of `o` that fall inside the
/// reduced domain, deduplicated at 1e-9 and sorted by (alpha, beta, zeta).
std::vector<Orientation> canonicalize(const RotationMatrix& o);

/// Minimal rotation O with O * u_z = normalized(crystal_direction), i.e. the
/// lab z axis points along the given crystal direction.
RotationMatrix orientation_with_lab_z_along(const Vec3& crystal_direction);

}  // namespace nvmag
