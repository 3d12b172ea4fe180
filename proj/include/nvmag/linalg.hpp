#pragma once

#include <array>
#include <cmath>
#include <ostream>

namespace nvmag {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
constexpr Vec3 operator/(const Vec3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) { return a / norm(a); }

inline std::ostream& operator<<(std::ostream& os, const Vec3& v) {
  return os << '(' << v.x << ", " << v.y << ", " << v.z << ')';
}

/// Row-major 3x3 matrix. Used for rotations (lab <-> sample frames) and for
/// the signed permutation matrices of the symmetry group.
class Mat3 {
 public:
  constexpr Mat3() = default;
  constexpr explicit Mat3(const std::array<double, 9>& a) : a_(a) {}

  static constexpr Mat3 identity() { return Mat3({1, 0, 0, 0, 1, 0, 0, 0, 1}); }
  static constexpr Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
    return Mat3({r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z});
  }

  constexpr double operator()(int r, int c) const { return a_[3 * r + c]; }
  constexpr double& operator()(int r, int c) { return a_[3 * r + c]; }
  constexpr const std::array<double, 9>& data() const { return a_; }

  constexpr Vec3 row(int r) const { return {a_[3 * r], a_[3 * r + 1], a_[3 * r + 2]}; }
  constexpr Vec3 col(int c) const { return {a_[c], a_[3 + c], a_[6 + c]}; }

  constexpr Mat3 transposed() const {
    return Mat3({a_[0], a_[3], a_[6], a_[1], a_[4], a_[7], a_[2], a_[5], a_[8]});
  }
  constexpr double trace() const { return a_[0] + a_[4] + a_[8]; }
  constexpr double determinant() const {
    return a_[0] * (a_[4] * a_[8] - a_[5] * a_[7]) - a_[1] * (a_[3] * a_[8] - a_[5] * a_[6]) +
           a_[2] * (a_[3] * a_[7] - a_[4] * a_[6]);
  }

  friend constexpr Vec3 operator*(const Mat3& m, const Vec3& v) {
    return {m.a_[0] * v.x + m.a_[1] * v.y + m.a_[2] * v.z,
            m.a_[3] * v.x + m.a_[4] * v.y + m.a_[5] * v.z,
            m.a_[6] * v.x + m.a_[7] * v.y + m.a_[8] * v.z};
  }
  friend constexpr Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c) + a(r, 2) * b(2, c);
    return out;
  }
  friend constexpr bool operator==(const Mat3&, const Mat3&) = default;

 private:
  std::array<double, 9> a_{};
};

/// Largest absolute elementwise difference.
inline double max_abs_diff(const Mat3& a, const Mat3& b) {
  double m = 0.0;
  for (int i = 0; i < 9; ++i) m = std::fmax(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

using RotationMatrix = Mat3;

/// Wrap an angle into [lo, lo + period).
inline double wrap_angle(double a, double period = kTwoPi, double lo = 0.0) {
  double r = std::fmod(a - lo, period);
  if (r < 0) r += period;
  if (r >= period) r -= period;
  return lo + r;
}

/// Signed difference a - b reduced to [-period/2, period/2).
inline double periodic_delta(double a, double b, double period) {
  return wrap_angle(a - b, period, -0.5 * period);
}

inline constexpr double deg_to_rad(double d) { return d * kPi / 180.0; }
inline constexpr double rad_to_deg(double r) { return r * 180.0 / kPi; }

}  // namespace nvmag
