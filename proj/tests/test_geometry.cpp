#include <random>

#include "doctest.h"
#include "nvmag/errors.hpp"
#include "nvmag/geometry.hpp"

using namespace nvmag;

namespace {

bool is_rotation(const RotationMatrix& r, double tol = 1e-10) {
  const RotationMatrix rtr = r.transposed() * r;
  return max_abs_diff(rtr, RotationMatrix::identity()) < tol && std::fabs(r.determinant() - 1.0) < tol;
}

RotationMatrix random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec3 axis = normalized(Vec3{n(rng), n(rng), n(rng)});
  std::uniform_real_distribution<double> a(0.0, kPi);
  return rotation_about_axis(axis, a(rng));
}

bool contains_up_to_sign(const Vec3& v) {
  for (const auto& n : nv_axes())
    if (norm(v - n) < 1e-12 || norm(v + n) < 1e-12) return true;
  return false;
}

}  // namespace

TEST_CASE("nv axes form a regular tetrahedron") {
  const auto& n = nv_axes();
  Vec3 sum;
  for (int i = 0; i < 4; ++i) {
    CHECK(norm(n[i]) == doctest::Approx(1.0).epsilon(1e-14));
    sum += n[i];
    for (int j = i + 1; j < 4; ++j) CHECK(dot(n[i], n[j]) == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));
  }
  CHECK(norm(sum) < 1e-15);
  const double s = 1.0 / std::sqrt(3.0);
  CHECK(norm(n[1] - Vec3{s, -s, -s}) < 1e-15);
  CHECK(norm(n[3] - Vec3{-s, -s, s}) < 1e-15);
}

TEST_CASE("rotation about axis") {
  const Vec3 r = rotation_about_axis(kUnitZ, kPi / 2) * Vec3{1, 0, 0};
  CHECK(norm(r - Vec3{0, 1, 0}) < 1e-15);
  CHECK(max_abs_diff(rotation_about_axis(kUnitZ, 0.0), RotationMatrix::identity()) == 0.0);

  const RotationMatrix c3 = rotation_about_axis(kAxis111, 2 * kPi / 3);
  CHECK(norm(c3 * Vec3{1, 0, 0} - Vec3{0, 1, 0}) < 1e-15);
  CHECK(norm(c3 * Vec3{0, 1, 0} - Vec3{0, 0, 1}) < 1e-15);
  CHECK(norm(c3 * kAxis111 - kAxis111) < 1e-15);

  CHECK_THROWS_AS(rotation_about_axis({1, 1, 0}, 0.1), ValidationError);
}

TEST_CASE("orientation matrix") {
  CHECK(max_abs_diff(orientation_matrix(0, 0, 0), RotationMatrix::identity()) < 1e-15);
  const Vec3 z = orientation_matrix(1.234, 0, 0) * kUnitZ;
  CHECK(norm(z - kUnitZ) < 1e-15);
  const Vec3 tilted = orientation_matrix(0, kThetaC, 0) * kUnitZ;
  CHECK(std::acos(dot(tilted, kUnitZ)) == doctest::Approx(kThetaC).epsilon(1e-12));
  CHECK(kThetaC == std::acos(1.0 / std::sqrt(3.0)));

  const RotationMatrix o = orientation_matrix(4.0, 0.3, 1.0);
  CHECK(is_rotation(o));
  const RotationMatrix by_hand = rotation_about_axis(kAxis111, -1.0) * rotation_about_axis(kAxis1m10, -0.3) *
                                 rotation_about_axis(kUnitZ, -4.0);
  CHECK(max_abs_diff(o, by_hand) < 1e-15);
  const Orientation ori = Orientation::from_angles(4.0, 0.3, 1.0);
  CHECK(max_abs_diff(ori.matrix, o) < 1e-12);
}

TEST_CASE("symmetry group axioms") {
  const auto& g = symmetry_group();
  REQUIRE(g.size() == 24);
  CHECK(g[0] == RotationMatrix::identity());
  for (const auto& a : g) {
    CHECK(std::fabs(a.determinant() - 1.0) < 1e-15);
    for (int r = 0; r < 3; ++r) {
      int nonzero = 0;
      for (int c = 0; c < 3; ++c) {
        const double v = a(r, c);
        CHECK((v == 0.0 || v == 1.0 || v == -1.0));
        nonzero += v != 0.0;
      }
      CHECK(nonzero == 1);
    }
    CHECK(std::find(g.begin(), g.end(), a.transposed()) != g.end());
    for (const auto& b : g) CHECK(std::find(g.begin(), g.end(), a * b) != g.end());
    for (const auto& n : nv_axes()) CHECK(contains_up_to_sign(a * n));
  }
}

TEST_CASE("group preserves the projection multiset") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5e-3, 5e-3);
  for (int t = 0; t < 100; ++t) {
    const Vec3 b{u(rng), u(rng), u(rng)};
    std::vector<double> ref;
    for (const auto& n : nv_axes()) ref.push_back(std::fabs(dot(b, n)));
    std::sort(ref.begin(), ref.end());
    for (const auto& g : symmetry_group()) {
      std::vector<double> got;
      for (const auto& n : nv_axes()) got.push_back(std::fabs(dot(g * b, n)));
      std::sort(got.begin(), got.end());
      for (int i = 0; i < 4; ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("equivalence of orientations") {
  const RotationMatrix o = orientation_matrix(1.0, 0.2, 0.5);
  CHECK(orientations_equivalent(o, o, 1e-12));
  for (const auto& g : symmetry_group()) CHECK(orientations_equivalent(o, g * o, 1e-9));

  const RotationMatrix first = orientation_matrix(4.7587, 0.2342, 0.4775);
  const RotationMatrix twin = orientation_matrix(0.6832, 0.2705, 1.6452);
  CHECK(orientations_equivalent(first, twin, 5e-3));
  CHECK(symmetry_distance(first, twin) < 1e-4);

  CHECK_FALSE(orientations_equivalent(RotationMatrix::identity(), rotation_about_axis(kUnitZ, 0.3), 1e-6));
  CHECK(symmetry_distance(RotationMatrix::identity(), rotation_about_axis(kUnitZ, 0.3)) ==
        doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("decompose inverts orientation_matrix in the interior") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ua(0.0, kTwoPi), ub(1e-3, kThetaC - 1e-3), uz(0.0, kZetaPeriod);
  for (int t = 0; t < 1000; ++t) {
    const double a = ua(rng), b = ub(rng), z = uz(rng);
    const EulerAngles e = decompose(orientation_matrix(a, b, z));
    CHECK(std::fabs(periodic_delta(e.alpha, a, kTwoPi)) < 1e-9);
    CHECK(std::fabs(e.beta - b) < 1e-9);
    CHECK(std::fabs(periodic_delta(e.zeta, z, kTwoPi)) < 1e-9);
  }
}

TEST_CASE("decompose at the pole folds the rotation into alpha") {
  const RotationMatrix o = orientation_matrix(0.4, kThetaC, 0.7);
  const EulerAngles e = decompose(o);
  CHECK(e.zeta == 0.0);
  CHECK(e.beta == doctest::Approx(kThetaC));
  CHECK(max_abs_diff(orientation_matrix(e.alpha, e.beta, e.zeta), o) < 1e-9);
}

TEST_CASE("canonicalize") {
  const auto id = canonicalize(RotationMatrix::identity());
  REQUIRE_FALSE(id.empty());
  CHECK(std::any_of(id.begin(), id.end(), [](const Orientation& o) {
    return std::fabs(o.alpha) < 1e-12 && std::fabs(o.beta) < 1e-12 && std::fabs(o.zeta) < 1e-12;
  }));

  const auto reps = canonicalize(orientation_matrix(4.7587, 0.2342, 0.4775));
  REQUIRE(reps.size() == 2);
  auto near = [&](double a, double b, double z) {
    return std::any_of(reps.begin(), reps.end(), [&](const Orientation& o) {
      return std::fabs(periodic_delta(o.alpha, a, kTwoPi)) < 5e-3 && std::fabs(o.beta - b) < 5e-3 &&
             std::fabs(periodic_delta(o.zeta, z, kZetaPeriod)) < 5e-3;
    });
  };
  CHECK(near(4.7587, 0.2342, 0.4775));
  CHECK(near(0.6832, 0.2705, 1.6452));
}

TEST_CASE("canonical representatives recompose to group images") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    const RotationMatrix o = random_rotation(rng);
    const auto reps = canonicalize(o);
    REQUIRE_FALSE(reps.empty());
    for (const auto& r : reps) {
      CHECK(in_fundamental_domain(r.angles()));
      const RotationMatrix m = orientation_matrix(r.alpha, r.beta, r.zeta);
      double best = 1e9;
      for (const auto& g : symmetry_group()) best = std::min(best, max_abs_diff(m, g * o));
      CHECK(best < 1e-9);
    }
    // idempotent modulo the group
    const auto again = canonicalize(reps.front().matrix);
    REQUIRE(again.size() == reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i) CHECK(max_abs_diff(again[i].matrix, reps[i].matrix) < 1e-9);
  }
}

TEST_CASE("lab z along a crystal direction") {
  for (const Vec3 d : {Vec3{1, 0, 0}, Vec3{1, 1, 0}, Vec3{1, 1, 1}, Vec3{1, 2, 3}, Vec3{0, 0, -1}}) {
    const RotationMatrix o = orientation_with_lab_z_along(d);
    CHECK(is_rotation(o));
    CHECK(norm(o * kUnitZ - normalized(d)) < 1e-14);
  }
}
