#include <chrono>
#include <random>

#include "doctest.h"
#include "nvmag/errors.hpp"
#include "nvmag/forward_model.hpp"
#include "nvmag/geometry.hpp"
#include "nvmag/spin_oracle.hpp"

using namespace nvmag;

namespace {

const SpinConstants kConsts;

double e_plus_gap(const Vec3& b, int i, int j) {
  const auto& n = nv_axes();
  return transition_energies(b, n[i]).e_plus - transition_energies(b, n[j]).e_plus;
}

}  // namespace

TEST_CASE("hamiltonian matrix elements") {
  const double d = kConsts.zero_field_splitting, g = kConsts.gyromagnetic;
  const auto h0 = hamiltonian_in_nv_frame(0.0, 0.0);
  CHECK(h0[0][0].real() == d);
  CHECK(h0[1][1].real() == 0.0);
  CHECK(h0[2][2].real() == d);
  CHECK(std::abs(h0[0][1]) == 0.0);

  const double b = 1e-3;
  const auto hz = hamiltonian_in_nv_frame(b, 0.0);
  CHECK(hz[0][0].real() == doctest::Approx(d + g * b));
  CHECK(hz[2][2].real() == doctest::Approx(d - g * b));

  const auto hx = hamiltonian_in_nv_frame(0.3e-3, 1.7e-3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(std::abs(hx[r][c] - std::conj(hx[c][r])) < 1e-15);
}

TEST_CASE("eigenvalues against closed forms") {
  const double d = kConsts.zero_field_splitting, g = kConsts.gyromagnetic;
  auto e = hermitian_eigenvalues(hamiltonian_in_nv_frame(0.0, 0.0));
  CHECK(e[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(e[1] == doctest::Approx(d).epsilon(1e-14));
  CHECK(e[2] == doctest::Approx(d).epsilon(1e-14));

  // purely transverse: |+1> - |-1> decouples at D, the rest is a 2x2 block
  const double bt = 2e-3;
  e = hermitian_eigenvalues(hamiltonian_in_nv_frame(0.0, bt));
  const double x = g * bt;
  const double disc = std::sqrt(d * d + 4.0 * x * x);
  CHECK(e[0] == doctest::Approx(0.5 * (d - disc)).epsilon(1e-12));
  CHECK(e[1] == doctest::Approx(d).epsilon(1e-14));
  CHECK(e[2] == doctest::Approx(0.5 * (d + disc)).epsilon(1e-14));
  const auto em = hermitian_eigenvalues(hamiltonian_in_nv_frame(0.0, -bt));
  for (int i = 0; i < 3; ++i) CHECK(em[i] == doctest::Approx(e[i]).epsilon(1e-14));

  // complex entries go through the same embedding
  Hermitian3 h{};
  h[0][0] = 1.0;
  h[1][1] = 2.0;
  h[2][2] = 3.0;
  h[0][1] = {0.0, 0.5};
  h[1][0] = {0.0, -0.5};
  e = hermitian_eigenvalues(h);
  CHECK(e[0] == doctest::Approx(1.5 - std::sqrt(0.5)));
  CHECK(e[1] == doctest::Approx(1.5 + std::sqrt(0.5)));
  CHECK(e[2] == doctest::Approx(3.0));
}

TEST_CASE("trace and inversion") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-5e-3, 5e-3);
  for (int t = 0; t < 500; ++t) {
    const double bp = u(rng), bt = std::fabs(u(rng));
    const auto e = hermitian_eigenvalues(hamiltonian_in_nv_frame(bp, bt));
    CHECK(e[0] + e[1] + e[2] == doctest::Approx(2.0 * kConsts.zero_field_splitting).epsilon(1e-12));
    const Vec3 b{u(rng), u(rng), u(rng)};
    for (const auto& n : nv_axes()) {
      const auto p = transition_energies(b, n);
      const auto q = transition_energies(-b, n);
      CHECK(p.e_minus <= p.e_plus);
      CHECK(std::fabs(p.e_minus - q.e_minus) <= 1e-9 * p.e_minus);
      CHECK(std::fabs(p.e_plus - q.e_plus) <= 1e-9 * p.e_plus);
    }
  }
}

TEST_CASE("transition energies") {
  const double d = kConsts.zero_field_splitting, g = kConsts.gyromagnetic;
  const auto zero = transition_energies({0, 0, 0}, nv_axes()[2]);
  CHECK(zero.e_minus == doctest::Approx(d));
  CHECK(zero.e_plus == doctest::Approx(d));

  const double b = 3e-3;
  const auto along = transition_energies(nv_axes()[1] * b, nv_axes()[1]);
  CHECK(along.e_minus == doctest::Approx(d - g * b).epsilon(1e-12));
  CHECK(along.e_plus == doctest::Approx(d + g * b).epsilon(1e-12));

  // rotating the transverse part about the NV axis changes nothing
  const Vec3 n = nv_axes()[0];
  const Vec3 t1 = normalized(cross(n, {1, 0, 0}));
  const Vec3 t2 = cross(n, t1);
  const auto ref = transition_energies(1e-3 * n + 2e-3 * t1, n);
  for (double a = 0.1; a < kTwoPi; a += 0.37) {
    const auto e = transition_energies(1e-3 * n + 2e-3 * (std::cos(a) * t1 + std::sin(a) * t2), n);
    CHECK(std::fabs(e.e_minus - ref.e_minus) < 1e-3);
    CHECK(std::fabs(e.e_plus - ref.e_plus) < 1e-3);
  }

  const double too_strong = 0.3 * d / g;
  CHECK_THROWS_AS(transition_energies({too_strong, 0, 0}, n), OutOfRegimeError);
  CHECK_NOTHROW(transition_energies({0.99 * too_strong, 0, 0}, n));
}

TEST_CASE("verify resonance on planes") {
  const Vec3 on_xy{1.3e-3, 1.3e-3, -0.4e-3};
  CHECK(verify_resonance(on_xy, 1, 2, 1.0));
  const Vec3 on_x0{0.0, 1.1e-3, 2.3e-3};
  CHECK(verify_resonance(on_x0, 0, 1, 1.0));
  CHECK(verify_resonance(on_x0, 2, 3, 1.0));
  const Vec3 generic{1.1e-3, -2.3e-3, 0.7e-3};
  const double tol = kConsts.gyromagnetic * 1e-6;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) CHECK_FALSE(verify_resonance(generic, i, j, tol));
}

TEST_CASE("plane tables agree with the projection picture") {
  // each plane's predicted pairs are exactly the pairs with equal |B.n| on that plane
  const auto& n = nv_axes();
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 9; ++k) {
    for (int t = 0; t < 20; ++t) {
      Vec3 b{u(rng), u(rng), u(rng)};
      const auto d = resonance_deltas(b);
      // move b onto plane k along the plane normal
      Vec3 normal;
      switch (k) {
        case 0: normal = {1, -1, 0}; break;
        case 1: normal = {1, 1, 0}; break;
        case 2: normal = {1, 0, -1}; break;
        case 3: normal = {1, 0, 1}; break;
        case 4: normal = {0, 1, -1}; break;
        case 5: normal = {0, 1, 1}; break;
        case 6: normal = {1, 0, 0}; break;
        case 7: normal = {0, 1, 0}; break;
        default: normal = {0, 0, 1}; break;
      }
      b -= (d[k].delta / dot(normal, normal)) * normal;
      CHECK(std::fabs(resonance_deltas(b)[k].delta) < 1e-15);
      std::vector<std::pair<int, int>> equal;
      for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
          if (std::fabs(std::fabs(dot(b, n[i])) - std::fabs(dot(b, n[j]))) < 1e-12) equal.emplace_back(i, j);
      CHECK(equal == plane_pairs()[k]);
    }
  }
}

TEST_CASE("energy crossings along an axial sweep sit on zero deltas") {
  // sweep along sample [111] with a fixed 2.2 mT transverse field
  const Vec3 axial = kAxis111;
  const Vec3 t0 = kAxis1m10;
  const Vec3 transverse = rotation_about_axis(axial, 0.3) * t0 * 2.2e-3;
  auto field = [&](double b) { return b * axial + transverse; };

  int crossings = 0;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      const int steps = 4000;
      double prev_b = -6e-3;
      double prev = e_plus_gap(field(prev_b), i, j);
      for (int s = 1; s <= steps; ++s) {
        const double b = -6e-3 + 12e-3 * s / steps;
        const double cur = e_plus_gap(field(b), i, j);
        if (prev == 0.0 || (prev < 0) != (cur < 0)) {
          double lo = prev_b, hi = b, flo = prev;
          for (int it = 0; it < 80; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double fm = e_plus_gap(field(mid), i, j);
            if ((fm < 0) == (flo < 0)) {
              lo = mid;
              flo = fm;
            } else {
              hi = mid;
            }
          }
          const Vec3 bstar = field(0.5 * (lo + hi));
          CHECK(verify_resonance(bstar, i, j, 1e3));
          const auto deltas = resonance_deltas(bstar);
          bool explained = false;
          for (int k = 0; k < 9; ++k) {
            const auto& pairs = plane_pairs()[k];
            const bool lists_pair = std::find(pairs.begin(), pairs.end(), std::make_pair(i, j)) != pairs.end();
            if (lists_pair && std::fabs(deltas[k].delta) < 1e-9) explained = true;
          }
          CHECK(explained);
          ++crossings;
        }
        prev = cur;
        prev_b = b;
      }
    }
  }
  CHECK(crossings > 0);
}

TEST_CASE("oracle sweep") {
  const auto start = std::chrono::steady_clock::now();
  const OracleReport r = run_oracle_sweep({});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(r.planes.size() == 9);
  CHECK(r.plane_trials() == 9000);
  CHECK(r.plane_passes() == 9000);
  CHECK(r.generic_trials == 1000);
  CHECK(r.generic_passes == 1000);
  CHECK(r.max_plane_mismatch <= 1.0);
  CHECK(r.min_generic_gap > kConsts.gyromagnetic * 1e-6);
  CHECK(r.all_passed());
  CHECK(secs < 10.0);

  OracleSweepOptions none;
  none.trials_per_plane = 0;
  CHECK(run_oracle_sweep(none).all_passed());

  OracleSweepOptions o;
  o.trials_per_plane = 50;
  o.seed = 99;
  const auto a = run_oracle_sweep(o), b = run_oracle_sweep(o);
  CHECK(a.max_plane_mismatch == b.max_plane_mismatch);
  CHECK(a.min_generic_gap == b.min_generic_gap);
}
