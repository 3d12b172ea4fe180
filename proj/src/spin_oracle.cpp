#include "nvmag/spin_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nvmag/errors.hpp"
#include "nvmag/geometry.hpp"

namespace nvmag {

Hermitian3 hamiltonian_in_nv_frame(double b_parallel, double b_perp, const SpinConstants& consts) {
  const double d = consts.zero_field_splitting;
  const double zp = consts.gyromagnetic * b_parallel;
  const double xp = consts.gyromagnetic * b_perp / std::sqrt(2.0);
  Hermitian3 h{};
  h[0][0] = d + zp;
  h[1][1] = 0.0;
  h[2][2] = d - zp;
  h[0][1] = h[1][0] = xp;
  h[1][2] = h[2][1] = xp;
  return h;
}

namespace {

constexpr int kN = 6;
using Sym6 = std::array<std::array<double, kN>, kN>;

// Cyclic Jacobi sweeps until the off-diagonal norm is negligible.
std::array<double, kN> jacobi_eigenvalues(Sym6 a) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, scale = 0.0;
    for (int p = 0; p < kN; ++p) {
      scale += a[p][p] * a[p][p];
      for (int q = p + 1; q < kN; ++q) off += a[p][q] * a[p][q];
    }
    if (off <= 1e-34 * scale || off == 0.0) break;
    for (int p = 0; p < kN - 1; ++p) {
      for (int q = p + 1; q < kN; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < kN; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < kN; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::array<double, kN> ev{};
  for (int i = 0; i < kN; ++i) ev[i] = a[i][i];
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace

std::array<double, 3> hermitian_eigenvalues(const Hermitian3& h) {
  // [[Re, -Im], [Im, Re]] has every eigenvalue of h twice.
  Sym6 m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      m[r][c] = m[r + 3][c + 3] = h[r][c].real();
      m[r][c + 3] = -h[r][c].imag();
      m[r + 3][c] = h[r][c].imag();
    }
  }
  const auto ev = jacobi_eigenvalues(m);
  return {ev[0], ev[2], ev[4]};
}

TransitionPair transition_energies(const Vec3& b, const Vec3& nv_axis, const SpinConstants& consts) {
  if (!(consts.gyromagnetic * norm(b) < 0.3 * consts.zero_field_splitting))
    throw OutOfRegimeError("field outside the low-field regime (gamma_e |B| must be < 0.3 D)");
  const double b_par = dot(b, nv_axis);
  const double b_perp = norm(b - b_par * nv_axis);
  const auto e = hermitian_eigenvalues(hamiltonian_in_nv_frame(b_par, b_perp, consts));
  return {e[1] - e[0], e[2] - e[0]};
}

bool verify_resonance(const Vec3& b, int i, int j, double tol, const SpinConstants& consts) {
  const auto& axes = nv_axes();
  const auto ei = transition_energies(b, axes.at(static_cast<std::size_t>(i)), consts);
  const auto ej = transition_energies(b, axes.at(static_cast<std::size_t>(j)), consts);
  return std::fabs(ei.e_minus - ej.e_minus) <= tol && std::fabs(ei.e_plus - ej.e_plus) <= tol;
}

const std::array<std::vector<std::pair<int, int>>, 9>& plane_pairs() {
  static const std::array<std::vector<std::pair<int, int>>, 9> pairs{{
      {{1, 2}},          // Bx = By
      {{0, 3}},          // Bx = -By
      {{1, 3}},          // Bx = Bz
      {{0, 2}},          // Bx = -Bz
      {{2, 3}},          // By = Bz
      {{0, 1}},          // By = -Bz
      {{0, 1}, {2, 3}},  // Bx = 0
      {{0, 2}, {1, 3}},  // By = 0
      {{0, 3}, {1, 2}},  // Bz = 0
  }};
  return pairs;
}

const std::array<std::string, 9>& plane_names() {
  static const std::array<std::string, 9> names{"Bx=By", "Bx=-By", "Bx=Bz", "Bx=-Bz", "By=Bz",
                                                "By=-Bz", "Bx=0", "By=0", "Bz=0"};
  return names;
}

int OracleReport::plane_trials() const {
  int n = 0;
  for (const auto& p : planes) n += p.trials;
  return n;
}

int OracleReport::plane_passes() const {
  int n = 0;
  for (const auto& p : planes) n += p.passes;
  return n;
}

bool OracleReport::all_passed() const { return plane_passes() == plane_trials() && generic_passes == generic_trials; }

namespace {

// Put b exactly on plane k by overwriting one component.
Vec3 project_onto_plane(Vec3 b, int k) {
  switch (k) {
    case 0: b.y = b.x; break;
    case 1: b.y = -b.x; break;
    case 2: b.z = b.x; break;
    case 3: b.z = -b.x; break;
    case 4: b.z = b.y; break;
    case 5: b.z = -b.y; break;
    case 6: b.x = 0.0; break;
    case 7: b.y = 0.0; break;
    default: b.z = 0.0; break;
  }
  return b;
}

double plane_distance(const Vec3& b) {
  const double r2 = 1.0 / std::sqrt(2.0);
  return std::min({std::fabs(b.x - b.y) * r2, std::fabs(b.x + b.y) * r2, std::fabs(b.x - b.z) * r2,
                   std::fabs(b.x + b.z) * r2, std::fabs(b.y - b.z) * r2, std::fabs(b.y + b.z) * r2,
                   std::fabs(b.x), std::fabs(b.y), std::fabs(b.z)});
}

double pair_gap(const Vec3& b, int i, int j, const SpinConstants& consts) {
  const auto& axes = nv_axes();
  const auto ei = transition_energies(b, axes[static_cast<std::size_t>(i)], consts);
  const auto ej = transition_energies(b, axes[static_cast<std::size_t>(j)], consts);
  return std::max(std::fabs(ei.e_minus - ej.e_minus), std::fabs(ei.e_plus - ej.e_plus));
}

}  // namespace

OracleReport run_oracle_sweep(const OracleSweepOptions& options, const SpinConstants& consts) {
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto random_ball = [&] {
    for (;;) {
      const Vec3 v{unit(rng), unit(rng), unit(rng)};
      if (dot(v, v) <= 1.0) return v * options.max_field;
    }
  };

  OracleReport report;
  report.min_generic_gap = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 9; ++k) {
    PlaneSweepResult res{plane_names()[static_cast<std::size_t>(k)], options.trials_per_plane, 0};
    for (int t = 0; t < options.trials_per_plane; ++t) {
      const Vec3 b = project_onto_plane(random_ball(), k);
      bool ok = true;
      for (const auto& [i, j] : plane_pairs()[static_cast<std::size_t>(k)]) {
        const double gap = pair_gap(b, i, j, consts);
        report.max_plane_mismatch = std::max(report.max_plane_mismatch, gap);
        ok = ok && gap <= options.plane_tolerance;
      }
      if (ok) ++res.passes;
    }
    report.planes.push_back(res);
  }

  const double generic_tol = consts.gyromagnetic * options.generic_tolerance_field;
  report.generic_trials = options.trials_per_plane;
  for (int t = 0; t < options.trials_per_plane; ++t) {
    Vec3 b;
    do {
      b = random_ball();
    } while (plane_distance(b) <= options.generic_clearance);
    bool ok = true;
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) {
        const double gap = pair_gap(b, i, j, consts);
        report.min_generic_gap = std::min(report.min_generic_gap, gap);
        ok = ok && gap > generic_tol;
      }
    }
    if (ok) ++report.generic_passes;
  }
  if (report.generic_trials == 0) report.min_generic_gap = 0.0;
  return report;
}

}  // namespace nvmag
