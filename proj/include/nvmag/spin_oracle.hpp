#pragma once

// Independent check of the resonance-plane picture: builds the ground-state
// spin-1 Hamiltonian of each NV class, diagonalizes it, and compares
// transition energies between classes. Energies are linear frequencies (Hz).
// Only tests and the verify-oracle command use this; inference never does.

#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nvmag/linalg.hpp"

namespace nvmag {

struct SpinConstants {
  double zero_field_splitting = 2.87e9;  // D, Hz
  double gyromagnetic = 28.0e9;          // gamma_e, Hz/T
};

struct TransitionPair {
  double e_minus = 0.0;  // Hz
  double e_plus = 0.0;   // Hz
};

using Hermitian3 = std::array<std::array<std::complex<double>, 3>, 3>;

/// H = D Sz^2 + gamma_e (b_par Sz + b_perp Sx) in the basis {|+1>, |0>, |-1>}.
Hermitian3 hamiltonian_in_nv_frame(double b_parallel, double b_perp, const SpinConstants& consts = {});

/// Eigenvalues of a 3x3 Hermitian matrix in ascending order (cyclic Jacobi on
/// the equivalent 6x6 real symmetric embedding).
std::array<double, 3> hermitian_eigenvalues(const Hermitian3& h);

/// Transitions from the lowest level to the upper two, for an NV along
/// `nv_axis` in field `b` (sample frame, tesla). Throws OutOfRegimeError when
/// gamma_e |B| >= 0.3 D.
TransitionPair transition_energies(const Vec3& b, const Vec3& nv_axis, const SpinConstants& consts = {});

/// True iff the transition pairs of NV classes i and j (0-based indices into
/// nv_axes()) agree within tol (Hz).
bool verify_resonance(const Vec3& b, int i, int j, double tol, const SpinConstants& consts = {});

/// NV pairs (0-based) predicted to be degenerate on each resonance plane, in
/// the order used by resonance_deltas.
const std::array<std::vector<std::pair<int, int>>, 9>& plane_pairs();

/// Human-readable plane names in resonance_deltas order.
const std::array<std::string, 9>& plane_names();

struct PlaneSweepResult {
  std::string plane;
  int trials = 0;
  int passes = 0;
};

struct OracleReport {
  std::vector<PlaneSweepResult> planes;
  int generic_trials = 0;
  int generic_passes = 0;
  double max_plane_mismatch = 0.0;  // Hz, largest predicted-pair difference
  double min_generic_gap = 0.0;     // Hz, smallest pair difference off-plane

  int plane_trials() const;
  int plane_passes() const;
  bool all_passed() const;
};

struct OracleSweepOptions {
  std::uint64_t seed = 1;
  int trials_per_plane = 1000;
  double max_field = 5e-3;            // T
  double plane_tolerance = 1.0;       // Hz
  double generic_clearance = 10e-6;   // T, minimum distance from every plane
  double generic_tolerance_field = 1e-6;  // T; tolerance is gamma_e times this
};

/// Plane <-> degeneracy sweep: random fields on each plane must make the
/// predicted pairs degenerate; random fields away from all planes must not
/// make any pair degenerate.
OracleReport run_oracle_sweep(const OracleSweepOptions& options, const SpinConstants& consts = {});

}  // namespace nvmag
