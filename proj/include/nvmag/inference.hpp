#pragma once

// Grid-based Bayesian inversion with a uniform prior over a 3-parameter box.
//
//   1. scan a coarse grid (parallel; result independent of thread count)
//   2. take coarse local maxima under non-maximum suppression as candidates
//   3. refine each candidate with a shrinking 3x3x3 stencil
//   4. keep refined modes within ln(1000) of the best one
//   5. per mode: Laplace covariance, then a local fine grid for marginals,
//      standard deviations, credible intervals and the mode's mass
//   6. global marginals are the mass-weighted mixture of the local ones

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nvmag/forward_model.hpp"
#include "nvmag/geometry.hpp"
#include "nvmag/likelihood.hpp"

namespace nvmag {

enum class InferenceMode { orientation, field };

const char* to_string(InferenceMode m);

struct ParamAxis {
  std::string name;
  std::string unit;        // "rad" or "T"
  double lower = 0.0;
  double upper = 0.0;
  std::size_t points = 0;  // coarse grid points
  bool periodic = false;   // periodic axes exclude `upper`

  double spacing() const;
  double period() const { return upper - lower; }
  double value(std::size_t i) const;
  std::vector<double> values() const;
  /// Wrap periodic values into [lower, upper); clamp closed ones.
  double normalize(double v) const;
  /// Signed distance a - b, shortest way round on periodic axes.
  double distance(double a, double b) const;
  void validate() const;
};

struct ParamSpace {
  InferenceMode mode = InferenceMode::orientation;
  std::array<ParamAxis, 3> axes;

  /// alpha in [0, 2pi), beta in [0, theta_c], zeta in [0, 2pi/3).
  static ParamSpace orientation(std::size_t n_alpha = 72, std::size_t n_beta = 24, std::size_t n_zeta = 24);
  /// b_z in [bz_lo, bz_hi], b_perp in [0, bp_max], phi0 in [0, 2pi).
  static ParamSpace field(double bz_lo = -2e-3, double bz_hi = 2e-3, std::size_t n_bz = 81, double bp_max = 3e-3,
                          std::size_t n_bp = 61, std::size_t n_phi0 = 72);

  std::size_t size() const { return axes[0].points * axes[1].points * axes[2].points; }
  std::size_t index(std::size_t i0, std::size_t i1, std::size_t i2) const {
    return (i0 * axes[1].points + i1) * axes[2].points + i2;
  }
  void validate() const;
};

struct SearchOptions {
  double mode_log_threshold = 6.907755278982137;  // ln 1000
  int suppression_radius = 3;                     // coarse cells, Chebyshev
  std::size_t max_candidates = 12;
  double angle_resolution = 1e-4;                 // rad
  double field_resolution = 1e-7;                 // T
  double shrink_factor = 4.0;
  std::size_t local_points = 13;                  // per axis, odd
  double local_sigmas = 5.0;                      // half-width of the local grid
  bool use_lattice = true;                        // field mode fast scan when the grids allow it
  bool reference = false;                         // serial reference likelihood everywhere
  std::optional<DifferenceSteps> steps;           // default: half the data spacing

  void validate() const;
};

struct Marginal {
  std::string name;
  std::string unit;
  std::vector<double> x;
  std::vector<double> density;

  double integral() const;  // trapezoid
  double mean() const;
  double stddev() const;
  /// Equal-tailed interval from the piecewise-linear CDF.
  std::pair<double, double> credible_interval(double level = 0.95) const;
  std::size_t argmax() const;

  bool operator==(const Marginal&) const = default;
};

struct Mode {
  std::array<double, 3> point{};        // refined MAP
  double log_density = 0.0;             // log-likelihood at `point`
  std::array<std::array<double, 3>, 3> covariance{};  // Laplace
  std::array<double, 3> stddev{};       // from the local marginals
  std::array<std::pair<double, double>, 3> interval95{};
  double log_mass = 0.0;                // log integral of the likelihood over the local grid
  double weight = 0.0;                  // share of the total mass
  std::array<Marginal, 3> marginals;    // local
};

struct Posterior {
  ParamSpace space;
  std::vector<double> log_density;      // coarse grid, ParamSpace::index order
  std::vector<Mode> modes;              // decreasing log_density
  std::array<Marginal, 3> marginals;    // global, from the modes
  std::array<Marginal, 3> coarse_marginals;
  double evidence_proxy = 0.0;          // log sum over the coarse grid times cell volume
  bool used_lattice = false;
  std::vector<std::string> warnings;
  std::vector<std::string> notes;       // grid adjustments and similar

  const Mode& best() const { return modes.front(); }
};

/// Parameters held fixed during inference; whichever of orientation / field
/// is not being inferred must be present.
struct FixedParams {
  std::optional<RotationMatrix> orientation;
  std::optional<ExternalFieldParams> field;
  LineshapeConfig lineshape;
};

Posterior evaluate_posterior(const PLMap& data, const ParamSpace& space, const FixedParams& fixed,
                             const NoiseModel& noise, const SearchOptions& options = {});

Posterior infer_orientation(const PLMap& data, const ExternalFieldParams& known_field,
                            const LineshapeConfig& lineshape, const NoiseModel& noise,
                            const ParamSpace& space = ParamSpace::orientation(), const SearchOptions& options = {});

/// Also snaps the b_z and phi0 grids onto the data lattice when that is
/// possible (enables the fast scan), and warns when the lab z axis is within
/// 1e-3 rad of a [100], [110] or [111] type direction.
Posterior infer_field(const PLMap& data, const RotationMatrix& known_orientation, const LineshapeConfig& lineshape,
                      const NoiseModel& noise, const ParamSpace& space = ParamSpace::field(),
                      const SearchOptions& options = {});

/// Closest high-symmetry crystal direction to `direction` and the angle to it.
std::pair<Vec3, double> nearest_symmetry_axis(const Vec3& direction);

/// Grid adjusted so that b_z and phi0 strides are whole multiples of the
/// data spacings. Returns the input unchanged when the data are not uniform.
ParamSpace snap_field_space(const ParamSpace& space, const PLMap& data, const DifferenceSteps& steps,
                            std::vector<std::string>* notes = nullptr);

struct ScalingRow {
  std::size_t n_traces = 0;
  double mean_width = 0.0;  // T, mean std of the b_perp marginal
  double std_width = 0.0;   // T, spread across repetitions
  std::vector<double> widths;

  bool operator==(const ScalingRow&) const = default;
};

/// For each N, draw `repetitions` random angle subsets (without
/// replacement), run infer_field on each and record the b_perp marginal std.
/// Finite-difference steps come from the full map so subsets stay comparable.
std::vector<ScalingRow> scaling_study(const PLMap& data, const RotationMatrix& orientation,
                                      const LineshapeConfig& lineshape, const NoiseModel& noise,
                                      const std::vector<std::size_t>& ns, std::size_t repetitions,
                                      std::uint64_t seed, const ParamSpace& space = ParamSpace::field(),
                                      const SearchOptions& options = {});

/// Least-squares slope of log(mean_width) against log(N).
double scaling_slope(const std::vector<ScalingRow>& rows);

/// "4.7587(8)": value with the 1-sigma uncertainty in the last shown digit.
std::string format_with_uncertainty(double value, double sigma);

}  // namespace nvmag
