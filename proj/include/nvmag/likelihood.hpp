#pragma once

// Gaussian log-likelihood of a PL map with per-point effective variance:
//
//   sigma_p^2 = sigma_noise^2 + (dPL/dB_bias)^2 sigma_bias^2 + (dPL/dphi)^2 sigma_phi^2
//   log L     = -1/2 sum_p [ r_p^2 / sigma_p^2 + ln(2 pi sigma_p^2) ]
//
// Derivatives are central finite differences. Three evaluators compute the
// same number:
//   log_likelihood          plain loops over pl_value; the reference.
//   LikelihoodKernel        precomputed, vectorized over the bias axis.
//   field_lattice_scan      whole (b_z, b_perp, phi0) grid at once, for data
//                           and grids that sit on a common lattice.

#include <cstddef>
#include <vector>

#include "nvmag/forward_model.hpp"

namespace nvmag {

struct NoiseModel {
  double sigma_noise = 0.0018;          // PL units
  double sigma_bias = 1e-6;             // T
  double sigma_phi = deg_to_rad(1.0);   // rad

  /// sigma_noise > 0, others >= 0, all finite.
  void validate() const;
};

/// Finite-difference half-steps along the two measurement axes.
struct DifferenceSteps {
  double bias = 0.0;  // T
  double phi = 0.0;   // rad
};

/// Half the median spacing of each axis. An axis with a single value falls
/// back to 1e-6 T / (pi/360) rad.
DifferenceSteps default_steps(const MeasurementGrid& grid);

/// Effective variance at one grid point. Throws ValidationError on
/// non-positive steps.
double effective_variance(const ModelParams& params, double b_bias, double phi, const NoiseModel& noise,
                          const DifferenceSteps& steps);

/// Reference implementation, single-threaded, straight from the definition.
double log_likelihood(const ModelParams& params, const PLMap& data, const NoiseModel& noise,
                      const DifferenceSteps& steps);
double log_likelihood(const ModelParams& params, const PLMap& data, const NoiseModel& noise);

/// Fast evaluator bound to one data map. Immutable after construction and
/// safe to call from several threads.
class LikelihoodKernel {
 public:
  LikelihoodKernel(const PLMap& data, const LineshapeConfig& lineshape, const NoiseModel& noise,
                   const DifferenceSteps& steps);

  double operator()(const RotationMatrix& orientation, const ExternalFieldParams& field) const;

  std::size_t n_points() const { return data_.size(); }

 private:
  template <LineshapeKind K>
  double evaluate(const RotationMatrix& o, const ExternalFieldParams& f) const;

  std::vector<double> bias_;
  std::vector<double> phi_;
  std::vector<double> data_;  // phi-major, as in PLMap
  LineshapeConfig lineshape_;
  NoiseModel noise_;
  DifferenceSteps steps_;
};

/// Axis values for the field-mode grid scan.
struct FieldGridAxes {
  std::vector<double> b_z;
  std::vector<double> b_perp;
  std::vector<double> phi0;

  std::size_t size() const { return b_z.size() * b_perp.size() * phi0.size(); }
};

/// True when the lattice scan applies: uniform bias axis with spacing
/// 2*steps.bias; angles on a lattice of spacing 2*steps.phi that closes on
/// the circle; b_z and phi0 grids uniform with strides that are whole
/// multiples of those spacings.
bool field_lattice_compatible(const PLMap& data, const DifferenceSteps& steps, const FieldGridAxes& axes);

/// Log-likelihood at every grid point, index (i_bz * n_bp + i_bp) * n_phi0 + i_phi0.
/// The model depends on (b_bias + b_z, phi0 - phi) only, so per b_perp value
/// the model, weights and log-variances are tabulated once on a lattice and
/// every (b_z, phi0) cell becomes a shifted weighted sum. Throws
/// ValidationError when field_lattice_compatible is false.
std::vector<double> field_lattice_scan(const PLMap& data, const RotationMatrix& orientation,
                                       const LineshapeConfig& lineshape, const NoiseModel& noise,
                                       const DifferenceSteps& steps, const FieldGridAxes& axes);

}  // namespace nvmag
