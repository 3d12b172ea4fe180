#pragma once

// Analytical photoluminescence model. The total lab field (external field
// plus axial bias) is carried into the sample frame, projected onto the nine
// resonance planes of the NV tetrahedron, and each plane contributes one
// lineshape-weighted dip:
//
//   PL(b, phi) = 1 - C * sum_i w_i * L(delta_i; gamma)
//
// All quantities are SI: tesla and radians.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "nvmag/linalg.hpp"

namespace nvmag {

/// External field in the lab frame: b_perp along azimuth phi0, b_z along z.
struct ExternalFieldParams {
  double b_z = 0.0;     // T
  double b_perp = 0.0;  // T, >= 0
  double phi0 = 0.0;    // rad, [0, 2pi)

  /// Throws ValidationError on b_perp < 0 or non-finite values; wraps phi0.
  ExternalFieldParams normalized() const;
};

enum class LineshapeKind { lorentzian, gaussian };

inline constexpr std::size_t kNumResonances = 9;
using ResonanceWeights = std::array<double, kNumResonances>;

/// Six symmetry planes weigh 1, three anti-symmetry planes weigh 2.
inline constexpr ResonanceWeights kDefaultWeights{1, 1, 1, 1, 1, 1, 2, 2, 2};

struct LineshapeConfig {
  double gamma = 1e-4;     // T, half width at half maximum
  double contrast = 0.02;  // single-dip depth C
  ResonanceWeights weights = kDefaultWeights;
  LineshapeKind kind = LineshapeKind::lorentzian;

  double weight_sum() const;
  /// gamma > 0, weights >= 0, 0 <= contrast < 1 and contrast * sum(w) <= 1.
  void validate() const;
};

struct ModelParams {
  RotationMatrix orientation = RotationMatrix::identity();  // lab -> sample
  ExternalFieldParams field;
  LineshapeConfig lineshape;
};

struct MeasurementGrid {
  std::vector<double> bias_values;  // T, strictly increasing
  std::vector<double> phi_values;   // rad, strictly increasing

  std::size_t n_bias() const { return bias_values.size(); }
  std::size_t n_phi() const { return phi_values.size(); }
  std::size_t size() const { return n_bias() * n_phi(); }
  void validate() const;

  /// `n` evenly spaced values from lo to hi inclusive.
  static std::vector<double> linspace(double lo, double hi, std::size_t n);
  /// `n` evenly spaced angles start + k * span / n, endpoint excluded.
  static std::vector<double> angles(double start, double span, std::size_t n);
};

/// PL values on a measurement grid. Storage is phi-major: all bias points of
/// the first angle, then the second angle, and so on.
struct PLMap {
  MeasurementGrid grid;
  std::vector<double> values;
  std::map<std::string, std::string> metadata;

  double at(std::size_t i_bias, std::size_t j_phi) const { return values[j_phi * grid.n_bias() + i_bias]; }
  double& at(std::size_t i_bias, std::size_t j_phi) { return values[j_phi * grid.n_bias() + i_bias]; }
  void validate() const;

  /// Sub-map keeping only the listed angle indices (in increasing order).
  PLMap select_phi(const std::vector<std::size_t>& phi_indices) const;
};

struct Resonance {
  double delta = 0.0;  // T
  double weight = 0.0;
};

/// B_lab = (b_perp cos phi0, b_perp sin phi0, b_z + b_bias).
Vec3 total_lab_field(const ExternalFieldParams& field, double b_bias);

/// B_s = O * R_z(-phi) * B_lab.
Vec3 field_in_sample_frame(const RotationMatrix& o, double phi, const Vec3& b_lab);

/// Deviations from the nine resonance planes, in fixed order:
/// Bx-By, Bx+By, Bx-Bz, Bx+Bz, By-Bz, By+Bz (weight 1), then Bx, By, Bz (weight 2).
std::array<Resonance, kNumResonances> resonance_deltas(const Vec3& b_sample);

/// Unit-peak lineshape with half width gamma. Lorentzian: g^2 / (d^2 + g^2);
/// Gaussian: exp(-ln2 d^2 / g^2). Throws ValidationError if gamma <= 0.
double lineshape(double delta, double gamma, LineshapeKind kind = LineshapeKind::lorentzian);

double pl_value(double b_bias, double phi, const ModelParams& params);

PLMap pl_map(const MeasurementGrid& grid, const ModelParams& params);

}  // namespace nvmag
