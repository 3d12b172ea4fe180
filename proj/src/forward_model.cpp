#include "nvmag/forward_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nvmag/errors.hpp"

namespace nvmag {

ExternalFieldParams ExternalFieldParams::normalized() const {
  if (!std::isfinite(b_z) || !std::isfinite(b_perp) || !std::isfinite(phi0))
    throw ValidationError("external field parameters must be finite");
  if (b_perp < 0.0) throw ValidationError("b_perp must be >= 0");
  return {b_z, b_perp, wrap_angle(phi0)};
}

double LineshapeConfig::weight_sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

void LineshapeConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ValidationError("lineshape gamma must be > 0");
  if (!(contrast >= 0.0 && contrast < 1.0)) throw ValidationError("contrast must lie in [0, 1)");
  for (double w : weights)
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("resonance weights must be >= 0");
  if (contrast * weight_sum() > 1.0) throw ValidationError("contrast * sum(weights) must not exceed 1");
}

namespace {

void check_axis(const std::vector<double>& v, const char* name) {
  if (v.empty()) throw ValidationError(std::string(name) + " axis is empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw ValidationError(std::string(name) + " axis has non-finite value");
    if (i > 0 && !(v[i] > v[i - 1]))
      throw ValidationError(std::string(name) + " axis must be strictly increasing");
  }
}

}  // namespace

void MeasurementGrid::validate() const {
  check_axis(bias_values, "bias");
  check_axis(phi_values, "phi");
}

std::vector<double> MeasurementGrid::linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

std::vector<double> MeasurementGrid::angles(double start, double span, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = start + span * static_cast<double>(i) / static_cast<double>(n);
  return v;
}

void PLMap::validate() const {
  grid.validate();
  if (values.size() != grid.size()) throw ValidationError("PL map shape does not match its grid");
  for (double v : values)
    if (!std::isfinite(v)) throw ValidationError("PL map contains non-finite values");
}

PLMap PLMap::select_phi(const std::vector<std::size_t>& phi_indices) const {
  PLMap out;
  out.grid.bias_values = grid.bias_values;
  out.metadata = metadata;
  const std::size_t nb = grid.n_bias();
  for (std::size_t j : phi_indices) {
    if (j >= grid.n_phi()) throw ValidationError("phi index out of range");
    out.grid.phi_values.push_back(grid.phi_values[j]);
    out.values.insert(out.values.end(), values.begin() + static_cast<std::ptrdiff_t>(j * nb),
                      values.begin() + static_cast<std::ptrdiff_t>((j + 1) * nb));
  }
  out.grid.validate();
  return out;
}

Vec3 total_lab_field(const ExternalFieldParams& field, double b_bias) {
  return {field.b_perp * std::cos(field.phi0), field.b_perp * std::sin(field.phi0), field.b_z + b_bias};
}

Vec3 field_in_sample_frame(const RotationMatrix& o, double phi, const Vec3& b_lab) {
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  // R_z(-phi)
  const Vec3 rotated{c * b_lab.x + s * b_lab.y, -s * b_lab.x + c * b_lab.y, b_lab.z};
  return o * rotated;
}

std::array<Resonance, kNumResonances> resonance_deltas(const Vec3& b) {
  return {{{b.x - b.y, 1.0},
           {b.x + b.y, 1.0},
           {b.x - b.z, 1.0},
           {b.x + b.z, 1.0},
           {b.y - b.z, 1.0},
           {b.y + b.z, 1.0},
           {b.x, 2.0},
           {b.y, 2.0},
           {b.z, 2.0}}};
}

double lineshape(double delta, double gamma, LineshapeKind kind) {
  if (!(gamma > 0.0)) throw ValidationError("lineshape gamma must be > 0");
  if (kind == LineshapeKind::gaussian) return std::exp(-std::log(2.0) * delta * delta / (gamma * gamma));
  const double g2 = gamma * gamma;
  return g2 / (delta * delta + g2);
}

double pl_value(double b_bias, double phi, const ModelParams& params) {
  const Vec3 b_s = field_in_sample_frame(params.orientation, phi, total_lab_field(params.field, b_bias));
  const auto deltas = resonance_deltas(b_s);
  const auto& ls = params.lineshape;
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumResonances; ++i) sum += ls.weights[i] * lineshape(deltas[i].delta, ls.gamma, ls.kind);
  return 1.0 - ls.contrast * sum;
}

PLMap pl_map(const MeasurementGrid& grid, const ModelParams& params) {
  grid.validate();
  params.lineshape.validate();
  PLMap map;
  map.grid = grid;
  map.values.resize(grid.size());
  const auto nb = static_cast<std::ptrdiff_t>(grid.n_bias());
  const auto np = static_cast<std::ptrdiff_t>(grid.n_phi());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < np; ++j)
    for (std::ptrdiff_t i = 0; i < nb; ++i)
      map.values[static_cast<std::size_t>(j * nb + i)] =
          pl_value(grid.bias_values[static_cast<std::size_t>(i)], grid.phi_values[static_cast<std::size_t>(j)], params);
  return map;
}

}  // namespace nvmag
