#include "nvmag/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <utility>

#include <fftw3.h>

#include "nvmag/errors.hpp"

namespace nvmag {

namespace {

constexpr double kLn2Pi = 1.8378770664093454836;

// Coefficient vectors c_k with delta_k = c_k . B_s, in resonance_deltas order.
constexpr double kC[kNumResonances][3] = {{1, -1, 0}, {1, 1, 0}, {1, 0, -1}, {1, 0, 1}, {0, 1, -1},
                                          {0, 1, 1},  {1, 0, 0}, {0, 1, 0},  {0, 0, 1}};

double median_spacing(const std::vector<double>& v) {
  std::vector<double> d;
  for (std::size_t i = 1; i < v.size(); ++i) d.push_back(v[i] - v[i - 1]);
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  double m = d[d.size() / 2];
  if (d.size() % 2 == 0) {
    const double lo = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2));
    m = 0.5 * (m + lo);
  }
  return m;
}

void check_steps(const DifferenceSteps& s) {
  if (!(s.bias > 0.0) || !(s.phi > 0.0) || !std::isfinite(s.bias) || !std::isfinite(s.phi))
    throw ValidationError("finite-difference steps must be > 0");
}

// Scaled deltas are a[k] + t * s[k]; the lineshape sum is grouped three at a
// time over a common denominator to save divisions.
struct Offsets {
  double a[kNumResonances];
};

inline double lorentz_sum(const Offsets& off, const Offsets& slope, const double* w, double t) {
  double sum = 0.0;
  for (int g = 0; g < 3; ++g) {
    const int k = 3 * g;
    const double x0 = off.a[k] + t * slope.a[k];
    const double x1 = off.a[k + 1] + t * slope.a[k + 1];
    const double x2 = off.a[k + 2] + t * slope.a[k + 2];
    const double a0 = 1.0 + x0 * x0, a1 = 1.0 + x1 * x1, a2 = 1.0 + x2 * x2;
    sum += (w[k] * a1 * a2 + w[k + 1] * a0 * a2 + w[k + 2] * a0 * a1) / (a0 * a1 * a2);
  }
  return sum;
}

inline double gauss_sum(const Offsets& off, const Offsets& slope, const double* w, double t) {
  double sum = 0.0;
  for (std::size_t k = 0; k < kNumResonances; ++k) {
    const double x = off.a[k] + t * slope.a[k];
    sum += w[k] * std::exp(-0.69314718055994530942 * x * x);
  }
  return sum;
}

template <LineshapeKind K>
inline double shape_sum(const Offsets& off, const Offsets& slope, const double* w, double t) {
  if constexpr (K == LineshapeKind::lorentzian) return lorentz_sum(off, slope, w, t);
  else return gauss_sum(off, slope, w, t);
}

Offsets project(const Vec3& b, double inv_gamma) {
  Offsets o;
  for (std::size_t k = 0; k < kNumResonances; ++k)
    o.a[k] = (kC[k][0] * b.x + kC[k][1] * b.y + kC[k][2] * b.z) * inv_gamma;
  return o;
}

Offsets shifted(const Offsets& base, const Offsets& slope, double dt) {
  Offsets o;
  for (std::size_t k = 0; k < kNumResonances; ++k) o.a[k] = base.a[k] + dt * slope.a[k];
  return o;
}

}  // namespace

void NoiseModel::validate() const {
  if (!(sigma_noise > 0.0) || !std::isfinite(sigma_noise)) throw ValidationError("sigma_noise must be > 0");
  if (!(sigma_bias >= 0.0) || !std::isfinite(sigma_bias)) throw ValidationError("sigma_bias must be >= 0");
  if (!(sigma_phi >= 0.0) || !std::isfinite(sigma_phi)) throw ValidationError("sigma_phi must be >= 0");
}

DifferenceSteps default_steps(const MeasurementGrid& grid) {
  grid.validate();
  DifferenceSteps s;
  s.bias = grid.n_bias() > 1 ? 0.5 * median_spacing(grid.bias_values) : 1e-6;
  s.phi = grid.n_phi() > 1 ? 0.5 * median_spacing(grid.phi_values) : kPi / 360.0;
  return s;
}

double effective_variance(const ModelParams& params, double b_bias, double phi, const NoiseModel& noise,
                          const DifferenceSteps& steps) {
  check_steps(steps);
  const double db = (pl_value(b_bias + steps.bias, phi, params) - pl_value(b_bias - steps.bias, phi, params)) /
                    (2.0 * steps.bias);
  const double dp =
      (pl_value(b_bias, phi + steps.phi, params) - pl_value(b_bias, phi - steps.phi, params)) / (2.0 * steps.phi);
  return noise.sigma_noise * noise.sigma_noise + db * db * noise.sigma_bias * noise.sigma_bias +
         dp * dp * noise.sigma_phi * noise.sigma_phi;
}

double log_likelihood(const ModelParams& params, const PLMap& data, const NoiseModel& noise,
                      const DifferenceSteps& steps) {
  if (data.values.empty()) throw ValidationError("data map is empty");
  check_steps(steps);
  double total = 0.0;
  for (std::size_t j = 0; j < data.grid.n_phi(); ++j) {
    for (std::size_t i = 0; i < data.grid.n_bias(); ++i) {
      const double b = data.grid.bias_values[i];
      const double phi = data.grid.phi_values[j];
      const double r = data.at(i, j) - pl_value(b, phi, params);
      const double var = effective_variance(params, b, phi, noise, steps);
      total += r * r / var + std::log(var) + kLn2Pi;
    }
  }
  return -0.5 * total;
}

double log_likelihood(const ModelParams& params, const PLMap& data, const NoiseModel& noise) {
  return log_likelihood(params, data, noise, default_steps(data.grid));
}

LikelihoodKernel::LikelihoodKernel(const PLMap& data, const LineshapeConfig& lineshape, const NoiseModel& noise,
                                   const DifferenceSteps& steps)
    : bias_(data.grid.bias_values),
      phi_(data.grid.phi_values),
      data_(data.values),
      lineshape_(lineshape),
      noise_(noise),
      steps_(steps) {
  data.validate();
  lineshape.validate();
  noise.validate();
  check_steps(steps);
}

double LikelihoodKernel::operator()(const RotationMatrix& orientation, const ExternalFieldParams& field) const {
  if (lineshape_.kind == LineshapeKind::gaussian) return evaluate<LineshapeKind::gaussian>(orientation, field);
  return evaluate<LineshapeKind::lorentzian>(orientation, field);
}

template <LineshapeKind K>
double LikelihoodKernel::evaluate(const RotationMatrix& o, const ExternalFieldParams& f) const {
  const std::size_t nb = bias_.size();
  const double inv_g = 1.0 / lineshape_.gamma;
  const double c = lineshape_.contrast;
  const double* w = lineshape_.weights.data();
  const double sn2 = noise_.sigma_noise * noise_.sigma_noise;
  const double sb2 = noise_.sigma_bias * noise_.sigma_bias;
  const double sp2 = noise_.sigma_phi * noise_.sigma_phi;
  const double inv_2hb = 1.0 / (2.0 * steps_.bias);
  const double inv_2hp = 1.0 / (2.0 * steps_.phi);
  const double* bias = bias_.data();

  // B_s(b) = O R_z(-phi) B_ext + b * O u_z, and R_z leaves u_z alone.
  const Offsets slope = project(o.col(2), inv_g);
  const Vec3 b_ext = total_lab_field(f, 0.0);

  std::vector<double> var(nb);
  double chi = 0.0;
  double logs = 0.0;
  for (std::size_t j = 0; j < phi_.size(); ++j) {
    const double phi = phi_[j];
    const Offsets mid = project(field_in_sample_frame(o, phi, b_ext), inv_g);
    const Offsets up = project(field_in_sample_frame(o, phi + steps_.phi, b_ext), inv_g);
    const Offsets dn = project(field_in_sample_frame(o, phi - steps_.phi, b_ext), inv_g);
    const Offsets bp = shifted(mid, slope, steps_.bias);
    const Offsets bm = shifted(mid, slope, -steps_.bias);
    const double* s = data_.data() + j * nb;
    double* v = var.data();

#pragma omp simd reduction(+ : chi)
    for (std::size_t i = 0; i < nb; ++i) {
      const double t = bias[i];
      const double pc = 1.0 - c * shape_sum<K>(mid, slope, w, t);
      const double db = c * (shape_sum<K>(bm, slope, w, t) - shape_sum<K>(bp, slope, w, t)) * inv_2hb;
      const double dp = c * (shape_sum<K>(dn, slope, w, t) - shape_sum<K>(up, slope, w, t)) * inv_2hp;
      const double vv = sn2 + db * db * sb2 + dp * dp * sp2;
      const double r = s[i] - pc;
      chi += r * r / vv;
      v[i] = vv;
    }
    for (std::size_t i = 0; i < nb; ++i) logs += std::log(v[i]);
  }
  return -0.5 * (chi + logs + static_cast<double>(data_.size()) * kLn2Pi);
}

template double LikelihoodKernel::evaluate<LineshapeKind::lorentzian>(const RotationMatrix&,
                                                                      const ExternalFieldParams&) const;
template double LikelihoodKernel::evaluate<LineshapeKind::gaussian>(const RotationMatrix&,
                                                                    const ExternalFieldParams&) const;

namespace {

struct Lattice {
  double db = 0.0, dphi = 0.0;
  std::size_t n_circle = 0;         // angles per full turn
  std::vector<std::size_t> k_phi;   // lattice index of each data angle
  std::size_t stride_bz = 0;        // b_z stride in bias steps
  std::size_t stride_phi0 = 0;      // phi0 stride in angle steps
};

bool is_integer(double v, long long& out, double tol = 1e-6) {
  const double r = std::round(v);
  if (std::fabs(v - r) > tol) return false;
  out = static_cast<long long>(r);
  return true;
}

// Uniform axis with stride a whole multiple of `unit`; stride 0 for one value.
bool uniform_multiple(const std::vector<double>& v, double unit, std::size_t& stride) {
  if (v.empty()) return false;
  if (v.size() == 1) {
    stride = 0;
    return true;
  }
  long long s = 0;
  if (!is_integer((v[1] - v[0]) / unit, s) || s < 1) return false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    long long k = 0;
    if (!is_integer((v[i] - v[0]) / unit, k) || k != static_cast<long long>(i) * s) return false;
  }
  stride = static_cast<std::size_t>(s);
  return true;
}

bool build_lattice(const PLMap& data, const DifferenceSteps& steps, const FieldGridAxes& axes, Lattice& lat) {
  if (!(steps.bias > 0.0) || !(steps.phi > 0.0)) return false;
  if (axes.b_z.empty() || axes.b_perp.empty() || axes.phi0.empty()) return false;
  lat.db = 2.0 * steps.bias;
  lat.dphi = 2.0 * steps.phi;
  long long turn = 0;
  if (!is_integer(kTwoPi / lat.dphi, turn, 1e-9) || turn < 1) return false;
  lat.n_circle = static_cast<std::size_t>(turn);

  std::size_t bias_stride = 0;
  const auto& bias = data.grid.bias_values;
  if (bias.size() > 1 && (!uniform_multiple(bias, lat.db, bias_stride) || bias_stride != 1)) return false;

  const auto& phi = data.grid.phi_values;
  lat.k_phi.clear();
  for (double p : phi) {
    long long k = 0;
    if (!is_integer((p - phi.front()) / lat.dphi, k)) return false;
    lat.k_phi.push_back(static_cast<std::size_t>(k) % lat.n_circle);
  }
  if (!uniform_multiple(axes.b_z, lat.db, lat.stride_bz)) return false;
  if (!uniform_multiple(axes.phi0, lat.dphi, lat.stride_phi0)) return false;
  return true;
}

// PL values along a lattice row: one fixed in-plane part, x runs over `xs`.
template <LineshapeKind K>
void pl_row(const Offsets& off, const Offsets& slope, const double* w, double c, const double* xs, std::size_t n,
            double* out) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 - c * shape_sum<K>(off, slope, w, xs[i]);
}

// Real 2-D array of shape rows x cols with its half spectrum, FFTW-allocated
// so every buffer has the alignment the shared plans were made with.
struct Spectrum {
  double* real = nullptr;
  fftw_complex* freq = nullptr;
  Spectrum(std::size_t rows, std::size_t cols) {
    real = fftw_alloc_real(rows * cols);
    freq = fftw_alloc_complex(rows * (cols / 2 + 1));
  }
  ~Spectrum() {
    fftw_free(real);
    fftw_free(freq);
  }
  Spectrum(const Spectrum&) = delete;
  Spectrum& operator=(const Spectrum&) = delete;
};

// Plan creation is not thread-safe in FFTW; the lock covers it.
std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

struct Plans {
  fftw_plan forward = nullptr, inverse = nullptr;
  Plans(std::size_t rows, std::size_t cols) {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    Spectrum probe(rows, cols);
    const int r = static_cast<int>(rows), c = static_cast<int>(cols);
    // ESTIMATE keeps the plan, and so the rounding, identical run to run
    forward = fftw_plan_dft_r2c_2d(r, c, probe.real, probe.freq, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_2d(r, c, probe.freq, probe.real, FFTW_ESTIMATE);
  }
  ~Plans() {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }
};

// Per b_perp slice the scan needs, for every (phase r, bias offset p0),
//   sum_k sum_i T[(r - k) mod K][p0 + i] X[k][i]
// for three (T, X) pairs. Along the angle lattice this is a circular
// convolution; along bias a linear correlation that never wraps because
// p0 + i < L. With X stored bias-reversed both become one circular 2-D
// convolution. Residuals are expanded about the PL baseline of 1 so the
// three terms stay small and cancel little:
//   W (s - m)^2 + ln var = W s'^2 - 2 W m' s' + (W m'^2 + ln var),  s' = s - 1, m' = m - 1.
template <LineshapeKind K>
void lattice_scan_impl(const PLMap& data, const RotationMatrix& o, const LineshapeConfig& ls, const NoiseModel& noise,
                       const FieldGridAxes& axes, const Lattice& lat, std::vector<double>& out) {
  const std::size_t nb = data.grid.n_bias();
  const std::size_t np = data.grid.n_phi();
  const std::size_t nbz = axes.b_z.size(), nbp = axes.b_perp.size(), n0 = axes.phi0.size();
  const std::size_t kc = lat.n_circle;
  const std::size_t np_lat = nb + (nbz - 1) * lat.stride_bz;  // lattice points along x
  const std::size_t nfreq = kc * (np_lat / 2 + 1);
  const double norm = 1.0 / static_cast<double>(kc * np_lat);

  const double inv_g = 1.0 / ls.gamma;
  const double* w = ls.weights.data();
  const double sn2 = noise.sigma_noise * noise.sigma_noise;
  const double sb2 = noise.sigma_bias * noise.sigma_bias;
  const double sp2 = noise.sigma_phi * noise.sigma_phi;
  const Offsets slope = project(o.col(2), inv_g);

  // x_p = b_0 + b_z0 + p db; half points sit at x_p - db/2 for p = 0..np_lat.
  const double x0 = data.grid.bias_values.front() + axes.b_z.front();
  std::vector<double> xs(np_lat), xh(np_lat + 1);
  for (std::size_t p = 0; p < np_lat; ++p) xs[p] = x0 + static_cast<double>(p) * lat.db;
  for (std::size_t p = 0; p <= np_lat; ++p) xh[p] = x0 + (static_cast<double>(p) - 0.5) * lat.db;
  // psi_q = phi0_0 - phi_first + q dphi
  const double psi0 = axes.phi0.front() - data.grid.phi_values.front();
  const double n_total = static_cast<double>(data.values.size());

  const Plans plans(kc, np_lat);
  // data side, shared by every slice: s'^2, s' and the point count
  Spectrum xa(kc, np_lat), xb(kc, np_lat), xc(kc, np_lat);
  std::fill(xa.real, xa.real + kc * np_lat, 0.0);
  std::fill(xb.real, xb.real + kc * np_lat, 0.0);
  std::fill(xc.real, xc.real + kc * np_lat, 0.0);
  for (std::size_t j = 0; j < np; ++j) {
    const std::size_t row = lat.k_phi[j] % kc;
    const double* s = data.values.data() + j * nb;
    for (std::size_t i = 0; i < nb; ++i) {
      const std::size_t col = (np_lat - i) % np_lat;
      const double d = s[i] - 1.0;
      xa.real[row * np_lat + col] += d * d;
      xb.real[row * np_lat + col] += d;
      xc.real[row * np_lat + col] += 1.0;
    }
  }
  for (Spectrum* x : {&xa, &xb, &xc}) fftw_execute_dft_r2c(plans.forward, x->real, x->freq);

  const auto nbp_s = static_cast<std::ptrdiff_t>(nbp);
#pragma omp parallel
  {
    Spectrum ta(kc, np_lat), tb(kc, np_lat), tc(kc, np_lat);
    std::vector<double> model(np_lat), fx(np_lat + 1), fpsi_lo(np_lat), fpsi_hi(np_lat);
#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t l = 0; l < nbp_s; ++l) {
      const double bp = axes.b_perp[static_cast<std::size_t>(l)];
      auto in_plane = [&](double psi) { return project(o * Vec3{bp * std::cos(psi), bp * std::sin(psi), 0.0}, inv_g); };
      pl_row<K>(in_plane(psi0 - 0.5 * lat.dphi), slope, w, ls.contrast, xs.data(), np_lat, fpsi_lo.data());
      for (std::size_t q = 0; q < kc; ++q) {
        const double psi = psi0 + static_cast<double>(q) * lat.dphi;
        const Offsets mid = in_plane(psi);
        pl_row<K>(mid, slope, w, ls.contrast, xs.data(), np_lat, model.data());
        pl_row<K>(mid, slope, w, ls.contrast, xh.data(), np_lat + 1, fx.data());
        pl_row<K>(in_plane(psi + 0.5 * lat.dphi), slope, w, ls.contrast, xs.data(), np_lat, fpsi_hi.data());
        double* a = ta.real + q * np_lat;
        double* b = tb.real + q * np_lat;
        double* c = tc.real + q * np_lat;
        for (std::size_t p = 0; p < np_lat; ++p) {
          const double db = (fx[p + 1] - fx[p]) / lat.db;
          const double dp = (fpsi_hi[p] - fpsi_lo[p]) / lat.dphi;
          const double var = sn2 + db * db * sb2 + dp * dp * sp2;
          const double wt = 1.0 / var;
          const double m = model[p] - 1.0;
          a[p] = wt;
          b[p] = -2.0 * wt * m;
          c[p] = wt * m * m + std::log(var);
        }
        std::swap(fpsi_lo, fpsi_hi);
      }
      fftw_execute_dft_r2c(plans.forward, ta.real, ta.freq);
      fftw_execute_dft_r2c(plans.forward, tb.real, tb.freq);
      fftw_execute_dft_r2c(plans.forward, tc.real, tc.freq);
      for (std::size_t f = 0; f < nfreq; ++f) {
        double re = 0.0, im = 0.0;
        for (const auto& [t, x] : {std::pair{&ta, &xa}, std::pair{&tb, &xb}, std::pair{&tc, &xc}}) {
          const double tr = t->freq[f][0], ti = t->freq[f][1];
          const double xr = x->freq[f][0], xi = x->freq[f][1];
          re += tr * xr - ti * xi;
          im += tr * xi + ti * xr;
        }
        ta.freq[f][0] = re;
        ta.freq[f][1] = im;
      }
      fftw_execute_dft_c2r(plans.inverse, ta.freq, ta.real);

      for (std::size_t mz = 0; mz < nbz; ++mz) {
        const std::size_t p0 = mz * lat.stride_bz;
        for (std::size_t n = 0; n < n0; ++n) {
          const std::size_t r = (n * lat.stride_phi0) % kc;
          const double acc = ta.real[r * np_lat + p0] * norm;
          out[(mz * nbp + static_cast<std::size_t>(l)) * n0 + n] = -0.5 * (acc + n_total * kLn2Pi);
        }
      }
    }
  }
}

}  // namespace

bool field_lattice_compatible(const PLMap& data, const DifferenceSteps& steps, const FieldGridAxes& axes) {
  Lattice lat;
  return build_lattice(data, steps, axes, lat);
}

std::vector<double> field_lattice_scan(const PLMap& data, const RotationMatrix& orientation,
                                       const LineshapeConfig& lineshape, const NoiseModel& noise,
                                       const DifferenceSteps& steps, const FieldGridAxes& axes) {
  data.validate();
  lineshape.validate();
  noise.validate();
  Lattice lat;
  if (!build_lattice(data, steps, axes, lat)) throw ValidationError("data and grid do not share a lattice");
  for (double bp : axes.b_perp)
    if (!(bp >= 0.0)) throw ValidationError("b_perp grid values must be >= 0");
  std::vector<double> out(axes.size());
  if (lineshape.kind == LineshapeKind::gaussian)
    lattice_scan_impl<LineshapeKind::gaussian>(data, orientation, lineshape, noise, axes, lat, out);
  else
    lattice_scan_impl<LineshapeKind::lorentzian>(data, orientation, lineshape, noise, axes, lat, out);
  return out;
}

}  // namespace nvmag
