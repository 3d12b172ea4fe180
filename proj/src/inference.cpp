#include "nvmag/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <random>

#include "nvmag/errors.hpp"

namespace nvmag {

using Point = std::array<double, 3>;

const char* to_string(InferenceMode m) { return m == InferenceMode::orientation ? "orientation" : "field"; }

// ---------------------------------------------------------------- axes

double ParamAxis::spacing() const {
  return periodic ? (upper - lower) / static_cast<double>(points) : (upper - lower) / static_cast<double>(points - 1);
}

double ParamAxis::value(std::size_t i) const { return lower + static_cast<double>(i) * spacing(); }

std::vector<double> ParamAxis::values() const {
  std::vector<double> v(points);
  for (std::size_t i = 0; i < points; ++i) v[i] = value(i);
  if (!periodic && points > 1) v.back() = upper;
  return v;
}

double ParamAxis::normalize(double v) const {
  if (periodic) return wrap_angle(v, period(), lower);
  return std::clamp(v, lower, upper);
}

double ParamAxis::distance(double a, double b) const {
  return periodic ? periodic_delta(a, b, period()) : a - b;
}

void ParamAxis::validate() const {
  if (!std::isfinite(lower) || !std::isfinite(upper) || !(upper > lower))
    throw ValidationError("axis '" + name + "': upper bound must exceed lower bound");
  if (points < 2) throw ValidationError("axis '" + name + "': at least 2 grid points required");
}

ParamSpace ParamSpace::orientation(std::size_t n_alpha, std::size_t n_beta, std::size_t n_zeta) {
  ParamSpace s;
  s.mode = InferenceMode::orientation;
  s.axes = {ParamAxis{"alpha", "rad", 0.0, kTwoPi, n_alpha, true},
            ParamAxis{"beta", "rad", 0.0, kThetaC, n_beta, false},
            ParamAxis{"zeta", "rad", 0.0, kZetaPeriod, n_zeta, true}};
  return s;
}

ParamSpace ParamSpace::field(double bz_lo, double bz_hi, std::size_t n_bz, double bp_max, std::size_t n_bp,
                             std::size_t n_phi0) {
  ParamSpace s;
  s.mode = InferenceMode::field;
  s.axes = {ParamAxis{"b_z", "T", bz_lo, bz_hi, n_bz, false}, ParamAxis{"b_perp", "T", 0.0, bp_max, n_bp, false},
            ParamAxis{"phi0", "rad", 0.0, kTwoPi, n_phi0, true}};
  return s;
}

void ParamSpace::validate() const {
  for (const auto& a : axes) a.validate();
  if (mode == InferenceMode::field && axes[1].lower < 0.0) throw ValidationError("b_perp axis must start at >= 0");
}

void SearchOptions::validate() const {
  if (!(mode_log_threshold >= 0.0)) throw ValidationError("mode threshold must be >= 0");
  if (suppression_radius < 0) throw ValidationError("suppression radius must be >= 0");
  if (max_candidates < 1) throw ValidationError("max_candidates must be >= 1");
  if (!(angle_resolution > 0.0) || !(field_resolution > 0.0)) throw ValidationError("resolutions must be > 0");
  if (!(shrink_factor > 1.0)) throw ValidationError("shrink factor must be > 1");
  if (local_points < 3 || local_points % 2 == 0) throw ValidationError("local grid needs an odd count >= 3");
  if (!(local_sigmas > 0.0)) throw ValidationError("local grid width must be > 0");
}

// ---------------------------------------------------------------- marginals

double Marginal::integral() const {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (density[i] + density[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

double Marginal::mean() const {
  double s = 0.0, n = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double h = x[i] - x[i - 1];
    s += 0.5 * h * (density[i] * x[i] + density[i - 1] * x[i - 1]);
    n += 0.5 * h * (density[i] + density[i - 1]);
  }
  return n > 0.0 ? s / n : std::numeric_limits<double>::quiet_NaN();
}

double Marginal::stddev() const {
  const double m = mean();
  double s = 0.0, n = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double h = x[i] - x[i - 1];
    const double a = x[i] - m, b = x[i - 1] - m;
    s += 0.5 * h * (density[i] * a * a + density[i - 1] * b * b);
    n += 0.5 * h * (density[i] + density[i - 1]);
  }
  return n > 0.0 ? std::sqrt(s / n) : std::numeric_limits<double>::quiet_NaN();
}

std::pair<double, double> Marginal::credible_interval(double level) const {
  if (x.size() < 2) return {x.empty() ? 0.0 : x[0], x.empty() ? 0.0 : x[0]};
  std::vector<double> cdf(x.size(), 0.0);
  for (std::size_t i = 1; i < x.size(); ++i)
    cdf[i] = cdf[i - 1] + 0.5 * (density[i] + density[i - 1]) * (x[i] - x[i - 1]);
  const double total = cdf.back();
  auto quantile = [&](double q) {
    const double target = q * total;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), target);
    if (it == cdf.begin()) return x.front();
    if (it == cdf.end()) return x.back();
    const std::size_t i = static_cast<std::size_t>(it - cdf.begin());
    // invert the quadratic CDF piece of a linear density
    const double h = x[i] - x[i - 1];
    const double d0 = density[i - 1], d1 = density[i];
    const double need = target - cdf[i - 1];
    const double slope = (d1 - d0) / h;
    double t;
    if (std::fabs(slope) < 1e-300 || std::fabs(slope * h) < 1e-12 * std::max(d0, d1)) {
      t = d0 > 0.0 ? need / d0 : 0.5 * h;
    } else {
      const double disc = std::max(0.0, d0 * d0 + 2.0 * slope * need);
      t = (std::sqrt(disc) - d0) / slope;
    }
    return x[i - 1] + std::clamp(t, 0.0, h);
  };
  const double tail = 0.5 * (1.0 - level);
  return {quantile(tail), quantile(1.0 - tail)};
}

std::size_t Marginal::argmax() const {
  return static_cast<std::size_t>(std::max_element(density.begin(), density.end()) - density.begin());
}

namespace {

void normalize_marginal(Marginal& m) {
  const double z = m.integral();
  if (z > 0.0)
    for (double& d : m.density) d /= z;
}

// ---------------------------------------------------------------- objective

class Objective {
 public:
  Objective(const PLMap& data, const ParamSpace& space, const FixedParams& fixed, const NoiseModel& noise,
            const DifferenceSteps& steps, bool reference)
      : data_(data), space_(space), fixed_(fixed), noise_(noise), steps_(steps), reference_(reference) {
    if (!reference_) kernel_.emplace(data, fixed.lineshape, noise, steps);
  }

  RotationMatrix orientation_of(const Point& p) const {
    return space_.mode == InferenceMode::orientation ? orientation_matrix(p[0], p[1], p[2]) : *fixed_.orientation;
  }
  ExternalFieldParams field_of(const Point& p) const {
    return space_.mode == InferenceMode::field ? ExternalFieldParams{p[0], p[1], p[2]} : *fixed_.field;
  }

  double operator()(const Point& p) const {
    if (reference_) {
      ModelParams mp{orientation_of(p), field_of(p), fixed_.lineshape};
      return log_likelihood(mp, data_, noise_, steps_);
    }
    return (*kernel_)(orientation_of(p), field_of(p));
  }

  bool parallel() const { return !reference_; }

 private:
  const PLMap& data_;
  const ParamSpace& space_;
  const FixedParams& fixed_;
  NoiseModel noise_;
  DifferenceSteps steps_;
  bool reference_;
  std::optional<LikelihoodKernel> kernel_;
};

Point normalized(const ParamSpace& s, Point p) {
  for (int a = 0; a < 3; ++a) p[a] = s.axes[a].normalize(p[a]);
  return p;
}

double resolution(const ParamAxis& a, const SearchOptions& o) {
  return a.unit == "T" ? o.field_resolution : o.angle_resolution;
}

// ---------------------------------------------------------------- coarse scan

std::vector<double> coarse_scan(const Objective& f, const ParamSpace& s) {
  const std::size_t n1 = s.axes[1].points, n2 = s.axes[2].points;
  std::vector<double> out(s.size());
  const auto total = static_cast<std::ptrdiff_t>(out.size());
  const bool par = f.parallel();
#pragma omp parallel for schedule(dynamic, 32) if (par)
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    const auto u = static_cast<std::size_t>(idx);
    const std::size_t i2 = u % n2, i1 = (u / n2) % n1, i0 = u / (n1 * n2);
    out[u] = f({s.axes[0].value(i0), s.axes[1].value(i1), s.axes[2].value(i2)});
  }
  return out;
}

// Offset index along an axis; false when it leaves a closed axis.
bool step_index(const ParamAxis& a, std::size_t i, long d, std::size_t& out) {
  const long n = static_cast<long>(a.points);
  long j = static_cast<long>(i) + d;
  if (a.periodic) {
    j = ((j % n) + n) % n;
  } else if (j < 0 || j >= n) {
    return false;
  }
  out = static_cast<std::size_t>(j);
  return true;
}

std::vector<std::array<std::size_t, 3>> coarse_candidates(const std::vector<double>& ld, const ParamSpace& s,
                                                          const SearchOptions& o) {
  const std::size_t n1 = s.axes[1].points, n2 = s.axes[2].points;
  auto unpack = [&](std::size_t u) { return std::array<std::size_t, 3>{u / (n1 * n2), (u / n2) % n1, u % n2}; };

  auto is_local_max = [&](std::size_t u) {
    const auto c = unpack(u);
    for (long d0 = -1; d0 <= 1; ++d0)
      for (long d1 = -1; d1 <= 1; ++d1)
        for (long d2 = -1; d2 <= 1; ++d2) {
          if (d0 == 0 && d1 == 0 && d2 == 0) continue;
          std::array<std::size_t, 3> q{};
          if (!step_index(s.axes[0], c[0], d0, q[0]) || !step_index(s.axes[1], c[1], d1, q[1]) ||
              !step_index(s.axes[2], c[2], d2, q[2]))
            continue;
          if (ld[s.index(q[0], q[1], q[2])] > ld[u]) return false;
        }
    return true;
  };
  auto cell_distance = [&](const std::array<std::size_t, 3>& a, const std::array<std::size_t, 3>& b) {
    long worst = 0;
    for (int k = 0; k < 3; ++k) {
      long d = std::labs(static_cast<long>(a[k]) - static_cast<long>(b[k]));
      if (s.axes[k].periodic) d = std::min(d, static_cast<long>(s.axes[k].points) - d);
      worst = std::max(worst, d);
    }
    return worst;
  };

  std::vector<std::size_t> order(ld.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ld[a] > ld[b]; });

  std::vector<std::array<std::size_t, 3>> picked;
  for (std::size_t u : order) {
    if (picked.size() >= o.max_candidates) break;
    const auto c = unpack(u);
    bool suppressed = false;
    for (const auto& p : picked)
      if (cell_distance(p, c) <= o.suppression_radius) suppressed = true;
    if (suppressed || !is_local_max(u)) continue;
    picked.push_back(c);
  }
  return picked;
}

// ---------------------------------------------------------------- refinement

struct Refined {
  Point x{};
  double f = -std::numeric_limits<double>::infinity();
};

Refined refine(const Objective& f, const ParamSpace& s, const SearchOptions& o, Point start, Point h) {
  Refined r;
  r.x = normalized(s, start);
  r.f = f(r.x);
  Point res{};
  for (int a = 0; a < 3; ++a) res[a] = resolution(s.axes[a], o);
  for (int iter = 0; iter < 2000; ++iter) {
    Point best = r.x;
    double fbest = r.f;
    for (int d0 = -1; d0 <= 1; ++d0)
      for (int d1 = -1; d1 <= 1; ++d1)
        for (int d2 = -1; d2 <= 1; ++d2) {
          if (d0 == 0 && d1 == 0 && d2 == 0) continue;
          const Point y = normalized(s, {r.x[0] + d0 * h[0], r.x[1] + d1 * h[1], r.x[2] + d2 * h[2]});
          if (y == r.x) continue;
          const double fy = f(y);
          if (fy > fbest) {
            fbest = fy;
            best = y;
          }
        }
    if (best != r.x) {
      r.x = best;
      r.f = fbest;
      continue;
    }
    bool done = true;
    for (int a = 0; a < 3; ++a) {
      if (h[a] >= res[a]) {
        h[a] /= o.shrink_factor;
        done = false;
      }
    }
    if (done) break;
  }
  return r;
}

bool same_cell(const ParamSpace& s, const Point& a, const Point& b) {
  for (int k = 0; k < 3; ++k)
    if (std::fabs(s.axes[k].distance(a[k], b[k])) >= s.axes[k].spacing()) return false;
  return true;
}

std::vector<Refined> dedupe(std::vector<Refined> v, const ParamSpace& s) {
  std::stable_sort(v.begin(), v.end(), [](const Refined& a, const Refined& b) { return a.f > b.f; });
  std::vector<Refined> out;
  for (const auto& r : v) {
    const bool dup = std::any_of(out.begin(), out.end(), [&](const Refined& k) { return same_cell(s, k.x, r.x); });
    if (!dup) out.push_back(r);
  }
  return out;
}

std::vector<Refined> refine_all(const Objective& f, const ParamSpace& s, const SearchOptions& o,
                                const std::vector<Point>& starts, const Point& h) {
  std::vector<Refined> out(starts.size());
  const auto n = static_cast<std::ptrdiff_t>(starts.size());
  const bool par = f.parallel();
#pragma omp parallel for schedule(dynamic, 1) if (par)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = refine(f, s, o, starts[static_cast<std::size_t>(i)], h);
  return out;
}

// ---------------------------------------------------------------- Laplace

using Mat3x3 = std::array<std::array<double, 3>, 3>;

bool invert_negative_definite(const Mat3x3& h, Mat3x3& cov) {
  // cov = (-h)^-1, only if -h is positive definite
  Mat3x3 a{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a[i][j] = -h[i][j];
  const double m1 = a[0][0];
  const double m2 = a[0][0] * a[1][1] - a[0][1] * a[1][0];
  const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                     a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                     a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  if (!(m1 > 0.0 && m2 > 0.0 && det > 0.0)) return false;
  cov[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
  cov[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
  cov[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
  cov[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
  cov[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
  cov[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
  cov[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
  cov[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
  cov[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
  return true;
}

double axis_span(const ParamAxis& a) { return a.periodic ? 0.5 * a.period() : a.upper - a.lower; }

// Step along axis k with the stencil kept inside a closed box.
Point offset(const Point& x, int k, double d) {
  Point y = x;
  y[k] += d;
  return y;
}

Mat3x3 laplace_covariance(const Objective& f, const ParamSpace& s, const Refined& m) {
  Point h{};
  Point dir{1.0, 1.0, 1.0};  // -1 when the + side is outside a closed axis
  Mat3x3 hess{};
  const double f0 = m.f;
  for (int k = 0; k < 3; ++k) {
    const ParamAxis& ax = s.axes[k];
    double step = ax.spacing() / 100.0;
    double curv = 0.0;
    for (int it = 0; it < 12; ++it) {
      step = std::min(step, 0.5 * axis_span(ax));
      double fp, fm;
      if (!ax.periodic && m.x[k] + step > ax.upper) {
        dir[k] = -1.0;
        fp = f(offset(m.x, k, -step));
        fm = f(offset(m.x, k, -2.0 * step));
        curv = (fm - 2.0 * fp + f0);
      } else if (!ax.periodic && m.x[k] - step < ax.lower) {
        fp = f(offset(m.x, k, step));
        fm = f(offset(m.x, k, 2.0 * step));
        curv = (fm - 2.0 * fp + f0);
      } else {
        fp = f(normalized(s, offset(m.x, k, step)));
        fm = f(normalized(s, offset(m.x, k, -step)));
        curv = fp + fm - 2.0 * f0;
      }
      const double drop = -0.5 * curv;  // about (step / sigma)^2 / 2
      if (drop > 0.25 && drop < 4.0) break;
      if (!(drop > 0.0)) {
        if (step >= 0.5 * axis_span(ax)) break;
        step *= 4.0;
        continue;
      }
      const double next = step * std::sqrt(1.0 / drop);
      if (next >= 0.5 * axis_span(ax) && step >= 0.5 * axis_span(ax)) break;
      step = next;
    }
    h[k] = step;
    hess[k][k] = curv / (step * step);
  }
  // mixed terms; skipped near closed bounds
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      const ParamAxis& A = s.axes[a];
      const ParamAxis& B = s.axes[b];
      const bool inside = (A.periodic || (m.x[a] - h[a] >= A.lower && m.x[a] + h[a] <= A.upper)) &&
                          (B.periodic || (m.x[b] - h[b] >= B.lower && m.x[b] + h[b] <= B.upper));
      if (!inside) continue;
      auto at = [&](double sa, double sb) {
        Point y = m.x;
        y[a] += sa * h[a];
        y[b] += sb * h[b];
        return f(normalized(s, y));
      };
      hess[a][b] = hess[b][a] = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[a] * h[b]);
    }
  }
  Mat3x3 cov{};
  if (!invert_negative_definite(hess, cov)) {
    cov = {};
    for (int k = 0; k < 3; ++k) {
      const double span = axis_span(s.axes[k]);
      cov[k][k] = hess[k][k] < 0.0 ? -1.0 / hess[k][k] : span * span;
    }
  }
  for (int k = 0; k < 3; ++k) {
    const double span = axis_span(s.axes[k]);
    if (!(cov[k][k] > 0.0) || !std::isfinite(cov[k][k])) cov[k][k] = h[k] * h[k];
    cov[k][k] = std::min(cov[k][k], span * span);
  }
  return cov;
}

// ---------------------------------------------------------------- local grid

std::vector<double> trapezoid_weights(const std::vector<double>& x) {
  std::vector<double> w(x.size(), 0.0);
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double h = 0.5 * (x[i] - x[i - 1]);
    w[i - 1] += h;
    w[i] += h;
  }
  return w;
}

void local_analysis(const Objective& f, const ParamSpace& s, const SearchOptions& o, Mode& mode) {
  const std::size_t n = o.local_points;
  std::array<std::vector<double>, 3> xs;
  for (int k = 0; k < 3; ++k) {
    const ParamAxis& ax = s.axes[k];
    double half = o.local_sigmas * std::sqrt(mode.covariance[k][k]);
    double lo, hi;
    if (ax.periodic) {
      half = std::min(half, 0.5 * ax.period());
      lo = mode.point[k] - half;
      hi = mode.point[k] + half;
    } else {
      lo = std::max(ax.lower, mode.point[k] - half);
      hi = std::min(ax.upper, mode.point[k] + half);
    }
    if (!(hi > lo)) hi = lo + std::max(1e-15, std::fabs(lo) * 1e-12);
    xs[k] = MeasurementGrid::linspace(lo, hi, n);
  }

  std::vector<double> ld(n * n * n);
  const auto total = static_cast<std::ptrdiff_t>(ld.size());
  const bool par = f.parallel();
#pragma omp parallel for schedule(dynamic, 16) if (par)
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    const auto u = static_cast<std::size_t>(idx);
    const Point p{xs[0][u / (n * n)], xs[1][(u / n) % n], xs[2][u % n]};
    ld[u] = f(normalized(s, p));
  }
  const double top = std::max(*std::max_element(ld.begin(), ld.end()), mode.log_density);

  std::array<std::vector<double>, 3> tw;
  for (int k = 0; k < 3; ++k) tw[k] = trapezoid_weights(xs[k]);
  std::array<std::vector<double>, 3> marg;
  for (int k = 0; k < 3; ++k) marg[k].assign(n, 0.0);
  double mass = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c) {
        const double e = std::exp(ld[(a * n + b) * n + c] - top);
        marg[0][a] += e * tw[1][b] * tw[2][c];
        marg[1][b] += e * tw[0][a] * tw[2][c];
        marg[2][c] += e * tw[0][a] * tw[1][b];
        mass += e * tw[0][a] * tw[1][b] * tw[2][c];
      }
  mode.log_mass = top + std::log(mass);
  for (int k = 0; k < 3; ++k) {
    Marginal m{s.axes[k].name, s.axes[k].unit, xs[k], marg[k]};
    normalize_marginal(m);
    mode.stddev[k] = m.stddev();
    mode.interval95[k] = m.credible_interval(0.95);
    mode.marginals[k] = std::move(m);
  }
}

double interpolate(const Marginal& m, double x) {
  if (m.x.empty() || x < m.x.front() || x > m.x.back()) return 0.0;
  const auto it = std::upper_bound(m.x.begin(), m.x.end(), x);
  if (it == m.x.end()) return m.density.back();
  const std::size_t i = static_cast<std::size_t>(it - m.x.begin());
  if (i == 0) return m.density.front();
  const double t = (x - m.x[i - 1]) / (m.x[i] - m.x[i - 1]);
  return m.density[i - 1] + t * (m.density[i] - m.density[i - 1]);
}

Marginal mixture(const std::vector<Mode>& modes, int k, const ParamAxis& ax) {
  Marginal out{ax.name, ax.unit, {}, {}};
  for (const auto& m : modes) out.x.insert(out.x.end(), m.marginals[k].x.begin(), m.marginals[k].x.end());
  std::sort(out.x.begin(), out.x.end());
  out.x.erase(std::unique(out.x.begin(), out.x.end()), out.x.end());
  out.density.assign(out.x.size(), 0.0);
  for (std::size_t i = 0; i < out.x.size(); ++i)
    for (const auto& m : modes) out.density[i] += m.weight * interpolate(m.marginals[k], out.x[i]);
  normalize_marginal(out);
  return out;
}

std::array<Marginal, 3> coarse_marginals(const std::vector<double>& ld, const ParamSpace& s) {
  const double top = *std::max_element(ld.begin(), ld.end());
  std::array<Marginal, 3> out;
  for (int k = 0; k < 3; ++k) {
    out[k] = {s.axes[k].name, s.axes[k].unit, s.axes[k].values(), std::vector<double>(s.axes[k].points, 0.0)};
  }
  const std::size_t n0 = s.axes[0].points, n1 = s.axes[1].points, n2 = s.axes[2].points;
  for (std::size_t a = 0; a < n0; ++a)
    for (std::size_t b = 0; b < n1; ++b)
      for (std::size_t c = 0; c < n2; ++c) {
        const double e = std::exp(ld[(a * n1 + b) * n2 + c] - top);
        out[0].density[a] += e;
        out[1].density[b] += e;
        out[2].density[c] += e;
      }
  for (auto& m : out) normalize_marginal(m);
  return out;
}

double log_sum_exp(const std::vector<double>& v) {
  const double top = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

void check_fixed(const ParamSpace& space, const FixedParams& fixed) {
  if (space.mode == InferenceMode::orientation && !fixed.field)
    throw ValidationError("orientation inference needs a known field");
  if (space.mode == InferenceMode::field && !fixed.orientation)
    throw ValidationError("field inference needs a known orientation");
  if (fixed.field) (void)fixed.field->normalized();
  fixed.lineshape.validate();
}

}  // namespace

// ---------------------------------------------------------------- driver

Posterior evaluate_posterior(const PLMap& data, const ParamSpace& space, const FixedParams& fixed,
                             const NoiseModel& noise, const SearchOptions& options) {
  data.validate();
  if (data.values.empty()) throw ValidationError("data map is empty");
  space.validate();
  options.validate();
  noise.validate();
  check_fixed(space, fixed);
  const DifferenceSteps steps = options.steps ? *options.steps : default_steps(data.grid);

  Posterior post;
  post.space = space;
  const Objective f(data, space, fixed, noise, steps, options.reference);

  // 1. coarse grid
  FieldGridAxes lattice_axes;
  if (space.mode == InferenceMode::field) {
    lattice_axes = {space.axes[0].values(), space.axes[1].values(), space.axes[2].values()};
  }
  if (space.mode == InferenceMode::field && options.use_lattice && !options.reference &&
      field_lattice_compatible(data, steps, lattice_axes)) {
    post.log_density = field_lattice_scan(data, *fixed.orientation, fixed.lineshape, noise, steps, lattice_axes);
    post.used_lattice = true;
  } else {
    post.log_density = coarse_scan(f, space);
  }
  for (double v : post.log_density)
    if (!std::isfinite(v)) throw std::runtime_error("non-finite log-likelihood on the coarse grid");

  post.coarse_marginals = coarse_marginals(post.log_density, space);
  double cell = 1.0;
  for (const auto& a : space.axes) cell *= a.spacing();
  post.evidence_proxy = log_sum_exp(post.log_density) + std::log(cell);

  // 2-3. candidates and refinement
  const auto cands = coarse_candidates(post.log_density, space, options);
  std::vector<Point> starts;
  for (const auto& c : cands) starts.push_back({space.axes[0].value(c[0]), space.axes[1].value(c[1]), space.axes[2].value(c[2])});
  const Point h0{space.axes[0].spacing(), space.axes[1].spacing(), space.axes[2].spacing()};
  std::vector<Refined> refined = dedupe(refine_all(f, space, options, starts, h0), space);

  // symmetry twins of each orientation mode are modes too; seed them directly
  if (space.mode == InferenceMode::orientation) {
    std::vector<Point> twins;
    for (const auto& r : refined) {
      for (const auto& rep : canonicalize(orientation_matrix(r.x[0], r.x[1], r.x[2]))) {
        const Point p{rep.alpha, rep.beta, rep.zeta};
        const bool known = std::any_of(refined.begin(), refined.end(), [&](const Refined& k) { return same_cell(space, k.x, p); }) ||
                           std::any_of(twins.begin(), twins.end(), [&](const Point& t) { return same_cell(space, t, p); });
        if (!known) twins.push_back(p);
      }
    }
    if (!twins.empty()) {
      Point ht{};
      for (int k = 0; k < 3; ++k) ht[k] = resolution(space.axes[k], options) * options.shrink_factor * options.shrink_factor;
      auto extra = refine_all(f, space, options, twins, ht);
      refined.insert(refined.end(), extra.begin(), extra.end());
      refined = dedupe(std::move(refined), space);
    }
  }

  // 4. threshold on refined values
  const double best = refined.front().f;
  std::vector<Refined> kept;
  for (const auto& r : refined)
    if (r.f >= best - options.mode_log_threshold) kept.push_back(r);

  // 5. per-mode analysis
  for (const auto& r : kept) {
    Mode m;
    m.point = r.x;
    m.log_density = r.f;
    m.covariance = laplace_covariance(f, space, r);
    local_analysis(f, space, options, m);
    post.modes.push_back(std::move(m));
  }
  std::vector<double> masses;
  for (const auto& m : post.modes) masses.push_back(m.log_mass);
  const double lse = log_sum_exp(masses);
  for (auto& m : post.modes) m.weight = std::exp(m.log_mass - lse);

  // 6. global marginals
  for (int k = 0; k < 3; ++k) post.marginals[k] = mixture(post.modes, k, space.axes[k]);
  return post;
}

Posterior infer_orientation(const PLMap& data, const ExternalFieldParams& known_field,
                            const LineshapeConfig& lineshape, const NoiseModel& noise, const ParamSpace& space,
                            const SearchOptions& options) {
  if (space.mode != InferenceMode::orientation) throw ValidationError("expected an orientation parameter space");
  FixedParams fixed;
  fixed.field = known_field.normalized();
  fixed.lineshape = lineshape;
  return evaluate_posterior(data, space, fixed, noise, options);
}

std::pair<Vec3, double> nearest_symmetry_axis(const Vec3& direction) {
  const Vec3 d = normalized(direction);
  std::vector<Vec3> family = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, -1, 0}, {1, 0, 1},
                              {1, 0, -1}, {0, 1, 1}, {0, 1, -1}, {1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  Vec3 best_axis;
  double best = kPi;
  for (const Vec3& f : family) {
    const Vec3 u = normalized(f);
    const double c = std::fabs(dot(u, d));
    const double s = norm(cross(u, d));
    const double ang = std::atan2(s, c);
    if (ang < best) {
      best = ang;
      best_axis = f;
    }
  }
  return {best_axis, best};
}

ParamSpace snap_field_space(const ParamSpace& space, const PLMap& data, const DifferenceSteps& steps,
                            std::vector<std::string>* notes) {
  ParamSpace out = space;
  if (space.mode != InferenceMode::field) return out;
  const auto& bias = data.grid.bias_values;
  const double db = 2.0 * steps.bias;
  const double dphi = 2.0 * steps.phi;
  char buf[256];

  bool bias_uniform = bias.size() > 1 && db > 0.0;
  for (std::size_t i = 1; bias_uniform && i < bias.size(); ++i)
    bias_uniform = std::fabs((bias[i] - bias[0]) / db - static_cast<double>(i)) < 1e-6;
  ParamAxis& bz = out.axes[0];
  if (bias_uniform) {
    const double stride = std::max(1.0, std::round(bz.spacing() / db));
    const double step = stride * db;
    const double centre = 0.5 * (bz.lower + bz.upper);
    const double half_n = std::max(1.0, std::floor(0.5 * (bz.upper - bz.lower) / step + 1e-9));
    const std::size_t n = static_cast<std::size_t>(2.0 * half_n + 1.0);
    if (n != bz.points || std::fabs(step - bz.spacing()) > 1e-9 * step) {
      bz.lower = centre - half_n * step;
      bz.upper = centre + half_n * step;
      bz.points = n;
      if (notes) {
        std::snprintf(buf, sizeof buf, "b_z grid snapped to %zu points over [%.6g, %.6g] T (stride %.0f bias steps)",
                      n, bz.lower, bz.upper, stride);
        notes->push_back(buf);
      }
    }
  }
  ParamAxis& p0 = out.axes[2];
  const double turns = kTwoPi / dphi;
  if (dphi > 0.0 && std::fabs(turns - std::round(turns)) < 1e-9 && std::fabs(p0.period() - kTwoPi) < 1e-12) {
    const auto k = static_cast<std::size_t>(std::round(turns));
    std::size_t best = k;
    for (std::size_t d = 1; d <= k; ++d) {
      if (k % d != 0) continue;
      const auto diff = [&](std::size_t v) { return std::labs(static_cast<long>(v) - static_cast<long>(p0.points)); };
      if (diff(d) < diff(best) || (diff(d) == diff(best) && d > best)) best = d;
    }
    if (best != p0.points && best >= 2) {
      if (notes) {
        std::snprintf(buf, sizeof buf, "phi0 grid snapped from %zu to %zu points", p0.points, best);
        notes->push_back(buf);
      }
      p0.points = best;
    }
  }
  return out;
}

Posterior infer_field(const PLMap& data, const RotationMatrix& known_orientation, const LineshapeConfig& lineshape,
                      const NoiseModel& noise, const ParamSpace& space, const SearchOptions& options) {
  if (space.mode != InferenceMode::field) throw ValidationError("expected a field parameter space");
  data.validate();
  const DifferenceSteps steps = options.steps ? *options.steps : default_steps(data.grid);
  std::vector<std::string> notes;
  const ParamSpace snapped = options.use_lattice ? snap_field_space(space, data, steps, &notes) : space;

  FixedParams fixed;
  fixed.orientation = known_orientation;
  fixed.lineshape = lineshape;
  SearchOptions opts = options;
  opts.steps = steps;
  Posterior post = evaluate_posterior(data, snapped, fixed, noise, opts);
  post.notes = std::move(notes);

  const auto [axis, angle] = nearest_symmetry_axis(known_orientation * kUnitZ);
  if (angle < 1e-3) {
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "lab z axis lies %.2e rad from crystal direction [%g %g %g]; the field is only determined up to "
                  "the rotational symmetry of that axis",
                  angle, axis.x, axis.y, axis.z);
    post.warnings.emplace_back(buf);
  }
  return post;
}

// ---------------------------------------------------------------- scaling

std::vector<ScalingRow> scaling_study(const PLMap& data, const RotationMatrix& orientation,
                                      const LineshapeConfig& lineshape, const NoiseModel& noise,
                                      const std::vector<std::size_t>& ns, std::size_t repetitions,
                                      std::uint64_t seed, const ParamSpace& space, const SearchOptions& options) {
  data.validate();
  if (repetitions < 2) throw ValidationError("scaling study needs at least 2 repetitions");
  if (ns.empty()) throw ValidationError("scaling study needs at least one N");
  const std::size_t np = data.grid.n_phi();
  for (std::size_t n : ns)
    if (n < 1 || n > np) throw ValidationError("N must lie in [1, " + std::to_string(np) + "]");

  SearchOptions opts = options;
  if (!opts.steps) opts.steps = default_steps(data.grid);

  std::mt19937_64 rng(seed);
  std::vector<ScalingRow> rows;
  std::vector<std::size_t> pool(np);
  for (std::size_t n : ns) {
    ScalingRow row;
    row.n_traces = n;
    for (std::size_t r = 0; r < repetitions; ++r) {
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, np - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
      std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
      std::sort(chosen.begin(), chosen.end());
      const Posterior post = infer_field(data.select_phi(chosen), orientation, lineshape, noise, space, opts);
      row.widths.push_back(post.marginals[1].stddev());
    }
    const double mean = std::accumulate(row.widths.begin(), row.widths.end(), 0.0) / static_cast<double>(repetitions);
    double ss = 0.0;
    for (double w : row.widths) ss += (w - mean) * (w - mean);
    row.mean_width = mean;
    row.std_width = std::sqrt(ss / static_cast<double>(repetitions - 1));
    rows.push_back(std::move(row));
  }
  return rows;
}

double scaling_slope(const std::vector<ScalingRow>& rows) {
  if (rows.size() < 2) throw ValidationError("slope needs at least two rows");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    const double x = std::log(static_cast<double>(r.n_traces));
    const double y = std::log(r.mean_width);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::string format_with_uncertainty(double value, double sigma) {
  char buf[64];
  if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(value)) {
    std::snprintf(buf, sizeof buf, "%.6g", value);
    return buf;
  }
  int decimals = -static_cast<int>(std::floor(std::log10(sigma)));
  long digit = std::lround(sigma * std::pow(10.0, decimals));
  if (digit >= 10) {
    --decimals;
    digit = std::lround(sigma * std::pow(10.0, decimals));
  }
  if (decimals < 0) {
    std::snprintf(buf, sizeof buf, "%.0f(%.0f)", value, sigma);
    return buf;
  }
  std::snprintf(buf, sizeof buf, "%.*f(%ld)", decimals, value, digit);
  return buf;
}

}  // namespace nvmag
