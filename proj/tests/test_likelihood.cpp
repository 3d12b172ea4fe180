#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "doctest.h"
#include "nvmag/errors.hpp"
#include "nvmag/geometry.hpp"
#include "nvmag/likelihood.hpp"

using namespace nvmag;

namespace {

// d PL / d b_bias in closed form: each delta is linear in the bias with slope c_k . (O u_z).
double analytic_bias_derivative(const ModelParams& p, double b, double phi) {
  const Vec3 bs = field_in_sample_frame(p.orientation, phi, total_lab_field(p.field, b));
  const Vec3 dz = p.orientation * kUnitZ;
  const auto d = resonance_deltas(bs);
  const auto s = resonance_deltas(dz);
  const double g2 = p.lineshape.gamma * p.lineshape.gamma;
  double sum = 0.0;
  for (std::size_t k = 0; k < kNumResonances; ++k) {
    const double den = d[k].delta * d[k].delta + g2;
    sum += p.lineshape.weights[k] * (-2.0 * d[k].delta * g2 / (den * den)) * s[k].delta;
  }
  return -p.lineshape.contrast * sum;
}

PLMap noisy_map(const MeasurementGrid& g, const ModelParams& p, double sigma, std::uint64_t seed) {
  PLMap m = pl_map(g, p);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (double& v : m.values) v += n(rng);
  return m;
}

ModelParams generic_params() {
  ModelParams p;
  p.orientation = orientation_matrix(4.7587, 0.2342, 0.4775);
  p.field = {1.165e-3, 0.8091e-3, 0.7196};
  return p;
}

MeasurementGrid default_grid() {
  return {MeasurementGrid::linspace(-3e-3, 3e-3, 154), MeasurementGrid::angles(0.0, kTwoPi, 72)};
}

}  // namespace

TEST_CASE("default steps") {
  const auto s = default_steps(default_grid());
  CHECK(s.bias == doctest::Approx(0.5 * 6e-3 / 153).epsilon(1e-12));
  CHECK(s.phi == doctest::Approx(0.5 * kTwoPi / 72).epsilon(1e-12));
  const auto single = default_steps({{1e-3}, {0.2}});
  CHECK(single.bias == 1e-6);
  CHECK(single.phi == kPi / 360.0);
}

TEST_CASE("effective variance") {
  NoiseModel noise;
  const DifferenceSteps steps{1e-6, 1e-3};
  ModelParams p;
  p.orientation = RotationMatrix::identity();
  // far from every plane
  p.field = {0.0, std::hypot(9e-3, 3e-3), std::atan2(3e-3, 9e-3)};
  CHECK(std::fabs(effective_variance(p, 5.5e-3, 0.0, noise, steps) - noise.sigma_noise * noise.sigma_noise) < 1e-12);

  NoiseModel quiet = noise;
  quiet.sigma_bias = quiet.sigma_phi = 0.0;
  const ModelParams g = generic_params();
  CHECK(effective_variance(g, 0.3e-3, 1.0, quiet, steps) == quiet.sigma_noise * quiet.sigma_noise);
  CHECK_THROWS_AS(effective_variance(g, 0.0, 0.0, noise, {0.0, 1e-3}), ValidationError);
}

TEST_CASE("finite differences match the analytic bias derivative on dip flanks") {
  const ModelParams p = generic_params();
  NoiseModel bias_only;
  bias_only.sigma_noise = 1e-12;
  bias_only.sigma_phi = 0.0;
  bias_only.sigma_bias = 1.0;
  const DifferenceSteps steps{p.lineshape.gamma / 100.0, 1e-4};
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> ub(-3e-3, 3e-3), ua(0.0, kTwoPi);
  int flanks = 0;
  for (int t = 0; t < 4000 && flanks < 200; ++t) {
    const double b = ub(rng), phi = ua(rng);
    const double exact = analytic_bias_derivative(p, b, phi);
    if (std::fabs(exact) < 5.0) continue;  // only points on a flank
    ++flanks;
    const double fd = std::sqrt(effective_variance(p, b, phi, bias_only, steps) - 1e-24);
    CHECK(std::fabs(fd - std::fabs(exact)) <= 0.01 * std::fabs(exact));
  }
  CHECK(flanks == 200);
}

TEST_CASE("log likelihood at zero residual") {
  const MeasurementGrid g{MeasurementGrid::linspace(-3e-3, 3e-3, 40), MeasurementGrid::angles(0.0, kTwoPi, 30)};
  const ModelParams p = generic_params();
  const PLMap m = pl_map(g, p);
  NoiseModel noise;
  noise.sigma_bias = noise.sigma_phi = 0.0;
  const double expect = -0.5 * 1200.0 * std::log(kTwoPi * noise.sigma_noise * noise.sigma_noise);
  CHECK(log_likelihood(p, m, noise) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("reduced chi-square of seeded noise") {
  const ModelParams p = generic_params();
  const MeasurementGrid g{MeasurementGrid::linspace(-3e-3, 3e-3, 50), MeasurementGrid::angles(0.0, kTwoPi, 24)};
  NoiseModel noise;
  noise.sigma_bias = noise.sigma_phi = 0.0;
  const PLMap m = noisy_map(g, p, noise.sigma_noise, 2024);
  const double ll = log_likelihood(p, m, noise);
  const double n = static_cast<double>(m.values.size());
  const double chi2 = -2.0 * ll - n * std::log(kTwoPi * noise.sigma_noise * noise.sigma_noise);
  CHECK(chi2 / n > 0.8);
  CHECK(chi2 / n < 1.2);
}

TEST_CASE("likelihood ordering under a b_z offset") {
  const ModelParams p = generic_params();
  const PLMap m = noisy_map(default_grid(), p, 0.0018, 5);
  const NoiseModel noise;
  const LikelihoodKernel k(m, p.lineshape, noise, default_steps(m.grid));
  ExternalFieldParams off = p.field;
  off.b_z += 10 * p.lineshape.gamma;
  CHECK(k(p.orientation, p.field) - k(p.orientation, off) > 100.0);
}

TEST_CASE("kernel agrees with the reference") {
  const MeasurementGrid g{MeasurementGrid::linspace(-3e-3, 3e-3, 61), MeasurementGrid::angles(0.0, kTwoPi, 36)};
  const ModelParams truth = generic_params();
  const PLMap m = noisy_map(g, truth, 0.0018, 9);
  const NoiseModel noise;
  const DifferenceSteps steps = default_steps(g);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ua(0.0, kTwoPi), ub(-2e-3, 2e-3), up(0.0, 2e-3);
  for (auto kind : {LineshapeKind::lorentzian, LineshapeKind::gaussian}) {
    ModelParams p = truth;
    p.lineshape.kind = kind;
    const LikelihoodKernel k(m, p.lineshape, noise, steps);
    for (int t = 0; t < 20; ++t) {
      p.orientation = orientation_matrix(ua(rng), ua(rng) * kThetaC / kTwoPi, ua(rng) / 3.0);
      p.field = {ub(rng), up(rng), ua(rng)};
      const double ref = log_likelihood(p, m, noise, steps);
      CHECK(k(p.orientation, p.field) == doctest::Approx(ref).epsilon(1e-10));
    }
  }
}

TEST_CASE("symmetry group leaves the likelihood unchanged") {
  const ModelParams p = generic_params();
  const MeasurementGrid g{MeasurementGrid::linspace(-3e-3, 3e-3, 40), MeasurementGrid::angles(0.0, kTwoPi, 24)};
  const PLMap m = noisy_map(g, p, 0.0018, 3);
  const NoiseModel noise;
  const double base = log_likelihood(p, m, noise);
  for (const auto& gr : symmetry_group()) {
    ModelParams q = p;
    q.orientation = gr * p.orientation;
    CHECK(std::fabs(log_likelihood(q, m, noise) - base) < 1e-9 * std::fabs(base));
  }
}

TEST_CASE("lattice scan matches direct evaluation") {
  const MeasurementGrid g{MeasurementGrid::linspace(-3e-3, 3e-3, 49), MeasurementGrid::angles(0.0, kTwoPi, 24)};
  const ModelParams truth = generic_params();
  const PLMap m = noisy_map(g, truth, 0.0018, 21);
  const NoiseModel noise;
  const DifferenceSteps steps = default_steps(g);
  const double db = 2 * steps.bias;
  FieldGridAxes axes;
  for (int i = 0; i < 7; ++i) axes.b_z.push_back(0.4e-3 + 2 * i * db);
  axes.b_perp = {0.0, 0.5e-3, 0.81e-3, 1.7e-3};
  for (int i = 0; i < 8; ++i) axes.phi0.push_back(0.1 + 3 * i * kTwoPi / 24);
  REQUIRE(field_lattice_compatible(m, steps, axes));

  for (auto kind : {LineshapeKind::lorentzian, LineshapeKind::gaussian}) {
    LineshapeConfig ls;
    ls.kind = kind;
    const auto scan = field_lattice_scan(m, truth.orientation, ls, noise, steps, axes);
    const LikelihoodKernel k(m, ls, noise, steps);
    for (std::size_t a = 0; a < axes.b_z.size(); ++a)
      for (std::size_t b = 0; b < axes.b_perp.size(); ++b)
        for (std::size_t c = 0; c < axes.phi0.size(); ++c) {
          const double direct = k(truth.orientation, {axes.b_z[a], axes.b_perp[b], axes.phi0[c]});
          const double fast = scan[(a * axes.b_perp.size() + b) * axes.phi0.size() + c];
          CHECK(fast == doctest::Approx(direct).epsilon(1e-9));
        }
  }

  // angle subsets on the same lattice still qualify
  const PLMap sub = m.select_phi({1, 4, 5, 17});
  REQUIRE(field_lattice_compatible(sub, steps, axes));
  const auto scan = field_lattice_scan(sub, truth.orientation, truth.lineshape, noise, steps, axes);
  const LikelihoodKernel k(sub, truth.lineshape, noise, steps);
  CHECK(scan[5] == doctest::Approx(k(truth.orientation, {axes.b_z[0], axes.b_perp[0], axes.phi0[5]})).epsilon(1e-9));

  FieldGridAxes off = axes;
  off.b_z[1] += 0.3 * db;
  CHECK_FALSE(field_lattice_compatible(m, steps, off));
  CHECK_THROWS_AS(field_lattice_scan(m, truth.orientation, truth.lineshape, noise, steps, off), ValidationError);
  FieldGridAxes odd = axes;
  odd.phi0 = {0.0, 0.1};
  CHECK_FALSE(field_lattice_compatible(m, steps, odd));
}

#ifdef _OPENMP
TEST_CASE("lattice scan is identical across thread counts") {
  const MeasurementGrid g{MeasurementGrid::linspace(-3e-3, 3e-3, 49), MeasurementGrid::angles(0.0, kTwoPi, 24)};
  const ModelParams truth = generic_params();
  const PLMap m = noisy_map(g, truth, 0.0018, 22);
  const DifferenceSteps steps = default_steps(g);
  FieldGridAxes axes;
  for (int i = 0; i < 5; ++i) axes.b_z.push_back(1e-3 + i * 2 * steps.bias);
  for (int i = 0; i < 9; ++i) axes.b_perp.push_back(i * 2e-4);
  for (int i = 0; i < 24; ++i) axes.phi0.push_back(i * kTwoPi / 24);
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = field_lattice_scan(m, truth.orientation, truth.lineshape, {}, steps, axes);
  omp_set_num_threads(4);
  const auto four = field_lattice_scan(m, truth.orientation, truth.lineshape, {}, steps, axes);
  omp_set_num_threads(before);
  CHECK(one == four);
}
#endif
