// The shipped simulation presets: load, build the map the CLI would write,
// check the angular symmetry each lab axis should produce.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "nvmag/data_io.hpp"

using namespace nvmag;

namespace {

PLMap preset_map(const std::string& name) {
  const RunConfig c = read_config(std::string(NVMAG_PRESET_DIR) + "/" + name + ".json");
  REQUIRE(c.orientation);
  REQUIRE(c.field);
  ModelParams p;
  p.orientation = c.orientation->matrix();
  p.field = *c.field;
  p.lineshape = c.lineshape;
  return synthesize_pl_map(p, c.grid.build(), c.simulation_noise, c.seed);
}

// max |PL(b, phi_j) - PL(b, phi_{f(j)})| over the whole map
template <class F>
double max_diff(const PLMap& m, F&& partner) {
  const std::size_t np = m.grid.n_phi();
  double worst = 0.0;
  for (std::size_t j = 0; j < np; ++j)
    for (std::size_t i = 0; i < m.grid.n_bias(); ++i)
      worst = std::max(worst, std::abs(m.at(i, j) - m.at(i, partner(j) % np)));
  return worst;
}

// Normalized circular autocorrelation of the mean-free map at a phi lag.
double autocorrelation(const PLMap& m, std::size_t lag) {
  double mean = 0.0;
  for (double v : m.values) mean += v;
  mean /= static_cast<double>(m.values.size());
  double num = 0.0, den = 0.0;
  const std::size_t np = m.grid.n_phi();
  for (std::size_t j = 0; j < np; ++j)
    for (std::size_t i = 0; i < m.grid.n_bias(); ++i) {
      const double a = m.at(i, j) - mean;
      num += a * (m.at(i, (j + lag) % np) - mean);
      den += a * a;
    }
  return num / den;
}

// Neighbouring angles always correlate, so lags under 30 degrees are skipped.
double max_far_autocorrelation(const PLMap& m) {
  const std::size_t np = m.grid.n_phi();
  double best = -1.0;
  for (std::size_t lag = np / 12; lag <= np - np / 12; ++lag) best = std::max(best, autocorrelation(m, lag));
  return best;
}

// Reflections phi_j -> phi_{s-j} that leave the map unchanged; the mirror
// line sits at s/2 samples. Where it lands depends on the crystal azimuth,
// only the spacing is fixed by the axis.
std::vector<std::size_t> mirror_shifts(const PLMap& m) {
  std::vector<std::size_t> out;
  const std::size_t np = m.grid.n_phi();
  for (std::size_t s = 0; s < np; ++s)
    if (max_diff(m, [&](std::size_t j) { return s + np - j; }) < 1e-12) out.push_back(s);
  return out;
}

// mirrors exist and are evenly spaced by `spacing` (radians)
void check_mirrors(const PLMap& m, double spacing) {
  const std::size_t np = m.grid.n_phi();
  const auto shifts = mirror_shifts(m);
  const auto step = static_cast<std::size_t>(std::lround(2.0 * spacing / kTwoPi * static_cast<double>(np)));
  REQUIRE(!shifts.empty());
  CHECK(shifts.size() == np / step);
  for (std::size_t k = 1; k < shifts.size(); ++k) CHECK(shifts[k] - shifts[k - 1] == step);
}

}  // namespace

TEST_CASE("[100] preset: quarter-turn period, mirror at an eighth turn") {
  const PLMap m = preset_map("fig4a");
  const std::size_t np = m.grid.n_phi();
  REQUIRE(np % 8 == 0);
  CHECK(max_diff(m, [&](std::size_t j) { return j + np / 4; }) < 1e-12);
  check_mirrors(m, kPi / 4);
  CHECK(max_diff(m, [&](std::size_t j) { return j + np / 8; }) > 1e-3);
}

TEST_CASE("[110] preset: half-turn period, mirror at a quarter turn") {
  const PLMap m = preset_map("fig4b");
  const std::size_t np = m.grid.n_phi();
  CHECK(max_diff(m, [&](std::size_t j) { return j + np / 2; }) < 1e-12);
  check_mirrors(m, kPi / 2);
  CHECK(max_diff(m, [&](std::size_t j) { return j + np / 4; }) > 1e-3);
}

TEST_CASE("[111] preset: third-turn period, mirror at a sixth turn") {
  const PLMap m = preset_map("fig4c");
  const std::size_t np = m.grid.n_phi();
  REQUIRE(np % 6 == 0);
  CHECK(max_diff(m, [&](std::size_t j) { return j + np / 3; }) < 1e-12);
  check_mirrors(m, kPi / 3);
  CHECK(max_far_autocorrelation(m) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("[123] preset: no angular period") {
  const PLMap m = preset_map("fig4d");
  // a symmetric map reaches exactly 1 at its period
  CHECK(max_far_autocorrelation(m) < 0.9);
  CHECK(mirror_shifts(m).empty());
  for (std::size_t d : {2u, 3u, 4u, 6u})
    CHECK(max_diff(m, [&](std::size_t j) { return j + m.grid.n_phi() / d; }) > 1e-3);
}

TEST_CASE("presets shift every dip by -b_z along the bias axis") {
  // b_z = 1 mT on a 20 uT bias step: 50 samples
  const PLMap m = preset_map("fig4d");
  const RunConfig c = read_config(std::string(NVMAG_PRESET_DIR) + "/fig4d.json");
  RunConfig shifted = c;
  shifted.field->b_z = 0.0;
  ModelParams p;
  p.orientation = c.orientation->matrix();
  p.field = *shifted.field;
  p.lineshape = c.lineshape;
  const PLMap m0 = synthesize_pl_map(p, c.grid.build(), 0.0, 1);
  const double step = m.grid.bias_values[1] - m.grid.bias_values[0];
  const auto k = static_cast<std::size_t>(std::lround(1e-3 / step));
  REQUIRE(std::abs(static_cast<double>(k) * step - 1e-3) < 1e-12);
  double worst = 0.0;
  for (std::size_t j = 0; j < m.grid.n_phi(); ++j)
    for (std::size_t i = 0; i + k < m.grid.n_bias(); ++i) worst = std::max(worst, std::abs(m.at(i, j) - m0.at(i + k, j)));
  CHECK(worst < 1e-12);
}

TEST_CASE("single-trace preset") {
  const PLMap m = preset_map("fig1c");
  CHECK(m.grid.n_phi() == 1);
  CHECK(*std::min_element(m.values.begin(), m.values.end()) < 0.99);
  CHECK(*std::max_element(m.values.begin(), m.values.end()) <= 1.0);
}

TEST_CASE("zero contrast gives a flat map") {
  RunConfig c = read_config(std::string(NVMAG_PRESET_DIR) + "/fig4d.json");
  ModelParams p;
  p.orientation = c.orientation->matrix();
  p.field = *c.field;
  p.lineshape = c.lineshape;
  p.lineshape.contrast = 0.0;
  const PLMap m = synthesize_pl_map(p, c.grid.build(), 0.0, 1);
  for (double v : m.values) REQUIRE(v == 1.0);
}

TEST_CASE("demo configs parse") {
  for (const char* name : {"orientation_demo", "field_demo"})
    CHECK_NOTHROW(read_config(std::string(NVMAG_PRESET_DIR) + "/" + name + ".json"));
}
