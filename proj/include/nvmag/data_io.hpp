#pragma once

// Files. Everything on disk is SI (tesla, radians); unit conversion happens
// only at the command line.
//
// nv-plmap v1, long-format CSV:
//   # nv-plmap v1
//   # key: value            (optional metadata, any number)
//   phi_rad,b_bias_T,pl
//   <one row per grid point, phi-major, 17 significant digits>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nvmag/forward_model.hpp"
#include "nvmag/inference.hpp"
#include "nvmag/likelihood.hpp"

namespace nvmag {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------- PL maps

/// Throws ParseError (path and line) on a wrong version line, malformed rows,
/// duplicate coordinates, axes out of phi-major order, or an incomplete grid.
PLMap read_pl_map(const std::string& path);
PLMap parse_pl_map(std::istream& in, const std::string& source = "<stream>");

void write_pl_map(const std::string& path, const PLMap& map);
void write_pl_map(std::ostream& out, const PLMap& map);

/// Divide every value by the given percentile of the map, so an
/// arbitrary-unit baseline lands near 1. Percentile in (0, 100].
void renormalize_by_percentile(PLMap& map, double percentile);

/// pl_map(grid, params) plus i.i.d. N(0, sigma_noise^2), seeded mt19937_64.
PLMap synthesize_pl_map(const ModelParams& params, const MeasurementGrid& grid, double sigma_noise,
                        std::uint64_t seed);

// ---------------------------------------------------------------- run config

struct GridSpec {
  double bias_min = -3e-3;  // T
  double bias_max = 3e-3;   // T
  std::size_t n_bias = 154;
  double phi_start = 0.0;    // rad
  double phi_span = kTwoPi;  // rad, endpoint excluded
  std::size_t n_phi = 72;

  MeasurementGrid build() const;
  bool operator==(const GridSpec&) const = default;
};

/// Either Euler angles or a crystal direction for lab z.
struct OrientationInput {
  std::optional<EulerAngles> angles;
  std::optional<Vec3> lab_z_along;

  RotationMatrix matrix() const;
};

struct RunConfig {
  std::string mode;  // simulate | orientation | field | scaling
  std::uint64_t seed = 1;
  std::string data_path;
  std::string output_dir = ".";

  std::optional<OrientationInput> orientation;
  std::optional<ExternalFieldParams> field;
  LineshapeConfig lineshape;
  NoiseModel noise;
  GridSpec grid;
  double simulation_noise = 0.0018;  // added by `simulate`; 0 gives the clean map

  ParamSpace orientation_space = ParamSpace::orientation();
  ParamSpace field_space = ParamSpace::field();
  SearchOptions search;

  std::vector<std::size_t> scaling_ns{1, 2, 4, 8, 16, 32, 64};
  std::size_t scaling_repetitions = 50;

  std::optional<double> renormalize_percentile;

  /// Every key, defaults included.
  nlohmann::json to_json() const;
};

/// Unknown keys, wrong types, out-of-range values and a missing "mode" all
/// throw ConfigError naming the dotted key path.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig read_config(const std::string& path);

// ---------------------------------------------------------------- results

struct ModeSummary {
  std::array<double, 3> point{};
  std::array<double, 3> stddev{};
  std::array<std::pair<double, double>, 3> interval95{};
  double log_density = 0.0;
  double log_mass = 0.0;
  double weight = 0.0;

  bool operator==(const ModeSummary&) const = default;
};

struct ResultsDocument {
  std::string software_version = kVersion;
  std::string command;
  std::uint64_t seed = 0;
  std::array<std::string, 3> names;
  std::array<std::string, 3> units;
  std::vector<ModeSummary> modes;
  std::array<Marginal, 3> marginals;
  double evidence_proxy = 0.0;
  bool used_lattice = false;
  std::vector<std::string> warnings;
  std::vector<std::string> notes;
  std::vector<ScalingRow> scaling;
  std::optional<double> scaling_slope;
  nlohmann::json config;    // echo with defaults filled in
  nlohmann::json metadata;  // likelihood form and similar fixed facts

  bool operator==(const ResultsDocument&) const = default;
};

ResultsDocument make_results(const Posterior& post, const RunConfig& config, const std::string& command);

nlohmann::json to_json(const ResultsDocument& doc);
ResultsDocument results_from_json(const nlohmann::json& j);
void write_results(const std::string& path, const ResultsDocument& doc);
ResultsDocument read_results(const std::string& path);

/// Wall time and thread count go next to the results, in <stem>.meta.json,
/// so the results file itself is byte-identical between runs.
std::string sidecar_path(const std::string& results_path);
void write_sidecar(const std::string& results_path, double seconds, int threads);

// ---------------------------------------------------------------- plot tables

/// Two columns, value and density, after a commented header.
void write_marginal_table(std::ostream& out, const Marginal& m);
/// gnuplot "nonuniform matrix": first row n_bias then the bias values, each
/// further row the angle then the PL values.
void write_map_matrix(std::ostream& out, const PLMap& map);
/// One row per mode: weight, log values, then MAP, std and 95% bounds per axis.
void write_mode_table(std::ostream& out, const ResultsDocument& doc);
void write_scaling_table(std::ostream& out, const std::vector<ScalingRow>& rows);

}  // namespace nvmag
