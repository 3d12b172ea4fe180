// nvmag: simulate PL maps, infer orientation or field, scaling studies,
// plot-table export and the spin-Hamiltonian degeneracy check.
//
// Exit codes: 0 ok, 1 bad input (usage, config, file format), 2 runtime or
// numerical failure (including a failed oracle sweep).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "nvmag/data_io.hpp"
#include "nvmag/errors.hpp"
#include "nvmag/inference.hpp"
#include "nvmag/spin_oracle.hpp"

using namespace nvmag;
namespace fs = std::filesystem;

namespace {

constexpr double kMilliTesla = 1e-3;
constexpr double kMicroTesla = 1e-6;

// Flags shared by the simulate / infer / scaling commands. Everything is in
// the unit named by the flag and converted to SI here.
struct Overrides {
  std::string config;
  std::string data;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> b_z_mT, b_perp_mT, phi0_deg;
  std::optional<double> alpha_deg, beta_deg, zeta_deg;
  std::vector<double> lab_z;
  std::optional<double> gamma_mT, contrast;
  std::optional<double> sigma_noise, sigma_bias_uT, sigma_phi_deg;
  std::optional<std::size_t> n_bias, n_phi;
  std::optional<double> bias_min_mT, bias_max_mT;
  std::optional<double> renormalize;
  std::optional<double> sim_noise;

  void add_to(CLI::App* app, bool with_data) {
    app->add_option("-c,--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    if (with_data) app->add_option("-d,--data", data, "nv-plmap v1 input file");
    app->add_option("-o,--out-dir", out_dir, "directory for outputs");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--b-z-mT", b_z_mT, "axial field component [mT]");
    app->add_option("--b-perp-mT", b_perp_mT, "transverse field magnitude [mT]")->check(CLI::NonNegativeNumber);
    app->add_option("--phi0-deg", phi0_deg, "transverse field azimuth [deg]");
    app->add_option("--alpha-deg", alpha_deg, "orientation alpha [deg]");
    app->add_option("--beta-deg", beta_deg, "orientation beta [deg]");
    app->add_option("--zeta-deg", zeta_deg, "orientation zeta [deg]");
    app->add_option("--lab-z", lab_z, "crystal direction of lab z, e.g. --lab-z 1 2 3")->expected(3);
    app->add_option("--gamma-mT", gamma_mT, "dip half width [mT]")->check(CLI::PositiveNumber);
    app->add_option("--contrast", contrast, "single-dip contrast")->check(CLI::Range(0.0, 1.0));
    app->add_option("--sigma-noise", sigma_noise, "PL noise std used in the likelihood")->check(CLI::PositiveNumber);
    app->add_option("--sigma-bias-uT", sigma_bias_uT, "bias field uncertainty [uT]")->check(CLI::NonNegativeNumber);
    app->add_option("--sigma-phi-deg", sigma_phi_deg, "angle uncertainty [deg]")->check(CLI::NonNegativeNumber);
    app->add_option("--n-bias", n_bias, "bias points (simulate)")->check(CLI::PositiveNumber);
    app->add_option("--n-phi", n_phi, "angles over a full turn (simulate)")->check(CLI::PositiveNumber);
    app->add_option("--bias-min-mT", bias_min_mT, "lowest bias field [mT] (simulate)");
    app->add_option("--bias-max-mT", bias_max_mT, "highest bias field [mT] (simulate)");
    if (!with_data)
      app->add_option("--noise", sim_noise, "std of the added PL noise (0: clean map)")
          ->check(CLI::NonNegativeNumber);
    if (with_data)
      app->add_option("--renormalize", renormalize, "divide the data by this percentile first")
          ->check(CLI::Range(0.0, 100.0));
  }

  RunConfig load(const std::string& mode) const {
    RunConfig c = config.empty() ? parse_config(nlohmann::json{{"mode", mode}}) : read_config(config);
    if (mode != "simulate" && c.mode != mode)
      throw ConfigError("mode", "config says '" + c.mode + "' but this command needs '" + mode + "'");
    if (!data.empty()) c.data_path = data;
    if (!out_dir.empty()) c.output_dir = out_dir;
    if (seed) c.seed = *seed;

    if (b_z_mT || b_perp_mT || phi0_deg) {
      ExternalFieldParams f = c.field.value_or(ExternalFieldParams{});
      if (b_z_mT) f.b_z = *b_z_mT * kMilliTesla;
      if (b_perp_mT) f.b_perp = *b_perp_mT * kMilliTesla;
      if (phi0_deg) f.phi0 = deg_to_rad(*phi0_deg);
      c.field = f.normalized();
    }
    if (!lab_z.empty()) {
      if (alpha_deg || beta_deg || zeta_deg) throw ValidationError("give --lab-z or the Euler angles, not both");
      OrientationInput in;
      in.lab_z_along = Vec3{lab_z[0], lab_z[1], lab_z[2]};
      if (!(norm(*in.lab_z_along) > 0.0)) throw ValidationError("--lab-z must be a non-zero direction");
      c.orientation = in;
    } else if (alpha_deg || beta_deg || zeta_deg) {
      EulerAngles e;
      if (c.orientation && c.orientation->angles) e = *c.orientation->angles;
      else if (!(alpha_deg && beta_deg && zeta_deg))
        throw ValidationError("--alpha-deg, --beta-deg and --zeta-deg are needed together");
      if (alpha_deg) e.alpha = deg_to_rad(*alpha_deg);
      if (beta_deg) e.beta = deg_to_rad(*beta_deg);
      if (zeta_deg) e.zeta = deg_to_rad(*zeta_deg);
      c.orientation = OrientationInput{e, std::nullopt};
    }
    if (gamma_mT) c.lineshape.gamma = *gamma_mT * kMilliTesla;
    if (contrast) c.lineshape.contrast = *contrast;
    c.lineshape.validate();
    if (sigma_noise) c.noise.sigma_noise = *sigma_noise;
    if (sigma_bias_uT) c.noise.sigma_bias = *sigma_bias_uT * kMicroTesla;
    if (sigma_phi_deg) c.noise.sigma_phi = deg_to_rad(*sigma_phi_deg);
    if (n_bias) c.grid.n_bias = *n_bias;
    if (n_phi) c.grid.n_phi = *n_phi;
    if (bias_min_mT) c.grid.bias_min = *bias_min_mT * kMilliTesla;
    if (bias_max_mT) c.grid.bias_max = *bias_max_mT * kMilliTesla;
    if (renormalize) c.renormalize_percentile = *renormalize;
    if (sim_noise) c.simulation_noise = *sim_noise;
    return c;
  }
};

RotationMatrix require_orientation(const RunConfig& c) {
  if (!c.orientation) throw ConfigError("orientation", "missing; needed by this command");
  return c.orientation->matrix();
}

ExternalFieldParams require_field(const RunConfig& c) {
  if (!c.field) throw ConfigError("field", "missing; needed by this command");
  return *c.field;
}

PLMap load_data(const RunConfig& c) {
  if (c.data_path.empty()) throw ConfigError("data", "no input map; pass --data or set \"data\"");
  PLMap m = read_pl_map(c.data_path);
  if (c.renormalize_percentile) renormalize_by_percentile(m, *c.renormalize_percentile);
  return m;
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  out << text;
}

// Human-facing value: fields in mT, angles in rad.
std::string show(const std::string& unit, double v, double sd) {
  if (unit == "T") return format_with_uncertainty(v / kMilliTesla, sd / kMilliTesla) + " mT";
  return format_with_uncertainty(v, sd) + " rad";
}

void print_posterior(const ResultsDocument& doc) {
  std::printf("%zu mode%s\n", doc.modes.size(), doc.modes.size() == 1 ? "" : "s");
  for (std::size_t i = 0; i < doc.modes.size(); ++i) {
    const auto& m = doc.modes[i];
    std::printf("  mode %zu  weight %.3f  log-likelihood %.3f\n", i + 1, m.weight, m.log_density);
    for (int k = 0; k < 3; ++k)
      std::printf("    %-7s = %s   95%% [%.7g, %.7g] %s\n", doc.names[k].c_str(),
                  show(doc.units[k], m.point[k], m.stddev[k]).c_str(), m.interval95[k].first, m.interval95[k].second,
                  doc.units[k].c_str());
  }
  for (const auto& n : doc.notes) std::printf("note: %s\n", n.c_str());
  for (const auto& w : doc.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

void write_posterior_outputs(const ResultsDocument& doc, const fs::path& dir) {
  for (const auto& m : doc.marginals) {
    std::ostringstream s;
    write_marginal_table(s, m);
    write_text(join(dir, "marginal_" + m.name + ".csv"), s.str());
  }
  std::ostringstream modes;
  write_mode_table(modes, doc);
  write_text(join(dir, "modes.csv"), modes.str());
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------- commands

int cmd_simulate(const Overrides& ov, const std::string& out_file) {
  const RunConfig c = ov.load("simulate");
  ModelParams p;
  p.orientation = require_orientation(c);
  p.field = require_field(c);
  p.lineshape = c.lineshape;
  const MeasurementGrid grid = c.grid.build();
  PLMap map = synthesize_pl_map(p, grid, c.simulation_noise, c.seed);
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  const std::string path = out_file.empty() ? join(dir, "map.csv") : out_file;
  write_pl_map(path, map);
  std::printf("wrote %s: %zu bias x %zu angles = %zu points, noise %.4g, seed %llu\n", path.c_str(), grid.n_bias(),
              grid.n_phi(), grid.size(), c.simulation_noise, static_cast<unsigned long long>(c.seed));
  return 0;
}

int cmd_infer(const Overrides& ov, bool orientation) {
  const auto t0 = Clock::now();
  const RunConfig c = ov.load(orientation ? "orientation" : "field");
  const PLMap data = load_data(c);
  Posterior post;
  if (orientation)
    post = infer_orientation(data, require_field(c), c.lineshape, c.noise, c.orientation_space, c.search);
  else
    post = infer_field(data, require_orientation(c), c.lineshape, c.noise, c.field_space, c.search);
  const ResultsDocument doc = make_results(post, c, orientation ? "infer-orientation" : "infer-field");

  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  const std::string results = join(dir, "results.json");
  write_results(results, doc);
  write_posterior_outputs(doc, dir);
  write_sidecar(results, seconds_since(t0), thread_count());
  print_posterior(doc);
  std::printf("wrote %s\n", results.c_str());
  return 0;
}

int cmd_scaling(const Overrides& ov, const std::vector<std::size_t>& ns, std::optional<std::size_t> reps) {
  const auto t0 = Clock::now();
  RunConfig c = ov.load("scaling");
  if (!ns.empty()) c.scaling_ns = ns;
  if (reps) c.scaling_repetitions = *reps;
  const PLMap data = load_data(c);
  const auto rows = scaling_study(data, require_orientation(c), c.lineshape, c.noise, c.scaling_ns,
                                  c.scaling_repetitions, c.seed, c.field_space, c.search);
  ResultsDocument doc;
  doc.command = "scaling";
  doc.seed = c.seed;
  for (int k = 0; k < 3; ++k) {
    doc.names[k] = c.field_space.axes[k].name;
    doc.units[k] = c.field_space.axes[k].unit;
    doc.marginals[k] = {doc.names[k], doc.units[k], {}, {}};
  }
  doc.scaling = rows;
  if (rows.size() >= 2) doc.scaling_slope = scaling_slope(rows);
  doc.config = c.to_json();
  doc.metadata = {{"width", "standard deviation of the global b_perp marginal, mean over repetitions"}};

  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  std::ostringstream table;
  write_scaling_table(table, rows);
  write_text(join(dir, "scaling.csv"), table.str());
  const std::string results = join(dir, "results.json");
  write_results(results, doc);
  write_sidecar(results, seconds_since(t0), thread_count());

  std::printf("%8s %16s %16s\n", "N", "mean width [uT]", "std [uT]");
  for (const auto& r : rows)
    std::printf("%8zu %16.5f %16.5f\n", r.n_traces, r.mean_width / kMicroTesla, r.std_width / kMicroTesla);
  if (doc.scaling_slope) std::printf("log-log slope %.4f\n", *doc.scaling_slope);
  std::printf("wrote %s\n", join(dir, "scaling.csv").c_str());
  return 0;
}

int cmd_export(const std::string& map_path, const std::string& results_path, const std::string& out) {
  if (map_path.empty() == results_path.empty()) throw ValidationError("give exactly one of --map or --results");
  if (!map_path.empty()) {
    const PLMap m = read_pl_map(map_path);
    std::ostringstream s;
    write_map_matrix(s, m);
    if (out.empty() || out == "-") {
      std::cout << s.str();
    } else {
      write_text(out, s.str());
      std::printf("wrote %s\n", out.c_str());
    }
    return 0;
  }
  const ResultsDocument doc = read_results(results_path);
  const fs::path dir(out.empty() ? "." : out);
  fs::create_directories(dir);
  if (!doc.scaling.empty()) {
    std::ostringstream s;
    write_scaling_table(s, doc.scaling);
    write_text(join(dir, "scaling.csv"), s.str());
    std::printf("wrote %s\n", join(dir, "scaling.csv").c_str());
    return 0;
  }
  write_posterior_outputs(doc, dir);
  for (const auto& m : doc.marginals) std::printf("wrote %s\n", join(dir, "marginal_" + m.name + ".csv").c_str());
  std::printf("wrote %s\n", join(dir, "modes.csv").c_str());
  return 0;
}

int cmd_verify_oracle(std::uint64_t seed, int trials) {
  OracleSweepOptions o;
  o.seed = seed;
  o.trials_per_plane = trials;
  const auto t0 = Clock::now();
  const OracleReport r = run_oracle_sweep(o);
  for (const auto& p : r.planes) std::printf("  %-7s %5d / %5d\n", p.plane.c_str(), p.passes, p.trials);
  std::printf("  %-7s %5d / %5d\n", "generic", r.generic_passes, r.generic_trials);
  std::printf("planes %d/%d, generic %d/%d, max on-plane mismatch %.3g Hz, min off-plane gap %.3g Hz (%.2fs)\n",
              r.plane_passes(), r.plane_trials(), r.generic_passes, r.generic_trials, r.max_plane_mismatch,
              r.min_generic_gap, seconds_since(t0));
  std::printf("%s\n", r.all_passed() ? "PASS" : "FAIL");
  return r.all_passed() ? 0 : 2;
}

void set_threads(std::optional<int> flag) {
  std::optional<int> n = flag;
  if (!n) {
    if (const char* env = std::getenv("NVMAG_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end == env || *end != '\0' || v < 1) throw ValidationError("NVMAG_THREADS must be a positive integer");
      n = static_cast<int>(v);
    }
  }
#ifdef _OPENMP
  if (n) omp_set_num_threads(*n);
#endif
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NV-center cross-relaxation magnetometry: simulation and Bayesian inference"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::optional<int> threads;
  app.add_option("--threads", threads, "worker threads (default: $NVMAG_THREADS, else all cores)")
      ->check(CLI::PositiveNumber);

  Overrides sim_ov, ori_ov, fld_ov, sc_ov;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "write a synthetic PL map");
  sim_ov.add_to(sim, false);
  sim->add_option("--out", sim_out, "map file (default <out-dir>/map.csv)");

  auto* ori = app.add_subcommand("infer-orientation", "posterior over (alpha, beta, zeta) for a known field");
  ori_ov.add_to(ori, true);
  auto* fld = app.add_subcommand("infer-field", "posterior over (b_z, b_perp, phi0) for a known orientation");
  fld_ov.add_to(fld, true);

  auto* sc = app.add_subcommand("scaling", "b_perp posterior width against the number of angles used");
  sc_ov.add_to(sc, true);
  std::vector<std::size_t> ns;
  std::optional<std::size_t> reps;
  sc->add_option("--ns", ns, "trace counts, e.g. --ns 1 2 4 8")->check(CLI::PositiveNumber);
  sc->add_option("--reps", reps, "repetitions per count (>= 2)")->check(CLI::Range(2, 1000000));

  auto* ex = app.add_subcommand("export-plot", "plot-ready tables from a map or a results file");
  std::string ex_map, ex_results, ex_out;
  ex->add_option("--map", ex_map, "nv-plmap v1 file -> gnuplot nonuniform matrix")->check(CLI::ExistingFile);
  ex->add_option("--results", ex_results, "results.json -> marginal and mode tables")->check(CLI::ExistingFile);
  ex->add_option("-o,--out", ex_out, "output file (map) or directory (results); map default stdout");

  auto* vo = app.add_subcommand("verify-oracle", "check symmetry planes against the spin Hamiltonian");
  std::uint64_t vo_seed = 1;
  int vo_trials = 1000;
  vo->add_option("--seed", vo_seed, "random seed");
  vo->add_option("--trials", vo_trials, "random fields per plane and off-plane")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 1;
  }

  try {
    set_threads(threads);
    if (*sim) return cmd_simulate(sim_ov, sim_out);
    if (*ori) return cmd_infer(ori_ov, true);
    if (*fld) return cmd_infer(fld_ov, false);
    if (*sc) return cmd_scaling(sc_ov, ns, reps);
    if (*ex) return cmd_export(ex_map, ex_results, ex_out);
    if (*vo) return cmd_verify_oracle(vo_seed, vo_trials);
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: parse: %s\n", e.what());
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return 1;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: validation: %s\n", e.what());
    return 1;
  } catch (const OutOfRegimeError& e) {
    std::fprintf(stderr, "error: regime: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: runtime: %s\n", e.what());
    return 2;
  }
  return 0;
}
