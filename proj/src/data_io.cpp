#include "nvmag/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "nvmag/errors.hpp"

namespace nvmag {

using nlohmann::json;

namespace {

constexpr const char* kMapMagic = "# nv-plmap v1";
constexpr const char* kMapHeader = "phi_rad,b_bias_T,pl";

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

// ---------------------------------------------------------------- PL maps

PLMap parse_pl_map(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t ln = 0;
  auto next = [&]() {
    if (!std::getline(in, line)) return false;
    line = strip_cr(line);
    ++ln;
    return true;
  };

  if (!next()) throw ParseError(source, 1, "empty file");
  if (line != kMapMagic) {
    if (line.rfind("# nv-plmap", 0) == 0)
      throw ParseError(source, ln, "unsupported format version '" + line.substr(10) + "', expected v1");
    throw ParseError(source, ln, "missing '# nv-plmap v1' version line");
  }

  PLMap map;
  while (true) {
    if (!next()) throw ParseError(source, ln + 1, "missing column header '" + std::string(kMapHeader) + "'");
    if (line.empty() || line[0] != '#') break;
    if (line.rfind("# ", 0) != 0) throw ParseError(source, ln, "metadata lines read '# key: value'");
    const std::string body = line.substr(2);
    const auto colon = body.find(": ");
    if (colon == std::string::npos || colon == 0) throw ParseError(source, ln, "metadata lines read '# key: value'");
    const std::string key = body.substr(0, colon);
    if (map.metadata.count(key)) throw ParseError(source, ln, "duplicate metadata key '" + key + "'");
    map.metadata[key] = body.substr(colon + 2);
  }
  if (line != kMapHeader) throw ParseError(source, ln, "expected column header '" + std::string(kMapHeader) + "'");

  struct Block {
    double phi;
    std::vector<double> bias;
    std::vector<double> pl;
    std::size_t last_line;
  };
  std::vector<Block> blocks;
  while (next()) {
    if (line.empty()) continue;
    if (std::count(line.begin(), line.end(), ',') != 2) throw ParseError(source, ln, "expected 3 comma-separated fields");
    double v[3];
    std::size_t start = 0;
    for (int f = 0; f < 3; ++f) {
      const std::size_t comma = f < 2 ? line.find(',', start) : line.size();
      if (!parse_double(std::string_view(line).substr(start, comma - start), v[f]) || !std::isfinite(v[f]))
        throw ParseError(source, ln, "field " + std::to_string(f + 1) + " is not a finite number");
      start = comma + 1;
    }
    const double phi = v[0], b = v[1];
    if (blocks.empty() || phi > blocks.back().phi) {
      blocks.push_back({phi, {}, {}, ln});
    } else if (phi < blocks.back().phi) {
      throw ParseError(source, ln, "phi_rad decreases; rows must be phi-major with increasing angles");
    }
    Block& blk = blocks.back();
    if (!blk.bias.empty() && b <= blk.bias.back()) {
      if (std::find(blk.bias.begin(), blk.bias.end(), b) != blk.bias.end())
        throw ParseError(source, ln, "duplicate grid point (phi=" + fmt17(phi) + ", b_bias=" + fmt17(b) + ")");
      throw ParseError(source, ln, "b_bias_T not increasing within phi=" + fmt17(phi));
    }
    blk.bias.push_back(b);
    blk.pl.push_back(v[2]);
    blk.last_line = ln;
  }
  if (blocks.empty()) throw ParseError(source, ln + 1, "no data rows");

  std::set<double> all_bias;
  for (const auto& blk : blocks) all_bias.insert(blk.bias.begin(), blk.bias.end());
  map.grid.bias_values.assign(all_bias.begin(), all_bias.end());
  for (const auto& blk : blocks) {
    if (blk.bias.size() == map.grid.bias_values.size()) continue;
    for (double b : map.grid.bias_values)
      if (!std::binary_search(blk.bias.begin(), blk.bias.end(), b))
        throw ParseError(source, blk.last_line,
                         "missing grid point (phi=" + fmt17(blk.phi) + ", b_bias=" + fmt17(b) + ")");
  }
  for (const auto& blk : blocks) {
    map.grid.phi_values.push_back(blk.phi);
    map.values.insert(map.values.end(), blk.pl.begin(), blk.pl.end());
  }
  return map;
}

PLMap read_pl_map(const std::string& path) {
  auto in = open_in(path);
  return parse_pl_map(in, path);
}

void write_pl_map(std::ostream& out, const PLMap& map) {
  map.validate();
  out << kMapMagic << '\n';
  for (const auto& [k, v] : map.metadata) {
    if (k.empty() || k.find(": ") != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos)
      throw ValidationError("metadata key/value not representable: '" + k + "'");
    out << "# " << k << ": " << v << '\n';
  }
  out << kMapHeader << '\n';
  const std::size_t nb = map.grid.n_bias();
  for (std::size_t j = 0; j < map.grid.n_phi(); ++j) {
    const std::string phi = fmt17(map.grid.phi_values[j]);
    for (std::size_t i = 0; i < nb; ++i)
      out << phi << ',' << fmt17(map.grid.bias_values[i]) << ',' << fmt17(map.values[j * nb + i]) << '\n';
  }
}

void write_pl_map(const std::string& path, const PLMap& map) {
  auto out = open_out(path);
  write_pl_map(out, map);
  if (!out) throw std::runtime_error("write failed: " + path);
}

void renormalize_by_percentile(PLMap& map, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) throw ValidationError("percentile must lie in (0, 100]");
  if (map.values.empty()) throw ValidationError("cannot renormalize an empty map");
  std::vector<double> v = map.values;
  std::sort(v.begin(), v.end());
  const double pos = percentile / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double ref = v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  if (!(ref > 0.0)) throw ValidationError("percentile value is not positive; cannot renormalize");
  for (double& x : map.values) x /= ref;
  map.metadata["renormalized_percentile"] = fmt17(percentile);
  map.metadata["renormalized_divisor"] = fmt17(ref);
}

PLMap synthesize_pl_map(const ModelParams& params, const MeasurementGrid& grid, double sigma_noise,
                        std::uint64_t seed) {
  if (!(sigma_noise >= 0.0) || !std::isfinite(sigma_noise)) throw ValidationError("sigma_noise must be >= 0");
  PLMap map = pl_map(grid, params);
  if (sigma_noise > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma_noise);
    for (double& v : map.values) v += noise(rng);  // serial: the stream order is fixed
  }
  map.metadata["sigma_noise"] = fmt17(sigma_noise);
  map.metadata["seed"] = std::to_string(seed);
  return map;
}

// ---------------------------------------------------------------- config

MeasurementGrid GridSpec::build() const {
  if (n_bias < 1 || n_phi < 1) throw ValidationError("grid needs at least one bias value and one angle");
  if (n_bias > 1 && !(bias_max > bias_min)) throw ValidationError("grid bias_max must exceed bias_min");
  if (!(phi_span > 0.0)) throw ValidationError("grid phi_span must be > 0");
  MeasurementGrid g{MeasurementGrid::linspace(bias_min, bias_max, n_bias),
                    MeasurementGrid::angles(phi_start, phi_span, n_phi)};
  g.validate();
  return g;
}

RotationMatrix OrientationInput::matrix() const {
  if (angles) return orientation_matrix(angles->alpha, angles->beta, angles->zeta);
  if (lab_z_along) return orientation_with_lab_z_along(*lab_z_along);
  throw ValidationError("orientation has neither angles nor a lab z direction");
}

namespace {

// Walks one JSON object, remembers which keys were consumed and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }

  const json* get(const std::string& k) {
    seen_.insert(k);
    return has(k) ? &j_.at(k) : nullptr;
  }

  double number(const std::string& k, double def) {
    const json* v = get(k);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(key(k), "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw ConfigError(key(k), "must be finite");
    return d;
  }
  std::optional<double> maybe_number(const std::string& k) {
    if (!has(k)) {
      seen_.insert(k);
      return std::nullopt;
    }
    return number(k, 0.0);
  }
  std::size_t count(const std::string& k, std::size_t def, std::size_t min = 0) {
    const json* v = get(k);
    if (!v) return def;
    if (!v->is_number_integer() || v->get<long long>() < 0) throw ConfigError(key(k), "expected a non-negative integer");
    const auto n = v->get<std::size_t>();
    if (n < min) throw ConfigError(key(k), "must be >= " + std::to_string(min));
    return n;
  }
  std::uint64_t u64(const std::string& k, std::uint64_t def) {
    const json* v = get(k);
    if (!v) return def;
    if (!v->is_number_unsigned()) throw ConfigError(key(k), "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }
  bool flag(const std::string& k, bool def) {
    const json* v = get(k);
    if (!v) return def;
    if (!v->is_boolean()) throw ConfigError(key(k), "expected true or false");
    return v->get<bool>();
  }
  std::string text(const std::string& k, const std::string& def) {
    const json* v = get(k);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(key(k), "expected a string");
    return v->get<std::string>();
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(key(k), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

const char* kind_name(LineshapeKind k) { return k == LineshapeKind::gaussian ? "gaussian" : "lorentzian"; }

const std::set<std::string> kModes{"simulate", "orientation", "field", "scaling"};

}  // namespace

RunConfig parse_config(const json& doc) {
  RunConfig c;
  ObjectReader root(doc, "");
  if (!root.has("mode")) throw ConfigError("mode", "missing required key");
  c.mode = root.text("mode", "");
  require(kModes.count(c.mode) > 0, "mode", "must be one of simulate, orientation, field, scaling");
  c.seed = root.u64("seed", c.seed);
  c.data_path = root.text("data", c.data_path);
  c.output_dir = root.text("output_dir", c.output_dir);

  if (const json* o = root.get("orientation")) {
    ObjectReader r(*o, "orientation");
    OrientationInput in;
    if (r.has("lab_z_along")) {
      const json* v = r.get("lab_z_along");
      require(v->is_array() && v->size() == 3 && std::all_of(v->begin(), v->end(), [](const json& e) { return e.is_number(); }),
              "orientation.lab_z_along", "expected three numbers");
      in.lab_z_along = Vec3{(*v)[0].get<double>(), (*v)[1].get<double>(), (*v)[2].get<double>()};
      require(norm(*in.lab_z_along) > 0.0, "orientation.lab_z_along", "must be a non-zero direction");
      require(!r.has("alpha_rad") && !r.has("beta_rad") && !r.has("zeta_rad"), "orientation",
              "give either lab_z_along or the three angles, not both");
    } else {
      for (const char* k : {"alpha_rad", "beta_rad", "zeta_rad"})
        require(r.has(k), r.key(k), "missing required key (or give lab_z_along)");
      in.angles = EulerAngles{r.number("alpha_rad", 0), r.number("beta_rad", 0), r.number("zeta_rad", 0)};
    }
    r.finish();
    c.orientation = in;
  }

  if (const json* f = root.get("field")) {
    ObjectReader r(*f, "field");
    ExternalFieldParams p;
    p.b_z = r.number("b_z_T", 0.0);
    p.b_perp = r.number("b_perp_T", 0.0);
    p.phi0 = r.number("phi0_rad", 0.0);
    require(p.b_perp >= 0.0, "field.b_perp_T", "must be >= 0 (direction goes in phi0_rad)");
    r.finish();
    c.field = p.normalized();
  }

  if (const json* l = root.get("lineshape")) {
    ObjectReader r(*l, "lineshape");
    const std::string kind = r.text("kind", kind_name(c.lineshape.kind));
    require(kind == "lorentzian" || kind == "gaussian", "lineshape.kind", "must be lorentzian or gaussian");
    c.lineshape.kind = kind == "gaussian" ? LineshapeKind::gaussian : LineshapeKind::lorentzian;
    c.lineshape.gamma = r.number("gamma_T", c.lineshape.gamma);
    require(c.lineshape.gamma > 0.0, "lineshape.gamma_T", "must be > 0");
    c.lineshape.contrast = r.number("contrast", c.lineshape.contrast);
    require(c.lineshape.contrast >= 0.0 && c.lineshape.contrast < 1.0, "lineshape.contrast", "must lie in [0, 1)");
    if (const json* w = r.get("weights")) {
      require(w->is_array() && w->size() == kNumResonances, "lineshape.weights", "expected 9 numbers");
      for (std::size_t k = 0; k < kNumResonances; ++k) {
        require((*w)[k].is_number() && (*w)[k].get<double>() >= 0.0, "lineshape.weights", "entries must be >= 0");
        c.lineshape.weights[k] = (*w)[k].get<double>();
      }
    }
    r.finish();
    try {
      c.lineshape.validate();
    } catch (const ValidationError& e) {
      throw ConfigError("lineshape", e.what());
    }
  }

  if (const json* n = root.get("noise")) {
    ObjectReader r(*n, "noise");
    c.noise.sigma_noise = r.number("sigma_noise", c.noise.sigma_noise);
    require(c.noise.sigma_noise > 0.0, "noise.sigma_noise", "must be > 0");
    c.noise.sigma_bias = r.number("sigma_bias_T", c.noise.sigma_bias);
    require(c.noise.sigma_bias >= 0.0, "noise.sigma_bias_T", "must be >= 0");
    c.noise.sigma_phi = r.number("sigma_phi_rad", c.noise.sigma_phi);
    require(c.noise.sigma_phi >= 0.0, "noise.sigma_phi_rad", "must be >= 0");
    r.finish();
  }

  if (const json* g = root.get("grid")) {
    ObjectReader r(*g, "grid");
    c.grid.bias_min = r.number("bias_min_T", c.grid.bias_min);
    c.grid.bias_max = r.number("bias_max_T", c.grid.bias_max);
    c.grid.n_bias = r.count("n_bias", c.grid.n_bias, 1);
    c.grid.phi_start = r.number("phi_start_rad", c.grid.phi_start);
    c.grid.phi_span = r.number("phi_span_rad", c.grid.phi_span);
    c.grid.n_phi = r.count("n_phi", c.grid.n_phi, 1);
    require(c.grid.n_bias == 1 || c.grid.bias_max > c.grid.bias_min, "grid.bias_max_T", "must exceed bias_min_T");
    require(c.grid.phi_span > 0.0, "grid.phi_span_rad", "must be > 0");
    r.finish();
  }

  if (const json* s = root.get("simulation")) {
    ObjectReader r(*s, "simulation");
    c.simulation_noise = r.number("sigma_noise", c.simulation_noise);
    require(c.simulation_noise >= 0.0, "simulation.sigma_noise", "must be >= 0");
    r.finish();
  }

  if (const json* s = root.get("orientation_search")) {
    ObjectReader r(*s, "orientation_search");
    c.orientation_space = ParamSpace::orientation(r.count("n_alpha", 72, 2), r.count("n_beta", 24, 2),
                                                  r.count("n_zeta", 24, 2));
    r.finish();
  }

  if (const json* s = root.get("field_search")) {
    ObjectReader r(*s, "field_search");
    const ParamSpace d = ParamSpace::field();
    const double lo = r.number("b_z_min_T", d.axes[0].lower);
    const double hi = r.number("b_z_max_T", d.axes[0].upper);
    const std::size_t nz = r.count("n_b_z", d.axes[0].points, 2);
    const double bp = r.number("b_perp_max_T", d.axes[1].upper);
    const std::size_t nbp = r.count("n_b_perp", d.axes[1].points, 2);
    const std::size_t n0 = r.count("n_phi0", d.axes[2].points, 2);
    require(hi > lo, "field_search.b_z_max_T", "must exceed b_z_min_T");
    require(bp > 0.0, "field_search.b_perp_max_T", "must be > 0");
    r.finish();
    c.field_space = ParamSpace::field(lo, hi, nz, bp, nbp, n0);
  }

  if (const json* s = root.get("search")) {
    ObjectReader r(*s, "search");
    SearchOptions& o = c.search;
    o.mode_log_threshold = r.number("mode_log_threshold", o.mode_log_threshold);
    o.suppression_radius = static_cast<int>(r.count("suppression_radius", static_cast<std::size_t>(o.suppression_radius)));
    o.max_candidates = r.count("max_candidates", o.max_candidates, 1);
    o.angle_resolution = r.number("angle_resolution_rad", o.angle_resolution);
    o.field_resolution = r.number("field_resolution_T", o.field_resolution);
    o.local_points = r.count("local_points", o.local_points, 3);
    o.local_sigmas = r.number("local_sigmas", o.local_sigmas);
    o.use_lattice = r.flag("use_lattice", o.use_lattice);
    o.reference = r.flag("reference", o.reference);
    const auto hb = r.maybe_number("difference_step_bias_T");
    const auto hp = r.maybe_number("difference_step_phi_rad");
    require(hb.has_value() == hp.has_value(), "search", "give both difference steps or neither");
    if (hb) {
      require(*hb > 0.0, "search.difference_step_bias_T", "must be > 0");
      require(*hp > 0.0, "search.difference_step_phi_rad", "must be > 0");
      o.steps = DifferenceSteps{*hb, *hp};
    }
    r.finish();
    try {
      o.validate();
    } catch (const ValidationError& e) {
      throw ConfigError("search", e.what());
    }
  }

  if (const json* s = root.get("scaling")) {
    ObjectReader r(*s, "scaling");
    if (const json* ns = r.get("ns")) {
      require(ns->is_array() && !ns->empty(), "scaling.ns", "expected a non-empty array of counts");
      c.scaling_ns.clear();
      for (const auto& e : *ns) {
        require(e.is_number_unsigned() && e.get<std::size_t>() >= 1, "scaling.ns", "entries must be integers >= 1");
        c.scaling_ns.push_back(e.get<std::size_t>());
      }
    }
    c.scaling_repetitions = r.count("repetitions", c.scaling_repetitions, 2);
    r.finish();
  }

  if (const json* p = root.get("preprocess")) {
    ObjectReader r(*p, "preprocess");
    c.renormalize_percentile = r.maybe_number("renormalize_percentile");
    if (c.renormalize_percentile)
      require(*c.renormalize_percentile > 0.0 && *c.renormalize_percentile <= 100.0,
              "preprocess.renormalize_percentile", "must lie in (0, 100]");
    r.finish();
  }

  root.finish();
  return c;
}

RunConfig read_config(const std::string& path) {
  auto in = open_in(path);
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return parse_config(doc);
}

json RunConfig::to_json() const {
  json j;
  j["mode"] = mode;
  j["seed"] = seed;
  j["data"] = data_path;
  j["output_dir"] = output_dir;
  if (orientation) {
    if (orientation->angles)
      j["orientation"] = {{"alpha_rad", orientation->angles->alpha},
                          {"beta_rad", orientation->angles->beta},
                          {"zeta_rad", orientation->angles->zeta}};
    else
      j["orientation"] = {{"lab_z_along", {orientation->lab_z_along->x, orientation->lab_z_along->y,
                                           orientation->lab_z_along->z}}};
  }
  if (field) j["field"] = {{"b_z_T", field->b_z}, {"b_perp_T", field->b_perp}, {"phi0_rad", field->phi0}};
  j["lineshape"] = {{"kind", kind_name(lineshape.kind)},
                    {"gamma_T", lineshape.gamma},
                    {"contrast", lineshape.contrast},
                    {"weights", lineshape.weights}};
  j["noise"] = {{"sigma_noise", noise.sigma_noise},
                {"sigma_bias_T", noise.sigma_bias},
                {"sigma_phi_rad", noise.sigma_phi}};
  j["grid"] = {{"bias_min_T", grid.bias_min}, {"bias_max_T", grid.bias_max}, {"n_bias", grid.n_bias},
               {"phi_start_rad", grid.phi_start}, {"phi_span_rad", grid.phi_span}, {"n_phi", grid.n_phi}};
  j["simulation"] = {{"sigma_noise", simulation_noise}};
  j["orientation_search"] = {{"n_alpha", orientation_space.axes[0].points},
                             {"n_beta", orientation_space.axes[1].points},
                             {"n_zeta", orientation_space.axes[2].points}};
  j["field_search"] = {{"b_z_min_T", field_space.axes[0].lower},   {"b_z_max_T", field_space.axes[0].upper},
                       {"n_b_z", field_space.axes[0].points},      {"b_perp_max_T", field_space.axes[1].upper},
                       {"n_b_perp", field_space.axes[1].points},   {"n_phi0", field_space.axes[2].points}};
  json s = {{"mode_log_threshold", search.mode_log_threshold},
            {"suppression_radius", search.suppression_radius},
            {"max_candidates", search.max_candidates},
            {"angle_resolution_rad", search.angle_resolution},
            {"field_resolution_T", search.field_resolution},
            {"local_points", search.local_points},
            {"local_sigmas", search.local_sigmas},
            {"use_lattice", search.use_lattice},
            {"reference", search.reference}};
  if (search.steps) {
    s["difference_step_bias_T"] = search.steps->bias;
    s["difference_step_phi_rad"] = search.steps->phi;
  }
  j["search"] = s;
  j["scaling"] = {{"ns", scaling_ns}, {"repetitions", scaling_repetitions}};
  j["preprocess"] = json::object();
  if (renormalize_percentile) j["preprocess"]["renormalize_percentile"] = *renormalize_percentile;
  return j;
}

// ---------------------------------------------------------------- results

ResultsDocument make_results(const Posterior& post, const RunConfig& config, const std::string& command) {
  ResultsDocument d;
  d.command = command;
  d.seed = config.seed;
  for (int k = 0; k < 3; ++k) {
    d.names[k] = post.space.axes[k].name;
    d.units[k] = post.space.axes[k].unit;
  }
  for (const auto& m : post.modes)
    d.modes.push_back({m.point, m.stddev, m.interval95, m.log_density, m.log_mass, m.weight});
  d.marginals = post.marginals;
  d.evidence_proxy = post.evidence_proxy;
  d.used_lattice = post.used_lattice;
  d.warnings = post.warnings;
  d.notes = post.notes;
  d.config = config.to_json();
  d.metadata = {{"likelihood", "gaussian: -1/2 sum_p [ r_p^2 / s_p^2 + ln(2 pi s_p^2) ]"},
                {"effective_variance", "s_p^2 = sigma_noise^2 + (dPL/db)^2 sigma_bias^2 + (dPL/dphi)^2 sigma_phi^2"},
                {"prior", "uniform over the search box"},
                {"uncertainty", "stddev is the 1-sigma marginal width; interval95 is equal-tailed"}};
  return d;
}

namespace {

json marginal_json(const Marginal& m) {
  json j = {{"name", m.name}, {"unit", m.unit}, {"x", m.x}, {"density", m.density}};
  if (m.x.size() > 1) {
    const auto ci = m.credible_interval(0.95);
    j["summary"] = {{"mean", m.mean()}, {"stddev", m.stddev()}, {"interval95", {ci.first, ci.second}}};
  }
  return j;
}

template <class T>
T field_of(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("results document lacks '") + key + "'");
  return j.at(key).get<T>();
}

}  // namespace

json to_json(const ResultsDocument& d) {
  json j;
  j["format"] = "nvmag-results v1";
  j["software_version"] = d.software_version;
  j["command"] = d.command;
  j["seed"] = d.seed;
  j["parameters"] = json::array();
  for (int k = 0; k < 3; ++k) j["parameters"].push_back({{"name", d.names[k]}, {"unit", d.units[k]}});
  j["modes"] = json::array();
  for (const auto& m : d.modes) {
    json mj = {{"point", m.point},           {"stddev", m.stddev},     {"log_density", m.log_density},
               {"log_mass", m.log_mass},     {"weight", m.weight}};
    mj["interval95"] = json::array();
    for (const auto& [lo, hi] : m.interval95) mj["interval95"].push_back({lo, hi});
    j["modes"].push_back(mj);
  }
  j["marginals"] = json::array();
  for (const auto& m : d.marginals) j["marginals"].push_back(marginal_json(m));
  j["evidence_proxy"] = d.evidence_proxy;
  j["used_lattice"] = d.used_lattice;
  j["warnings"] = d.warnings;
  j["notes"] = d.notes;
  j["scaling"] = json::array();
  for (const auto& r : d.scaling)
    j["scaling"].push_back(
        {{"n_traces", r.n_traces}, {"mean_width", r.mean_width}, {"std_width", r.std_width}, {"widths", r.widths}});
  if (d.scaling_slope) j["scaling_slope"] = *d.scaling_slope;
  j["config"] = d.config;
  j["metadata"] = d.metadata;
  return j;
}

ResultsDocument results_from_json(const json& j) {
  try {
    if (field_of<std::string>(j, "format") != "nvmag-results v1")
      throw ValidationError("unsupported results format '" + j.at("format").get<std::string>() + "'");
    ResultsDocument d;
    d.software_version = field_of<std::string>(j, "software_version");
    d.command = field_of<std::string>(j, "command");
    d.seed = field_of<std::uint64_t>(j, "seed");
    const json& params = j.at("parameters");
    if (params.size() != 3) throw ValidationError("results document needs 3 parameters");
    for (int k = 0; k < 3; ++k) {
      d.names[k] = params[k].at("name").get<std::string>();
      d.units[k] = params[k].at("unit").get<std::string>();
    }
    for (const auto& mj : j.at("modes")) {
      ModeSummary m;
      m.point = mj.at("point").get<std::array<double, 3>>();
      m.stddev = mj.at("stddev").get<std::array<double, 3>>();
      for (int k = 0; k < 3; ++k) m.interval95[k] = {mj.at("interval95")[k][0].get<double>(), mj.at("interval95")[k][1].get<double>()};
      m.log_density = mj.at("log_density").get<double>();
      m.log_mass = mj.at("log_mass").get<double>();
      m.weight = mj.at("weight").get<double>();
      d.modes.push_back(m);
    }
    const json& ms = j.at("marginals");
    if (ms.size() != 3) throw ValidationError("results document needs 3 marginals");
    for (int k = 0; k < 3; ++k)
      d.marginals[k] = {ms[k].at("name").get<std::string>(), ms[k].at("unit").get<std::string>(),
                        ms[k].at("x").get<std::vector<double>>(), ms[k].at("density").get<std::vector<double>>()};
    d.evidence_proxy = field_of<double>(j, "evidence_proxy");
    d.used_lattice = field_of<bool>(j, "used_lattice");
    d.warnings = field_of<std::vector<std::string>>(j, "warnings");
    d.notes = field_of<std::vector<std::string>>(j, "notes");
    for (const auto& r : j.at("scaling"))
      d.scaling.push_back({r.at("n_traces").get<std::size_t>(), r.at("mean_width").get<double>(),
                           r.at("std_width").get<double>(), r.at("widths").get<std::vector<double>>()});
    if (j.contains("scaling_slope")) d.scaling_slope = j.at("scaling_slope").get<double>();
    d.config = j.at("config");
    d.metadata = j.at("metadata");
    return d;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed results document: ") + e.what());
  }
}

void write_results(const std::string& path, const ResultsDocument& doc) {
  auto out = open_out(path);
  out << to_json(doc).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

ResultsDocument read_results(const std::string& path) {
  auto in = open_in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return results_from_json(j);
}

std::string sidecar_path(const std::string& results_path) {
  const auto slash = results_path.find_last_of('/');
  const auto dot = results_path.find_last_of('.');
  const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
  return (has_ext ? results_path.substr(0, dot) : results_path) + ".meta.json";
}

void write_sidecar(const std::string& results_path, double seconds, int threads) {
  const std::string path = sidecar_path(results_path);
  auto out = open_out(path);
  out << json{{"results", results_path}, {"wall_seconds", seconds}, {"threads", threads}}.dump(2) << '\n';
}

// ---------------------------------------------------------------- plot tables

void write_marginal_table(std::ostream& out, const Marginal& m) {
  out << "# marginal: " << m.name << '\n';
  out << "# unit: " << m.unit << '\n';
  out << m.name << '_' << m.unit << ",density\n";
  for (std::size_t i = 0; i < m.x.size(); ++i) out << fmt17(m.x[i]) << ',' << fmt17(m.density[i]) << '\n';
}

void write_map_matrix(std::ostream& out, const PLMap& map) {
  map.validate();
  out << "# rows: phi_rad; columns: b_bias_T; first row and column are the axes\n";
  out << map.grid.n_bias();
  for (double b : map.grid.bias_values) out << ' ' << fmt17(b);
  out << '\n';
  const std::size_t nb = map.grid.n_bias();
  for (std::size_t j = 0; j < map.grid.n_phi(); ++j) {
    out << fmt17(map.grid.phi_values[j]);
    for (std::size_t i = 0; i < nb; ++i) out << ' ' << fmt17(map.values[j * nb + i]);
    out << '\n';
  }
}

void write_mode_table(std::ostream& out, const ResultsDocument& doc) {
  out << "mode,weight,log_density,log_mass";
  for (int k = 0; k < 3; ++k) {
    const std::string n = doc.names[k] + "_" + doc.units[k];
    out << ',' << n << ',' << n << "_sd," << n << "_lo95," << n << "_hi95";
  }
  out << '\n';
  for (std::size_t i = 0; i < doc.modes.size(); ++i) {
    const auto& m = doc.modes[i];
    out << i << ',' << fmt17(m.weight) << ',' << fmt17(m.log_density) << ',' << fmt17(m.log_mass);
    for (int k = 0; k < 3; ++k)
      out << ',' << fmt17(m.point[k]) << ',' << fmt17(m.stddev[k]) << ',' << fmt17(m.interval95[k].first) << ','
          << fmt17(m.interval95[k].second);
    out << '\n';
  }
}

void write_scaling_table(std::ostream& out, const std::vector<ScalingRow>& rows) {
  out << "n_traces,mean_width_T,std_width_T\n";
  for (const auto& r : rows) out << r.n_traces << ',' << fmt17(r.mean_width) << ',' << fmt17(r.std_width) << '\n';
}

}  // namespace nvmag
