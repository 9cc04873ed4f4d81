#include "fluctua/cli.hpp"

#include "fluctua/coupling.hpp"
#include "fluctua/errors.hpp"
#include "fluctua/oracle.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

namespace fluctua::cli {

namespace {

using nlohmann::json;

std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

class Reader {
 public:
  Reader(const json& root, std::filesystem::path base_dir)
      : root_(root), base_dir_(std::move(base_dir)) {}

  const json& at(const json& node, const std::string& key,
                 const std::string& path) const {
    if (!node.is_object() || !node.contains(key)) {
      throw ConfigParseError(path, "missing required field '" + key + "'");
    }
    return node.at(key);
  }

  double number(const json& node, const std::string& path) const {
    if (!node.is_number()) throw ConfigParseError(path, "expected a number");
    return node.get<double>();
  }

  int integer(const json& node, const std::string& path) const {
    if (!node.is_number_integer()) throw ConfigParseError(path, "expected an integer");
    return node.get<int>();
  }

  std::string string(const json& node, const std::string& path) const {
    if (!node.is_string()) throw ConfigParseError(path, "expected a string");
    return node.get<std::string>();
  }

  Vec3 vec3(const json& node, const std::string& path) const {
    if (!node.is_array() || node.size() != 3) {
      throw ConfigParseError(path, "expected an array of 3 numbers");
    }
    return {number(node[0], path + "/0"), number(node[1], path + "/1"),
            number(node[2], path + "/2")};
  }

  // A number (isotropic), 3 numbers (diagonal), or a 3x3 nested array.
  Tensor3 tensor(const json& node, const std::string& path) const {
    if (node.is_number()) return number(node, path) * Tensor3::Identity();
    if (node.is_array() && node.size() == 3 && node[0].is_number()) {
      return vec3(node, path).asDiagonal();
    }
    if (node.is_array() && node.size() == 3) {
      Tensor3 t;
      for (int r = 0; r < 3; ++r) {
        t.row(r) = vec3(node[r], path + "/" + std::to_string(r)).transpose();
      }
      return t;
    }
    throw ConfigParseError(path, "expected a number, 3 numbers or a 3x3 array");
  }

  SusceptibilityModel susceptibility(const json& node,
                                     const std::string& path) const {
    const std::string type = string(at(node, "type", path), path + "/type");
    if (type == "zero") return zero_susceptibility();
    if (type == "constant") {
      return ConstantSusceptibility{tensor(at(node, "alpha", path), path + "/alpha")};
    }
    if (type == "lorentz") {
      LorentzSusceptibility m;
      m.plasma_sq = number(at(node, "plasma_sq", path), path + "/plasma_sq");
      m.resonance = number(at(node, "resonance", path), path + "/resonance");
      m.damping = number(at(node, "damping", path), path + "/damping");
      if (node.contains("orientation")) {
        m.orientation = tensor(node.at("orientation"), path + "/orientation");
      }
      return m;
    }
    if (type == "tabulated") {
      const auto file = base_dir_ / string(at(node, "csv", path), path + "/csv");
      std::ifstream in(file);
      if (!in) throw ConfigParseError(path + "/csv", "cannot open " + file.string());
      try {
        return read_imchi_csv(in);
      } catch (const ConfigError& e) {
        throw ConfigParseError(file.string(), e.what());
      }
    }
    throw ConfigParseError(path + "/type",
                           "unknown susceptibility type '" + type + "'");
  }

  Body body(const json& node, const std::string& path, BodyLabel label) const {
    Body b;
    b.label = label;
    const bool has_voxels = node.contains("voxels");
    const bool has_box = node.contains("box");
    if (has_voxels == has_box) {
      throw ConfigParseError(path, "give exactly one of 'voxels' or 'box'");
    }
    if (has_voxels) {
      const auto& list = node.at("voxels");
      if (!list.is_array() || list.empty()) {
        throw ConfigParseError(path + "/voxels", "expected a non-empty array");
      }
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string vp = path + "/voxels/" + std::to_string(i);
        b.voxels.push_back({vec3(at(list[i], "center", vp), vp + "/center"),
                            number(at(list[i], "volume", vp), vp + "/volume")});
      }
    } else {
      const auto& box = node.at("box");
      const std::string bp = path + "/box";
      const Vec3 lo = vec3(at(box, "min", bp), bp + "/min");
      const Vec3 hi = vec3(at(box, "max", bp), bp + "/max");
      const auto& res = at(box, "resolution", bp);
      if (!res.is_array() || res.size() != 3) {
        throw ConfigParseError(bp + "/resolution", "expected 3 integers");
      }
      const Eigen::Vector3i r(integer(res[0], bp + "/resolution/0"),
                              integer(res[1], bp + "/resolution/1"),
                              integer(res[2], bp + "/resolution/2"));
      try {
        b.voxels = voxelize_box(lo, hi, r);
      } catch (const ConfigError& e) {
        throw ConfigParseError(bp, e.what());
      }
    }
    b.susceptibility = susceptibility(at(node, "susceptibility", path),
                                      path + "/susceptibility");
    return b;
  }

  ScenarioConfig scenario() const {
    ScenarioConfig c;
    const auto& k = at(root_, "kernel", "");
    c.kernel.dimension = integer(at(k, "dimension", "/kernel"), "/kernel/dimension");
    c.kernel.mass = k.contains("mass") ? number(k.at("mass"), "/kernel/mass") : 0.0;
    c.kernel.n_internal =
        k.contains("n_internal") ? integer(k.at("n_internal"), "/kernel/n_internal") : 1;

    const std::string mode = string(at(root_, "mode", ""), "/mode");
    if (mode == "finite-T") {
      c.regime = TemperatureRegime::Finite;
      c.temperature = number(at(root_, "temperature", ""), "/temperature");
    } else if (mode == "zero-T") {
      c.regime = TemperatureRegime::Zero;
    } else {
      throw ConfigParseError("/mode", "expected 'finite-T' or 'zero-T'");
    }
    if (root_.contains("matsubara")) {
      const auto& m = root_.at("matsubara");
      if (m.contains("n_max")) c.n_max = integer(m.at("n_max"), "/matsubara/n_max");
      if (m.contains("tail_tol")) c.tail_tol = number(m.at("tail_tol"), "/matsubara/tail_tol");
    }
    if (root_.contains("quadrature")) {
      const auto& q = root_.at("quadrature");
      if (q.contains("rel_tol")) {
        c.quadrature.rel_tol = number(q.at("rel_tol"), "/quadrature/rel_tol");
      }
      if (q.contains("max_intervals")) {
        c.quadrature.max_intervals =
            integer(q.at("max_intervals"), "/quadrature/max_intervals");
      }
    }
    if (root_.contains("interaction")) {
      const std::string method = string(root_.at("interaction"), "/interaction");
      if (method == "subtraction") {
        c.method = InteractionMethod::Subtraction;
      } else if (method == "two-body") {
        c.method = InteractionMethod::TwoBody;
      } else {
        throw ConfigParseError("/interaction", "expected 'subtraction' or 'two-body'");
      }
    }

    const auto& bodies = at(root_, "bodies", "");
    if (!bodies.is_array() || bodies.size() != 2) {
      throw ConfigParseError("/bodies", "expected exactly two bodies");
    }
    c.body1 = body(bodies[0], "/bodies/0", BodyLabel::A1);
    c.body2 = body(bodies[1], "/bodies/1", BodyLabel::A2);

    const bool has_sweep = root_.contains("sweep");
    const bool has_single = root_.contains("single");
    if (has_sweep == has_single) {
      throw ConfigParseError("/", "give exactly one of 'sweep' or 'single'");
    }
    const auto& geo = has_sweep ? root_.at("sweep") : root_.at("single");
    const std::string gp = has_sweep ? "/sweep" : "/single";
    if (geo.contains("axis")) c.axis = vec3(geo.at("axis"), gp + "/axis");
    if (has_sweep) {
      const auto& seps = at(geo, "separations", gp);
      if (!seps.is_array() || seps.empty()) {
        throw ConfigParseError(gp + "/separations", "expected a non-empty array");
      }
      for (std::size_t i = 0; i < seps.size(); ++i) {
        c.separations.push_back(
            number(seps[i], gp + "/separations/" + std::to_string(i)));
      }
    }
    if (root_.contains("force_step")) {
      c.force_step = number(root_.at("force_step"), "/force_step");
    }
    if (root_.contains("output")) c.output = string(root_.at("output"), "/output");
    return c;
  }

 private:
  const json& root_;
  std::filesystem::path base_dir_;
};

Vec3 resolved_axis(const ScenarioConfig& c) {
  if (c.axis.norm() > 0.0) return c.axis.normalized();
  const Vec3 d = c.body2.centroid() - c.body1.centroid();
  return d.norm() > 0.0 ? Vec3(d.normalized()) : Vec3::UnitX();
}

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

ScenarioConfig parse_config(const std::string& text,
                            const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigParseError(line_column(text, e.byte > 0 ? e.byte - 1 : 0),
                           "JSON syntax error");
  }
  return Reader(root, base_dir).scenario();
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParseError(path.string(), "cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

Scene scene_at(const ScenarioConfig& config, std::optional<double> separation) {
  Scene s;
  s.kernel = config.kernel;
  s.body1 = config.body1;
  s.body2 = config.body2;
  s.temperature = config.regime == TemperatureRegime::Finite ? config.temperature : 0.0;
  if (separation) {
    const Vec3 axis = resolved_axis(config);
    const double now = separation_along(s, axis);
    s = s.with_body2_translated((*separation - now) * axis);
  }
  return s;
}

std::vector<std::string> validate_config(const ScenarioConfig& config) {
  std::vector<std::string> out;
  if (config.regime == TemperatureRegime::Finite && !(config.temperature > 0.0)) {
    out.push_back("/temperature: finite-T mode needs temperature > 0");
  }
  if (config.n_max < 1) out.push_back("/matsubara/n_max: must be >= 1");
  if (!(config.tail_tol > 0.0)) out.push_back("/matsubara/tail_tol: must be > 0");
  try {
    config.quadrature.validate();
  } catch (const ConfigError& e) {
    out.push_back(std::string("/quadrature: ") + e.what());
  }
  if (config.force_step && !(*config.force_step > 0.0)) {
    out.push_back("/force_step: must be > 0");
  }
  std::vector<std::optional<double>> rows;
  if (config.separations.empty()) {
    rows.push_back(std::nullopt);
  } else {
    rows.assign(config.separations.begin(), config.separations.end());
  }
  for (const auto& sep : rows) {
    const Scene s = scene_at(config, sep);
    const std::string tag = sep ? "separation " + fmt17(*sep) + ": " : "";
    for (const auto& d : validate_scene(s)) {
      out.push_back(tag + d.field + ": " + d.message);
    }
    const double distance = (s.body2.centroid() - s.body1.centroid()).norm();
    const double h = config.force_step.value_or(distance / 100.0);
    if (!(h < 0.1 * distance)) {
      out.push_back(tag + "/force_step: must be below separation/10");
    }
  }
  return out;
}

std::vector<ResultRow> evaluate(const ScenarioConfig& config, unsigned threads) {
  EngineOptions opts;
  opts.threads = threads;
  opts.method = config.method;
  TemperatureMode mode = config.quadrature;
  if (config.regime == TemperatureRegime::Finite) {
    mode = MatsubaraMode{make_matsubara_grid(config.temperature, config.n_max),
                         config.tail_tol};
  }
  const Vec3 axis = resolved_axis(config);
  std::vector<std::optional<double>> seps;
  if (config.separations.empty()) {
    seps.push_back(std::nullopt);
  } else {
    seps.assign(config.separations.begin(), config.separations.end());
  }
  std::vector<ResultRow> rows;
  for (const auto& sep : seps) {
    const Scene s = scene_at(config, sep);
    const double distance = (s.body2.centroid() - s.body1.centroid()).norm();
    const double h = config.force_step.value_or(distance / 100.0);
    ResultRow row;
    try {
      const ForceResult f = induced_force(s, axis, h, mode, opts);
      row.separation = f.separation;
      row.f_int = f.energy_center;
      row.f_eff_total = f.full_center;
      row.force = f.force;
      row.n_modes_used = std::max(f.n_used, f.full_n_used);
      row.tail_estimate = std::max(f.tail_estimate, f.full_tail_estimate);
      row.converged = f.converged && f.full_converged;
    } catch (const NumericError& e) {
      row.separation = separation_along(s, axis);
      row.f_int = row.f_eff_total = row.force = std::nan("");
      row.tail_estimate = e.achieved_tolerance();
      row.converged = false;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "d,F_int,F_eff_total,force,n_modes_used,tail_estimate,converged\n";
  for (const auto& r : rows) {
    out << fmt17(r.separation) << ',' << fmt17(r.f_int) << ','
        << fmt17(r.f_eff_total) << ',' << fmt17(r.force) << ',' << r.n_modes_used
        << ',' << fmt17(r.tail_estimate) << ',' << (r.converged ? "true" : "false")
        << '\n';
  }
}

int run(const std::filesystem::path& config_path,
        const std::filesystem::path& output_path, unsigned threads,
        std::ostream& log) {
  ScenarioConfig config;
  try {
    config = load_config(config_path);
  } catch (const ConfigParseError& e) {
    log << config_path.string() << ": " << e.what() << '\n';
    return kInvalidInput;
  }
  const auto problems = validate_config(config);
  if (!problems.empty()) {
    for (const auto& p : problems) log << config_path.string() << ": " << p << '\n';
    return kInvalidInput;
  }
  for (const auto& w : proximity_warnings(scene_at(config, std::nullopt))) {
    log << "warning: " << w.message << '\n';
  }
  std::vector<ResultRow> rows;
  try {
    rows = evaluate(config, threads);
  } catch (const std::exception& e) {
    log << "evaluation failed: " << e.what() << '\n';
    return kInvalidInput;
  }
  const std::filesystem::path target =
      output_path.empty() ? std::filesystem::path(config.output) : output_path;
  if (target.empty()) {
    log << "no output path given (--output or config 'output')\n";
    return kInvalidInput;
  }
  std::ofstream out(target);
  if (!out) {
    log << "cannot write " << target.string() << '\n';
    return kInvalidInput;
  }
  write_results_csv(out, rows);
  bool all_converged = true;
  for (const auto& r : rows) {
    if (!r.converged) {
      all_converged = false;
      log << "unconverged sum at d = " << fmt17(r.separation) << '\n';
    }
  }
  return all_converged ? kOk : kUnconverged;
}

std::uint64_t instance_seed(std::uint64_t seed, int instance) {
  // splitmix64 of (seed, instance)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(instance + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

OracleInstanceRow run_oracle_instance(std::uint64_t seed, int instance, int n_max,
                                      bool corrupt) {
  OracleInstanceRow row;
  row.instance = instance;
  row.seed = instance_seed(seed, instance);
  std::mt19937_64 rng(row.seed);
  const LatticeModel lat = random_lattice(rng);
  row.n_x = lat.n_x;
  row.n_modes = lat.n_modes();
  row.matter_sites = static_cast<int>(lat.matter_sites.size());
  row.boundary = lat.boundary == Boundary::Dirichlet ? "dirichlet" : "periodic";
  OracleFaults faults;
  faults.flip_eff_sign = corrupt;
  const MatsubaraGrid grid(lat.temperature, n_max);
  const OracleReport report = mean_force_check(lat, grid, faults);
  row.factorization_residual = report.factorization_residual;
  row.mean_force_residual = report.mean_force_residual;
  row.force_equivalence_residual = force_equivalence_check(lat, grid, 1, faults).residual;
  row.passed = row.factorization_residual <= 1e-10 && row.mean_force_residual <= 1e-10 &&
               row.force_equivalence_residual <= 1e-9;
  return row;
}

int oracle_suite(const OracleSuiteOptions& options,
                 const std::filesystem::path& output_path, std::ostream& log) {
  if (options.instances < 1) {
    log << "oracle: --instances must be >= 1\n";
    return kInvalidInput;
  }
  if (options.n_max < 1) {
    log << "oracle: n_max must be >= 1\n";
    return kInvalidInput;
  }
  std::ofstream out(output_path);
  if (!out) {
    log << "cannot write " << output_path.string() << '\n';
    return kInvalidInput;
  }
  out << "instance,seed,n_x,n_modes,matter_sites,boundary,factorization_residual,"
         "mean_force_residual,force_equivalence_residual,passed\n";
  bool all_passed = true;
  for (int i = 0; i < options.instances; ++i) {
    const bool corrupt = options.corrupt_instance && *options.corrupt_instance == i;
    const OracleInstanceRow r = run_oracle_instance(options.seed, i, options.n_max, corrupt);
    out << r.instance << ',' << r.seed << ',' << r.n_x << ',' << r.n_modes << ','
        << r.matter_sites << ',' << r.boundary << ',' << fmt17(r.factorization_residual)
        << ',' << fmt17(r.mean_force_residual) << ','
        << fmt17(r.force_equivalence_residual) << ',' << (r.passed ? "true" : "false")
        << '\n';
    if (!r.passed) {
      all_passed = false;
      log << "oracle breach: instance " << r.instance << " (seed " << r.seed << ")\n";
    }
  }
  return all_passed ? kOk : kOracleBreach;
}

unsigned resolve_threads(std::optional<unsigned> flag) {
  if (flag && *flag > 0) return *flag;
  if (const char* env = std::getenv("FLUCTUA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

}  // namespace fluctua::cli
