#pragma once

#include "fluctua/engine.hpp"
#include "fluctua/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fluctua::cli {

enum ExitCode : int {
  kOk = 0,
  kInvalidInput = 1,
  kUnconverged = 2,
  kOracleBreach = 3,
};

enum class TemperatureRegime { Finite, Zero };

struct ScenarioConfig {
  FieldKernelSpec kernel;
  Body body1;
  Body body2;
  TemperatureRegime regime = TemperatureRegime::Finite;
  double temperature = 0.0;
  int n_max = 4000;
  double tail_tol = 1e-12;
  SpectralQuadrature quadrature;
  InteractionMethod method = InteractionMethod::Subtraction;
  Vec3 axis = Vec3::Zero();  // zero: centroid direction
  /// Empty for a single evaluation at the configured geometry.
  std::vector<double> separations;
  std::optional<double> force_step;
  std::string output;
};

/// Thrown for unparsable or invalid configs; carries a location such as
/// "line 4, column 7" or a JSON pointer like "/bodies/1/voxels/0".
class ConfigParseError : public std::runtime_error {
 public:
  ConfigParseError(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

ScenarioConfig parse_config(const std::string& text,
                            const std::filesystem::path& base_dir = ".");
ScenarioConfig load_config(const std::filesystem::path& path);

struct ResultRow {
  double separation = 0.0;
  double f_int = 0.0;
  double f_eff_total = 0.0;
  double force = 0.0;
  int n_modes_used = 0;
  double tail_estimate = 0.0;
  bool converged = false;
};

/// Scene for one row: body2 moved along the axis so that the centroid
/// separation projected on it equals `separation`.
Scene scene_at(const ScenarioConfig& config, std::optional<double> separation);

/// Validates every row's scene before evaluating anything.
std::vector<std::string> validate_config(const ScenarioConfig& config);

std::vector<ResultRow> evaluate(const ScenarioConfig& config, unsigned threads);

/// Columns: d,F_int,F_eff_total,force,n_modes_used,tail_estimate,converged.
void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);

/// Full `run` subcommand; diagnostics go to `log`.
int run(const std::filesystem::path& config_path,
        const std::filesystem::path& output_path, unsigned threads,
        std::ostream& log);

struct OracleSuiteOptions {
  std::uint64_t seed = 42;
  int instances = 10;
  int n_max = 8;
  /// Negative control: flip the effective log-det sign for this instance.
  std::optional<int> corrupt_instance;
};

struct OracleInstanceRow {
  int instance = 0;
  std::uint64_t seed = 0;
  int n_x = 0;
  int n_modes = 0;
  int matter_sites = 0;
  std::string boundary;
  double factorization_residual = 0.0;
  double mean_force_residual = 0.0;
  double force_equivalence_residual = 0.0;
  bool passed = false;
};

std::uint64_t instance_seed(std::uint64_t seed, int instance);
OracleInstanceRow run_oracle_instance(std::uint64_t seed, int instance, int n_max,
                                      bool corrupt);

/// Full `oracle` subcommand.
int oracle_suite(const OracleSuiteOptions& options,
                 const std::filesystem::path& output_path, std::ostream& log);

/// Threads from the flag, else FLUCTUA_THREADS, else 1.
unsigned resolve_threads(std::optional<unsigned> flag);

}  // namespace fluctua::cli
