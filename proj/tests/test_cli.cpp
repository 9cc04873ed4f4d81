#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fluctua/cli.hpp"
#include "fluctua/errors.hpp"
#include "support.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fluctua;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("fluctua_cli_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = scratch_dir() / name;
  std::ofstream(p) << text;
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

int shell(const std::string& command) {
  const int status = std::system((command + " 2>" + (scratch_dir() / "stderr.txt").string()).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string last_stderr() { return read_file(scratch_dir() / "stderr.txt"); }

int run_binary(const std::string& args) { return shell(std::string(FLUCTUA_BINARY) + " " + args); }

std::string two_voxel_config(const std::string& chi, const std::string& mode_block,
                             const std::string& placement) {
  return R"({
  "kernel": {"dimension": 3, "mass": 0.0, "n_internal": 1},
)" + mode_block + R"(,
  "bodies": [
    {"voxels": [{"center": [0, 0, 0], "volume": 1.0}],
     "susceptibility": )" + chi + R"(},
    {"voxels": [{"center": [3, 0, 0], "volume": 1.0}],
     "susceptibility": )" + chi + R"(}
  ],
)" + placement + "\n}\n";
}

const std::string kConstant = R"({"type": "constant", "alpha": 0.4})";
const std::string kLorentz =
    R"({"type": "lorentz", "plasma_sq": 1, "resonance": 1, "damping": 0.1})";
const std::string kFiniteT =
    R"(  "mode": "finite-T", "temperature": 0.5, "matsubara": {"n_max": 4000, "tail_tol": 1e-12})";
const std::string kSweep = R"(  "sweep": {"axis": [1, 0, 0], "separations": [2.0, 3.0, 4.0]})";

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  return out;
}

}  // namespace

TEST_CASE("config parsing: voxels, boxes and susceptibility kinds") {
  const cli::ScenarioConfig c = cli::parse_config(two_voxel_config(kConstant, kFiniteT, kSweep));
  CHECK(c.regime == cli::TemperatureRegime::Finite);
  CHECK(c.temperature == 0.5);
  CHECK(c.n_max == 4000);
  CHECK(c.separations == std::vector<double>{2.0, 3.0, 4.0});
  CHECK(c.body1.voxels.size() == 1);
  CHECK(std::holds_alternative<ConstantSusceptibility>(c.body1.susceptibility));
  CHECK(c.method == InteractionMethod::Subtraction);

  const cli::ScenarioConfig box = cli::parse_config(R"({
    "kernel": {"dimension": 3, "mass": 0.1, "n_internal": 3},
    "mode": "zero-T",
    "interaction": "two-body",
    "bodies": [
      {"box": {"min": [0, 0, 0], "max": [1, 1, 1], "resolution": [2, 1, 1]},
       "susceptibility": {"type": "lorentz", "plasma_sq": 1, "resonance": 1, "damping": 0.1}},
      {"voxels": [{"center": [4, 0, 0], "volume": 0.5}],
       "susceptibility": {"type": "zero"}}
    ],
    "single": {"axis": [1, 0, 0]},
    "force_step": 0.01
  })");
  CHECK(box.regime == cli::TemperatureRegime::Zero);
  CHECK(box.method == InteractionMethod::TwoBody);
  CHECK(box.body1.voxels.size() == 2);
  CHECK(box.separations.empty());
  REQUIRE(box.force_step.has_value());
  CHECK(*box.force_step == 0.01);
}

TEST_CASE("tabulated susceptibility CSV is resolved relative to the config") {
  write_file("imchi.csv", "nu,xx,xy,xz,yy,yz,zz\n0.5,1,0,0,1,0,1\n1.0,1,0,0,1,0,1\n2.0,1,0,0,1,0,1\n");
  const std::string text = two_voxel_config(R"({"type": "tabulated", "csv": "imchi.csv"})",
                                            kFiniteT, kSweep);
  const cli::ScenarioConfig c = cli::parse_config(text, scratch_dir());
  CHECK(std::holds_alternative<TabulatedSusceptibility>(c.body2.susceptibility));
  CHECK_THROWS_AS(cli::parse_config(text, scratch_dir() / "missing"), cli::ConfigParseError);
}

TEST_CASE("syntax errors carry line and column") {
  try {
    cli::parse_config("{\n  \"kernel\": {\"dimension\": 3,,\n}\n");
    FAIL("expected a parse error");
  } catch (const cli::ConfigParseError& e) {
    CHECK(e.where().find("line 2") != std::string::npos);
    CHECK(e.where().find("column") != std::string::npos);
  }
}

TEST_CASE("semantic errors name the offending field") {
  auto where = [](const std::string& text) {
    try {
      cli::parse_config(text);
    } catch (const cli::ConfigParseError& e) {
      return e.where();
    }
    return std::string("no error");
  };
  std::string text = two_voxel_config(kConstant, kFiniteT, kSweep);
  CHECK(where(std::string(text).replace(text.find("\"volume\": 1.0"), 13, "\"volume\": \"x\"")) ==
        "/bodies/0/voxels/0/volume");
  CHECK(where(std::string(text).replace(text.find("constant"), 8, "bogus")) ==
        "/bodies/0/susceptibility/type");
  const std::string both = text.substr(0, text.rfind('}')) + R"(, "single": {"axis": [1, 0, 0]}})";
  CHECK_THROWS_WITH_AS(cli::parse_config(both), doctest::Contains("exactly one of 'sweep' or 'single'"),
                       cli::ConfigParseError);
  const std::string neither = two_voxel_config(kConstant, kFiniteT, R"(  "output": "x.csv")");
  CHECK(where(neither) != "no error");
}

TEST_CASE("non-positive tolerances are reported by validation") {
  const std::string negative_tol = two_voxel_config(
      kConstant,
      R"(  "mode": "finite-T", "temperature": 0.5, "matsubara": {"n_max": 10, "tail_tol": -1})",
      kSweep);
  const auto problems = cli::validate_config(cli::parse_config(negative_tol));
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("/matsubara/tail_tol") == 0);
}

TEST_CASE("validation rejects overlapping rows and oversized force steps") {
  const std::string overlap = two_voxel_config(
      kConstant, kFiniteT, R"(  "sweep": {"axis": [1, 0, 0], "separations": [0.0, 3.0]})");
  CHECK_FALSE(cli::validate_config(cli::parse_config(overlap)).empty());
  const std::string big_step =
      two_voxel_config(kConstant, kFiniteT, kSweep.substr(0) + R"(, "force_step": 0.5)");
  CHECK_FALSE(cli::validate_config(cli::parse_config(big_step)).empty());
  CHECK(cli::validate_config(cli::parse_config(two_voxel_config(kConstant, kFiniteT, kSweep)))
            .empty());
}

TEST_CASE("scene_at places body2 at the requested separation") {
  const cli::ScenarioConfig c = cli::parse_config(two_voxel_config(kConstant, kFiniteT, kSweep));
  for (double d : c.separations) {
    const Scene s = cli::scene_at(c, d);
    CHECK(separation_along(s, Vec3(1, 0, 0)) == doctest::Approx(d).epsilon(1e-14));
    CHECK(s.body1.voxels[0].center == Vec3::Zero());
  }
}

TEST_CASE("CSV layout and 17 significant digits") {
  std::ostringstream out;
  cli::write_results_csv(out, {{2.0, -1.0 / 3.0, 0.1, 1e-20, 17, 0.0, true},
                               {3.0, 0.0, 0.0, 0.0, 3, 1e-14, false}});
  const auto l = lines(out.str());
  REQUIRE(l.size() == 3);
  CHECK(l[0] == "d,F_int,F_eff_total,force,n_modes_used,tail_estimate,converged");
  CHECK(l[1] == "2,-0.33333333333333331,0.10000000000000001,9.9999999999999995e-21,17,0,true");
  CHECK(fields(l[2]).back() == "false");
}

TEST_CASE("run: zero-T sweep over three separations") {
  const fs::path config = write_file(
      "zero_t.json",
      two_voxel_config(kLorentz, R"(  "mode": "zero-T", "interaction": "two-body")", kSweep));
  const fs::path out = scratch_dir() / "zero_t.csv";
  REQUIRE(run_binary("run --config " + config.string() + " --output " + out.string()) == 0);
  const auto l = lines(read_file(out));
  REQUIRE(l.size() == 4);
  double previous = -1e300;
  for (int i = 1; i <= 3; ++i) {
    const auto f = fields(l[i]);
    REQUIRE(f.size() == 7);
    CHECK(std::stod(f[0]) == doctest::Approx(1.0 + i));
    const double f_int = std::stod(f[1]);
    CHECK(f_int < 0.0);
    CHECK(f_int > previous);
    CHECK(std::stod(f[3]) < 0.0);
    CHECK(f[6] == "true");
    previous = f_int;
  }
}

TEST_CASE("run: divergent zero-T self energy is flagged, not hidden") {
  const fs::path config = write_file(
      "zero_t_constant.json",
      two_voxel_config(kConstant, R"(  "mode": "zero-T", "interaction": "two-body")", kSweep));
  const fs::path out = scratch_dir() / "zero_t_constant.csv";
  CHECK(run_binary("run --config " + config.string() + " --output " + out.string()) == 2);
  const auto l = lines(read_file(out));
  REQUIRE(l.size() == 4);
  for (int i = 1; i <= 3; ++i) {
    const auto f = fields(l[i]);
    CHECK(std::stod(f[1]) < 0.0);
    CHECK(f[2] == "nan");
    CHECK(f[6] == "false");
  }
}

TEST_CASE("run: chi = 0 gives zero interaction and exit 0") {
  const fs::path config = write_file(
      "zero_chi.json", two_voxel_config(R"({"type": "zero"})", kFiniteT, kSweep));
  const fs::path out = scratch_dir() / "zero_chi.csv";
  REQUIRE(run_binary("run --config " + config.string() + " --output " + out.string()) == 0);
  const auto l = lines(read_file(out));
  REQUIRE(l.size() == 4);
  for (int i = 1; i <= 3; ++i) {
    const auto f = fields(l[i]);
    CHECK(f[1] == "0");
    CHECK(f[2] == "0");
    CHECK(f[3] == "0");
    CHECK(f[6] == "true");
  }
}

TEST_CASE("run: tiny n_max leaves rows flagged and exits 2") {
  const fs::path config = write_file(
      "tiny.json",
      two_voxel_config(kConstant,
                       R"(  "mode": "finite-T", "temperature": 0.05, "matsubara": {"n_max": 2, "tail_tol": 1e-12})",
                       kSweep));
  const fs::path out = scratch_dir() / "tiny.csv";
  CHECK(run_binary("run --config " + config.string() + " --output " + out.string()) == 2);
  const auto l = lines(read_file(out));
  REQUIRE(l.size() == 4);
  for (int i = 1; i <= 3; ++i) {
    const auto f = fields(l[i]);
    CHECK(f[6] == "false");
    CHECK(f[4] == "3");
  }
}

TEST_CASE("run: parse errors exit 1 with a located diagnostic") {
  const fs::path config = write_file("broken.json", "{\n  \"kernel\": [\n");
  CHECK(run_binary("run --config " + config.string() + " --output " +
                (scratch_dir() / "broken.csv").string()) == 1);
  CHECK(last_stderr().find("line") != std::string::npos);
  CHECK(run_binary("run --config " + (scratch_dir() / "absent.json").string() + " --output x.csv") ==
        1);
  CHECK(run_binary("run") == 1);
  CHECK(run_binary("frobnicate") == 1);
}

TEST_CASE("run: output is byte-identical across worker counts") {
  const fs::path config = write_file(
      "threads.json",
      two_voxel_config(kLorentz,
                       R"(  "mode": "finite-T", "temperature": 0.1, "matsubara": {"n_max": 200000, "tail_tol": 1e-9})",
                       kSweep));
  const fs::path one = scratch_dir() / "t1.csv";
  const fs::path four = scratch_dir() / "t4.csv";
  const fs::path env = scratch_dir() / "tenv.csv";
  REQUIRE(run_binary("run --config " + config.string() + " --output " + one.string() +
                  " --threads 1") == 0);
  REQUIRE(run_binary("run --config " + config.string() + " --output " + four.string() +
                  " --threads 4") == 0);
  REQUIRE(shell("FLUCTUA_THREADS=3 " + std::string(FLUCTUA_BINARY) + " run --config " +
                config.string() + " --output " + env.string()) == 0);
  CHECK(read_file(one) == read_file(four));
  CHECK(read_file(one) == read_file(env));
}

TEST_CASE("threads resolve from flag, then environment, then 1") {
  ::unsetenv("FLUCTUA_THREADS");
  CHECK(cli::resolve_threads(std::nullopt) == 1);
  ::setenv("FLUCTUA_THREADS", "6", 1);
  CHECK(cli::resolve_threads(std::nullopt) == 6);
  CHECK(cli::resolve_threads(2u) == 2);
  ::unsetenv("FLUCTUA_THREADS");
}

TEST_CASE("oracle subcommand exit codes") {
  const fs::path out = scratch_dir() / "oracle.csv";
  CHECK(run_binary("oracle --seed 42 --instances 10 --output " + out.string()) == 0);
  const auto l = lines(read_file(out));
  CHECK(l.size() == 11);
  CHECK(run_binary("oracle --seed 42 --instances 0 --output " + out.string()) == 1);
  CHECK(run_binary("oracle --seed 42 --instances 3 --inject-sign-fault 1 --output " +
                out.string()) == 3);
  CHECK(last_stderr().find(std::to_string(cli::instance_seed(42, 1))) != std::string::npos);
}

TEST_CASE("oracle instances are deterministic per seed") {
  const auto a = cli::run_oracle_instance(42, 3, 6, false);
  const auto b = cli::run_oracle_instance(42, 3, 6, false);
  CHECK(a.seed == b.seed);
  CHECK(a.factorization_residual == b.factorization_residual);
  CHECK(a.force_equivalence_residual == b.force_equivalence_residual);
  CHECK(cli::instance_seed(42, 3) != cli::instance_seed(43, 3));
  CHECK(cli::instance_seed(42, 3) != cli::instance_seed(42, 4));
}

TEST_CASE("shipped example config parses and validates") {
  const cli::ScenarioConfig c =
      cli::load_config(fs::path(FLUCTUA_SOURCE_DIR) / "configs" / "two_spheres_sweep.json");
  CHECK(cli::validate_config(c).empty());
  CHECK(c.separations.size() == 4);
  CHECK(c.body1.voxels.size() == 8);
}
