#include "fluctua/oracle.hpp"

#include "fluctua/coupling.hpp"
#include "fluctua/errors.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/float128.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

namespace fluctua {

namespace {

using Eigen::MatrixXd;

int body_index(BodyLabel label) { return label == BodyLabel::A1 ? 0 : 1; }

double frequency(const LatticeModel& lat, int n) {
  return 2.0 * std::numbers::pi * n * lat.temperature;
}

void require_valid(const LatticeModel& lat) {
  const auto problems = lat.validate();
  if (problems.empty()) return;
  std::string msg = "invalid lattice:";
  for (const auto& p : problems) msg += " [" + p + "]";
  throw ConfigError(msg);
}

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
using Quad = boost::multiprecision::float128;

template <class S>
S general_logdet(const Mat<S>& m, const char* what) {
  using std::abs;
  using std::log;
  Eigen::PartialPivLU<Mat<S>> lu(m);
  const Mat<S>& packed = lu.matrixLU();
  double sign = lu.permutationP().determinant();
  S value = 0;
  S smallest = std::numeric_limits<S>::infinity();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const S u = packed(i, i);
    if (abs(u) < smallest) smallest = abs(u);
    if (u < 0) sign = -sign;
    value += log(abs(u));
  }
  if (!(smallest > 0) || sign < 0.0) {
    throw SingularError(std::string(what) + ": singular or negative determinant",
                        static_cast<double>(smallest));
  }
  return value;
}

template <class S>
S spd_logdet(const Mat<S>& m, const char* what) {
  using std::log;
  Eigen::LLT<Mat<S>> llt(m);
  if (llt.info() != Eigen::Success) {
    throw SingularError(std::string(what) + ": not positive definite", 0.0);
  }
  S sum = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) sum += log(llt.matrixLLT()(i, i));
  return 2 * sum;
}

template <class S>
S frequency_t(const LatticeModel& lat, int n) {
  return 2 * boost::math::constants::pi<S>() * n * S(lat.temperature);
}

template <class S>
Mat<S> operator_t(const LatticeModel& lat, S omega) {
  const int n = lat.n_x;
  const S a = lat.spacing;
  const S inv_a2 = 1 / (a * a);
  const S mass = lat.mass;
  Mat<S> op = Mat<S>::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    op(i, i) = omega * omega + mass * mass + 2 * inv_a2;
    if (i + 1 < n) {
      op(i, i + 1) -= inv_a2;
      op(i + 1, i) -= inv_a2;
    }
  }
  if (lat.boundary == Boundary::Periodic) {
    op(0, n - 1) -= inv_a2;
    op(n - 1, 0) -= inv_a2;
  }
  return op;
}

template <class S>
Mat<S> green_t(const LatticeModel& lat, S omega) {
  Eigen::LLT<Mat<S>> llt(operator_t<S>(lat, omega));
  if (llt.info() != Eigen::Success) {
    throw SingularError("lattice operator is not positive definite", 0.0);
  }
  return llt.solve(Mat<S>::Identity(lat.n_x, lat.n_x));
}

MatrixXd lattice_green(const LatticeModel& lat, double omega) {
  return green_t<double>(lat, omega);
}

template <class S>
S chi_t(const LatticeModel& lat, BodyLabel body, S omega) {
  const auto& g = lat.couplings[body_index(body)];
  S sum = 0;
  for (std::size_t k = 0; k < lat.nu.size(); ++k) {
    const S gk = g[k];
    const S nk = lat.nu[k];
    sum += gk * gk / (omega * omega + nk * nk);
  }
  return sum;
}

template <class S>
Mat<S> form_t(const LatticeModel& lat, int n) {
  const S beta = 1 / S(lat.temperature);
  const S omega = frequency_t<S>(lat, n);
  const int modes = lat.n_modes();
  const int size = lat.n_x + lat.matter_dof();
  Mat<S> q = Mat<S>::Zero(size, size);
  q.topLeftCorner(lat.n_x, lat.n_x) = beta * operator_t<S>(lat, omega);
  for (std::size_t s = 0; s < lat.matter_sites.size(); ++s) {
    const auto& site = lat.matter_sites[s];
    const auto& g = lat.couplings[body_index(site.body)];
    for (int k = 0; k < modes; ++k) {
      const int row = lat.n_x + static_cast<int>(s) * modes + k;
      const S nk = lat.nu[k];
      q(row, row) = beta * (omega * omega + nk * nk);
      const S c = beta * omega * S(g[k]);
      q(site.index, row) = -c;
      q(row, site.index) = c;
    }
  }
  return q;
}

template <class S>
S eff_logdet_t(const LatticeModel& lat, S omega) {
  Mat<S> chi = Mat<S>::Zero(lat.n_x, lat.n_x);
  for (const auto& site : lat.matter_sites) {
    chi(site.index, site.index) = chi_t<S>(lat, site.body, omega);
  }
  const Mat<S> m = Mat<S>::Identity(lat.n_x, lat.n_x) +
                   omega * omega * green_t<S>(lat, omega) * chi;
  return general_logdet<S>(m, "effective mode matrix");
}

struct WideTotals {
  Quad f_star = 0;
  Quad f_eff = 0;
};

// F* and F_eff accumulated in quad precision. Shifting a body changes them by
// amounts far below double resolution of the matter self energy.
WideTotals wide_totals(const LatticeModel& lat, const MatsubaraGrid& grid,
                       const OracleFaults& faults) {
  WideTotals out;
  const Quad beta = 1 / Quad(lat.temperature);
  for (int n = 0; n <= grid.n_max(); ++n) {
    const Quad omega = frequency_t<Quad>(lat, n);
    const Quad w = Quad(grid.weight(n)) * Quad(lat.temperature);
    const Quad full = general_logdet<Quad>(form_t<Quad>(lat, n), "full quadratic form");
    const Quad field =
        spd_logdet<Quad>(Mat<Quad>(beta * operator_t<Quad>(lat, omega)), "field block");
    Quad eff = n > 0 ? eff_logdet_t<Quad>(lat, omega) : Quad(0);
    if (faults.flip_eff_sign) eff = -eff;
    out.f_star += w * (full - field);
    out.f_eff += w * eff;
  }
  return out;
}

}  // namespace

std::vector<std::string> LatticeModel::validate() const {
  std::vector<std::string> out;
  if (n_x < 3) out.push_back("n_x must be >= 3");
  if (!(spacing > 0.0)) out.push_back("spacing must be positive");
  if (!(mass >= 0.0)) out.push_back("mass must be >= 0");
  if (boundary == Boundary::Periodic && mass == 0.0) {
    out.push_back("periodic massless lattice has a zero mode");
  }
  if (!(temperature > 0.0)) out.push_back("temperature must be positive");
  if (nu.size() != dnu.size()) out.push_back("nu and dnu sizes differ");
  for (double v : nu) {
    if (!(v > 0.0)) {
      out.push_back("matter frequencies must be > 0");
      break;
    }
  }
  for (const auto& g : couplings) {
    if (g.size() != nu.size()) out.push_back("coupling count differs from nu grid");
  }
  std::vector<int> seen;
  for (const auto& s : matter_sites) {
    const int lo = boundary == Boundary::Dirichlet ? 1 : 0;
    const int hi = boundary == Boundary::Dirichlet ? n_x - 2 : n_x - 1;
    if (s.index < lo || s.index > hi) {
      out.push_back("matter site " + std::to_string(s.index) + " out of bounds");
    }
    if (std::find(seen.begin(), seen.end(), s.index) != seen.end()) {
      out.push_back("matter site " + std::to_string(s.index) + " used twice");
    }
    seen.push_back(s.index);
  }
  return out;
}

LatticeModel LatticeModel::shifted_body2(int shift) const {
  LatticeModel out = *this;
  for (auto& s : out.matter_sites) {
    if (s.body == BodyLabel::A2) s.index += shift;
  }
  return out;
}

double LatticeModel::chi(BodyLabel body, double omega) const {
  const auto& g = couplings[body_index(body)];
  double sum = 0.0;
  for (std::size_t k = 0; k < nu.size(); ++k) {
    sum += g[k] * g[k] / (omega * omega + nu[k] * nu[k]);
  }
  return sum;
}

MatrixXd lattice_operator(const LatticeModel& lat, double omega) {
  return operator_t<double>(lat, omega);
}

MatrixXd build_quadratic_form(const LatticeModel& lat, int n) {
  require_valid(lat);
  if (n < 0) throw ConfigError("Matsubara index must be >= 0");
  return form_t<double>(lat, n);
}

ModeReport factorization_check(const LatticeModel& lat, int n,
                               const OracleFaults& faults) {
  const MatrixXd form = build_quadratic_form(lat, n);
  const double beta = 1.0 / lat.temperature;
  const double omega = frequency(lat, n);
  ModeReport row;
  row.n = n;
  row.omega = omega;
  row.logdet_full = general_logdet<double>(form, "full quadratic form");
  row.logdet_field =
      spd_logdet<double>(MatrixXd(beta * lattice_operator(lat, omega)), "field block");
  for (std::size_t s = 0; s < lat.matter_sites.size(); ++s) {
    for (double v : lat.nu) row.logdet_matter += std::log(beta * (omega * omega + v * v));
  }
  if (omega > 0.0) {
    Eigen::VectorXd chi = Eigen::VectorXd::Zero(lat.n_x);
    for (const auto& site : lat.matter_sites) chi[site.index] = lat.chi(site.body, omega);
    const MatrixXd m = MatrixXd::Identity(lat.n_x, lat.n_x) +
                       omega * omega * lattice_green(lat, omega) * chi.asDiagonal();
    row.logdet_eff = general_logdet<double>(m, "effective mode matrix");
  }
  if (faults.flip_eff_sign) row.logdet_eff = -row.logdet_eff;
  const double split = row.logdet_field + row.logdet_matter + row.logdet_eff;
  row.residual = std::abs(row.logdet_full - split) /
                 std::max(std::abs(row.logdet_full), 1e-300);
  return row;
}

OracleReport mean_force_check(const LatticeModel& lat, const MatsubaraGrid& grid,
                              const OracleFaults& faults) {
  if (std::abs(grid.temperature() - lat.temperature) >
      1e-14 * lat.temperature) {
    throw ConfigError("grid temperature differs from lattice temperature");
  }
  OracleReport report;
  for (int n = 0; n <= grid.n_max(); ++n) {
    const ModeReport row = factorization_check(lat, n, faults);
    const double w = grid.weight(n) * grid.temperature();
    report.f_star += w * (row.logdet_full - row.logdet_field);
    report.f_m += w * row.logdet_matter;
    report.f_eff += w * row.logdet_eff;
    report.factorization_residual = std::max(report.factorization_residual, row.residual);
    report.modes.push_back(row);
  }
  report.mean_force_residual =
      std::abs(report.f_star - (report.f_eff + report.f_m)) /
      std::max(std::abs(report.f_star), 1e-300);
  return report;
}

ForceEquivalence force_equivalence_check(const LatticeModel& lat,
                                         const MatsubaraGrid& grid, int shift,
                                         const OracleFaults& faults) {
  const LatticeModel moved = lat.shifted_body2(shift);
  require_valid(moved);
  if (std::abs(grid.temperature() - lat.temperature) >
      1e-14 * lat.temperature) {
    throw ConfigError("grid temperature differs from lattice temperature");
  }
  const WideTotals before = wide_totals(lat, grid, faults);
  const WideTotals after = wide_totals(moved, grid, faults);
  const Quad d_star = after.f_star - before.f_star;
  const Quad d_eff = after.f_eff - before.f_eff;
  ForceEquivalence out;
  out.delta_f_star = static_cast<double>(d_star);
  out.delta_f_eff = static_cast<double>(d_eff);
  const Quad floor = 1e-300;
  const Quad scale = abs(d_star) > floor ? abs(d_star) : floor;
  out.residual = static_cast<double>(abs(d_star - d_eff) / scale);
  return out;
}

LatticeKernel::LatticeKernel(int n_x, double spacing, Boundary boundary,
                             double mass) {
  shape_.n_x = n_x;
  shape_.spacing = spacing;
  shape_.boundary = boundary;
  shape_.mass = mass;
}

MatrixXd LatticeKernel::site_matrix(std::span<const Voxel> sites,
                                    double omega) const {
  const MatrixXd green = lattice_green(shape_, omega);
  const auto n = static_cast<Eigen::Index>(sites.size());
  std::vector<int> idx(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    idx[i] = static_cast<int>(std::lround(sites[i].center.x() / shape_.spacing));
    if (idx[i] < 0 || idx[i] >= shape_.n_x) {
      throw ConfigError("voxel lies outside the lattice");
    }
  }
  MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out(i, j) = green(idx[i], idx[j]) / shape_.spacing;
    }
  }
  return out;
}

LatticeScene lattice_equivalent_scene(const LatticeModel& lat) {
  require_valid(lat);
  LatticeScene out;
  out.scene.kernel = {1, lat.mass, 1};
  out.scene.temperature = lat.temperature;
  out.scene.body1.label = BodyLabel::A1;
  out.scene.body2.label = BodyLabel::A2;
  for (int b = 0; b < 2; ++b) {
    ModeSumSusceptibility chi;
    chi.nu = lat.nu;
    for (double g : lat.couplings[b]) chi.strength.push_back(g * g * Tensor3::Identity());
    Body& body = b == 0 ? out.scene.body1 : out.scene.body2;
    body.susceptibility = chi;
  }
  for (const auto& site : lat.matter_sites) {
    Body& body = site.body == BodyLabel::A1 ? out.scene.body1 : out.scene.body2;
    body.voxels.push_back({Vec3(site.index * lat.spacing, 0.0, 0.0), lat.spacing});
  }
  out.kernel = std::make_shared<LatticeKernel>(lat.n_x, lat.spacing, lat.boundary,
                                               lat.mass);
  return out;
}

LatticeModel lattice_from_spectra(int n_x, double spacing, Boundary boundary,
                                  double mass, const std::vector<MatterSite>& sites,
                                  const CouplingSpectrum& g1,
                                  const CouplingSpectrum& g2, double nu_lo,
                                  double nu_hi, int n_modes, double temperature) {
  LatticeModel lat;
  lat.n_x = n_x;
  lat.spacing = spacing;
  lat.boundary = boundary;
  lat.mass = mass;
  lat.matter_sites = sites;
  lat.temperature = temperature;
  const auto d1 = discretize_spectrum(g1, nu_lo, nu_hi, n_modes);
  const auto d2 = discretize_spectrum(g2, nu_lo, nu_hi, n_modes);
  const double du = std::log(nu_hi / nu_lo) / n_modes;
  lat.nu = d1.nu;
  for (int k = 0; k < n_modes; ++k) {
    lat.dnu.push_back(d1.nu[k] * du);
    lat.couplings[0].push_back(std::sqrt(d1.strength[k](0, 0)));
    lat.couplings[1].push_back(std::sqrt(d2.strength[k](0, 0)));
  }
  return lat;
}

LatticeModel random_lattice(std::mt19937_64& rng) {
  auto uniform_int = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  LatticeModel lat;
  lat.n_x = uniform_int(8, 64);
  lat.spacing = uniform(0.5, 2.0);
  lat.boundary = uniform_int(0, 1) == 0 ? Boundary::Dirichlet : Boundary::Periodic;
  lat.mass = uniform(0.1, 1.0);
  lat.temperature = std::exp(uniform(std::log(0.02), std::log(0.2)));
  const int modes = uniform_int(1, 8);
  for (int k = 0; k < modes; ++k) lat.nu.push_back(std::exp(uniform(std::log(0.1), std::log(10.0))));
  std::sort(lat.nu.begin(), lat.nu.end());
  for (double v : lat.nu) lat.dnu.push_back(0.3 * v);
  for (auto& g : lat.couplings) {
    for (int k = 0; k < modes; ++k) g.push_back(uniform(0.1, 1.5));
  }
  // Interior sites 1..n_x-2; leave one free site after body 2 for shifts.
  const int max_len = std::max(1, lat.n_x / 8);
  const int len1 = uniform_int(1, max_len);
  const int len2 = uniform_int(1, max_len);
  const int gap = uniform_int(1, 3);
  const int span = len1 + gap + len2 + 1;
  const int start = uniform_int(1, lat.n_x - 1 - span);
  for (int i = 0; i < len1; ++i) lat.matter_sites.push_back({start + i, BodyLabel::A1});
  for (int i = 0; i < len2; ++i) {
    lat.matter_sites.push_back({start + len1 + gap + i, BodyLabel::A2});
  }
  return lat;
}

void write_oracle_csv(std::ostream& out, const OracleReport& report) {
  out << "n,omega,logdet_full,logdet_field,logdet_matter,logdet_eff,residual\n";
  char buf[512];
  for (const auto& r : report.modes) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.n,
                  r.omega, r.logdet_full, r.logdet_field, r.logdet_matter,
                  r.logdet_eff, r.residual);
    out << buf;
  }
}

}  // namespace fluctua
