#include "fluctua/coupling.hpp"

#include "fluctua/errors.hpp"
#include "fluctua/quadrature.hpp"

#include <boost/math/interpolators/pchip.hpp>

#include <array>
#include <cmath>
#include <istream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>

namespace fluctua {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kClampTolerance = 1e-10;

std::vector<double> decade_breaks(double lo_exp, double hi_exp, int per_decade) {
  std::vector<double> out;
  for (int i = static_cast<int>(lo_exp * per_decade);
       i <= static_cast<int>(hi_exp * per_decade); ++i) {
    out.push_back(std::pow(10.0, static_cast<double>(i) / per_decade));
  }
  return out;
}

Tensor3 sqrt_from_eigen(const Tensor3& t, bool project) {
  const Tensor3 sym = 0.5 * (t + t.transpose());
  Eigen::SelfAdjointEigenSolver<Tensor3> es(sym);
  Eigen::Vector3d lambda = es.eigenvalues();
  const double norm = lambda.cwiseAbs().maxCoeff();
  if (norm == 0.0) return Tensor3::Zero();
  for (int i = 0; i < 3; ++i) {
    if (lambda[i] < 0.0) {
      if (!project && lambda[i] < -kClampTolerance * norm) {
        throw ModelError("tensor is not positive semidefinite (eigenvalue " +
                         std::to_string(lambda[i]) + ")");
      }
      lambda[i] = 0.0;
    }
  }
  const auto& v = es.eigenvectors();
  const Tensor3 root = v * lambda.cwiseSqrt().asDiagonal() * v.transpose();
  return 0.5 * (root + root.transpose());
}

// Monotone cubic interpolation of the six independent Im chi entries in
// log(nu). Shared so CouplingSpectrum copies stay cheap.
class TabulatedSpectrum {
 public:
  explicit TabulatedSpectrum(const TabulatedSusceptibility& table)
      : nu_first_(table.nu.front()),
        nu_last_(table.nu.back()),
        first_(table.im_chi.front()) {
    static constexpr std::array<std::pair<int, int>, 6> kEntries = {
        {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}}};
    for (std::size_t c = 0; c < kEntries.size(); ++c) {
      std::vector<double> u(table.nu.size());
      std::vector<double> y(table.nu.size());
      for (std::size_t k = 0; k < table.nu.size(); ++k) {
        u[k] = std::log(table.nu[k]);
        y[k] = table.im_chi[k](kEntries[c].first, kEntries[c].second);
      }
      entries_.emplace_back(std::move(u), std::move(y));
    }
  }

  Tensor3 imchi(double nu) const {
    if (!(nu > 0.0) || nu > nu_last_) return Tensor3::Zero();
    if (nu < nu_first_) return first_ * (nu / nu_first_);
    const double u = std::log(nu);
    Tensor3 out;
    out(0, 0) = entries_[0](u);
    out(0, 1) = out(1, 0) = entries_[1](u);
    out(0, 2) = out(2, 0) = entries_[2](u);
    out(1, 1) = entries_[3](u);
    out(1, 2) = out(2, 1) = entries_[4](u);
    out(2, 2) = entries_[5](u);
    return out;
  }

 private:
  using Interp = boost::math::interpolators::pchip<std::vector<double>>;
  double nu_first_;
  double nu_last_;
  Tensor3 first_;
  std::vector<Interp> entries_;
};

Tensor3 mode_sum_chi(const ModeSumSusceptibility& m, double omega) {
  Tensor3 out = Tensor3::Zero();
  for (std::size_t k = 0; k < m.nu.size(); ++k) {
    out += m.strength[k] * mode_propagator(m.nu[k], omega);
  }
  return out;
}

}  // namespace

void SpectralQuadrature::validate() const {
  if (!(rel_tol > 0.0 && rel_tol <= 1e-2)) {
    throw ConfigError("quadrature rel_tol must lie in (0, 1e-2]");
  }
  if (!(nu_max > 0.0)) throw ConfigError("quadrature nu_max must be positive");
  if (max_intervals < 1) throw ConfigError("quadrature needs max_intervals >= 1");
}

double mode_propagator(double nu, double omega) {
  const double denom = omega * omega + nu * nu;
  if (!(denom > 0.0)) {
    throw ConfigError("mode propagator is singular at nu = omega = 0");
  }
  return 1.0 / denom;
}

Tensor3 psd_sqrt(const Tensor3& t) { return sqrt_from_eigen(t, false); }

Tensor3 coupling_from_imchi(const Tensor3& imchi, double nu) {
  if (!(nu > 0.0)) throw ConfigError("coupling_from_imchi needs nu > 0");
  return psd_sqrt((2.0 * nu / kPi) * imchi);
}

Tensor3 chi_from_coupling(const CouplingSpectrum& g, double omega,
                          const SpectralQuadrature& quad) {
  quad.validate();
  if (!(omega >= 0.0)) throw ConfigError("chi needs omega >= 0");

  std::vector<double> breaks = quad.rule == QuadratureRule::FixedLogGrid
                                   ? decade_breaks(-6.0, 6.0, 20)
                                   : decade_breaks(-4.0, 4.0, 1);
  breaks.insert(breaks.end(), quad.breakpoints.begin(), quad.breakpoints.end());
  if (omega > 0.0) breaks.push_back(omega);
  const auto panels = quadrature::panels_between(0.0, quad.nu_max, breaks);

  const auto integrand = [&](double nu) -> Tensor3 {
    const Tensor3 gv = g(nu);
    return gv * gv * mode_propagator(nu, omega);
  };
  quadrature::Budget budget;
  budget.rel_tol = quad.rel_tol;
  budget.max_intervals = quad.max_intervals;
  budget.adaptive = quad.rule == QuadratureRule::Adaptive;
  const auto norm = [](const Tensor3& t) { return t.cwiseAbs().maxCoeff(); };
  const auto result = quadrature::integrate(integrand, panels,
                                            Tensor3::Zero().eval(), norm, budget);
  if (!result.converged) {
    const double scale = std::max(norm(result.value), 1e-300);
    throw NumericError("spectral quadrature did not converge within budget",
                       result.error / scale);
  }
  return 0.5 * (result.value + result.value.transpose());
}

Tensor3 lorentz_imchi(const LorentzSusceptibility& m, double nu) {
  const double detuning = m.resonance * m.resonance - nu * nu;
  const double denom = detuning * detuning + m.damping * m.damping * nu * nu;
  if (!(denom > 0.0)) return Tensor3::Zero();
  return (m.plasma_sq * m.damping * nu / denom) * m.orientation;
}

CouplingSpectrum coupling_spectrum(const SusceptibilityModel& model) {
  if (const auto* lorentz = std::get_if<LorentzSusceptibility>(&model)) {
    if (!(lorentz->damping > 0.0)) {
      throw ModelError("undamped Lorentz line has no continuous spectrum");
    }
    const LorentzSusceptibility m = *lorentz;
    return [m](double nu) -> Tensor3 {
      if (!(nu > 0.0)) return Tensor3::Zero();
      return coupling_from_imchi(lorentz_imchi(m, nu), nu);
    };
  }
  if (const auto* table = std::get_if<TabulatedSusceptibility>(&model)) {
    auto spectrum = std::make_shared<const TabulatedSpectrum>(*table);
    return [spectrum](double nu) -> Tensor3 {
      if (!(nu > 0.0)) return Tensor3::Zero();
      // Interpolation may leave roundoff-level negative eigenvalues.
      return sqrt_from_eigen((2.0 * nu / kPi) * spectrum->imchi(nu), true);
    };
  }
  throw ModelError("model has no continuous coupling spectrum");
}

SpectralQuadrature default_quadrature(const SusceptibilityModel& model) {
  SpectralQuadrature quad;
  if (const auto* m = std::get_if<LorentzSusceptibility>(&model)) {
    for (double k : {-5.0, -1.0, 0.0, 1.0, 5.0}) {
      const double b = m->resonance + k * m->damping;
      if (b > 0.0) quad.breakpoints.push_back(b);
    }
  } else if (const auto* t = std::get_if<TabulatedSusceptibility>(&model)) {
    if (!t->nu.empty()) {
      quad.nu_max = t->nu.back();
      quad.breakpoints.push_back(t->nu.front());
    }
  }
  return quad;
}

Tensor3 chi_at(const SusceptibilityModel& model, double omega,
               const SpectralQuadrature& quad) {
  if (!(omega >= 0.0)) throw ConfigError("chi needs omega >= 0");
  return std::visit(
      [&](const auto& m) -> Tensor3 {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ConstantSusceptibility>) {
          return m.alpha;
        } else if constexpr (std::is_same_v<T, LorentzSusceptibility>) {
          const double denom = m.resonance * m.resonance + omega * omega +
                               m.damping * omega;
          if (m.plasma_sq == 0.0) return Tensor3::Zero();
          if (!(denom > 0.0)) {
            throw ModelError("free-carrier susceptibility diverges at omega = 0");
          }
          return (m.plasma_sq / denom) * m.orientation;
        } else if constexpr (std::is_same_v<T, TabulatedSusceptibility>) {
          return chi_from_coupling(coupling_spectrum(model), omega, quad);
        } else {
          return mode_sum_chi(m, omega);
        }
      },
      model);
}

Tensor3 chi_at(const SusceptibilityModel& model, double omega) {
  return chi_at(model, omega, default_quadrature(model));
}

TabulatedSusceptibility tabulate(const LorentzSusceptibility& model,
                                 const std::vector<double>& nu) {
  TabulatedSusceptibility out;
  out.nu = nu;
  out.im_chi.reserve(nu.size());
  for (double v : nu) out.im_chi.push_back(lorentz_imchi(model, v));
  return out;
}

TabulatedSusceptibility read_imchi_csv(std::istream& in) {
  TabulatedSusceptibility out;
  std::string line;
  int line_no = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (columns == 0) {
      columns = cells.size();
      if (columns != 7 && columns != 10) {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": expected 7 or 10 columns (nu + 6 or 9 entries)");
      }
      if (!cells.empty() && cells[0].find("nu") != std::string::npos) continue;
    }
    if (cells.size() != columns) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(columns) + " columns");
    }
    std::vector<double> v;
    for (const auto& c : cells) {
      std::size_t used = 0;
      try {
        v.push_back(std::stod(c, &used));
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || c.find_first_not_of(" \t\r", used) != std::string::npos) {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": not a number: '" + c + "'");
      }
    }
    Tensor3 t;
    if (columns == 7) {
      t << v[1], v[2], v[3], v[2], v[4], v[5], v[3], v[5], v[6];
    } else {
      t << v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9];
      const double scale = std::max(t.cwiseAbs().maxCoeff(), 1e-300);
      if ((t - t.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": Im chi tensor is not symmetric");
      }
      t = 0.5 * (t + t.transpose()).eval();
    }
    out.nu.push_back(v[0]);
    out.im_chi.push_back(t);
  }
  if (out.nu.empty()) throw ConfigError("Im chi table is empty");
  return out;
}

ModeSumSusceptibility discretize_spectrum(const CouplingSpectrum& g,
                                          double nu_lo, double nu_hi,
                                          int n_modes) {
  if (!(nu_lo > 0.0 && nu_hi > nu_lo) || n_modes < 1) {
    throw ConfigError("spectrum discretization needs 0 < nu_lo < nu_hi and "
                      "n_modes >= 1");
  }
  const double du = std::log(nu_hi / nu_lo) / n_modes;
  ModeSumSusceptibility out;
  for (int k = 0; k < n_modes; ++k) {
    const double nu = nu_lo * std::exp((k + 0.5) * du);
    const Tensor3 gv = g(nu);
    out.nu.push_back(nu);
    out.strength.push_back(gv * gv * (nu * du));
  }
  return out;
}

}  // namespace fluctua
