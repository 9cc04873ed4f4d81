#pragma once

// Microscopic coupling spectrum g(nu) <-> susceptibility chi(i omega).
//
//   g(nu) g(nu) = (2 nu / pi) Im chi(nu)
//   chi(i omega) = int_0^inf dnu g(nu) g(nu) / (omega^2 + nu^2)

#include "fluctua/model.hpp"

#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

namespace fluctua {

enum class QuadratureRule { Adaptive, FixedLogGrid };

struct SpectralQuadrature {
  QuadratureRule rule = QuadratureRule::Adaptive;
  double rel_tol = 1e-8;
  double nu_max = std::numeric_limits<double>::infinity();
  /// Extra panel boundaries (resonances, table ends). Decade boundaries
  /// 1e-4 .. 1e4 and the evaluation frequency are always added.
  std::vector<double> breakpoints;
  int max_intervals = 4000;

  void validate() const;
};

/// nu -> g(nu), a symmetric PSD 3x3 tensor.
using CouplingSpectrum = std::function<Tensor3(double nu)>;

/// 1 / (omega^2 + nu^2).
double mode_propagator(double nu, double omega);

/// Principal PSD square root of (2 nu / pi) * imchi.
Tensor3 coupling_from_imchi(const Tensor3& imchi, double nu);

/// Symmetric PSD square root by eigendecomposition, clamping eigenvalues in
/// [-1e-10 * norm, 0) to zero. Throws ModelError below that.
Tensor3 psd_sqrt(const Tensor3& t);

Tensor3 chi_from_coupling(const CouplingSpectrum& g, double omega,
                          const SpectralQuadrature& quad);

/// chi(i omega) for any model variant.
Tensor3 chi_at(const SusceptibilityModel& model, double omega);
Tensor3 chi_at(const SusceptibilityModel& model, double omega,
               const SpectralQuadrature& quad);

/// Real-axis Im chi of a damped Lorentz line (damping must be > 0).
Tensor3 lorentz_imchi(const LorentzSusceptibility& model, double nu);

/// Coupling spectrum underlying a Lorentz or tabulated model.
CouplingSpectrum coupling_spectrum(const SusceptibilityModel& model);

/// Quadrature settings tuned to a model (resonance breakpoints, table range).
SpectralQuadrature default_quadrature(const SusceptibilityModel& model);

/// Samples a Lorentz line onto `nu` to build a tabulated model.
TabulatedSusceptibility tabulate(const LorentzSusceptibility& model,
                                 const std::vector<double>& nu);

/// Reads CSV with header `nu,ImChi_11,...`: either 6 independent entries
/// (11,12,13,22,23,33) or all 9 row-major (symmetry checked to 1e-8).
TabulatedSusceptibility read_imchi_csv(std::istream& in);

/// Midpoint discretization of a coupling spectrum on a log-spaced grid of
/// n_modes cells spanning [nu_lo, nu_hi]: returns (nu_k, strength_k) with
/// strength_k = g(nu_k)^2 * dnu_k, i.e. a ModeSumSusceptibility.
ModeSumSusceptibility discretize_spectrum(const CouplingSpectrum& g,
                                          double nu_lo, double nu_hi,
                                          int n_modes);

}  // namespace fluctua
