#pragma once

// Trace-log free energy of two voxelized bodies coupled to a fluctuating
// field, per imaginary frequency and summed over Matsubara modes:
//
//   F_eff = T sum'_n ln det(1 + omega_n^2 X G0 W)
//
// X is block diagonal with chi(i omega_n) per voxel, G0 the free Green's
// matrix, W the diagonal voxel volumes (discretized position trace).

#include "fluctua/coupling.hpp"
#include "fluctua/kernel.hpp"
#include "fluctua/model.hpp"

#include <Eigen/Dense>

#include <memory>
#include <variant>
#include <vector>

namespace fluctua {

enum class InteractionMethod {
  Subtraction,  // ln det M - ln det M_1 - ln det M_2 per mode
  TwoBody,      // ln det(1 - M_22^-1 M_21 M_11^-1 M_12) per mode
};

struct EngineOptions {
  /// Defaults to FreeSpaceKernel(scene.kernel) when null.
  std::shared_ptr<const GreenKernel> kernel;
  unsigned threads = 1;
  InteractionMethod method = InteractionMethod::Subtraction;
};

struct ModeMatrix {
  Eigen::MatrixXd m;
  double omega = 0.0;
};

struct FreeEnergyResult {
  std::vector<double> mode_terms;
  double total = 0.0;
  int n_used = 0;
  double tail_estimate = 0.0;
  bool converged = false;
};

/// F_int together with the full-scene F_eff summed over the same modes.
struct InteractionResult {
  FreeEnergyResult interaction;
  FreeEnergyResult full;
};

struct ZeroTemperatureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  int evaluations = 0;
};

enum class EnergyPart { Full, Interaction };

struct ForceResult {
  double separation = 0.0;
  double step = 0.0;
  double energy_minus = 0.0;
  double energy_center = 0.0;
  double energy_plus = 0.0;
  double force = 0.0;
  /// Full-scene free energy at the center point, summed on its own.
  double full_center = 0.0;
  int full_n_used = 0;
  double full_tail_estimate = 0.0;
  bool full_converged = false;
  /// Interaction sum (or quadrature) behind the energies and the force.
  int n_used = 0;
  double tail_estimate = 0.0;
  bool converged = false;
};

struct MatsubaraMode {
  MatsubaraGrid grid;
  double tail_tol = 1e-12;
};
using TemperatureMode = std::variant<MatsubaraMode, SpectralQuadrature>;

/// Site-level X and W as used by the mode matrix, exposed for tests.
struct ModeFactors {
  Eigen::MatrixXd chi;      // block diagonal, (n_sites n_internal)^2
  Eigen::MatrixXd g0;       // expanded free Green's matrix
  Eigen::VectorXd weights;  // voxel volumes per row
};
ModeFactors mode_factors(const Scene& scene, double omega,
                         const EngineOptions& opts = {});

ModeMatrix build_mode_matrix(const Scene& scene, double omega,
                             const EngineOptions& opts = {});

/// ln det M via pivoted LU. Throws SingularError on det <= 0.
double mode_term(const ModeMatrix& mode);

/// Power-iteration estimate of the spectral radius of a square matrix.
double spectral_radius(const Eigen::MatrixXd& a, double tol = 1e-3);

/// sum_{m=1}^{m_max} (-1)^{m-1} tr[(M-1)^m] / m. Throws DivergentSeriesError
/// when the spectral radius of M - 1 is not below 1.
double mode_term_series(const ModeMatrix& mode, int m_max);

/// Euclidean dressed Green's function (1 + omega^2 G0 W X)^-1 G0.
Eigen::MatrixXd dressed_green(const Scene& scene, double omega,
                              const EngineOptions& opts = {});

FreeEnergyResult free_energy_eff(const Scene& scene, const MatsubaraGrid& grid,
                                 double tail_tol, const EngineOptions& opts = {});

InteractionResult interaction_free_energy(const Scene& scene,
                                          const MatsubaraGrid& grid,
                                          double tail_tol,
                                          const EngineOptions& opts = {});

/// Per-mode interaction term at one frequency (full minus both bodies).
double interaction_mode_term(const Scene& scene, double omega,
                             const EngineOptions& opts = {});

/// int_0^inf dzeta/(2 pi) of the per-mode term. Throws NumericError when the
/// integral does not converge (e.g. UV-divergent self energies).
ZeroTemperatureResult free_energy_zero_temperature(
    const Scene& scene, const SpectralQuadrature& quad,
    EnergyPart part = EnergyPart::Interaction, const EngineOptions& opts = {});

/// Centroid distance of the two bodies projected on `axis`.
double separation_along(const Scene& scene, const Vec3& axis);

/// -dF_int/ds by central difference, s the displacement of body2 along axis.
ForceResult induced_force(const Scene& scene, const Vec3& axis, double h,
                          const TemperatureMode& mode,
                          const EngineOptions& opts = {});

}  // namespace fluctua
