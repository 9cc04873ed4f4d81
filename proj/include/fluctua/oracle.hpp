#pragma once

// Finite lattice realization of the field + matter Gaussian model. Each
// Matsubara sector is an explicit quadratic form over a 1D field lattice and
// a bank of matter oscillators; its exact log-determinant checks the
// partition-function factorization Z = Z_F Z_m Z_eff and the mean-force
// statements independently of the engine.

#include "fluctua/engine.hpp"
#include "fluctua/model.hpp"

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace fluctua {

enum class Boundary { Dirichlet, Periodic };

struct MatterSite {
  int index = 0;
  BodyLabel body = BodyLabel::A1;
};

struct LatticeModel {
  int n_x = 0;
  double spacing = 1.0;
  Boundary boundary = Boundary::Dirichlet;
  double mass = 0.0;
  std::vector<MatterSite> matter_sites;
  std::vector<double> nu;   // matter mode frequencies, > 0
  std::vector<double> dnu;  // quadrature weights of the nu grid
  /// Per body, per mode: g_k = g(nu_k) sqrt(dnu_k).
  std::array<std::vector<double>, 2> couplings;
  double temperature = 1.0;

  /// Empty iff all invariants hold.
  std::vector<std::string> validate() const;
  int n_modes() const { return static_cast<int>(nu.size()); }
  int matter_dof() const {
    return static_cast<int>(matter_sites.size()) * n_modes();
  }
  /// Copy with every body-2 site moved by `shift` sites.
  LatticeModel shifted_body2(int shift) const;
  /// Lattice susceptibility sum_k g_k^2 / (omega^2 + nu_k^2) of one body.
  double chi(BodyLabel body, double omega) const;
};

/// omega^2 + m^2 + L with L the [-1, 2, -1]/a^2 Laplacian.
Eigen::MatrixXd lattice_operator(const LatticeModel& lat, double omega);

/// Real form of the n-th sector quadratic form, ordered [field | matter]:
///   field block   beta (omega_n^2 + m^2 + L)
///   matter block  beta (omega_n^2 + nu_k^2), diagonal
///   coupling      -beta omega_n g_k (field row), +beta omega_n g_k (matter
///                 row): the skew real equivalent of the complex-symmetric
///                 form with i beta omega_n g_k, same determinant.
Eigen::MatrixXd build_quadratic_form(const LatticeModel& lat, int n);

struct ModeReport {
  int n = 0;
  double omega = 0.0;
  double logdet_full = 0.0;
  double logdet_field = 0.0;
  double logdet_matter = 0.0;
  double logdet_eff = 0.0;
  double residual = 0.0;
};

struct OracleReport {
  std::vector<ModeReport> modes;
  double f_star = 0.0;  // -T ln(Z / Z_F)
  double f_m = 0.0;
  double f_eff = 0.0;
  double factorization_residual = 0.0;  // max over modes
  double mean_force_residual = 0.0;
};

/// Test hook: perturbations applied to an otherwise exact check.
struct OracleFaults {
  bool flip_eff_sign = false;
};

ModeReport factorization_check(const LatticeModel& lat, int n,
                               const OracleFaults& faults = {});
OracleReport mean_force_check(const LatticeModel& lat, const MatsubaraGrid& grid,
                              const OracleFaults& faults = {});

struct ForceEquivalence {
  double delta_f_star = 0.0;
  double delta_f_eff = 0.0;
  double residual = 0.0;
};
ForceEquivalence force_equivalence_check(const LatticeModel& lat,
                                         const MatsubaraGrid& grid, int shift,
                                         const OracleFaults& faults = {});

/// Restriction of the lattice Green's function (omega^2 + m^2 + L)^-1 / a to
/// the requested sites (x / a rounded to the site index).
class LatticeKernel final : public GreenKernel {
 public:
  LatticeKernel(int n_x, double spacing, Boundary boundary, double mass);
  Eigen::MatrixXd site_matrix(std::span<const Voxel> sites,
                              double omega) const override;

 private:
  LatticeModel shape_;
};

struct LatticeScene {
  Scene scene;
  std::shared_ptr<const GreenKernel> kernel;
};

/// The 1D engine scene whose mode matrices equal the lattice's effective
/// sector exactly: voxels of length a at the matter sites, mode-sum
/// susceptibilities, lattice Green's kernel.
LatticeScene lattice_equivalent_scene(const LatticeModel& lat);

/// Lattice whose bodies carry the midpoint-discretized coupling spectra of
/// two susceptibility models (scalar entry (0,0)).
LatticeModel lattice_from_spectra(int n_x, double spacing, Boundary boundary,
                                  double mass,
                                  const std::vector<MatterSite>& sites,
                                  const CouplingSpectrum& g1,
                                  const CouplingSpectrum& g2, double nu_lo,
                                  double nu_hi, int n_modes, double temperature);

/// Randomized instance for the oracle suites: 8-64 sites, 1-8 modes, two
/// contiguous bodies with a gap, random positive couplings.
LatticeModel random_lattice(std::mt19937_64& rng);

/// One row per mode: n, omega, four log-dets, residual (17 significant digits).
void write_oracle_csv(std::ostream& out, const OracleReport& report);

}  // namespace fluctua
