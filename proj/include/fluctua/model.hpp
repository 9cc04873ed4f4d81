#pragma once

// Domain types shared across the library.
//
// Units: hbar = k_B = c = 1 with one arbitrary length unit L. Frequencies
// and temperatures carry 1/L, free energies 1/L, voxel volumes L^3 (L in 1D).

#include <Eigen/Dense>

#include <string>
#include <variant>
#include <vector>

namespace fluctua {

using Vec3 = Eigen::Vector3d;
using Tensor3 = Eigen::Matrix3d;

/// Bosonic Matsubara frequencies 2*pi*n*T for n = 0..n_max with the primed
/// summation weights (half weight on n = 0).
class MatsubaraGrid {
 public:
  MatsubaraGrid(double temperature, int n_max);

  double temperature() const { return temperature_; }
  double beta() const { return beta_; }
  int n_max() const { return static_cast<int>(frequencies_.size()) - 1; }
  const std::vector<double>& frequencies() const { return frequencies_; }
  const std::vector<double>& weights() const { return weights_; }
  double frequency(int n) const { return frequencies_.at(n); }
  double weight(int n) const { return weights_.at(n); }

  /// Same temperature, fewer modes.
  MatsubaraGrid truncated(int n_max) const;

 private:
  double temperature_;
  double beta_;
  std::vector<double> frequencies_;
  std::vector<double> weights_;
};

MatsubaraGrid make_matsubara_grid(double temperature, int n_max);

// ---------------------------------------------------------------------------
// Susceptibility models. chi(i*omega) is evaluated in coupling.hpp.

/// Frequency-independent polarizability density.
struct ConstantSusceptibility {
  Tensor3 alpha = Tensor3::Zero();
};

/// Single damped oscillator: plasma_sq / (resonance^2 + omega^2 + damping*omega)
/// times an orientation tensor at imaginary frequency.
struct LorentzSusceptibility {
  double plasma_sq = 0.0;
  double resonance = 0.0;
  double damping = 0.0;
  Tensor3 orientation = Tensor3::Identity();
};

/// Im chi sampled on the real frequency axis. Samples must be sorted by nu,
/// strictly positive nu, each tensor symmetric PSD. The spectrum is taken to
/// vanish above the last sample and to fall linearly to zero below the first.
struct TabulatedSusceptibility {
  std::vector<double> nu;
  std::vector<Tensor3> im_chi;
};

/// Discrete bank of undamped lines: chi(i*omega) = sum_k strength_k /
/// (omega^2 + nu_k^2). This is the exact susceptibility of a finite set of
/// matter oscillators (a discretized coupling spectrum).
struct ModeSumSusceptibility {
  std::vector<double> nu;
  std::vector<Tensor3> strength;
};

using SusceptibilityModel =
    std::variant<ConstantSusceptibility, LorentzSusceptibility,
                 TabulatedSusceptibility, ModeSumSusceptibility>;

SusceptibilityModel isotropic_constant(double alpha);
SusceptibilityModel zero_susceptibility();

// ---------------------------------------------------------------------------

enum class BodyLabel { A1, A2 };

struct Voxel {
  Vec3 center = Vec3::Zero();
  double volume = 0.0;
};

struct Body {
  BodyLabel label = BodyLabel::A1;
  std::vector<Voxel> voxels;
  SusceptibilityModel susceptibility = ConstantSusceptibility{};

  Vec3 centroid() const;
  Body translated(const Vec3& shift) const;
};

struct FieldKernelSpec {
  int dimension = 3;  // 1 or 3
  double mass = 0.0;
  int n_internal = 1;  // 1 (scalar) or 3 (vector, internally diagonal)
};

struct Scene {
  FieldKernelSpec kernel;
  Body body1;
  Body body2;
  double temperature = 0.0;

  /// Voxels of body1 followed by voxels of body2.
  std::vector<Voxel> all_voxels() const;
  /// Rigidly translate body2.
  Scene with_body2_translated(const Vec3& shift) const;
  /// Swap the roles of the two bodies (labels follow the position).
  Scene relabeled() const;
  /// Scene with only one body present; the other is empty.
  Scene only(BodyLabel which) const;
};

struct Diagnostic {
  std::string field;
  std::string message;
};

/// One diagnostic per violated invariant; empty iff the scene is well formed.
std::vector<Diagnostic> validate_scene(const Scene& scene);

/// Voxel pairs across bodies closer than one voxel diameter. Advisory only.
std::vector<Diagnostic> proximity_warnings(const Scene& scene);

/// Box primitive voxelized by uniform subdivision, centers at cell centroids.
std::vector<Voxel> voxelize_box(const Vec3& lo, const Vec3& hi,
                                const Eigen::Vector3i& resolution);

/// Equal-volume sphere radius of a 3D voxel.
double equivalent_radius(double volume);

/// Largest |A - A^T| entry relative to |A|; zero for exactly symmetric input.
double asymmetry(const Tensor3& a);
/// Smallest eigenvalue of the symmetric part.
double min_eigenvalue(const Tensor3& a);

}  // namespace fluctua
