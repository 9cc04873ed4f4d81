#pragma once

// Free-space Green's function of the Euclidean field operator
// (kappa^2 - laplacian), kappa = sqrt(omega^2 + m^2), discretized on voxels.

#include "fluctua/model.hpp"

#include <Eigen/Dense>

#include <memory>
#include <span>

namespace fluctua {

double screening_constant(double omega, const FieldKernelSpec& spec);

/// Green's function between two distinct points. 3D: exp(-kappa r)/(4 pi r).
/// 1D: exp(-kappa |dx|)/(2 kappa), using only the x coordinates.
double g0_pair(const Vec3& a, const Vec3& b, double omega,
               const FieldKernelSpec& spec);

/// Volume average of the pair kernel over one voxel (equal-volume sphere in
/// 3D, the cell [0, a] in 1D). Regularizes the coincident-point singularity.
double g0_self(double volume, double omega, const FieldKernelSpec& spec);

/// Assembles site-level (voxel x voxel) Green's matrices. The engine expands
/// the internal index itself, so implementations only deal with scalars.
class GreenKernel {
 public:
  virtual ~GreenKernel() = default;
  virtual Eigen::MatrixXd site_matrix(std::span<const Voxel> sites,
                                      double omega) const = 0;
};

/// Free-space Yukawa kernel: g0_pair off the diagonal, g0_self on it.
class FreeSpaceKernel final : public GreenKernel {
 public:
  explicit FreeSpaceKernel(FieldKernelSpec spec) : spec_(spec) {}
  Eigen::MatrixXd site_matrix(std::span<const Voxel> sites,
                              double omega) const override;
  const FieldKernelSpec& spec() const { return spec_; }

 private:
  FieldKernelSpec spec_;
};

struct GzeroMatrix {
  int n_sites = 0;
  int n_internal = 1;
  double omega = 0.0;
  FieldKernelSpec spec;
  Eigen::MatrixXd entries;  // (n_sites * n_internal)^2
};

/// Kronecker expansion site_matrix (x) identity(n_internal); index order is
/// site-major, internal-minor.
Eigen::MatrixXd expand_internal(const Eigen::MatrixXd& site_matrix,
                                int n_internal);

GzeroMatrix build_g0(const Scene& scene, double omega);
GzeroMatrix build_g0(const Scene& scene, double omega, const GreenKernel& kernel);

}  // namespace fluctua
