#include "fluctua/kernel.hpp"

#include "fluctua/errors.hpp"

#include <cmath>
#include <numbers>

namespace fluctua {

namespace {

constexpr double kPi = std::numbers::pi;

// 1 - exp(-x)(1 + x), accurate for small x.
double sphere_profile(double x) {
  if (x < 0.05) {
    // sum_{k>=2} (-1)^k (k-1) x^k / k!
    double term = x * x / 2.0;  // k = 2
    double sum = term;
    for (int k = 3; k < 14; ++k) {
      term *= -x / k;
      sum += term * (k - 1);
    }
    return sum;
  }
  return -std::expm1(-x) - x * std::exp(-x);
}

// x - (1 - exp(-x)), accurate for small x.
double cell_profile(double x) {
  if (x < 0.05) {
    // sum_{k>=2} (-1)^k x^k / k!
    double term = x * x / 2.0;
    double sum = term;
    for (int k = 3; k < 14; ++k) {
      term *= -x / k;
      sum += term;
    }
    return sum;
  }
  return x + std::expm1(-x);
}

}  // namespace

double screening_constant(double omega, const FieldKernelSpec& spec) {
  return std::sqrt(omega * omega + spec.mass * spec.mass);
}

double g0_pair(const Vec3& a, const Vec3& b, double omega,
               const FieldKernelSpec& spec) {
  const double kappa = screening_constant(omega, spec);
  if (spec.dimension == 1) {
    if (!(kappa > 0.0)) {
      throw ZeroModeError("1D massless kernel is singular at zero frequency");
    }
    return std::exp(-kappa * std::abs(a.x() - b.x())) / (2.0 * kappa);
  }
  const double r = (a - b).norm();
  if (!(r > 0.0)) throw ConfigError("g0_pair needs distinct points in 3D");
  return std::exp(-kappa * r) / (4.0 * kPi * r);
}

double g0_self(double volume, double omega, const FieldKernelSpec& spec) {
  if (!(volume > 0.0)) throw ConfigError("voxel volume must be positive");
  const double kappa = screening_constant(omega, spec);
  if (spec.dimension == 1) {
    if (!(kappa > 0.0)) {
      throw ZeroModeError("1D massless kernel is singular at zero frequency");
    }
    // Average of exp(-kappa|x-y|)/(2 kappa) over x, y in a cell of length a.
    const double a = volume;
    return cell_profile(kappa * a) / (kappa * kappa * kappa * a * a);
  }
  const double radius = equivalent_radius(volume);
  const double x = kappa * radius;
  if (x < 1e-8) return 3.0 / (8.0 * kPi * radius);
  return sphere_profile(x) / (kappa * kappa * volume);
}

Eigen::MatrixXd FreeSpaceKernel::site_matrix(std::span<const Voxel> sites,
                                             double omega) const {
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = g0_self(sites[i].volume, omega, spec_);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double value = g0_pair(sites[i].center, sites[j].center, omega, spec_);
      g(i, j) = value;
      g(j, i) = value;
    }
  }
  return g;
}

Eigen::MatrixXd expand_internal(const Eigen::MatrixXd& site_matrix,
                                int n_internal) {
  if (n_internal == 1) return site_matrix;
  const Eigen::Index n = site_matrix.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n * n_internal, n * n_internal);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      for (int c = 0; c < n_internal; ++c) {
        out(i * n_internal + c, j * n_internal + c) = site_matrix(i, j);
      }
    }
  }
  return out;
}

GzeroMatrix build_g0(const Scene& scene, double omega,
                     const GreenKernel& kernel) {
  const auto voxels = scene.all_voxels();
  GzeroMatrix out;
  out.n_sites = static_cast<int>(voxels.size());
  out.n_internal = scene.kernel.n_internal;
  out.omega = omega;
  out.spec = scene.kernel;
  out.entries = expand_internal(kernel.site_matrix(voxels, omega),
                                scene.kernel.n_internal);
  return out;
}

GzeroMatrix build_g0(const Scene& scene, double omega) {
  return build_g0(scene, omega, FreeSpaceKernel(scene.kernel));
}

}  // namespace fluctua
