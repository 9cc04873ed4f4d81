#pragma once

#include "fluctua/coupling.hpp"
#include "fluctua/engine.hpp"
#include "fluctua/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

namespace fluctua::test {

inline double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Tensor3 random_rotation(std::mt19937_64& rng) {
  Eigen::Quaterniond q(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1),
                       uniform(rng, -1, 1));
  q.normalize();
  return q.toRotationMatrix();
}

// R diag(lambda) R^T with eigenvalues in [lo, hi].
inline Tensor3 random_psd(std::mt19937_64& rng, double lo, double hi) {
  const Tensor3 r = random_rotation(rng);
  const Vec3 lambda(uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi));
  const Tensor3 a = r * lambda.asDiagonal() * r.transpose();
  return 0.5 * (a + a.transpose());
}

// Cubic block of voxels of edge `edge` whose corner cell sits at `origin`.
inline std::vector<Voxel> voxel_block(const Vec3& origin, int nx, int ny, int nz,
                                      double edge) {
  std::vector<Voxel> out;
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      for (int k = 0; k < nz; ++k) {
        out.push_back({origin + edge * Vec3(i, j, k), edge * edge * edge});
      }
    }
  }
  return out;
}

struct SceneShape {
  int n_internal = 1;
  double min_gap = 1.0;
  double chi_lo = 0.05;
  double chi_hi = 0.8;
};

// Two passive bodies on a regular voxel lattice, body2 displaced along +x.
inline Scene random_scene(std::mt19937_64& rng, const SceneShape& shape = {}) {
  Scene s;
  s.kernel = {3, uniform(rng, 0.0, 0.5), shape.n_internal};
  const double edge = uniform(rng, 0.4, 0.8);
  const int a = uniform_int(rng, 1, 2);
  const int b = uniform_int(rng, 1, 2);
  s.body1.label = BodyLabel::A1;
  s.body1.voxels = voxel_block(Vec3::Zero(), a, uniform_int(rng, 1, 2), 1, edge);
  const double gap = uniform(rng, shape.min_gap, shape.min_gap + 2.0);
  s.body2.label = BodyLabel::A2;
  s.body2.voxels = voxel_block(Vec3(a * edge + gap, uniform(rng, -0.5, 0.5), 0.0), b,
                               1, uniform_int(rng, 1, 2), edge);
  for (Body* body : {&s.body1, &s.body2}) {
    if (shape.n_internal == 1) {
      body->susceptibility = isotropic_constant(uniform(rng, shape.chi_lo, shape.chi_hi));
    } else {
      body->susceptibility = ConstantSusceptibility{random_psd(rng, shape.chi_lo, shape.chi_hi)};
    }
  }
  s.temperature = uniform(rng, 0.05, 0.5);
  return s;
}

// Two single-voxel bodies with constant scalar susceptibility.
inline Scene two_voxel_scene(double d, double chi1, double chi2, double volume = 1.0,
                             double mass = 0.0) {
  Scene s;
  s.kernel = {3, mass, 1};
  s.body1 = {BodyLabel::A1, {{Vec3::Zero(), volume}}, isotropic_constant(chi1)};
  s.body2 = {BodyLabel::A2, {{Vec3(d, 0.0, 0.0), volume}}, isotropic_constant(chi2)};
  s.temperature = 0.5;
  return s;
}

}  // namespace fluctua::test
