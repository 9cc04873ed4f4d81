#include "fluctua/model.hpp"

#include "fluctua/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace fluctua {

MatsubaraGrid::MatsubaraGrid(double temperature, int n_max) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("Matsubara grid needs a positive finite temperature "
                      "(use the zero-temperature quadrature for T = 0)");
  }
  if (n_max < 1) throw ConfigError("Matsubara grid needs n_max >= 1");
  temperature_ = temperature;
  beta_ = 1.0 / temperature;
  frequencies_.resize(static_cast<std::size_t>(n_max) + 1);
  weights_.assign(frequencies_.size(), 1.0);
  const double step = 2.0 * std::numbers::pi * temperature;
  for (std::size_t n = 0; n < frequencies_.size(); ++n) {
    frequencies_[n] = step * static_cast<double>(n);
  }
  weights_[0] = 0.5;
}

MatsubaraGrid MatsubaraGrid::truncated(int n_max) const {
  return MatsubaraGrid(temperature_, n_max);
}

MatsubaraGrid make_matsubara_grid(double temperature, int n_max) {
  return MatsubaraGrid(temperature, n_max);
}

SusceptibilityModel isotropic_constant(double alpha) {
  return ConstantSusceptibility{alpha * Tensor3::Identity()};
}

SusceptibilityModel zero_susceptibility() { return ConstantSusceptibility{}; }

Vec3 Body::centroid() const {
  Vec3 sum = Vec3::Zero();
  double weight = 0.0;
  for (const auto& v : voxels) {
    sum += v.volume * v.center;
    weight += v.volume;
  }
  return weight > 0.0 ? Vec3(sum / weight) : Vec3::Zero();
}

Body Body::translated(const Vec3& shift) const {
  Body out = *this;
  for (auto& v : out.voxels) v.center += shift;
  return out;
}

std::vector<Voxel> Scene::all_voxels() const {
  std::vector<Voxel> out = body1.voxels;
  out.insert(out.end(), body2.voxels.begin(), body2.voxels.end());
  return out;
}

Scene Scene::with_body2_translated(const Vec3& shift) const {
  Scene out = *this;
  out.body2 = body2.translated(shift);
  return out;
}

Scene Scene::relabeled() const {
  Scene out = *this;
  out.body1 = body2;
  out.body2 = body1;
  out.body1.label = BodyLabel::A1;
  out.body2.label = BodyLabel::A2;
  return out;
}

Scene Scene::only(BodyLabel which) const {
  Scene out = *this;
  if (which == BodyLabel::A1) {
    out.body2.voxels.clear();
  } else {
    out.body1.voxels.clear();
  }
  return out;
}

double asymmetry(const Tensor3& a) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

double min_eigenvalue(const Tensor3& a) {
  const Tensor3 sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Tensor3> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double equivalent_radius(double volume) {
  return std::cbrt(3.0 * volume / (4.0 * std::numbers::pi));
}

std::vector<Voxel> voxelize_box(const Vec3& lo, const Vec3& hi,
                                const Eigen::Vector3i& resolution) {
  if ((resolution.array() < 1).any()) {
    throw ConfigError("box resolution must be >= 1 along every axis");
  }
  if (((hi - lo).array() < 0.0).any()) {
    throw ConfigError("box max corner must not lie below its min corner");
  }
  const Vec3 cell = (hi - lo).cwiseQuotient(resolution.cast<double>());
  // Degenerate (zero-extent) axes are used by 1D boxes; they contribute unit
  // length to the cell volume.
  double volume = 1.0;
  for (int k = 0; k < 3; ++k) volume *= cell[k] > 0.0 ? cell[k] : 1.0;

  std::vector<Voxel> out;
  out.reserve(static_cast<std::size_t>(resolution.prod()));
  for (int i = 0; i < resolution.x(); ++i) {
    for (int j = 0; j < resolution.y(); ++j) {
      for (int k = 0; k < resolution.z(); ++k) {
        const Vec3 idx(i + 0.5, j + 0.5, k + 0.5);
        out.push_back({lo + cell.cwiseProduct(idx), volume});
      }
    }
  }
  return out;
}

namespace {

constexpr double kPsdTolerance = 1e-10;
constexpr double kSymmetryTolerance = 1e-12;

bool is_scalar_identity(const Tensor3& t) {
  const double scale = std::max(t.cwiseAbs().maxCoeff(), 1e-300);
  return (t - t(0, 0) * Tensor3::Identity()).cwiseAbs().maxCoeff() <=
         kSymmetryTolerance * scale;
}

struct TensorChecker {
  std::vector<Diagnostic>& out;
  bool scalar_field;

  void operator()(const std::string& field, const Tensor3& t) const {
    if (!t.allFinite()) {
      out.push_back({field, "tensor has non-finite entries"});
      return;
    }
    if (asymmetry(t) > kSymmetryTolerance) {
      out.push_back({field, "tensor is not symmetric"});
    }
    const double norm = t.cwiseAbs().maxCoeff();
    if (min_eigenvalue(t) < -kPsdTolerance * std::max(norm, 1.0)) {
      out.push_back({field, "tensor is not positive semidefinite"});
    }
    if (scalar_field && !is_scalar_identity(t)) {
      out.push_back({field, "scalar field requires an isotropic tensor"});
    }
  }
};

void check_susceptibility(const std::string& prefix,
                          const SusceptibilityModel& model, bool scalar_field,
                          std::vector<Diagnostic>& out) {
  const TensorChecker check{out, scalar_field};
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ConstantSusceptibility>) {
          check(prefix + ".alpha", m.alpha);
        } else if constexpr (std::is_same_v<T, LorentzSusceptibility>) {
          if (!(m.plasma_sq >= 0.0)) {
            out.push_back({prefix + ".plasma_sq", "must be >= 0"});
          }
          if (!(m.resonance >= 0.0)) {
            out.push_back({prefix + ".resonance", "must be >= 0"});
          }
          if (!(m.damping >= 0.0)) {
            out.push_back({prefix + ".damping", "must be >= 0"});
          }
          if (m.resonance == 0.0 && m.damping == 0.0 && m.plasma_sq > 0.0) {
            out.push_back({prefix, "free-carrier line needs damping > 0"});
          }
          check(prefix + ".orientation", m.orientation);
        } else if constexpr (std::is_same_v<T, TabulatedSusceptibility>) {
          if (m.nu.size() != m.im_chi.size()) {
            out.push_back({prefix, "nu and im_chi sample counts differ"});
            return;
          }
          if (m.nu.size() < 4) {
            out.push_back({prefix, "tabulated spectrum needs >= 4 samples"});
          }
          for (std::size_t k = 0; k < m.nu.size(); ++k) {
            if (!(m.nu[k] > 0.0) || (k > 0 && !(m.nu[k] > m.nu[k - 1]))) {
              out.push_back({prefix + ".nu[" + std::to_string(k) + "]",
                             "must be positive and strictly increasing"});
            }
            check(prefix + ".im_chi[" + std::to_string(k) + "]", m.im_chi[k]);
          }
        } else {
          if (m.nu.size() != m.strength.size()) {
            out.push_back({prefix, "nu and strength counts differ"});
            return;
          }
          for (std::size_t k = 0; k < m.nu.size(); ++k) {
            if (!(m.nu[k] > 0.0)) {
              out.push_back({prefix + ".nu[" + std::to_string(k) + "]",
                             "must be positive"});
            }
            check(prefix + ".strength[" + std::to_string(k) + "]",
                  m.strength[k]);
          }
        }
      },
      model);
}

void check_body(const std::string& name, const Body& body,
                BodyLabel expected_label, const FieldKernelSpec& kernel,
                std::vector<Diagnostic>& out) {
  if (body.label != expected_label) {
    out.push_back({name + ".label", "label does not match body slot"});
  }
  for (std::size_t i = 0; i < body.voxels.size(); ++i) {
    const auto& v = body.voxels[i];
    const std::string field = name + ".voxels[" + std::to_string(i) + "]";
    if (!(v.volume > 0.0) || !std::isfinite(v.volume)) {
      out.push_back({field + ".volume", "voxel volume must be positive"});
    }
    if (!v.center.allFinite()) {
      out.push_back({field + ".center", "voxel center is not finite"});
    }
    if (kernel.dimension == 1 && (v.center.y() != 0.0 || v.center.z() != 0.0)) {
      out.push_back({field + ".center", "1D voxel lies off the x axis"});
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (body.voxels[j].center == v.center) {
        out.push_back({field + ".center", "voxel centers not distinct"});
        break;
      }
    }
  }
  check_susceptibility(name + ".susceptibility", body.susceptibility,
                       kernel.n_internal == 1, out);
}

}  // namespace

std::vector<Diagnostic> validate_scene(const Scene& scene) {
  std::vector<Diagnostic> out;
  const auto& k = scene.kernel;
  if (k.dimension != 1 && k.dimension != 3) {
    out.push_back({"kernel.dimension", "must be 1 or 3"});
  }
  if (k.n_internal != 1 && k.n_internal != 3) {
    out.push_back({"kernel.n_internal", "must be 1 or 3"});
  }
  if (!(k.mass >= 0.0) || !std::isfinite(k.mass)) {
    out.push_back({"kernel.mass", "must be finite and >= 0"});
  }
  if (k.dimension == 1 && k.mass == 0.0) {
    out.push_back({"kernel", "zero-mode singular configuration"});
  }
  if (!(scene.temperature >= 0.0) || !std::isfinite(scene.temperature)) {
    out.push_back({"temperature", "must be finite and >= 0"});
  }
  check_body("body1", scene.body1, BodyLabel::A1, k, out);
  check_body("body2", scene.body2, BodyLabel::A2, k, out);
  for (const auto& a : scene.body1.voxels) {
    const bool clash = std::any_of(
        scene.body2.voxels.begin(), scene.body2.voxels.end(),
        [&](const Voxel& b) { return a.center == b.center; });
    if (clash) {
      out.push_back({"body2.voxels", "bodies not disjoint"});
      break;
    }
  }
  return out;
}

std::vector<Diagnostic> proximity_warnings(const Scene& scene) {
  std::vector<Diagnostic> out;
  const auto diameter = [&](const Voxel& v) {
    return scene.kernel.dimension == 1 ? v.volume
                                       : 2.0 * equivalent_radius(v.volume);
  };
  for (std::size_t i = 0; i < scene.body1.voxels.size(); ++i) {
    const auto& a = scene.body1.voxels[i];
    for (std::size_t j = 0; j < scene.body2.voxels.size(); ++j) {
      const auto& b = scene.body2.voxels[j];
      const double limit = 0.5 * (diameter(a) + diameter(b));
      const double dist = (a.center - b.center).norm();
      if (dist > 0.0 && dist < limit) {
        std::ostringstream msg;
        msg << "voxel body1[" << i << "] and body2[" << j
            << "] closer than one voxel diameter (" << dist << " < " << limit
            << ")";
        out.push_back({"body2.voxels", msg.str()});
      }
    }
  }
  return out;
}

}  // namespace fluctua
