#include "fluctua/engine.hpp"

#include "fluctua/errors.hpp"
#include "fluctua/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <thread>

namespace fluctua {

namespace {

using Eigen::MatrixXd;

void require_valid(const Scene& scene) {
  const auto diags = validate_scene(scene);
  if (diags.empty()) return;
  std::string msg = "invalid scene:";
  for (const auto& d : diags) msg += " [" + d.field + ": " + d.message + "]";
  throw ConfigError(msg);
}

std::shared_ptr<const GreenKernel> kernel_for(const Scene& scene,
                                              const EngineOptions& opts) {
  if (opts.kernel) return opts.kernel;
  return std::make_shared<FreeSpaceKernel>(scene.kernel);
}

Tensor3 body_chi(const Body& body, double omega, int n_internal) {
  if (body.voxels.empty()) return Tensor3::Zero();
  const Tensor3 chi = chi_at(body.susceptibility, omega);
  if (n_internal == 1) return chi(0, 0) * Tensor3::Identity();
  return chi;
}

// ln|det| and sign from a pivoted LU.
struct LogDet {
  double value = 0.0;
  double sign = 1.0;
  double smallest_pivot = std::numeric_limits<double>::infinity();
};

LogDet lu_logdet(const MatrixXd& m) {
  LogDet out;
  if (m.rows() == 0) return out;
  Eigen::PartialPivLU<MatrixXd> lu(m);
  const MatrixXd& packed = lu.matrixLU();
  out.sign = lu.permutationP().determinant();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const double u = packed(i, i);
    out.smallest_pivot = std::min(out.smallest_pivot, std::abs(u));
    if (u < 0.0) out.sign = -out.sign;
    out.value += std::log(std::abs(u));
  }
  if (out.smallest_pivot == 0.0) out.sign = 0.0;
  return out;
}

double positive_logdet(const MatrixXd& m, const char* what) {
  const LogDet ld = lu_logdet(m);
  if (!(ld.sign > 0.0)) {
    throw SingularError(std::string(what) +
                            ": non-positive determinant (non-passive input or "
                            "discretization breakdown), smallest pivot " +
                            std::to_string(ld.smallest_pivot),
                        ld.smallest_pivot);
  }
  return ld.value;
}

// ln det(1 - q). Series when ||q||_F <= 1/2 keeps full relative precision for
// the tiny q of distant bodies; LU otherwise.
double logdet_one_minus(const MatrixXd& q) {
  if (q.rows() == 0) return 0.0;
  const double f = q.norm();
  if (f > 0.5) {
    return positive_logdet(MatrixXd::Identity(q.rows(), q.cols()) - q,
                           "two-body mode matrix");
  }
  const double n = static_cast<double>(q.rows());
  double sum = 0.0;
  MatrixXd power = q;
  double bound = f;
  for (int m = 1; m <= 200; ++m) {
    sum -= power.trace() / m;
    bound *= f;
    if (n * bound / ((m + 1) * (1.0 - f)) <= 1e-17 * std::abs(sum) ||
        bound == 0.0) {
      break;
    }
    power = power * q;
  }
  return sum;
}

struct ModeValues {
  double full = 0.0;
  double interaction = 0.0;
};

ModeValues evaluate_mode(const Scene& scene, double omega,
                         const EngineOptions& opts, bool want_interaction) {
  const ModeMatrix mode = build_mode_matrix(scene, omega, opts);
  ModeValues out;
  if (omega == 0.0) return out;
  const Eigen::Index k = scene.kernel.n_internal;
  const Eigen::Index n1 = static_cast<Eigen::Index>(scene.body1.voxels.size()) * k;
  const Eigen::Index n2 = static_cast<Eigen::Index>(scene.body2.voxels.size()) * k;
  if (!want_interaction || n1 == 0 || n2 == 0) {
    out.full = positive_logdet(mode.m, "mode matrix");
    return out;
  }
  const MatrixXd& m = mode.m;
  if (opts.method == InteractionMethod::Subtraction) {
    out.full = positive_logdet(m, "mode matrix");
    const double self1 = positive_logdet(m.topLeftCorner(n1, n1), "body1 mode matrix");
    const double self2 =
        positive_logdet(m.bottomRightCorner(n2, n2), "body2 mode matrix");
    out.interaction = (out.full - self1) - self2;
    return out;
  }
  const MatrixXd m11 = m.topLeftCorner(n1, n1);
  const MatrixXd m22 = m.bottomRightCorner(n2, n2);
  Eigen::PartialPivLU<MatrixXd> lu1(m11);
  Eigen::PartialPivLU<MatrixXd> lu2(m22);
  const MatrixXd q =
      lu2.solve(m.bottomLeftCorner(n2, n1) * lu1.solve(m.topRightCorner(n1, n2)));
  out.interaction = logdet_one_minus(q);
  out.full = positive_logdet(m11, "body1 mode matrix") +
             positive_logdet(m22, "body2 mode matrix") + out.interaction;
  return out;
}

// Evaluates f(n) for n in [begin, end) on up to `threads` workers. Each value
// depends only on n, so results are identical for any worker count.
template <class F>
std::vector<ModeValues> evaluate_block(int begin, int end, unsigned threads,
                                       const F& f) {
  std::vector<ModeValues> out(static_cast<std::size_t>(end - begin));
  const unsigned workers =
      std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(end - begin)));
  if (workers == 1) {
    for (int n = begin; n < end; ++n) out[n - begin] = f(n);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int n = begin + static_cast<int>(w); n < end;
             n += static_cast<int>(workers)) {
          out[n - begin] = f(n);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

double geometric_tail(const std::vector<double>& terms, double temperature) {
  if (terms.empty()) return 0.0;
  const double last = terms.back();
  if (last == 0.0) return 0.0;
  if (terms.size() < 2 || terms[terms.size() - 2] == 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  const double ratio = std::abs(last / terms[terms.size() - 2]);
  if (!(ratio < 1.0)) return std::numeric_limits<double>::infinity();
  return temperature * std::abs(last) * ratio / (1.0 - ratio);
}

// Whether the last three contributions are each within tail_tol of the sum.
bool tail_settled(const std::vector<double>& terms, const MatsubaraGrid& grid,
                  double tail_tol) {
  if (tail_tol <= 0.0 || terms.size() < 3) return false;
  double partial = 0.0;
  int quiet = 0;
  for (std::size_t n = 0; n < terms.size(); ++n) {
    const double contribution = grid.weight(static_cast<int>(n)) *
                                grid.temperature() * terms[n];
    partial += contribution;
    quiet = std::abs(contribution) <= tail_tol * std::abs(partial) ? quiet + 1 : 0;
  }
  return quiet >= 3;
}

FreeEnergyResult finish(std::vector<double> terms, const MatsubaraGrid& grid,
                        bool converged) {
  FreeEnergyResult out;
  out.n_used = static_cast<int>(terms.size());
  for (std::size_t n = 0; n < terms.size(); ++n) {
    out.total += grid.weight(static_cast<int>(n)) * grid.temperature() * terms[n];
  }
  out.tail_estimate = geometric_tail(terms, grid.temperature());
  out.converged = converged;
  out.mode_terms = std::move(terms);
  return out;
}

// Ascending Matsubara summation with early termination on the primary
// (interaction or full) sequence.
InteractionResult matsubara_sum(const Scene& scene, const MatsubaraGrid& grid,
                                double tail_tol, const EngineOptions& opts,
                                bool interaction) {
  std::vector<double> primary;
  std::vector<double> full;
  const int n_total = grid.n_max() + 1;
  const int block = std::max(8, 4 * static_cast<int>(std::max(1u, opts.threads)));
  double partial = 0.0;
  int quiet = 0;
  bool converged = false;
  const auto term = [&](int n) {
    return evaluate_mode(scene, grid.frequency(n), opts, interaction);
  };
  for (int begin = 0; begin < n_total && !converged; begin += block) {
    const int end = std::min(n_total, begin + block);
    const auto values = evaluate_block(begin, end, opts.threads, term);
    for (int n = begin; n < end; ++n) {
      const auto& v = values[n - begin];
      const double t = interaction ? v.interaction : v.full;
      primary.push_back(t);
      full.push_back(v.full);
      const double contribution = grid.weight(n) * grid.temperature() * t;
      partial += contribution;
      if (tail_tol > 0.0 && std::abs(contribution) <= tail_tol * std::abs(partial)) {
        ++quiet;
      } else {
        quiet = 0;
      }
      if (quiet >= 3) {
        converged = true;
        break;
      }
    }
  }
  InteractionResult out;
  const bool full_converged = interaction ? tail_settled(full, grid, tail_tol) : converged;
  out.full = finish(std::move(full), grid, full_converged);
  if (interaction) out.interaction = finish(std::move(primary), grid, converged);
  return out;
}

}  // namespace

ModeFactors mode_factors(const Scene& scene, double omega,
                         const EngineOptions& opts) {
  const int k = scene.kernel.n_internal;
  const auto voxels = scene.all_voxels();
  const auto n = static_cast<Eigen::Index>(voxels.size()) * k;
  ModeFactors f;
  f.g0 = expand_internal(kernel_for(scene, opts)->site_matrix(voxels, omega), k);
  f.chi = MatrixXd::Zero(n, n);
  f.weights.resize(n);
  const Tensor3 chi1 = body_chi(scene.body1, omega, k);
  const Tensor3 chi2 = body_chi(scene.body2, omega, k);
  const std::size_t n1 = scene.body1.voxels.size();
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    const Tensor3& chi = i < n1 ? chi1 : chi2;
    const auto row = static_cast<Eigen::Index>(i) * k;
    f.chi.block(row, row, k, k) = chi.topLeftCorner(k, k);
    f.weights.segment(row, k).setConstant(voxels[i].volume);
  }
  return f;
}

ModeMatrix build_mode_matrix(const Scene& scene, double omega,
                             const EngineOptions& opts) {
  if (!(omega >= 0.0)) throw ConfigError("mode matrix needs omega >= 0");
  const int k = scene.kernel.n_internal;
  const auto n =
      static_cast<Eigen::Index>(scene.body1.voxels.size() + scene.body2.voxels.size()) * k;
  ModeMatrix mode{MatrixXd::Identity(n, n), omega};
  if (omega == 0.0 || n == 0) return mode;

  const ModeFactors f = mode_factors(scene, omega, opts);
  const MatrixXd gw = f.g0 * f.weights.asDiagonal();
  const double w2 = omega * omega;
  for (Eigen::Index row = 0; row < n; row += k) {
    mode.m.middleRows(row, k).noalias() +=
        w2 * f.chi.block(row, row, k, k) * gw.middleRows(row, k);
  }
  return mode;
}

double mode_term(const ModeMatrix& mode) {
  return positive_logdet(mode.m, "mode matrix");
}

double spectral_radius(const MatrixXd& a, double tol) {
  const Eigen::Index n = a.rows();
  if (n == 0 || a.isZero(0.0)) return 0.0;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * std::sin(1.0 + i);
  v.normalize();
  double estimate = 0.0;
  for (int iter = 0; iter < 20000; ++iter) {
    Eigen::VectorXd w = a * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double previous = estimate;
    estimate = norm;
    v = w / norm;
    if (iter > 3 && std::abs(estimate - previous) <= tol * 1e-3 * estimate) break;
  }
  return estimate;
}

double mode_term_series(const ModeMatrix& mode, int m_max) {
  if (m_max < 1) throw ConfigError("series order must be >= 1");
  const MatrixXd p = mode.m - MatrixXd::Identity(mode.m.rows(), mode.m.cols());
  constexpr double kTol = 1e-3;
  const double radius = spectral_radius(p, kTol);
  if (radius >= 1.0 - kTol) {
    throw DivergentSeriesError(
        "trace-log series diverges: spectral radius " + std::to_string(radius) +
            " (use the factorized mode term)",
        radius);
  }
  double sum = 0.0;
  MatrixXd power = p;
  for (int m = 1; m <= m_max; ++m) {
    const double sign = m % 2 == 1 ? 1.0 : -1.0;
    sum += sign * power.trace() / m;
    if (m < m_max) power = power * p;
  }
  return sum;
}

MatrixXd dressed_green(const Scene& scene, double omega,
                       const EngineOptions& opts) {
  const ModeFactors f = mode_factors(scene, omega, opts);
  const Eigen::Index n = f.g0.rows();
  const MatrixXd wx = f.weights.asDiagonal() * f.chi;
  const MatrixXd a = MatrixXd::Identity(n, n) + omega * omega * f.g0 * wx;
  Eigen::PartialPivLU<MatrixXd> lu(a);
  if (lu_logdet(a).sign == 0.0) {
    throw SingularError("dressed Green's function: singular mode matrix", 0.0);
  }
  return lu.solve(f.g0);
}

double interaction_mode_term(const Scene& scene, double omega,
                             const EngineOptions& opts) {
  return evaluate_mode(scene, omega, opts, true).interaction;
}

FreeEnergyResult free_energy_eff(const Scene& scene, const MatsubaraGrid& grid,
                                 double tail_tol, const EngineOptions& opts) {
  require_valid(scene);
  return matsubara_sum(scene, grid, tail_tol, opts, false).full;
}

InteractionResult interaction_free_energy(const Scene& scene,
                                          const MatsubaraGrid& grid,
                                          double tail_tol,
                                          const EngineOptions& opts) {
  require_valid(scene);
  return matsubara_sum(scene, grid, tail_tol, opts, true);
}

ZeroTemperatureResult free_energy_zero_temperature(const Scene& scene,
                                                   const SpectralQuadrature& quad,
                                                   EnergyPart part,
                                                   const EngineOptions& opts) {
  require_valid(scene);
  quad.validate();
  const bool interaction = part == EnergyPart::Interaction;

  double length = (scene.body2.centroid() - scene.body1.centroid()).norm();
  if (!interaction || scene.body1.voxels.empty() || scene.body2.voxels.empty() ||
      !(length > 0.0)) {
    double volume = 0.0;
    const auto voxels = scene.all_voxels();
    for (const auto& v : voxels) volume += v.volume;
    length = voxels.empty() ? 1.0 : std::cbrt(volume / voxels.size());
  }
  std::vector<double> breaks;
  for (int k = -16; k <= 16; ++k) breaks.push_back(std::pow(10.0, k / 4.0) / length);
  const double last = breaks.back();
  auto panels = quadrature::panels_between(0.0, last, breaks);
  panels.push_back({last, std::numeric_limits<double>::infinity()});

  const auto integrand = [&](double zeta) {
    const ModeValues v = evaluate_mode(scene, zeta, opts, interaction);
    return (interaction ? v.interaction : v.full) / (2.0 * std::numbers::pi);
  };
  quadrature::Budget budget;
  budget.rel_tol = quad.rel_tol;
  budget.max_intervals = quad.max_intervals;
  budget.adaptive = quad.rule == QuadratureRule::Adaptive;
  const auto result = quadrature::integrate(
      integrand, panels, 0.0, [](double x) { return std::abs(x); }, budget);
  if (!result.converged) {
    throw NumericError("zero-temperature frequency integral did not converge",
                       result.error / std::max(std::abs(result.value), 1e-300));
  }
  return {result.value, result.error, result.evaluations};
}

double separation_along(const Scene& scene, const Vec3& axis) {
  return (scene.body2.centroid() - scene.body1.centroid()).dot(axis.normalized());
}

ForceResult induced_force(const Scene& scene, const Vec3& axis, double h,
                          const TemperatureMode& mode, const EngineOptions& opts) {
  if (!(axis.norm() > 0.0)) throw ConfigError("force axis must be non-zero");
  const Vec3 unit = axis.normalized();
  const double distance = (scene.body2.centroid() - scene.body1.centroid()).norm();
  if (!(h > 0.0) || !(h < 0.1 * distance)) {
    throw ConfigError("force step must lie in (0, separation/10)");
  }
  ForceResult out;
  out.separation = separation_along(scene, unit);
  out.step = h;
  const Scene minus = scene.with_body2_translated(-h * unit);
  const Scene plus = scene.with_body2_translated(h * unit);

  if (const auto* matsubara = std::get_if<MatsubaraMode>(&mode)) {
    const auto center = interaction_free_energy(scene, matsubara->grid,
                                                matsubara->tail_tol, opts);
    // Same modes for the displaced evaluations: no early termination.
    const MatsubaraGrid fixed =
        matsubara->grid.truncated(std::max(1, center.interaction.n_used - 1));
    out.energy_center = center.interaction.total;
    out.energy_minus = interaction_free_energy(minus, fixed, 0.0, opts).interaction.total;
    out.energy_plus = interaction_free_energy(plus, fixed, 0.0, opts).interaction.total;
    const auto full = free_energy_eff(scene, matsubara->grid, matsubara->tail_tol, opts);
    out.full_center = full.total;
    out.full_n_used = full.n_used;
    out.full_tail_estimate = full.tail_estimate;
    out.full_converged = full.converged;
    out.n_used = center.interaction.n_used;
    out.tail_estimate = center.interaction.tail_estimate;
    out.converged = center.interaction.converged;
  } else {
    const auto& quad = std::get<SpectralQuadrature>(mode);
    const auto center = free_energy_zero_temperature(scene, quad, EnergyPart::Interaction, opts);
    out.energy_center = center.value;
    out.energy_minus =
        free_energy_zero_temperature(minus, quad, EnergyPart::Interaction, opts).value;
    out.energy_plus =
        free_energy_zero_temperature(plus, quad, EnergyPart::Interaction, opts).value;
    out.n_used = center.evaluations;
    out.tail_estimate = center.error_estimate;
    out.converged = true;
    try {
      const auto full = free_energy_zero_temperature(scene, quad, EnergyPart::Full, opts);
      out.full_center = full.value;
      out.full_n_used = full.evaluations;
      out.full_tail_estimate = full.error_estimate;
      out.full_converged = true;
    } catch (const NumericError& e) {
      out.full_center = std::numeric_limits<double>::quiet_NaN();
      out.full_tail_estimate = e.achieved_tolerance();
      out.full_converged = false;
    }
  }
  out.force = (out.energy_minus - out.energy_plus) / (2.0 * h);
  return out;
}

}  // namespace fluctua
