#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advsim/error.hpp"

/// Flow-matching sampling on top of a variance-preserving diffusion prior.
///
/// Conventions: in diffusion coordinates x_t = alpha_t * x_data + sigma_t * noise and the
/// v-prediction target is v = -sigma_t * x_data + alpha_t * noise. In flow coordinates
/// x_f = t_f * x_data + (1 - t_f) * noise with velocity x_data - noise, so t_f = 0 is pure
/// noise and sampling integrates forward to t_f = 1.
namespace advsim::flow {

using Vector = std::vector<double>;

/// Largest flow time reachable from a discrete diffusion step (alpha = 1 maps here).
inline constexpr double kMaxFlowTime = 1.0 - 1e-6;

class Schedule {
 public:
  Schedule(std::vector<double> alpha, std::vector<double> sigma) : alpha_(std::move(alpha)), sigma_(std::move(sigma)) {
    if (alpha_.empty() || alpha_.size() != sigma_.size()) throw InvalidArgument("schedule: alpha/sigma size mismatch");
    for (std::size_t t = 0; t < alpha_.size(); ++t) {
      if (std::abs(alpha_[t] * alpha_[t] + sigma_[t] * sigma_[t] - 1.0) > 1e-9)
        throw InvalidArgument("schedule: alpha^2 + sigma^2 != 1 at t=" + std::to_string(t));
      if (alpha_[t] < 0.0 || sigma_[t] < 0.0) throw InvalidArgument("schedule: negative coefficient");
      if (t > 0 && (alpha_[t] > alpha_[t - 1] || sigma_[t] < sigma_[t - 1]))
        throw InvalidArgument("schedule: alpha must decrease and sigma increase with t");
    }
  }

  /// alpha_t = cos(pi t / 2T), sigma_t = sin(pi t / 2T) for t in [0, T).
  static Schedule cosine(std::size_t steps = 1000) {
    std::vector<double> a(steps), s(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      const double phi = std::numbers::pi * static_cast<double>(t) / (2.0 * static_cast<double>(steps));
      a[t] = std::cos(phi);
      s[t] = std::sin(phi);
    }
    return {std::move(a), std::move(s)};
  }

  [[nodiscard]] std::size_t size() const { return alpha_.size(); }
  [[nodiscard]] double alpha(std::size_t t) const { return alpha_.at(check(t)); }
  [[nodiscard]] double sigma(std::size_t t) const { return sigma_.at(check(t)); }

 private:
  std::size_t check(std::size_t t) const {
    if (t >= alpha_.size()) throw InvalidArgument("schedule: step " + std::to_string(t) + " out of range");
    return t;
  }
  std::vector<double> alpha_, sigma_;
};

struct FlowState {
  double t_f = 0.0;
  Vector x;
};

// ---------------------------------------------------------------------------
// Diffusion -> flow conversions

inline double dm_to_fm_time(double alpha, double sigma) { return std::min(alpha / (alpha + sigma), kMaxFlowTime); }
inline double dm_to_fm_time(const Schedule& sched, std::size_t t) { return dm_to_fm_time(sched.alpha(t), sched.sigma(t)); }

inline FlowState dm_to_fm_state(double alpha, double sigma, std::span<const double> x_t) {
  FlowState out{dm_to_fm_time(alpha, sigma), Vector(x_t.size())};
  const double scale = alpha + sigma;
  for (std::size_t i = 0; i < x_t.size(); ++i) out.x[i] = x_t[i] / scale;
  return out;
}
inline FlowState dm_to_fm_state(const Schedule& sched, std::size_t t, std::span<const double> x_t) {
  return dm_to_fm_state(sched.alpha(t), sched.sigma(t), x_t);
}

/// Inverse of the state map: x_t = (alpha + sigma) * x_f.
inline Vector fm_to_dm_state(double alpha, double sigma, std::span<const double> x_f) {
  Vector out(x_f.size());
  for (std::size_t i = 0; i < x_f.size(); ++i) out[i] = (alpha + sigma) * x_f[i];
  return out;
}

/// Flow velocity from a v-prediction: (alpha - sigma) * x_t - (alpha + sigma) * v.
inline Vector v_dm_to_v_fm(double alpha, double sigma, std::span<const double> x_t, std::span<const double> v) {
  if (x_t.size() != v.size()) throw InvalidArgument("v_dm_to_v_fm: dimension mismatch");
  Vector out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) out[i] = (alpha - sigma) * x_t[i] - (alpha + sigma) * v[i];
  return out;
}
inline Vector v_dm_to_v_fm(const Schedule& sched, std::size_t t, std::span<const double> x_t, std::span<const double> v) {
  return v_dm_to_v_fm(sched.alpha(t), sched.sigma(t), x_t, v);
}

/// Continuous diffusion angle phi (alpha = cos phi, sigma = sin phi) that lands on flow time t_f.
inline double fm_time_to_dm_angle(double t_f) { return std::atan2(1.0 - t_f, t_f); }

// ---------------------------------------------------------------------------
// Sampling

inline FlowState euler_step(const FlowState& state, std::span<const double> v, double dt_f) {
  if (!(dt_f > 0.0)) throw InvalidArgument("euler_step: step size must be positive");
  if (state.t_f + dt_f > 1.0 + 1e-9) throw InvalidArgument("euler_step: step beyond t_f = 1");
  if (v.size() != state.x.size()) throw InvalidArgument("euler_step: dimension mismatch");
  FlowState out{state.t_f + dt_f, state.x};
  for (std::size_t i = 0; i < v.size(); ++i) out.x[i] += dt_f * v[i];
  return out;
}

/// Classifier-free guidance: v_uncond + s * (v_cond - v_uncond).
inline Vector cfg_combine(std::span<const double> v_cond, std::span<const double> v_uncond, double scale) {
  if (v_cond.size() != v_uncond.size()) throw InvalidArgument("cfg_combine: dimension mismatch");
  Vector out(v_cond.size());
  for (std::size_t i = 0; i < v_cond.size(); ++i) out[i] = v_uncond[i] + scale * (v_cond[i] - v_uncond[i]);
  return out;
}

/// (x, t_f, condition label or nullopt for unconditional) -> velocity.
using VelocityField = std::function<Vector(std::span<const double>, double, std::optional<int>)>;

inline std::vector<double> uniform_steps(std::size_t n) {
  if (n == 0) throw InvalidArgument("uniform_steps: need at least one step");
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

struct Guidance {
  int label = 0;
  double scale = 2.0;
};

/// Euler integration from t_f = 0 (noise x0) to t_f = 1 over the given step sizes.
inline Vector sample(const VelocityField& field, std::span<const double> x0, std::span<const double> steps,
                     std::optional<Guidance> guidance = std::nullopt) {
  if (steps.empty()) throw InvalidArgument("sample: need at least one step");
  double total = 0.0;
  for (double h : steps) {
    if (!(h > 0.0)) throw InvalidArgument("sample: step sizes must be positive");
    total += h;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("sample: step sizes must sum to 1");
  FlowState state{0.0, Vector(x0.begin(), x0.end())};
  for (std::size_t i = 0; i < steps.size(); ++i) {
    Vector v;
    if (guidance) {
      const Vector vc = field(state.x, state.t_f, guidance->label);
      const Vector vu = field(state.x, state.t_f, std::nullopt);
      v = cfg_combine(vc, vu, guidance->scale);
    } else {
      v = field(state.x, state.t_f, std::nullopt);
    }
    // The last step lands exactly on t_f = 1 regardless of rounding in the running sum.
    const bool last = i + 1 == steps.size();
    state = euler_step(state, v, last ? 1.0 - state.t_f : steps[i]);
  }
  return state.x;
}

/// Mean squared error between a predicted velocity and the straight-line target x1 - x0.
inline double fm_loss(std::span<const double> v_pred, std::span<const double> x1, std::span<const double> x0) {
  if (v_pred.size() != x1.size() || x1.size() != x0.size()) throw InvalidArgument("fm_loss: dimension mismatch");
  if (v_pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < v_pred.size(); ++i) {
    const double d = v_pred[i] - (x1[i] - x0[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(v_pred.size());
}

// ---------------------------------------------------------------------------
// Analytic oracles for isotropic Gaussian data N(mu, s^2 I)

/// E[x1 - x0 | x_t = x] with x1 ~ N(mu, s^2 I), x0 ~ N(0, I), x_t = t x1 + (1 - t) x0.
/// Per axis x_t has mean t*mu and variance V = t^2 s^2 + (1-t)^2, and
/// E[x1 - x0 | x] = mu + (t s^2 - (1 - t)) / V * (x - t mu).
inline Vector gaussian_oracle_velocity(std::span<const double> mu, double s, std::span<const double> x, double t_f) {
  if (!(s > 0.0)) throw InvalidArgument("gaussian_oracle_velocity: s must be positive");
  if (mu.size() != x.size()) throw InvalidArgument("gaussian_oracle_velocity: dimension mismatch");
  const double t = t_f;
  const double var = t * t * s * s + (1.0 - t) * (1.0 - t);
  const double gain = (t * s * s - (1.0 - t)) / var;
  Vector v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = mu[i] + gain * (x[i] - t * mu[i]);
  return v;
}

/// Exact time-1 flow map of the Gaussian oracle ODE: x0 -> mu + s * x0.
inline Vector gaussian_transport(std::span<const double> mu, double s, std::span<const double> x0) {
  Vector out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = mu[i] + s * x0[i];
  return out;
}

/// E[v | x_t] for the diffusion v-prediction on the same Gaussian data.
inline Vector gaussian_dm_v_prediction(std::span<const double> mu, double s, std::span<const double> x_t, double alpha,
                                       double sigma) {
  const double var = alpha * alpha * s * s + sigma * sigma;
  Vector v(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    const double centred = x_t[i] - alpha * mu[i];
    const double data = mu[i] + alpha * s * s / var * centred;
    const double noise = sigma / var * centred;
    v[i] = -sigma * data + alpha * noise;
  }
  return v;
}

struct GaussianComponent {
  double weight = 1.0;
  Vector mu;
  double s = 1.0;
};

/// Mixture of isotropic Gaussians. Conditional velocity for label k is component k's oracle;
/// the unconditional velocity weights component oracles by their posterior at (x, t_f).
class GaussianMixtureOracle {
 public:
  explicit GaussianMixtureOracle(std::vector<GaussianComponent> comps) : comps_(std::move(comps)) {
    if (comps_.empty()) throw InvalidArgument("mixture: no components");
  }

  [[nodiscard]] Vector velocity(std::span<const double> x, double t_f, std::optional<int> label) const {
    if (label) {
      const auto& c = comps_.at(static_cast<std::size_t>(*label));
      return gaussian_oracle_velocity(c.mu, c.s, x, t_f);
    }
    const double t = t_f;
    std::vector<double> logw(comps_.size());
    double max_logw = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < comps_.size(); ++k) {
      const auto& c = comps_[k];
      const double var = t * t * c.s * c.s + (1.0 - t) * (1.0 - t);
      double sq = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - t * c.mu[i]) * (x[i] - t * c.mu[i]);
      logw[k] = std::log(c.weight) - 0.5 * static_cast<double>(x.size()) * std::log(var) - 0.5 * sq / var;
      max_logw = std::max(max_logw, logw[k]);
    }
    double z = 0.0;
    for (double& w : logw) z += (w = std::exp(w - max_logw));
    Vector v(x.size(), 0.0);
    for (std::size_t k = 0; k < comps_.size(); ++k) {
      const Vector vk = gaussian_oracle_velocity(comps_[k].mu, comps_[k].s, x, t);
      for (std::size_t i = 0; i < x.size(); ++i) v[i] += logw[k] / z * vk[i];
    }
    return v;
  }

  [[nodiscard]] VelocityField field() const {
    return [this](std::span<const double> x, double t, std::optional<int> label) { return velocity(x, t, label); };
  }

 private:
  std::vector<GaussianComponent> comps_;
};

/// Wraps a diffusion v-prediction model (x_t, alpha, sigma, label) as a flow velocity field by
/// mapping (x_f, t_f) to diffusion coordinates at the continuous angle with matching t_f.
using VPredictionModel = std::function<Vector(std::span<const double>, double, double, std::optional<int>)>;

inline VelocityField diffusion_prior_field(VPredictionModel model) {
  return [model = std::move(model)](std::span<const double> x_f, double t_f, std::optional<int> label) {
    const double phi = fm_time_to_dm_angle(t_f);
    const double alpha = std::cos(phi), sigma = std::sin(phi);
    const Vector x_t = fm_to_dm_state(alpha, sigma, x_f);
    const Vector v = model(x_t, alpha, sigma, label);
    return v_dm_to_v_fm(alpha, sigma, x_t, v);
  };
}

// ---------------------------------------------------------------------------
// Step-count sweep

/// Standard normal draws from a 64-bit Mersenne Twister via Box-Muller.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : gen_(seed) {}
  double operator()() {
    if (cached_) {
      cached_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do u1 = uniform(); while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    cached_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool cached_ = false;
};

struct SweepRow {
  std::size_t n_steps = 0;
  double mean_error = 0.0;       // max over axes |sample mean - mu|
  double std_error = 0.0;        // max over axes |sample std - s|
  double transport_error = 0.0;  // mean |x_euler - exact flow map| over samples
};

/// Samples the Gaussian oracle with uniform Euler steps for each step count, reusing the same
/// noise draws across step counts.
inline std::vector<SweepRow> gaussian_step_sweep(std::span<const double> mu, double s, std::span<const std::size_t> step_counts,
                                                 std::size_t n_samples, std::uint64_t seed) {
  const std::size_t d = mu.size();
  NormalSource normal(seed);
  std::vector<Vector> noise(n_samples, Vector(d));
  for (auto& z : noise)
    for (auto& v : z) v = normal();
  const Vector mu_v(mu.begin(), mu.end());
  const VelocityField field = [&](std::span<const double> x, double t, std::optional<int>) {
    return gaussian_oracle_velocity(mu_v, s, x, t);
  };
  std::vector<SweepRow> rows;
  for (const std::size_t n : step_counts) {
    const auto steps = uniform_steps(n);
    Vector sum(d, 0.0), sum_sq(d, 0.0);
    double transport = 0.0;
    for (const auto& z : noise) {
      const Vector x = sample(field, z, steps);
      const Vector exact = gaussian_transport(mu_v, s, z);
      double err = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        sum[i] += x[i];
        sum_sq[i] += x[i] * x[i];
        err += (x[i] - exact[i]) * (x[i] - exact[i]);
      }
      transport += std::sqrt(err);
    }
    SweepRow row;
    row.n_steps = n;
    const auto m = static_cast<double>(n_samples);
    for (std::size_t i = 0; i < d; ++i) {
      const double mean = sum[i] / m;
      const double sd = std::sqrt(std::max(0.0, sum_sq[i] / m - mean * mean));
      row.mean_error = std::max(row.mean_error, std::abs(mean - mu[i]));
      row.std_error = std::max(row.std_error, std::abs(sd - s));
    }
    row.transport_error = transport / m;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace advsim::flow
