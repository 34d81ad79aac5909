#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "advsim/flowmatch.hpp"

using namespace advsim::flow;
using advsim::InvalidArgument;

TEST(Schedule, CosineIsVariancePreservingAndMonotone) {
  const Schedule s = Schedule::cosine();
  ASSERT_EQ(s.size(), 1000u);
  for (std::size_t t = 0; t < s.size(); ++t) {
    EXPECT_NEAR(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t), 1.0, 1e-9);
    if (t > 0) {
      EXPECT_LT(s.alpha(t), s.alpha(t - 1));
      EXPECT_GT(s.sigma(t), s.sigma(t - 1));
    }
  }
  EXPECT_THROW((void)s.alpha(1000), InvalidArgument);
  EXPECT_THROW(Schedule({0.9}, {0.1}), InvalidArgument);
  EXPECT_THROW(Schedule({0.6, 0.8}, {0.8, 0.6}), InvalidArgument);
}

TEST(Conversion, TimeAndStateExamples) {
  const double h = std::sqrt(0.5);
  EXPECT_NEAR(dm_to_fm_time(h, h), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(dm_to_fm_time(1.0, 0.0), kMaxFlowTime);
  EXPECT_NEAR(dm_to_fm_time(0.8, 0.6), 0.8 / 1.4, 1e-12);
  EXPECT_DOUBLE_EQ(dm_to_fm_time(Schedule::cosine(), 0), kMaxFlowTime);

  const std::vector<double> x{1.4, 2.8};
  const FlowState f = dm_to_fm_state(0.8, 0.6, x);
  EXPECT_NEAR(f.x[0], 1.0, 1e-12);
  EXPECT_NEAR(f.x[1], 2.0, 1e-12);
  EXPECT_EQ(dm_to_fm_state(1.0, 0.0, x).x, x);
  EXPECT_EQ(dm_to_fm_state(0.8, 0.6, std::vector<double>{0.0}).x[0], 0.0);
}

TEST(Conversion, StateRoundTrip) {
  const Schedule s = Schedule::cosine();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 5);
  for (std::size_t t = 0; t < s.size(); t += 7) {
    const std::vector<double> x{n(rng), n(rng), n(rng)};
    const auto back = fm_to_dm_state(s.alpha(t), s.sigma(t), dm_to_fm_state(s, t, x).x);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(back[i], x[i], 1e-12 * std::max(1.0, std::abs(x[i])));
  }
}

TEST(Conversion, VelocityExamples) {
  const std::vector<double> x{2.0, -1.0}, v{0.5, 3.0};
  const auto a = v_dm_to_v_fm(1.0, 0.0, x, v);
  EXPECT_DOUBLE_EQ(a[0], 1.5);
  EXPECT_DOUBLE_EQ(a[1], -4.0);
  const double h = std::sqrt(0.5);
  const auto b = v_dm_to_v_fm(h, h, std::vector<double>{0.0, 0.0}, v);
  EXPECT_NEAR(b[0], -std::sqrt(2.0) * 0.5, 1e-12);
  EXPECT_NEAR(b[1], -std::sqrt(2.0) * 3.0, 1e-12);
}

TEST(Conversion, VelocityMatchesExplicitInverse) {
  // [x_t, v]^T = [[a, s], [-s, a]] [x_0, x_T]^T; solve by Cramer's rule and return x_0 - x_T.
  const Schedule sched = Schedule::cosine();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 3);
  std::uniform_int_distribution<std::size_t> step(0, sched.size() - 1);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t t = step(rng);
    const double a = sched.alpha(t), s = sched.sigma(t);
    const double xt = n(rng), v = n(rng);
    const double det = a * a + s * s;
    const double x0 = (a * xt - s * v) / det;
    const double xT = (s * xt + a * v) / det;
    const double got = v_dm_to_v_fm(sched, t, std::vector<double>{xt}, std::vector<double>{v})[0];
    EXPECT_NEAR(got, x0 - xT, 1e-12 * std::max(1.0, std::abs(x0 - xT)));
  }
}

TEST(Euler, StepExamplesAndErrors) {
  const FlowState s{0.0, {0.0, 0.0}};
  const auto a = euler_step(s, std::vector<double>{1.0, 1.0}, 0.25);
  EXPECT_DOUBLE_EQ(a.x[0], 0.25);
  EXPECT_DOUBLE_EQ(a.t_f, 0.25);
  EXPECT_EQ(euler_step(s, std::vector<double>{0.0, 0.0}, 0.5).x, s.x);
  EXPECT_THROW(euler_step({0.9, {0.0}}, std::vector<double>{1.0}, 0.2), InvalidArgument);
  EXPECT_THROW(euler_step(s, std::vector<double>{1.0}, 0.1), InvalidArgument);
  EXPECT_THROW(euler_step(s, std::vector<double>{1.0, 1.0}, 0.0), InvalidArgument);
}

TEST(Euler, ConstantFieldIsExact) {
  const std::vector<double> x0{0.3, -2.0}, x1{4.0, 1.5};
  const VelocityField field = [&](std::span<const double>, double, std::optional<int>) {
    return Vector{x1[0] - x0[0], x1[1] - x0[1]};
  };
  for (std::size_t n : {1u, 3u, 7u, 50u}) {
    const auto out = sample(field, x0, uniform_steps(n));
    EXPECT_NEAR(out[0], x1[0], 1e-12);
    EXPECT_NEAR(out[1], x1[1], 1e-12);
  }
  EXPECT_NEAR(sample(field, x0, std::vector<double>{0.1, 0.6, 0.3})[0], x1[0], 1e-12);
  EXPECT_THROW(sample(field, x0, std::vector<double>{0.5, 0.4}), InvalidArgument);
  EXPECT_THROW(sample(field, x0, std::vector<double>{}), InvalidArgument);
}

TEST(Guidance, Combine) {
  const std::vector<double> c{1.0, 0.0}, u{0.0, 0.0};
  EXPECT_EQ(cfg_combine(c, u, 1.0), Vector(c));
  EXPECT_EQ(cfg_combine(c, u, 0.0), Vector(u));
  EXPECT_EQ(cfg_combine(c, u, 2.0), (Vector{2.0, 0.0}));
  EXPECT_THROW(cfg_combine(c, std::vector<double>{0.0}, 2.0), InvalidArgument);
}

TEST(Guidance, PushesMixtureSamplesTowardLabel) {
  const GaussianMixtureOracle mix({{0.5, {-4.0}, 0.5}, {0.5, {4.0}, 0.5}});
  NormalSource normal(5);
  int near_label = 0;
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> z{normal()};
    const auto x = sample(mix.field(), z, uniform_steps(50), Guidance{1, 2.0});
    near_label += std::abs(x[0] - 4.0) < 2.0;
  }
  EXPECT_GT(near_label, 1900);
}

TEST(Oracle, MatchesMonteCarloConditionalExpectation) {
  // Regress x1 - x0 on a narrow bin around x at time t from interpolation draws.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0, 1);
  const double mu = 1.5, s = 0.7;
  for (double t : {0.2, 0.5, 0.8}) {
    for (double x : {-0.5, 0.7, 1.6}) {
      double sum = 0, sum_sq = 0;
      int count = 0;
      for (int i = 0; i < 1000000; ++i) {
        const double x1 = mu + s * n(rng), x0 = n(rng);
        const double xt = t * x1 + (1 - t) * x0;
        if (std::abs(xt - x) < 0.02) {
          sum += x1 - x0;
          sum_sq += (x1 - x0) * (x1 - x0);
          ++count;
        }
      }
      ASSERT_GT(count, 300);
      const double mean = sum / count;
      const double se = std::sqrt((sum_sq / count - mean * mean) / count);
      const double expected = gaussian_oracle_velocity(std::vector<double>{mu}, s, std::vector<double>{x}, t)[0];
      EXPECT_NEAR(mean, expected, 3 * se + 0.005) << "t=" << t << " x=" << x;
    }
  }
}

TEST(Oracle, StandardNormalTargetIsAFixedPoint) {
  const std::vector<double> mu{0.0, 0.0};
  NormalSource normal(1);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> z{normal(), normal()};
    const VelocityField f = [&](std::span<const double> x, double t, std::optional<int>) {
      return gaussian_oracle_velocity(mu, 1.0, x, t);
    };
    // The exact flow map is the identity; Euler only approximates it.
    const auto out = sample(f, z, uniform_steps(100));
    EXPECT_NEAR(out[0], z[0], 0.02 * std::max(1.0, std::abs(z[0])));
    EXPECT_NEAR(out[1], z[1], 0.02 * std::max(1.0, std::abs(z[1])));
  }
  EXPECT_THROW(gaussian_oracle_velocity(mu, 0.0, mu, 0.5), InvalidArgument);
}

TEST(Oracle, DiffusionAdapterReproducesFlowOracle) {
  const std::vector<double> mu{3.0, -1.0};
  const double s = 0.5;
  const VPredictionModel model = [&](std::span<const double> x_t, double a, double sg, std::optional<int>) {
    return gaussian_dm_v_prediction(mu, s, x_t, a, sg);
  };
  const VelocityField adapted = diffusion_prior_field(model);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 2);
  std::uniform_real_distribution<double> u(0.0, 0.999);
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> x{n(rng), n(rng)};
    const double t = u(rng);
    const auto a = adapted(x, t, std::nullopt);
    const auto b = gaussian_oracle_velocity(mu, s, x, t);
    EXPECT_NEAR(a[0], b[0], 1e-9 * std::max(1.0, std::abs(b[0])));
    EXPECT_NEAR(a[1], b[1], 1e-9 * std::max(1.0, std::abs(b[1])));
  }
}

TEST(Sampling, GaussianMomentsAt100Steps) {
  const std::vector<double> mu{3.0, -1.0};
  const std::vector<std::size_t> steps{100};
  const auto rows = gaussian_step_sweep(mu, 0.5, steps, 10000, 2024);
  EXPECT_LE(rows[0].mean_error, 0.05);
  EXPECT_LE(rows[0].std_error, 0.05);
}

TEST(Sampling, EndpointErrorShrinksWithSteps) {
  const std::vector<double> mu{3.0, -1.0};
  const std::vector<std::size_t> steps{5, 10, 20, 50, 100};
  const auto rows = gaussian_step_sweep(mu, 0.5, steps, 2000, 7);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i].transport_error, rows[i - 1].transport_error);
  EXPECT_LT(rows.back().transport_error, 0.01);
}

TEST(Loss, ExamplesAndOracleBeatsZeroField) {
  EXPECT_DOUBLE_EQ(fm_loss(std::vector<double>{2.0, 0.0}, std::vector<double>{3.0, 1.0}, std::vector<double>{1.0, 1.0}), 0.0);
  EXPECT_DOUBLE_EQ(fm_loss(std::vector<double>{0.0, 0.0}, std::vector<double>{2.0, 0.0}, std::vector<double>{0.0, 0.0}), 2.0);
  EXPECT_THROW(fm_loss(std::vector<double>{0.0}, std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}), InvalidArgument);

  const std::vector<double> mu{3.0, -1.0};
  NormalSource normal(4);
  double oracle = 0, zero = 0;
  for (int i = 0; i < 20000; ++i) {
    const std::vector<double> x1{mu[0] + 0.5 * normal(), mu[1] + 0.5 * normal()}, x0{normal(), normal()};
    const double t = normal.uniform() * 0.999;
    const std::vector<double> xt{t * x1[0] + (1 - t) * x0[0], t * x1[1] + (1 - t) * x0[1]};
    const auto v = gaussian_oracle_velocity(mu, 0.5, xt, t);
    const double l = fm_loss(v, x1, x0);
    EXPECT_GE(l, 0.0);
    oracle += l;
    zero += fm_loss(std::vector<double>{0.0, 0.0}, x1, x0);
  }
  EXPECT_LT(oracle, zero);
}

TEST(Normal, SourceIsDeterministicAndStandard) {
  NormalSource a(9), b(9);
  double sum = 0, sq = 0;
  for (int i = 0; i < 100000; ++i) {
    const double x = a();
    EXPECT_EQ(x, b());
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / 1e5, 0.0, 0.02);
  EXPECT_NEAR(sq / 1e5, 1.0, 0.02);
}
