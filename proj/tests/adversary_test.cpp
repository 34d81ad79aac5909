#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "advsim/adversary.hpp"
#include "advsim/synth.hpp"

using namespace advsim;

namespace {

const Extent kCar{4.5, 1.9};

Trajectory cruise(Vec2 start, double heading, double speed, int steps, double dt = 0.1) {
  Trajectory t{dt, {}};
  for (int k = 0; k <= steps; ++k)
    t.states.push_back({start + unit_from_angle(heading) * (speed * dt * k), heading, speed, dt * k});
  return t;
}

// Head-on contact oracle: sweep at 100 Hz and return the first contact time.
double first_contact_time(double xa, double va, double xb, double vb, double length) {
  for (int i = 0; i < 100000; ++i) {
    const double t = 0.01 * i;
    if (std::abs((xb - vb * t) - (xa + va * t)) <= length) return t;
  }
  return -1;
}

}  // namespace

TEST(Score, HandEvaluatedCase) {
  const double expected = 0.5 * 0.81 * std::exp(-0.1);
  EXPECT_NEAR(collision_term(3, 0.9), 0.81, 1e-15);
  EXPECT_NEAR(score_terms(0.5, collision_term(3, 0.9), 1.0, 0.5, 0.2), expected, 1e-9);
  EXPECT_NEAR(expected, 0.36646, 1e-5);
}

TEST(Score, ImmediateCollisionAndWeightsOff) {
  EXPECT_DOUBLE_EQ(collision_term(1, 0.9), 1.0);
  EXPECT_DOUBLE_EQ(score_terms(0.3, 0.01, 0.0, 0.0, 0.9), 0.3);
}

TEST(Score, NearMissBelowAnyCollision) {
  const double worst_collision = collision_term(50, 0.9);
  EXPECT_LT(near_miss_term(0.9, 50, 2.0, 0.0), worst_collision + 1e-300);
  EXPECT_GT(near_miss_term(0.9, 50, 2.0, 1.0), near_miss_term(0.9, 50, 2.0, 2.0));
}

TEST(FirstCollision, HeadOnMatchesDenseSweep) {
  const double xb = 4.5 + 20.0 * 1.15;
  const Trajectory a = cruise({0, 0}, 0.0, 10.0, 40);
  const Trajectory b = cruise({xb, 0}, std::numbers::pi, 10.0, 40);
  const double t_contact = first_contact_time(0.0, 10.0, xb, 10.0, 4.5);
  const int expected = static_cast<int>(std::ceil(t_contact / 0.1 - 1e-9));
  EXPECT_EQ(expected, 12);
  EXPECT_EQ(first_collision_step(a, b, kCar, kCar), expected);
}

TEST(FirstCollision, MidpointCatchesTunnelling) {
  // Closing at 90 m/s: samples straddle the contact without overlapping.
  const Trajectory a = cruise({0, 0}, 0.0, 45.0, 10);
  const Trajectory b = cruise({4.5 + 4.5 + 45.0 * 0.2 * 2, 0}, std::numbers::pi, 45.0, 10);
  const auto tc = first_collision_step(a, b, {0.5, 1.9}, {0.5, 1.9});
  ASSERT_TRUE(tc.has_value());
  const double t_contact = first_contact_time(0.0, 45.0, b.front().position.x, 45.0, 0.5);
  EXPECT_EQ(*tc, static_cast<int>(std::ceil(t_contact / 0.1 - 1e-9)));
}

TEST(FirstCollision, ParallelLanesAndImmediateContact) {
  EXPECT_FALSE(first_collision_step(cruise({0, 0}, 0, 10, 30), cruise({0, 10}, 0, 10, 30), kCar, kCar));
  EXPECT_EQ(first_collision_step(cruise({0, 0}, 0, 10, 30), cruise({1, 0.5}, 0, 10, 30), kCar, kCar), 1);
  EXPECT_THROW(first_collision_step(cruise({0, 0}, 0, 10, 30, 0.1), cruise({0, 0}, 0, 10, 6, 0.5), kCar, kCar),
               InvalidArgument);
}

TEST(FirstCollision, HorizonLimitsSearch) {
  const Trajectory a = cruise({0, 0}, 0.0, 10.0, 60);
  const Trajectory b = cruise({4.5 + 20.0 * 3.05, 0}, std::numbers::pi, 10.0, 60);
  EXPECT_EQ(first_collision_step(a, b, kCar, kCar), 31);
  EXPECT_FALSE(first_collision_step(a, b, kCar, kCar, 30));
}

TEST(Jerk, ZeroForConstantVelocityAndAcceleration) {
  EXPECT_NEAR(jerk_penalty(cruise({0, 0}, 0.7, 12, 30), {}), 0.0, 1e-9);
  Trajectory acc{0.1, {}};
  for (int k = 0; k <= 30; ++k) {
    const double t = 0.1 * k;
    acc.states.push_back({{3 * t + 0.5 * 2.0 * t * t, 0}, 0, 3 + 2 * t, t});
  }
  EXPECT_NEAR(jerk_penalty(acc, {}), 0.0, 1e-6);
  EXPECT_THROW(jerk_penalty(cruise({0, 0}, 0, 1, 2), {}), InvalidArgument);
}

TEST(Jerk, SinusoidMatchesAnalyticWithinFivePercent) {
  const double v0 = 10, amp = 2, w = 2, dt = 0.1;
  const int n = static_cast<int>(std::round(2 * std::numbers::pi / w * 2 / dt));  // two periods
  Trajectory t{dt, {}};
  for (int k = 0; k <= n; ++k) {
    const double s = dt * k;
    t.states.push_back({{v0 * s - amp / w * std::cos(w * s) + amp / w, 0}, 0, v0 + amp * std::sin(w * s), s});
  }
  double analytic = 0;
  for (int k = 0; k + 3 <= n; ++k) {
    const double mid = dt * (k + 1.5);
    analytic += std::abs(-amp * w * w * std::sin(w * mid));
  }
  analytic /= (n - 2);
  const KinematicLimits lim;
  const double j = jerk_penalty(t, lim);
  EXPECT_NEAR(j, analytic / lim.j_max, 0.05 * analytic / lim.j_max);
}

TEST(Select, CollidingCandidateWinsWhenItsScoreIsHighest) {
  const Trajectory ego = cruise({0, 0}, 0, 10, 50);
  CandidateSet set;
  // Parallel candidates at known lateral offsets; footprint gap = offset - width.
  for (double off : {4.0, 6.0, 9.0}) set.candidates.push_back({cruise({0, off}, 0, 10, 50), 0.25});
  // Head-on, contact at step 21.
  set.candidates.push_back({cruise({4.5 + 20.0 * 2.05, 0}, std::numbers::pi, 10, 50), 0.25});
  const AdversaryConfig cfg;
  const auto sel = select_adversarial(set, ego, cfg, kCar, kCar);
  ASSERT_EQ(sel.scored.size(), 4u);
  for (int i = 0; i < 3; ++i) {
    const double d = std::array{4.0, 6.0, 9.0}[i] - 1.9;
    const double expected = 0.25 * std::pow(0.9, 50) * 2.0 / (2.0 + d);
    EXPECT_NEAR(sel.scored[i].score, expected, 1e-12);
    EXPECT_FALSE(sel.scored[i].first_collision);
  }
  EXPECT_EQ(sel.scored[3].first_collision, 21);
  EXPECT_NEAR(sel.scored[3].score, 0.25 * std::pow(0.9, 20), 1e-12);
  EXPECT_EQ(sel.selected, 3u);

  // A tiny prior makes the collision lose to the closest near miss.
  set.candidates[3].prior = 1e-9;
  EXPECT_EQ(select_adversarial(set, ego, cfg, kCar, kCar).selected, 0u);
}

TEST(Select, IdenticalCandidatesPickIndexZero) {
  const Trajectory ego = cruise({0, 0}, 0, 10, 50);
  CandidateSet set;
  for (int i = 0; i < 5; ++i) set.candidates.push_back({cruise({0, 5}, 0, 10, 50), 0.2});
  EXPECT_EQ(select_adversarial(set, ego, {}, kCar, kCar).selected, 0u);
  EXPECT_THROW(select_adversarial(CandidateSet{}, ego, {}, kCar, kCar), InvalidArgument);
}

TEST(Select, TieBreakOrder) {
  ScoredCandidate a{0, 0.5, 0.2, 1.0, 3, 0, 0}, b{1, 0.5, 0.3, 1.0, 2, 0, 0};
  EXPECT_TRUE(ranks_above(b, a));  // earlier collision
  b.first_collision = 3;
  EXPECT_TRUE(ranks_above(b, a));  // higher prior
  b.prior = 0.2;
  EXPECT_TRUE(ranks_above(a, b));  // lower index
}

TEST(Select, PropertiesHoldOnRandomSets) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> tc(1, 50);
  const AdversaryConfig cfg;
  for (int trial = 0; trial < 1000; ++trial) {
    const double p = 0.01 + u(rng), j = u(rng);
    const int t = tc(rng);
    if (t > 1) {
      EXPECT_GT(score_terms(p, collision_term(t - 1, cfg.gamma), cfg.w_c, cfg.w_j, j),
                score_terms(p, collision_term(t, cfg.gamma), cfg.w_c, cfg.w_j, j));
    }
    EXPECT_GT(score_terms(p, collision_term(t, cfg.gamma), cfg.w_c, cfg.w_j, j),
              score_terms(p, collision_term(t, cfg.gamma), cfg.w_c, cfg.w_j, j + 0.01));
    const double s = score_terms(p, collision_term(t, cfg.gamma), cfg.w_c, cfg.w_j, j);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, p);
  }
}

TEST(Candidates, LeadScenarioEightDistinctWithNormalizedPriors) {
  const Scenario s = synth_scenario(ScenarioKind::straight, 0);
  const Trajectory ego = logged_trajectory(s.ego());
  AdversaryConfig cfg;
  cfg.num_candidates = 8;
  const CandidateSet set = generate_candidates(s, "lead", ego, cfg, 1);
  ASSERT_EQ(set.size(), 8u);
  double sum = 0;
  std::set<std::pair<double, double>> ends;
  for (const auto& c : set.candidates) {
    sum += c.prior;
    EXPECT_GT(c.prior, 0.0);
    EXPECT_LE(c.prior, 1.0);
    EXPECT_EQ(c.trajectory.size(), static_cast<std::size_t>(cfg.horizon) + 1);
    EXPECT_DOUBLE_EQ(c.trajectory.dt, 0.1);
    ends.insert({c.trajectory.back().position.x, c.trajectory.back().position.y});
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
  EXPECT_EQ(ends.size(), 8u);
  EXPECT_EQ(set.candidates[0].maneuver, ManeuverTemplate::log_replay);
}

TEST(Candidates, AreKinematicallyClamped) {
  const Scenario s = synth_scenario(ScenarioKind::cut_in, 3);
  const KinematicLimits lim;
  const CandidateSet set = generate_candidates(s, "side", logged_trajectory(s.ego()), {}, 5, lim);
  ASSERT_EQ(set.size(), 32u);
  for (const auto& c : set.candidates) {
    const Trajectory again = clamp_kinematics(c.trajectory, lim);
    for (std::size_t k = 0; k < again.size(); ++k)
      EXPECT_NEAR(distance(again.states[k].position, c.trajectory.states[k].position), 0.0, 1e-9);
  }
}

TEST(Candidates, LargeLambdaConcentratesOnLoggedPath) {
  const Scenario s = synth_scenario(ScenarioKind::cut_in, 2);
  AdversaryConfig cfg;
  cfg.prior_lambda = 1e6;
  const CandidateSet set = generate_candidates(s, "side", logged_trajectory(s.ego()), cfg, 0);
  double best = 0;
  for (const auto& c : set.candidates) best = std::max(best, c.prior);
  // Speed-only variants share the logged path, so they tie with the replay.
  EXPECT_NEAR(set.candidates[0].deviation, 0.0, 1e-6);
  EXPECT_DOUBLE_EQ(set.candidates[0].prior, best);
  double mass_on_path = 0;
  for (const auto& c : set.candidates) {
    if (c.deviation > 0.01) EXPECT_LT(c.prior, 1e-100);
    else mass_on_path += c.prior;
  }
  EXPECT_NEAR(mass_on_path, 1.0, 1e-9);
}

TEST(Candidates, DeterministicForFixedSeed) {
  const Scenario s = synth_scenario(ScenarioKind::merge, 1);
  const Trajectory ego = logged_trajectory(s.ego());
  const auto a = generate_candidates(s, "merger", ego, {}, 42);
  const auto b = generate_candidates(s, "merger", ego, {}, 42);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.candidates[i].trajectory.states, b.candidates[i].trajectory.states);
    EXPECT_EQ(a.candidates[i].prior, b.candidates[i].prior);
  }
}

TEST(Candidates, MoreThanLatticeSize) {
  const Scenario s = synth_scenario(ScenarioKind::straight, 4);
  AdversaryConfig cfg;
  cfg.num_candidates = 50;
  const auto set = generate_candidates(s, "lead", logged_trajectory(s.ego()), cfg, 7);
  EXPECT_EQ(set.size(), 50u);
  for (std::size_t i = 1; i < set.size(); ++i) EXPECT_NE(set.candidates[i].maneuver, ManeuverTemplate::log_replay);
}

TEST(Candidates, AbsentAdversaryRejected) {
  const Scenario s = synth_scenario(ScenarioKind::intersection, 0);
  EXPECT_THROW(generate_candidates(s, "opposing", logged_trajectory(s.ego()), {}, 0), InvalidArgument);
  EXPECT_THROW(generate_candidates(s, "ghost", logged_trajectory(s.ego()), {}, 0), InvalidArgument);
  AdversaryConfig cfg;
  cfg.num_candidates = 1;
  EXPECT_THROW(generate_candidates(s, "cross", logged_trajectory(s.ego()), cfg, 0), InvalidArgument);
}

TEST(ChooseAdversary, NearestApproachAndEmptyScene) {
  const Scenario s = synth_scenario(ScenarioKind::cut_in, 0);
  const Trajectory ego = logged_trajectory(s.ego());
  const auto id = choose_adversary(s, ego);
  ASSERT_TRUE(id);
  double best = 1e9;
  std::string best_id;
  for (const auto& a : s.agents) {
    if (a.agent_id == "ego") continue;
    for (std::size_t k = 0; k < ego.size(); ++k)
      if (const auto* st = a.at(k); st && distance(st->position, ego.states[k].position) < best) {
        best = distance(st->position, ego.states[k].position);
        best_id = a.agent_id;
      }
  }
  EXPECT_EQ(*id, best_id);

  Scenario lonely = s;
  lonely.agents.resize(1);
  EXPECT_FALSE(choose_adversary(lonely, ego));
}

TEST(Config, Validation) {
  AdversaryConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.horizon = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}
