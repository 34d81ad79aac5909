// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "advsim/advsim.hpp"

using namespace advsim;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const char* name, double limit_s, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_s) {
    o.pass = false;
    o.detail += " (runtime limit exceeded)";
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-28s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---------------------------------------------------------------------------

Trajectory wiggle(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec2 start{10.0 + 40.0 * u(rng), -8.0 + 16.0 * u(rng)};
  const double heading = std::numbers::pi * (2.0 * u(rng) - 1.0);
  const double v0 = 2.0 + 10.0 * u(rng), amp = 2.0 * u(rng), omega = 0.5 + 2.5 * u(rng);
  const double yaw = 0.3 * (2.0 * u(rng) - 1.0);
  Trajectory t{kSimDt, {{start, heading, v0, 0.0}}};
  for (int k = 1; k <= 50; ++k) {
    const double time = kSimDt * k;
    const auto& prev = t.back();
    const double h = normalize_angle(prev.heading + yaw * kSimDt);
    const double v = std::max(0.0, v0 + amp * std::sin(omega * time));
    t.states.push_back({integrate_step(prev.position, prev.heading, h, v, kSimDt), h, v, time});
  }
  return t;
}

Outcome score_suite() {
  Outcome o;
  const double hand = score_terms(0.5, collision_term(3, 0.9), 1.0, 0.5, 0.2);
  const double expected = 0.5 * 0.81 * std::exp(-0.1);
  bool ok = std::abs(hand - expected) <= 1e-9 && std::abs(hand - 0.36646) < 1e-5;
  ok = ok && std::abs(collision_term(1, 0.9) - 1.0) <= 1e-9;
  ok = ok && std::abs(score_terms(0.3, 0.2, 0.0, 0.0, 0.7) - 0.3) <= 1e-9;

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const AdversaryConfig cfg;
  const KinematicLimits lim;
  const Extent car{4.6, 1.9};
  Trajectory ego{kSimDt, {}};
  for (int k = 0; k <= 50; ++k) ego.states.push_back({{10.0 * kSimDt * k, 0.0}, 0.0, 10.0, kSimDt * k});

  int sets = 0, violations = 0, collided = 0;
  for (; sets < 10000; ++sets) {
    CandidateSet set;
    double z = 0;
    for (int i = 0; i < 8; ++i) {
      set.candidates.push_back({wiggle(rng), 0.01 + u(rng)});
      z += set.candidates.back().prior;
    }
    for (auto& c : set.candidates) c.prior /= z;
    const Selection sel = select_adversarial(set, ego, cfg, car, car, lim);

    // Selection is the ranking maximum.
    for (const auto& s : sel.scored)
      if (ranks_above(s, sel.scored[sel.selected])) ++violations;

    // Uniform prior scaling keeps the argmax.
    CandidateSet scaled = set;
    const double factor = std::exp(8.0 * u(rng) - 4.0);
    for (auto& c : scaled.candidates) c.prior *= factor;
    if (select_adversarial(scaled, ego, cfg, car, car, lim).selected != sel.selected) ++violations;

    for (std::size_t i = 0; i < sel.scored.size(); ++i) {
      const auto& s = sel.scored[i];
      // Earlier collision step scores higher at equal prior and jerk.
      if (s.first_collision) {
        ++collided;
        const double earlier = score_terms(s.prior, collision_term(std::max(1, *s.first_collision - 1), cfg.gamma), cfg.w_c,
                                           cfg.w_j, s.jerk);
        if (*s.first_collision > 1 && !(earlier > s.score)) ++violations;
        const double later = score_terms(s.prior, collision_term(*s.first_collision + 1, cfg.gamma), cfg.w_c, cfg.w_j, s.jerk);
        if (!(later < s.score)) ++violations;
      }
      // Higher jerk (tighter normalizer) scores lower; geometry is unchanged.
      if (s.jerk > 1e-6 && s.jerk < 1.0) {
        KinematicLimits tight = lim;
        tight.j_max *= 0.5;
        const auto t = adversarial_score(set.candidates[i].trajectory, s.prior, ego, cfg, car, car, tight, i);
        if (!(t.jerk > s.jerk) || !(t.score < s.score) || t.first_collision != s.first_collision) ++violations;
      }
    }
  }
  o.pass = ok && violations == 0 && collided > 1000;
  o.detail = fmt("hand=%.6f, %.0f sets, %.0f colliding candidates, %.0f violations", hand, sets, collided, violations);
  return o;
}

// ---------------------------------------------------------------------------

Outcome flow_kernel() {
  using namespace flow;
  const Schedule sched = Schedule::cosine();
  double worst_vp = 0;
  for (std::size_t t = 0; t < sched.size(); ++t)
    worst_vp = std::max(worst_vp, std::abs(sched.alpha(t) * sched.alpha(t) + sched.sigma(t) * sched.sigma(t) - 1.0));

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0, 3);
  std::uniform_int_distribution<std::size_t> step(0, sched.size() - 1);
  double worst_inv = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t t = step(rng);
    const double a = sched.alpha(t), s = sched.sigma(t), xt = n(rng), v = n(rng);
    const double det = a * a + s * s;
    const double x0 = (a * xt - s * v) / det, xT = (s * xt + a * v) / det;
    const double got = v_dm_to_v_fm(sched, t, std::vector<double>{xt}, std::vector<double>{v})[0];
    worst_inv = std::max(worst_inv, std::abs(got - (x0 - xT)));
  }

  const std::vector<double> mu{3.0, -1.0};
  const std::vector<std::size_t> steps{5, 10, 20, 50, 100};
  const auto rows = gaussian_step_sweep(mu, 0.5, steps, 10000, 42);
  const auto& last = rows.back();
  bool monotone = true;
  for (std::size_t i = 1; i < rows.size(); ++i) monotone = monotone && rows[i].transport_error < rows[i - 1].transport_error;

  Outcome o;
  o.pass = worst_vp <= 1e-9 && worst_inv <= 1e-12 && last.mean_error <= 0.05 && last.std_error <= 0.05 && monotone;
  o.detail = fmt("(a) %.1e (b) %.1e (c) mean err %.4f std err %.4f", worst_vp, worst_inv, last.mean_error, last.std_error);
  o.detail += " (d) endpoint err";
  for (const auto& r : rows) o.detail += fmt(" %.4f", r.transport_error);
  o.detail += monotone ? " decreasing" : " NOT decreasing";
  return o;
}

// ---------------------------------------------------------------------------

std::vector<Scenario> data_scenarios() {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(fs::path(ADVSIM_DATA_DIR) / "scenarios"))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Scenario> out;
  for (const auto& f : files) out.push_back(load_scenario(f.string()));
  return out;
}

BatchResult table_batch;

Outcome table_iii() {
  const auto scenarios = data_scenarios();
  HarnessConfig cfg;
  table_batch = run_batch(scenarios, planner_factory(PlannerKind::idm, cfg), "idm", cfg, {0, 1, 2});
  const auto& s = table_batch.summary;
  const double ds_drop = s.without_adv.ds - s.with_adv.ds;
  const double sc_drop = s.without_adv.sc - s.with_adv.sc;
  Outcome o;
  o.pass = scenarios.size() >= 20 && table_batch.failures.empty() && table_batch.epochs.size() == scenarios.size() * 3 &&
           s.with_adv.ds < s.without_adv.ds && s.with_adv.sc < s.without_adv.sc && ds_drop >= 0.15 && sc_drop >= 0.2;
  o.detail = fmt("DS %.3f -> %.3f (drop %.3f), SC %.3f", s.without_adv.ds, s.with_adv.ds, ds_drop, s.without_adv.sc);
  o.detail += fmt(" -> %.3f (drop %.3f), %.0f epochs", s.with_adv.sc, sc_drop, static_cast<double>(table_batch.epochs.size()));
  return o;
}

// ---------------------------------------------------------------------------

Outcome metric_identities() {
  const MetricWeights w;
  const double hand = pdms_score(1, 1, 0.5, 1, 1, w);
  bool ok = std::abs(hand - 9.5 / 12.0) <= 1e-9;

  // Randomized frames: random ego and agent placements on a short road.
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MapData map;
  map.lanes = {{{0, 0}, {60, 0}}};
  map.drivable_area = {{{-5, -4}, {65, -4}, {65, 4}, {-5, 4}}};
  const Polyline route{{0, 0}, {60, 0}};
  int frames = 0, penalized = 0, bad = 0;
  for (; frames < 10000; ++frames) {
    const VehicleState prev{{20 * u(rng), 10 * u(rng) - 5}, u(rng) - 0.5, 10 * u(rng), 0.0};
    VehicleState ego = prev;
    ego.position += unit_from_angle(prev.heading) * (prev.speed * kSimDt);
    ego.speed = std::max(0.0, prev.speed + 20 * u(rng) - 10);
    ego.time = kSimDt;
    const std::vector<VehicleState> hist{prev, ego};
    const std::vector<AgentSnapshot> agents{{"a", {4.6, 1.9}, {{20 * u(rng), 10 * u(rng) - 5}, 6 * u(rng) - 3, 10 * u(rng), kSimDt}}};
    FrameInput in;
    in.ego = ego;
    in.ego_history = hist;
    in.agents = agents;
    in.map = &map;
    in.route = route;
    in.logged_prev = prev;
    VehicleState logged = prev;
    logged.position.x += 1.0;
    in.logged_now = logged;
    const FrameMetrics f = frame_metrics(in, w);
    if (f.nc * f.dac == 0) {
      ++penalized;
      if (f.pdms != 0.0) ++bad;
    }
  }
  double worst = 0;
  std::size_t reports = 0;
  for (const auto& e : table_batch.epochs)
    for (const SliceReport* r : {&e.episode1, &e.episode2}) {
      worst = std::max(worst, std::abs(r->ds - r->pdms_avg * r->rc));
      ++reports;
    }
  Outcome o;
  o.pass = ok && bad == 0 && penalized > 1000 && reports > 0 && worst <= 1e-9;
  o.detail = fmt("hand=%.6f, %.0f/%.0f penalized frames nonzero", hand, bad, penalized);
  o.detail += fmt(", max |ds - pdms*rc| = %.1e over %.0f reports", worst, static_cast<double>(reports));
  return o;
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "advsim_acceptance";
  fs::create_directories(dir);
  const std::string scenario = (fs::path(ADVSIM_DATA_DIR) / "scenarios" / "cut_in_0.json").string();
  std::string bytes[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path out = dir / ("run" + std::to_string(i) + ".jsonl");
    const std::string cmd = std::string(ADVSIM_CLI_PATH) + " run --scenario " + scenario +
                            " --planner idm --seed 42 --out " + out.string();
    if (std::system(cmd.c_str()) != 0) return {false, "CLI run failed"};
    bytes[i] = slurp(out);
  }
  Outcome o;
  o.pass = !bytes[0].empty() && bytes[0] == bytes[1];
  o.detail = std::to_string(bytes[0].size()) + " bytes, " + (o.pass ? "identical" : "DIFFER");
  return o;
}

// ---------------------------------------------------------------------------

bool in_box(double px, double py, const VehicleState& s, const Extent& e, double pad) {
  const double dx = px - s.position.x, dy = py - s.position.y;
  const double c = std::cos(s.heading), sn = std::sin(s.heading);
  return std::abs(c * dx + sn * dy) <= e.length / 2 + pad && std::abs(-sn * dx + c * dy) <= e.width / 2 + pad;
}

bool raster_hit(const VehicleState& a, const Extent& ea, const VehicleState& b, const Extent& eb, double pad) {
  const double ra = std::hypot(ea.length, ea.width) / 2 + std::abs(pad);
  const double rb = std::hypot(eb.length, eb.width) / 2 + std::abs(pad);
  const double x0 = std::max(a.position.x - ra, b.position.x - rb), x1 = std::min(a.position.x + ra, b.position.x + rb);
  const double y0 = std::max(a.position.y - ra, b.position.y - rb), y1 = std::min(a.position.y + ra, b.position.y + rb);
  constexpr double h = 0.01;
  for (double x = std::floor(x0 / h) * h; x <= x1; x += h)
    for (double y = std::floor(y0 / h) * h; y <= y1; y += h)
      if (in_box(x, y, a, ea, pad) && in_box(x, y, b, eb, pad)) return true;
  return false;
}

bool ray_cast(const Polygon& poly, Vec2 p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y)) inside = !inside;
  }
  return inside;
}

Outcome geometry_oracles() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(-3.5, 3.5), ang(-std::numbers::pi, std::numbers::pi), len(1.0, 5.0), wid(0.8, 2.2);
  int checked = 0, obb_bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const VehicleState a{{pos(rng), pos(rng)}, ang(rng), 0, 0}, b{{pos(rng), pos(rng)}, ang(rng), 0, 0};
    const Extent ea{len(rng), wid(rng)}, eb{len(rng), wid(rng)};
    const bool in = raster_hit(a, ea, b, eb, -0.01);
    const bool out = !raster_hit(a, ea, b, eb, 0.01);
    if (in == out) continue;  // within the contact band
    ++checked;
    if (obb_overlap(footprint(a, ea), footprint(b, eb)) != in) ++obb_bad;
  }

  const Scenario s = synth_scenario(ScenarioKind::merge, 0);
  double lo_x = 1e9, hi_x = -1e9, lo_y = 1e9, hi_y = -1e9;
  for (const auto& poly : s.map.drivable_area)
    for (const auto& p : poly) {
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
  std::uniform_real_distribution<double> ux(lo_x - 5, hi_x + 5), uy(lo_y - 5, hi_y + 5);
  int pip_bad = 0, inside = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vec2 p{ux(rng), uy(rng)};
    bool oracle = false;
    for (const auto& poly : s.map.drivable_area) oracle = oracle || ray_cast(poly, p);
    inside += oracle;
    if (point_in_drivable(s.map, p) != oracle) ++pip_bad;
  }
  Outcome o;
  o.pass = obb_bad == 0 && checked > 9000 && pip_bad == 0 && inside > 50;
  o.detail = fmt("obb: %.0f/%.0f disagree; point_in_drivable: %.0f/1000 disagree (%.0f inside)", obb_bad, checked, pip_bad, inside);
  return o;
}

}  // namespace

int main() {
  report("adversarial score suite", 10, score_suite);
  report("flow-matching kernel", 120, flow_kernel);
  report("table III direction", 600, table_iii);
  report("metric identities", 60, metric_identities);
  report("determinism", 60, determinism);
  report("geometry oracles", 120, geometry_oracles);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
