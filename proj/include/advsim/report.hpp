#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "advsim/config.hpp"
#include "advsim/error.hpp"
#include "advsim/harness.hpp"
#include "advsim/metrics.hpp"
#include "json.hpp"

namespace advsim {

inline constexpr const char* kAggregationNote = "batch DS is the mean of per-slice DS (pdms_avg * rc per slice)";

// ---------------------------------------------------------------------------
// JSON Lines records

inline nlohmann::json slice_to_json(const SliceReport& r) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : r.frames)
    frames.push_back({{"nc", f.nc}, {"dac", f.dac}, {"ttc", f.ttc}, {"c", f.comfort}, {"ep", f.ep}, {"pdms", f.pdms}});
  return {{"seed", r.seed},
          {"terminated", to_string(r.terminated)},
          {"pdms_avg", r.pdms_avg},
          {"rc", r.rc},
          {"ds", r.ds},
          {"final_arclength", r.final_arclength},
          {"frames", std::move(frames)}};
}

inline SliceReport slice_from_json(const nlohmann::json& j) {
  SliceReport r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.terminated = parse_termination(j.at("terminated").get<std::string>());
  r.pdms_avg = j.at("pdms_avg").get<double>();
  r.rc = j.at("rc").get<double>();
  r.ds = j.at("ds").get<double>();
  r.final_arclength = j.at("final_arclength").get<double>();
  for (const auto& f : j.at("frames"))
    r.frames.push_back({f.at("nc").get<int>(), f.at("dac").get<int>(), f.at("ttc").get<int>(), f.at("c").get<int>(),
                        f.at("ep").get<double>(), f.at("pdms").get<double>()});
  return r;
}

inline nlohmann::json epoch_to_json(const EpochResult& e, const HarnessConfig& cfg) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : e.adversary.scored) {
    nlohmann::json jc = {{"index", c.index},
                         {"score", c.score},
                         {"prior", c.prior},
                         {"collision_term", c.collision_term},
                         {"first_collision", c.first_collision ? nlohmann::json(*c.first_collision) : nlohmann::json()},
                         {"jerk", c.jerk},
                         {"min_distance", c.min_distance}};
    if (c.index < e.adversary.maneuvers.size()) jc["maneuver"] = e.adversary.maneuvers[c.index];
    cands.push_back(std::move(jc));
  }
  return {{"type", "epoch"},
          {"scenario_id", e.scenario_id},
          {"planner", e.planner},
          {"seed", e.seed},
          {"deterministic", e.deterministic},
          {"config", config_to_json(cfg)},
          {"aggregation", kAggregationNote},
          {"episode1", slice_to_json(e.episode1)},
          {"episode2", slice_to_json(e.episode2)},
          {"adversary",
           {{"enabled", e.adversary.enabled},
            {"available", e.adversary.available},
            {"overridden", e.adversary.overridden},
            {"agent_id", e.adversary.agent_id},
            {"selected", e.adversary.selected},
            {"candidates", std::move(cands)}}},
          {"deltas", {{"pdms", e.deltas.pdms}, {"rc", e.deltas.rc}, {"ds", e.deltas.ds}}}};
}

inline EpochResult epoch_from_json(const nlohmann::json& j) {
  if (j.value("type", std::string()) != "epoch") throw ParseError("report: not an epoch record");
  EpochResult e;
  try {
    e.scenario_id = j.at("scenario_id").get<std::string>();
    e.planner = j.at("planner").get<std::string>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.deterministic = j.at("deterministic").get<bool>();
    e.episode1 = slice_from_json(j.at("episode1"));
    e.episode2 = slice_from_json(j.at("episode2"));
    const auto& a = j.at("adversary");
    e.adversary.enabled = a.at("enabled").get<bool>();
    e.adversary.available = a.at("available").get<bool>();
    e.adversary.overridden = a.at("overridden").get<bool>();
    e.adversary.agent_id = a.at("agent_id").get<std::string>();
    e.adversary.selected = a.at("selected").get<std::size_t>();
    for (const auto& c : a.at("candidates")) {
      ScoredCandidate s;
      s.index = c.at("index").get<std::size_t>();
      s.score = c.at("score").get<double>();
      s.prior = c.at("prior").get<double>();
      s.collision_term = c.at("collision_term").get<double>();
      if (!c.at("first_collision").is_null()) s.first_collision = c.at("first_collision").get<int>();
      s.jerk = c.at("jerk").get<double>();
      s.min_distance = c.at("min_distance").get<double>();
      e.adversary.scored.push_back(s);
      if (c.contains("maneuver")) e.adversary.maneuvers.push_back(c.at("maneuver").get<std::string>());
    }
    const auto& d = j.at("deltas");
    e.deltas = {d.at("pdms").get<double>(), d.at("rc").get<double>(), d.at("ds").get<double>()};
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("report: malformed epoch record: ") + ex.what());
  }
  return e;
}

inline nlohmann::json failure_to_json(const EpochFailure& f) {
  return {{"type", "failure"}, {"scenario_id", f.scenario_id}, {"planner", f.planner}, {"seed", f.seed}, {"error", f.error}};
}

inline EpochFailure failure_from_json(const nlohmann::json& j) {
  try {
    return {j.at("scenario_id").get<std::string>(), j.at("planner").get<std::string>(), j.at("seed").get<std::uint64_t>(),
            j.at("error").get<std::string>()};
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("report: malformed failure record: ") + ex.what());
  }
}

inline void write_jsonl(std::ostream& out, const nlohmann::json& record) { out << record.dump() << '\n'; }

struct ReportFile {
  std::vector<EpochResult> epochs;
  std::vector<EpochFailure> failures;
  std::vector<nlohmann::json> raw;  // epoch records as read, same order as `epochs`
};

inline ReportFile read_jsonl(std::istream& in) {
  ReportFile file;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ParseError("report: malformed JSON on line " + std::to_string(lineno));
    }
    const auto type = j.value("type", std::string());
    if (type == "epoch") {
      file.epochs.push_back(epoch_from_json(j));
      file.raw.push_back(std::move(j));
    } else if (type == "failure") {
      file.failures.push_back(failure_from_json(j));
    } else {
      throw ParseError("report: unknown record type on line " + std::to_string(lineno));
    }
  }
  return file;
}

inline ReportFile read_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open report file: " + path);
  return read_jsonl(in);
}

// ---------------------------------------------------------------------------
// Re-scoring with different metric weights

inline void rescore_slice(SliceReport& r, const MetricWeights& w) {
  if (r.frames.empty()) return;
  double sum = 0.0;
  for (auto& f : r.frames) {
    recompute_pdms(f, w);
    sum += f.pdms;
  }
  r.pdms_avg = sum / static_cast<double>(r.frames.size());
  r.ds = r.pdms_avg * r.rc;
}

inline void rescore_epoch(EpochResult& e, const MetricWeights& w) {
  w.validate();
  rescore_slice(e.episode1, w);
  rescore_slice(e.episode2, w);
  e.deltas = {e.episode1.pdms_avg - e.episode2.pdms_avg, e.episode1.rc - e.episode2.rc, e.episode1.ds - e.episode2.ds};
}

// ---------------------------------------------------------------------------
// Batch summary: CSV and aligned table

namespace detail {

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::vector<std::string> summary_cells(const ConditionSummary& c) {
  return {fixed3(c.nc), fixed3(c.dac), fixed3(c.ttc), fixed3(c.comfort), fixed3(c.ep),
          fixed3(c.pdms), fixed3(c.rc), fixed3(c.ds), fixed3(c.sc)};
}

}  // namespace detail

inline void write_summary_csv(std::ostream& out, const BatchSummary& s) {
  out << "planner,condition,slices,nc,dac,ttc,c,ep,pdms,rc,ds,sc\n";
  auto row = [&](const char* cond, const ConditionSummary& c) {
    out << s.planner << ',' << cond << ',' << c.slices;
    for (const auto& cell : detail::summary_cells(c)) out << ',' << cell;
    out << '\n';
  };
  row("without_adv", s.without_adv);
  row("with_adv", s.with_adv);
}

inline void write_summary_table(std::ostream& out, const BatchSummary& s) {
  const std::vector<std::string> header{"Method", "Adv", "NC", "DAC", "TTC", "C", "EP", "PDMS", "RC", "DS", "SC"};
  std::vector<std::vector<std::string>> rows;
  auto add = [&](const char* adv, const ConditionSummary& c) {
    std::vector<std::string> r{s.planner, adv};
    for (auto& cell : detail::summary_cells(c)) r.push_back(std::move(cell));
    rows.push_back(std::move(r));
  };
  add("w/o", s.without_adv);
  add("w/", s.with_adv);
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    width[i] = header[i].size();
    for (const auto& r : rows) width[i] = std::max(width[i], r[i].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out << "  ";
      // Text columns left-aligned, numbers right-aligned.
      if (i < 2) out << cells[i] << std::string(width[i] - cells[i].size(), ' ');
      else out << std::string(width[i] - cells[i].size(), ' ') << cells[i];
    }
    out << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
  out << "epochs: " << s.epochs << "  failures: " << s.failures << "  (" << kAggregationNote << ")\n";
}

}  // namespace advsim
