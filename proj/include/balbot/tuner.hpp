#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "balbot/simulation.hpp"

namespace balbot {

struct TrialMetrics {
  bool fallen = false;
  double settleTimeS = 0.0;
  double oscillationAmp = 0.0;  // std of pitch over the final half
  double driftM = 0.0;          // |posX| at the end
  double peakErrorLate = 0.0;   // max |pitch - setpoint| over the final 8 s
  double firstCrossingS = -1.0; // first sign change of pitch - setpoint, -1 if none

  friend bool operator==(const TrialMetrics&, const TrialMetrics&) = default;
};

struct TuneStage {
  std::string name;
  std::size_t trials = 0;
  double chosen = 0.0;
};

struct TuneReport {
  CascadeGains gains;
  TrialMetrics metrics;
  std::size_t trialCount = 0;
  std::uint64_t seed = 0;
  std::vector<TuneStage> stages;
};

class TuneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Standard evaluation run: 5 degree initial lean, 10 s, no warmup.
inline SimConfig standardScenario() {
  SimConfig cfg = headlessConfig();
  cfg.initialPitch = 5.0 * std::numbers::pi / 180.0;
  cfg.durationS = 10.0;
  return cfg;
}

struct TunerOptions {
  // Band for settle time.
  double settleBand = std::numbers::pi / 180.0;
  // A P-only trial counts as recovered when it crosses upright this soon.
  double stage1CrossingS = 0.5;
  // Window at the end of the run checked against the engage threshold.
  double lateWindowS = 8.0;
  unsigned threads = 1;
};

namespace detail {

struct TrialRun {
  std::vector<double> pitch;
  std::vector<double> error;
  std::vector<std::int64_t> timeUs;
  double posX = 0.0;
  bool fallen = false;
};

// Runs one scenario, sampling every control period. Stops early once the
// body is down; the latched remainder is filled in without simulating it.
inline TrialRun runTrial(const SimConfig& cfg, std::optional<Disturbance> push = std::nullopt) {
  Simulation sim(cfg);
  TrialRun run;
  const auto endUs = static_cast<std::int64_t>(std::llround(cfg.durationS * 1e6));
  const auto period = cfg.controller.controlPeriodUs;
  run.pitch.reserve(static_cast<std::size_t>(endUs / period) + 1);
  bool pushed = false;
  while (sim.nowUs() < endUs) {
    if (push && !pushed && sim.nowUs() >= push->atUs) {
      sim.push(push->impulse);
      pushed = true;
    }
    if (sim.nowUs() % period == 0) {
      run.timeUs.push_back(sim.nowUs());
      run.pitch.push_back(sim.plant().pitch);
      run.error.push_back(sim.setpointError());
    }
    if (sim.plant().fallen && sim.balancer().steering == 0.0 && sim.balancer().velocity == 0.0 &&
        !sim.balancer().isBalancing)
      break;
    sim.tick();
  }
  run.fallen = sim.plant().fallen;
  run.posX = sim.plant().posX;
  if (run.fallen) {
    const double p = sim.plant().pitch;
    const double e = sim.setpointError();
    for (std::int64_t t = (sim.nowUs() / period + 1) * period; t < endUs; t += period) {
      run.timeUs.push_back(t);
      run.pitch.push_back(p);
      run.error.push_back(e);
    }
  }
  return run;
}

inline TrialMetrics summarize(const TrialRun& run, const SimConfig& cfg, const TunerOptions& opt) {
  TrialMetrics m;
  m.fallen = run.fallen;
  m.driftM = std::abs(run.posX);
  const auto endUs = static_cast<std::int64_t>(std::llround(cfg.durationS * 1e6));
  const auto warmup = cfg.controller.warmupDelayUs;

  // Start of the final stretch that stays inside the settle band.
  m.settleTimeS = 0.0;
  for (std::size_t i = run.error.size(); i-- > 0;) {
    if (std::abs(run.error[i]) >= opt.settleBand) {
      m.settleTimeS = i + 1 < run.timeUs.size() ? run.timeUs[i + 1] * 1e-6 : cfg.durationS;
      break;
    }
  }

  double sum = 0.0, sumSq = 0.0;
  std::size_t n = 0;
  const double lateStartUs = static_cast<double>(endUs) - opt.lateWindowS * 1e6;
  double prev = 0.0;
  for (std::size_t i = 0; i < run.pitch.size(); ++i) {
    const auto t = run.timeUs[i];
    if (2 * t >= endUs) {
      sum += run.pitch[i];
      sumSq += run.pitch[i] * run.pitch[i];
      ++n;
    }
    if (static_cast<double>(t) >= lateStartUs)
      m.peakErrorLate = std::max(m.peakErrorLate, std::abs(run.error[i]));
    if (t >= warmup) {
      const double e = run.error[i];
      if (m.firstCrossingS < 0.0 && prev != 0.0 && e * prev < 0.0) m.firstCrossingS = t * 1e-6;
      if (e != 0.0) prev = e;
    }
  }
  if (n > 0) {
    const double mean = sum / n;
    m.oscillationAmp = std::sqrt(std::max(0.0, sumSq / n - mean * mean));
  }
  return m;
}

}  // namespace detail

/// Simulates the scenario with the given gains and reduces it to metrics.
inline TrialMetrics evaluateGains(const CascadeGains& gains, const SimConfig& scenario,
                                  const TunerOptions& opt = {}) {
  SimConfig cfg = scenario;
  cfg.gains = gains;
  cfg.validate();
  return detail::summarize(detail::runTrial(cfg), cfg, opt);
}

/// Evaluates independent trials, possibly concurrently. Results are returned
/// in candidate order regardless of completion order.
inline std::vector<TrialMetrics> evaluateBatch(std::span<const CascadeGains> candidates,
                                               const SimConfig& scenario,
                                               const TunerOptions& opt = {}) {
  std::vector<TrialMetrics> out(candidates.size());
  const unsigned threads = std::max(1u, opt.threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < candidates.size(); ++i)
      out[i] = evaluateGains(candidates[i], scenario, opt);
    return out;
  }
  for (std::size_t base = 0; base < candidates.size(); base += threads) {
    std::vector<std::future<TrialMetrics>> jobs;
    const std::size_t end = std::min(candidates.size(), base + threads);
    for (std::size_t i = base; i < end; ++i)
      jobs.push_back(std::async(std::launch::async, [&, i] {
        return evaluateGains(candidates[i], scenario, opt);
      }));
    for (std::size_t i = base; i < end; ++i) out[i] = jobs[i - base].get();
  }
  return out;
}

/// n points spaced evenly in log10 between lo and hi inclusive.
inline std::vector<double> logGrid(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = n == 1 ? lo : std::pow(10.0, a + (b - a) * static_cast<double>(i) / (n - 1));
  return g;
}

inline std::vector<double> linearGrid(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  return g;
}

/// Staged trial-and-error search: P first, then D, then I and the outer
/// velocity loop, one coordinate at a time.
///
/// Stages 1 and 2 run with the velocity loop switched off so the angle loop
/// is tuned on its own. Stage 3 then sweeps each velocity gain over a 10x
/// band either side of its default, then the angle Ki, minimising drift among
/// candidates that stay up and keep the late pitch error inside the engage
/// window.
inline TuneReport tuneGains(const SimConfig& scenario, const TunerOptions& opt = {}) {
  TuneReport report;
  report.seed = scenario.seed;
  CascadeGains g;
  g.angle = {};
  g.velocity = {};

  auto sweep = [&](const std::vector<double>& values, auto&& apply) {
    std::vector<CascadeGains> cands;
    cands.reserve(values.size());
    for (double v : values) {
      CascadeGains c = g;
      apply(c, v);
      cands.push_back(c);
    }
    report.trialCount += cands.size();
    return evaluateBatch(cands, scenario, opt);
  };

  // Stage 1: smallest Kp that brings the body back past upright.
  const auto kpGrid = logGrid(10.0, 1e5, 32);
  const auto kpRes = sweep(kpGrid, [](CascadeGains& c, double v) { c.angle = {v, 0.0, 0.0}; });
  std::optional<double> kp;
  for (std::size_t i = 0; i < kpGrid.size() && !kp; ++i) {
    const auto& m = kpRes[i];
    if (m.firstCrossingS >= 0.0 && m.firstCrossingS <= opt.stage1CrossingS) kp = kpGrid[i];
  }
  if (!kp) throw TuneError("stage 1: no Kp recovers the initial tilt");
  g.angle.kp = *kp;
  report.stages.push_back({"angle.kp", kpGrid.size(), *kp});

  // Stage 2: Kd minimising pitch oscillation without falling.
  const auto kdGrid = linearGrid(0.0, *kp / 2.0, 32);
  const auto kdRes = sweep(kdGrid, [](CascadeGains& c, double v) { c.angle.kd = v; });
  std::optional<std::size_t> bestKd;
  for (std::size_t i = 0; i < kdGrid.size(); ++i) {
    if (kdRes[i].fallen) continue;
    if (!bestKd || kdRes[i].oscillationAmp < kdRes[*bestKd].oscillationAmp) bestKd = i;
  }
  if (!bestKd) throw TuneError("stage 2: every Kd falls");
  g.angle.kd = kdGrid[*bestKd];
  report.stages.push_back({"angle.kd", kdGrid.size(), g.angle.kd});
  TrialMetrics current = kdRes[*bestKd];

  // Stage 3: drift, subject to staying up and inside the engage window.
  const double window = scenario.controller.engageThreshold;
  auto acceptable = [&](const TrialMetrics& m) { return !m.fallen && m.peakErrorLate < window; };
  auto refine = [&](const char* name, std::vector<double> values, auto&& apply, double keep) {
    const auto res = sweep(values, apply);
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!acceptable(res[i])) continue;
      if (!best || res[i].driftM < res[*best].driftM) best = i;
    }
    double chosen = keep;
    if (best && (!acceptable(current) || res[*best].driftM < current.driftM)) {
      chosen = values[*best];
      current = res[*best];
    }
    apply(g, chosen);
    report.stages.push_back({name, values.size(), chosen});
  };

  const PidGains v0 = kDefaultVelocityGains;
  refine("velocity.kp", logGrid(v0.kp / 10.0, v0.kp * 10.0, 9),
         [](CascadeGains& c, double v) { c.velocity.kp = v; }, 0.0);
  refine("velocity.kd", logGrid(v0.kd / 10.0, v0.kd * 10.0, 9),
         [](CascadeGains& c, double v) { c.velocity.kd = v; }, 0.0);
  refine("velocity.ki", logGrid(v0.ki / 10.0, v0.ki * 10.0, 9),
         [](CascadeGains& c, double v) { c.velocity.ki = v; }, 0.0);
  std::vector<double> kiGrid{0.0};
  for (double v : logGrid(1e-3, 1e2, 16)) kiGrid.push_back(v);
  refine("angle.ki", kiGrid, [](CascadeGains& c, double v) { c.angle.ki = v; }, 0.0);

  if (!acceptable(current)) throw TuneError("stage 3: no candidate holds the engage window");
  report.gains = g;
  report.metrics = current;
  return report;
}

/// Largest impulse (rad/s) applied at `atS` after which the robot is back
/// inside the engage window and still up `windowS` later.
inline double disturbanceSweep(const CascadeGains& gains, const SimConfig& scenario,
                               double atS = 2.0, double windowS = 3.0, double tolerance = 0.01) {
  SimConfig cfg = scenario;
  cfg.gains = gains;
  cfg.durationS = atS + windowS;
  cfg.validate();
  const Disturbance base{static_cast<std::int64_t>(std::llround(atS * 1e6)), 0.0};
  const double band = cfg.controller.engageThreshold;

  auto recovers = [&](double impulse) {
    Disturbance d = base;
    d.impulse = impulse;
    const auto run = detail::runTrial(cfg, d);
    return !run.fallen && !run.error.empty() && std::abs(run.error.back()) < band;
  };

  if (!recovers(0.0)) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (recovers(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e4) return lo;
  }
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    (recovers(mid) ? lo : hi) = mid;
  }
  return lo;
}

/// Summary statistics of a recorded trace.
struct TraceSummary {
  std::size_t rows = 0;
  double durationS = 0.0;
  double pitchMean = 0.0;
  double pitchStd = 0.0;
  double pitchMaxAbs = 0.0;
  double accelMaxAbs = 0.0;
  double balancingFraction = 0.0;
  bool fallen = false;
  double fallTimeS = -1.0;
};

inline TraceSummary summarizeTrace(std::span<const TraceRow> rows) {
  TraceSummary s;
  s.rows = rows.size();
  if (rows.empty()) return s;
  s.durationS = (rows.back().timeUs - rows.front().timeUs) * 1e-6;
  double sum = 0.0, sumSq = 0.0;
  std::size_t balancing = 0;
  for (const auto& r : rows) {
    sum += r.pitch;
    sumSq += r.pitch * r.pitch;
    s.pitchMaxAbs = std::max(s.pitchMaxAbs, std::abs(r.pitch));
    s.accelMaxAbs = std::max(s.accelMaxAbs, std::abs(r.accel));
    if (r.isBalancing) ++balancing;
    if (r.fallen && !s.fallen) {
      s.fallen = true;
      s.fallTimeS = r.timeUs * 1e-6;
    }
  }
  const double n = static_cast<double>(rows.size());
  s.pitchMean = sum / n;
  s.pitchStd = std::sqrt(std::max(0.0, sumSq / n - s.pitchMean * s.pitchMean));
  s.balancingFraction = balancing / n;
  return s;
}

}  // namespace balbot
