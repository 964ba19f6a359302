// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any
// fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "balbot/balbot.hpp"
#include "balbot/service.hpp"
#include "oracle/pid_recurrence.hpp"
#include "service_client.hpp"

namespace {

using namespace balbot;
using Clock = std::chrono::steady_clock;

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Tuned once, shared by the closed-loop criteria.
const TuneReport& tuned() {
  static const TuneReport r = tuneGains(standardScenario());
  return r;
}

Outcome pidOracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240501);
  std::uniform_real_distribution<double> value(-1.0, 1.0), dt(1e-4, 1e-2), gain(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const PidGains g{1150.0 * gain(rng), 157.5 * gain(rng), 0.12 * gain(rng)};
    const double target = value(rng);
    std::vector<double> vs(1000), dts(1000);
    for (std::size_t i = 0; i < vs.size(); ++i) {
      vs[i] = value(rng);
      dts[i] = dt(rng);
    }
    const auto ref = oracle::pidOutputs(g.kp, g.kd, g.ki, target, vs, dts);
    PidState s;
    s.target = target;
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const double got = pidGetControl(s, g, vs[i], dts[i]);
      worst = std::max(worst, std::abs(got - ref[i]) / std::max(1.0, std::abs(ref[i])));
    }
  }
  const double t = seconds(start);
  return {worst <= 1e-9 && t < 1.0, fmt("max rel err %.3g, %.3f s", worst, t)};
}

Outcome pidVectors() {
  PidState fresh;
  fresh.target = 0.25;
  const double zero = pidGetControl(fresh, kDefaultAngleGains, 0.25, 0.001);
  PidState s;
  const double a = pidGetControl(s, kDefaultAngleGains, -0.01, 0.001);
  const double b = pidGetControl(s, kDefaultAngleGains, -0.02, 0.001);
  const bool ok = std::abs(a - 11.5000012) <= 1e-9 && std::abs(b - 1598.0000036) <= 1e-9 &&
                  std::abs(zero) <= 1e-9;
  return {ok, fmt("%.10f, %.10f, %.10f", a, b, zero)};
}

Outcome tickFormula() {
  const StepperConfig cfg;
  bool ok = true;
  std::string detail;
  for (double v : {0.01, 0.1, 1.0, kPi, 2 * kPi, 10.0, 50.0}) {
    const auto raw = static_cast<std::int64_t>(std::floor(2 * kPi * 50000 / (v * 1600))) - 1;
    const auto expected = static_cast<std::uint64_t>(std::max<std::int64_t>(raw, 2));
    const auto got = ticksPerPulse(v, cfg);
    ok = ok && got && *got == expected;
    detail += fmt("%g->%llu ", v, got ? static_cast<unsigned long long>(*got) : 0ull);
  }
  ok = ok && *ticksPerPulse(2 * kPi, cfg) == 30 && *ticksPerPulse(kPi, cfg) == 61 &&
       !ticksPerPulse(0.0, cfg);
  return {ok, detail};
}

Outcome openLoop() {
  const auto start = Clock::now();
  SimConfig cfg;  // faithful 5 s warmup
  cfg.realtime = false;
  cfg.gains = {PidGains{}, PidGains{}};
  cfg.initialPitch = 5 * kDeg;
  Simulation sim(cfg);
  const std::int64_t deadline = cfg.controller.warmupDelayUs + 2'000'000;
  sim.runUntil(deadline, [](const Simulation& s) { return s.plant().fallen; });
  const bool fell = sim.plant().fallen;
  const double fallAfterWarmup = (sim.nowUs() - cfg.controller.warmupDelayUs) * 1e-6;

  cfg.initialPitch = 0.0;
  cfg.durationS = 10.0;
  bool upright = true;
  for (const auto& r : runSimulation(cfg).rows) upright = upright && r.pitch == 0.0;
  const double t = seconds(start);
  return {fell && upright && t < 5.0,
          fmt("fell %.3f s after warmup, upright held=%d, %.2f s", fallAfterWarmup, upright, t)};
}

Outcome closedLoop() {
  SimConfig cfg = standardScenario();
  cfg.gains = tuned().gains;
  const auto start = Clock::now();
  const auto trace = runSimulation(cfg);
  const double wall = seconds(start);
  double worst = 0.0;
  bool fallen = false;
  for (const auto& r : trace.rows) {
    fallen = fallen || r.fallen;
    if (r.timeUs >= 2'000'000)
      worst = std::max(worst, std::abs(r.pitch - cfg.imuAxisSign * r.targetAngle));
  }
  return {!fallen && worst < kPi / 18 && wall < 10.0,
          fmt("max late |err| %.4f rad, %.2f s wall", worst, wall)};
}

Outcome qualitative() {
  const TuneReport& r = tuned();
  SimConfig five = standardScenario();
  five.durationS = 5.0;
  CascadeGains soft = r.gains;
  soft.angle.kp *= 0.05;
  const bool softFalls = evaluateGains(soft, five).fallen;
  CascadeGains stiff = r.gains;
  stiff.angle.kp *= 10.0;
  stiff.angle.kd = 0.0;
  const TrialMetrics m = evaluateGains(stiff, standardScenario());
  const bool oscillates = m.fallen || m.oscillationAmp >= 2.0 * r.metrics.oscillationAmp;
  return {softFalls && oscillates,
          fmt("Kp*0.05 fallen=%d; Kp*10,Kd=0 fallen=%d osc %.4g vs %.4g", softFalls, m.fallen,
              m.oscillationAmp, r.metrics.oscillationAmp)};
}

Outcome disturbance() {
  const CascadeGains g = tuned().gains;
  const SimConfig scenario = standardScenario();
  const double max = disturbanceSweep(g, scenario);
  SimConfig cfg = scenario;
  cfg.gains = g;
  cfg.durationS = 5.0;
  const std::vector<Disturbance> push{{2'000'000, 2.0 * max}};
  const bool fell = runSimulation(cfg, {}, push).rows.back().fallen;
  return {max > 0.0 && fell, fmt("max impulse %.4f rad/s, 2x fallen=%d", max, fell)};
}

Outcome protocol() {
  bool grid = true;
  int count = 0;
  for (int i = -40; i <= 40; ++i)
    for (int j = -20; j <= 20; ++j, ++count) {
      const MoveCommand cmd{0.25 * i, 0.25 * j};
      const auto parsed = parseMove(formatMove(cmd));
      const auto* back = std::get_if<MoveCommand>(&parsed);
      grid = grid && back && *back == cmd && formatEcho(*back) == "x" + formatMove(cmd).substr(3);
    }
  const bool keepAlive = std::holds_alternative<Ignored>(parseMove("xxxxx"));

  Service::Options opt;
  opt.tcpPort = 0;
  opt.wsPort = 0;
  SimConfig cfg = headlessConfig();
  cfg.gains = tuned().gains;
  Service svc(cfg, opt);
  svc.start();
  bool alive = false;
  try {
    testing_client::LineClient c(svc.tcpPort());
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> byte(1, 255), len(0, 40);
    std::string batch;
    for (int i = 0; i < 10'000; ++i) {
      std::string line = i % 2 ? "mov" : "";
      for (int k = len(rng); k > 0; --k) {
        const char ch = static_cast<char>(byte(rng));
        line += ch == '\n' ? ' ' : ch;
      }
      batch += line + '\n';
    }
    c.sendRaw(batch);
    c.send("mov1.00,0.00");
    alive = c.reply("x1.00,0.00") == "x1.00,0.00";
    testing_client::LineClient fresh(svc.tcpPort());
    fresh.send("mov-1.00,0.50");
    alive = alive && fresh.reply() == "x-1.00,0.50";
  } catch (const std::exception&) {
    alive = false;
  }
  svc.stop();
  return {grid && keepAlive && alive,
          fmt("%d grid points ok=%d, keep-alive ignored=%d, service alive after fuzz=%d", count,
              grid, keepAlive, alive)};
}

Outcome determinism() {
  SimConfig cfg = standardScenario();
  cfg.gains = tuned().gains;
  const std::vector<TimedCommand> cmds{{1'000'000, "mov1.00,0.50"}, {3'000'000, "mov0,0"}};
  auto csv = [&] {
    std::ostringstream os;
    writeTraceCsv(os, runSimulation(cfg, cmds).rows);
    return os.str();
  };
  const std::string a = csv(), b = csv();
  return {a == b && !a.empty(), fmt("%zu bytes, identical=%d", a.size(), a == b)};
}

Outcome calibration() {
  ImuConfig cfg;
  cfg.noiseSigma = 0.002;
  cfg.pitchBias = 0.04;
  const std::size_t n = 1000;
  const double bound = 4.0 * cfg.noiseSigma / std::sqrt(static_cast<double>(n));
  int within = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    cfg.seed = seed;
    ImuModel imu(cfg);
    std::vector<SensorReading> readings;
    for (std::int64_t t = 0; readings.size() < n; t += 20)
      if (auto r = imu.sample(PlantState{}, t)) readings.push_back(*r);
    if (std::abs(calibrate(readings) - cfg.pitchBias) <= bound) ++within;
  }
  return {within >= 99, fmt("%d/100 within %.3g rad", within, bound)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"pid oracle equivalence", pidOracle},
      {"pid hand vectors", pidVectors},
      {"tick formula", tickFormula},
      {"open-loop instability", openLoop},
      {"closed-loop stabilization", closedLoop},
      {"detuned gains fall or oscillate", qualitative},
      {"disturbance recovery threshold", disturbance},
      {"protocol grid and fuzz", protocol},
      {"determinism", determinism},
      {"calibration bound", calibration},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
