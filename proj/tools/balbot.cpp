// Headless experimentation front end: simulate, tune, sweep, replay.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "balbot/balbot.hpp"

namespace {

using namespace balbot;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void addCommon(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Noise seed (overrides the config)");
  sub->add_option("--out", c.out, "Output path (default: stdout)");
}

SimConfig resolve(const Common& c, SimConfig base) {
  SimConfig cfg = c.config.empty() ? base : loadConfig(c.config, base);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

// "<seconds> <line>" per row; blank lines and '#' comments skipped.
std::vector<TimedCommand> loadCommands(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<TimedCommand> cmds;
  std::string row;
  while (std::getline(in, row)) {
    if (row.empty() || row.front() == '#') continue;
    std::istringstream is(row);
    double t = 0.0;
    std::string line;
    if (!(is >> t >> line)) throw std::runtime_error("bad command row: " + row);
    cmds.push_back({static_cast<std::int64_t>(std::llround(t * 1e6)), line});
  }
  return cmds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-balancing robot simulator and gain tuner"};
  app.require_subcommand(1);

  Common simOpt, tuneOpt, sweepOpt, replayOpt;

  auto* simulate = app.add_subcommand("simulate", "Run one headless simulation and write the CSV trace");
  addCommon(simulate, simOpt);
  std::optional<double> duration, initialPitch;
  std::string commandsPath, report;
  std::vector<std::string> pushes;
  simulate->add_option("--duration", duration, "Simulated seconds");
  simulate->add_option("--initial-pitch", initialPitch, "Initial pitch, rad");
  simulate->add_option("--commands", commandsPath, "File of '<seconds> <line>' command rows")
      ->check(CLI::ExistingFile);
  simulate->add_option("--push", pushes, "Disturbance '<seconds>:<impulse rad/s>'");
  simulate->add_option("--gains", report, "Take gains from a tune report JSON")
      ->check(CLI::ExistingFile);

  auto* tune = app.add_subcommand("tune", "Staged P/D/I gain search; writes a JSON report");
  addCommon(tune, tuneOpt);
  unsigned threads = 1;
  tune->add_option("--threads", threads, "Concurrent trials")->check(CLI::Range(1u, 256u));

  auto* sweep = app.add_subcommand("sweep", "Bisect the largest recoverable impulse");
  addCommon(sweep, sweepOpt);
  std::string sweepGains;
  double atS = 2.0, windowS = 3.0;
  sweep->add_option("--gains", sweepGains, "Take gains from a tune report JSON")
      ->check(CLI::ExistingFile);
  sweep->add_option("--at", atS, "Impulse time, s");
  sweep->add_option("--window", windowS, "Recovery window, s");

  auto* replay = app.add_subcommand("replay", "Summarise a CSV trace");
  addCommon(replay, replayOpt);
  std::string tracePath;
  replay->add_option("trace", tracePath, "CSV trace")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  auto gainsFrom = [](const std::string& path) {
    std::ifstream in(path);
    return nlohmann::json::parse(in).at("gains").get<CascadeGains>();
  };

  try {
    if (*simulate) {
      SimConfig cfg = resolve(simOpt, headlessConfig());
      if (duration) cfg.durationS = *duration;
      if (initialPitch) cfg.initialPitch = *initialPitch;
      if (!report.empty()) cfg.gains = gainsFrom(report);
      cfg.validate();
      const auto cmds = commandsPath.empty() ? std::vector<TimedCommand>{} : loadCommands(commandsPath);
      std::vector<Disturbance> dist;
      for (const auto& p : pushes) {
        const auto colon = p.find(':');
        if (colon == std::string::npos) throw std::runtime_error("--push expects t:impulse");
        dist.push_back({std::llround(std::stod(p.substr(0, colon)) * 1e6), std::stod(p.substr(colon + 1))});
      }
      const auto trace = runSimulation(cfg, cmds, dist);
      for (const auto& e : trace.protocolErrors) std::cerr << "err " << e << "\n";
      std::ostringstream os;
      writeTraceCsv(os, trace.rows);
      emit(simOpt.out, os.str());
    } else if (*tune) {
      const SimConfig scenario = resolve(tuneOpt, standardScenario());
      TunerOptions opt;
      opt.threads = threads;
      const TuneReport r = tuneGains(scenario, opt);
      emit(tuneOpt.out, nlohmann::json(r).dump(2) + "\n");
    } else if (*sweep) {
      SimConfig scenario = resolve(sweepOpt, standardScenario());
      if (!sweepGains.empty()) scenario.gains = gainsFrom(sweepGains);
      const double maxImpulse = disturbanceSweep(scenario.gains, scenario, atS, windowS);
      nlohmann::ordered_json j;
      j["gains"] = nlohmann::ordered_json::parse(nlohmann::json(scenario.gains).dump());
      j["atS"] = atS;
      j["windowS"] = windowS;
      j["noiseSigma"] = scenario.imu.noiseSigma;
      j["maxImpulse"] = maxImpulse;
      emit(sweepOpt.out, j.dump(2) + "\n");
    } else if (*replay) {
      std::ifstream in(tracePath);
      const auto rows = readTraceCsv(in);
      const TraceSummary s = summarizeTrace(rows);
      nlohmann::ordered_json j;
      j["rows"] = s.rows;
      j["durationS"] = s.durationS;
      j["pitchMean"] = s.pitchMean;
      j["pitchStd"] = s.pitchStd;
      j["pitchMaxAbs"] = s.pitchMaxAbs;
      j["accelMaxAbs"] = s.accelMaxAbs;
      j["balancingFraction"] = s.balancingFraction;
      j["fallen"] = s.fallen;
      j["fallTimeS"] = s.fallTimeS;
      emit(replayOpt.out, j.dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    std::cerr << "balbot: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
