// Live simulation service: TCP line protocol plus WebSocket for browser clients.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "balbot/config.hpp"
#include "balbot/service.hpp"

namespace {
std::atomic<bool> interrupted{false};
}

int main(int argc, char** argv) {
  using namespace balbot;

  CLI::App app{"Self-balancing robot simulation service"};
  std::string configPath, tracePath;
  unsigned short tcpPort = 7777, wsPort = 7778;
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;
  bool realtime = false, fast = false;
  app.add_option("--config", configPath, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--tcp-port", tcpPort, "TCP line-protocol port");
  app.add_option("--ws-port", wsPort, "WebSocket port");
  auto* rt = app.add_flag("--realtime", realtime, "Lock simulated time to wall time (default)");
  app.add_flag("--fast", fast, "Run as fast as possible")->excludes(rt);
  app.add_option("--duration", duration, "Stop after this many simulated seconds");
  app.add_option("--trace-out", tracePath, "Write the full-resolution CSV trace here");
  app.add_option("--seed", seed, "Noise seed (overrides the config)");
  CLI11_PARSE(app, argc, argv);

  try {
    SimConfig cfg = configPath.empty() ? SimConfig{} : loadConfig(configPath);
    if (seed) cfg.seed = *seed;
    if (realtime) cfg.realtime = true;
    if (fast) cfg.realtime = false;

    std::ofstream trace;
    Service::Options opt;
    opt.tcpPort = tcpPort;
    opt.wsPort = wsPort;
    opt.durationS = duration;
    if (!tracePath.empty()) {
      trace.open(tracePath);
      if (!trace) throw std::runtime_error("cannot write " + tracePath);
      trace << kTraceHeader << '\n';
      opt.trace = [&trace](const TraceRow& r) { writeTraceRow(trace, r); };
    }

    Service svc(cfg, opt);
    svc.start();
    std::cerr << "balbot-service: tcp " << svc.tcpPort() << ", ws " << svc.wsPort()
              << (cfg.realtime ? ", realtime" : ", fast") << "\n";

    std::signal(SIGINT, [](int) { interrupted = true; });
    std::signal(SIGTERM, [](int) { interrupted = true; });
    while (!interrupted && !svc.finished())
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    svc.stop();
    std::cerr << "balbot-service: stopped at t=" << svc.simTimeUs() * 1e-6 << " s\n";
  } catch (const std::exception& e) {
    std::cerr << "balbot-service: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
