#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <functional>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "balbot/balancer.hpp"
#include "balbot/imu.hpp"
#include "balbot/plant.hpp"
#include "balbot/protocol.hpp"
#include "balbot/stepper.hpp"

namespace balbot {

struct SimConfig {
  PlantParams plant;
  ImuConfig imu;
  ControllerConfig controller;
  CascadeGains gains;
  StepperConfig stepper;
  MoveLimits limits;
  double initialPitch = 0.0;
  bool realtime = true;
  double durationS = 10.0;
  double telemetryRateHz = 50.0;
  // Seeds the IMU noise generator; takes precedence over imu.seed.
  std::uint64_t seed = 1;
  // Sensor pitch = imuAxisSign * plant pitch. The MPU reads positive for a
  // backward lean, which is what makes positive angle gains restoring.
  double imuAxisSign = -1.0;
  // Hold the body at initialPitch until the controller warmup has elapsed.
  bool holdDuringWarmup = true;

  void validate() const {
    plant.validate();
    imu.validate();
    controller.validate();
    stepper.validate();
    if (plant.pulsesPerRev != stepper.ppr)
      throw std::invalid_argument("plant.pulsesPerRev must equal stepper.ppr");
    if (!(durationS > 0.0)) throw std::invalid_argument("durationS must be > 0");
    if (!(telemetryRateHz > 0.0)) throw std::invalid_argument("telemetryRateHz must be > 0");
    if (imuAxisSign != 1.0 && imuAxisSign != -1.0)
      throw std::invalid_argument("imuAxisSign must be +1 or -1");
    if (!std::isfinite(initialPitch) || std::abs(initialPitch) >= plant.maxTilt)
      throw std::invalid_argument("initialPitch must be finite and inside maxTilt");
    if (!(limits.velocity > 0.0 && limits.steering > 0.0))
      throw std::invalid_argument("limits must be > 0");
    const auto tick = stepper.tickUs();
    if (controller.controlPeriodUs % tick != 0 || controller.velocityPeriodUs % tick != 0)
      throw std::invalid_argument("controller periods must be multiples of the master tick");
  }
};

/// Headless defaults: faithful controller constants without the 5 s warmup.
inline SimConfig headlessConfig() {
  SimConfig cfg;
  cfg.controller.warmupDelayUs = 0;
  cfg.realtime = false;
  return cfg;
}

/// One row of the full-resolution trace, recorded every control period.
struct TraceRow {
  std::int64_t timeUs = 0;
  double pitch = 0.0;
  double targetAngle = 0.0;
  double velocity = 0.0;
  double targetVelocity = 0.0;
  double steering = 0.0;
  double accel = 0.0;
  std::int64_t ticksLeft = 0;  // current ticks per pulse, 0 when disabled
  std::int64_t ticksRight = 0;
  bool isBalancing = false;
  bool fallen = false;
};

struct TraceSeries {
  std::vector<TraceRow> rows;
  std::vector<TelemetryFrame> frames;
  std::uint64_t velocityUpdates = 0;
  std::uint64_t controlUpdates = 0;
  std::vector<std::string> protocolErrors;
};

/// A line arriving on the command link at a given simulated time.
struct TimedCommand {
  std::int64_t atUs = 0;
  std::string line;
};

struct Disturbance {
  std::int64_t atUs = 0;
  double impulse = 0.0;
};

/// Plant, stepper channels, IMU and controller advanced by one master clock.
///
/// Per master tick, in order: the main-loop work (velocity update, sensor
/// poll, control update, control-cycle boundary), then the timer interrupt
/// whose step events drive the plant over the tick.
class Simulation {
 public:
  using TraceSink = std::function<void(const TraceRow&)>;
  using TelemetrySink = std::function<void(const TelemetryFrame&)>;

  explicit Simulation(SimConfig cfg) : cfg_(std::move(cfg)), imu_(seeded(cfg_)) {
    cfg_.validate();
    tickUs_ = cfg_.stepper.tickUs();
    telemetryPeriodUs_ = std::max<std::int64_t>(
        tickUs_, static_cast<std::int64_t>(std::llround(1e6 / cfg_.telemetryRateHz)));
    reset();
  }

  void reset() {
    plant_ = PlantState{};
    plant_.pitch = cfg_.initialPitch;
    balancer_ = makeBalancer(cfg_.controller);
    channels_ = StepperChannels{};
    imu_ = ImuModel(seeded(cfg_));
    nowUs_ = 0;
    pending_.clear();
    disturbance_ = 0.0;
    velocityUpdates_ = controlUpdates_ = 0;
  }

  /// Queues a move; takes effect at the next control-cycle boundary.
  void submit(const MoveCommand& cmd) { pending_.push_back(cmd); }

  /// Feeds one protocol line. Returns the parse outcome for echoing.
  ParseResult submitLine(std::string_view line) {
    auto r = parseMove(line, cfg_.limits);
    if (auto* cmd = std::get_if<MoveCommand>(&r)) submit(*cmd);
    return r;
  }

  /// Adds an angular-rate impulse before the next plant step.
  void push(double impulse) { disturbance_ += impulse; }

  void onTrace(TraceSink sink) { traceSink_ = std::move(sink); }
  void onTelemetry(TelemetrySink sink) { telemetrySink_ = std::move(sink); }

  void tick() {
    const std::int64_t t = nowUs_;
    if (auto wheels = updateVelocity(balancer_, cfg_.controller, t)) {
      setWheelVelocities(channels_, wheels->left, wheels->right, cfg_.stepper);
      ++velocityUpdates_;
    }
    if (auto reading = imu_.sample(plant_, t)) {
      if (updateControl(balancer_, cfg_.controller, cfg_.gains, cfg_.imuAxisSign * reading->pitch,
                        t))
        ++controlUpdates_;
    }
    if (t % cfg_.controller.controlPeriodUs == 0) {
      while (!pending_.empty()) {
        balancer_.refVelocity = pending_.front().refVelocity;
        balancer_.refSteering = pending_.front().refSteering;
        pending_.pop_front();
      }
      smoothReferences(balancer_, cfg_.controller);
      if (traceSink_) traceSink_(traceRow());
    }
    if (t % telemetryPeriodUs_ == 0 && telemetrySink_) telemetrySink_(telemetry());

    if (disturbance_ != 0.0) {
      plant_ = applyDisturbance(plant_, disturbance_);
      disturbance_ = 0.0;
    }
    const StepEvents steps = tickIsr(channels_);
    const bool held = cfg_.holdDuringWarmup && t < cfg_.controller.warmupDelayUs;
    const PlantState before = plant_;
    plant_ = stepPlant(plant_, cfg_.plant, steps.left, steps.right, tickUs_ * 1e-6);
    if (held && !before.fallen) {
      plant_.pitch = before.pitch;
      plant_.pitchRate = before.pitchRate;
    }
    nowUs_ += tickUs_;
  }

  /// Ticks until the clock reaches `untilUs`, or `stop` returns true.
  void runUntil(std::int64_t untilUs, const std::function<bool(const Simulation&)>& stop = {}) {
    while (nowUs_ < untilUs) {
      tick();
      if (stop && stop(*this)) break;
    }
  }

  TraceRow traceRow() const {
    auto ticks = [](const ChannelState& c) {
      return c.ticksPerPulse ? static_cast<std::int64_t>(*c.ticksPerPulse) : std::int64_t{0};
    };
    return TraceRow{nowUs_,
                    plant_.pitch,
                    balancer_.targetAngle,
                    balancer_.velocity,
                    balancer_.targetVelocity,
                    balancer_.steering,
                    balancer_.accel,
                    ticks(channels_.left),
                    ticks(channels_.right),
                    balancer_.isBalancing,
                    plant_.fallen};
  }

  TelemetryFrame telemetry() const {
    return TelemetryFrame{nowUs_,
                          plant_.pitch,
                          balancer_.targetAngle,
                          balancer_.velocity,
                          balancer_.targetVelocity,
                          balancer_.steering,
                          balancer_.accel,
                          balancer_.isBalancing,
                          plant_.fallen,
                          plant_.posX,
                          plant_.posY,
                          plant_.heading};
  }

  /// Body pitch minus the controller set point, both in the plant frame.
  double setpointError() const {
    return plant_.pitch - cfg_.imuAxisSign * balancer_.targetAngle;
  }

  const SimConfig& config() const { return cfg_; }
  const PlantState& plant() const { return plant_; }
  const BalancerState& balancer() const { return balancer_; }
  const StepperChannels& channels() const { return channels_; }
  std::int64_t nowUs() const { return nowUs_; }
  std::int64_t tickUs() const { return tickUs_; }
  std::uint64_t velocityUpdates() const { return velocityUpdates_; }
  std::uint64_t controlUpdates() const { return controlUpdates_; }

 private:
  static ImuConfig seeded(const SimConfig& cfg) {
    ImuConfig imu = cfg.imu;
    imu.seed = cfg.seed;
    return imu;
  }

  SimConfig cfg_;
  ImuModel imu_;
  PlantState plant_;
  BalancerState balancer_;
  StepperChannels channels_;
  std::int64_t nowUs_ = 0;
  std::int64_t tickUs_ = 20;
  std::int64_t telemetryPeriodUs_ = 20'000;
  std::deque<MoveCommand> pending_;
  double disturbance_ = 0.0;
  std::uint64_t velocityUpdates_ = 0;
  std::uint64_t controlUpdates_ = 0;
  TraceSink traceSink_;
  TelemetrySink telemetrySink_;
};

/// Runs a headless simulation for cfg.durationS. Command lines and
/// disturbances are delivered when the clock reaches their timestamps.
inline TraceSeries runSimulation(const SimConfig& cfg, std::span<const TimedCommand> commands = {},
                                 std::span<const Disturbance> disturbances = {}) {
  Simulation sim(cfg);
  TraceSeries out;
  sim.onTrace([&](const TraceRow& r) { out.rows.push_back(r); });
  sim.onTelemetry([&](const TelemetryFrame& f) { out.frames.push_back(f); });

  const auto endUs = static_cast<std::int64_t>(std::llround(cfg.durationS * 1e6));
  std::size_t nextCmd = 0, nextDist = 0;
  while (sim.nowUs() < endUs) {
    const auto t = sim.nowUs();
    for (; nextCmd < commands.size() && commands[nextCmd].atUs <= t; ++nextCmd) {
      auto r = sim.submitLine(commands[nextCmd].line);
      if (auto* e = std::get_if<ParseError>(&r)) out.protocolErrors.push_back(e->message);
    }
    for (; nextDist < disturbances.size() && disturbances[nextDist].atUs <= t; ++nextDist)
      sim.push(disturbances[nextDist].impulse);
    sim.tick();
  }
  out.velocityUpdates = sim.velocityUpdates();
  out.controlUpdates = sim.controlUpdates();
  return out;
}

// CSV trace -----------------------------------------------------------------

inline constexpr std::string_view kTraceHeader =
    "time_s,pitch_rad,target_angle_rad,velocity_rads,target_velocity_rads,steering_rads,"
    "accel_rads2,ticks_left,ticks_right,is_balancing,fallen";

inline void writeTraceRow(std::ostream& os, const TraceRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.6f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%lld,%lld,%d,%d\n",
                static_cast<double>(r.timeUs) * 1e-6, r.pitch, r.targetAngle, r.velocity,
                r.targetVelocity, r.steering, r.accel, static_cast<long long>(r.ticksLeft),
                static_cast<long long>(r.ticksRight), r.isBalancing ? 1 : 0, r.fallen ? 1 : 0);
  os << buf;
}

inline void writeTraceCsv(std::ostream& os, std::span<const TraceRow> rows) {
  os << kTraceHeader << '\n';
  for (const auto& r : rows) writeTraceRow(os, r);
}

/// Parses a trace written by writeTraceCsv. Throws std::runtime_error on a
/// bad header or malformed row.
inline std::vector<TraceRow> readTraceCsv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTraceHeader)
    throw std::runtime_error("trace: unexpected header");
  std::vector<TraceRow> rows;
  std::size_t lineNo = 1;
  while (std::getline(is, line)) {
    ++lineNo;
    if (line.empty()) continue;
    double t = 0;
    long long tl = 0, tr = 0;
    int bal = 0, fell = 0;
    TraceRow r;
    const int n = std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lld,%lld,%d,%d", &t,
                              &r.pitch, &r.targetAngle, &r.velocity, &r.targetVelocity,
                              &r.steering, &r.accel, &tl, &tr, &bal, &fell);
    if (n != 11) throw std::runtime_error("trace: malformed row at line " + std::to_string(lineNo));
    r.timeUs = std::llround(t * 1e6);
    r.ticksLeft = tl;
    r.ticksRight = tr;
    r.isBalancing = bal != 0;
    r.fallen = fell != 0;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace balbot
