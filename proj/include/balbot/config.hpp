#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "balbot/simulation.hpp"
#include "balbot/tuner.hpp"

// JSON mapping of the configuration and report types. Field names follow the
// C++ members. Missing keys keep their defaults, so a partial document only
// overrides what it names.

namespace balbot {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PlantParams, gravity, bodyLength, wheelRadius,
                                                trackWidth, maxTilt, pulsesPerRev, accelFilterTau)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ImuConfig, sampleRateHz, noiseSigma, pitchBias,
                                                pitchCorrection, accelOffsets, gyroOffsets, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ControllerConfig, maxAccel, angleSetPoint,
                                                warmupDelayUs, engageThreshold, disengageThreshold,
                                                controlPeriodUs, velocityPeriodUs, smoothingA,
                                                integralResetOnSetTarget)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PidGains, kp, kd, ki)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CascadeGains, angle, velocity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StepperConfig, ppr, ticksPerSecond, pulseWidth,
                                                minTicksPerPulse, disableBelow)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MoveLimits, velocity, steering)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SimConfig, plant, imu, controller, gains, stepper,
                                                limits, initialPitch, realtime, durationS,
                                                telemetryRateHz, seed, imuAxisSign,
                                                holdDuringWarmup)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrialMetrics, fallen, settleTimeS, oscillationAmp,
                                                driftM, peakErrorLate, firstCrossingS)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TuneStage, name, trials, chosen)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TuneReport, gains, metrics, trialCount, seed,
                                                stages)

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses and validates a configuration document. Starts from `base`, so
/// callers choose which defaults unnamed fields fall back to.
inline SimConfig parseConfig(const std::string& text, SimConfig base = {}) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config: not a JSON object");
  try {
    nlohmann::json merged = base;
    merged.merge_patch(j);
    SimConfig cfg = merged.get<SimConfig>();
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline SimConfig loadConfig(const std::string& path, SimConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parseConfig(text, std::move(base));
}

inline std::string dumpConfig(const SimConfig& cfg) { return nlohmann::json(cfg).dump(2); }

}  // namespace balbot
