#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>

#include "balbot/pid.hpp"

namespace balbot {

struct ControllerConfig {
  double maxAccel = 200.0;  // wheel rad/s^2
  double angleSetPoint = 2.0 * std::numbers::pi / 180.0;
  std::int64_t warmupDelayUs = 5'000'000;
  double engageThreshold = std::numbers::pi / 18.0;
  double disengageThreshold = std::numbers::pi / 4.0;
  std::int64_t controlPeriodUs = 1000;
  std::int64_t velocityPeriodUs = 100;
  double smoothingA = 0.99;
  // The original firmware zeroes the integral on every setTarget, which it
  // calls once per control cycle.
  bool integralResetOnSetTarget = true;

  void validate() const {
    if (!(maxAccel > 0.0)) throw std::invalid_argument("controller.maxAccel must be > 0");
    if (!(engageThreshold > 0.0 && engageThreshold < disengageThreshold))
      throw std::invalid_argument("controller thresholds must satisfy 0 < engage < disengage");
    if (controlPeriodUs <= 0 || velocityPeriodUs <= 0)
      throw std::invalid_argument("controller periods must be > 0");
    if (warmupDelayUs < 0) throw std::invalid_argument("controller.warmupDelayUs must be >= 0");
    if (!(smoothingA >= 0.0 && smoothingA <= 1.0))
      throw std::invalid_argument("controller.smoothingA must be in [0, 1]");
  }
};

struct CascadeGains {
  PidGains angle = kDefaultAngleGains;
  PidGains velocity = kDefaultVelocityGains;

  friend bool operator==(const CascadeGains&, const CascadeGains&) = default;
};

/// State of the cascaded balance controller. Angles are in the sensor frame,
/// velocities are wheel angular velocities.
struct BalancerState {
  bool isBalancing = false;
  double accel = 0.0;
  double velocity = 0.0;
  double targetAngle = 0.0;
  double targetVelocity = 0.0;
  double steering = 0.0;
  double refVelocity = 0.0;
  double refSteering = 0.0;
  PidState anglePid;
  PidState velocityPid;
  std::int64_t lastControlUs = 0;
  std::int64_t lastVelocityUs = 0;
};

inline BalancerState makeBalancer(const ControllerConfig& cfg) {
  BalancerState b;
  b.targetAngle = cfg.angleSetPoint;
  b.anglePid.target = cfg.angleSetPoint;
  return b;
}

/// Outer velocity loop and inner angle loop, run on a fresh sensor sample.
/// Returns true when the call got past the warmup and rate gates.
///
/// The run timestamp only advances on cycles that end balancing, so after a
/// disengaged stretch the next dt spans the whole stretch.
inline bool updateControl(BalancerState& b, const ControllerConfig& cfg, const CascadeGains& gains,
                          double angle, std::int64_t nowUs) {
  if (nowUs < cfg.warmupDelayUs) return false;
  if (nowUs - b.lastControlUs < cfg.controlPeriodUs) return false;

  const double dt = static_cast<double>(nowUs - b.lastControlUs) * 1e-6;
  const double offset = std::abs(angle - b.targetAngle);
  if (offset < cfg.engageThreshold) b.isBalancing = true;
  if (offset > cfg.disengageThreshold) {
    b.isBalancing = false;
    b.accel = 0.0;
    b.velocity = 0.0;
  }
  if (!b.isBalancing) return true;

  b.targetAngle = -pidGetControl(b.velocityPid, gains.velocity, b.velocity, dt);
  pidSetTarget(b.anglePid, b.targetAngle, cfg.integralResetOnSetTarget);
  b.accel = std::clamp(pidGetControl(b.anglePid, gains.angle, angle, dt), -cfg.maxAccel,
                       cfg.maxAccel);
  b.lastControlUs = nowUs;
  return true;
}

struct WheelVelocities {
  double left = 0.0;
  double right = 0.0;
};

/// Integrates the commanded acceleration and splits it into per-wheel
/// velocities. Empty when the velocity period has not elapsed.
inline std::optional<WheelVelocities> updateVelocity(BalancerState& b, const ControllerConfig& cfg,
                                                     std::int64_t nowUs) {
  if (nowUs - b.lastVelocityUs < cfg.velocityPeriodUs) return std::nullopt;
  const double dt = static_cast<double>(nowUs - b.lastVelocityUs) * 1e-6;
  b.velocity += b.accel * dt;
  b.lastVelocityUs = nowUs;
  return WheelVelocities{b.velocity - b.steering, b.velocity + b.steering};
}

/// Low-passes the teleop references into the velocity target and steering.
inline void smoothReferences(BalancerState& b, const ControllerConfig& cfg) {
  const double a = cfg.smoothingA;
  b.targetVelocity = a * b.targetVelocity + (1.0 - a) * b.refVelocity;
  pidSetTarget(b.velocityPid, b.targetVelocity, cfg.integralResetOnSetTarget);
  b.steering = a * b.steering + (1.0 - a) * b.refSteering;
}

}  // namespace balbot
