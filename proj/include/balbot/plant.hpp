#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

namespace balbot {

/// Physical dimensions of the simulated robot. Lengths in metres.
struct PlantParams {
  double gravity = 9.81;
  double bodyLength = 0.10;  // pivot to centre of mass
  double wheelRadius = 0.05;
  double trackWidth = 0.20;
  double maxTilt = std::numbers::pi / 2.0;
  // Step angle is 2*pi / pulsesPerRev.
  std::uint32_t pulsesPerRev = 1600;
  // Time constant of the single-pole filter applied to the stepper-realised
  // base velocity before differentiating it into a base acceleration.
  double accelFilterTau = 0.005;

  void validate() const {
    if (!(gravity > 0.0)) throw std::invalid_argument("plant.gravity must be > 0");
    if (!(bodyLength > 0.0)) throw std::invalid_argument("plant.bodyLength must be > 0");
    if (!(wheelRadius > 0.0)) throw std::invalid_argument("plant.wheelRadius must be > 0");
    if (!(trackWidth > 0.0)) throw std::invalid_argument("plant.trackWidth must be > 0");
    if (!(maxTilt > 0.0 && maxTilt <= std::numbers::pi))
      throw std::invalid_argument("plant.maxTilt must be in (0, pi]");
    if (pulsesPerRev == 0) throw std::invalid_argument("plant.pulsesPerRev must be > 0");
    if (!(accelFilterTau > 0.0)) throw std::invalid_argument("plant.accelFilterTau must be > 0");
  }

  double stepAngle() const { return 2.0 * std::numbers::pi / pulsesPerRev; }
};

/// Physical truth. Pitch is positive for a forward lean.
struct PlantState {
  double pitch = 0.0;
  double pitchRate = 0.0;
  double wheelAngleLeft = 0.0;
  double wheelAngleRight = 0.0;
  double heading = 0.0;
  double posX = 0.0;
  double posY = 0.0;
  // Filtered linear velocity of the wheel axle, m/s.
  double baseVelocity = 0.0;
  bool fallen = false;
  std::int64_t timeUs = 0;

  friend bool operator==(const PlantState&, const PlantState&) = default;
};

/// Angular acceleration of a pendulum on a pivot accelerating at `baseAccel`.
inline double pitchAcceleration(const PlantParams& p, double pitch, double baseAccel) {
  return (p.gravity * std::sin(pitch) - baseAccel * std::cos(pitch)) / p.bodyLength;
}

/// Differential-drive yaw rate from wheel angular velocities.
inline double headingRate(const PlantParams& p, double wheelRateLeft, double wheelRateRight) {
  return p.wheelRadius * (wheelRateRight - wheelRateLeft) / p.trackWidth;
}

/// Advances the plant by one step window of length `dt` seconds during which
/// the steppers emitted `stepsLeft` and `stepsRight` signed step events.
///
/// The base is kinematic: wheels are position-commanded by the steppers and
/// the pendulum sees the resulting axle acceleration. Integration is
/// semi-implicit Euler. Once fallen the pitch is latched at +-maxTilt with
/// zero rate; odometry keeps integrating.
inline PlantState stepPlant(const PlantState& s, const PlantParams& p, int stepsLeft,
                            int stepsRight, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("stepPlant: dt must be > 0");

  PlantState n = s;
  const double dLeft = stepsLeft * p.stepAngle();
  const double dRight = stepsRight * p.stepAngle();
  n.wheelAngleLeft += dLeft;
  n.wheelAngleRight += dRight;

  const double rateLeft = dLeft / dt;
  const double rateRight = dRight / dt;
  const double rawVelocity = p.wheelRadius * 0.5 * (rateLeft + rateRight);

  const double alpha = -std::expm1(-dt / p.accelFilterTau);
  n.baseVelocity = s.baseVelocity + alpha * (rawVelocity - s.baseVelocity);
  const double baseAccel = (n.baseVelocity - s.baseVelocity) / dt;

  if (!s.fallen) {
    n.pitchRate = s.pitchRate + pitchAcceleration(p, s.pitch, baseAccel) * dt;
    n.pitch = s.pitch + n.pitchRate * dt;
    if (std::abs(n.pitch) >= p.maxTilt) {
      n.pitch = std::copysign(p.maxTilt, n.pitch);
      n.pitchRate = 0.0;
      n.fallen = true;
    }
  }

  n.heading = s.heading + headingRate(p, rateLeft, rateRight) * dt;
  n.posX = s.posX + rawVelocity * std::cos(n.heading) * dt;
  n.posY = s.posY + rawVelocity * std::sin(n.heading) * dt;
  n.timeUs = s.timeUs + std::llround(dt * 1e6);
  return n;
}

/// Adds an angular-rate impulse to the body, e.g. a push. A fallen robot is
/// left untouched.
inline PlantState applyDisturbance(const PlantState& s, double impulse) {
  if (s.fallen) return s;
  PlantState n = s;
  n.pitchRate += impulse;
  return n;
}

}  // namespace balbot
