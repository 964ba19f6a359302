#pragma once

#include <stdexcept>

namespace balbot {

struct PidGains {
  double kp = 0.0;
  double kd = 0.0;
  double ki = 0.0;

  friend bool operator==(const PidGains&, const PidGains&) = default;
};

// Gains the original robot shipped with.
inline constexpr PidGains kDefaultAngleGains{1150.0, 157.5, 0.12};
inline constexpr PidGains kDefaultVelocityGains{0.1, 0.002, 0.0005};

struct PidState {
  double target = 0.0;
  double lastValue = 0.0;
  bool hasLastValue = false;
  // Accumulated ki * error * dt, i.e. already scaled by the integral gain.
  double integralError = 0.0;
};

/// One controller evaluation. The derivative acts on the measurement, so a
/// target change produces no derivative kick.
inline double pidGetControl(PidState& s, const PidGains& g, double value, double dtSeconds) {
  if (!(dtSeconds > 0.0)) throw std::invalid_argument("pidGetControl: dt must be > 0");
  const double last = s.hasLastValue ? s.lastValue : value;
  const double error = s.target - value;
  const double de = -(value - last) / dtSeconds;
  s.integralError += g.ki * error * dtSeconds;
  s.lastValue = value;
  s.hasLastValue = true;
  return g.kp * error + g.kd * de + s.integralError;
}

inline void pidSetTarget(PidState& s, double target, bool resetIntegral = true) {
  s.target = target;
  if (resetIntegral) s.integralError = 0.0;
}

}  // namespace balbot
