#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>

namespace balbot {

struct StepperConfig {
  std::uint32_t ppr = 1600;  // 200 full steps x 8 microsteps
  std::uint32_t ticksPerSecond = 50'000;
  std::uint32_t pulseWidth = 1;
  std::uint64_t minTicksPerPulse = 2;
  double disableBelow = 1e-3;

  void validate() const {
    if (ppr == 0) throw std::invalid_argument("stepper.ppr must be > 0");
    if (ticksPerSecond == 0) throw std::invalid_argument("stepper.ticksPerSecond must be > 0");
    if (1'000'000 % ticksPerSecond != 0)
      throw std::invalid_argument("stepper.ticksPerSecond must divide 1e6");
    if (pulseWidth < 1) throw std::invalid_argument("stepper.pulseWidth must be >= 1");
    if (minTicksPerPulse < pulseWidth + 1)
      throw std::invalid_argument("stepper.minTicksPerPulse must be > pulseWidth");
    if (!(disableBelow >= 0.0)) throw std::invalid_argument("stepper.disableBelow must be >= 0");
  }

  std::int64_t tickUs() const { return 1'000'000 / ticksPerSecond; }
};

enum class Direction { forward, reverse };

/// Empty means the channel is disabled and emits no pulses.
using TicksPerPulse = std::optional<std::uint64_t>;

struct ChannelState {
  std::uint64_t currentTick = 0;
  TicksPerPulse ticksPerPulse;
  Direction direction = Direction::forward;
  // Number of updates whose period had to be clamped up to minTicksPerPulse.
  std::uint64_t saturations = 0;
};

struct StepperChannels {
  ChannelState left;
  ChannelState right;
};

namespace detail {

// Unclamped timer period; may be below the minimum or negative at high speed.
inline std::int64_t rawTicksPerPulse(double velocity, const StepperConfig& cfg) {
  const double ticks =
      2.0 * std::numbers::pi * cfg.ticksPerSecond / (std::abs(velocity) * cfg.ppr);
  return static_cast<std::int64_t>(std::floor(ticks)) - static_cast<std::int64_t>(cfg.pulseWidth);
}

inline void updateChannel(ChannelState& ch, double velocity, const StepperConfig& cfg) {
  if (std::abs(velocity) < cfg.disableBelow) {
    ch.ticksPerPulse.reset();
  } else {
    const std::int64_t raw = rawTicksPerPulse(velocity, cfg);
    const auto floor = static_cast<std::int64_t>(cfg.minTicksPerPulse);
    if (raw < floor) ++ch.saturations;
    ch.ticksPerPulse = static_cast<std::uint64_t>(raw < floor ? floor : raw);
  }
  if (velocity > 0.0)
    ch.direction = Direction::forward;
  else if (velocity < 0.0)
    ch.direction = Direction::reverse;
}

inline int tickChannel(ChannelState& ch) {
  if (!ch.ticksPerPulse) return 0;
  if (ch.currentTick >= *ch.ticksPerPulse) ch.currentTick = 0;
  const int step = ch.currentTick == 0 ? (ch.direction == Direction::forward ? 1 : -1) : 0;
  ++ch.currentTick;
  return step;
}

}  // namespace detail

/// Timer ticks between step pulses for a wheel angular velocity.
inline TicksPerPulse ticksPerPulse(double velocity, const StepperConfig& cfg) {
  if (std::abs(velocity) < cfg.disableBelow) return std::nullopt;
  const std::int64_t raw = detail::rawTicksPerPulse(velocity, cfg);
  const auto floor = static_cast<std::int64_t>(cfg.minTicksPerPulse);
  return static_cast<std::uint64_t>(raw < floor ? floor : raw);
}

/// Angular velocity the channel actually produces for a given period.
inline double realizedVelocity(std::uint64_t ticks, const StepperConfig& cfg) {
  return 2.0 * std::numbers::pi * cfg.ticksPerSecond / (static_cast<double>(cfg.ppr) * ticks);
}

inline void setWheelVelocities(StepperChannels& ch, double left, double right,
                               const StepperConfig& cfg) {
  detail::updateChannel(ch.left, left, cfg);
  detail::updateChannel(ch.right, right, cfg);
}

struct StepEvents {
  int left = 0;
  int right = 0;
};

/// One timer interrupt. Each enabled channel emits a step at counter zero and
/// wraps when the counter reaches its period.
inline StepEvents tickIsr(StepperChannels& ch) {
  return StepEvents{detail::tickChannel(ch.left), detail::tickChannel(ch.right)};
}

}  // namespace balbot
