#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>

#include "balbot/plant.hpp"

namespace balbot {

/// Pitch source standing in for the MPU-6050 DMP output.
///
/// The six register offsets are carried for config round-trips only; the
/// numeric model is a scalar pitch bias plus white gaussian noise.
struct ImuConfig {
  double sampleRateHz = 200.0;
  double noiseSigma = 0.002;
  double pitchBias = 0.0;
  // Added after the bias; set to minus a calibration estimate.
  double pitchCorrection = 0.0;
  std::array<std::int16_t, 3> accelOffsets{-5508, -730, 666};
  std::array<std::int16_t, 3> gyroOffsets{7, 18, -10};
  std::uint64_t seed = 1;

  void validate() const {
    if (!(sampleRateHz > 0.0)) throw std::invalid_argument("imu.sampleRateHz must be > 0");
    if (!(noiseSigma >= 0.0)) throw std::invalid_argument("imu.noiseSigma must be >= 0");
  }

  double samplePeriodUs() const { return 1e6 / sampleRateHz; }
};

struct SensorReading {
  double pitch = 0.0;
  std::int64_t timestampUs = 0;
};

class ImuModel {
 public:
  explicit ImuModel(const ImuConfig& cfg) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

  /// Returns a reading when the next slot of the nominal sample schedule is
  /// due. The first call always produces a sample and anchors the schedule,
  /// so coarse polling does not make the rate drift.
  std::optional<SensorReading> sample(const PlantState& truth, std::int64_t nowUs) {
    const double now = static_cast<double>(nowUs);
    if (next_ && now < *next_) return std::nullopt;
    next_ = next_ ? *next_ + cfg_.samplePeriodUs() : now + cfg_.samplePeriodUs();
    if (*next_ <= now) next_ = now + cfg_.samplePeriodUs();  // polls fell behind
    double pitch = truth.pitch + cfg_.pitchBias + cfg_.pitchCorrection;
    if (cfg_.noiseSigma > 0.0) pitch += cfg_.noiseSigma * normal_(rng_);
    return SensorReading{pitch, nowUs};
  }

  const ImuConfig& config() const { return cfg_; }
  void setPitchCorrection(double c) { cfg_.pitchCorrection = c; }

 private:
  ImuConfig cfg_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::optional<double> next_;
};

/// Mean pitch of readings taken with the robot held vertical. The caller
/// stores the negated estimate as its correction.
inline double calibrate(std::span<const SensorReading> readings) {
  if (readings.empty()) throw std::invalid_argument("calibrate: no readings");
  double sum = 0.0;
  for (const auto& r : readings) sum += r.pitch;
  return sum / static_cast<double>(readings.size());
}

}  // namespace balbot
