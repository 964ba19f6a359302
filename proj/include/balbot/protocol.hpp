#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

namespace balbot {

// Line-oriented teleoperation protocol shared by the TCP and WebSocket
// transports.
//
//   client -> robot   "mov<velocity>,<steering>"   move reference
//                     "xxxxx"                      keep-alive, ignored
//                     "reset"                      service control line
//   robot -> client   "x<velocity>,<steering>"     echo, two decimals
//                     "err <message>"              rejected line
//                     {...}                        telemetry frame, one JSON object

inline constexpr std::string_view kKeepAlive = "xxxxx";
inline constexpr std::string_view kResetLine = "reset";

struct MoveLimits {
  double velocity = 10.0;
  double steering = 5.0;
};

struct MoveCommand {
  double refVelocity = 0.0;
  double refSteering = 0.0;

  friend bool operator==(const MoveCommand&, const MoveCommand&) = default;
};

struct Ignored {};

struct ParseError {
  std::string message;
};

using ParseResult = std::variant<MoveCommand, Ignored, ParseError>;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline bool parseDouble(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Classifies one received line. Never throws.
inline ParseResult parseMove(std::string_view line, const MoveLimits& limits = {}) {
  line = detail::trim(line);
  if (line == kKeepAlive) return Ignored{};
  if (!line.starts_with("mov")) return Ignored{};

  const std::string_view payload = line.substr(3);
  const auto comma = payload.find(',');
  if (comma == std::string_view::npos) return ParseError{"move command needs two comma-separated values"};
  if (payload.find(',', comma + 1) != std::string_view::npos)
    return ParseError{"move command has more than two values"};

  MoveCommand cmd;
  if (!detail::parseDouble(payload.substr(0, comma), cmd.refVelocity))
    return ParseError{"bad velocity value"};
  if (!detail::parseDouble(payload.substr(comma + 1), cmd.refSteering))
    return ParseError{"bad steering value"};
  cmd.refVelocity = std::clamp(cmd.refVelocity, -limits.velocity, limits.velocity);
  cmd.refSteering = std::clamp(cmd.refSteering, -limits.steering, limits.steering);
  return cmd;
}

inline std::string formatEcho(const MoveCommand& cmd) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "x%.2f,%.2f", cmd.refVelocity, cmd.refSteering);
  return buf;
}

/// Formats a move line the way clients send it.
inline std::string formatMove(const MoveCommand& cmd) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "mov%.2f,%.2f", cmd.refVelocity, cmd.refSteering);
  return buf;
}

struct TelemetryFrame {
  std::int64_t timeUs = 0;
  double pitch = 0.0;
  double targetAngle = 0.0;
  double velocity = 0.0;
  double targetVelocity = 0.0;
  double steering = 0.0;
  double accel = 0.0;
  bool isBalancing = false;
  bool fallen = false;
  double posX = 0.0;
  double posY = 0.0;
  double heading = 0.0;

  friend bool operator==(const TelemetryFrame&, const TelemetryFrame&) = default;
};

/// Rounds to the wire precision of six significant digits.
inline double toWirePrecision(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return std::strtod(buf, nullptr);
}

inline TelemetryFrame roundedFrame(TelemetryFrame f) {
  for (double* v : {&f.pitch, &f.targetAngle, &f.velocity, &f.targetVelocity, &f.steering,
                    &f.accel, &f.posX, &f.posY, &f.heading})
    *v = toWirePrecision(*v);
  return f;
}

inline std::string encodeTelemetry(const TelemetryFrame& frame) {
  const TelemetryFrame f = roundedFrame(frame);
  nlohmann::ordered_json j;
  j["timeUs"] = f.timeUs;
  j["pitch"] = f.pitch;
  j["targetAngle"] = f.targetAngle;
  j["velocity"] = f.velocity;
  j["targetVelocity"] = f.targetVelocity;
  j["steering"] = f.steering;
  j["accel"] = f.accel;
  j["isBalancing"] = f.isBalancing;
  j["fallen"] = f.fallen;
  j["posX"] = f.posX;
  j["posY"] = f.posY;
  j["heading"] = f.heading;
  return j.dump();
}

/// Throws ProtocolError on malformed input or missing fields.
inline TelemetryFrame decodeTelemetry(std::string_view text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProtocolError("telemetry: not a JSON object");
  try {
    TelemetryFrame f;
    f.timeUs = j.at("timeUs").get<std::int64_t>();
    f.pitch = j.at("pitch").get<double>();
    f.targetAngle = j.at("targetAngle").get<double>();
    f.velocity = j.at("velocity").get<double>();
    f.targetVelocity = j.at("targetVelocity").get<double>();
    f.steering = j.at("steering").get<double>();
    f.accel = j.at("accel").get<double>();
    f.isBalancing = j.at("isBalancing").get<bool>();
    f.fallen = j.at("fallen").get<bool>();
    f.posX = j.at("posX").get<double>();
    f.posY = j.at("posY").get<double>();
    f.heading = j.at("heading").get<double>();
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("telemetry: ") + e.what());
  }
}

}  // namespace balbot
