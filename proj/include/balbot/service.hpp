#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <variant>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "balbot/protocol.hpp"
#include "balbot/simulation.hpp"

namespace balbot {

namespace net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

// Outgoing queue depth per client before telemetry frames are dropped.
inline constexpr std::size_t kMaxQueuedFrames = 256;
inline constexpr std::size_t kMaxLineBytes = 4096;

class Session : public std::enable_shared_from_this<Session> {
 public:
  virtual ~Session() = default;
  virtual void start() = 0;
  virtual void send(std::string line, bool droppable) = 0;
  virtual void close() = 0;
};

}  // namespace net

/// Live simulation served over line-based TCP and WebSocket.
///
/// The simulation loop runs on its own thread and owns every piece of
/// simulation state. Network I/O runs on a second thread. Client lines cross
/// into the loop through an ordered inbound queue; telemetry crosses back by
/// being posted onto the I/O context. Commands from all clients are applied
/// in arrival order, so the last writer wins.
class Service {
 public:
  struct Options {
    unsigned short tcpPort = 7777;
    unsigned short wsPort = 7778;
    // Stop on its own after this much simulated time; runs forever when empty.
    std::optional<double> durationS;
    // Receives every control-period trace row on the simulation thread.
    Simulation::TraceSink trace;
  };

  Service(SimConfig cfg, Options opt) : cfg_(std::move(cfg)), opt_(opt) { cfg_.validate(); }
  ~Service() { stop(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void start() {
    using net::tcp;
    tcpAcceptor_.emplace(io_, tcp::endpoint(tcp::v4(), opt_.tcpPort));
    wsAcceptor_.emplace(io_, tcp::endpoint(tcp::v4(), opt_.wsPort));
    acceptTcp();
    acceptWs();
    running_ = true;
    ioThread_ = std::thread([this] { io_.run(); });
    simThread_ = std::thread([this] { simLoop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (simThread_.joinable()) simThread_.join();
    net::asio::post(io_, [this] {
      if (tcpAcceptor_) tcpAcceptor_->close();
      if (wsAcceptor_) wsAcceptor_->close();
      for (const auto& s : sessions_) s->close();
      sessions_.clear();
      work_.reset();
    });
    if (ioThread_.joinable()) ioThread_.join();
  }

  /// True once the loop has reached Options::durationS.
  bool finished() const { return finished_.load(); }

  unsigned short tcpPort() const { return tcpAcceptor_->local_endpoint().port(); }
  unsigned short wsPort() const { return wsAcceptor_->local_endpoint().port(); }

  std::int64_t simTimeUs() const { return simTimeUs_.load(); }
  std::uint64_t framesBroadcast() const { return frames_.load(); }
  std::uint64_t commandsApplied() const { return commands_.load(); }
  std::uint64_t resets() const { return resets_.load(); }
  std::uint64_t rejectedLines() const { return rejected_.load(); }

  /// Latest telemetry snapshot produced by the loop.
  TelemetryFrame lastFrame() const {
    std::lock_guard lock(frameMutex_);
    return lastFrame_;
  }

  // Called on the I/O thread for every received line. Returns the reply, if any.
  std::optional<std::string> handleLine(std::string_view raw) {
    const std::string_view line = detail::trim(raw);
    if (line.empty()) return std::nullopt;
    if (line == kResetLine) {
      enqueue(ResetRequest{});
      return std::string("ok reset");
    }
    auto parsed = parseMove(line, cfg_.limits);
    if (auto* cmd = std::get_if<MoveCommand>(&parsed)) {
      enqueue(*cmd);
      return formatEcho(*cmd);
    }
    if (auto* err = std::get_if<ParseError>(&parsed)) {
      ++rejected_;
      return "err " + err->message;
    }
    return std::nullopt;
  }

 private:
  struct ResetRequest {};
  using Inbound = std::variant<MoveCommand, ResetRequest>;

  class TcpSession;
  class WsSession;

  void enqueue(Inbound msg) {
    std::lock_guard lock(inboxMutex_);
    inbox_.push_back(std::move(msg));
  }

  void acceptTcp();
  void acceptWs();

  void broadcast(const std::string& line) {
    for (const auto& s : sessions_) s->send(line, true);
  }

  void simLoop() {
    Simulation sim(cfg_);
    if (opt_.trace) sim.onTrace(opt_.trace);
    sim.onTelemetry([this](const TelemetryFrame& f) {
      {
        std::lock_guard lock(frameMutex_);
        lastFrame_ = f;
      }
      ++frames_;
      net::asio::post(io_, [this, line = encodeTelemetry(f)] { broadcast(line); });
    });

    using clock = std::chrono::steady_clock;
    auto anchor = clock::now();
    std::int64_t anchorSimUs = 0;
    const std::optional<std::int64_t> endUs =
        opt_.durationS ? std::optional<std::int64_t>(std::llround(*opt_.durationS * 1e6))
                       : std::nullopt;
    constexpr std::int64_t kChunkUs = 1000;

    while (running_) {
      std::deque<Inbound> batch;
      {
        std::lock_guard lock(inboxMutex_);
        batch.swap(inbox_);
      }
      for (auto& msg : batch) {
        if (std::holds_alternative<ResetRequest>(msg)) {
          sim.reset();
          anchor = clock::now();
          anchorSimUs = 0;
          ++resets_;
        } else {
          sim.submit(std::get<MoveCommand>(msg));
          ++commands_;
        }
      }

      std::int64_t target = sim.nowUs() + kChunkUs;
      if (cfg_.realtime) {
        const auto wall = std::chrono::duration_cast<std::chrono::microseconds>(clock::now() - anchor)
                              .count();
        target = std::min(target, anchorSimUs + wall);
        if (target <= sim.nowUs()) {
          std::this_thread::sleep_for(std::chrono::microseconds(500));
          continue;
        }
      }
      if (endUs) target = std::min(target, *endUs);
      sim.runUntil(target);
      simTimeUs_ = sim.nowUs();
      if (endUs && sim.nowUs() >= *endUs) {
        finished_ = true;
        break;
      }
      if (!cfg_.realtime) std::this_thread::yield();
    }
  }

  SimConfig cfg_;
  Options opt_;
  net::asio::io_context io_;
  std::optional<net::asio::executor_work_guard<net::asio::io_context::executor_type>> work_{
      net::asio::make_work_guard(io_)};
  std::optional<net::tcp::acceptor> tcpAcceptor_;
  std::optional<net::tcp::acceptor> wsAcceptor_;
  std::set<std::shared_ptr<net::Session>> sessions_;  // I/O thread only

  std::mutex inboxMutex_;
  std::deque<Inbound> inbox_;
  mutable std::mutex frameMutex_;
  TelemetryFrame lastFrame_;

  std::atomic<bool> running_{false};
  std::atomic<bool> finished_{false};
  std::atomic<std::int64_t> simTimeUs_{0};
  std::atomic<std::uint64_t> frames_{0};
  std::atomic<std::uint64_t> commands_{0};
  std::atomic<std::uint64_t> resets_{0};
  std::atomic<std::uint64_t> rejected_{0};
  std::thread ioThread_;
  std::thread simThread_;
};

// Plain TCP: newline-terminated lines both ways.
class Service::TcpSession : public net::Session {
 public:
  TcpSession(Service& svc, net::tcp::socket sock)
      : svc_(svc), sock_(std::move(sock)), buf_(net::kMaxLineBytes) {}

  void start() override { read(); }

  void send(std::string line, bool droppable) override {
    if (droppable && out_.size() >= net::kMaxQueuedFrames) return;
    out_.push_back(std::move(line) + "\n");
    if (out_.size() == 1) write();
  }

  void close() override {
    boost::system::error_code ec;
    sock_.shutdown(net::tcp::socket::shutdown_both, ec);
    sock_.close(ec);
  }

 private:
  void read() {
    net::asio::async_read_until(
        sock_, buf_, '\n', [self = shared(), this](boost::system::error_code ec, std::size_t n) {
          if (ec) {
            // Overlong line: report and drop the connection.
            if (ec == net::asio::error::not_found) send("err line too long", false);
            svc_.sessions_.erase(self);
            return;
          }
          std::string line(net::asio::buffers_begin(buf_.data()),
                           net::asio::buffers_begin(buf_.data()) + static_cast<std::ptrdiff_t>(n));
          buf_.consume(n);
          if (auto reply = svc_.handleLine(line)) send(std::move(*reply), false);
          read();
        });
  }

  void write() {
    net::asio::async_write(sock_, net::asio::buffer(out_.front()),
                           [self = shared(), this](boost::system::error_code ec, std::size_t) {
                             if (ec) {
                               svc_.sessions_.erase(self);
                               return;
                             }
                             out_.pop_front();
                             if (!out_.empty()) write();
                           });
  }

  std::shared_ptr<TcpSession> shared() {
    return std::static_pointer_cast<TcpSession>(shared_from_this());
  }

  Service& svc_;
  net::tcp::socket sock_;
  net::asio::streambuf buf_;
  std::deque<std::string> out_;
};

// WebSocket: one line per text message; a message holding several
// newline-separated lines is split.
class Service::WsSession : public net::Session {
 public:
  WsSession(Service& svc, net::tcp::socket sock) : svc_(svc), ws_(std::move(sock)) {}

  void start() override {
    ws_.read_message_max(net::kMaxLineBytes);
    ws_.async_accept([self = shared(), this](boost::system::error_code ec) {
      if (ec) {
        svc_.sessions_.erase(self);
        return;
      }
      open_ = true;
      if (!out_.empty()) write();
      read();
    });
  }

  void send(std::string line, bool droppable) override {
    if (droppable && out_.size() >= net::kMaxQueuedFrames) return;
    out_.push_back(std::move(line));
    if (open_ && out_.size() == 1) write();
  }

  void close() override {
    boost::system::error_code ec;
    ws_.next_layer().shutdown(net::tcp::socket::shutdown_both, ec);
    ws_.next_layer().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buf_, [self = shared(), this](boost::system::error_code ec, std::size_t) {
      if (ec) {
        svc_.sessions_.erase(self);
        return;
      }
      const std::string msg = net::beast::buffers_to_string(buf_.data());
      buf_.consume(buf_.size());
      std::string_view rest = msg;
      while (!rest.empty()) {
        const auto nl = rest.find('\n');
        const auto line = rest.substr(0, nl);
        if (auto reply = svc_.handleLine(line)) send(std::move(*reply), false);
        if (nl == std::string_view::npos) break;
        rest.remove_prefix(nl + 1);
      }
      read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::asio::buffer(out_.front()),
                    [self = shared(), this](boost::system::error_code ec, std::size_t) {
                      if (ec) {
                        svc_.sessions_.erase(self);
                        return;
                      }
                      out_.pop_front();
                      if (!out_.empty()) write();
                    });
  }

  std::shared_ptr<WsSession> shared() {
    return std::static_pointer_cast<WsSession>(shared_from_this());
  }

  Service& svc_;
  net::websocket::stream<net::tcp::socket> ws_;
  net::beast::flat_buffer buf_;
  std::deque<std::string> out_;
  bool open_ = false;
};

inline void Service::acceptTcp() {
  tcpAcceptor_->async_accept([this](boost::system::error_code ec, net::tcp::socket sock) {
    if (ec) return;
    auto s = std::make_shared<TcpSession>(*this, std::move(sock));
    sessions_.insert(s);
    s->start();
    acceptTcp();
  });
}

inline void Service::acceptWs() {
  wsAcceptor_->async_accept([this](boost::system::error_code ec, net::tcp::socket sock) {
    if (ec) return;
    auto s = std::make_shared<WsSession>(*this, std::move(sock));
    sessions_.insert(s);
    s->start();
    acceptWs();
  });
}

}  // namespace balbot
