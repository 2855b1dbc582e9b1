#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stpc/controller.hpp"

namespace stpc::net {

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MsgType : std::uint8_t {
  kHello = 1,
  kAck = 2,
  kError = 3,
  kSetup = 4,
  kStepBundle = 5,
  kMultMask = 6,
  kTruncMask = 7,
  kInputShare = 8,
  kClose = 9,
  kBenchMult = 10,
  kBenchTrunc = 11,
  kBenchOutput = 12,
};

const char* msg_type_name(MsgType t);

// Wire frame: 4-byte big-endian length (= 9 + payload size), 1-byte type,
// 8-byte big-endian step index, payload.
struct Frame {
  MsgType type;
  std::uint64_t step = 0;
  std::vector<std::uint8_t> payload;
};

inline constexpr std::size_t kMaxFramePayload = std::size_t(1) << 30;

std::vector<std::uint8_t> frame_to_bytes(const Frame& f);

// Roles in the session header.
inline constexpr std::uint8_t kRoleParty0 = 0;
inline constexpr std::uint8_t kRoleParty1 = 1;
inline constexpr std::uint8_t kRoleClient = 2;

// Hello payload: magic "STPC", version 1, sender role, then the session
// parameters every process must agree on.
struct SessionHeader {
  SessionParams params;
  std::uint8_t role;
};

std::vector<std::uint8_t> encode_session_header(const SessionHeader& h);
SessionHeader decode_session_header(std::span<const std::uint8_t> in);

// Controller message payload codecs.
std::vector<std::uint8_t> encode_offline(const OfflineMsg& m);
OfflineMsg decode_offline(const Modulus& q, std::span<const std::uint8_t> in);
std::vector<std::uint8_t> encode_step_bundle(const StepBundleMsg& m);
StepBundleMsg decode_step_bundle(const Modulus& q, unsigned ell, std::uint64_t step,
                                 std::span<const std::uint8_t> in);
std::vector<std::uint8_t> encode_mult_mask(const protocols::MultRound1Msg& m);
protocols::MultRound1Msg decode_mult_mask(const Modulus& q, std::span<const std::uint8_t> in);
std::vector<std::uint8_t> encode_trunc_mask(const protocols::TruncMaskMsg& m);
protocols::TruncMaskMsg decode_trunc_mask(const Modulus& q, std::span<const std::uint8_t> in);
std::vector<std::uint8_t> encode_input_share(const InputShareMsg& m);
InputShareMsg decode_input_share(const Modulus& q, std::uint64_t step,
                                 std::span<const std::uint8_t> in);
std::vector<std::uint8_t> encode_error(std::uint16_t code, const std::string& message);
std::pair<std::uint16_t, std::string> decode_error(std::span<const std::uint8_t> in);

// Bench payloads: a self-contained subprotocol instance per frame.
struct BenchMultMsg {
  ZqMatrix x_share, y_share;
  TripleShare triple;
};
struct BenchTruncMsg {
  ZqMatrix x_share;
  TruncPairShare pair;
};
std::vector<std::uint8_t> encode_bench_mult(const BenchMultMsg& m);
BenchMultMsg decode_bench_mult(const Modulus& q, std::span<const std::uint8_t> in);
std::vector<std::uint8_t> encode_bench_trunc(const BenchTruncMsg& m);
BenchTruncMsg decode_bench_trunc(const Modulus& q, unsigned ell, std::span<const std::uint8_t> in);

// Minimal RAII wrappers over blocking TCP sockets.
class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(int fd) : fd_(fd) {}
  TcpStream(TcpStream&& o) noexcept;
  TcpStream& operator=(TcpStream&& o) noexcept;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;
  ~TcpStream();

  static TcpStream connect(const std::string& host, std::uint16_t port, int timeout_ms);

  bool valid() const { return fd_ >= 0; }
  void set_recv_timeout(int ms);
  void write_all(std::span<const std::uint8_t> data);
  void read_exact(std::span<std::uint8_t> out);
  void close();

 private:
  int fd_ = -1;
};

class TcpListener {
 public:
  TcpListener() = default;
  TcpListener(TcpListener&& o) noexcept;
  TcpListener& operator=(TcpListener&& o) noexcept;
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener();

  // port 0 binds an ephemeral port; port() reports the actual one.
  static TcpListener bind(const std::string& host, std::uint16_t port);
  std::uint16_t port() const { return port_; }
  TcpStream accept(int timeout_ms);
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

void write_frame(TcpStream& s, const Frame& f);
Frame read_frame(TcpStream& s);
// Sends and receives concurrently; large frames in both directions would
// otherwise deadlock on full kernel buffers.
Frame exchange_frames(TcpStream& s, const Frame& out);

struct Endpoint {
  std::string host;
  std::uint16_t port;
};
Endpoint parse_endpoint(const std::string& s);  // "host:port"

struct FrameLogEntry {
  bool outbound;
  std::uint8_t peer_role;
  MsgType type;
  std::uint64_t step;
  std::size_t payload_size;
};
using FrameLogger = std::function<void(const FrameLogEntry&)>;

struct PartyConfig {
  int party = 0;
  SessionParams params;
  std::string listen_host = "127.0.0.1";
  std::uint16_t listen_port = 0;
  std::optional<Endpoint> peer;  // required for party 0
  int timeout_ms = 5000;
  std::ostream* trace = nullptr;  // test mode: one line per committed step
  std::function<void(std::uint16_t)> on_listening;
  FrameLogger frame_log;
};

// Serves exactly one session (offline phase plus steps until Close).
// Returns the number of completed steps.
std::uint64_t serve_party(PartyConfig cfg);

enum class TimeoutPolicy { kAbort, kHoldLastInput };

struct ClientConfig {
  ControllerSpec spec;
  Endpoint party0, party1;
  int timeout_ms = 5000;
  unsigned period_ms = 40;
  TimeoutPolicy on_timeout = TimeoutPolicy::kAbort;
  std::ostream* trace = nullptr;
  FrameLogger frame_log;
  // Randomness bundles generated ahead of the control loop by a background
  // producer (0 = one bundle per step, inline). Either way the bundles come
  // from the same dealer stream, so the wire bytes are identical.
  std::size_t prefetch = 0;
};

struct StepResult {
  std::uint64_t step;
  FixedMatrix y;
  FixedMatrix u;
  double rtt_ms;
  bool timed_out = false;
};

// Called once per step; returns the measurement, or nullopt to end the
// session. last_u is null on step 0.
using MeasurementSource =
    std::function<std::optional<FixedMatrix>(std::uint64_t step, const FixedMatrix* last_u)>;

// Drives the offline phase and the online loop at the configured period.
std::vector<StepResult> client_session(const ClientConfig& cfg, Csprng master,
                                       const MeasurementSource& source);

std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace stpc::net
