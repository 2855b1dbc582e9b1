#include "stpc/net.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <thread>

namespace stpc::net {

namespace {

using Clock = std::chrono::steady_clock;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint16_t get_u16(std::span<const std::uint8_t> in, std::size_t& off) {
  if (in.size() - off < 2) throw NetError("decode: truncated u16");
  std::uint16_t v = std::uint16_t(in[off]) << 8 | in[off + 1];
  off += 2;
  return v;
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t& off) {
  if (in.size() - off < 4) throw NetError("decode: truncated u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = v << 8 | in[off + i];
  off += 4;
  return v;
}

void check_consumed(std::span<const std::uint8_t> in, std::size_t off, const char* what) {
  if (off != in.size()) throw NetError(std::string(what) + ": trailing bytes in payload");
}

}  // namespace

const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::kHello: return "HELLO";
    case MsgType::kAck: return "ACK";
    case MsgType::kError: return "ERROR";
    case MsgType::kSetup: return "SETUP";
    case MsgType::kStepBundle: return "STEP_BUNDLE";
    case MsgType::kMultMask: return "MULT_MASK";
    case MsgType::kTruncMask: return "TRUNC_MASK";
    case MsgType::kInputShare: return "INPUT_SHARE";
    case MsgType::kClose: return "CLOSE";
    case MsgType::kBenchMult: return "BENCH_MULT";
    case MsgType::kBenchTrunc: return "BENCH_TRUNC";
    case MsgType::kBenchOutput: return "BENCH_OUTPUT";
  }
  return "UNKNOWN";
}

std::vector<std::uint8_t> frame_to_bytes(const Frame& f) {
  if (f.payload.size() > kMaxFramePayload) throw NetError("frame payload too large");
  std::vector<std::uint8_t> out;
  out.reserve(13 + f.payload.size());
  put_u32(out, static_cast<std::uint32_t>(9 + f.payload.size()));
  out.push_back(static_cast<std::uint8_t>(f.type));
  put_u64(out, f.step);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

std::vector<std::uint8_t> encode_session_header(const SessionHeader& h) {
  std::vector<std::uint8_t> out{'S', 'T', 'P', 'C', 1, h.role};
  const BigInt& q = h.params.q.value();
  std::size_t count = (mpz_sizeinbase(q.get_mpz_t(), 2) + 7) / 8;
  std::vector<std::uint8_t> qbytes(count);
  mpz_export(qbytes.data(), &count, 1, 1, 1, 0, q.get_mpz_t());
  put_u32(out, static_cast<std::uint32_t>(count));
  out.insert(out.end(), qbytes.begin(), qbytes.begin() + count);
  for (std::uint32_t v : {h.params.n, h.params.m, h.params.p, h.params.k, h.params.ell,
                          h.params.lambda})
    put_u32(out, v);
  return out;
}

SessionHeader decode_session_header(std::span<const std::uint8_t> in) {
  std::size_t off = 0;
  if (in.size() < 6 || in[0] != 'S' || in[1] != 'T' || in[2] != 'P' || in[3] != 'C')
    throw NetError("handshake: bad magic");
  if (in[4] != 1) throw NetError("handshake: unsupported version");
  std::uint8_t role = in[5];
  if (role > kRoleClient) throw NetError("handshake: unknown role");
  off = 6;
  std::uint32_t qlen = get_u32(in, off);
  if (in.size() - off < qlen) throw NetError("handshake: truncated modulus");
  BigInt q;
  mpz_import(q.get_mpz_t(), qlen, 1, 1, 1, 0, in.data() + off);
  off += qlen;
  std::uint32_t n = get_u32(in, off), m = get_u32(in, off), p = get_u32(in, off);
  std::uint32_t k = get_u32(in, off), ell = get_u32(in, off), lambda = get_u32(in, off);
  check_consumed(in, off, "handshake");
  return SessionHeader{SessionParams{Modulus(q), n, m, p, k, ell, lambda}, role};
}

std::vector<std::uint8_t> encode_offline(const OfflineMsg& m) {
  std::vector<std::uint8_t> out = m.phi_share.to_bytes();
  std::vector<std::uint8_t> x0 = m.x0_share.to_bytes();
  out.insert(out.end(), x0.begin(), x0.end());
  return out;
}

OfflineMsg decode_offline(const Modulus& q, std::span<const std::uint8_t> in) {
  std::size_t off = 0;
  ZqMatrix phi = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix x0 = ZqMatrix::from_bytes(q, in, off);
  check_consumed(in, off, "SETUP");
  return OfflineMsg{std::move(phi), std::move(x0)};
}

std::vector<std::uint8_t> encode_step_bundle(const StepBundleMsg& m) {
  std::vector<std::uint8_t> out;
  for (const ZqMatrix* mat :
       {&m.y_share, &m.triple.u, &m.triple.v, &m.triple.w, &m.trunc.r, &m.trunc.r_prime}) {
    auto b = mat->to_bytes();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

StepBundleMsg decode_step_bundle(const Modulus& q, unsigned ell, std::uint64_t step,
                                 std::span<const std::uint8_t> in) {
  std::size_t off = 0;
  ZqMatrix y = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix u = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix v = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix w = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix r = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix rp = ZqMatrix::from_bytes(q, in, off);
  check_consumed(in, off, "STEP_BUNDLE");
  return StepBundleMsg{step, std::move(y), TripleShare{std::move(u), std::move(v), std::move(w)},
                       TruncPairShare{std::move(r), std::move(rp), ell}};
}

std::vector<std::uint8_t> encode_mult_mask(const protocols::MultRound1Msg& m) {
  std::vector<std::uint8_t> out = m.s_i.to_bytes();
  auto t = m.t_i.to_bytes();
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

protocols::MultRound1Msg decode_mult_mask(const Modulus& q, std::span<const std::uint8_t> in) {
  std::size_t off = 0;
  ZqMatrix s = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix t = ZqMatrix::from_bytes(q, in, off);
  check_consumed(in, off, "MULT_MASK");
  return protocols::MultRound1Msg{std::move(s), std::move(t)};
}

std::vector<std::uint8_t> encode_trunc_mask(const protocols::TruncMaskMsg& m) {
  return m.y0.to_bytes();
}

protocols::TruncMaskMsg decode_trunc_mask(const Modulus& q, std::span<const std::uint8_t> in) {
  std::size_t off = 0;
  ZqMatrix y0 = ZqMatrix::from_bytes(q, in, off);
  check_consumed(in, off, "TRUNC_MASK");
  return protocols::TruncMaskMsg{std::move(y0)};
}

std::vector<std::uint8_t> encode_input_share(const InputShareMsg& m) {
  std::vector<std::uint8_t> out{static_cast<std::uint8_t>(m.party)};
  auto b = m.u_share.to_bytes();
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

InputShareMsg decode_input_share(const Modulus& q, std::uint64_t step,
                                 std::span<const std::uint8_t> in) {
  if (in.empty()) throw NetError("INPUT_SHARE: empty payload");
  int party = in[0];
  if (party > 1) throw NetError("INPUT_SHARE: bad party id");
  std::size_t off = 1;
  ZqMatrix u = ZqMatrix::from_bytes(q, in, off);
  check_consumed(in, off, "INPUT_SHARE");
  return InputShareMsg{step, party, std::move(u)};
}

std::vector<std::uint8_t> encode_error(std::uint16_t code, const std::string& message) {
  std::vector<std::uint8_t> out;
  put_u16(out, code);
  out.insert(out.end(), message.begin(), message.end());
  return out;
}

std::pair<std::uint16_t, std::string> decode_error(std::span<const std::uint8_t> in) {
  std::size_t off = 0;
  std::uint16_t code = get_u16(in, off);
  return {code, std::string(in.begin() + off, in.end())};
}

std::vector<std::uint8_t> encode_bench_mult(const BenchMultMsg& m) {
  std::vector<std::uint8_t> out;
  for (const ZqMatrix* mat : {&m.x_share, &m.y_share, &m.triple.u, &m.triple.v, &m.triple.w}) {
    auto b = mat->to_bytes();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

BenchMultMsg decode_bench_mult(const Modulus& q, std::span<const std::uint8_t> in) {
  std::size_t off = 0;
  ZqMatrix x = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix y = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix u = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix v = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix w = ZqMatrix::from_bytes(q, in, off);
  check_consumed(in, off, "BENCH_MULT");
  return BenchMultMsg{std::move(x), std::move(y), TripleShare{std::move(u), std::move(v), std::move(w)}};
}

std::vector<std::uint8_t> encode_bench_trunc(const BenchTruncMsg& m) {
  std::vector<std::uint8_t> out;
  for (const ZqMatrix* mat : {&m.x_share, &m.pair.r, &m.pair.r_prime}) {
    auto b = mat->to_bytes();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

BenchTruncMsg decode_bench_trunc(const Modulus& q, unsigned ell,
                                 std::span<const std::uint8_t> in) {
  std::size_t off = 0;
  ZqMatrix x = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix r = ZqMatrix::from_bytes(q, in, off);
  ZqMatrix rp = ZqMatrix::from_bytes(q, in, off);
  check_consumed(in, off, "BENCH_TRUNC");
  return BenchTruncMsg{std::move(x), TruncPairShare{std::move(r), std::move(rp), ell}};
}

TcpStream::TcpStream(TcpStream&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }

TcpStream& TcpStream::operator=(TcpStream&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

TcpStream::~TcpStream() { close(); }

void TcpStream::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

namespace {

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

TcpStream TcpStream::connect(const std::string& host, std::uint16_t port, int timeout_ms) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_str = std::to_string(port);
  if (::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res) != 0 || res == nullptr)
    throw NetError("connect: cannot resolve " + host);

  const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
  int last_errno = 0;
  for (;;) {
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
      int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
        ::freeaddrinfo(res);
        set_nodelay(fd);
        return TcpStream(fd);
      }
      last_errno = errno;
      ::close(fd);
    }
    // The peer may simply not be listening yet; retry until the deadline.
    if (Clock::now() >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ::freeaddrinfo(res);
  throw NetError("connect to " + host + ":" + port_str + " failed: " +
                 std::strerror(last_errno));
}

void TcpStream::set_recv_timeout(int ms) {
  timeval tv{};
  tv.tv_sec = ms / 1000;
  tv.tv_usec = (ms % 1000) * 1000;
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

void TcpStream::write_all(std::span<const std::uint8_t> data) {
  std::size_t done = 0;
  while (done < data.size()) {
    ssize_t w = ::send(fd_, data.data() + done, data.size() - done, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw NetError(std::string("send failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(w);
  }
}

void TcpStream::read_exact(std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    ssize_t r = ::recv(fd_, out.data() + done, out.size() - done, 0);
    if (r == 0) throw NetError("connection closed by peer");
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw NetError("receive timeout");
      throw NetError(std::string("recv failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(r);
  }
}

TcpListener::TcpListener(TcpListener&& o) noexcept : fd_(o.fd_), port_(o.port_) { o.fd_ = -1; }

TcpListener& TcpListener::operator=(TcpListener&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    port_ = o.port_;
    o.fd_ = -1;
  }
  return *this;
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

TcpListener TcpListener::bind(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 ||
      res == nullptr)
    throw NetError("bind: cannot resolve " + host);
  TcpListener lst;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 8) == 0) {
      sockaddr_storage ss{};
      socklen_t len = sizeof(ss);
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &len);
      lst.fd_ = fd;
      lst.port_ = ss.ss_family == AF_INET6
                      ? ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port)
                      : ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
      break;
    }
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (lst.fd_ < 0) throw NetError("bind to " + host + ":" + std::to_string(port) + " failed");
  return lst;
}

TcpStream TcpListener::accept(int timeout_ms) {
  pollfd pfd{fd_, POLLIN, 0};
  int rc = ::poll(&pfd, 1, timeout_ms);
  if (rc == 0) throw NetError("accept timeout");
  if (rc < 0) throw NetError(std::string("poll failed: ") + std::strerror(errno));
  int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw NetError(std::string("accept failed: ") + std::strerror(errno));
  set_nodelay(fd);
  return TcpStream(fd);
}

void write_frame(TcpStream& s, const Frame& f) { s.write_all(frame_to_bytes(f)); }

Frame read_frame(TcpStream& s) {
  std::uint8_t hdr[4];
  s.read_exact(hdr);
  std::uint32_t len = std::uint32_t(hdr[0]) << 24 | std::uint32_t(hdr[1]) << 16 |
                      std::uint32_t(hdr[2]) << 8 | hdr[3];
  if (len < 9 || len > 9 + kMaxFramePayload) throw NetError("frame length out of range");
  std::vector<std::uint8_t> body(len);
  s.read_exact(body);
  Frame f;
  f.type = static_cast<MsgType>(body[0]);
  f.step = 0;
  for (int i = 0; i < 8; ++i) f.step = f.step << 8 | body[1 + i];
  f.payload.assign(body.begin() + 9, body.end());
  return f;
}

Frame exchange_frames(TcpStream& s, const Frame& out) {
  std::exception_ptr write_err;
  std::thread writer([&] {
    try {
      write_frame(s, out);
    } catch (...) {
      write_err = std::current_exception();
    }
  });
  Frame in;
  std::exception_ptr read_err;
  try {
    in = read_frame(s);
  } catch (...) {
    read_err = std::current_exception();
  }
  writer.join();
  if (read_err) std::rethrow_exception(read_err);
  if (write_err) std::rethrow_exception(write_err);
  return in;
}

Endpoint parse_endpoint(const std::string& s) {
  auto pos = s.rfind(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 == s.size())
    throw NetError("endpoint must be host:port, got '" + s + "'");
  int port = std::stoi(s.substr(pos + 1));
  // Port 0 is allowed: listeners take it as "pick an ephemeral port".
  if (port < 0 || port > 65535) throw NetError("endpoint port out of range in '" + s + "'");
  return Endpoint{s.substr(0, pos), static_cast<std::uint16_t>(port)};
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

namespace {

// Connection with a known remote role and an attached frame log.
struct Peer {
  TcpStream stream;
  std::uint8_t role = 255;
  FrameLogger* log = nullptr;

  void send(const Frame& f) {
    if (log && *log) (*log)(FrameLogEntry{true, role, f.type, f.step, f.payload.size()});
    write_frame(stream, f);
  }
  Frame recv() {
    Frame f = read_frame(stream);
    if (log && *log) (*log)(FrameLogEntry{false, role, f.type, f.step, f.payload.size()});
    return f;
  }
  Frame exchange(const Frame& out) {
    if (log && *log) (*log)(FrameLogEntry{true, role, out.type, out.step, out.payload.size()});
    Frame f = exchange_frames(stream, out);
    if (log && *log) (*log)(FrameLogEntry{false, role, f.type, f.step, f.payload.size()});
    return f;
  }
};

[[noreturn]] void abort_session(Peer& client, std::uint16_t code, const std::string& msg,
                                std::uint64_t step) {
  try {
    client.send(Frame{MsgType::kError, step, encode_error(code, msg)});
  } catch (const NetError&) {
    // The connection may already be gone; the abort still stands.
  }
  throw NetError("session aborted: " + msg);
}

Frame expect_frame(Peer& from, MsgType want, std::uint64_t step, Peer& client) {
  Frame f = from.recv();
  if (f.type == MsgType::kError) {
    auto [code, msg] = decode_error(f.payload);
    throw NetError("peer reported error " + std::to_string(code) + ": " + msg);
  }
  if (f.type != want)
    abort_session(client, 2, std::string("unexpected ") + msg_type_name(f.type) + ", wanted " +
                                 msg_type_name(want), f.step);
  if (f.step != step)
    abort_session(client, 3, "out-of-order step index " + std::to_string(f.step) +
                                 ", expected " + std::to_string(step), f.step);
  return f;
}

}  // namespace

std::uint64_t serve_party(PartyConfig cfg) {
  if (cfg.party != 0 && cfg.party != 1) throw NetError("serve_party: party must be 0 or 1");
  if (cfg.party == 0 && !cfg.peer) throw NetError("serve_party: party 0 requires a peer endpoint");

  TcpListener listener = TcpListener::bind(cfg.listen_host, cfg.listen_port);
  if (cfg.on_listening) cfg.on_listening(listener.port());

  Peer client{TcpStream{}, kRoleClient, &cfg.frame_log};
  Peer peer{TcpStream{}, static_cast<std::uint8_t>(1 - cfg.party), &cfg.frame_log};

  auto handshake_in = [&](Peer& p) {
    Frame f = p.recv();
    if (f.type != MsgType::kHello) throw NetError("handshake: expected HELLO");
    SessionHeader h = decode_session_header(f.payload);
    if (!(h.params == cfg.params)) {
      p.send(Frame{MsgType::kError, 0, encode_error(1, "session parameter mismatch")});
      throw NetError("handshake: session parameter mismatch");
    }
    p.send(Frame{MsgType::kAck, 0, {}});
    return h.role;
  };

  if (cfg.party == 1) {
    // Two inbound connections, client and party 0, in either order.
    for (int i = 0; i < 2; ++i) {
      TcpStream conn = listener.accept(cfg.timeout_ms);
      conn.set_recv_timeout(cfg.timeout_ms);
      Peer probe{std::move(conn), 255, &cfg.frame_log};
      std::uint8_t role = handshake_in(probe);
      if (role == kRoleClient && !client.stream.valid()) {
        client.stream = std::move(probe.stream);
      } else if (role == kRoleParty0 && !peer.stream.valid()) {
        peer.stream = std::move(probe.stream);
      } else {
        throw NetError("handshake: duplicate or unexpected role");
      }
    }
  } else {
    TcpStream conn = listener.accept(cfg.timeout_ms);
    conn.set_recv_timeout(cfg.timeout_ms);
    Peer probe{std::move(conn), 255, &cfg.frame_log};
    std::uint8_t role = handshake_in(probe);
    if (role != kRoleClient) throw NetError("handshake: party 0 expects the client first");
    client.stream = std::move(probe.stream);
    // One persistent duplex link to party 1.
    peer.stream = TcpStream::connect(cfg.peer->host, cfg.peer->port, cfg.timeout_ms);
    peer.stream.set_recv_timeout(cfg.timeout_ms);
    peer.send(Frame{MsgType::kHello, 0,
                    encode_session_header(SessionHeader{cfg.params, kRoleParty0})});
    Frame ack = peer.recv();
    if (ack.type != MsgType::kAck) throw NetError("handshake: party 1 did not acknowledge");
  }

  std::optional<PartyCore> core;
  const Modulus& q = cfg.params.q;

  for (;;) {
    Frame f = client.recv();
    switch (f.type) {
      case MsgType::kSetup: {
        if (core) abort_session(client, 2, "repeated SETUP", f.step);
        try {
          core.emplace(cfg.party, cfg.params);
          core->install_offline(decode_offline(q, f.payload));
        } catch (const std::exception& e) {
          abort_session(client, 4, e.what(), f.step);
        }
        client.send(Frame{MsgType::kAck, 0, {}});
        break;
      }
      case MsgType::kStepBundle: {
        if (!core) abort_session(client, 2, "STEP_BUNDLE before SETUP", f.step);
        try {
          StepBundleMsg bundle = decode_step_bundle(q, cfg.params.ell, f.step, f.payload);
          protocols::MultRound1Msg my_mask = core->on_step_bundle(bundle);
          Frame peer_frame = peer.exchange(
              Frame{MsgType::kMultMask, f.step, encode_mult_mask(my_mask)});
          if (peer_frame.type != MsgType::kMultMask || peer_frame.step != f.step)
            abort_session(client, 3, "bad peer mask frame", f.step);
          auto fin = core->on_peer_mask(decode_mult_mask(q, peer_frame.payload));
          InputShareMsg input{0, 0, ZqMatrix(q, 1, 1)};
          if (cfg.party == 0) {
            peer.send(Frame{MsgType::kTruncMask, f.step, encode_trunc_mask(*fin.trunc_mask)});
            input = std::move(*fin.input);
          } else {
            Frame mask = expect_frame(peer, MsgType::kTruncMask, f.step, client);
            input = core->on_trunc_mask(decode_trunc_mask(q, mask.payload));
          }
          client.send(Frame{MsgType::kInputShare, f.step, encode_input_share(input)});
          if (cfg.trace)
            *cfg.trace << f.step << "," << to_hex(core->state_share().to_bytes()) << "\n"
                       << std::flush;
        } catch (const NetError&) {
          throw;
        } catch (const std::exception& e) {
          abort_session(client, 3, e.what(), f.step);
        }
        break;
      }
      case MsgType::kBenchMult: {
        try {
          BenchMultMsg m = decode_bench_mult(q, f.payload);
          auto my_mask =
              protocols::mult_local_mask(cfg.party, m.x_share, m.y_share, m.triple);
          Frame peer_frame = peer.exchange(
              Frame{MsgType::kMultMask, f.step, encode_mult_mask(my_mask)});
          if (peer_frame.type != MsgType::kMultMask || peer_frame.step != f.step)
            abort_session(client, 3, "bad peer mask frame", f.step);
          auto peer_mask = decode_mult_mask(q, peer_frame.payload);
          ZqMatrix s = my_mask.s_i.add(peer_mask.s_i);
          ZqMatrix t = my_mask.t_i.add(peer_mask.t_i);
          ZqMatrix z = protocols::mult_finalize(cfg.party, s, t, m.triple);
          client.send(Frame{MsgType::kBenchOutput, f.step, z.to_bytes()});
        } catch (const NetError&) {
          throw;
        } catch (const std::exception& e) {
          abort_session(client, 4, e.what(), f.step);
        }
        break;
      }
      case MsgType::kBenchTrunc: {
        try {
          BenchTruncMsg m = decode_bench_trunc(q, cfg.params.ell, f.payload);
          ZqMatrix y_i = protocols::trunc_local_mask(cfg.party, m.x_share, m.pair);
          ZqMatrix z(q, 1, 1);
          if (cfg.party == 0) {
            peer.send(Frame{MsgType::kTruncMask, f.step,
                            encode_trunc_mask(protocols::TruncMaskMsg{y_i})});
            z = protocols::trunc_finalize(0, m.x_share, m.pair, std::nullopt);
          } else {
            Frame mask = expect_frame(peer, MsgType::kTruncMask, f.step, client);
            ZqMatrix y = decode_trunc_mask(q, mask.payload).y0.add(y_i);
            z = protocols::trunc_finalize(1, m.x_share, m.pair, y);
          }
          client.send(Frame{MsgType::kBenchOutput, f.step, z.to_bytes()});
        } catch (const NetError&) {
          throw;
        } catch (const std::exception& e) {
          abort_session(client, 4, e.what(), f.step);
        }
        break;
      }
      case MsgType::kClose:
        return core ? core->steps_done() : 0;
      case MsgType::kError: {
        auto [code, msg] = decode_error(f.payload);
        throw NetError("client reported error " + std::to_string(code) + ": " + msg);
      }
      default:
        abort_session(client, 2, std::string("unexpected ") + msg_type_name(f.type) +
                                     " from client", f.step);
    }
  }
}

std::vector<StepResult> client_session(const ClientConfig& cfg, Csprng master,
                                       const MeasurementSource& source) {
  ClientCore core(cfg.spec, std::move(master));
  SessionParams params = cfg.spec.session_params();
  FrameLogger log = cfg.frame_log;

  Peer p0{TcpStream::connect(cfg.party0.host, cfg.party0.port, cfg.timeout_ms), kRoleParty0,
          &log};
  Peer p1{TcpStream::connect(cfg.party1.host, cfg.party1.port, cfg.timeout_ms), kRoleParty1,
          &log};
  p0.stream.set_recv_timeout(cfg.timeout_ms);
  p1.stream.set_recv_timeout(cfg.timeout_ms);

  auto hello = encode_session_header(SessionHeader{params, kRoleClient});
  p0.send(Frame{MsgType::kHello, 0, hello});
  p1.send(Frame{MsgType::kHello, 0, hello});
  auto expect_ack = [](Peer& p, const char* who) {
    Frame f = p.recv();
    if (f.type == MsgType::kError) {
      auto [code, msg] = decode_error(f.payload);
      throw NetError(std::string(who) + " rejected session: " + msg);
    }
    if (f.type != MsgType::kAck) throw NetError(std::string(who) + ": expected ACK");
  };
  expect_ack(p0, "party 0");
  expect_ack(p1, "party 1");

  auto offline = core.offline_setup();
  p0.send(Frame{MsgType::kSetup, 0, encode_offline(offline[0])});
  p1.send(Frame{MsgType::kSetup, 0, encode_offline(offline[1])});
  expect_ack(p0, "party 0");
  expect_ack(p1, "party 1");

  // Optional pre-generation: a producer thread fills a bounded queue from the
  // dealer while the loop waits on party replies.
  std::optional<BundleQueue> queue;
  std::thread producer;
  struct ProducerGuard {
    std::optional<BundleQueue>& q;
    std::thread& t;
    ~ProducerGuard() {
      if (q) q->close();
      if (t.joinable()) t.join();
    }
  } producer_guard{queue, producer};
  if (cfg.prefetch > 0) {
    queue.emplace(cfg.prefetch);
    producer = std::thread([&] {
      try {
        for (;;) queue->push(core.dealer().next());
      } catch (const std::logic_error&) {
        // queue closed
      }
    });
  }

  std::vector<StepResult> results;
  std::optional<FixedMatrix> last_u;
  const auto session_start = Clock::now();
  const auto period = std::chrono::milliseconds(cfg.period_ms);

  for (std::uint64_t t = 0;; ++t) {
    std::optional<FixedMatrix> y = source(t, last_u ? &*last_u : nullptr);
    if (!y) break;
    auto bundles = queue ? core.step_begin(*y, *queue->pop()) : core.step_begin(*y);
    Frame f0{MsgType::kStepBundle, t, encode_step_bundle(bundles[0])};
    Frame f1{MsgType::kStepBundle, t, encode_step_bundle(bundles[1])};
    const auto t_send = Clock::now();
    p0.send(f0);
    p1.send(f1);
    Frame r0, r1;
    try {
      auto take_input = [&](Peer& p) {
        Frame f = p.recv();
        if (f.type == MsgType::kError) {
          auto [code, msg] = decode_error(f.payload);
          throw NetError("party error " + std::to_string(code) + ": " + msg);
        }
        if (f.type != MsgType::kInputShare || f.step != t)
          throw NetError("expected INPUT_SHARE for step " + std::to_string(t));
        return f;
      };
      r0 = take_input(p0);
      r1 = take_input(p1);
    } catch (const NetError& e) {
      if (cfg.on_timeout == TimeoutPolicy::kAbort || !last_u) throw;
      // Hold the last input: report it for this step and end the session; the
      // parties are now out of lockstep and cannot continue safely.
      std::fprintf(stderr, "step %llu: %s; holding the last input and closing\n",
                   static_cast<unsigned long long>(t), e.what());
      results.push_back(StepResult{t, *y, *last_u, 0.0, true});
      return results;
    }
    const auto t_recv = Clock::now();
    InputShareMsg in0 = decode_input_share(params.q, t, r0.payload);
    InputShareMsg in1 = decode_input_share(params.q, t, r1.payload);
    FixedMatrix u = core.step_end(in0, in1);
    double rtt_ms = std::chrono::duration<double, std::milli>(t_recv - t_send).count();
    if (cfg.trace) {
      std::string u_str;
      for (std::size_t r = 0; r < u.rows(); ++r) {
        if (r) u_str += ';';
        u_str += u.decimal(r, 0);
      }
      *cfg.trace << t << "," << u_str << "," << to_hex(in0.u_share.to_bytes()) << ","
                 << to_hex(in1.u_share.to_bytes()) << "\n"
                 << std::flush;
    }
    results.push_back(StepResult{t, *y, u, rtt_ms, false});
    last_u = std::move(u);
    if (cfg.period_ms > 0) std::this_thread::sleep_until(session_start + (t + 1) * period);
  }

  p0.send(Frame{MsgType::kClose, 0, {}});
  p1.send(Frame{MsgType::kClose, 0, {}});
  return results;
}

}  // namespace stpc::net
