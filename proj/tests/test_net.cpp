#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <future>
#include <sstream>
#include <thread>

#include "stpc/net.hpp"
#include "testutil.hpp"

using namespace stpc;
using namespace stpc::net;

namespace {

// Runs a party in a thread, reporting its ephemeral port through a promise.
struct PartyThread {
  std::thread thread;
  std::uint16_t port = 0;
  std::exception_ptr error;

  PartyThread(int role, SessionParams params, std::uint16_t peer_port, std::ostream* trace,
              FrameLogger log = nullptr) {
    std::promise<std::uint16_t> port_promise;
    auto port_future = port_promise.get_future();
    thread = std::thread([this, role, params = std::move(params), peer_port, trace, log,
                          pp = std::move(port_promise)]() mutable {
      try {
        PartyConfig cfg{role,
                        std::move(params),
                        "127.0.0.1",
                        0,
                        role == 0 ? std::make_optional(Endpoint{"127.0.0.1", peer_port})
                                  : std::nullopt,
                        5000,
                        trace,
                        [&pp](std::uint16_t p) { pp.set_value(p); },
                        log};
        serve_party(std::move(cfg));
      } catch (...) {
        error = std::current_exception();
        try {
          pp.set_value(0);
        } catch (const std::future_error&) {
        }
      }
    });
    port = port_future.get();
  }

  void join() { thread.join(); }
};

FixedMatrix fixed_y(const char* a, const char* b) {
  return FixedMatrix::from_decimal({18, 9}, 2, 1, {a, b});
}

}  // namespace

TEST_CASE("frame encoding layout") {
  Frame f{MsgType::kStepBundle, 0x0102030405060708ull, {0xaa, 0xbb}};
  auto bytes = frame_to_bytes(f);
  REQUIRE(bytes.size() == 15);
  // 4-byte length = 9 + payload
  CHECK(bytes[0] == 0);
  CHECK(bytes[1] == 0);
  CHECK(bytes[2] == 0);
  CHECK(bytes[3] == 11);
  CHECK(bytes[4] == static_cast<std::uint8_t>(MsgType::kStepBundle));
  for (int i = 0; i < 8; ++i) CHECK(bytes[5 + i] == i + 1);
  CHECK(bytes[13] == 0xaa);
  CHECK(bytes[14] == 0xbb);
}

TEST_CASE("session header round trip") {
  SessionParams params{Modulus::from_string(kPinnedPrime256), 3, 1, 2, 64, 32, 80};
  SessionHeader h{params, kRoleClient};
  auto bytes = encode_session_header(h);
  SessionHeader back = decode_session_header(bytes);
  CHECK(back.params == params);
  CHECK(back.role == kRoleClient);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_session_header(bad), NetError);
  auto badver = bytes;
  badver[4] = 9;
  CHECK_THROWS_AS(decode_session_header(badver), NetError);
}

TEST_CASE("payload codecs round trip") {
  Modulus q = Modulus::from_string(kPinnedPrime248);
  Csprng rng(71);

  SUBCASE("offline") {
    OfflineMsg m{sample_uniform(q, 4, 5, rng), sample_uniform(q, 3, 1, rng)};
    OfflineMsg back = decode_offline(q, encode_offline(m));
    CHECK(back.phi_share == m.phi_share);
    CHECK(back.x0_share == m.x0_share);
  }

  SUBCASE("step bundle") {
    StepBundleMsg m{7,
                    sample_uniform(q, 2, 1, rng),
                    TripleShare{sample_uniform(q, 4, 5, rng), sample_uniform(q, 5, 1, rng),
                                sample_uniform(q, 4, 1, rng)},
                    TruncPairShare{sample_uniform(q, 3, 1, rng), sample_uniform(q, 3, 1, rng),
                                   32}};
    StepBundleMsg back = decode_step_bundle(q, 32, 7, encode_step_bundle(m));
    CHECK(back.step == 7);
    CHECK(back.y_share == m.y_share);
    CHECK(back.triple.u == m.triple.u);
    CHECK(back.triple.v == m.triple.v);
    CHECK(back.triple.w == m.triple.w);
    CHECK(back.trunc.r == m.trunc.r);
    CHECK(back.trunc.r_prime == m.trunc.r_prime);
  }

  SUBCASE("masks and input shares") {
    protocols::MultRound1Msg mm{sample_uniform(q, 4, 5, rng), sample_uniform(q, 5, 1, rng)};
    auto mb = decode_mult_mask(q, encode_mult_mask(mm));
    CHECK(mb.s_i == mm.s_i);
    CHECK(mb.t_i == mm.t_i);

    protocols::TruncMaskMsg tm{sample_uniform(q, 3, 1, rng)};
    CHECK(decode_trunc_mask(q, encode_trunc_mask(tm)).y0 == tm.y0);

    InputShareMsg im{9, 1, sample_uniform(q, 1, 1, rng)};
    InputShareMsg ib = decode_input_share(q, 9, encode_input_share(im));
    CHECK(ib.party == 1);
    CHECK(ib.u_share == im.u_share);
  }

  SUBCASE("trailing bytes are rejected") {
    protocols::TruncMaskMsg tm{sample_uniform(q, 3, 1, rng)};
    auto bytes = encode_trunc_mask(tm);
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_trunc_mask(q, bytes), NetError);
  }

  SUBCASE("error payload") {
    auto bytes = encode_error(3, "out of order");
    auto [code, msg] = decode_error(bytes);
    CHECK(code == 3);
    CHECK(msg == "out of order");
  }
}

TEST_CASE("endpoint parsing") {
  Endpoint e = parse_endpoint("10.0.0.1:8080");
  CHECK(e.host == "10.0.0.1");
  CHECK(e.port == 8080);
  CHECK(parse_endpoint("localhost:0").port == 0);
  CHECK_THROWS_AS(parse_endpoint("nocolon"), NetError);
  CHECK_THROWS_AS(parse_endpoint("host:"), NetError);
  CHECK_THROWS_AS(parse_endpoint("host:99999"), NetError);
}

TEST_CASE("loopback session matches the in-process executor") {
  ControllerSpec spec = testutil::demo_controller(256);
  SessionParams params = spec.session_params();

  std::ostringstream p0_trace, p1_trace;
  PartyThread p1(1, params, 0, &p1_trace);
  REQUIRE(p1.port != 0);
  PartyThread p0(0, params, p1.port, &p0_trace);
  REQUIRE(p0.port != 0);

  const std::uint64_t kSteps = 5;
  auto measurement = [](std::uint64_t t) {
    Csprng rng(1000 + t);
    std::vector<BigInt> scaled{sample_int_bits(18, rng), sample_int_bits(18, rng)};
    return FixedMatrix::from_scaled({18, 9}, 2, 1, scaled);
  };

  std::ostringstream client_trace;
  ClientConfig ccfg{spec,
                    Endpoint{"127.0.0.1", p0.port},
                    Endpoint{"127.0.0.1", p1.port},
                    5000,
                    0,
                    TimeoutPolicy::kAbort,
                    &client_trace,
                    nullptr};
  auto results = client_session(ccfg, Csprng(77),
                                [&](std::uint64_t t, const FixedMatrix*)
                                    -> std::optional<FixedMatrix> {
                                  if (t >= kSteps) return std::nullopt;
                                  return measurement(t);
                                });
  p0.join();
  p1.join();
  CHECK_FALSE(p0.error);
  CHECK_FALSE(p1.error);
  REQUIRE(results.size() == kSteps);

  // identical seeds through the in-process executor give identical bytes
  std::ostringstream c2, p02, p12;
  InprocessSession session(spec, Csprng(77));
  for (std::uint64_t t = 0; t < kSteps; ++t) {
    FixedMatrix u = session.step(measurement(t));
    CHECK(u == results[t].u);
    const auto& shares = *session.last_input_shares();
    std::string u_str;
    for (std::size_t r = 0; r < u.rows(); ++r) u_str += u.decimal(r, 0);
    c2 << t << "," << u_str << "," << to_hex(shares[0].to_bytes()) << ","
       << to_hex(shares[1].to_bytes()) << "\n";
    p02 << t << "," << to_hex(session.party(0).state_share().to_bytes()) << "\n";
    p12 << t << "," << to_hex(session.party(1).state_share().to_bytes()) << "\n";
  }
  CHECK(client_trace.str() == c2.str());
  CHECK(p0_trace.str() == p02.str());
  CHECK(p1_trace.str() == p12.str());
}

TEST_CASE("per-step frame traffic matches the protocol structure") {
  ControllerSpec spec = testutil::demo_controller(256);
  SessionParams params = spec.session_params();

  struct Counter {
    std::atomic<int> out_mult{0}, in_mult{0}, out_trunc{0}, in_trunc{0}, out_input{0},
        in_bundle{0};
    FrameLogger logger() {
      return [this](const FrameLogEntry& e) {
        if (e.type == MsgType::kMultMask) (e.outbound ? out_mult : in_mult)++;
        if (e.type == MsgType::kTruncMask) (e.outbound ? out_trunc : in_trunc)++;
        if (e.type == MsgType::kInputShare && e.outbound) out_input++;
        if (e.type == MsgType::kStepBundle && !e.outbound) in_bundle++;
      };
    }
  };
  Counter c0, c1;

  PartyThread p1(1, params, 0, nullptr, c1.logger());
  PartyThread p0(0, params, p1.port, nullptr, c0.logger());

  const std::uint64_t kSteps = 3;
  ClientConfig ccfg{spec, Endpoint{"127.0.0.1", p0.port}, Endpoint{"127.0.0.1", p1.port},
                    5000, 0, TimeoutPolicy::kAbort, nullptr, nullptr};
  auto results = client_session(ccfg, Csprng(78),
                                [&](std::uint64_t t, const FixedMatrix*)
                                    -> std::optional<FixedMatrix> {
                                  if (t >= kSteps) return std::nullopt;
                                  return fixed_y("1.5", "-2.0");
                                });
  p0.join();
  p1.join();
  REQUIRE(results.size() == kSteps);

  const int steps = static_cast<int>(kSteps);
  // Mult: one mask frame each way per party per step.
  CHECK(c0.out_mult == steps);
  CHECK(c0.in_mult == steps);
  CHECK(c1.out_mult == steps);
  CHECK(c1.in_mult == steps);
  // Trunc: exactly one frame, party 0 -> party 1, none back.
  CHECK(c0.out_trunc == steps);
  CHECK(c0.in_trunc == 0);
  CHECK(c1.in_trunc == steps);
  CHECK(c1.out_trunc == 0);
  // One bundle in and one input share out per party per step.
  CHECK(c0.in_bundle == steps);
  CHECK(c1.in_bundle == steps);
  CHECK(c0.out_input == steps);
  CHECK(c1.out_input == steps);
}

TEST_CASE("handshake rejects mismatched parameters") {
  ControllerSpec spec = testutil::demo_controller(256);
  SessionParams params = spec.session_params();
  PartyThread p1(1, params, 0, nullptr);

  SessionParams wrong = params;
  wrong.lambda = 40;
  TcpStream conn = TcpStream::connect("127.0.0.1", p1.port, 2000);
  conn.set_recv_timeout(2000);
  write_frame(conn, Frame{MsgType::kHello, 0,
                          encode_session_header(SessionHeader{wrong, kRoleClient})});
  Frame reply = read_frame(conn);
  CHECK(reply.type == MsgType::kError);
  auto [code, msg] = decode_error(reply.payload);
  CHECK(code == 1);
  p1.join();
  CHECK(p1.error);  // the party aborts the session
}

TEST_CASE("stale step index draws an error frame and aborts") {
  ControllerSpec spec = testutil::demo_controller(256);
  SessionParams params = spec.session_params();
  PartyThread p1(1, params, 0, nullptr);
  PartyThread p0(0, params, p1.port, nullptr);

  TcpStream c0 = TcpStream::connect("127.0.0.1", p0.port, 2000);
  TcpStream c1 = TcpStream::connect("127.0.0.1", p1.port, 2000);
  c0.set_recv_timeout(2000);
  c1.set_recv_timeout(2000);
  auto hello = encode_session_header(SessionHeader{params, kRoleClient});
  write_frame(c0, Frame{MsgType::kHello, 0, hello});
  write_frame(c1, Frame{MsgType::kHello, 0, hello});
  CHECK(read_frame(c0).type == MsgType::kAck);
  CHECK(read_frame(c1).type == MsgType::kAck);

  ClientCore core(spec, Csprng(79));
  auto offline = core.offline_setup();
  write_frame(c0, Frame{MsgType::kSetup, 0, encode_offline(offline[0])});
  write_frame(c1, Frame{MsgType::kSetup, 0, encode_offline(offline[1])});
  CHECK(read_frame(c0).type == MsgType::kAck);
  CHECK(read_frame(c1).type == MsgType::kAck);

  auto bundles = core.step_begin(fixed_y("0", "0"));
  // replay a stale index to party 0 only; party 1 never sees a bundle
  write_frame(c0, Frame{MsgType::kStepBundle, 5, encode_step_bundle(bundles[0])});
  Frame reply = read_frame(c0);
  CHECK(reply.type == MsgType::kError);
  auto [code, msg] = decode_error(reply.payload);
  CHECK(code == 3);

  c0.close();
  c1.close();
  p0.join();
  p1.join();
  CHECK(p0.error);
}

TEST_CASE("prefetched randomness leaves the session bytes unchanged") {
  ControllerSpec spec = testutil::demo_controller(256);
  SessionParams params = spec.session_params();
  auto measurement = [](std::uint64_t t) {
    Csprng rng(3000 + t);
    std::vector<BigInt> scaled{sample_int_bits(18, rng), sample_int_bits(18, rng)};
    return FixedMatrix::from_scaled({18, 9}, 2, 1, scaled);
  };
  const std::uint64_t kSteps = 6;

  auto run_once = [&](std::size_t prefetch) {
    std::ostringstream trace;
    PartyThread p1(1, params, 0, nullptr);
    PartyThread p0(0, params, p1.port, nullptr);
    ClientConfig ccfg{spec,
                      Endpoint{"127.0.0.1", p0.port},
                      Endpoint{"127.0.0.1", p1.port},
                      5000,
                      0,
                      TimeoutPolicy::kAbort,
                      &trace,
                      nullptr,
                      prefetch};
    auto results = client_session(ccfg, Csprng(91),
                                  [&](std::uint64_t t, const FixedMatrix*)
                                      -> std::optional<FixedMatrix> {
                                    if (t >= kSteps) return std::nullopt;
                                    return measurement(t);
                                  });
    p0.join();
    p1.join();
    REQUIRE_FALSE(p0.error);
    REQUIRE_FALSE(p1.error);
    REQUIRE(results.size() == kSteps);
    return trace.str();
  };

  CHECK(run_once(0) == run_once(4));
}

TEST_CASE("zero-step session performs setup only") {
  ControllerSpec spec = testutil::demo_controller(256);
  SessionParams params = spec.session_params();
  PartyThread p1(1, params, 0, nullptr);
  PartyThread p0(0, params, p1.port, nullptr);
  ClientConfig ccfg{spec, Endpoint{"127.0.0.1", p0.port}, Endpoint{"127.0.0.1", p1.port},
                    5000, 0, TimeoutPolicy::kAbort, nullptr, nullptr};
  auto results = client_session(
      ccfg, Csprng(92), [](std::uint64_t, const FixedMatrix*) { return std::nullopt; });
  p0.join();
  p1.join();
  CHECK(results.empty());
  CHECK_FALSE(p0.error);
  CHECK_FALSE(p1.error);
}

TEST_CASE("the sampling period paces the loop") {
  ControllerSpec spec = testutil::demo_controller(256);
  SessionParams params = spec.session_params();
  PartyThread p1(1, params, 0, nullptr);
  PartyThread p0(0, params, p1.port, nullptr);
  ClientConfig ccfg{spec, Endpoint{"127.0.0.1", p0.port}, Endpoint{"127.0.0.1", p1.port},
                    5000, 40, TimeoutPolicy::kAbort, nullptr, nullptr};
  const auto t0 = std::chrono::steady_clock::now();
  auto results = client_session(ccfg, Csprng(93),
                                [](std::uint64_t t, const FixedMatrix*)
                                    -> std::optional<FixedMatrix> {
                                  if (t >= 3) return std::nullopt;
                                  return fixed_y("0.5", "-0.5");
                                });
  const double elapsed =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  p0.join();
  p1.join();
  REQUIRE(results.size() == 3);
  CHECK(elapsed >= 100.0);  // three 40 ms slots, minus scheduler slack
}

namespace {

// Scripted party pair that serves step 0 honestly and then goes silent,
// exercising the client-side receive timeout. The two party cores exchange
// their masks through an in-memory rendezvous instead of a peer socket.
struct SilentFixture {
  struct Rendezvous {
    std::mutex mu;
    std::condition_variable cv;
    std::array<std::optional<protocols::MultRound1Msg>, 2> masks;
    std::optional<protocols::TruncMaskMsg> tmask;

    void put_mask(int party, protocols::MultRound1Msg m) {
      std::lock_guard lock(mu);
      masks[party] = std::move(m);
      cv.notify_all();
    }
    protocols::MultRound1Msg get_mask(int party) {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return masks[party].has_value(); });
      return *masks[party];
    }
    void put_tmask(protocols::TruncMaskMsg m) {
      std::lock_guard lock(mu);
      tmask = std::move(m);
      cv.notify_all();
    }
    protocols::TruncMaskMsg get_tmask() {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return tmask.has_value(); });
      return *tmask;
    }
  };

  Rendezvous rendezvous;
  std::array<std::uint16_t, 2> ports{};
  std::vector<std::thread> threads;

  explicit SilentFixture(const SessionParams& params) {
    for (int party = 0; party < 2; ++party) {
      std::promise<std::uint16_t> pp;
      auto pf = pp.get_future();
      threads.emplace_back([this, party, params, pp = std::move(pp)]() mutable {
        try {
          TcpListener lst = TcpListener::bind("127.0.0.1", 0);
          pp.set_value(lst.port());
          TcpStream conn = lst.accept(5000);
          conn.set_recv_timeout(5000);
          Frame hello = read_frame(conn);
          if (hello.type != MsgType::kHello) return;
          write_frame(conn, Frame{MsgType::kAck, 0, {}});
          Frame setup = read_frame(conn);
          if (setup.type != MsgType::kSetup) return;
          PartyCore core(party, params);
          core.install_offline(decode_offline(params.q, setup.payload));
          write_frame(conn, Frame{MsgType::kAck, 0, {}});

          // step 0, served honestly
          Frame b = read_frame(conn);
          if (b.type != MsgType::kStepBundle) return;
          auto bundle = decode_step_bundle(params.q, params.ell, b.step, b.payload);
          rendezvous.put_mask(party, core.on_step_bundle(bundle));
          auto fin = core.on_peer_mask(rendezvous.get_mask(1 - party));
          InputShareMsg input{0, party, ZqMatrix(params.q, 1, 1)};
          if (party == 0) {
            rendezvous.put_tmask(*fin.trunc_mask);
            input = std::move(*fin.input);
          } else {
            input = core.on_trunc_mask(rendezvous.get_tmask());
          }
          write_frame(conn, Frame{MsgType::kInputShare, 0, encode_input_share(input)});

          // step 1 arrives and is silently dropped
          Frame dropped = read_frame(conn);
          (void)dropped;
          // wait for the client to give up and close the connection
          try {
            (void)read_frame(conn);
          } catch (const NetError&) {
          }
        } catch (...) {
          // the fixture tears down with the test either way
        }
      });
      ports[party] = pf.get();
    }
  }

  ~SilentFixture() {
    for (auto& t : threads) t.join();
  }
};

}  // namespace

TEST_CASE("receive timeout follows the configured policy") {
  ControllerSpec spec = testutil::demo_controller(256);
  SessionParams params = spec.session_params();
  auto source = [](std::uint64_t t, const FixedMatrix*) -> std::optional<FixedMatrix> {
    if (t >= 3) return std::nullopt;
    return fixed_y("1.0", "0.0");
  };

  SUBCASE("hold-last-input reports the previous input and ends the session") {
    SilentFixture fx(params);
    ClientConfig ccfg{spec,
                      Endpoint{"127.0.0.1", fx.ports[0]},
                      Endpoint{"127.0.0.1", fx.ports[1]},
                      400,
                      0,
                      TimeoutPolicy::kHoldLastInput,
                      nullptr,
                      nullptr};
    auto results = client_session(ccfg, Csprng(94), source);
    REQUIRE(results.size() == 2);
    CHECK_FALSE(results[0].timed_out);
    CHECK(results[1].timed_out);
    CHECK(results[1].u == results[0].u);
  }

  SUBCASE("abort raises the transport error") {
    SilentFixture fx(params);
    ClientConfig ccfg{spec,
                      Endpoint{"127.0.0.1", fx.ports[0]},
                      Endpoint{"127.0.0.1", fx.ports[1]},
                      400,
                      0,
                      TimeoutPolicy::kAbort,
                      nullptr,
                      nullptr};
    CHECK_THROWS_AS(client_session(ccfg, Csprng(95), source), NetError);
  }
}
