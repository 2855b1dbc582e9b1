#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>

#include "stpc/fixedpoint.hpp"
#include "stpc/protocols.hpp"

namespace stpc {

// Smallest primes of exactly 248 and 256 bits. The shipped defaults, pinned
// so that every deployment and test runs against the same modulus.
extern const char kPinnedPrime248[];
extern const char kPinnedPrime256[];

// Smallest bit length B with log2 q >= 3k - ell + lambda + 2 + floor(log2 f),
// f = max{n,p} (1+p) sqrt(n) c / (1-gamma). f is evaluated as an exact
// rational (via f^2), so the floor is exact.
unsigned required_modulus_bits(unsigned n, unsigned p, unsigned k, unsigned ell, unsigned lambda,
                               const mpq_class& c, const mpq_class& gamma);

// required bits rounded up to a whole number of bytes.
unsigned default_modulus_bits(unsigned required_bits);

BigInt smallest_prime_with_bits(unsigned bits);
Modulus default_modulus(unsigned bits);  // pinned constants for 248/256, computed otherwise

// Certificate that ||A^t||_2 <= c * gamma^t for t = 0..horizon, with the tail
// beyond the horizon below the quantization floor.
struct ContractionCert {
  double c;
  double gamma;
  unsigned horizon;
};

bool verify_contraction(const Eigen::MatrixXd& a, double c, double gamma, unsigned horizon);

// Requires the spectral radius of a to be < 1. When gamma is not given it is
// set just above the spectral radius; c is the smallest verified constant,
// rounded up at three decimals. The horizon runs until c * gamma^t < 2^-tail_bits.
ContractionCert estimate_contraction(const Eigen::MatrixXd& a,
                                     std::optional<double> gamma = std::nullopt,
                                     unsigned tail_bits = 96);

// Fields every process must agree on before step 0.
struct SessionParams {
  Modulus q;
  std::uint32_t n, m, p;
  std::uint32_t k, ell, lambda;

  bool operator==(const SessionParams& o) const;
};

// The dynamic controller x+ = A x + B y, u = C x + D y with all parameters in
// Q_{k,ell}, plus the protocol parameters.
struct ControllerSpec {
  FixedMatrix a, b, c, d;  // n x n, n x p, m x n, m x p
  FixedMatrix x0;          // n x 1
  unsigned k, ell, lambda;
  Modulus q;

  std::size_t n() const { return a.rows(); }
  std::size_t m() const { return c.rows(); }
  std::size_t p() const { return b.cols(); }

  // Block matrix [[A, B], [C, D]] of size (n+m) x (n+p).
  FixedMatrix phi() const;

  // Dimension and parameter coherence; throws on violation.
  void validate() const;
  SessionParams session_params() const;
  BundleSpec bundle_spec() const;
};

// Checks floor-level modulus sizing against a contraction certificate.
// Accepts any q whose bit length reaches the required count.
void check_sizing(const ControllerSpec& spec, const ContractionCert& cert);

struct OfflineMsg {
  ZqMatrix phi_share;
  ZqMatrix x0_share;
};

struct StepBundleMsg {
  std::uint64_t step;
  ZqMatrix y_share;
  TripleShare triple;
  TruncPairShare trunc;
};

struct InputShareMsg {
  std::uint64_t step;
  int party;
  ZqMatrix u_share;
};

// Client side of the controller protocol: encodes and shares the parameters
// and measurements, deals the per-step randomness, and decodes the input.
// All session randomness flows through the two generators derived from the
// master generator, one for sharing and one for the dealer, so pre-generated
// and inline randomness are byte-identical.
class ClientCore {
 public:
  ClientCore(ControllerSpec spec, Csprng master);

  std::array<OfflineMsg, 2> offline_setup();

  Dealer& dealer() { return dealer_; }

  // Measurement y as a p x 1 fixed-point vector; re-encoded at the protocol's
  // ell. Throws when y is not representable.
  std::array<StepBundleMsg, 2> step_begin(const FixedMatrix& y);
  std::array<StepBundleMsg, 2> step_begin(const FixedMatrix& y, StepRandomness rnd);

  // Control input decoded at 2*ell fractional bits.
  FixedMatrix step_end(const InputShareMsg& a, const InputShareMsg& b);

  std::uint64_t next_step() const { return next_step_; }
  const ControllerSpec& spec() const { return spec_; }

 private:
  ControllerSpec spec_;
  Csprng share_rng_;
  Dealer dealer_;
  std::uint64_t next_step_ = 0;
  bool offline_done_ = false;
  bool awaiting_input_ = false;
};

// One party's message-driven state machine for the online phase. Strictly
// sequential: step t+1 cannot begin until step t's state share is committed.
class PartyCore {
 public:
  PartyCore(int party, SessionParams params);

  void install_offline(OfflineMsg msg);

  // STEP_BUNDLE -> the masked operands for the peer.
  protocols::MultRound1Msg on_step_bundle(const StepBundleMsg& msg);

  struct FinalizeOut {
    std::optional<protocols::TruncMaskMsg> trunc_mask;  // party 0 -> party 1
    std::optional<InputShareMsg> input;                 // present when the step committed
  };

  // Peer's masked operands -> party 0 finishes the step; party 1 waits for
  // the truncation mask.
  FinalizeOut on_peer_mask(const protocols::MultRound1Msg& peer);

  // Party 1 only: completes truncation and commits the step.
  InputShareMsg on_trunc_mask(const protocols::TruncMaskMsg& msg);

  int party() const { return party_; }
  std::uint64_t steps_done() const { return steps_done_; }
  const ZqMatrix& state_share() const;

 private:
  enum class Phase { NeedOffline, Idle, AwaitPeerMask, AwaitTruncMask };

  void require_phase(Phase want, const char* what) const;

  int party_;
  SessionParams params_;
  Phase phase_ = Phase::NeedOffline;
  std::uint64_t steps_done_ = 0;
  std::optional<ZqMatrix> phi_share_;
  std::optional<ZqMatrix> state_share_;
  // per-step scratch
  std::optional<TripleShare> triple_;
  std::optional<TruncPairShare> trunc_;
  std::optional<protocols::MultRound1Msg> my_mask_;
  std::optional<ZqMatrix> pending_state_;  // x-tilde, before truncation
  std::optional<ZqMatrix> pending_input_;
  std::optional<ZqMatrix> my_trunc_mask_;
};

// Drives one client and two parties through Protocol steps entirely in
// process, exchanging the same messages the networked runtime would.
class InprocessSession {
 public:
  InprocessSession(ControllerSpec spec, Csprng master);

  FixedMatrix step(const FixedMatrix& y);

  // Test-only audit: reconstructs the shared encoded state (breaks secrecy).
  IntMatrix reconstruct_state() const;

  // Input shares returned by the parties in the last completed step.
  const std::optional<std::array<ZqMatrix, 2>>& last_input_shares() const {
    return last_inputs_;
  }

  ClientCore& client() { return client_; }
  PartyCore& party(int i) { return i == 0 ? p0_ : p1_; }

 private:
  ClientCore client_;
  PartyCore p0_, p1_;
  std::optional<std::array<ZqMatrix, 2>> last_inputs_;
};

}  // namespace stpc
