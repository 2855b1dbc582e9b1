#include "stpc/controller.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

namespace stpc {

// 2^247 + 63 and 2^255 + 95.
const char kPinnedPrime248[] =
    "0x8000000000000000000000000000000000000000000000000000000000003f";
const char kPinnedPrime256[] =
    "0x800000000000000000000000000000000000000000000000000000000000005f";

unsigned required_modulus_bits(unsigned n, unsigned p, unsigned k, unsigned ell, unsigned lambda,
                               const mpq_class& c, const mpq_class& gamma) {
  if (k < ell + 2) throw std::invalid_argument("required_modulus_bits: need k - ell >= 2");
  if (lambda < 1) throw std::invalid_argument("required_modulus_bits: need lambda >= 1");
  if (c < 1) throw std::invalid_argument("required_modulus_bits: need c >= 1");
  if (gamma <= 0 || gamma >= 1) throw std::invalid_argument("required_modulus_bits: need gamma in (0,1)");
  if (n == 0 || p == 0) throw std::invalid_argument("required_modulus_bits: need n, p >= 1");

  // f^2 = (max{n,p} (1+p) c/(1-gamma))^2 * n is rational, so
  // floor(log2 f) = max{ e : 4^e <= f^2 } computes exactly.
  mpq_class base = mpq_class(static_cast<unsigned long>(std::max(n, p)) *
                             (1ul + static_cast<unsigned long>(p))) *
                   c / (1 - gamma);
  mpq_class f2 = base * base * n;
  f2.canonicalize();
  if (f2 < 1) throw std::logic_error("required_modulus_bits: f < 1");
  unsigned e = 0;
  mpq_class acc(1);
  while (acc * 4 <= f2) {
    acc *= 4;
    ++e;
  }
  return 3 * k - ell + lambda + 2 + e;
}

unsigned default_modulus_bits(unsigned required_bits) { return (required_bits + 7) / 8 * 8; }

BigInt smallest_prime_with_bits(unsigned bits) {
  if (bits < 2) throw std::invalid_argument("smallest_prime_with_bits: need bits >= 2");
  BigInt base;
  mpz_ui_pow_ui(base.get_mpz_t(), 2, bits - 1);
  BigInt p;
  mpz_nextprime(p.get_mpz_t(), base.get_mpz_t());
  if (mpz_sizeinbase(p.get_mpz_t(), 2) != bits)
    throw std::logic_error("smallest_prime_with_bits: no prime of that length");  // unreachable
  return p;
}

Modulus default_modulus(unsigned bits) {
  if (bits == 248) return Modulus::from_string(kPinnedPrime248);
  if (bits == 256) return Modulus::from_string(kPinnedPrime256);
  return Modulus(smallest_prime_with_bits(bits));
}

namespace {

double spectral_norm(const Eigen::MatrixXd& m) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

}  // namespace

bool verify_contraction(const Eigen::MatrixXd& a, double c, double gamma, unsigned horizon) {
  if (a.rows() != a.cols()) throw std::invalid_argument("verify_contraction: square matrix required");
  if (c < 1 || gamma <= 0 || gamma >= 1) return false;
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  double bound = c;
  for (unsigned t = 0; t <= horizon; ++t) {
    if (spectral_norm(power) > bound) return false;
    power = power * a;
    bound *= gamma;
  }
  return true;
}

ContractionCert estimate_contraction(const Eigen::MatrixXd& a, std::optional<double> gamma_opt,
                                     unsigned tail_bits) {
  if (a.rows() != a.cols()) throw std::invalid_argument("estimate_contraction: square matrix required");
  Eigen::EigenSolver<Eigen::MatrixXd> es(a);
  double rho = es.eigenvalues().cwiseAbs().maxCoeff();
  if (rho >= 1.0) throw std::invalid_argument("estimate_contraction: matrix is not Schur stable");
  double gamma = gamma_opt ? *gamma_opt : std::min(rho * 1.02 + 1e-6, (1.0 + rho) / 2.0);
  if (gamma <= 0 || gamma >= 1) throw std::invalid_argument("estimate_contraction: gamma outside (0,1)");

  const double floor_val = std::ldexp(1.0, -static_cast<int>(tail_bits));
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  double c_raw = 1.0;
  double gpow = 1.0;
  unsigned horizon = 0;
  constexpr unsigned kMaxHorizon = 2'000'000;
  for (unsigned t = 0;; ++t) {
    c_raw = std::max(c_raw, spectral_norm(power) / gpow);
    if (c_raw * gpow < floor_val) {
      horizon = t;
      break;
    }
    if (t >= kMaxHorizon)
      throw std::runtime_error("estimate_contraction: horizon bound exceeded; gamma too close to 1");
    power = power * a;
    gpow *= gamma;
  }
  double c = std::ceil(c_raw * 1000.0) / 1000.0;
  if (c < 1.0) c = 1.0;
  ContractionCert cert{c, gamma, horizon};
  if (!verify_contraction(a, cert.c, cert.gamma, cert.horizon))
    throw std::logic_error("estimate_contraction: certificate failed re-verification");
  return cert;
}

bool SessionParams::operator==(const SessionParams& o) const {
  return q == o.q && n == o.n && m == o.m && p == o.p && k == o.k && ell == o.ell &&
         lambda == o.lambda;
}

FixedMatrix ControllerSpec::phi() const {
  const std::size_t rows = n() + m(), cols = n() + p();
  std::vector<BigInt> scaled;
  scaled.reserve(rows * cols);
  for (std::size_t r = 0; r < n(); ++r) {
    for (std::size_t j = 0; j < n(); ++j) scaled.push_back(a.scaled(r, j));
    for (std::size_t j = 0; j < p(); ++j) scaled.push_back(b.scaled(r, j));
  }
  for (std::size_t r = 0; r < m(); ++r) {
    for (std::size_t j = 0; j < n(); ++j) scaled.push_back(c.scaled(r, j));
    for (std::size_t j = 0; j < p(); ++j) scaled.push_back(d.scaled(r, j));
  }
  return FixedMatrix::from_scaled({k, ell}, rows, cols, std::move(scaled));
}

void ControllerSpec::validate() const {
  const std::size_t nn = n(), mm = m(), pp = p();
  if (a.rows() != nn || a.cols() != nn) throw std::invalid_argument("ControllerSpec: A must be n x n");
  if (b.rows() != nn || b.cols() != pp) throw std::invalid_argument("ControllerSpec: B must be n x p");
  if (c.rows() != mm || c.cols() != nn) throw std::invalid_argument("ControllerSpec: C must be m x n");
  if (d.rows() != mm || d.cols() != pp) throw std::invalid_argument("ControllerSpec: D must be m x p");
  if (x0.rows() != nn || x0.cols() != 1) throw std::invalid_argument("ControllerSpec: x0 must be n x 1");
  if (k < ell + 2) throw std::invalid_argument("ControllerSpec: need k - ell >= 2");
  for (const FixedMatrix* fm : {&a, &b, &c, &d, &x0}) {
    if (fm->params().ell != ell)
      throw std::invalid_argument("ControllerSpec: matrix fractional length differs from ell");
    for (std::size_t r = 0; r < fm->rows(); ++r)
      for (std::size_t col = 0; col < fm->cols(); ++col)
        if (!in_signed_range(fm->scaled(r, col), k))
          throw std::invalid_argument("ControllerSpec: entry outside Q_{k,ell}");
  }
  trunc_kappa(q, lambda, ell);  // truncation must be parameterizable
}

SessionParams ControllerSpec::session_params() const {
  return SessionParams{q,
                       static_cast<std::uint32_t>(n()),
                       static_cast<std::uint32_t>(m()),
                       static_cast<std::uint32_t>(p()),
                       k,
                       ell,
                       lambda};
}

BundleSpec ControllerSpec::bundle_spec() const { return BundleSpec{q, n(), m(), p(), ell, lambda}; }

void check_sizing(const ControllerSpec& spec, const ContractionCert& cert) {
  unsigned need = required_modulus_bits(
      static_cast<unsigned>(spec.n()), static_cast<unsigned>(spec.p()), spec.k, spec.ell,
      spec.lambda, mpq_class(cert.c), mpq_class(cert.gamma));
  if (spec.q.bit_len() < need)
    throw std::invalid_argument("modulus too small: " + std::to_string(spec.q.bit_len()) +
                                " bits, sizing requires " + std::to_string(need));
}

namespace {

Csprng derive_stream(Csprng& master) {
  Csprng::Key key;
  master.fill(key);
  return Csprng(key);
}

}  // namespace

ClientCore::ClientCore(ControllerSpec spec, Csprng master)
    : spec_(std::move(spec)),
      share_rng_(derive_stream(master)),
      dealer_(spec_.bundle_spec(), derive_stream(master)) {
  spec_.validate();
}

std::array<OfflineMsg, 2> ClientCore::offline_setup() {
  if (offline_done_) throw std::logic_error("offline_setup: already performed");
  IntMatrix phi_bar = encode(spec_.phi(), spec_.ell);
  IntMatrix x0_bar = encode(spec_.x0, spec_.ell);
  SharePair phi_shares = share(phi_bar.to_zq(spec_.q), share_rng_);
  SharePair x0_shares = share(x0_bar.to_zq(spec_.q), share_rng_);
  offline_done_ = true;
  return {OfflineMsg{phi_shares.value_of(0), x0_shares.value_of(0)},
          OfflineMsg{phi_shares.value_of(1), x0_shares.value_of(1)}};
}

std::array<StepBundleMsg, 2> ClientCore::step_begin(const FixedMatrix& y) {
  return step_begin(y, dealer_.next());
}

std::array<StepBundleMsg, 2> ClientCore::step_begin(const FixedMatrix& y, StepRandomness rnd) {
  if (!offline_done_) throw std::logic_error("step_begin: offline setup not performed");
  if (awaiting_input_) throw std::logic_error("step_begin: previous step still in flight");
  if (rnd.bundle_id != next_step_)
    throw std::logic_error("step_begin: randomness bundle does not match the step index");
  if (y.rows() != spec_.p() || y.cols() != 1)
    throw std::invalid_argument("step_begin: measurement must be p x 1");

  IntMatrix y_bar = encode(y, spec_.ell);
  for (std::size_t r = 0; r < y_bar.rows(); ++r)
    if (!in_signed_range(y_bar.at(r, 0), spec_.k))
      throw std::invalid_argument("step_begin: measurement outside Q_{k,ell}");
  SharePair y_shares = share(y_bar.to_zq(spec_.q), share_rng_);

  awaiting_input_ = true;
  std::array<StepBundleMsg, 2> out{
      StepBundleMsg{next_step_, y_shares.value_of(0), triple_for(rnd.triple, 0),
                    trunc_for(rnd.trunc, 0)},
      StepBundleMsg{next_step_, y_shares.value_of(1), triple_for(rnd.triple, 1),
                    trunc_for(rnd.trunc, 1)}};
  return out;
}

FixedMatrix ClientCore::step_end(const InputShareMsg& a, const InputShareMsg& b) {
  if (!awaiting_input_) throw std::logic_error("step_end: no step in flight");
  if (a.step != next_step_ || b.step != next_step_)
    throw std::invalid_argument("step_end: input share step index mismatch");
  if (a.party + b.party != 1)
    throw std::invalid_argument("step_end: need one input share from each party");
  const InputShareMsg& s0 = a.party == 0 ? a : b;
  const InputShareMsg& s1 = a.party == 0 ? b : a;
  ZqMatrix u_bar = reconst(make_pair(s0.u_share, s1.u_share));
  awaiting_input_ = false;
  ++next_step_;
  return decode(IntMatrix::from_zq(u_bar), 2 * spec_.ell);
}

PartyCore::PartyCore(int party, SessionParams params)
    : party_(party), params_(std::move(params)) {
  if (party != 0 && party != 1) throw std::invalid_argument("PartyCore: party must be 0 or 1");
}

void PartyCore::require_phase(Phase want, const char* what) const {
  if (phase_ != want) throw std::logic_error(std::string(what) + ": step sequencing violation");
}

void PartyCore::install_offline(OfflineMsg msg) {
  require_phase(Phase::NeedOffline, "install_offline");
  if (msg.phi_share.rows() != params_.n + params_.m ||
      msg.phi_share.cols() != params_.n + params_.p)
    throw std::invalid_argument("install_offline: parameter share has wrong dimensions");
  if (msg.x0_share.rows() != params_.n || msg.x0_share.cols() != 1)
    throw std::invalid_argument("install_offline: state share has wrong dimensions");
  phi_share_ = std::move(msg.phi_share);
  state_share_ = std::move(msg.x0_share);
  phase_ = Phase::Idle;
}

protocols::MultRound1Msg PartyCore::on_step_bundle(const StepBundleMsg& msg) {
  require_phase(Phase::Idle, "on_step_bundle");
  if (msg.step != steps_done_)
    throw std::invalid_argument("on_step_bundle: expected step " + std::to_string(steps_done_) +
                                ", got " + std::to_string(msg.step));
  if (msg.y_share.rows() != params_.p || msg.y_share.cols() != 1)
    throw std::invalid_argument("on_step_bundle: measurement share has wrong dimensions");
  if (msg.triple.u.rows() != params_.n + params_.m || msg.triple.u.cols() != params_.n + params_.p ||
      msg.triple.v.rows() != params_.n + params_.p || msg.triple.v.cols() != 1 ||
      msg.triple.w.rows() != params_.n + params_.m || msg.triple.w.cols() != 1)
    throw std::invalid_argument("on_step_bundle: triple has wrong dimensions");
  if (msg.trunc.r.rows() != params_.n || msg.trunc.r.cols() != 1 ||
      msg.trunc.r_prime.rows() != params_.n || msg.trunc.r_prime.cols() != 1)
    throw std::invalid_argument("on_step_bundle: truncation pair has wrong dimensions");
  if (msg.trunc.ell != params_.ell)
    throw std::invalid_argument("on_step_bundle: truncation pair ell mismatch");

  ZqMatrix xi = state_share_->vstack(msg.y_share);
  triple_ = msg.triple;
  trunc_ = msg.trunc;
  my_mask_ = protocols::mult_local_mask(party_, *phi_share_, xi, *triple_);
  phase_ = Phase::AwaitPeerMask;
  return *my_mask_;
}

PartyCore::FinalizeOut PartyCore::on_peer_mask(const protocols::MultRound1Msg& peer) {
  require_phase(Phase::AwaitPeerMask, "on_peer_mask");
  ZqMatrix s = my_mask_->s_i.add(peer.s_i);
  ZqMatrix t = my_mask_->t_i.add(peer.t_i);
  ZqMatrix psi = protocols::mult_finalize(party_, s, t, *triple_);
  auto [x_tilde, u_bar] = psi.split_rows(params_.n);
  pending_state_ = std::move(x_tilde);
  pending_input_ = std::move(u_bar);
  my_trunc_mask_ = protocols::trunc_local_mask(party_, *pending_state_, *trunc_);
  my_mask_.reset();

  if (party_ == 0) {
    state_share_ = protocols::trunc_finalize(0, *pending_state_, *trunc_, std::nullopt);
    InputShareMsg input{steps_done_, 0, *pending_input_};
    protocols::TruncMaskMsg mask{*my_trunc_mask_};
    pending_state_.reset();
    pending_input_.reset();
    my_trunc_mask_.reset();
    triple_.reset();
    trunc_.reset();
    ++steps_done_;
    phase_ = Phase::Idle;
    return FinalizeOut{std::move(mask), std::move(input)};
  }
  phase_ = Phase::AwaitTruncMask;
  return FinalizeOut{std::nullopt, std::nullopt};
}

InputShareMsg PartyCore::on_trunc_mask(const protocols::TruncMaskMsg& msg) {
  require_phase(Phase::AwaitTruncMask, "on_trunc_mask");
  if (party_ != 1) throw std::logic_error("on_trunc_mask: only party 1 receives the mask");
  ZqMatrix y = msg.y0.add(*my_trunc_mask_);
  state_share_ = protocols::trunc_finalize(1, *pending_state_, *trunc_, y);
  InputShareMsg input{steps_done_, 1, *pending_input_};
  pending_state_.reset();
  pending_input_.reset();
  my_trunc_mask_.reset();
  triple_.reset();
  trunc_.reset();
  ++steps_done_;
  phase_ = Phase::Idle;
  return input;
}

const ZqMatrix& PartyCore::state_share() const {
  if (!state_share_) throw std::logic_error("state_share: offline bundle not installed");
  return *state_share_;
}

InprocessSession::InprocessSession(ControllerSpec spec, Csprng master)
    : client_(std::move(spec), master),
      p0_(0, client_.spec().session_params()),
      p1_(1, client_.spec().session_params()) {
  auto offline = client_.offline_setup();
  p0_.install_offline(std::move(offline[0]));
  p1_.install_offline(std::move(offline[1]));
}

FixedMatrix InprocessSession::step(const FixedMatrix& y) {
  auto bundles = client_.step_begin(y);
  auto mask0 = p0_.on_step_bundle(bundles[0]);
  auto mask1 = p1_.on_step_bundle(bundles[1]);
  auto fin0 = p0_.on_peer_mask(mask1);
  auto fin1 = p1_.on_peer_mask(mask0);
  if (!fin0.trunc_mask || !fin0.input || fin1.input)
    throw std::logic_error("InprocessSession: unexpected finalize outputs");
  InputShareMsg in1 = p1_.on_trunc_mask(*fin0.trunc_mask);
  last_inputs_ = {fin0.input->u_share, in1.u_share};
  return client_.step_end(*fin0.input, in1);
}

IntMatrix InprocessSession::reconstruct_state() const {
  return IntMatrix::from_zq(p0_.state_share().add(p1_.state_share()));
}

}  // namespace stpc
