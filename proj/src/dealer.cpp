#include "stpc/dealer.hpp"

#include <stdexcept>

namespace stpc {

unsigned trunc_kappa(const Modulus& q, unsigned lambda, unsigned ell) {
  const unsigned floor_log2 = q.bit_len() - 1;
  if (floor_log2 < lambda + 2)
    throw std::invalid_argument("trunc_kappa: modulus too small for lambda");
  const unsigned kappa = floor_log2 - lambda - 1;
  if (kappa <= ell)
    throw std::invalid_argument("trunc_kappa: kappa = floor(log2 q) - lambda - 1 must exceed ell");
  return kappa;
}

MatrixTriple gen_triple(const Modulus& q, std::size_t d1, std::size_t d2, std::size_t d3,
                        Csprng& rng) {
  if (d1 == 0 || d2 == 0 || d3 == 0) throw std::invalid_argument("gen_triple: empty dimension");
  ZqMatrix u = sample_uniform(q, d1, d2, rng);
  ZqMatrix v = sample_uniform(q, d2, d3, rng);
  ZqMatrix w = u.mul(v);
  return MatrixTriple{share(u, rng), share(v, rng), share(w, rng)};
}

TruncPair gen_trunc_pair(const Modulus& q, std::size_t d1, std::size_t d2, unsigned ell,
                         unsigned lambda, Csprng& rng) {
  if (d1 == 0 || d2 == 0) throw std::invalid_argument("gen_trunc_pair: empty dimension");
  if (ell == 0) throw std::invalid_argument("gen_trunc_pair: ell must be >= 1");
  const unsigned kappa = trunc_kappa(q, lambda, ell);
  ZqMatrix r(q, d1, d2);
  ZqMatrix r_prime(q, d1, d2);
  for (std::size_t i = 0; i < d1; ++i)
    for (std::size_t j = 0; j < d2; ++j) {
      r.set(i, j, sample_int_bits(kappa - ell + lambda, rng));
      r_prime.set(i, j, sample_int_bits(ell, rng));
    }
  return TruncPair{share(r, rng), share(r_prime, rng), kappa, ell, lambda};
}

TripleShare triple_for(const MatrixTriple& t, int party) {
  return TripleShare{t.u.value_of(party), t.v.value_of(party), t.w.value_of(party)};
}

TruncPairShare trunc_for(const TruncPair& p, int party) {
  return TruncPairShare{p.r.value_of(party), p.r_prime.value_of(party), p.ell};
}

Dealer::Dealer(BundleSpec spec, Csprng rng) : spec_(std::move(spec)), rng_(rng) {
  trunc_kappa(spec_.q, spec_.lambda, spec_.ell);  // validate parameters up front
}

StepRandomness Dealer::next() {
  StepRandomness out{
      next_id_,
      gen_triple(spec_.q, spec_.n + spec_.m, spec_.n + spec_.p, 1, rng_),
      gen_trunc_pair(spec_.q, spec_.n, 1, spec_.ell, spec_.lambda, rng_),
  };
  ++next_id_;
  return out;
}

std::vector<StepRandomness> gen_batch(std::size_t count, const BundleSpec& spec, Csprng& rng) {
  if (count == 0) throw std::invalid_argument("gen_batch: count must be >= 1");
  trunc_kappa(spec.q, spec.lambda, spec.ell);
  std::vector<StepRandomness> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(StepRandomness{
        i,
        gen_triple(spec.q, spec.n + spec.m, spec.n + spec.p, 1, rng),
        gen_trunc_pair(spec.q, spec.n, 1, spec.ell, spec.lambda, rng),
    });
  }
  return out;
}

BundleQueue::BundleQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

void BundleQueue::push(StepRandomness bundle) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return q_.size() < capacity_ || closed_; });
  if (closed_) throw std::logic_error("BundleQueue: push after close");
  if (bundle.bundle_id != expected_next_)
    throw std::logic_error("BundleQueue: bundle issued out of order");
  ++expected_next_;
  q_.push_back(std::move(bundle));
  cv_.notify_all();
}

std::optional<StepRandomness> BundleQueue::pop() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !q_.empty() || closed_; });
  if (q_.empty()) return std::nullopt;
  StepRandomness out = std::move(q_.front());
  q_.pop_front();
  cv_.notify_all();
  return out;
}

void BundleQueue::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  cv_.notify_all();
}

}  // namespace stpc
