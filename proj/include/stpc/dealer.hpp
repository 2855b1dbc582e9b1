#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "stpc/sharing.hpp"

namespace stpc {

// Correlated randomness for one multiplication: W = U * V mod q.
struct MatrixTriple {
  SharePair u, v, w;
};

// One party's components of a triple.
struct TripleShare {
  ZqMatrix u, v, w;
};

// Correlated randomness for one truncation. R ranges over the signed
// (kappa - ell + lambda)-bit integers and R' over the signed ell-bit
// integers, both shared over Z_q.
struct TruncPair {
  SharePair r, r_prime;
  unsigned kappa, ell, lambda;
};

struct TruncPairShare {
  ZqMatrix r, r_prime;
  unsigned ell;
};

// kappa = floor(log2 q) - lambda - 1. Throws unless the result exceeds ell.
unsigned trunc_kappa(const Modulus& q, unsigned lambda, unsigned ell);

MatrixTriple gen_triple(const Modulus& q, std::size_t d1, std::size_t d2, std::size_t d3,
                        Csprng& rng);
TruncPair gen_trunc_pair(const Modulus& q, std::size_t d1, std::size_t d2, unsigned ell,
                         unsigned lambda, Csprng& rng);

TripleShare triple_for(const MatrixTriple& t, int party);
TruncPairShare trunc_for(const TruncPair& p, int party);

// Shape of the per-step randomness for a controller session: triple dims
// (n+m, n+p, 1) and truncation dims (n, 1).
struct BundleSpec {
  Modulus q;
  std::size_t n, m, p;
  unsigned ell, lambda;
};

struct StepRandomness {
  std::uint64_t bundle_id;
  MatrixTriple triple;
  TruncPair trunc;
};

// Issues one bundle per controller step, never the same bundle twice.
class Dealer {
 public:
  Dealer(BundleSpec spec, Csprng rng);
  StepRandomness next();
  std::uint64_t issued() const { return next_id_; }
  const BundleSpec& spec() const { return spec_; }

 private:
  BundleSpec spec_;
  Csprng rng_;
  std::uint64_t next_id_ = 0;
};

std::vector<StepRandomness> gen_batch(std::size_t count, const BundleSpec& spec, Csprng& rng);

// Bounded single-producer single-consumer queue for pre-generated bundles.
// pop() blocks until a bundle arrives or the queue is closed; bundle ids must
// arrive in issue order.
class BundleQueue {
 public:
  explicit BundleQueue(std::size_t capacity);
  void push(StepRandomness bundle);           // blocks while full
  std::optional<StepRandomness> pop();        // nullopt after close+drain
  void close();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<StepRandomness> q_;
  std::size_t capacity_;
  std::uint64_t expected_next_ = 0;
  bool closed_ = false;
};

}  // namespace stpc
