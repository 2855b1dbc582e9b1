#pragma once

#include <optional>

#include "stpc/dealer.hpp"

namespace stpc::protocols {

// First-round message of the multiplication subprotocol: party i's components
// of the masked operands S = X - U and T = Y - V.
struct MultRound1Msg {
  ZqMatrix s_i;
  ZqMatrix t_i;
};

// The single truncation message, sent from party 0 to party 1: party 0's
// component of the randomized value Y.
struct TruncMaskMsg {
  ZqMatrix y0;
};

// Every step below is a pure function of its inputs; communication is the
// caller's concern, so the same code runs under the in-process executor and
// the networked runtime.

// s_i = x_i - u_i mod q, t_i = y_i - v_i mod q.
MultRound1Msg mult_local_mask(int party, const ZqMatrix& x_i, const ZqMatrix& y_i,
                              const TripleShare& triple);

// z_i = u_i T + S v_i + w_i + i * ST mod q, given the reconstructed masks.
ZqMatrix mult_finalize(int party, const ZqMatrix& s, const ZqMatrix& t,
                       const TripleShare& triple);

// y_i = x_i + 2^ell r_i + r'_i + i * 2^(ell-1) J mod q, J the all-ones matrix.
ZqMatrix trunc_local_mask(int party, const ZqMatrix& x_i, const TruncPairShare& pair);

// z_i = 2^-ell (x_i + r'_i - i * ((Y - 2^(ell-1) J) mod 2^ell)) mod q.
// Only party 1 holds the reconstructed Y; party 0's gated term vanishes, so it
// passes nullopt. The inner reduction mod 2^ell is centered.
ZqMatrix trunc_finalize(int party, const ZqMatrix& x_i, const TruncPairShare& pair,
                        const std::optional<ZqMatrix>& y);

// Deterministic executors composing the four local steps exactly as the wire
// protocol would, for tests and the in-process closed loop.
SharePair run_inprocess_mult(const SharePair& xs, const SharePair& ys, const MatrixTriple& t);
SharePair run_inprocess_trunc(const SharePair& xs, const TruncPair& pair);

}  // namespace stpc::protocols
