#pragma once

#include "stpc/modring.hpp"

namespace stpc {

// One party's additive share of a secret matrix.
struct Share {
  int party;  // 0 or 1
  ZqMatrix value;
};

// Both shares of a secret: s0 held by party 0, s1 by party 1.
// reconst(pair) = s0.value + s1.value mod q.
struct SharePair {
  Share s0;
  Share s1;

  const Share& of(int party) const;
  const ZqMatrix& value_of(int party) const { return of(party).value; }
};

SharePair make_pair(ZqMatrix v0, ZqMatrix v1);

// (R, X - R mod q) with R uniform over Z_q.
SharePair share(const ZqMatrix& x, Csprng& rng);

ZqMatrix reconst(const SharePair& p);
ZqMatrix reconst(const Share& a, const Share& b);

SharePair add_shares(const SharePair& a, const SharePair& b);
SharePair sub_shares(const SharePair& a, const SharePair& b);

// Constant folded into the party-0 component only.
SharePair add_const(const SharePair& a, const ZqMatrix& y);
SharePair sub_const(const SharePair& a, const ZqMatrix& y);

// Adds y iff s.party == gate_party, leaving the other party's component
// untouched. This is how the "i * term" additions in the subprotocols are
// expressed without branching on reconstructed data.
Share add_const(const Share& s, const ZqMatrix& y, int gate_party = 0);
Share sub_const(const Share& s, const ZqMatrix& y, int gate_party = 0);

// Z * X and X * Z applied to each component; reconst distributes over both.
SharePair mul_const_left(const ZqMatrix& z, const SharePair& a);
SharePair mul_const_right(const SharePair& a, const ZqMatrix& z);
Share mul_const_left(const ZqMatrix& z, const Share& a);
Share mul_const_right(const Share& a, const ZqMatrix& z);

SharePair scalar_mul(const BigInt& k, const SharePair& a);
Share scalar_mul(const BigInt& k, const Share& a);

}  // namespace stpc
