#include "stpc/protocols.hpp"

#include <stdexcept>

namespace stpc::protocols {

namespace {

BigInt pow2(unsigned e) {
  BigInt v;
  mpz_ui_pow_ui(v.get_mpz_t(), 2, e);
  return v;
}

void check_party(int party) {
  if (party != 0 && party != 1) throw std::invalid_argument("party must be 0 or 1");
}

}  // namespace

MultRound1Msg mult_local_mask(int party, const ZqMatrix& x_i, const ZqMatrix& y_i,
                              const TripleShare& triple) {
  check_party(party);
  return MultRound1Msg{x_i.sub(triple.u), y_i.sub(triple.v)};
}

ZqMatrix mult_finalize(int party, const ZqMatrix& s, const ZqMatrix& t,
                       const TripleShare& triple) {
  check_party(party);
  ZqMatrix z = triple.u.mul(t).add(s.mul(triple.v)).add(triple.w);
  if (party == 1) z = z.add(s.mul(t));
  return z;
}

ZqMatrix trunc_local_mask(int party, const ZqMatrix& x_i, const TruncPairShare& pair) {
  check_party(party);
  if (pair.ell == 0) throw std::invalid_argument("trunc_local_mask: ell must be >= 1");
  if (x_i.rows() != pair.r.rows() || x_i.cols() != pair.r.cols())
    throw std::invalid_argument("trunc_local_mask: dimension mismatch with the pair");
  ZqMatrix y = x_i.add(pair.r.scalar_mul(pow2(pair.ell))).add(pair.r_prime);
  if (party == 1) {
    ZqMatrix j = ZqMatrix::ones(x_i.modulus(), x_i.rows(), x_i.cols());
    y = y.add(j.scalar_mul(pow2(pair.ell - 1)));
  }
  return y;
}

ZqMatrix trunc_finalize(int party, const ZqMatrix& x_i, const TruncPairShare& pair,
                        const std::optional<ZqMatrix>& y) {
  check_party(party);
  const Modulus& q = x_i.modulus();
  ZqMatrix z = x_i.add(pair.r_prime);
  if (party == 1) {
    if (!y) throw std::invalid_argument("trunc_finalize: party 1 requires the reconstructed Y");
    const BigInt half = pow2(pair.ell - 1);
    const BigInt mod = pow2(pair.ell);
    ZqMatrix low(q, x_i.rows(), x_i.cols());
    for (std::size_t r = 0; r < x_i.rows(); ++r)
      for (std::size_t c = 0; c < x_i.cols(); ++c)
        low.set(r, c, reduce_centered(y->at(r, c) - half, mod));
    z = z.sub(low);
  }
  return z.scalar_mul(inv_pow2(pair.ell, q));
}

SharePair run_inprocess_mult(const SharePair& xs, const SharePair& ys, const MatrixTriple& t) {
  const TripleShare t0 = triple_for(t, 0);
  const TripleShare t1 = triple_for(t, 1);
  MultRound1Msg m0 = mult_local_mask(0, xs.value_of(0), ys.value_of(0), t0);
  MultRound1Msg m1 = mult_local_mask(1, xs.value_of(1), ys.value_of(1), t1);
  // Line 2: both parties reconstruct the same S and T from the exchange.
  ZqMatrix s = m0.s_i.add(m1.s_i);
  ZqMatrix tt = m0.t_i.add(m1.t_i);
  return make_pair(mult_finalize(0, s, tt, t0), mult_finalize(1, s, tt, t1));
}

SharePair run_inprocess_trunc(const SharePair& xs, const TruncPair& pair) {
  const TruncPairShare p0 = trunc_for(pair, 0);
  const TruncPairShare p1 = trunc_for(pair, 1);
  ZqMatrix y0 = trunc_local_mask(0, xs.value_of(0), p0);
  ZqMatrix y1 = trunc_local_mask(1, xs.value_of(1), p1);
  // Party 0 sends y0; only party 1 learns Y.
  ZqMatrix y = y0.add(y1);
  return make_pair(trunc_finalize(0, xs.value_of(0), p0, std::nullopt),
                   trunc_finalize(1, xs.value_of(1), p1, y));
}

}  // namespace stpc::protocols
