#include "stpc/sharing.hpp"

#include <stdexcept>

namespace stpc {

namespace {

void check_compatible(const SharePair& p) {
  if (p.s0.party != 0 || p.s1.party != 1)
    throw std::invalid_argument("SharePair: components must belong to parties 0 and 1");
  if (p.s0.value.rows() != p.s1.value.rows() || p.s0.value.cols() != p.s1.value.cols())
    throw std::invalid_argument("SharePair: component dimension mismatch");
  if (p.s0.value.modulus() != p.s1.value.modulus())
    throw std::invalid_argument("SharePair: component modulus mismatch");
}

}  // namespace

const Share& SharePair::of(int party) const {
  if (party == 0) return s0;
  if (party == 1) return s1;
  throw std::invalid_argument("SharePair: party must be 0 or 1");
}

SharePair make_pair(ZqMatrix v0, ZqMatrix v1) {
  SharePair p{Share{0, std::move(v0)}, Share{1, std::move(v1)}};
  check_compatible(p);
  return p;
}

SharePair share(const ZqMatrix& x, Csprng& rng) {
  ZqMatrix r = sample_uniform(x.modulus(), x.rows(), x.cols(), rng);
  ZqMatrix rest = x.sub(r);
  return make_pair(std::move(r), std::move(rest));
}

ZqMatrix reconst(const SharePair& p) {
  check_compatible(p);
  return p.s0.value.add(p.s1.value);
}

ZqMatrix reconst(const Share& a, const Share& b) {
  if (a.party == b.party) throw std::invalid_argument("reconst: shares from the same party");
  return a.party == 0 ? reconst(SharePair{a, b}) : reconst(SharePair{b, a});
}

SharePair add_shares(const SharePair& a, const SharePair& b) {
  return make_pair(a.s0.value.add(b.s0.value), a.s1.value.add(b.s1.value));
}

SharePair sub_shares(const SharePair& a, const SharePair& b) {
  return make_pair(a.s0.value.sub(b.s0.value), a.s1.value.sub(b.s1.value));
}

SharePair add_const(const SharePair& a, const ZqMatrix& y) {
  return make_pair(a.s0.value.add(y), a.s1.value);
}

SharePair sub_const(const SharePair& a, const ZqMatrix& y) {
  return make_pair(a.s0.value.sub(y), a.s1.value);
}

Share add_const(const Share& s, const ZqMatrix& y, int gate_party) {
  if (s.party != gate_party) return s;
  return Share{s.party, s.value.add(y)};
}

Share sub_const(const Share& s, const ZqMatrix& y, int gate_party) {
  if (s.party != gate_party) return s;
  return Share{s.party, s.value.sub(y)};
}

SharePair mul_const_left(const ZqMatrix& z, const SharePair& a) {
  return make_pair(z.mul(a.s0.value), z.mul(a.s1.value));
}

SharePair mul_const_right(const SharePair& a, const ZqMatrix& z) {
  return make_pair(a.s0.value.mul(z), a.s1.value.mul(z));
}

Share mul_const_left(const ZqMatrix& z, const Share& a) { return Share{a.party, z.mul(a.value)}; }

Share mul_const_right(const Share& a, const ZqMatrix& z) { return Share{a.party, a.value.mul(z)}; }

SharePair scalar_mul(const BigInt& k, const SharePair& a) {
  return make_pair(a.s0.value.scalar_mul(k), a.s1.value.scalar_mul(k));
}

Share scalar_mul(const BigInt& k, const Share& a) { return Share{a.party, a.value.scalar_mul(k)}; }

}  // namespace stpc
