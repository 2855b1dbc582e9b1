#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stpc/sharing.hpp"
#include "stpc/controller.hpp"
#include "testutil.hpp"

using namespace stpc;

TEST_CASE("share/reconst round trip at 256 bits") {
  Modulus q = Modulus::from_string(kPinnedPrime256);
  Csprng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    ZqMatrix x = sample_uniform(q, 2, 1, rng);
    CHECK(reconst(share(x, rng)) == x);
  }
}

TEST_CASE("shares of zero cancel") {
  Modulus q(BigInt(61));
  Csprng rng(22);
  ZqMatrix zero(q, 3, 2);
  SharePair p = share(zero, rng);
  CHECK(reconst(p) == zero);
}

TEST_CASE("exhaustive round trip over q = 7") {
  Modulus q(BigInt(7));
  Csprng rng(23);
  for (int x = -3; x <= 3; ++x)
    for (int rep = 0; rep < 20; ++rep) {
      ZqMatrix m = ZqMatrix::from_entries(q, 1, 1, {BigInt(x)});
      CHECK(reconst(share(m, rng)).at(0, 0) == x);
    }
}

TEST_CASE("reconstruction basics") {
  Modulus q(BigInt(5));
  ZqMatrix a = ZqMatrix::from_entries(q, 1, 1, {BigInt(2)});
  CHECK(reconst(make_pair(a, a)).at(0, 0) == -1);

  Csprng rng(24);
  ZqMatrix x = sample_uniform(q, 2, 2, rng);
  CHECK(reconst(make_pair(x, ZqMatrix(q, 2, 2))) == x);

  // exhaustive addition table over q = 7
  Modulus q7(BigInt(7));
  for (int u = -3; u <= 3; ++u)
    for (int v = -3; v <= 3; ++v) {
      ZqMatrix mu = ZqMatrix::from_entries(q7, 1, 1, {BigInt(u)});
      ZqMatrix mv = ZqMatrix::from_entries(q7, 1, 1, {BigInt(v)});
      CHECK(reconst(make_pair(mu, mv)).at(0, 0) == reduce_centered(BigInt(u + v), q7));
    }

  CHECK_THROWS_AS(reconst(make_pair(x, ZqMatrix(q, 1, 1))), std::invalid_argument);
  Share s0{0, x}, s0b{0, x};
  CHECK_THROWS_AS(reconst(s0, s0b), std::invalid_argument);
}

TEST_CASE("homomorphic identities under reconst") {
  Modulus q(BigInt(61));
  Csprng rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    ZqMatrix x = sample_uniform(q, 2, 3, rng);
    ZqMatrix y = sample_uniform(q, 2, 3, rng);
    SharePair xs = share(x, rng), ys = share(y, rng);
    CHECK(reconst(add_shares(xs, ys)) == x.add(y));
    CHECK(reconst(sub_shares(xs, ys)) == x.sub(y));
    CHECK(reconst(add_const(xs, y)) == x.add(y));
    CHECK(reconst(sub_const(xs, y)) == x.sub(y));

    ZqMatrix z = sample_uniform(q, 3, 2, rng);
    CHECK(reconst(mul_const_right(xs, z)) == x.mul(z));
    CHECK(reconst(mul_const_left(z, ys)) == z.mul(y));
    CHECK(reconst(scalar_mul(BigInt(17), xs)) == x.scalar_mul(BigInt(17)));
  }
}

TEST_CASE("algebraic edge cases") {
  Modulus q(BigInt(61));
  Csprng rng(26);
  ZqMatrix x = sample_uniform(q, 2, 2, rng);
  SharePair a = share(x, rng);
  SharePair z = share(ZqMatrix(q, 2, 2), rng);
  CHECK(reconst(add_shares(a, z)) == x);
  CHECK(reconst(sub_shares(a, a)) == ZqMatrix(q, 2, 2));
  CHECK(reconst(add_const(a, ZqMatrix(q, 2, 2))) == x);
  CHECK(reconst(mul_const_right(a, ZqMatrix::identity(q, 2))) == x);
}

TEST_CASE("party-gated constants touch exactly one component") {
  Modulus q(BigInt(61));
  Csprng rng(27);
  ZqMatrix x = sample_uniform(q, 1, 1, rng);
  ZqMatrix y = sample_uniform(q, 1, 1, rng);
  Share s1{1, x};
  CHECK(add_const(s1, y, 0).value == x);        // gated on party 0, party 1 untouched
  CHECK(add_const(s1, y, 1).value == x.add(y)); // gated on its own party
  Share s0{0, x};
  CHECK(add_const(s0, y, 0).value == x.add(y));
  CHECK(sub_const(s0, y, 1).value == x);
}

TEST_CASE("inverse power-of-two scaling recovers the secret") {
  Modulus q = Modulus::from_string(kPinnedPrime248);
  Csprng rng(28);
  const unsigned ell = 16;
  for (int trial = 0; trial < 20; ++trial) {
    BigInt small = sample_int_bits(20, rng);
    ZqMatrix x = ZqMatrix::from_entries(q, 1, 1, {small << ell});
    SharePair xs = share(x, rng);
    SharePair scaled = scalar_mul(inv_pow2(ell, q), xs);
    CHECK(reconst(scaled).at(0, 0) == small);
  }
}

TEST_CASE("each share component is marginally uniform") {
  Modulus q(BigInt(5));
  Csprng rng(29);
  ZqMatrix secret = ZqMatrix::from_entries(q, 1, 1, {BigInt(2)});
  std::vector<std::uint64_t> c0(5, 0), c1(5, 0);
  for (int i = 0; i < 50000; ++i) {
    SharePair p = share(secret, rng);
    ++c0[testutil::residue_bucket(p.s0.value.at(0, 0), q)];
    ++c1[testutil::residue_bucket(p.s1.value.at(0, 0), q)];
  }
  CHECK(testutil::chi_squared_uniform(c0) < testutil::chi_crit_999(4));
  CHECK(testutil::chi_squared_uniform(c1) < testutil::chi_crit_999(4));
}

TEST_CASE("pair construction rejects mismatches") {
  Modulus q(BigInt(61));
  Csprng rng(30);
  ZqMatrix a = sample_uniform(q, 2, 2, rng);
  CHECK_THROWS_AS(make_pair(a, sample_uniform(q, 2, 1, rng)), std::invalid_argument);
  Modulus q2(BigInt(7));
  CHECK_THROWS_AS(make_pair(a, sample_uniform(q2, 2, 2, rng)), std::invalid_argument);
  SharePair p = share(a, rng);
  CHECK_THROWS_AS(p.of(2), std::invalid_argument);
}
