#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "testutil.hpp"

using namespace stpc;

TEST_CASE("encode basics") {
  FixedMatrix x = FixedMatrix::from_decimal({8, 1}, 1, 1, {"1.5"});
  CHECK(encode(x, 1).at(0, 0) == 3);

  FixedMatrix k1 = FixedMatrix::from_decimal({23, 16}, 1, 1, {"33.022125244140625"});
  CHECK(encode(k1, 16).at(0, 0) == 2164138);

  FixedMatrix zero = FixedMatrix::from_decimal({8, 3}, 1, 1, {"0"});
  CHECK(encode(zero, 3).at(0, 0) == 0);
  CHECK(encode(zero, 7).at(0, 0) == 0);
}

TEST_CASE("decode basics") {
  CHECK(decode(IntMatrix::from_entries(1, 1, {BigInt(6)}), 2).decimal(0, 0) == "1.5");
  CHECK(decode(IntMatrix::from_entries(1, 1, {BigInt(2164138)}), 16).decimal(0, 0) ==
        "33.022125244140625");
  CHECK(decode(IntMatrix::from_entries(1, 1, {BigInt(-4)}), 2).decimal(0, 0) == "-1");
}

TEST_CASE("round trip is exact") {
  Csprng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    FixedMatrix x = testutil::random_fixed({30, 12}, 2, 3, rng);
    CHECK(decode(encode(x, 12), 12) == x);
  }
}

TEST_CASE("re-encoding at a different fractional length") {
  FixedMatrix x = FixedMatrix::from_decimal({18, 9}, 1, 1, {"1.5"});
  CHECK(encode(x, 32).at(0, 0) == BigInt(3) << 31);
  CHECK(encode(x, 1).at(0, 0) == 3);
  CHECK_THROWS_AS(encode(x, 0), std::invalid_argument);  // 1.5 needs one fractional bit
}

TEST_CASE("membership validation") {
  CHECK_FALSE(is_fixed_member(mpq_class(1, 3), 8, 4));
  for (const char* g : {"33.022125244140625", "-51.49261474609375", "0.6586151123046875",
                        "-0.7884063720703125", "-0.5822296142578125"})
    CHECK(is_fixed_member(parse_exact_decimal(g), 23, 16));
  // 2^(k-1-ell) scales to exactly 2^(k-1), one past the top of the range
  mpq_class edge(BigInt(1) << (8 - 1 - 4));
  CHECK_FALSE(is_fixed_member(edge, 8, 4));
  CHECK(validate_membership({mpq_class(1, 2), mpq_class(-2)}, 8, 4));
  CHECK_FALSE(validate_membership({mpq_class(1, 2), mpq_class(1, 3)}, 8, 4));
}

TEST_CASE("scaling composition matches the exact rational oracle") {
  Csprng rng(12);
  const unsigned ell = 10;
  for (int trial = 0; trial < 20; ++trial) {
    FixedMatrix x = testutil::random_fixed({24, ell}, 2, 3, rng);
    FixedMatrix y = testutil::random_fixed({24, ell}, 3, 2, rng);
    IntMatrix prod = encode(x, ell).mul(encode(y, ell));
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 2; ++c) {
        mpq_class want = 0;
        for (std::size_t k = 0; k < 3; ++k) want += x.value(r, k) * y.value(k, c);
        mpq_class got(prod.at(r, c));
        mpq_div_2exp(got.get_mpq_t(), got.get_mpq_t(), 2 * ell);
        CHECK(got == want);
      }
  }
}

TEST_CASE("decimal parsing rejects what Q_{k,ell} cannot hold") {
  CHECK_THROWS_AS(FixedMatrix::from_decimal({8, 1}, 1, 1, {"0.1"}), std::invalid_argument);
  CHECK_THROWS_AS(FixedMatrix::from_decimal({8, 4}, 1, 1, {"100"}), std::invalid_argument);
  CHECK_THROWS_AS(FixedMatrix::from_decimal({8, 4}, 1, 1, {"abc"}), std::invalid_argument);
  CHECK_THROWS_AS(FixedMatrix::from_decimal({8, 4}, 1, 1, {""}), std::invalid_argument);
  // boundary values of ZZ_8 at ell = 4: [-8, 7.9375]
  CHECK_NOTHROW(FixedMatrix::from_decimal({8, 4}, 1, 1, {"-8"}));
  CHECK_NOTHROW(FixedMatrix::from_decimal({8, 4}, 1, 1, {"7.9375"}));
  CHECK_THROWS_AS(FixedMatrix::from_decimal({8, 4}, 1, 1, {"8"}), std::invalid_argument);
}

TEST_CASE("decimal printing round-trips through the parser") {
  Csprng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    FixedMatrix x = testutil::random_fixed({20, 7}, 1, 1, rng);
    FixedMatrix back = FixedMatrix::from_decimal({20, 7}, 1, 1, {x.decimal(0, 0)});
    CHECK(back == x);
  }
  CHECK(scaled_to_decimal(BigInt(0), 5) == "0");
  CHECK(scaled_to_decimal(BigInt(-3), 1) == "-1.5");
}

TEST_CASE("rounding division by a power of two") {
  // round(x) = floor(x + 1/2): -1.5 -> -1, -0.5 -> 0, 0.5 -> 1
  IntMatrix m = IntMatrix::from_entries(5, 1, {BigInt(-3), BigInt(-1), BigInt(1), BigInt(8),
                                               BigInt(-8)});
  IntMatrix r = m.round_div_pow2(1);
  CHECK(r.at(0, 0) == -1);
  CHECK(r.at(1, 0) == 0);
  CHECK(r.at(2, 0) == 1);
  CHECK(r.at(3, 0) == 4);
  CHECK(r.at(4, 0) == -4);
}

TEST_CASE("quantize rounds to the nearest grid point") {
  CHECK(quantize_scaled(1.4999, 18, 0) == 1);
  CHECK(quantize_scaled(1.5, 18, 0) == 2);
  CHECK(quantize_scaled(-0.00097, 18, 9) == 0);
  CHECK(quantize_scaled(-0.00098, 18, 9) == -1);  // just past half a grid step
  CHECK(quantize_scaled(179.9, 18, 9) == BigInt(92109));
  CHECK_THROWS_AS(quantize_scaled(300.0, 9, 1), std::invalid_argument);
}

TEST_CASE("signed range checks") {
  CHECK(in_signed_range(BigInt(-128), 8));
  CHECK(in_signed_range(BigInt(127), 8));
  CHECK_FALSE(in_signed_range(BigInt(128), 8));
  CHECK_FALSE(in_signed_range(BigInt(-129), 8));
}
