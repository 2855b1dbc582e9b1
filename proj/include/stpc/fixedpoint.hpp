#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stpc/modring.hpp"

namespace stpc {

// Parameters of the fixed-point set Q_{k,ell}: values z * 2^-ell with z a
// signed k-bit integer, k > ell >= 0.
struct FixedParams {
  unsigned k;
  unsigned ell;
};

// Plain arbitrary-precision integer matrix (no modulus). Carrier for encoded
// fixed-point values and for the exact-integer reference recursions.
class IntMatrix {
 public:
  IntMatrix(std::size_t rows, std::size_t cols);
  static IntMatrix from_entries(std::size_t rows, std::size_t cols, std::vector<BigInt> entries);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const BigInt& at(std::size_t r, std::size_t c) const { return e_[r * cols_ + c]; }
  void set(std::size_t r, std::size_t c, BigInt v) { e_[r * cols_ + c] = std::move(v); }

  IntMatrix add(const IntMatrix& o) const;
  IntMatrix mul(const IntMatrix& o) const;
  IntMatrix vstack(const IntMatrix& bottom) const;
  std::pair<IntMatrix, IntMatrix> split_rows(std::size_t n) const;
  // Entrywise round(v / 2^ell) with round(x) = floor(x + 1/2).
  IntMatrix round_div_pow2(unsigned ell) const;
  BigInt inf_norm() const;  // max absolute entry

  bool operator==(const IntMatrix& o) const;
  bool operator!=(const IntMatrix& o) const { return !(*this == o); }

  // Entrywise centered reduction mod q.
  ZqMatrix to_zq(const Modulus& q) const;
  // Centered residues reinterpreted as plain integers.
  static IntMatrix from_zq(const ZqMatrix& m);

 private:
  std::size_t rows_, cols_;
  std::vector<BigInt> e_;
};

// True iff z is a signed bits-bit integer: -2^(bits-1) <= z <= 2^(bits-1)-1.
bool in_signed_range(const BigInt& z, unsigned bits);

// True iff v = z * 2^-ell for some z in the signed k-bit range.
bool is_fixed_member(const mpq_class& v, unsigned k, unsigned ell);

// Matrix over Q_{k,ell}, stored as the underlying scaled integers z = 2^ell * value.
class FixedMatrix {
 public:
  FixedMatrix(FixedParams params, std::size_t rows, std::size_t cols);  // zeros
  // Validates every z against the signed k-bit range.
  static FixedMatrix from_scaled(FixedParams params, std::size_t rows, std::size_t cols,
                                 std::vector<BigInt> scaled);
  // Exact decimal strings; rejects values not representable in Q_{k,ell}.
  static FixedMatrix from_decimal(FixedParams params, std::size_t rows, std::size_t cols,
                                  const std::vector<std::string>& entries);

  const FixedParams& params() const { return params_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  const BigInt& scaled(std::size_t r, std::size_t c) const { return z_.at(r, c); }
  mpq_class value(std::size_t r, std::size_t c) const;
  double value_as_double(std::size_t r, std::size_t c) const;
  std::string decimal(std::size_t r, std::size_t c) const;  // exact, finite expansion

  // Equal dimensions, fractional length, and scaled entries. The capacity k
  // is metadata and does not participate.
  bool operator==(const FixedMatrix& o) const;
  bool operator!=(const FixedMatrix& o) const { return !(*this == o); }

 private:
  FixedParams params_;
  std::size_t rows_, cols_;
  IntMatrix z_;
};

// Xbar = 2^ell * X as an integer matrix. ell may differ from the stored
// fractional length; errors when an entry has a non-terminating binary
// fraction at ell bits or overflows the signed k-bit range.
IntMatrix encode(const FixedMatrix& x, unsigned ell);

// Exact rational 2^-ell * Xbar. decode(encode(X, ell), ell) == X. The result's
// k is the smallest capacity holding every entry.
FixedMatrix decode(const IntMatrix& xbar, unsigned ell);

bool validate_membership(const std::vector<mpq_class>& entries, unsigned k, unsigned ell);

// Explicit round-to-nearest quantizer onto Q_{k,ell} (ties up). Never applied
// implicitly; errors when the result leaves the representable range.
BigInt quantize_scaled(double v, unsigned k, unsigned ell);

std::string scaled_to_decimal(const BigInt& z, unsigned ell);

// Exact rational value of a decimal literal like "-2.34".
mpq_class parse_exact_decimal(const std::string& s);

}  // namespace stpc
