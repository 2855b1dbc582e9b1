#pragma once

#include <gmpxx.h>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stpc/rng.hpp"

namespace stpc {

using BigInt = mpz_class;

// Odd prime modulus q >= 3. Residues everywhere in this library are kept in
// the centered range [-q/2, q/2); the canonical non-negative form [0, q) is
// used only at the serialization boundary.
class Modulus {
 public:
  explicit Modulus(BigInt q);
  static Modulus from_string(const std::string& s);  // decimal or 0x-prefixed hex

  const BigInt& value() const { return q_; }
  unsigned bit_len() const { return bit_len_; }      // floor(log2 q) + 1
  unsigned byte_width() const { return (bit_len_ + 7) / 8; }
  const BigInt& centered_max() const { return half_; }  // (q-1)/2

  bool operator==(const Modulus& o) const { return q_ == o.q_; }
  bool operator!=(const Modulus& o) const { return q_ != o.q_; }

 private:
  BigInt q_;
  BigInt half_;
  unsigned bit_len_;
};

// z mod m into [-m/2, m/2): z - floor((z + m/2)/m) * m. Any modulus m >= 1,
// including powers of two.
BigInt reduce_centered(const BigInt& z, const BigInt& m);
inline BigInt reduce_centered(const BigInt& z, const Modulus& q) {
  return reduce_centered(z, q.value());
}

// r with 2^ell * r = 1 (mod q), centered. Exists for every odd q.
BigInt inv_pow2(unsigned ell, const Modulus& q);

// Uniform signed value in ZZ_bits = [-2^(bits-1), 2^(bits-1) - 1], bits >= 1.
BigInt sample_int_bits(unsigned bits, Csprng& rng);

// Dense row-major matrix over the centered residue ring Z_q.
class ZqMatrix {
 public:
  ZqMatrix(Modulus q, std::size_t rows, std::size_t cols);  // zero-filled
  // Reduces each entry into the centered range.
  static ZqMatrix from_entries(Modulus q, std::size_t rows, std::size_t cols,
                               std::vector<BigInt> entries);
  static ZqMatrix identity(Modulus q, std::size_t n);
  static ZqMatrix ones(Modulus q, std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const Modulus& modulus() const { return q_; }

  const BigInt& at(std::size_t r, std::size_t c) const { return e_[r * cols_ + c]; }
  void set(std::size_t r, std::size_t c, const BigInt& v);

  ZqMatrix add(const ZqMatrix& o) const;
  ZqMatrix sub(const ZqMatrix& o) const;
  ZqMatrix mul(const ZqMatrix& o) const;
  ZqMatrix scalar_mul(const BigInt& k) const;
  ZqMatrix negate() const;

  // [this; bottom] stacked by rows.
  ZqMatrix vstack(const ZqMatrix& bottom) const;
  // Rows [0, n) and [n, rows) as separate matrices.
  std::pair<ZqMatrix, ZqMatrix> split_rows(std::size_t n) const;

  bool operator==(const ZqMatrix& o) const;
  bool operator!=(const ZqMatrix& o) const { return !(*this == o); }

  // Wire form: 4-byte big-endian rows and cols, then row-major entries, each
  // the canonical residue in [0, q) as a fixed-width big-endian byte string.
  std::vector<std::uint8_t> to_bytes() const;
  static ZqMatrix from_bytes(const Modulus& q, std::span<const std::uint8_t> in,
                             std::size_t& offset);

 private:
  Modulus q_;
  std::size_t rows_, cols_;
  std::vector<BigInt> e_;
};

// Each entry independently uniform over the q residues. Rejection sampling on
// bit_len-bit strings, so there is no modulo bias.
ZqMatrix sample_uniform(const Modulus& q, std::size_t rows, std::size_t cols, Csprng& rng);

}  // namespace stpc
