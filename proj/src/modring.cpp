#include "stpc/modring.hpp"

#include <stdexcept>

namespace stpc {

namespace {

constexpr int kMillerRabinRounds = 64;

void check_same_shape(const ZqMatrix& a, const ZqMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("ZqMatrix: dimension mismatch");
  if (a.modulus() != b.modulus())
    throw std::invalid_argument("ZqMatrix: modulus mismatch");
}

}  // namespace

Modulus::Modulus(BigInt q) : q_(std::move(q)) {
  if (q_ < 3 || mpz_even_p(q_.get_mpz_t()))
    throw std::invalid_argument("Modulus: q must be an odd integer >= 3");
  if (mpz_probab_prime_p(q_.get_mpz_t(), kMillerRabinRounds) == 0)
    throw std::invalid_argument("Modulus: q failed primality test");
  half_ = (q_ - 1) / 2;
  bit_len_ = static_cast<unsigned>(mpz_sizeinbase(q_.get_mpz_t(), 2));
}

Modulus Modulus::from_string(const std::string& s) {
  BigInt q;
  if (s.rfind("0x", 0) == 0 || s.rfind("0X", 0) == 0) {
    if (q.set_str(s.substr(2), 16) != 0)
      throw std::invalid_argument("Modulus: bad hex literal '" + s + "'");
  } else if (q.set_str(s, 10) != 0) {
    throw std::invalid_argument("Modulus: bad decimal literal '" + s + "'");
  }
  return Modulus(q);
}

BigInt reduce_centered(const BigInt& z, const BigInt& m) {
  if (m < 1) throw std::invalid_argument("reduce_centered: modulus must be >= 1");
  // floor((z + m/2)/m) == floor((2z + m)/(2m)) without leaving the integers.
  BigInt f;
  BigInt num = 2 * z + m;
  BigInt den = 2 * m;
  mpz_fdiv_q(f.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
  return z - f * m;
}

BigInt inv_pow2(unsigned ell, const Modulus& q) {
  BigInt pow2;
  mpz_ui_pow_ui(pow2.get_mpz_t(), 2, ell);
  BigInt inv;
  if (mpz_invert(inv.get_mpz_t(), pow2.get_mpz_t(), q.value().get_mpz_t()) == 0)
    throw std::logic_error("inv_pow2: no inverse");  // unreachable for odd q
  return reduce_centered(inv, q);
}

BigInt sample_int_bits(unsigned bits, Csprng& rng) {
  if (bits == 0) throw std::invalid_argument("sample_int_bits: bits must be >= 1");
  const std::size_t nbytes = (bits + 7) / 8;
  std::vector<std::uint8_t> buf(nbytes);
  rng.fill(buf);
  if (bits % 8 != 0) buf[0] &= static_cast<std::uint8_t>(0xff >> (8 - bits % 8));
  BigInt z;
  mpz_import(z.get_mpz_t(), nbytes, 1, 1, 1, 0, buf.data());
  // z uniform in [0, 2^bits); shift to [-2^(bits-1), 2^(bits-1) - 1]
  BigInt half;
  mpz_ui_pow_ui(half.get_mpz_t(), 2, bits - 1);
  return z - half;
}

ZqMatrix::ZqMatrix(Modulus q, std::size_t rows, std::size_t cols)
    : q_(std::move(q)), rows_(rows), cols_(cols), e_(rows * cols, BigInt(0)) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("ZqMatrix: empty dimensions");
}

ZqMatrix ZqMatrix::from_entries(Modulus q, std::size_t rows, std::size_t cols,
                                std::vector<BigInt> entries) {
  if (entries.size() != rows * cols)
    throw std::invalid_argument("ZqMatrix: entry count does not match dimensions");
  ZqMatrix m(std::move(q), rows, cols);
  for (std::size_t i = 0; i < entries.size(); ++i)
    m.e_[i] = reduce_centered(entries[i], m.q_);
  return m;
}

ZqMatrix ZqMatrix::identity(Modulus q, std::size_t n) {
  ZqMatrix m(std::move(q), n, n);
  for (std::size_t i = 0; i < n; ++i) m.e_[i * n + i] = 1;
  return m;
}

ZqMatrix ZqMatrix::ones(Modulus q, std::size_t rows, std::size_t cols) {
  ZqMatrix m(std::move(q), rows, cols);
  for (auto& v : m.e_) v = 1;
  return m;
}

void ZqMatrix::set(std::size_t r, std::size_t c, const BigInt& v) {
  e_[r * cols_ + c] = reduce_centered(v, q_);
}

ZqMatrix ZqMatrix::add(const ZqMatrix& o) const {
  check_same_shape(*this, o);
  ZqMatrix out(q_, rows_, cols_);
  for (std::size_t i = 0; i < e_.size(); ++i)
    out.e_[i] = reduce_centered(e_[i] + o.e_[i], q_);
  return out;
}

ZqMatrix ZqMatrix::sub(const ZqMatrix& o) const {
  check_same_shape(*this, o);
  ZqMatrix out(q_, rows_, cols_);
  for (std::size_t i = 0; i < e_.size(); ++i)
    out.e_[i] = reduce_centered(e_[i] - o.e_[i], q_);
  return out;
}

ZqMatrix ZqMatrix::mul(const ZqMatrix& o) const {
  if (cols_ != o.rows_) throw std::invalid_argument("ZqMatrix: inner dimension mismatch");
  if (q_ != o.q_) throw std::invalid_argument("ZqMatrix: modulus mismatch");
  ZqMatrix out(q_, rows_, o.cols_);
  BigInt acc;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < o.cols_; ++c) {
      acc = 0;
      for (std::size_t k = 0; k < cols_; ++k) acc += e_[r * cols_ + k] * o.e_[k * o.cols_ + c];
      out.e_[r * out.cols_ + c] = reduce_centered(acc, q_);
    }
  }
  return out;
}

ZqMatrix ZqMatrix::scalar_mul(const BigInt& k) const {
  ZqMatrix out(q_, rows_, cols_);
  for (std::size_t i = 0; i < e_.size(); ++i) out.e_[i] = reduce_centered(k * e_[i], q_);
  return out;
}

ZqMatrix ZqMatrix::negate() const {
  ZqMatrix out(q_, rows_, cols_);
  for (std::size_t i = 0; i < e_.size(); ++i) out.e_[i] = reduce_centered(-e_[i], q_);
  return out;
}

ZqMatrix ZqMatrix::vstack(const ZqMatrix& bottom) const {
  if (cols_ != bottom.cols_) throw std::invalid_argument("vstack: column mismatch");
  if (q_ != bottom.q_) throw std::invalid_argument("vstack: modulus mismatch");
  ZqMatrix out(q_, rows_ + bottom.rows_, cols_);
  for (std::size_t i = 0; i < e_.size(); ++i) out.e_[i] = e_[i];
  for (std::size_t i = 0; i < bottom.e_.size(); ++i) out.e_[e_.size() + i] = bottom.e_[i];
  return out;
}

std::pair<ZqMatrix, ZqMatrix> ZqMatrix::split_rows(std::size_t n) const {
  if (n == 0 || n >= rows_) throw std::invalid_argument("split_rows: bad split point");
  ZqMatrix top(q_, n, cols_);
  ZqMatrix bot(q_, rows_ - n, cols_);
  for (std::size_t i = 0; i < n * cols_; ++i) top.e_[i] = e_[i];
  for (std::size_t i = 0; i < (rows_ - n) * cols_; ++i) bot.e_[i] = e_[n * cols_ + i];
  return {std::move(top), std::move(bot)};
}

bool ZqMatrix::operator==(const ZqMatrix& o) const {
  return rows_ == o.rows_ && cols_ == o.cols_ && q_ == o.q_ && e_ == o.e_;
}

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32_be(std::span<const std::uint8_t> in, std::size_t& off) {
  if (in.size() - off < 4) throw std::invalid_argument("matrix decode: truncated header");
  std::uint32_t v = std::uint32_t(in[off]) << 24 | std::uint32_t(in[off + 1]) << 16 |
                    std::uint32_t(in[off + 2]) << 8 | std::uint32_t(in[off + 3]);
  off += 4;
  return v;
}

}  // namespace

std::vector<std::uint8_t> ZqMatrix::to_bytes() const {
  const std::size_t w = q_.byte_width();
  std::vector<std::uint8_t> out;
  out.reserve(8 + e_.size() * w);
  put_u32_be(out, static_cast<std::uint32_t>(rows_));
  put_u32_be(out, static_cast<std::uint32_t>(cols_));
  std::vector<std::uint8_t> elem(w);
  for (const auto& v : e_) {
    BigInt canon = v < 0 ? BigInt(v + q_.value()) : v;  // centered -> [0, q)
    std::fill(elem.begin(), elem.end(), 0);
    std::size_t count = 0;
    mpz_export(elem.data(), &count, 1, 1, 1, 0, canon.get_mpz_t());
    // mpz_export writes `count` big-endian bytes from the front; right-align.
    if (count < w) {
      std::copy_backward(elem.begin(), elem.begin() + count, elem.begin() + w);
      std::fill(elem.begin(), elem.begin() + (w - count), 0);
    }
    out.insert(out.end(), elem.begin(), elem.end());
  }
  return out;
}

ZqMatrix ZqMatrix::from_bytes(const Modulus& q, std::span<const std::uint8_t> in,
                              std::size_t& offset) {
  std::size_t off = offset;
  std::uint32_t rows = get_u32_be(in, off);
  std::uint32_t cols = get_u32_be(in, off);
  if (rows == 0 || cols == 0) throw std::invalid_argument("matrix decode: zero dimension");
  const std::size_t w = q.byte_width();
  const std::size_t need = std::size_t(rows) * cols * w;
  if (in.size() - off < need) throw std::invalid_argument("matrix decode: truncated body");
  ZqMatrix m(q, rows, cols);
  for (std::size_t i = 0; i < std::size_t(rows) * cols; ++i) {
    BigInt v;
    mpz_import(v.get_mpz_t(), w, 1, 1, 1, 0, in.data() + off);
    off += w;
    if (v >= q.value()) throw std::invalid_argument("matrix decode: element out of range");
    if (v > q.centered_max()) v -= q.value();
    m.e_[i] = std::move(v);
  }
  offset = off;
  return m;
}

ZqMatrix sample_uniform(const Modulus& q, std::size_t rows, std::size_t cols, Csprng& rng) {
  ZqMatrix m(q, rows, cols);
  const std::size_t w = q.byte_width();
  const unsigned top_bits = q.bit_len() % 8;
  const std::uint8_t mask = top_bits == 0 ? 0xff : static_cast<std::uint8_t>(0xff >> (8 - top_bits));
  std::vector<std::uint8_t> buf(w);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      BigInt z;
      for (;;) {
        rng.fill(buf);
        buf[0] &= mask;
        mpz_import(z.get_mpz_t(), w, 1, 1, 1, 0, buf.data());
        if (z < q.value()) break;
      }
      if (z > q.centered_max()) z -= q.value();
      m.set(r, c, z);
    }
  }
  return m;
}

}  // namespace stpc
