#include "stpc/fixedpoint.hpp"

#include <cmath>
#include <stdexcept>

namespace stpc {

IntMatrix::IntMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), e_(rows * cols, BigInt(0)) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("IntMatrix: empty dimensions");
}

IntMatrix IntMatrix::from_entries(std::size_t rows, std::size_t cols, std::vector<BigInt> entries) {
  if (entries.size() != rows * cols)
    throw std::invalid_argument("IntMatrix: entry count does not match dimensions");
  IntMatrix m(rows, cols);
  m.e_ = std::move(entries);
  return m;
}

IntMatrix IntMatrix::add(const IntMatrix& o) const {
  if (rows_ != o.rows_ || cols_ != o.cols_)
    throw std::invalid_argument("IntMatrix: dimension mismatch");
  IntMatrix out(rows_, cols_);
  for (std::size_t i = 0; i < e_.size(); ++i) out.e_[i] = e_[i] + o.e_[i];
  return out;
}

IntMatrix IntMatrix::mul(const IntMatrix& o) const {
  if (cols_ != o.rows_) throw std::invalid_argument("IntMatrix: inner dimension mismatch");
  IntMatrix out(rows_, o.cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < o.cols_; ++c) {
      BigInt acc = 0;
      for (std::size_t k = 0; k < cols_; ++k) acc += e_[r * cols_ + k] * o.e_[k * o.cols_ + c];
      out.e_[r * out.cols_ + c] = std::move(acc);
    }
  return out;
}

IntMatrix IntMatrix::vstack(const IntMatrix& bottom) const {
  if (cols_ != bottom.cols_) throw std::invalid_argument("IntMatrix: column mismatch");
  IntMatrix out(rows_ + bottom.rows_, cols_);
  for (std::size_t i = 0; i < e_.size(); ++i) out.e_[i] = e_[i];
  for (std::size_t i = 0; i < bottom.e_.size(); ++i) out.e_[e_.size() + i] = bottom.e_[i];
  return out;
}

std::pair<IntMatrix, IntMatrix> IntMatrix::split_rows(std::size_t n) const {
  if (n == 0 || n >= rows_) throw std::invalid_argument("IntMatrix: bad split point");
  IntMatrix top(n, cols_);
  IntMatrix bot(rows_ - n, cols_);
  for (std::size_t i = 0; i < n * cols_; ++i) top.e_[i] = e_[i];
  for (std::size_t i = 0; i < (rows_ - n) * cols_; ++i) bot.e_[i] = e_[n * cols_ + i];
  return {std::move(top), std::move(bot)};
}

IntMatrix IntMatrix::round_div_pow2(unsigned ell) const {
  IntMatrix out(rows_, cols_);
  BigInt half, pow2;
  mpz_ui_pow_ui(pow2.get_mpz_t(), 2, ell);
  half = pow2 / 2;
  for (std::size_t i = 0; i < e_.size(); ++i) {
    BigInt num = e_[i] + half;
    mpz_fdiv_q(out.e_[i].get_mpz_t(), num.get_mpz_t(), pow2.get_mpz_t());
  }
  return out;
}

BigInt IntMatrix::inf_norm() const {
  BigInt best = 0;
  for (const auto& v : e_) {
    BigInt a = abs(v);
    if (a > best) best = a;
  }
  return best;
}

bool IntMatrix::operator==(const IntMatrix& o) const {
  return rows_ == o.rows_ && cols_ == o.cols_ && e_ == o.e_;
}

ZqMatrix IntMatrix::to_zq(const Modulus& q) const {
  return ZqMatrix::from_entries(q, rows_, cols_, e_);
}

IntMatrix IntMatrix::from_zq(const ZqMatrix& m) {
  IntMatrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out.set(r, c, m.at(r, c));
  return out;
}

bool in_signed_range(const BigInt& z, unsigned bits) {
  if (bits == 0) return false;
  BigInt half;
  mpz_ui_pow_ui(half.get_mpz_t(), 2, bits - 1);
  return z >= -half && z <= half - 1;
}

bool is_fixed_member(const mpq_class& v, unsigned k, unsigned ell) {
  mpq_class scaled = v;
  mpq_mul_2exp(scaled.get_mpq_t(), scaled.get_mpq_t(), ell);
  scaled.canonicalize();
  if (scaled.get_den() != 1) return false;
  return in_signed_range(scaled.get_num(), k);
}

FixedMatrix::FixedMatrix(FixedParams params, std::size_t rows, std::size_t cols)
    : params_(params), rows_(rows), cols_(cols), z_(rows, cols) {
  if (params.k <= params.ell)
    throw std::invalid_argument("FixedParams: k must exceed ell");
}

FixedMatrix FixedMatrix::from_scaled(FixedParams params, std::size_t rows, std::size_t cols,
                                     std::vector<BigInt> scaled) {
  FixedMatrix m(params, rows, cols);
  for (const auto& z : scaled)
    if (!in_signed_range(z, params.k))
      throw std::invalid_argument("FixedMatrix: entry outside the signed k-bit range");
  m.z_ = IntMatrix::from_entries(rows, cols, std::move(scaled));
  return m;
}

// Exact decimal literal -> rational. Accepts [+-]digits[.digits].
mpq_class parse_exact_decimal(const std::string& s) {
  if (s.empty()) throw std::invalid_argument("decimal parse: empty string");
  std::size_t pos = 0;
  bool neg = false;
  if (s[pos] == '+' || s[pos] == '-') neg = s[pos++] == '-';
  std::string digits;
  std::size_t frac_digits = 0;
  bool seen_dot = false, seen_digit = false;
  for (; pos < s.size(); ++pos) {
    char c = s[pos];
    if (c == '.') {
      if (seen_dot) throw std::invalid_argument("decimal parse: repeated point in '" + s + "'");
      seen_dot = true;
    } else if (c >= '0' && c <= '9') {
      digits.push_back(c);
      seen_digit = true;
      if (seen_dot) ++frac_digits;
    } else {
      throw std::invalid_argument("decimal parse: bad character in '" + s + "'");
    }
  }
  if (!seen_digit) throw std::invalid_argument("decimal parse: no digits in '" + s + "'");
  BigInt num(digits.empty() ? "0" : digits, 10);
  if (neg) num = -num;
  BigInt den;
  mpz_ui_pow_ui(den.get_mpz_t(), 10, frac_digits);
  mpq_class v(num, den);
  v.canonicalize();
  return v;
}

FixedMatrix FixedMatrix::from_decimal(FixedParams params, std::size_t rows, std::size_t cols,
                                      const std::vector<std::string>& entries) {
  if (entries.size() != rows * cols)
    throw std::invalid_argument("FixedMatrix: entry count does not match dimensions");
  std::vector<BigInt> scaled;
  scaled.reserve(entries.size());
  for (const auto& s : entries) {
    mpq_class v = parse_exact_decimal(s);
    mpq_class z = v;
    mpq_mul_2exp(z.get_mpq_t(), z.get_mpq_t(), params.ell);
    z.canonicalize();
    if (z.get_den() != 1)
      throw std::invalid_argument("FixedMatrix: '" + s + "' is not exactly representable with " +
                                  std::to_string(params.ell) + " fractional bits");
    scaled.push_back(z.get_num());
  }
  return from_scaled(params, rows, cols, std::move(scaled));
}

mpq_class FixedMatrix::value(std::size_t r, std::size_t c) const {
  mpq_class v(z_.at(r, c));
  mpq_div_2exp(v.get_mpq_t(), v.get_mpq_t(), params_.ell);
  return v;
}

double FixedMatrix::value_as_double(std::size_t r, std::size_t c) const {
  return value(r, c).get_d();
}

std::string FixedMatrix::decimal(std::size_t r, std::size_t c) const {
  return scaled_to_decimal(z_.at(r, c), params_.ell);
}

bool FixedMatrix::operator==(const FixedMatrix& o) const {
  return rows_ == o.rows_ && cols_ == o.cols_ && params_.ell == o.params_.ell && z_ == o.z_;
}

IntMatrix encode(const FixedMatrix& x, unsigned ell) {
  const unsigned stored = x.params().ell;
  // The value range is fixed by the source k; the scaled-integer bound moves
  // with the requested fractional length.
  const long allowed = static_cast<long>(x.params().k) + static_cast<long>(ell) -
                       static_cast<long>(stored);
  IntMatrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      BigInt z = x.scaled(r, c);
      if (ell >= stored) {
        mpz_mul_2exp(z.get_mpz_t(), z.get_mpz_t(), ell - stored);
      } else {
        const unsigned drop = stored - ell;
        if (mpz_scan1(z.get_mpz_t(), 0) < drop && z != 0)
          throw std::invalid_argument("encode: non-terminating binary fraction at requested ell");
        mpz_fdiv_q_2exp(z.get_mpz_t(), z.get_mpz_t(), drop);
      }
      if (allowed < 1 ? z != 0 : !in_signed_range(z, static_cast<unsigned>(allowed)))
        throw std::invalid_argument("encode: magnitude overflow of the signed k-bit range");
      out.set(r, c, std::move(z));
    }
  return out;
}

FixedMatrix decode(const IntMatrix& xbar, unsigned ell) {
  // Smallest capacity that holds every entry, with k > ell kept invariant.
  unsigned k = ell + 1;
  for (std::size_t r = 0; r < xbar.rows(); ++r)
    for (std::size_t c = 0; c < xbar.cols(); ++c) {
      const BigInt& z = xbar.at(r, c);
      if (z == 0) continue;
      unsigned need = static_cast<unsigned>(mpz_sizeinbase(z.get_mpz_t(), 2)) + 1;
      if (z < 0) {
        // -2^(b-1) fits in b bits
        BigInt neg = -z;
        if (mpz_popcount(neg.get_mpz_t()) == 1) --need;
      }
      if (need > k) k = need;
    }
  std::vector<BigInt> scaled;
  scaled.reserve(xbar.rows() * xbar.cols());
  for (std::size_t r = 0; r < xbar.rows(); ++r)
    for (std::size_t c = 0; c < xbar.cols(); ++c) scaled.push_back(xbar.at(r, c));
  return FixedMatrix::from_scaled({k, ell}, xbar.rows(), xbar.cols(), std::move(scaled));
}

bool validate_membership(const std::vector<mpq_class>& entries, unsigned k, unsigned ell) {
  for (const auto& v : entries)
    if (!is_fixed_member(v, k, ell)) return false;
  return true;
}

BigInt quantize_scaled(double v, unsigned k, unsigned ell) {
  if (!std::isfinite(v)) throw std::invalid_argument("quantize: non-finite value");
  double scaled = std::ldexp(v, static_cast<int>(ell));
  double rounded = std::floor(scaled + 0.5);
  BigInt z;
  mpz_set_d(z.get_mpz_t(), rounded);
  if (!in_signed_range(z, k))
    throw std::invalid_argument("quantize: value outside the representable range");
  return z;
}

std::string scaled_to_decimal(const BigInt& z, unsigned ell) {
  if (ell == 0) return z.get_str();
  BigInt mag = abs(z);
  BigInt ip, fr;
  mpz_fdiv_q_2exp(ip.get_mpz_t(), mag.get_mpz_t(), ell);
  mpz_fdiv_r_2exp(fr.get_mpz_t(), mag.get_mpz_t(), ell);
  std::string out = (z < 0 ? "-" : "") + ip.get_str();
  if (fr != 0) {
    // fr / 2^ell has the exact expansion fr * 5^ell, padded to ell digits.
    BigInt five;
    mpz_ui_pow_ui(five.get_mpz_t(), 5, ell);
    std::string frac = BigInt(fr * five).get_str();
    if (frac.size() < ell) frac.insert(frac.begin(), ell - frac.size(), '0');
    while (frac.back() == '0') frac.pop_back();
    out += "." + frac;
  }
  return out;
}

}  // namespace stpc
