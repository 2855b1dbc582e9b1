#include "stpc/rng.hpp"

#include <cstring>
#include <random>
#include <stdexcept>

namespace stpc {

namespace {

inline std::uint32_t rotl(std::uint32_t v, int n) { return (v << n) | (v >> (32 - n)); }

inline void quarter_round(std::uint32_t& a, std::uint32_t& b, std::uint32_t& c, std::uint32_t& d) {
  a += b; d ^= a; d = rotl(d, 16);
  c += d; b ^= c; b = rotl(b, 12);
  a += b; d ^= a; d = rotl(d, 8);
  c += d; b ^= c; b = rotl(b, 7);
}

inline std::uint64_t splitmix64(std::uint64_t& s) {
  s += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

namespace detail {

void chacha20_block(const std::array<std::uint32_t, 8>& key, std::uint32_t counter,
                    const std::array<std::uint32_t, 3>& nonce, std::uint8_t out[64]) {
  std::uint32_t st[16] = {0x61707865, 0x3320646e, 0x79622d32, 0x6b206574,
                          key[0], key[1], key[2], key[3],
                          key[4], key[5], key[6], key[7],
                          counter, nonce[0], nonce[1], nonce[2]};
  std::uint32_t x[16];
  std::memcpy(x, st, sizeof(x));
  for (int i = 0; i < 10; ++i) {
    quarter_round(x[0], x[4], x[8], x[12]);
    quarter_round(x[1], x[5], x[9], x[13]);
    quarter_round(x[2], x[6], x[10], x[14]);
    quarter_round(x[3], x[7], x[11], x[15]);
    quarter_round(x[0], x[5], x[10], x[15]);
    quarter_round(x[1], x[6], x[11], x[12]);
    quarter_round(x[2], x[7], x[8], x[13]);
    quarter_round(x[3], x[4], x[9], x[14]);
  }
  for (int i = 0; i < 16; ++i) {
    std::uint32_t w = x[i] + st[i];
    out[4 * i + 0] = static_cast<std::uint8_t>(w);
    out[4 * i + 1] = static_cast<std::uint8_t>(w >> 8);
    out[4 * i + 2] = static_cast<std::uint8_t>(w >> 16);
    out[4 * i + 3] = static_cast<std::uint8_t>(w >> 24);
  }
}

}  // namespace detail

Csprng::Csprng(const Key& key) {
  for (int i = 0; i < 8; ++i) {
    key_[i] = static_cast<std::uint32_t>(key[4 * i]) |
              static_cast<std::uint32_t>(key[4 * i + 1]) << 8 |
              static_cast<std::uint32_t>(key[4 * i + 2]) << 16 |
              static_cast<std::uint32_t>(key[4 * i + 3]) << 24;
  }
}

Csprng::Csprng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (int i = 0; i < 4; ++i) {
    std::uint64_t w = splitmix64(s);
    key_[2 * i] = static_cast<std::uint32_t>(w);
    key_[2 * i + 1] = static_cast<std::uint32_t>(w >> 32);
  }
}

Csprng Csprng::from_os_entropy() {
  std::random_device rd;
  Key key;
  for (std::size_t i = 0; i < key.size(); i += 4) {
    std::uint32_t w = rd();
    key[i] = static_cast<std::uint8_t>(w);
    key[i + 1] = static_cast<std::uint8_t>(w >> 8);
    key[i + 2] = static_cast<std::uint8_t>(w >> 16);
    key[i + 3] = static_cast<std::uint8_t>(w >> 24);
  }
  return Csprng(key);
}

void Csprng::next_block() {
  detail::chacha20_block(key_, counter_, nonce_, block_.data());
  if (++counter_ == 0) {
    // 256 GiB consumed under one nonce; move to the next one.
    if (++nonce_[0] == 0 && ++nonce_[1] == 0) ++nonce_[2];
  }
  pos_ = 0;
}

void Csprng::fill(std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    if (pos_ == 64) next_block();
    std::size_t take = std::min<std::size_t>(64 - pos_, out.size() - done);
    std::memcpy(out.data() + done, block_.data() + pos_, take);
    pos_ += take;
    done += take;
  }
}

std::uint64_t Csprng::next_u64() {
  std::uint8_t buf[8];
  fill(buf);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

}  // namespace stpc
