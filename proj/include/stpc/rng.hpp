#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace stpc {

namespace detail {
// One ChaCha20 block (RFC 8439): 32-byte key, 32-bit counter, 12-byte nonce.
void chacha20_block(const std::array<std::uint32_t, 8>& key, std::uint32_t counter,
                    const std::array<std::uint32_t, 3>& nonce, std::uint8_t out[64]);
}  // namespace detail

// Deterministic cryptographic byte stream backed by the ChaCha20 keystream.
// Seeded instances replay exactly; fresh instances take their key from the OS.
// Not safe for concurrent use; each execution context owns its own generator.
class Csprng {
 public:
  using Key = std::array<std::uint8_t, 32>;

  explicit Csprng(const Key& key);
  // Expands a 64-bit seed into a full key (splitmix64). Test and replay use.
  explicit Csprng(std::uint64_t seed);

  static Csprng from_os_entropy();

  void fill(std::span<std::uint8_t> out);
  std::uint64_t next_u64();

 private:
  void next_block();

  std::array<std::uint32_t, 8> key_;
  std::array<std::uint32_t, 3> nonce_{};
  std::uint32_t counter_ = 0;
  std::array<std::uint8_t, 64> block_;
  std::size_t pos_ = 64;  // forces a refill on first use
};

}  // namespace stpc
