#pragma once

#include <array>
#include <cstdint>

#include "voldev/special.hpp"

namespace voldev {

// Philox4x32-10 (Salmon et al., SC'11). One stream per (seed, path index);
// the draw counter runs inside the stream, so path i's numbers never depend
// on which thread produced them.
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_{static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)} {}

  std::array<std::uint32_t, 4> next_block() {
    std::array<std::uint32_t, 4> c{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                   stream_[0], stream_[1]};
    ++counter_;
    std::array<std::uint32_t, 2> k = key_;
    for (int r = 0; r < 10; ++r) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53} * c[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57} * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
      k[0] += 0x9E3779B9;
      k[1] += 0xBB67AE85;
    }
    return c;
  }

  // Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    if (have_ == 0) {
      block_ = next_block();
      have_ = 2;
    }
    const std::size_t o = 2 * (2 - have_);
    --have_;
    const std::uint64_t hi = block_[o] >> 5, lo = block_[o + 1] >> 6;
    return (static_cast<double>((hi << 26) | lo) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_quantile(uniform()); }

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int have_ = 0;
};

}  // namespace voldev
