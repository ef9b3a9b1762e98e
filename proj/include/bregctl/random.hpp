#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace bregctl {

/// Philox4x32-10 counter-based generator. Every draw is a pure function of
/// (seed, stream, counter), so any sample can be regenerated independently of
/// the order in which others were drawn.
class CounterRng {
 public:
  static constexpr std::string_view kAlgorithm = "philox4x32-10/box-muller";

  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t seed() const { return seed_; }

  using Block = std::array<std::uint32_t, 4>;

  static Block philox(Block ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }

  Block block(std::uint64_t stream, std::uint64_t counter) const {
    return philox({static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
                   static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
                  {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
  }

  /// Two uniforms in the open interval (0, 1) from one block.
  std::array<double, 2> uniform_pair(std::uint64_t stream, std::uint64_t counter) const {
    Block b = block(stream, counter);
    return {to_unit(b[0], b[1]), to_unit(b[2], b[3])};
  }

  double uniform(std::uint64_t stream, std::uint64_t index) const {
    return uniform_pair(stream, index / 2)[index % 2];
  }

  /// Standard normal; pairs share one block through Box–Muller.
  double normal(std::uint64_t stream, std::uint64_t index) const {
    auto [u1, u2] = uniform_pair(stream, index / 2);
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    return index % 2 == 0 ? radius * std::cos(angle) : radius * std::sin(angle);
  }

 private:
  static double to_unit(std::uint32_t a, std::uint32_t b) {
    std::uint64_t bits = (static_cast<std::uint64_t>(a) << 32 | b) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed_;
};

}  // namespace bregctl
