#ifndef TOOM_PHILOX_HPP
#define TOOM_PHILOX_HPP

#include <array>
#include <cstdint>

namespace toom {

// Philox4x32-10 (Salmon et al., SC'11). Bit-exact with the Random123
// reference implementation; see the known-answer vectors in the tests.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// 53-bit uniform in [0, 1) from two 32-bit words.
constexpr double to_unit_closed_open(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits =
      ((std::uint64_t{hi} << 32) | std::uint64_t{lo}) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

/// 53-bit uniform in (0, 1] from two 32-bit words.
constexpr double to_unit_open_closed(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits =
      ((std::uint64_t{hi} << 32) | std::uint64_t{lo}) >> 11;
  return static_cast<double>(bits + 1) * 0x1.0p-53;
}

/// Philox block addressed by (seed, tag, site, index). The layout is
///   counter = {index_lo, (index_hi & 0xffff) | tag << 16, site_lo, site_hi}
///   key     = {seed_lo, seed_hi}
/// so every draw is a pure function of its address.
constexpr Philox4x32::Counter keyed_block(std::uint64_t seed, std::uint32_t tag,
                                          std::int64_t site,
                                          std::uint64_t index) {
  const auto usite = static_cast<std::uint64_t>(site);
  const Philox4x32::Counter ctr = {
      static_cast<std::uint32_t>(index),
      static_cast<std::uint32_t>((index >> 32) & 0xffffu) | (tag << 16),
      static_cast<std::uint32_t>(usite), static_cast<std::uint32_t>(usite >> 32)};
  const Philox4x32::Key key = {static_cast<std::uint32_t>(seed),
                               static_cast<std::uint32_t>(seed >> 32)};
  return Philox4x32::generate(ctr, key);
}

}  // namespace toom

#endif  // TOOM_PHILOX_HPP
