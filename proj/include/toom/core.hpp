#ifndef TOOM_CORE_HPP
#define TOOM_CORE_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace toom {

using Site = std::int64_t;

/// Closed interval of sites [lo, hi].
struct Window {
  Site lo = 0;
  Site hi = 0;

  [[nodiscard]] bool contains(Site x) const { return lo <= x && x <= hi; }
  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(hi - lo + 1);
  }
  friend bool operator==(const Window&, const Window&) = default;
};

/// Jump rates of the two particle species, normalized so that
/// lambda_plus + lambda_minus == 1, together with the balancing density p*.
class ModelParams {
 public:
  /// Rejects rates that are non-positive or do not sum to one (1e-12 slack;
  /// the stored pair is renormalized exactly).
  ModelParams(double lambda_plus, double lambda_minus);
  /// Convenience: lambda_minus = 1 - lambda_plus.
  static ModelParams from_lambda_plus(double lambda_plus);

  [[nodiscard]] double lambda_plus() const { return lambda_plus_; }
  [[nodiscard]] double lambda_minus() const { return lambda_minus_; }
  [[nodiscard]] double lambda(int sign) const {
    return sign > 0 ? lambda_plus_ : lambda_minus_;
  }
  [[nodiscard]] double p_star() const { return p_star_; }

 private:
  double lambda_plus_;
  double lambda_minus_;
  double p_star_;
};

/// Unique p in (0,1) with ((1-p)/p)^2 == lambda_plus / lambda_minus.
double p_star(double lambda_plus, double lambda_minus);

/// Finite window of +/-1 spins, one bit per site (bit set == +1).
class SpinConfig {
 public:
  SpinConfig(Window window, int fill);
  /// Spins listed left to right starting at site `lo`; each entry must be +1 or -1.
  static SpinConfig from_spins(Site lo, std::span<const int> spins);
  /// Parses a string of '+'/'-' characters.
  static SpinConfig from_string(Site lo, std::string_view text);

  [[nodiscard]] Site lo() const { return window_.lo; }
  [[nodiscard]] Site hi() const { return window_.hi; }
  [[nodiscard]] const Window& window() const { return window_; }
  [[nodiscard]] std::size_t size() const { return window_.size(); }
  [[nodiscard]] bool contains(Site x) const { return window_.contains(x); }

  /// +1 or -1. Throws std::out_of_range outside the window.
  [[nodiscard]] int spin(Site x) const;
  [[nodiscard]] bool is_plus(Site x) const;
  void set(Site x, int s);
  void flip(Site x);
  /// Exchanges the spins at two sites.
  void swap_spins(Site x, Site z);

  /// Sum of spins.
  [[nodiscard]] long long magnetization() const;
  [[nodiscard]] std::string to_string() const;

  [[nodiscard]] std::span<const std::uint64_t> words() const { return words_; }
  [[nodiscard]] std::span<std::uint64_t> mutable_words() { return words_; }

  friend bool operator==(const SpinConfig&, const SpinConfig&) = default;

 private:
  [[nodiscard]] std::size_t offset(Site x) const;

  Window window_;
  std::vector<std::uint64_t> words_;
};

/// Lengths of the constant-sign blocks adjacent to a site.
struct BlockStats {
  std::int64_t l = 0;
  std::int64_t r = 0;
  bool l_clipped = false;
  bool r_clipped = false;
};

/// A block length together with whether the block ran into the window edge.
struct BlockLength {
  std::int64_t length = 0;
  bool clipped = false;
};

/// Smallest z > x with spin(z) != spin(x); nullopt when [x, hi] is constant.
std::optional<Site> first_opposite_right(const SpinConfig& cfg, Site x);
/// Largest z < x with spin(z) != spin(x); nullopt when [lo, x] is constant.
std::optional<Site> first_opposite_left(const SpinConfig& cfg, Site x);

/// l_x: length of the constant block ending at x-1. Requires x-1 in window.
BlockLength block_left_len(const SpinConfig& cfg, Site x);
/// r_x: length of the constant block starting at x+1. Requires x+1 in window.
BlockLength block_right_len(const SpinConfig& cfg, Site x);
/// Both of the above; requires x-1 and x+1 in window.
BlockStats block_stats(const SpinConfig& cfg, Site x);

/// Deterministic per-site uniform source keyed by (seed, tag, site). Used for
/// initial configurations so that enlarging a window extends, rather than
/// redraws, an existing sample.
class SiteUniforms {
 public:
  SiteUniforms(std::uint64_t seed, std::uint32_t tag) : seed_(seed), tag_(tag) {}
  [[nodiscard]] double operator()(Site x) const;
  [[nodiscard]] std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint32_t tag_;
};

/// Stream tags reserved for initial-condition sampling.
inline constexpr std::uint32_t kTagBernoulli = 0x1001;
inline constexpr std::uint32_t kTagMonotone = 0x1002;

/// I.i.d. spins with P(+1) = p on the window.
SpinConfig sample_bernoulli(double p, Window window, const SiteUniforms& rng);

/// One shared uniform V_x per site; sigma(p, x) = +1 iff V_x < p.
/// `ps` must be sorted ascending with entries in (0,1).
std::vector<SpinConfig> sample_monotone_family(std::span<const double> ps,
                                               Window window,
                                               const SiteUniforms& rng);

}  // namespace toom

#endif  // TOOM_CORE_HPP
