#include "toom/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include "toom/philox.hpp"

namespace toom {

namespace {

constexpr std::size_t kBits = 64;

std::uint64_t tail_mask(std::size_t size) {
  const std::size_t rem = size % kBits;
  return rem == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << rem) - 1;
}

}  // namespace

double p_star(double lambda_plus, double lambda_minus) {
  if (!(lambda_plus > 0.0) || !(lambda_minus > 0.0)) {
    throw std::invalid_argument("p_star: rates must be positive");
  }
  if (std::abs(lambda_plus + lambda_minus - 1.0) > 1e-12) {
    throw std::invalid_argument("p_star: rates must sum to 1");
  }
  return 1.0 / (1.0 + std::sqrt(lambda_plus / lambda_minus));
}

ModelParams::ModelParams(double lambda_plus, double lambda_minus)
    : p_star_(toom::p_star(lambda_plus, lambda_minus)) {
  const double total = lambda_plus + lambda_minus;
  lambda_plus_ = lambda_plus / total;
  lambda_minus_ = 1.0 - lambda_plus_;
}

ModelParams ModelParams::from_lambda_plus(double lambda_plus) {
  return ModelParams(lambda_plus, 1.0 - lambda_plus);
}

// ---------------------------------------------------------------------------
// SpinConfig

SpinConfig::SpinConfig(Window window, int fill) : window_(window) {
  if (window.hi < window.lo) {
    throw std::invalid_argument("SpinConfig: empty window");
  }
  if (fill != 1 && fill != -1) {
    throw std::invalid_argument("SpinConfig: fill must be +1 or -1");
  }
  const std::size_t n = window.size();
  words_.assign((n + kBits - 1) / kBits, fill > 0 ? ~std::uint64_t{0} : 0);
  if (fill > 0) words_.back() &= tail_mask(n);
}

SpinConfig SpinConfig::from_spins(Site lo, std::span<const int> spins) {
  if (spins.empty()) throw std::invalid_argument("SpinConfig: empty window");
  SpinConfig cfg(Window{lo, lo + static_cast<Site>(spins.size()) - 1}, -1);
  for (std::size_t k = 0; k < spins.size(); ++k) {
    cfg.set(lo + static_cast<Site>(k), spins[k]);
  }
  return cfg;
}

SpinConfig SpinConfig::from_string(Site lo, std::string_view text) {
  std::vector<int> spins;
  spins.reserve(text.size());
  for (char c : text) {
    if (c == '+') {
      spins.push_back(1);
    } else if (c == '-') {
      spins.push_back(-1);
    } else {
      throw std::invalid_argument("SpinConfig: expected '+' or '-'");
    }
  }
  return from_spins(lo, spins);
}

std::size_t SpinConfig::offset(Site x) const {
  if (!window_.contains(x)) {
    throw std::out_of_range("site " + std::to_string(x) + " outside window [" +
                            std::to_string(window_.lo) + ", " +
                            std::to_string(window_.hi) + "]");
  }
  return static_cast<std::size_t>(x - window_.lo);
}

bool SpinConfig::is_plus(Site x) const {
  const std::size_t k = offset(x);
  return (words_[k / kBits] >> (k % kBits)) & 1u;
}

int SpinConfig::spin(Site x) const { return is_plus(x) ? 1 : -1; }

void SpinConfig::set(Site x, int s) {
  if (s != 1 && s != -1) throw std::invalid_argument("spin must be +1 or -1");
  const std::size_t k = offset(x);
  const std::uint64_t bit = std::uint64_t{1} << (k % kBits);
  if (s > 0) {
    words_[k / kBits] |= bit;
  } else {
    words_[k / kBits] &= ~bit;
  }
}

void SpinConfig::flip(Site x) {
  const std::size_t k = offset(x);
  words_[k / kBits] ^= std::uint64_t{1} << (k % kBits);
}

void SpinConfig::swap_spins(Site x, Site z) {
  const int sx = spin(x);
  const int sz = spin(z);
  if (sx != sz) {
    flip(x);
    flip(z);
  }
}

long long SpinConfig::magnetization() const {
  long long plus = 0;
  for (auto w : words_) plus += std::popcount(w);
  return 2 * plus - static_cast<long long>(size());
}

std::string SpinConfig::to_string() const {
  std::string out;
  out.reserve(size());
  for (Site x = lo(); x <= hi(); ++x) out.push_back(is_plus(x) ? '+' : '-');
  return out;
}

// ---------------------------------------------------------------------------
// Word-level scans

std::optional<Site> first_opposite_right(const SpinConfig& cfg, Site x) {
  const auto words = cfg.words();
  const auto k = static_cast<std::size_t>(x - cfg.lo());
  if (!cfg.contains(x)) throw std::out_of_range("first_opposite_right: site outside window");
  const std::uint64_t invert = cfg.is_plus(x) ? ~std::uint64_t{0} : 0;
  const std::size_t n = cfg.size();
  std::size_t w = k / kBits;
  const std::size_t bit = k % kBits;
  // Bits strictly above `bit` in the first word.
  std::uint64_t diff = (words[w] ^ invert);
  diff = bit == kBits - 1 ? 0 : diff & (~std::uint64_t{0} << (bit + 1));
  const std::size_t last = words.size() - 1;
  for (;;) {
    if (w == last) diff &= tail_mask(n);
    if (diff != 0) {
      const std::size_t pos = w * kBits + static_cast<std::size_t>(std::countr_zero(diff));
      return cfg.lo() + static_cast<Site>(pos);
    }
    if (w == last) return std::nullopt;
    ++w;
    diff = words[w] ^ invert;
  }
}

std::optional<Site> first_opposite_left(const SpinConfig& cfg, Site x) {
  const auto words = cfg.words();
  if (!cfg.contains(x)) throw std::out_of_range("first_opposite_left: site outside window");
  const auto k = static_cast<std::size_t>(x - cfg.lo());
  const std::uint64_t invert = cfg.is_plus(x) ? ~std::uint64_t{0} : 0;
  std::size_t w = k / kBits;
  const std::size_t bit = k % kBits;
  std::uint64_t diff = words[w] ^ invert;
  diff = bit == 0 ? 0 : diff & ((std::uint64_t{1} << bit) - 1);
  for (;;) {
    if (diff != 0) {
      const std::size_t pos =
          w * kBits + (kBits - 1 - static_cast<std::size_t>(std::countl_zero(diff)));
      return cfg.lo() + static_cast<Site>(pos);
    }
    if (w == 0) return std::nullopt;
    --w;
    diff = words[w] ^ invert;
  }
}

BlockLength block_left_len(const SpinConfig& cfg, Site x) {
  const Site start = x - 1;
  if (!cfg.contains(start)) throw std::out_of_range("block_left_len: x-1 outside window");
  if (auto z = first_opposite_left(cfg, start)) return {start - *z, false};
  return {start - cfg.lo() + 1, true};
}

BlockLength block_right_len(const SpinConfig& cfg, Site x) {
  const Site start = x + 1;
  if (!cfg.contains(start)) throw std::out_of_range("block_right_len: x+1 outside window");
  if (auto z = first_opposite_right(cfg, start)) return {*z - start, false};
  return {cfg.hi() - start + 1, true};
}

BlockStats block_stats(const SpinConfig& cfg, Site x) {
  const auto l = block_left_len(cfg, x);
  const auto r = block_right_len(cfg, x);
  return {l.length, r.length, l.clipped, r.clipped};
}

// ---------------------------------------------------------------------------
// Sampling

double SiteUniforms::operator()(Site x) const {
  const auto block = keyed_block(seed_, tag_, x, 0);
  return to_unit_closed_open(block[0], block[1]);
}

SpinConfig sample_bernoulli(double p, Window window, const SiteUniforms& rng) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("sample_bernoulli: p must lie in (0,1)");
  }
  SpinConfig cfg(window, -1);
  for (Site x = window.lo; x <= window.hi; ++x) {
    if (rng(x) < p) cfg.set(x, 1);
  }
  return cfg;
}

std::vector<SpinConfig> sample_monotone_family(std::span<const double> ps,
                                               Window window,
                                               const SiteUniforms& rng) {
  for (double p : ps) {
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("sample_monotone_family: densities must lie in (0,1)");
    }
  }
  if (!std::is_sorted(ps.begin(), ps.end())) {
    throw std::invalid_argument("sample_monotone_family: densities must be sorted");
  }
  std::vector<SpinConfig> family(ps.size(), SpinConfig(window, -1));
  for (Site x = window.lo; x <= window.hi; ++x) {
    const double v = rng(x);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (v < ps[i]) family[i].set(x, 1);
    }
  }
  return family;
}

}  // namespace toom
