#ifndef TOOM_EXACT_HPP
#define TOOM_EXACT_HPP

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "toom/core.hpp"

namespace toom {

/// Generator of the restricted chain on {-1,+1}^N (sites 1..N). State index
/// bit i holds the spin at site i+1 (set == +1), i.e. little-endian packing.
/// Each state has exactly N outgoing transitions, one per site clock.
class GeneratorMatrix {
 public:
  static constexpr int kMaxSites = 20;

  GeneratorMatrix(int n_sites, ModelParams params);

  [[nodiscard]] int sites() const { return n_; }
  [[nodiscard]] std::size_t states() const { return std::size_t{1} << n_; }
  [[nodiscard]] const ModelParams& params() const { return params_; }

  /// Target of the clock at site index i (0-based) from `state`.
  [[nodiscard]] std::uint32_t target(std::uint32_t state, int i) const {
    return targets_[std::size_t{state} * static_cast<std::size_t>(n_) + static_cast<std::size_t>(i)];
  }
  /// Rate of that transition: lambda of the spin at site i+1.
  [[nodiscard]] double rate(std::uint32_t state, int i) const {
    return ((state >> i) & 1u) ? params_.lambda_plus() : params_.lambda_minus();
  }
  [[nodiscard]] double diagonal(std::uint32_t state) const { return diagonal_[state]; }
  /// Q(from, to), zero when not adjacent.
  [[nodiscard]] double entry(std::uint32_t from, std::uint32_t to) const;
  /// max_s |Q(s,s)|.
  [[nodiscard]] double uniformization_rate() const { return max_exit_; }

  /// out = v Q.
  void left_multiply(std::span<const double> v, std::span<double> out) const;
  /// max_s |sum_t Q(s,t)|.
  [[nodiscard]] double max_row_sum() const;

 private:
  int n_;
  ModelParams params_;
  std::vector<std::uint32_t> targets_;
  std::vector<double> diagonal_;
  double max_exit_ = 0.0;
};

/// Target state of one clock ring at site index i in the restricted chain.
std::uint32_t restricted_chain_target(std::uint32_t state, int n_sites, int i);

GeneratorMatrix build_generator(int n_sites, const ModelParams& params);

struct StationaryDistribution {
  std::vector<double> pi;
  double residual = 0.0;  ///< ||pi Q||_inf
};

/// Solves pi Q = 0, sum pi = 1. Dense LU for N <= 12, power iteration on the
/// uniformized kernel otherwise. Throws std::runtime_error (with the residual)
/// if the requested tolerance is not met.
StationaryDistribution stationary(const GeneratorMatrix& q, double tolerance = 1e-12);

/// Marginal on the first m sites.
std::vector<double> restrict_marginal(std::span<const double> pi, int n_sites, int m);

/// 1/2 sum |mu - nu|.
double total_variation(std::span<const double> mu, std::span<const double> nu);

/// pi composed with the global spin flip.
std::vector<double> flipped(std::span<const double> pi, int n_sites);

/// d(t) = max over point-mass initial states of ||mu_t - pi||_TV on an
/// ascending time grid, by uniformization with per-step tail mass below 1e-13.
/// With stop_below >= 0 the curve ends at the first grid point where d drops
/// below it (d is nonincreasing), so the result may be shorter than the grid.
std::vector<double> tv_mixing_curve(const GeneratorMatrix& q, std::span<const double> pi,
                                    std::span<const double> time_grid,
                                    double stop_below = -1.0);

/// First grid time with d(t) < 1/2, or a negative value if none.
double mixing_time_from_curve(std::span<const double> time_grid, std::span<const double> d);

/// Var_pi(sum_{x=1}^{L} sigma(x)).
double height_variance(std::span<const double> pi, int n_sites, int l);

/// A function of the spins on a finite support. table[k] is the value on the
/// configuration whose bit i is set iff the spin at support[i] is +1.
struct LocalFunction {
  std::vector<Site> support;
  std::vector<double> table;

  [[nodiscard]] double operator()(const SpinConfig& cfg) const;
  /// prod_{x in support} sigma(x); the empty product is the constant 1.
  static LocalFunction monomial(std::vector<Site> support);
  /// Ber_p mean and variance, computed exactly.
  [[nodiscard]] double bernoulli_mean(double p) const;
  [[nodiscard]] double bernoulli_variance(double p) const;
};

/// Ber_p(L f) for the full-line formal generator, computed in closed form:
/// exact enumeration on [min S - 1, max S] plus geometric sums for runs that
/// extend further left. Supports |S| <= 12 and hull width <= 22.
double bernoulli_generator_expectation(const LocalFunction& f, double p,
                                       const ModelParams& params);

/// CSV: state,pi,spins
void write_stationary_csv(std::ostream& out, std::span<const double> pi, int n_sites);
/// CSV: t,d
void write_tv_curve_csv(std::ostream& out, std::span<const double> grid,
                        std::span<const double> d);

}  // namespace toom

#endif  // TOOM_EXACT_HPP
