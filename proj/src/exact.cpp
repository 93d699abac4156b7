#include "toom/exact.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace toom {

std::uint32_t restricted_chain_target(std::uint32_t state, int n_sites, int i) {
  const std::uint32_t low = n_sites == 32 ? ~0u : ((1u << n_sites) - 1u);
  const bool plus = (state >> i) & 1u;
  std::uint32_t diff = (plus ? ~state : state) & low;
  diff &= (i + 1 >= 32) ? 0u : (~0u << (i + 1));
  if (diff == 0) return state ^ (1u << i);
  const int j = std::countr_zero(diff);
  return state ^ (1u << i) ^ (1u << j);
}

GeneratorMatrix::GeneratorMatrix(int n_sites, ModelParams params)
    : n_(n_sites), params_(params) {
  if (n_sites < 1 || n_sites > kMaxSites) {
    throw std::invalid_argument("GeneratorMatrix: N must lie in [1, 20]");
  }
  const std::size_t n_states = states();
  targets_.resize(n_states * static_cast<std::size_t>(n_));
  diagonal_.resize(n_states);
  for (std::uint32_t s = 0; s < n_states; ++s) {
    double exit = 0.0;
    for (int i = 0; i < n_; ++i) {
      targets_[std::size_t{s} * static_cast<std::size_t>(n_) + static_cast<std::size_t>(i)] =
          restricted_chain_target(s, n_, i);
      exit += rate(s, i);
    }
    diagonal_[s] = -exit;
    max_exit_ = std::max(max_exit_, exit);
  }
}

GeneratorMatrix build_generator(int n_sites, const ModelParams& params) {
  return GeneratorMatrix(n_sites, params);
}

double GeneratorMatrix::entry(std::uint32_t from, std::uint32_t to) const {
  if (from == to) return diagonal_[from];
  double v = 0.0;
  for (int i = 0; i < n_; ++i) {
    if (target(from, i) == to) v += rate(from, i);
  }
  return v;
}

void GeneratorMatrix::left_multiply(std::span<const double> v, std::span<double> out) const {
  const auto n_states = static_cast<std::uint32_t>(states());
  for (std::uint32_t s = 0; s < n_states; ++s) out[s] = v[s] * diagonal_[s];
  for (std::uint32_t s = 0; s < n_states; ++s) {
    const double vs = v[s];
    if (vs == 0.0) continue;
    for (int i = 0; i < n_; ++i) out[target(s, i)] += vs * rate(s, i);
  }
}

double GeneratorMatrix::max_row_sum() const {
  double worst = 0.0;
  const auto n_states = static_cast<std::uint32_t>(states());
  for (std::uint32_t s = 0; s < n_states; ++s) {
    double sum = diagonal_[s];
    for (int i = 0; i < n_; ++i) sum += rate(s, i);
    worst = std::max(worst, std::abs(sum));
  }
  return worst;
}

// ---------------------------------------------------------------------------

namespace {

double residual_of(const GeneratorMatrix& q, std::span<const double> pi) {
  std::vector<double> r(pi.size());
  q.left_multiply(pi, r);
  double worst = 0.0;
  for (double v : r) worst = std::max(worst, std::abs(v));
  return worst;
}

std::vector<double> stationary_dense(const GeneratorMatrix& q) {
  const auto n = static_cast<Eigen::Index>(q.states());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    const auto st = static_cast<std::uint32_t>(s);
    a(s, s) += q.diagonal(st);
    for (int i = 0; i < q.sites(); ++i) a(q.target(st, i), s) += q.rate(st, i);
  }
  a.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1.0;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::VectorXd x = lu.solve(b);
  // One step of iterative refinement.
  const Eigen::VectorXd r = b - a * x;
  x += lu.solve(r);
  return {x.data(), x.data() + n};
}

std::vector<double> stationary_power(const GeneratorMatrix& q, double tolerance) {
  const std::size_t n = q.states();
  const double rate = q.uniformization_rate();
  std::vector<double> pi(n, 1.0 / static_cast<double>(n));
  std::vector<double> qv(n);
  const std::size_t max_iter = 2'000'000;
  for (std::size_t it = 0; it < max_iter; ++it) {
    q.left_multiply(pi, qv);
    double worst = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      worst = std::max(worst, std::abs(qv[s]));
      pi[s] += qv[s] / rate;
    }
    if (worst < tolerance * 0.5) break;
  }
  double total = 0.0;
  for (double v : pi) total += v;
  for (double& v : pi) v /= total;
  return pi;
}

}  // namespace

StationaryDistribution stationary(const GeneratorMatrix& q, double tolerance) {
  StationaryDistribution out;
  out.pi = q.sites() <= 12 ? stationary_dense(q) : stationary_power(q, tolerance);
  out.residual = residual_of(q, out.pi);
  if (!(out.residual < tolerance)) {
    std::ostringstream msg;
    msg << "stationary: residual " << out.residual << " above tolerance " << tolerance;
    throw std::runtime_error(msg.str());
  }
  return out;
}

std::vector<double> restrict_marginal(std::span<const double> pi, int n_sites, int m) {
  if (m < 0 || m > n_sites) throw std::invalid_argument("restrict_marginal: need 0 <= M <= N");
  if (pi.size() != (std::size_t{1} << n_sites)) {
    throw std::invalid_argument("restrict_marginal: size mismatch");
  }
  const std::size_t mask = (std::size_t{1} << m) - 1;
  std::vector<double> out(std::size_t{1} << m, 0.0);
  for (std::size_t s = 0; s < pi.size(); ++s) out[s & mask] += pi[s];
  return out;
}

double total_variation(std::span<const double> mu, std::span<const double> nu) {
  if (mu.size() != nu.size()) throw std::invalid_argument("total_variation: size mismatch");
  double sum = 0.0;
  for (std::size_t s = 0; s < mu.size(); ++s) sum += std::abs(mu[s] - nu[s]);
  return 0.5 * sum;
}

std::vector<double> flipped(std::span<const double> pi, int n_sites) {
  const std::size_t mask = (std::size_t{1} << n_sites) - 1;
  std::vector<double> out(pi.size());
  for (std::size_t s = 0; s < pi.size(); ++s) out[s] = pi[~s & mask];
  return out;
}

// ---------------------------------------------------------------------------
// Transient distributions by uniformization. Initial states are processed in
// blocks; a block is stored state-major so that each transition is one
// contiguous axpy over the block's columns.

namespace {

constexpr std::size_t kBlock = 64;
constexpr double kTailMass = 1e-13;

class BlockPropagator {
 public:
  BlockPropagator(const GeneratorMatrix& q, std::size_t width)
      : q_(q), width_(width), rate_(q.uniformization_rate()) {}

  // v <- v exp(dt Q)
  void advance(std::vector<double>& v, double dt) {
    if (dt <= 0.0) return;
    // Keep the Poisson mean small enough that exp(-mean) does not underflow.
    const int pieces = static_cast<int>(std::ceil(rate_ * dt / 400.0));
    for (int k = 0; k < pieces; ++k) advance_once(v, dt / pieces);
  }

 private:
  void apply_kernel(const std::vector<double>& in, std::vector<double>& out) const {
    const auto n_states = static_cast<std::uint32_t>(q_.states());
    for (std::uint32_t s = 0; s < n_states; ++s) {
      const double keep = 1.0 + q_.diagonal(s) / rate_;
      const double* src = &in[s * width_];
      double* dst = &out[s * width_];
      for (std::size_t c = 0; c < width_; ++c) dst[c] = keep * src[c];
    }
    for (std::uint32_t s = 0; s < n_states; ++s) {
      const double* src = &in[s * width_];
      for (int i = 0; i < q_.sites(); ++i) {
        const double w = q_.rate(s, i) / rate_;
        double* dst = &out[q_.target(s, i) * width_];
        for (std::size_t c = 0; c < width_; ++c) dst[c] += w * src[c];
      }
    }
  }

  void advance_once(std::vector<double>& v, double dt) {
    const double mean = rate_ * dt;
    double weight = std::exp(-mean);
    double cumulative = weight;
    acc_.assign(v.size(), 0.0);
    for (std::size_t j = 0; j < v.size(); ++j) acc_[j] = weight * v[j];
    cur_ = v;
    const auto budget = static_cast<std::size_t>(mean + 60.0 * std::sqrt(mean) + 200.0);
    std::size_t k = 0;
    while (1.0 - cumulative > kTailMass) {
      if (++k > budget) throw std::runtime_error("tv_mixing_curve: truncation budget exceeded");
      next_.resize(v.size());
      apply_kernel(cur_, next_);
      cur_.swap(next_);
      weight *= mean / static_cast<double>(k);
      cumulative += weight;
      for (std::size_t j = 0; j < v.size(); ++j) acc_[j] += weight * cur_[j];
    }
    v.swap(acc_);
  }

  const GeneratorMatrix& q_;
  std::size_t width_;
  double rate_;
  std::vector<double> acc_, cur_, next_;
};

}  // namespace

std::vector<double> tv_mixing_curve(const GeneratorMatrix& q, std::span<const double> pi,
                                    std::span<const double> time_grid, double stop_below) {
  if (q.sites() > 12) throw std::invalid_argument("tv_mixing_curve: N must be <= 12");
  if (pi.size() != q.states()) throw std::invalid_argument("tv_mixing_curve: size mismatch");
  for (std::size_t i = 0; i < time_grid.size(); ++i) {
    if (time_grid[i] < 0.0 || (i > 0 && time_grid[i] < time_grid[i - 1])) {
      throw std::invalid_argument("tv_mixing_curve: grid must be ascending and nonnegative");
    }
  }
  const std::size_t n = q.states();
  auto block_tv = [&](const std::vector<double>& v, std::size_t width) {
    double worst = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      double tv = 0.0;
      for (std::size_t s = 0; s < n; ++s) tv += std::abs(v[s * width + c] - pi[s]);
      worst = std::max(worst, 0.5 * tv);
    }
    return worst;
  };
  auto initial_block = [&](std::size_t start, std::size_t width) {
    std::vector<double> v(n * width, 0.0);
    for (std::size_t c = 0; c < width; ++c) v[(start + c) * width + c] = 1.0;
    return v;
  };

  if (stop_below < 0.0) {
    std::vector<double> d(time_grid.size(), 0.0);
    for (std::size_t start = 0; start < n; start += kBlock) {
      const std::size_t width = std::min(kBlock, n - start);
      BlockPropagator prop(q, width);
      auto v = initial_block(start, width);
      double t = 0.0;
      for (std::size_t g = 0; g < time_grid.size(); ++g) {
        prop.advance(v, time_grid[g] - t);
        t = time_grid[g];
        d[g] = std::max(d[g], block_tv(v, width));
      }
    }
    return d;
  }

  // All blocks advance together so the sweep can stop at the first grid point
  // where the worst case drops below the threshold.
  std::vector<std::vector<double>> blocks;
  std::vector<BlockPropagator> props;
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t width = std::min(kBlock, n - start);
    blocks.push_back(initial_block(start, width));
    props.emplace_back(q, width);
  }
  std::vector<double> d;
  double t = 0.0;
  for (const double tg : time_grid) {
    double worst = 0.0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      props[b].advance(blocks[b], tg - t);
      worst = std::max(worst, block_tv(blocks[b], std::min(kBlock, n - b * kBlock)));
    }
    t = tg;
    d.push_back(worst);
    if (worst < stop_below) break;
  }
  return d;
}

double mixing_time_from_curve(std::span<const double> time_grid, std::span<const double> d) {
  for (std::size_t i = 0; i < time_grid.size(); ++i) {
    if (d[i] < 0.5) return time_grid[i];
  }
  return -1.0;
}

double height_variance(std::span<const double> pi, int n_sites, int l) {
  if (l < 0 || l > n_sites) throw std::invalid_argument("height_variance: need 0 <= L <= N");
  const std::uint32_t mask = (l == 32) ? ~0u : ((1u << l) - 1u);
  double m1 = 0.0;
  double m2 = 0.0;
  for (std::size_t s = 0; s < pi.size(); ++s) {
    const int plus = std::popcount(static_cast<std::uint32_t>(s) & mask);
    const double h = 2.0 * plus - l;
    m1 += pi[s] * h;
    m2 += pi[s] * h * h;
  }
  return m2 - m1 * m1;
}

// ---------------------------------------------------------------------------
// Local functions and the formal generator under Ber_p

double LocalFunction::operator()(const SpinConfig& cfg) const {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (cfg.is_plus(support[i])) idx |= std::size_t{1} << i;
  }
  return table[idx];
}

LocalFunction LocalFunction::monomial(std::vector<Site> support) {
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());
  LocalFunction f{std::move(support), {}};
  const std::size_t n = std::size_t{1} << f.support.size();
  f.table.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const int minus = static_cast<int>(f.support.size()) - std::popcount(k);
    f.table[k] = (minus % 2 == 0) ? 1.0 : -1.0;
  }
  return f;
}

double LocalFunction::bernoulli_mean(double p) const {
  double mean = 0.0;
  for (std::size_t k = 0; k < table.size(); ++k) {
    const int plus = std::popcount(k);
    const int minus = static_cast<int>(support.size()) - plus;
    mean += table[k] * std::pow(p, plus) * std::pow(1.0 - p, minus);
  }
  return mean;
}

double LocalFunction::bernoulli_variance(double p) const {
  double m2 = 0.0;
  for (std::size_t k = 0; k < table.size(); ++k) {
    const int plus = std::popcount(k);
    const int minus = static_cast<int>(support.size()) - plus;
    m2 += table[k] * table[k] * std::pow(p, plus) * std::pow(1.0 - p, minus);
  }
  const double mean = bernoulli_mean(p);
  return m2 - mean * mean;
}

double bernoulli_generator_expectation(const LocalFunction& f, double p,
                                       const ModelParams& params) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("generator expectation: p in (0,1)");
  if (f.table.size() != (std::size_t{1} << f.support.size())) {
    throw std::invalid_argument("generator expectation: table size mismatch");
  }
  if (f.support.size() > 12) throw std::invalid_argument("generator expectation: |S| > 12");
  if (f.support.empty()) return 0.0;
  if (!std::is_sorted(f.support.begin(), f.support.end())) {
    throw std::invalid_argument("generator expectation: support must be sorted");
  }
  const Site hull_lo = f.support.front() - 1;
  const Site hull_hi = f.support.back();
  const int width = static_cast<int>(hull_hi - hull_lo + 1);
  if (width > 22) throw std::invalid_argument("generator expectation: hull wider than 22 sites");

  // Support positions inside the hull, as bit offsets.
  std::vector<int> offsets;
  std::uint32_t in_support = 0;
  for (Site x : f.support) {
    offsets.push_back(static_cast<int>(x - hull_lo));
    in_support |= 1u << (x - hull_lo);
  }
  auto eval = [&](std::uint32_t c) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      if ((c >> offsets[i]) & 1u) idx |= std::size_t{1} << i;
    }
    return f.table[idx];
  };
  auto p_of = [&](int sign) { return sign > 0 ? p : 1.0 - p; };

  const std::uint32_t full = (1u << width) - 1u;
  double total = 0.0;
  for (std::uint32_t c = 0; c <= full; ++c) {
    const int plus = std::popcount(c);
    const double weight = std::pow(p, plus) * std::pow(1.0 - p, width - plus);
    const double fc = eval(c);
    double lf = 0.0;
    for (int x = 0; x < width; ++x) {
      const int sign = ((c >> x) & 1u) ? 1 : -1;
      const std::uint32_t target = restricted_chain_target(c, width, x);
      const bool partner_inside = (std::popcount(target ^ c) == 2);
      const bool touches = ((in_support >> x) & 1u) ||
                           (partner_inside && ((target ^ c) & ~(1u << x) & in_support));
      if (!touches) continue;
      // A partner beyond the hull is outside the support, so flipping x alone
      // gives the same value of f.
      lf += params.lambda(sign) * (eval(target) - fc);
    }
    // Clocks left of the hull: the run [x, hull_lo] of sign eta must reach the
    // first opposite spin y inside the hull.
    {
      const int sign = (c & 1u) ? 1 : -1;
      const std::uint32_t target = restricted_chain_target(c, width, 0);
      if (std::popcount(target ^ c) == 2) {
        const std::uint32_t y_bit = (target ^ c) & ~1u;
        if (y_bit & in_support) {
          const double pe = p_of(sign);
          lf += params.lambda(sign) * (pe / (1.0 - pe)) * (eval(c ^ y_bit) - fc);
        }
      }
    }
    total += weight * lf;
  }
  return total;
}

void write_stationary_csv(std::ostream& out, std::span<const double> pi, int n_sites) {
  out.precision(17);
  out << "state,pi,spins\n";
  for (std::size_t s = 0; s < pi.size(); ++s) {
    out << s << ',' << pi[s] << ',';
    for (int i = 0; i < n_sites; ++i) out << (((s >> i) & 1u) ? '+' : '-');
    out << '\n';
  }
}

void write_tv_curve_csv(std::ostream& out, std::span<const double> grid,
                        std::span<const double> d) {
  out.precision(17);
  out << "t,d\n";
  for (std::size_t i = 0; i < grid.size(); ++i) out << grid[i] << ',' << d[i] << '\n';
}

}  // namespace toom
