#ifndef TOOM_RANDOMNESS_HPP
#define TOOM_RANDOMNESS_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "toom/core.hpp"

namespace toom {

/// One ring of a site clock together with its decision uniform.
struct Event {
  double time = 0.0;
  Site site = 0;
  double uniform = 0.0;     ///< U_{x,j} in [0,1)
  std::uint64_t index = 0;  ///< j = N_x(time), 1-based
};

/// The j-th arrival at site x: its absolute time and decision uniform. Pure
/// function of (seed, x, j); the timing increment and the decision uniform
/// come from disjoint halves of one Philox block.
struct Arrival {
  double time;
  double uniform;
};

/// Rate-one Poisson clocks on every site, each with an attached sequence of
/// decision uniforms, addressed by (seed, site, arrival index).
class ArrivalSource {
 public:
  explicit ArrivalSource(std::uint64_t seed) : seed_(seed) {}

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  /// Exp(1) gap between arrival j-1 and arrival j (j >= 1) at site x.
  [[nodiscard]] double gap(Site x, std::uint64_t j) const;
  /// Decision uniform U_{x,j}.
  [[nodiscard]] double uniform(Site x, std::uint64_t j) const;
  /// Both of the above from a single block.
  [[nodiscard]] std::pair<double, double> draw(Site x, std::uint64_t j) const;

  /// Arrival times at x in (0, t].
  [[nodiscard]] std::vector<Arrival> arrivals_until(Site x, double t) const;
  /// First arrival at x strictly after time t.
  [[nodiscard]] Arrival first_arrival_after(Site x, double t) const;

 private:
  std::uint64_t seed_;
};

/// Globally time-ordered merge of the per-site clocks over a window.
/// Ties (equal floating-point times) go to the lower site.
///
/// Arrivals are pulled a time slab at a time and bucket-sorted, which keeps the
/// per-event cost flat in the window size.
class EventStream {
 public:
  EventStream(std::uint64_t seed, Window window);

  [[nodiscard]] const Window& window() const { return window_; }
  [[nodiscard]] std::uint64_t seed() const { return source_.seed(); }
  [[nodiscard]] const ArrivalSource& source() const { return source_; }
  /// Time of the next pending event.
  [[nodiscard]] double peek_time();
  /// Removes and returns the earliest pending arrival.
  Event next_event();
  /// Number of arrivals delivered so far at site x.
  [[nodiscard]] std::uint64_t delivered(Site x) const;
  [[nodiscard]] std::uint64_t total_delivered() const { return total_; }

 private:
  struct Pending {
    double time;
    double uniform;
    std::uint64_t index;
  };
  struct Slot {
    double time;
    double uniform;
    std::uint32_t offset;
    std::uint32_t index;
  };

  void fill_slab();

  ArrivalSource source_;
  Window window_;
  std::vector<Pending> pending_;  // next undrawn-into-slab arrival, per site offset
  std::vector<std::uint64_t> delivered_;
  std::vector<Slot> slab_;
  std::vector<Slot> scratch_;
  std::vector<std::uint32_t> bucket_start_;
  std::size_t cursor_ = 0;
  double slab_width_ = 1.0;
  std::uint64_t slab_count_ = 0;
  std::uint64_t total_ = 0;
};

/// Whether a particle of the given sign exchanges on this uniform:
/// + exchanges iff U < lambda_plus, - exchanges iff U > lambda_plus.
inline bool exchange_decision(double uniform, int sign, double lambda_plus) {
  return sign > 0 ? uniform < lambda_plus : uniform > lambda_plus;
}

struct ThinnedCounts {
  std::uint64_t plus = 0;
  std::uint64_t minus = 0;
  [[nodiscard]] std::uint64_t total() const { return plus + minus; }
};

/// Splits N_x(t) by U <= lambda_plus (plus) and U > lambda_plus (minus).
ThinnedCounts thinned_counts(const ArrivalSource& source, Site x, double t,
                             double lambda_plus);

/// Accepts decimal or 0x-prefixed hexadecimal.
std::uint64_t parse_seed(const std::string& text);
std::string format_seed(std::uint64_t seed);

}  // namespace toom

#endif  // TOOM_RANDOMNESS_HPP
