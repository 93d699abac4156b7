#ifndef TOOM_COUPLING_HPP
#define TOOM_COUPLING_HPP

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "toom/core.hpp"
#include "toom/engine.hpp"
#include "toom/randomness.hpp"

namespace toom {

/// Signature of a site for an ordered pair (first, second):
/// +1 if (first, second) = (+, -), -1 if (-, +), 0 if they agree.
inline int signature(int first, int second) {
  return first == second ? 0 : first;
}

/// Discrepancy sets D, D+ and D- of an ordered pair of configurations over a
/// common window, stored as two bitsets.
class DiscrepancyView {
 public:
  DiscrepancyView(const SpinConfig& first, const SpinConfig& second);

  [[nodiscard]] const Window& window() const { return window_; }
  /// +1, -1, or 0 when x is not a discrepancy.
  [[nodiscard]] int signature_at(Site x) const;
  [[nodiscard]] bool contains(Site x) const { return signature_at(x) != 0; }

  /// Re-reads site x from the two configurations.
  void refresh(Site x, const SpinConfig& first, const SpinConfig& second);

  [[nodiscard]] std::size_t count() const;
  [[nodiscard]] std::size_t count(int sign) const;
  /// Sorted D (sign == 0) or D^sign.
  [[nodiscard]] std::vector<Site> sites(int sign = 0) const;

  [[nodiscard]] std::optional<Site> leftmost() const;
  [[nodiscard]] std::optional<Site> rightmost() const;
  /// d(x): next discrepancy strictly right of x. With a nonzero sign, the next
  /// one of that signature (d_boundary uses the opposite signature of x).
  [[nodiscard]] std::optional<Site> next_after(Site x, int sign = 0) const;

  /// Interface discrepancies: x in D whose next discrepancy to the right
  /// exists and has the opposite signature. Cached until the next refresh.
  [[nodiscard]] const std::vector<Site>& interface_sites() const;

  /// True iff the stored sets equal those recomputed from raw spins.
  [[nodiscard]] bool matches(const SpinConfig& first, const SpinConfig& second) const;

 private:
  Window window_;
  std::vector<std::uint64_t> plus_;
  std::vector<std::uint64_t> minus_;
  mutable std::vector<Site> interface_;
  mutable bool interface_valid_ = false;
};

/// min D, or nullopt standing for +infinity when D is empty.
inline std::optional<Site> leftmost_discrepancy(const DiscrepancyView& view) {
  return view.leftmost();
}

/// Pair spins before and after one event at a site touched by it.
struct TouchedSite {
  Site site = 0;
  int first_before = 0;
  int second_before = 0;
  int first_after = 0;
  int second_after = 0;
};

/// Sentinel destination for a discrepancy pushed past the right window edge.
inline constexpr Site kBeyondWindow = std::numeric_limits<Site>::max();

/// Fate of one pre-event discrepancy.
struct Transition {
  enum class Kind : std::uint8_t { Move, Annihilate, Exit };
  Kind kind = Kind::Move;
  Site from = 0;
  Site to = 0;    ///< destination; for Annihilate the site of the partner; kBeyondWindow for Exit
  int sign = 0;   ///< signature of the discrepancy that moved
  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Matches discrepancies that disappeared at touched sites to the ones that
/// appeared, under the constraints: moves go strictly right, moves keep their
/// signature, an annihilation consumes one + and one -, and no discrepancy is
/// created. Among valid matchings the one with fewest exits is returned.
/// Throws std::logic_error when no valid matching exists.
std::vector<Transition> classify_transition(std::span<const TouchedSite> touched);

/// Crossing counters H^+_x, H^-_x and annihilation counts A_x for a tracked
/// range of sites, plus optional per-site crossing logs.
///
/// H^eta_x counts signature-eta discrepancies that jumped across the bond
/// (x-1, x), i.e. from (-inf, x) to [x, inf), including jumps that end in an
/// annihilation. With that convention the counters satisfy, for every tracked x,
///   H^eta_x - H^eta_{x+1} = A_x + 1{x in D^eta(t)} - 1{x in D^eta(0)}.
class FluxLedger {
 public:
  FluxLedger(Window tracked, const DiscrepancyView& initial,
             std::vector<Site> log_sites = {});

  void record(const Transition& transition, double time);

  [[nodiscard]] const Window& tracked() const { return tracked_; }
  /// Valid for x in [tracked.lo, tracked.hi + 1].
  [[nodiscard]] std::uint64_t crossings(int sign, Site x) const;
  [[nodiscard]] std::int64_t net_crossings(Site x) const;  // K_x
  [[nodiscard]] std::uint64_t annihilations(Site x) const;
  [[nodiscard]] bool initially_in(int sign, Site x) const;

  [[nodiscard]] bool identity_holds(Site x, int sign, const DiscrepancyView& now) const;
  /// Number of (x, sign) pairs in the tracked range where the identity fails.
  [[nodiscard]] std::size_t identity_violations(const DiscrepancyView& now) const;

  [[nodiscard]] bool has_log(Site x) const { return logs_.count(x) != 0; }
  [[nodiscard]] const std::vector<Crossing>& log(Site x) const;

 private:
  [[nodiscard]] std::size_t h_index(Site x) const;

  Window tracked_;
  std::vector<std::uint64_t> h_plus_;
  std::vector<std::uint64_t> h_minus_;
  std::vector<std::uint64_t> annihilations_;
  std::vector<std::int8_t> initial_;
  std::map<Site, std::vector<Crossing>> logs_;
};

/// Replicas evolved by one shared event sequence under one boundary policy.
/// Optionally tracks the discrepancies and fluxes of a designated pair.
class ReplicaSet {
 public:
  ReplicaSet(std::vector<SpinConfig> replicas, BoundaryPolicy policy, ModelParams params);

  /// Starts discrepancy and flux bookkeeping for (replica(first), replica(second)).
  void track_pair(std::size_t first, std::size_t second, Window ledger_range,
                  std::vector<Site> log_sites = {});

  struct StepResult {
    std::span<const EventOutcome> outcomes;   ///< one per replica
    std::span<const Transition> transitions;  ///< tracked pair only
  };

  /// Applies one event to every replica with the same (site, uniform).
  StepResult coupled_step(const Event& event);
  /// Steps until the stream's next event is at or beyond the horizon.
  std::uint64_t run(EventStream& stream, double horizon);

  [[nodiscard]] std::size_t size() const { return replicas_.size(); }
  [[nodiscard]] const SpinConfig& replica(std::size_t i) const { return replicas_.at(i); }
  [[nodiscard]] const BoundaryPolicy& policy() const { return policy_; }
  [[nodiscard]] const ModelParams& params() const { return params_; }
  [[nodiscard]] bool all_equal() const;

  [[nodiscard]] const DiscrepancyView* view() const { return view_ ? &*view_ : nullptr; }
  [[nodiscard]] const FluxLedger* ledger() const { return ledger_ ? &*ledger_ : nullptr; }

 private:
  std::vector<SpinConfig> replicas_;
  BoundaryPolicy policy_;
  ModelParams params_;
  std::vector<EventOutcome> outcomes_;
  std::vector<Transition> transitions_;
  std::size_t first_ = 0;
  std::size_t second_ = 0;
  std::optional<DiscrepancyView> view_;
  std::optional<FluxLedger> ledger_;
};

/// Counts of maximal equal-signature runs in a crossing log, indexed by run
/// length 1..k_max (index 0 unused). A run that starts the log counts; so does
/// the run in progress at the end of the log. Runs longer than k_max are
/// tallied in `overflow_*`.
struct StretchHistogram {
  std::vector<std::uint64_t> plus;
  std::vector<std::uint64_t> minus;
  std::uint64_t overflow_plus = 0;
  std::uint64_t overflow_minus = 0;
};

StretchHistogram stretch_histogram(std::span<const Crossing> log, std::size_t k_max);

/// Number of crossings with time in (lo, hi], i.e. H(hi) - H(lo).
std::uint64_t flux_variation(std::span<const Crossing> log, double lo, double hi);

/// CSV: t,site,signature,kind
void write_crossing_csv(std::ostream& out, Site x, std::span<const Crossing> log);

}  // namespace toom

#endif  // TOOM_COUPLING_HPP
