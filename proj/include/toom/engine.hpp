#ifndef TOOM_ENGINE_HPP
#define TOOM_ENGINE_HPP

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toom/core.hpp"
#include "toom/randomness.hpp"

namespace toom {

/// Sites strictly left of `frozen_left_at` ignore their clocks. The right edge
/// of the window always uses the flip rule (no partner inside the window).
struct BoundaryPolicy {
  Site frozen_left_at = std::numeric_limits<Site>::min();

  [[nodiscard]] bool frozen(Site x) const { return x < frozen_left_at; }
  static BoundaryPolicy none() { return {}; }
  static BoundaryPolicy cutoff(Site first_active) { return {first_active}; }
};

struct EventOutcome {
  enum class Kind : std::uint8_t { NoOp, Exchange, Flip };

  Kind kind = Kind::NoOp;
  Site site = 0;
  Site partner = 0;  ///< valid for Exchange
  int sign = 0;      ///< spin at `site` before the event
  double time = 0.0;

  [[nodiscard]] bool acted() const { return kind != Kind::NoOp; }
};

/// Applies one clock ring to `cfg` in place.
EventOutcome step(SpinConfig& cfg, const Event& event, const BoundaryPolicy& policy,
                  double lambda_plus);

/// Push-based trajectory observer.
class Observer {
 public:
  virtual ~Observer() = default;
  virtual void on_outcome(const EventOutcome& outcome, const SpinConfig& after) = 0;
};

/// Applies every event with time < horizon, in order, notifying observers.
/// Returns the number of events consumed.
std::uint64_t run(SpinConfig& cfg, EventStream& stream, const BoundaryPolicy& policy,
                  double lambda_plus, double horizon,
                  std::span<Observer* const> observers = {});

/// One entry of a crossing log.
struct Crossing {
  enum class Kind : std::uint8_t { Move, Annihilate };
  double time = 0.0;
  int sign = 0;
  Kind kind = Kind::Move;
};

/// Particle current across the bond (x-1, x): counts exchanges (y, z) with
/// y < x <= z, split by the sign of the particle that moved from y. A flip at
/// y < x is the restricted form of a jump past the right edge and counts too.
class CrossingCurrent : public Observer {
 public:
  explicit CrossingCurrent(Site x, bool keep_log = false) : x_(x), keep_log_(keep_log) {}

  void on_outcome(const EventOutcome& outcome, const SpinConfig& after) override;

  [[nodiscard]] Site site() const { return x_; }
  [[nodiscard]] std::uint64_t plus() const { return plus_; }
  [[nodiscard]] std::uint64_t minus() const { return minus_; }
  [[nodiscard]] std::uint64_t total() const { return plus_ + minus_; }
  /// J^+ - J^-.
  [[nodiscard]] std::int64_t net() const {
    return static_cast<std::int64_t>(plus_) - static_cast<std::int64_t>(minus_);
  }
  [[nodiscard]] const std::vector<Crossing>& log() const { return log_; }

 private:
  Site x_;
  bool keep_log_;
  std::uint64_t plus_ = 0;
  std::uint64_t minus_ = 0;
  std::vector<Crossing> log_;
};

/// Run-length encoding, e.g. "+3-2+1" for "+++--+".
std::string to_rle(const SpinConfig& cfg);
SpinConfig from_rle(Site lo, std::string_view rle);

struct SnapshotHeader {
  std::uint64_t seed = 0;
  double lambda_plus = 0.5;
  Window window;
};

/// Snapshot file: `#` header lines followed by one "t <rle>" line per snapshot.
class SnapshotWriter {
 public:
  SnapshotWriter(std::ostream& out, const SnapshotHeader& header);
  void write(double t, const SpinConfig& cfg);

 private:
  std::ostream& out_;
};

struct Snapshot {
  double time;
  SpinConfig config;
};

/// Parses the body written by SnapshotWriter; header lines are skipped.
std::vector<Snapshot> read_snapshots(std::istream& in, Site lo);

}  // namespace toom

#endif  // TOOM_ENGINE_HPP
