#include "toom/coupling.hpp"

#include <algorithm>
#include <bit>
#include <ostream>
#include <stdexcept>

namespace toom {

namespace {

constexpr std::size_t kBits = 64;

// Offset of the first set bit strictly after `start` (or at `start` when
// inclusive), or npos.
std::size_t scan_forward(std::span<const std::uint64_t> words, std::size_t start,
                         bool inclusive) {
  const std::size_t first = inclusive ? start : start + 1;
  std::size_t w = first / kBits;
  if (w >= words.size()) return std::string::npos;
  std::uint64_t bits = words[w] & (~std::uint64_t{0} << (first % kBits));
  for (;;) {
    if (bits != 0) return w * kBits + static_cast<std::size_t>(std::countr_zero(bits));
    if (++w >= words.size()) return std::string::npos;
    bits = words[w];
  }
}

std::size_t scan_backward(std::span<const std::uint64_t> words) {
  for (std::size_t w = words.size(); w-- > 0;) {
    if (words[w] != 0) {
      return w * kBits + (kBits - 1 - static_cast<std::size_t>(std::countl_zero(words[w])));
    }
  }
  return std::string::npos;
}

}  // namespace

// ---------------------------------------------------------------------------
// DiscrepancyView

DiscrepancyView::DiscrepancyView(const SpinConfig& first, const SpinConfig& second)
    : window_(first.window()) {
  if (first.window() != second.window()) {
    throw std::invalid_argument("DiscrepancyView: windows differ");
  }
  const auto a = first.words();
  const auto b = second.words();
  plus_.resize(a.size());
  minus_.resize(a.size());
  for (std::size_t w = 0; w < a.size(); ++w) {
    plus_[w] = a[w] & ~b[w];
    minus_[w] = ~a[w] & b[w];
  }
}

int DiscrepancyView::signature_at(Site x) const {
  if (!window_.contains(x)) throw std::out_of_range("DiscrepancyView: site outside window");
  const auto k = static_cast<std::size_t>(x - window_.lo);
  const std::uint64_t bit = std::uint64_t{1} << (k % kBits);
  if (plus_[k / kBits] & bit) return 1;
  if (minus_[k / kBits] & bit) return -1;
  return 0;
}

void DiscrepancyView::refresh(Site x, const SpinConfig& first, const SpinConfig& second) {
  const auto k = static_cast<std::size_t>(x - window_.lo);
  const std::uint64_t bit = std::uint64_t{1} << (k % kBits);
  const int sig = signature(first.spin(x), second.spin(x));
  plus_[k / kBits] &= ~bit;
  minus_[k / kBits] &= ~bit;
  if (sig > 0) plus_[k / kBits] |= bit;
  if (sig < 0) minus_[k / kBits] |= bit;
  interface_valid_ = false;
}

std::size_t DiscrepancyView::count(int sign) const {
  std::size_t n = 0;
  for (std::size_t w = 0; w < plus_.size(); ++w) {
    if (sign >= 0) n += static_cast<std::size_t>(std::popcount(plus_[w]));
    if (sign <= 0) n += static_cast<std::size_t>(std::popcount(minus_[w]));
  }
  return n;
}

std::size_t DiscrepancyView::count() const { return count(0); }

std::vector<Site> DiscrepancyView::sites(int sign) const {
  std::vector<Site> out;
  for (std::size_t w = 0; w < plus_.size(); ++w) {
    std::uint64_t bits = (sign >= 0 ? plus_[w] : 0) | (sign <= 0 ? minus_[w] : 0);
    while (bits != 0) {
      const auto b = static_cast<std::size_t>(std::countr_zero(bits));
      out.push_back(window_.lo + static_cast<Site>(w * kBits + b));
      bits &= bits - 1;
    }
  }
  return out;
}

std::optional<Site> DiscrepancyView::leftmost() const {
  for (std::size_t w = 0; w < plus_.size(); ++w) {
    const std::uint64_t bits = plus_[w] | minus_[w];
    if (bits != 0) {
      return window_.lo +
             static_cast<Site>(w * kBits + static_cast<std::size_t>(std::countr_zero(bits)));
    }
  }
  return std::nullopt;
}

std::optional<Site> DiscrepancyView::rightmost() const {
  std::vector<std::uint64_t> both(plus_.size());
  for (std::size_t w = 0; w < plus_.size(); ++w) both[w] = plus_[w] | minus_[w];
  const std::size_t pos = scan_backward(both);
  if (pos == std::string::npos) return std::nullopt;
  return window_.lo + static_cast<Site>(pos);
}

std::optional<Site> DiscrepancyView::next_after(Site x, int sign) const {
  if (x < window_.lo) {
    // Everything in the window lies to the right of x.
    x = window_.lo - 1;
  }
  if (x >= window_.hi) return std::nullopt;
  const auto k = static_cast<std::size_t>(x - window_.lo + 1);
  std::size_t best = std::string::npos;
  if (sign >= 0) best = std::min(best, scan_forward(plus_, k, true));
  if (sign <= 0) best = std::min(best, scan_forward(minus_, k, true));
  if (best == std::string::npos) return std::nullopt;
  return window_.lo + static_cast<Site>(best);
}

const std::vector<Site>& DiscrepancyView::interface_sites() const {
  if (!interface_valid_) {
    interface_.clear();
    const auto d = sites();
    for (std::size_t i = 0; i + 1 < d.size(); ++i) {
      if (signature_at(d[i]) != signature_at(d[i + 1])) interface_.push_back(d[i]);
    }
    interface_valid_ = true;
  }
  return interface_;
}

bool DiscrepancyView::matches(const SpinConfig& first, const SpinConfig& second) const {
  if (first.window() != window_ || second.window() != window_) return false;
  const auto a = first.words();
  const auto b = second.words();
  for (std::size_t w = 0; w < a.size(); ++w) {
    if (plus_[w] != (a[w] & ~b[w]) || minus_[w] != (~a[w] & b[w])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// classify_transition

namespace {

struct Item {
  Site site;
  int sign;
};

struct Search {
  std::span<const Item> pre;
  std::span<const Item> post;
  std::vector<int> post_taken;
  std::vector<int> pre_target;
  std::vector<Transition> current;
  std::vector<Transition> best;
  int best_exits = -1;

  void visit(std::size_t i, int exits) {
    if (best_exits >= 0 && exits >= best_exits) return;
    if (i == pre.size()) {
      if (std::find(post_taken.begin(), post_taken.end(), 0) != post_taken.end()) return;
      best = current;
      best_exits = exits;
      return;
    }
    if (pre_target[i]) {
      visit(i + 1, exits);
      return;
    }
    const Item& mover = pre[i];
    for (std::size_t q = 0; q < post.size(); ++q) {
      if (post_taken[q] || post[q].site <= mover.site || post[q].sign != mover.sign) continue;
      post_taken[q] = 1;
      current.push_back({Transition::Kind::Move, mover.site, post[q].site, mover.sign});
      visit(i + 1, exits);
      current.pop_back();
      post_taken[q] = 0;
    }
    for (std::size_t t = i + 1; t < pre.size(); ++t) {
      if (pre_target[t] || pre[t].site <= mover.site || pre[t].sign != -mover.sign) continue;
      pre_target[t] = 1;
      current.push_back({Transition::Kind::Annihilate, mover.site, pre[t].site, mover.sign});
      visit(i + 1, exits);
      current.pop_back();
      pre_target[t] = 0;
    }
    current.push_back({Transition::Kind::Exit, mover.site, kBeyondWindow, mover.sign});
    visit(i + 1, exits + 1);
    current.pop_back();
  }
};

}  // namespace

std::vector<Transition> classify_transition(std::span<const TouchedSite> touched) {
  std::vector<Item> pre;
  std::vector<Item> post;
  for (const auto& t : touched) {
    const int before = signature(t.first_before, t.second_before);
    const int after = signature(t.first_after, t.second_after);
    if (before == after) continue;
    if (before != 0) pre.push_back({t.site, before});
    if (after != 0) post.push_back({t.site, after});
  }
  if (pre.empty() && post.empty()) return {};
  auto by_site = [](const Item& a, const Item& b) { return a.site < b.site; };
  std::sort(pre.begin(), pre.end(), by_site);
  std::sort(post.begin(), post.end(), by_site);

  Search search{pre, post, std::vector<int>(post.size(), 0),
                std::vector<int>(pre.size(), 0), {}, {}, -1};
  search.visit(0, 0);
  if (search.best_exits < 0) {
    throw std::logic_error("classify_transition: no admissible discrepancy matching");
  }
  return search.best;
}

// ---------------------------------------------------------------------------
// FluxLedger

FluxLedger::FluxLedger(Window tracked, const DiscrepancyView& initial,
                       std::vector<Site> log_sites)
    : tracked_(tracked) {
  if (tracked.hi < tracked.lo) throw std::invalid_argument("FluxLedger: empty range");
  if (!initial.window().contains(tracked.lo) || !initial.window().contains(tracked.hi)) {
    throw std::invalid_argument("FluxLedger: tracked range outside window");
  }
  h_plus_.assign(tracked.size() + 1, 0);
  h_minus_.assign(tracked.size() + 1, 0);
  annihilations_.assign(tracked.size(), 0);
  initial_.resize(tracked.size());
  for (Site x = tracked.lo; x <= tracked.hi; ++x) {
    initial_[static_cast<std::size_t>(x - tracked.lo)] =
        static_cast<std::int8_t>(initial.signature_at(x));
  }
  for (Site x : log_sites) logs_[x];
}

std::size_t FluxLedger::h_index(Site x) const {
  if (x < tracked_.lo || x > tracked_.hi + 1) {
    throw std::out_of_range("FluxLedger: site outside tracked range");
  }
  return static_cast<std::size_t>(x - tracked_.lo);
}

void FluxLedger::record(const Transition& t, double time) {
  const Site to = t.kind == Transition::Kind::Exit ? kBeyondWindow : t.to;
  auto& h = t.sign > 0 ? h_plus_ : h_minus_;
  const Site first = std::max(t.from + 1, tracked_.lo);
  const Site last = std::min(to, tracked_.hi + 1);
  for (Site x = first; x <= last; ++x) ++h[static_cast<std::size_t>(x - tracked_.lo)];
  if (t.kind == Transition::Kind::Annihilate && tracked_.contains(t.to)) {
    ++annihilations_[static_cast<std::size_t>(t.to - tracked_.lo)];
  }
  const auto kind =
      t.kind == Transition::Kind::Annihilate ? Crossing::Kind::Annihilate : Crossing::Kind::Move;
  for (auto it = logs_.upper_bound(t.from); it != logs_.end() && it->first <= to; ++it) {
    it->second.push_back({time, t.sign, kind});
  }
}

std::uint64_t FluxLedger::crossings(int sign, Site x) const {
  return (sign > 0 ? h_plus_ : h_minus_)[h_index(x)];
}

std::int64_t FluxLedger::net_crossings(Site x) const {
  return static_cast<std::int64_t>(crossings(1, x)) - static_cast<std::int64_t>(crossings(-1, x));
}

std::uint64_t FluxLedger::annihilations(Site x) const {
  if (!tracked_.contains(x)) throw std::out_of_range("FluxLedger: site outside tracked range");
  return annihilations_[static_cast<std::size_t>(x - tracked_.lo)];
}

bool FluxLedger::initially_in(int sign, Site x) const {
  if (!tracked_.contains(x)) throw std::out_of_range("FluxLedger: site outside tracked range");
  return initial_[static_cast<std::size_t>(x - tracked_.lo)] == sign;
}

bool FluxLedger::identity_holds(Site x, int sign, const DiscrepancyView& now) const {
  const auto lhs = static_cast<std::int64_t>(crossings(sign, x)) -
                   static_cast<std::int64_t>(crossings(sign, x + 1));
  const std::int64_t rhs = static_cast<std::int64_t>(annihilations(x)) +
                           (now.signature_at(x) == sign ? 1 : 0) -
                           (initially_in(sign, x) ? 1 : 0);
  return lhs == rhs;
}

std::size_t FluxLedger::identity_violations(const DiscrepancyView& now) const {
  std::size_t bad = 0;
  for (Site x = tracked_.lo; x <= tracked_.hi; ++x) {
    if (!identity_holds(x, 1, now)) ++bad;
    if (!identity_holds(x, -1, now)) ++bad;
  }
  return bad;
}

const std::vector<Crossing>& FluxLedger::log(Site x) const {
  const auto it = logs_.find(x);
  if (it == logs_.end()) throw std::out_of_range("FluxLedger: no log at site");
  return it->second;
}

// ---------------------------------------------------------------------------
// ReplicaSet

ReplicaSet::ReplicaSet(std::vector<SpinConfig> replicas, BoundaryPolicy policy,
                       ModelParams params)
    : replicas_(std::move(replicas)), policy_(policy), params_(params) {
  if (replicas_.empty()) throw std::invalid_argument("ReplicaSet: no replicas");
  for (const auto& r : replicas_) {
    if (r.window() != replicas_.front().window()) {
      throw std::invalid_argument("ReplicaSet: replicas must share a window");
    }
  }
  outcomes_.resize(replicas_.size());
}

void ReplicaSet::track_pair(std::size_t first, std::size_t second, Window ledger_range,
                            std::vector<Site> log_sites) {
  if (first >= replicas_.size() || second >= replicas_.size() || first == second) {
    throw std::invalid_argument("ReplicaSet: invalid pair");
  }
  first_ = first;
  second_ = second;
  view_.emplace(replicas_[first], replicas_[second]);
  ledger_.emplace(ledger_range, *view_, std::move(log_sites));
}

ReplicaSet::StepResult ReplicaSet::coupled_step(const Event& event) {
  for (std::size_t r = 0; r < replicas_.size(); ++r) {
    outcomes_[r] = step(replicas_[r], event, policy_, params_.lambda_plus());
  }
  transitions_.clear();
  if (view_) {
    const EventOutcome& oa = outcomes_[first_];
    const EventOutcome& ob = outcomes_[second_];
    if (oa.acted() || ob.acted()) {
      Site sites[3] = {event.site, 0, 0};
      std::size_t n = 1;
      auto add = [&](Site y) {
        for (std::size_t i = 0; i < n; ++i) {
          if (sites[i] == y) return;
        }
        sites[n++] = y;
      };
      if (oa.kind == EventOutcome::Kind::Exchange) add(oa.partner);
      if (ob.kind == EventOutcome::Kind::Exchange) add(ob.partner);
      auto changed = [&](const EventOutcome& o, Site y) {
        return o.acted() &&
               (y == o.site || (o.kind == EventOutcome::Kind::Exchange && y == o.partner));
      };
      const SpinConfig& a = replicas_[first_];
      const SpinConfig& b = replicas_[second_];
      TouchedSite touched[3];
      bool any_change = false;
      for (std::size_t i = 0; i < n; ++i) {
        const Site y = sites[i];
        TouchedSite& t = touched[i];
        t.site = y;
        t.first_after = a.spin(y);
        t.second_after = b.spin(y);
        t.first_before = changed(oa, y) ? -t.first_after : t.first_after;
        t.second_before = changed(ob, y) ? -t.second_after : t.second_after;
        if (signature(t.first_before, t.second_before) !=
            signature(t.first_after, t.second_after)) {
          any_change = true;
          view_->refresh(y, a, b);
        }
      }
      if (any_change) {
        transitions_ = classify_transition(std::span<const TouchedSite>(touched, n));
        for (const auto& tr : transitions_) ledger_->record(tr, event.time);
      }
    }
  }
  return {outcomes_, transitions_};
}

std::uint64_t ReplicaSet::run(EventStream& stream, double horizon) {
  std::uint64_t count = 0;
  while (stream.peek_time() < horizon) {
    coupled_step(stream.next_event());
    ++count;
  }
  return count;
}

bool ReplicaSet::all_equal() const {
  for (std::size_t r = 1; r < replicas_.size(); ++r) {
    if (!(replicas_[r] == replicas_[0])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

StretchHistogram stretch_histogram(std::span<const Crossing> log, std::size_t k_max) {
  StretchHistogram h;
  h.plus.assign(k_max + 1, 0);
  h.minus.assign(k_max + 1, 0);
  std::size_t i = 0;
  while (i < log.size()) {
    const int sign = log[i].sign;
    std::size_t j = i;
    while (j < log.size() && log[j].sign == sign) ++j;
    const std::size_t len = j - i;
    auto& counts = sign > 0 ? h.plus : h.minus;
    if (len <= k_max) {
      ++counts[len];
    } else {
      ++(sign > 0 ? h.overflow_plus : h.overflow_minus);
    }
    i = j;
  }
  return h;
}

std::uint64_t flux_variation(std::span<const Crossing> log, double lo, double hi) {
  std::uint64_t n = 0;
  for (const auto& c : log) {
    if (c.time > lo && c.time <= hi) ++n;
  }
  return n;
}

void write_crossing_csv(std::ostream& out, Site x, std::span<const Crossing> log) {
  out << "t,site,signature,kind\n";
  for (const auto& c : log) {
    out << c.time << ',' << x << ',' << (c.sign > 0 ? '+' : '-') << ','
        << (c.kind == Crossing::Kind::Annihilate ? "annihilate" : "move") << '\n';
  }
}

}  // namespace toom
