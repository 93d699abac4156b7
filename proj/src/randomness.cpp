#include "toom/randomness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "toom/philox.hpp"

namespace toom {

namespace {
constexpr std::uint32_t kTagArrivals = 0x2001;
}

std::pair<double, double> ArrivalSource::draw(Site x, std::uint64_t j) const {
  const auto block = keyed_block(seed_, kTagArrivals, x, j);
  const double gap = -std::log(to_unit_open_closed(block[0], block[1]));
  return {gap, to_unit_closed_open(block[2], block[3])};
}

double ArrivalSource::gap(Site x, std::uint64_t j) const { return draw(x, j).first; }

double ArrivalSource::uniform(Site x, std::uint64_t j) const {
  return draw(x, j).second;
}

std::vector<Arrival> ArrivalSource::arrivals_until(Site x, double t) const {
  std::vector<Arrival> out;
  double time = 0.0;
  for (std::uint64_t j = 1;; ++j) {
    const auto [g, u] = draw(x, j);
    time += g;
    if (time > t) break;
    out.push_back({time, u});
  }
  return out;
}

Arrival ArrivalSource::first_arrival_after(Site x, double t) const {
  double time = 0.0;
  for (std::uint64_t j = 1;; ++j) {
    const auto [g, u] = draw(x, j);
    time += g;
    if (time > t) return {time, u};
  }
}

// ---------------------------------------------------------------------------

EventStream::EventStream(std::uint64_t seed, Window window)
    : source_(seed), window_(window) {
  if (window.hi < window.lo) throw std::invalid_argument("EventStream: empty window");
  if (window.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("EventStream: window too large");
  }
  const std::size_t n = window.size();
  pending_.resize(n);
  delivered_.assign(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto [g, u] = source_.draw(window.lo + static_cast<Site>(k), 1);
    pending_[k] = {g, u, 1};
  }
  slab_width_ = std::max(0.25, 16384.0 / static_cast<double>(n));
}

void EventStream::fill_slab() {
  slab_.clear();
  cursor_ = 0;
  while (slab_.empty()) {
    const double t0 = static_cast<double>(slab_count_) * slab_width_;
    const double t1 = static_cast<double>(slab_count_ + 1) * slab_width_;
    ++slab_count_;
    for (std::size_t k = 0; k < pending_.size(); ++k) {
      Pending& p = pending_[k];
      while (p.time < t1) {
        if (p.index > std::numeric_limits<std::uint32_t>::max()) {
          throw std::overflow_error("EventStream: arrival index overflow");
        }
        slab_.push_back({p.time, p.uniform, static_cast<std::uint32_t>(k),
                         static_cast<std::uint32_t>(p.index)});
        const auto [g, u] = source_.draw(window_.lo + static_cast<Site>(k), p.index + 1);
        p = {p.time + g, u, p.index + 1};
      }
    }
    if (slab_.empty()) continue;

    // Counting sort into buckets of equal time width; appends were in site
    // order, so each bucket stays site-ordered and a final insertion pass on
    // (time, site) fixes the rest.
    const std::size_t m = slab_.size();
    const double scale = static_cast<double>(m) / (t1 - t0);
    bucket_start_.assign(m + 1, 0);
    auto bucket_of = [&](double t) {
      const auto b = static_cast<std::size_t>((t - t0) * scale);
      return std::min(b, m - 1);
    };
    for (const Slot& s : slab_) ++bucket_start_[bucket_of(s.time) + 1];
    for (std::size_t b = 0; b < m; ++b) bucket_start_[b + 1] += bucket_start_[b];
    scratch_.resize(m);
    for (const Slot& s : slab_) scratch_[bucket_start_[bucket_of(s.time)]++] = s;
    slab_.swap(scratch_);
    for (std::size_t i = 1; i < m; ++i) {
      const Slot item = slab_[i];
      std::size_t j = i;
      while (j > 0 && (slab_[j - 1].time > item.time ||
                       (slab_[j - 1].time == item.time && slab_[j - 1].offset > item.offset))) {
        slab_[j] = slab_[j - 1];
        --j;
      }
      slab_[j] = item;
    }
  }
}

double EventStream::peek_time() {
  if (cursor_ == slab_.size()) fill_slab();
  return slab_[cursor_].time;
}

Event EventStream::next_event() {
  if (cursor_ == slab_.size()) fill_slab();
  const Slot& s = slab_[cursor_++];
  ++delivered_[s.offset];
  ++total_;
  return {s.time, window_.lo + static_cast<Site>(s.offset), s.uniform, s.index};
}

std::uint64_t EventStream::delivered(Site x) const {
  if (!window_.contains(x)) throw std::out_of_range("EventStream: site outside window");
  return delivered_[static_cast<std::size_t>(x - window_.lo)];
}

ThinnedCounts thinned_counts(const ArrivalSource& source, Site x, double t,
                             double lambda_plus) {
  ThinnedCounts counts;
  for (const auto& a : source.arrivals_until(x, t)) {
    if (a.uniform <= lambda_plus) {
      ++counts.plus;
    } else {
      ++counts.minus;
    }
  }
  return counts;
}

std::uint64_t parse_seed(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("empty seed");
  std::size_t used = 0;
  std::uint64_t value = 0;
  try {
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
      value = std::stoull(text.substr(2), &used, 16);
      used += 2;
    } else {
      value = std::stoull(text, &used, 10);
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("invalid seed: " + text);
  }
  if (used != text.size() || text[0] == '-') throw std::invalid_argument("invalid seed: " + text);
  return value;
}

std::string format_seed(std::uint64_t seed) {
  std::ostringstream out;
  out << seed << " (0x" << std::hex << seed << ")";
  return out.str();
}

}  // namespace toom
