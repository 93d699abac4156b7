#include "toom/engine.hpp"

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace toom {

EventOutcome step(SpinConfig& cfg, const Event& event, const BoundaryPolicy& policy,
                  double lambda_plus) {
  EventOutcome out;
  out.site = event.site;
  out.time = event.time;
  if (policy.frozen(event.site)) return out;
  const int eta = cfg.spin(event.site);
  out.sign = eta;
  if (!exchange_decision(event.uniform, eta, lambda_plus)) return out;
  if (const auto z = first_opposite_right(cfg, event.site)) {
    cfg.flip(event.site);
    cfg.flip(*z);
    out.kind = EventOutcome::Kind::Exchange;
    out.partner = *z;
  } else {
    cfg.flip(event.site);
    out.kind = EventOutcome::Kind::Flip;
  }
  return out;
}

std::uint64_t run(SpinConfig& cfg, EventStream& stream, const BoundaryPolicy& policy,
                  double lambda_plus, double horizon,
                  std::span<Observer* const> observers) {
  if (horizon < 0.0) throw std::invalid_argument("run: negative horizon");
  std::uint64_t count = 0;
  while (stream.peek_time() < horizon) {
    const Event ev = stream.next_event();
    const EventOutcome outcome = step(cfg, ev, policy, lambda_plus);
    for (Observer* obs : observers) obs->on_outcome(outcome, cfg);
    ++count;
  }
  return count;
}

void CrossingCurrent::on_outcome(const EventOutcome& outcome, const SpinConfig&) {
  if (!outcome.acted() || outcome.site >= x_) return;
  if (outcome.kind == EventOutcome::Kind::Exchange && outcome.partner < x_) return;
  if (outcome.sign > 0) {
    ++plus_;
  } else {
    ++minus_;
  }
  if (keep_log_) log_.push_back({outcome.time, outcome.sign, Crossing::Kind::Move});
}

// ---------------------------------------------------------------------------

std::string to_rle(const SpinConfig& cfg) {
  std::string out;
  Site x = cfg.lo();
  while (x <= cfg.hi()) {
    const auto z = first_opposite_right(cfg, x);
    const Site end = z ? *z : cfg.hi() + 1;
    out.push_back(cfg.is_plus(x) ? '+' : '-');
    out += std::to_string(end - x);
    x = end;
  }
  return out;
}

SpinConfig from_rle(Site lo, std::string_view rle) {
  std::vector<int> spins;
  std::size_t i = 0;
  while (i < rle.size()) {
    const char c = rle[i++];
    if (c != '+' && c != '-') throw std::invalid_argument("from_rle: expected sign");
    std::size_t start = i;
    while (i < rle.size() && rle[i] >= '0' && rle[i] <= '9') ++i;
    if (start == i) throw std::invalid_argument("from_rle: missing run length");
    const auto n = std::stoull(std::string(rle.substr(start, i - start)));
    if (n == 0) throw std::invalid_argument("from_rle: zero run length");
    spins.insert(spins.end(), n, c == '+' ? 1 : -1);
  }
  return SpinConfig::from_spins(lo, spins);
}

SnapshotWriter::SnapshotWriter(std::ostream& out, const SnapshotHeader& header) : out_(out) {
  out_ << std::setprecision(17);
  out_ << "# seed " << header.seed << '\n'
       << "# lambda_plus " << header.lambda_plus << '\n'
       << "# window " << header.window.lo << ' ' << header.window.hi << '\n'
       << "# columns t rle\n";
}

void SnapshotWriter::write(double t, const SpinConfig& cfg) {
  out_ << t << ' ' << to_rle(cfg) << '\n';
}

std::vector<Snapshot> read_snapshots(std::istream& in, Site lo) {
  std::vector<Snapshot> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    double t = 0.0;
    std::string rle;
    if (!(fields >> t >> rle)) throw std::invalid_argument("read_snapshots: malformed line");
    out.push_back({t, from_rle(lo, rle)});
  }
  return out;
}

}  // namespace toom
