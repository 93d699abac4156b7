#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "toom/coupling.hpp"

using namespace toom;

namespace {

Event at(Site x, double u, double t = 1.0) { return Event{t, x, u, 1}; }

const ModelParams kHalf = ModelParams::from_lambda_plus(0.5);

std::vector<Site> brute_discrepancies(const SpinConfig& a, const SpinConfig& b, int sign) {
  std::vector<Site> out;
  for (Site x = a.lo(); x <= a.hi(); ++x) {
    const int s = signature(a.spin(x), b.spin(x));
    if (s != 0 && (sign == 0 || s == sign)) out.push_back(x);
  }
  return out;
}

// x is an interface discrepancy iff the next discrepancy to its right exists
// and is also the next one of opposite signature.
std::vector<Site> brute_interface(const SpinConfig& a, const SpinConfig& b) {
  const auto d = brute_discrepancies(a, b, 0);
  std::vector<Site> out;
  for (Site x : d) {
    std::optional<Site> next;
    std::optional<Site> next_opposite;
    const int s = signature(a.spin(x), b.spin(x));
    for (Site y : d) {
      if (y <= x) continue;
      if (!next) next = y;
      if (!next_opposite && signature(a.spin(y), b.spin(y)) == -s) next_opposite = y;
    }
    if (next && next_opposite && *next == *next_opposite) out.push_back(x);
  }
  return out;
}

ReplicaSet random_pair(std::mt19937_64& rng, Window w, double p1, double p2, double lp) {
  std::vector<SpinConfig> r;
  r.push_back(oracle::random_config(rng, w.lo, w.size(), p1));
  r.push_back(oracle::random_config(rng, w.lo, w.size(), p2));
  return ReplicaSet(std::move(r), BoundaryPolicy::none(), ModelParams::from_lambda_plus(lp));
}

bool ordered(const SpinConfig& lower, const SpinConfig& upper) {
  const auto a = lower.words();
  const auto b = upper.words();
  for (std::size_t w = 0; w < a.size(); ++w) {
    if (a[w] & ~b[w]) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("coupling") {

TEST_CASE("signature and discrepancy view") {
  const auto a = SpinConfig::from_string(0, "++--+-");
  const auto b = SpinConfig::from_string(0, "+-+-++");
  DiscrepancyView v(a, b);
  CHECK(v.sites() == std::vector<Site>{1, 2, 5});
  CHECK(v.sites(1) == std::vector<Site>{1});
  CHECK(v.sites(-1) == std::vector<Site>{2, 5});
  CHECK(v.count() == 3);
  CHECK(v.signature_at(1) == 1);
  CHECK(v.signature_at(2) == -1);
  CHECK(v.signature_at(0) == 0);
  CHECK(v.leftmost() == 1);
  CHECK(v.rightmost() == 5);
  CHECK(v.next_after(1) == 2);
  CHECK(v.next_after(1, 1) == std::nullopt);
  CHECK(v.next_after(-10) == 1);
  CHECK(v.interface_sites() == std::vector<Site>{1});
  CHECK(v.matches(a, b));
  CHECK_THROWS_AS((void)v.signature_at(6), std::out_of_range);
  CHECK_THROWS_AS(DiscrepancyView(a, SpinConfig::from_string(1, "++++++")),
                  std::invalid_argument);
}

TEST_CASE("leftmost discrepancy examples") {
  const auto a = SpinConfig::from_string(0, "+-+-+-+-");
  DiscrepancyView same(a, a);
  CHECK(leftmost_discrepancy(same) == std::nullopt);
  auto b = a;
  b.flip(3);
  b.flip(7);
  CHECK(leftmost_discrepancy(DiscrepancyView(a, b)) == 3);
}

TEST_CASE("interface set matches its definition") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto a = oracle::random_config(rng, -5, 70, 0.5);
    const auto b = oracle::random_config(rng, -5, 70, 0.5);
    DiscrepancyView v(a, b);
    REQUIRE(v.interface_sites() == brute_interface(a, b));
    REQUIRE(v.sites(1) == brute_discrepancies(a, b, 1));
    REQUIRE(v.sites(-1) == brute_discrepancies(a, b, -1));
  }
}

TEST_CASE("classify: move") {
  // first = (+,-), second = (-,-); first exchanges 1<->2, second is idle.
  std::vector<SpinConfig> r{SpinConfig::from_string(1, "+-"), SpinConfig::from_string(1, "--")};
  ReplicaSet set(r, BoundaryPolicy::none(), kHalf);
  set.track_pair(0, 1, {1, 2});
  const auto res = set.coupled_step(at(1, 0.2));
  REQUIRE(res.transitions.size() == 1);
  CHECK(res.transitions[0] ==
        Transition{Transition::Kind::Move, 1, 2, 1});
  CHECK(set.ledger()->crossings(1, 2) == 1);
  CHECK(set.ledger()->crossings(1, 1) == 0);
  CHECK(set.ledger()->identity_violations(*set.view()) == 0);
}

TEST_CASE("classify: annihilation") {
  // first = (+,-), second = (-,+): site 2 holds an opposite discrepancy.
  std::vector<SpinConfig> r{SpinConfig::from_string(1, "+-"), SpinConfig::from_string(1, "-+")};
  ReplicaSet set(r, BoundaryPolicy::none(), kHalf);
  set.track_pair(0, 1, {1, 2});
  const auto res = set.coupled_step(at(1, 0.2));
  REQUIRE(res.transitions.size() == 1);
  CHECK(res.transitions[0] == Transition{Transition::Kind::Annihilate, 1, 2, 1});
  CHECK(set.ledger()->annihilations(2) == 1);
  CHECK(set.ledger()->crossings(1, 2) == 1);
  CHECK(set.view()->count() == 0);
  CHECK(set.ledger()->identity_violations(*set.view()) == 0);
}

TEST_CASE("classify: equal partners leave D unchanged") {
  std::vector<SpinConfig> r{SpinConfig::from_string(1, "+-+"), SpinConfig::from_string(1, "+--")};
  ReplicaSet set(r, BoundaryPolicy::none(), kHalf);
  set.track_pair(0, 1, {1, 3});
  const auto res = set.coupled_step(at(1, 0.2));
  CHECK(res.outcomes[0].kind == EventOutcome::Kind::Exchange);
  CHECK(res.outcomes[1].kind == EventOutcome::Kind::Exchange);
  CHECK(res.transitions.empty());
  CHECK(set.view()->sites() == std::vector<Site>{3});
}

TEST_CASE("classify: exit at the right edge") {
  const TouchedSite t{5, 1, -1, -1, -1};
  const auto tr = classify_transition(std::span<const TouchedSite>(&t, 1));
  REQUIRE(tr.size() == 1);
  CHECK(tr[0].kind == Transition::Kind::Exit);
  CHECK(tr[0].to == kBeyondWindow);
}

TEST_CASE("classify: creation is rejected") {
  const TouchedSite t{5, 1, 1, 1, -1};
  CHECK_THROWS_AS(classify_transition(std::span<const TouchedSite>(&t, 1)), std::logic_error);
  // A move to the left is not admissible either.
  const TouchedSite two[2] = {{3, 1, 1, 1, -1}, {4, 1, -1, 1, 1}};
  CHECK_THROWS_AS(classify_transition(std::span<const TouchedSite>(two, 2)), std::logic_error);
}

TEST_CASE("equal replicas stay equal") {
  std::mt19937_64 rng(3);
  const auto a = oracle::random_config(rng, 0, 200, 0.4);
  ReplicaSet set({a, a, a}, BoundaryPolicy::none(), ModelParams::from_lambda_plus(0.3));
  set.track_pair(0, 2, {0, 199});
  EventStream stream(5, a.window());
  set.run(stream, 50.0);
  CHECK(set.all_equal());
  CHECK(set.view()->count() == 0);
  CHECK(set.ledger()->crossings(1, 100) == 0);
}

TEST_CASE("replicas follow the single-chain oracle") {
  std::mt19937_64 rng(4);
  const Window w{-10, 90};
  ReplicaSet set = random_pair(rng, w, 0.3, 0.7, 0.6);
  auto o1 = oracle::from(set.replica(0));
  auto o2 = oracle::from(set.replica(1));
  EventStream stream(8, w);
  for (int i = 0; i < 20000; ++i) {
    const Event e = stream.next_event();
    set.coupled_step(e);
    o1.ring(e.site, e.uniform, 0.6, w.lo);
    o2.ring(e.site, e.uniform, 0.6, w.lo);
  }
  CHECK(oracle::from(set.replica(0)).s == o1.s);
  CHECK(oracle::from(set.replica(1)).s == o2.s);
}

TEST_CASE("incremental D matches recomputation over 1e6 steps") {
  std::mt19937_64 rng(5);
  const Window w{0, 127};
  ReplicaSet set = random_pair(rng, w, 0.35, 0.6, 0.45);
  set.track_pair(0, 1, w);
  EventStream stream(6, w);
  std::size_t mismatches = 0;
  std::size_t interface_mismatches = 0;
  for (int i = 1; i <= 1000000; ++i) {
    set.coupled_step(stream.next_event());
    if (!set.view()->matches(set.replica(0), set.replica(1))) ++mismatches;
    if (i % 1000 == 0 &&
        set.view()->interface_sites() != brute_interface(set.replica(0), set.replica(1))) {
      ++interface_mismatches;
    }
  }
  CHECK(mismatches == 0);
  CHECK(interface_mismatches == 0);
}

TEST_CASE("ledger identity after every event") {
  std::mt19937_64 rng(7);
  for (const double lp : {0.2, 0.5, 0.85}) {
    const Window w{-40, 87};
    std::vector<SpinConfig> r{oracle::random_config(rng, w.lo, w.size(), 0.3),
                              oracle::random_config(rng, w.lo, w.size(), 0.7)};
    ReplicaSet set(r, BoundaryPolicy::cutoff(-20), ModelParams::from_lambda_plus(lp));
    set.track_pair(0, 1, {-30, 80});
    EventStream stream(static_cast<std::uint64_t>(lp * 1000), w);
    std::size_t violations = 0;
    for (int i = 0; i < 100000; ++i) {
      set.coupled_step(stream.next_event());
      violations += set.ledger()->identity_violations(*set.view());
    }
    CHECK(violations == 0);
  }
}

TEST_CASE("signed discrepancy count changes only through exits") {
  std::mt19937_64 rng(8);
  const Window w{0, 63};
  ReplicaSet set = random_pair(rng, w, 0.5, 0.5, 0.5);
  set.track_pair(0, 1, w);
  EventStream stream(9, w);
  auto balance = [&] {
    return static_cast<long long>(set.view()->count(1)) -
           static_cast<long long>(set.view()->count(-1));
  };
  long long before = balance();
  std::size_t bad = 0;
  for (int i = 0; i < 200000; ++i) {
    const auto res = set.coupled_step(stream.next_event());
    long long exits = 0;
    for (const auto& t : res.transitions) {
      if (t.kind == Transition::Kind::Exit) exits += t.sign;
    }
    const long long now = balance();
    if (now - before != -exits) ++bad;
    before = now;
  }
  CHECK(bad == 0);
}

TEST_CASE("leftmost discrepancy is nondecreasing for the half-line coupling") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Window w{-64, 400};
    const SiteUniforms shared(seed, kTagBernoulli);
    const SiteUniforms other(seed + 1000, kTagBernoulli);
    auto a = sample_bernoulli(0.5, w, shared);
    auto b = a;
    const auto c = sample_bernoulli(0.5, w, other);
    for (Site x = 0; x <= w.hi; ++x) b.set(x, c.spin(x));
    ReplicaSet set({a, b}, BoundaryPolicy::cutoff(w.lo), kHalf);
    set.track_pair(0, 1, {0, 10});
    EventStream stream(seed, w);
    auto last = set.view()->leftmost();
    std::size_t decreases = 0;
    while (stream.peek_time() < 20.0) {
      set.coupled_step(stream.next_event());
      const auto now = set.view()->leftmost();
      const bool down = last && (!now ? false : *now < *last);
      const bool revived = !last && now;
      if (down || revived) ++decreases;
      last = now;
    }
    CHECK(decreases == 0);
  }
}

TEST_CASE("monotone family order is preserved") {
  const std::vector<double> ps{0.2, 0.4, 0.6, 0.8};
  const Window w{0, 511};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto family = sample_monotone_family(ps, w, SiteUniforms(seed, kTagMonotone));
    ReplicaSet set(family, BoundaryPolicy::none(), ModelParams::from_lambda_plus(0.6));
    EventStream stream(seed, w);
    std::size_t violations = 0;
    while (stream.peek_time() < 30.0) {
      set.coupled_step(stream.next_event());
      for (std::size_t k = 0; k + 1 < set.size(); ++k) {
        if (!ordered(set.replica(k), set.replica(k + 1))) ++violations;
      }
    }
    CHECK(violations == 0);
  }
}

TEST_CASE("stretch histogram examples") {
  const std::vector<Crossing> a{{1.0, 1}, {2.0, 1}, {3.0, -1}};
  const auto h = stretch_histogram(a, 4);
  CHECK(h.plus[2] == 1);
  CHECK(h.plus[1] == 0);
  CHECK(h.minus[1] == 1);

  const std::vector<Crossing> b{{1.0, 1}, {2.0, -1}, {3.0, 1}, {4.0, -1}};
  const auto g = stretch_histogram(b, 4);
  CHECK(g.plus[1] == 2);
  CHECK(g.minus[1] == 2);

  const std::vector<Crossing> c{{1.0, -1}, {2.0, -1}, {3.0, -1}};
  const auto o = stretch_histogram(c, 2);
  CHECK(o.overflow_minus == 1);
  CHECK(o.minus[2] == 0);
}

TEST_CASE("stretch lengths of an iid log are geometric") {
  for (const double q : {0.3, 0.5, 0.7}) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(q * 100));
    std::bernoulli_distribution coin(q);
    std::vector<Crossing> log;
    for (int i = 0; i < 10000; ++i) log.push_back({static_cast<double>(i), coin(rng) ? 1 : -1});
    const std::size_t k_max = 8;
    const auto h = stretch_histogram(log, k_max);
    // Plus runs: P(len = k) = q^(k-1) (1 - q), last bin pools the tail.
    std::uint64_t total = h.overflow_plus;
    for (std::size_t k = 1; k <= k_max; ++k) total += h.plus[k];
    double chi2 = 0.0;
    for (std::size_t k = 1; k <= k_max; ++k) {
      double prob = std::pow(q, static_cast<double>(k - 1)) * (1.0 - q);
      double observed = static_cast<double>(h.plus[k]);
      if (k == k_max) {
        prob = std::pow(q, static_cast<double>(k_max - 1));
        observed += static_cast<double>(h.overflow_plus);
      }
      const double expected = prob * static_cast<double>(total);
      chi2 += (observed - expected) * (observed - expected) / expected;
    }
    CHECK(oracle::chi2_upper(chi2, static_cast<int>(k_max) - 1) > 1e-3);
    // Every crossing is in exactly one run.
    std::uint64_t weighted = 0;
    std::uint64_t pluses = 0;
    for (std::size_t k = 1; k <= k_max; ++k) weighted += k * h.plus[k];
    for (const auto& c : log) pluses += c.sign > 0 ? 1 : 0;
    CHECK(weighted <= pluses);
  }
}

TEST_CASE("flux variation") {
  CHECK(flux_variation({}, 0.0, 10.0) == 0);

  // Independent starts, so discrepancies keep arriving from the left.
  const Window w{-64, 300};
  auto a = sample_bernoulli(0.3, w, SiteUniforms(21, kTagBernoulli));
  auto b = sample_bernoulli(0.6, w, SiteUniforms(22, kTagBernoulli));
  ReplicaSet set({a, b}, BoundaryPolicy::cutoff(w.lo), kHalf);
  set.track_pair(0, 1, {0, 10}, {1});
  EventStream stream(23, w);
  set.run(stream, 200.0);
  const auto& log = set.ledger()->log(1);
  REQUIRE(!log.empty());
  CHECK(flux_variation(log, 0.0, 200.0) == set.ledger()->crossings(1, 1) + set.ledger()->crossings(-1, 1));

  auto k_at = [&](double t) {
    long long k = 0;
    for (const auto& c : log) {
      if (c.time <= t) k += c.sign;
    }
    return k;
  };
  for (double lo = 0.0; lo < 190.0; lo += 7.5) {
    const double hi = lo + 10.0;
    CHECK(static_cast<long long>(flux_variation(log, lo, hi)) >= std::llabs(k_at(hi) - k_at(lo)));
  }

  // Exponential moment of the normalized variation stays bounded across scales.
  std::vector<double> moments;
  for (const double len : {1.0, 10.0, 100.0}) {
    double sum = 0.0;
    int n = 0;
    for (double lo = 0.0; lo + len <= 200.0; lo += len) {
      sum += std::exp(0.2 * static_cast<double>(flux_variation(log, lo, lo + len)) / (1.0 + len));
      ++n;
    }
    moments.push_back(sum / n);
  }
  for (double m : moments) {
    CHECK(std::isfinite(m));
    CHECK(m < 10.0);
  }
}

TEST_CASE("crossing log csv") {
  std::ostringstream out;
  const std::vector<Crossing> log{{0.5, 1, Crossing::Kind::Move},
                                  {1.25, -1, Crossing::Kind::Annihilate}};
  write_crossing_csv(out, 1, log);
  CHECK(out.str() == "t,site,signature,kind\n0.5,1,+,move\n1.25,1,-,annihilate\n");
}

TEST_CASE("replica set argument checks") {
  CHECK_THROWS_AS(ReplicaSet({}, BoundaryPolicy::none(), kHalf), std::invalid_argument);
  CHECK_THROWS_AS(ReplicaSet({SpinConfig({0, 3}, 1), SpinConfig({0, 4}, 1)},
                             BoundaryPolicy::none(), kHalf),
                  std::invalid_argument);
  ReplicaSet set({SpinConfig({0, 3}, 1), SpinConfig({0, 3}, -1)}, BoundaryPolicy::none(), kHalf);
  CHECK_THROWS_AS(set.track_pair(0, 0, {0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(set.track_pair(0, 1, {0, 9}), std::invalid_argument);
}

}  // TEST_SUITE
