#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "oracles.hpp"
#include "toom/core.hpp"

using namespace toom;

TEST_SUITE("core") {

TEST_CASE("p_star examples and residual") {
  CHECK(p_star(0.5, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p_star(0.8, 0.2) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(p_star(0.2, 0.8) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  for (int k = 1; k < 100; ++k) {
    const double lp = k / 100.0;
    const ModelParams m = ModelParams::from_lambda_plus(lp);
    const double p = m.p_star();
    CHECK(std::abs(std::pow((1 - p) / p, 2) - m.lambda_plus() / m.lambda_minus()) < 1e-12);
    CHECK(std::abs(m.lambda_plus() + m.lambda_minus() - 1.0) <= 1e-15);
  }
}

TEST_CASE("ModelParams rejects bad rates") {
  CHECK_THROWS_AS(ModelParams(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams(-0.1, 1.1), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams(0.5, 0.6), std::invalid_argument);
  CHECK_THROWS_AS(p_star(0.3, 0.3), std::invalid_argument);
  CHECK_NOTHROW(ModelParams(0.3, 0.7));
}

TEST_CASE("SpinConfig basics") {
  SpinConfig c = SpinConfig::from_string(-2, "++-+-");
  CHECK(c.lo() == -2);
  CHECK(c.hi() == 2);
  CHECK(c.spin(-2) == 1);
  CHECK(c.spin(0) == -1);
  CHECK(c.magnetization() == 1);
  c.flip(0);
  CHECK(c.to_string() == "++++-");
  c.swap_spins(-2, 2);
  CHECK(c.to_string() == "-+++" "+");
  c.set(2, -1);
  CHECK(c.spin(2) == -1);
  CHECK_THROWS_AS((void)c.spin(3), std::out_of_range);
  CHECK_THROWS_AS((void)c.spin(-3), std::out_of_range);
  CHECK_THROWS_AS(SpinConfig::from_string(0, "+x"), std::invalid_argument);
  CHECK_THROWS_AS(SpinConfig::from_string(0, ""), std::invalid_argument);
  const std::vector<int> bad = {1, 0};
  CHECK_THROWS_AS(SpinConfig::from_spins(0, bad), std::invalid_argument);
}

TEST_CASE("first_opposite_right examples") {
  const SpinConfig a = SpinConfig::from_string(1, "++-+");
  CHECK(first_opposite_right(a, 1) == Site{3});
  const SpinConfig b = SpinConfig::from_string(1, "++++");
  CHECK_FALSE(first_opposite_right(b, 2).has_value());
  const SpinConfig c = SpinConfig::from_string(1, "-+-");
  CHECK(first_opposite_right(c, 2) == Site{3});
  CHECK_THROWS_AS((void)first_opposite_right(c, 4), std::out_of_range);
}

TEST_CASE("word scans agree with a linear scan on random configs") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(1, 300);
  std::uniform_int_distribution<int> offset(-130, 130);
  std::uniform_real_distribution<double> dens(0.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto n = static_cast<std::size_t>(len(rng));
    // Occasionally near-constant configs so long runs cross word boundaries.
    const double p = trial % 5 == 0 ? (trial % 10 == 0 ? 0.995 : 0.005) : dens(rng);
    const SpinConfig cfg = oracle::random_config(rng, offset(rng), n, p);
    const oracle::Chain ref = oracle::from(cfg);
    std::uniform_int_distribution<Site> site(cfg.lo(), cfg.hi());
    for (int q = 0; q < 4; ++q) {
      const Site x = site(rng);
      REQUIRE(first_opposite_right(cfg, x) == ref.opposite_right(x));
      REQUIRE(first_opposite_left(cfg, x) == ref.opposite_left(x));
    }
  }
}

TEST_CASE("block length examples") {
  const SpinConfig a = SpinConfig::from_string(1, "++-");
  const BlockLength l = block_left_len(a, 3);
  CHECK(l.length == 2);
  CHECK(l.clipped);
  const SpinConfig b = SpinConfig::from_string(0, "+---");
  const BlockLength r = block_right_len(b, 0);
  CHECK(r.length == 3);
  CHECK(r.clipped);
  const SpinConfig c = SpinConfig::from_string(0, "+++++");
  CHECK_THROWS_AS((void)block_left_len(c, 0), std::out_of_range);
  const BlockLength edge = block_left_len(c, 5);
  CHECK(edge.length == 5);
  CHECK(edge.clipped);
  const SpinConfig d = SpinConfig::from_string(0, "-++-+");
  const BlockStats s = block_stats(d, 3);
  CHECK(s.l == 2);
  CHECK_FALSE(s.l_clipped);
  CHECK(s.r == 1);
  CHECK(s.r_clipped);
}

TEST_CASE("block lengths agree with brute force") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const SpinConfig cfg = oracle::random_config(rng, -40, 150, trial % 3 == 0 ? 0.97 : 0.5);
    const oracle::Chain ref = oracle::from(cfg);
    for (Site x = cfg.lo() + 1; x <= cfg.hi() - 1; ++x) {
      std::int64_t l = 0;
      while (x - 1 - l >= cfg.lo() && ref.at(x - 1 - l) == ref.at(x - 1)) ++l;
      std::int64_t r = 0;
      while (x + 1 + r <= cfg.hi() && ref.at(x + 1 + r) == ref.at(x + 1)) ++r;
      const BlockStats s = block_stats(cfg, x);
      REQUIRE(s.l == l);
      REQUIRE(s.r == r);
      REQUIRE(s.l_clipped == (x - l == cfg.lo()));
      REQUIRE(s.r_clipped == (x + r == cfg.hi()));
    }
  }
}

TEST_CASE("sample_bernoulli density, determinism and window extension") {
  const Window big{0, 999999};
  const SpinConfig half = sample_bernoulli(0.5, big, SiteUniforms(3, kTagBernoulli));
  const double n = static_cast<double>(big.size());
  const double plus = (static_cast<double>(half.magnetization()) + n) / 2.0;
  CHECK(std::abs(plus / n - 0.5) <= 3.0 * std::sqrt(0.25 / n));

  const Window w{-50000, 49999};
  const SpinConfig c = sample_bernoulli(0.3, w, SiteUniforms(4, kTagBernoulli));
  const double m = static_cast<double>(w.size());
  const double frac = (static_cast<double>(c.magnetization()) + m) / 2.0 / m;
  CHECK(std::abs(frac - 0.3) <= 3.0 * std::sqrt(0.3 * 0.7 / m));

  CHECK(sample_bernoulli(0.3, w, SiteUniforms(4, kTagBernoulli)) == c);

  const SpinConfig small = sample_bernoulli(0.4, Window{-10, 20}, SiteUniforms(9, kTagBernoulli));
  const SpinConfig large = sample_bernoulli(0.4, Window{-1000, 1000}, SiteUniforms(9, kTagBernoulli));
  for (Site x = -10; x <= 20; ++x) CHECK(small.spin(x) == large.spin(x));

  CHECK_THROWS_AS(sample_bernoulli(1.0, w, SiteUniforms(1, kTagBernoulli)), std::invalid_argument);
  CHECK_THROWS_AS(sample_bernoulli(0.0, w, SiteUniforms(1, kTagBernoulli)), std::invalid_argument);
}

TEST_CASE("monotone family") {
  const Window w{0, 99999};
  const std::vector<double> ps = {0.25, 0.5, 0.75};
  const auto fam = sample_monotone_family(ps, w, SiteUniforms(5, kTagMonotone));
  REQUIRE(fam.size() == 3);
  const double n = static_cast<double>(w.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double frac = (static_cast<double>(fam[i].magnetization()) + n) / 2.0 / n;
    CHECK(std::abs(frac - ps[i]) <= 3.0 * std::sqrt(ps[i] * (1 - ps[i]) / n));
  }
  for (Site x = w.lo; x <= w.hi; ++x) {
    REQUIRE(fam[0].spin(x) <= fam[1].spin(x));
    REQUIRE(fam[1].spin(x) <= fam[2].spin(x));
  }
  const std::vector<double> same = {0.4, 0.4};
  const auto twins = sample_monotone_family(same, w, SiteUniforms(6, kTagMonotone));
  CHECK(twins[0] == twins[1]);
  const std::vector<double> unsorted = {0.8, 0.2};
  CHECK_THROWS_AS(sample_monotone_family(unsorted, w, SiteUniforms(6, kTagMonotone)),
                  std::invalid_argument);
}

}  // TEST_SUITE
