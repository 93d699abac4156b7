#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <sstream>

#include "toom/experiments.hpp"

using namespace toom;
using nlohmann::json;

TEST_SUITE("experiments") {

TEST_CASE("config parsing") {
  const auto cfg = ExperimentConfig::parse(
      R"({"experiment": "mixing", "output": "out/m", "params": {"n": 4}})");
  CHECK(cfg.experiment == "mixing");
  CHECK(cfg.output == "out/m");
  CHECK(cfg.params.at("n") == 4);
  CHECK(cfg.text.find("\"n\": 4") != std::string::npos);

  CHECK_THROWS_AS(ExperimentConfig::parse("{"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse(R"({"params": {}})"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse(R"({"experiment": "x", "extra": 1})"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse(R"({"experiment": "x", "params": [1]})"), std::invalid_argument);
}

TEST_CASE("parameter validation") {
  CHECK(MixingParams::from_json(json::object()).n == 8);
  CHECK(MixingParams::from_json({{"seed", "0x10"}}).seed == 16);
  CHECK_THROWS_AS(MixingParams::from_json({{"n", 0}}), std::invalid_argument);
  CHECK_THROWS_AS(MixingParams::from_json({{"lambda_plus", 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(MixingParams::from_json({{"bogus", 1}}), std::invalid_argument);
  CHECK_THROWS_AS(MixingParams::from_json({{"n", "eight"}}), std::invalid_argument);
  CHECK_THROWS_AS(MixingParams::from_json({{"seed", -3}}), std::invalid_argument);
  CHECK_THROWS_AS(FrontParams::from_json({{"cutoffs", {500}}, {"outer", 400}}), std::invalid_argument);
  CHECK_THROWS_AS(CurrentParams::from_json({{"p", 1.5}}), std::invalid_argument);
  CHECK_THROWS_AS(CurrentParams::from_json({{"safety", 0.5}}), std::invalid_argument);
  CHECK_THROWS_AS(ProfileParams::from_json({{"m", 100}, {"burn_in", 150}}), std::invalid_argument);
  CHECK_THROWS_AS(CorrelationParams::from_json({{"t_min", 2.0}, {"t_max", 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(StationarityParams::from_json({{"times", {1.0, 0.5}}}), std::invalid_argument);
  const auto cp = CurrentParams::from_json({{"buffer", 300}, {"front_speed", 4.0}, {"p", 0.4}});
  CHECK(cp.buffer.buffer == 300);
  CHECK(cp.buffer.front_speed == 4.0);
  CHECK(cp.p == 0.4);
}

TEST_CASE("estimate report") {
  EstimateReport r{"j", 1.0, 0.1, 10, 1.25, 2};
  CHECK(r.within() == true);
  CHECK(r.within(2.0) == false);
  const auto back = EstimateReport::from_json(json::parse(r.to_json().dump()));
  CHECK(back.name == r.name);
  CHECK(back.estimate == r.estimate);
  CHECK(back.se == r.se);
  CHECK(back.replications == r.replications);
  CHECK(back.reference == r.reference);
  CHECK(back.flagged == r.flagged);

  EstimateReport none{"x", std::nan(""), 0.0, 0, std::nullopt, 0};
  CHECK(!none.within().has_value());
  const auto nan_back = EstimateReport::from_json(none.to_json());
  CHECK(std::isnan(nan_back.estimate));
  CHECK(!nan_back.reference);
  none.reference = 0.0;
  CHECK(none.within() == false);

  std::ostringstream out;
  write_reports_csv(out, std::vector<EstimateReport>{r});
  CHECK(out.str() == "name,estimate,se,replications,reference,flagged,within_3se\n"
                     "j,1,0.10000000000000001,10,1.25,2,yes\n");
}

TEST_CASE("manifest header echoes the config") {
  RunManifest m{"mixing", "{\n  \"experiment\": \"mixing\"\n}", 5, 1.5};
  std::ostringstream out;
  write_manifest_header(out, m);
  const std::string s = out.str();
  CHECK(s.find("# experiment: mixing\n") != std::string::npos);
  CHECK(s.find("# seed: 5\n") != std::string::npos);
  CHECK(s.find("# config:   \"experiment\": \"mixing\"\n") != std::string::npos);
  CHECK(manifest_json(m).at("version") == std::string(kVersion));
}

TEST_CASE("buffer sizing") {
  CHECK(required_buffer(4.0, 1.25, 100.0) == 628);
  CHECK_THROWS_AS(required_buffer(0.0, 1.25, 100.0), std::invalid_argument);
}

TEST_CASE("mixing experiment") {
  MixingParams p;
  p.n = 5;
  p.reps = 200;
  p.lambda_plus = 0.3;
  const MixingResult r = exp_mixing(p);
  CHECK(r.dominated == 200);
  CHECK(r.tau_couple.size() == 200);
  REQUIRE(r.chain_mean.reference);
  CHECK(std::abs(r.chain_mean.estimate - 5.0) <= 3.0 * std::sqrt(5.0 / 200.0));
  REQUIRE(r.exact_tmix);
  CHECK(*r.exact_tmix <= 10.0);
  CHECK(r.couple_median <= r.chain_mean.estimate + 5.0);

  // Above 12 sites the extremal and random starting states are used.
  MixingParams big;
  big.n = 20;
  big.reps = 20;
  big.random_states = 8;
  const MixingResult b = exp_mixing(big);
  CHECK(b.dominated == 20);
  CHECK(!b.exact_tmix);
}

TEST_CASE("mixing runs are reproducible") {
  MixingParams p;
  p.n = 6;
  p.reps = 30;
  p.seed = 99;
  std::ostringstream a;
  std::ostringstream b;
  write_mixing_csv(a, exp_mixing(p));
  write_mixing_csv(b, exp_mixing(p));
  CHECK(a.str() == b.str());
  p.seed = 100;
  std::ostringstream c;
  write_mixing_csv(c, exp_mixing(p));
  CHECK(a.str() != c.str());
}

TEST_CASE("front experiment") {
  FrontParams p;
  p.lambda_plus = 0.6;
  p.cutoffs = {40, 80, 120, 160};
  p.outer = 160;
  p.window = 16;
  p.horizon = 30.0;
  p.reps = 40;
  const FrontResult r = exp_front_speed(p);
  REQUIRE(r.agreement.size() == 4);
  // L = L' always agrees.
  for (double a : r.agreement[3]) CHECK(a == 1.0);
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    for (std::size_t i = 1; i < r.cutoffs.size(); ++i) {
      CHECK(r.agreement[i][k] >= r.agreement[i - 1][k]);
    }
    if (k > 0) CHECK(r.agreement[0][k] <= r.agreement[0][k - 1]);
  }
  CHECK(r.speed[0].estimate > 0.0);
  std::ostringstream out;
  write_front_trace_csv(out, r);
  CHECK(out.str().rfind("rep,L,t,X\n", 0) == 0);
}

TEST_CASE("current experiment") {
  CurrentParams p;
  p.lambda_plus = 0.8;
  p.p = 0.5;
  p.horizon = 20.0;
  p.reps = 40;
  p.buffer.buffer = 300;
  const CurrentResult r = exp_current(p);
  CHECK(r.flagged == 0);
  CHECK(r.j_plus.replications == 40);
  CHECK(r.j_plus.reference == doctest::Approx(0.8));
  CHECK(r.j_minus.reference == doctest::Approx(0.2));
  CHECK(r.j_plus.within() == true);
  CHECK(r.j_minus.within() == true);
  CHECK(r.drift.within() == true);

  // A buffer far below the front travel is caught.
  p.buffer.buffer = 2;
  p.buffer.guard = 8;
  p.horizon = 60.0;
  p.reps = 5;
  const CurrentResult bad = exp_current(p);
  CHECK(bad.flagged > 0);
  CHECK(bad.j_plus.flagged == bad.flagged);
}

TEST_CASE("stationarity experiment") {
  StationarityParams p;
  p.window = 4;
  p.times = {0.0, 2.0};
  p.reps = 300;
  p.buffer.buffer = 100;
  const StationarityResult r = exp_stationarity(p);
  CHECK(r.flagged == 0);
  CHECK(r.rows.size() == 2 * 5);
  CHECK(r.outside_band <= 1);
  for (const auto& row : r.rows) {
    CHECK(row.mean.reference == doctest::Approx(0.0));
    CHECK(row.mean.se > 0.0);
  }
}

TEST_CASE("correlation experiment") {
  CorrelationParams p;
  p.reps = 10;
  p.sites = 32;
  p.t_max = 4.0;
  p.points = 4;
  p.variance_times = {4.0};
  p.buffer.buffer = 200;
  const CorrelationResult r = exp_correlation(p);
  REQUIRE(r.times.size() == 5);
  CHECK(r.times[0] == 0.0);
  CHECK(std::abs(r.correlation[0].estimate - 1.0) < 0.05);
  for (std::size_t k = 1; k < r.times.size(); ++k) CHECK(r.correlation[k].estimate < 1.0);
  CHECK(r.k_variance.size() == 1);
}

TEST_CASE("profile experiment") {
  ProfileParams p;
  p.lambda_plus = 0.5;
  p.m = 64;
  p.horizon = 400.0;
  const ProfileResult r = exp_profile(p);
  CHECK(r.density.size() == 64);
  CHECK(r.height_variance.size() == 64);
  CHECK(r.bulk.reference == doctest::Approx(0.0));
  CHECK(r.height_variance[0] <= 1.0 + 1e-12);
  std::ostringstream out;
  write_profile_csv(out, r);
  CHECK(out.str().rfind("x,density,se\n1,", 0) == 0);
}

}  // TEST_SUITE
