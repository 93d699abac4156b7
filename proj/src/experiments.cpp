#include "toom/experiments.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "toom/coupling.hpp"
#include "toom/engine.hpp"
#include "toom/exact.hpp"
#include "toom/randomness.hpp"

namespace toom {

using nlohmann::json;

namespace {

constexpr std::uint32_t kTagMixingInit = 0x3001;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                std::string_view what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": params must be an object");
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw std::invalid_argument(std::string(what) + ": unknown parameter '" + item.key() + "'");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("parameter '") + key + "': " + e.what());
  }
}

template <class T>
void read(const json& j, const char* key, std::optional<T>& field) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T value{};
  read(j, key, value);
  field = value;
}

void read_seed(const json& j, std::uint64_t& seed) {
  if (!j.contains("seed")) return;
  const auto& v = j.at("seed");
  if (v.is_string()) {
    seed = parse_seed(v.get<std::string>());
  } else if (v.is_number_unsigned()) {
    seed = v.get<std::uint64_t>();
  } else {
    throw std::invalid_argument("parameter 'seed': expected a nonnegative integer");
  }
}

void read_buffer(const json& j, BufferSpec& spec) {
  read(j, "buffer", spec.buffer);
  read(j, "front_speed", spec.front_speed);
  read(j, "safety", spec.safety);
  read(j, "guard", spec.guard);
  read(j, "right", spec.right);
}

void validate_buffer(const BufferSpec& spec) {
  if (spec.buffer < 0) throw std::invalid_argument("buffer must be >= 0");
  if (spec.front_speed < 0.0) throw std::invalid_argument("front_speed must be >= 0");
  if (!(spec.safety >= 1.0)) throw std::invalid_argument("safety must be >= 1");
  if (spec.guard < 1) throw std::invalid_argument("guard must be >= 1");
  if (spec.right < 1) throw std::invalid_argument("right must be >= 1");
}

void validate_lambda(double lambda_plus) {
  if (!(lambda_plus > 0.0 && lambda_plus < 1.0)) {
    throw std::invalid_argument("lambda_plus must lie in (0, 1)");
  }
}

void validate_density(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("p must lie in (0, 1)");
}

std::optional<Site> rightmost_difference(const SpinConfig& a, const SpinConfig& b) {
  const auto wa = a.words();
  const auto wb = b.words();
  for (std::size_t k = wa.size(); k-- > 0;) {
    const std::uint64_t diff = wa[k] ^ wb[k];
    if (diff != 0) {
      return a.lo() + static_cast<Site>(k * 64 + 63 - static_cast<std::size_t>(std::countl_zero(diff)));
    }
  }
  return std::nullopt;
}

bool differs(const SpinConfig& a, const SpinConfig& b, Site x) {
  return a.is_plus(x) != b.is_plus(x);
}

// Ber_p on [-(buffer + guard), right] with a main copy frozen left of -buffer
// and a guard copy frozen left of -(buffer + guard).
class GuardedRun {
 public:
  GuardedRun(double p, Site buffer, const BufferSpec& spec, Site right, std::uint64_t seed,
             double lambda_plus)
      : window_{-(buffer + spec.guard), right},
        main_(sample_bernoulli(p, window_, SiteUniforms(seed, kTagBernoulli))),
        guard_(main_),
        main_policy_(BoundaryPolicy::cutoff(-buffer)),
        guard_policy_(BoundaryPolicy::cutoff(-(buffer + spec.guard))),
        lambda_plus_(lambda_plus) {}

  [[nodiscard]] const Window& window() const { return window_; }
  [[nodiscard]] const SpinConfig& config() const { return main_; }
  [[nodiscard]] bool breached() const { return breached_; }

  EventOutcome step(const Event& e) {
    const EventOutcome a = toom::step(main_, e, main_policy_, lambda_plus_);
    const EventOutcome b = toom::step(guard_, e, guard_policy_, lambda_plus_);
    if (!breached_ && (a.acted() || b.acted())) {
      check(e.site);
      if (a.kind == EventOutcome::Kind::Exchange) check(a.partner);
      if (b.kind == EventOutcome::Kind::Exchange) check(b.partner);
    }
    return a;
  }

 private:
  void check(Site x) {
    if (x >= 0 && differs(main_, guard_, x)) breached_ = true;
  }

  Window window_;
  SpinConfig main_;
  SpinConfig guard_;
  BoundaryPolicy main_policy_;
  BoundaryPolicy guard_policy_;
  double lambda_plus_;
  bool breached_ = false;
};

struct ResolvedBuffer {
  Site buffer = 0;
  double speed = 0.0;
};

ResolvedBuffer resolve_buffer(const BufferSpec& spec, double lambda_plus, double p,
                              double horizon, std::uint64_t seed) {
  if (spec.buffer > 0) return {spec.buffer, spec.front_speed};
  double speed = spec.front_speed;
  if (speed <= 0.0) {
    const MeanSe fit = calibrate_front_speed(lambda_plus, p, seed);
    speed = fit.mean + 3.0 * fit.se;
  }
  return {required_buffer(speed, spec.safety, horizon), speed};
}

EstimateReport make_report(std::string name, const MeanSe& m, std::optional<double> reference,
                           std::size_t flagged = 0) {
  EstimateReport r;
  r.name = std::move(name);
  r.estimate = m.n > 0 ? m.mean : kNaN;
  r.se = m.se;
  r.replications = m.n;
  r.reference = reference;
  r.flagged = flagged;
  return r;
}

// Value of a local function shifted by x.
double eval_shifted(const LocalFunction& f, const SpinConfig& cfg, Site x) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < f.support.size(); ++i) {
    if (cfg.is_plus(x + f.support[i])) idx |= std::size_t{1} << i;
  }
  return f.table[idx];
}

void write_double(std::ostream& out, double v) {
  if (std::isnan(v)) {
    out << "nan";
  } else {
    out << v;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Config and reports

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  check_keys(j, {"experiment", "output", "params"}, "config");
  ExperimentConfig cfg;
  if (!j.contains("experiment") || !j.at("experiment").is_string()) {
    throw std::invalid_argument("config: missing string field 'experiment'");
  }
  cfg.experiment = j.at("experiment").get<std::string>();
  if (j.contains("output")) {
    if (!j.at("output").is_string()) throw std::invalid_argument("config: 'output' must be a string");
    cfg.output = j.at("output").get<std::string>();
  }
  if (j.contains("params")) {
    if (!j.at("params").is_object()) throw std::invalid_argument("config: 'params' must be an object");
    cfg.params = j.at("params");
  }
  cfg.text = std::string(text);
  return cfg;
}

std::optional<bool> EstimateReport::within(double k) const {
  if (!reference) return std::nullopt;
  if (replications == 0 || std::isnan(estimate)) return false;
  return std::abs(estimate - *reference) <= k * se;
}

json EstimateReport::to_json() const {
  json j;
  j["name"] = name;
  j["estimate"] = std::isnan(estimate) ? json(nullptr) : json(estimate);
  j["se"] = se;
  j["replications"] = replications;
  j["reference"] = reference ? json(*reference) : json(nullptr);
  j["flagged"] = flagged;
  return j;
}

EstimateReport EstimateReport::from_json(const json& j) {
  EstimateReport r;
  r.name = j.at("name").get<std::string>();
  r.estimate = j.at("estimate").is_null() ? kNaN : j.at("estimate").get<double>();
  r.se = j.at("se").get<double>();
  r.replications = j.at("replications").get<std::size_t>();
  if (!j.at("reference").is_null()) r.reference = j.at("reference").get<double>();
  r.flagged = j.at("flagged").get<std::size_t>();
  return r;
}

void write_reports_csv(std::ostream& out, std::span<const EstimateReport> reports) {
  out << std::setprecision(17);
  out << "name,estimate,se,replications,reference,flagged,within_3se\n";
  for (const auto& r : reports) {
    out << r.name << ',';
    write_double(out, r.estimate);
    out << ',' << r.se << ',' << r.replications << ',';
    if (r.reference) out << *r.reference;
    out << ',' << r.flagged << ',';
    if (const auto w = r.within()) out << (*w ? "yes" : "no");
    out << '\n';
  }
}

void write_manifest_header(std::ostream& out, const RunManifest& manifest) {
  out << "# experiment: " << manifest.experiment << '\n'
      << "# seed: " << manifest.seed << '\n'
      << "# version: " << manifest.version << '\n'
      << "# wall_seconds: " << manifest.wall_seconds << '\n';
  std::istringstream lines(manifest.config_text);
  std::string line;
  while (std::getline(lines, line)) out << "# config: " << line << '\n';
}

json manifest_json(const RunManifest& manifest) {
  return {{"experiment", manifest.experiment},
          {"seed", manifest.seed},
          {"version", manifest.version},
          {"wall_seconds", manifest.wall_seconds},
          {"config", manifest.config_text}};
}

// ---------------------------------------------------------------------------
// Buffers

Site required_buffer(double speed, double safety, double horizon) {
  if (!(speed > 0.0) || !(horizon >= 0.0)) throw std::invalid_argument("required_buffer: bad input");
  return static_cast<Site>(std::ceil(safety * speed * horizon)) + 128;
}

MeanSe calibrate_front_speed(double lambda_plus, double p, std::uint64_t seed) {
  FrontParams fp;
  fp.lambda_plus = lambda_plus;
  fp.p = p;
  fp.horizon = 200.0;
  fp.cutoffs = {1500};
  fp.outer = 1564;
  fp.window = 64;
  fp.sample_dt = 2.0;
  fp.reps = 4;
  fp.seed = seed;
  const FrontResult res = exp_front_speed(fp);
  const EstimateReport& s = res.speed.front();
  return {s.estimate, s.se, s.replications};
}

// ---------------------------------------------------------------------------
// Mixing

MixingParams MixingParams::from_json(const json& j) {
  check_keys(j, {"n", "lambda_plus", "reps", "seed", "random_states", "grid_step"}, "mixing");
  MixingParams p;
  read(j, "n", p.n);
  read(j, "lambda_plus", p.lambda_plus);
  read(j, "reps", p.reps);
  read_seed(j, p.seed);
  read(j, "random_states", p.random_states);
  read(j, "grid_step", p.grid_step);
  p.validate();
  return p;
}

void MixingParams::validate() const {
  if (n < 1) throw std::invalid_argument("mixing: n must be >= 1");
  validate_lambda(lambda_plus);
  if (reps < 1) throw std::invalid_argument("mixing: reps must be >= 1");
  if (random_states < 0) throw std::invalid_argument("mixing: random_states must be >= 0");
  if (!(grid_step > 0.0)) throw std::invalid_argument("mixing: grid_step must be > 0");
}

MixingResult exp_mixing(const MixingParams& params) {
  params.validate();
  const ModelParams model = ModelParams::from_lambda_plus(params.lambda_plus);
  const int n = params.n;
  const Window window{1, n};
  MixingResult result;

  for (int rep = 0; rep < params.reps; ++rep) {
    const std::uint64_t seed = params.seed + static_cast<std::uint64_t>(rep);
    std::vector<SpinConfig> initial;
    std::size_t lowest = 0;
    std::size_t highest = 0;
    if (n <= 12) {
      const std::uint32_t states = 1u << n;
      initial.reserve(states);
      for (std::uint32_t s = 0; s < states; ++s) {
        SpinConfig cfg(window, -1);
        for (int i = 0; i < n; ++i) {
          if ((s >> i) & 1u) cfg.set(i + 1, 1);
        }
        initial.push_back(std::move(cfg));
      }
      highest = states - 1;
    } else {
      initial.emplace_back(window, -1);
      initial.emplace_back(window, 1);
      highest = 1;
      for (int k = 0; k < params.random_states; ++k) {
        const std::uint64_t key = seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(k + 1));
        initial.push_back(sample_bernoulli(0.5, window, SiteUniforms(key, kTagMixingInit)));
      }
    }
    ReplicaSet set(std::move(initial), BoundaryPolicy::none(), model);
    EventStream stream(seed, window);
    double tau = 0.0;
    // The extremal pair is compared first: by monotonicity it brackets the rest.
    for (;;) {
      const Event e = stream.next_event();
      set.coupled_step(e);
      if (set.replica(lowest) == set.replica(highest) && set.all_equal()) {
        tau = e.time;
        break;
      }
    }
    double chain = 0.0;
    for (Site x = 1; x <= n; ++x) chain = stream.source().first_arrival_after(x, chain).time;
    result.tau_couple.push_back(tau);
    result.tau_chain.push_back(chain);
    if (tau <= chain) ++result.dominated;
  }

  result.couple_mean = make_report("tau_couple_mean", mean_se(result.tau_couple), std::nullopt);
  result.chain_mean = make_report("tau_chain_mean", mean_se(result.tau_chain), static_cast<double>(n));
  std::vector<double> sorted = result.tau_couple;
  std::sort(sorted.begin(), sorted.end());
  result.couple_median = sorted[(sorted.size() - 1) / 2];

  if (n <= 10) {
    const GeneratorMatrix q = build_generator(n, model);
    const StationaryDistribution st = stationary(q);
    const auto steps = static_cast<std::size_t>(std::floor(2.0 * n / params.grid_step + 1e-9));
    std::vector<double> grid;
    for (std::size_t k = 0; k <= steps; ++k) grid.push_back(static_cast<double>(k) * params.grid_step);
    result.tv = tv_mixing_curve(q, st.pi, grid, 0.5);
    result.grid.assign(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(result.tv.size()));
    const double t = mixing_time_from_curve(result.grid, result.tv);
    if (t >= 0.0) result.exact_tmix = t;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Front speed

FrontParams FrontParams::from_json(const json& j) {
  check_keys(j, {"lambda_plus", "p", "cutoffs", "outer", "window", "horizon", "sample_dt", "reps", "seed"},
             "front");
  FrontParams p;
  read(j, "lambda_plus", p.lambda_plus);
  read(j, "p", p.p);
  read(j, "cutoffs", p.cutoffs);
  read(j, "outer", p.outer);
  read(j, "window", p.window);
  read(j, "horizon", p.horizon);
  read(j, "sample_dt", p.sample_dt);
  read(j, "reps", p.reps);
  read_seed(j, p.seed);
  p.validate();
  return p;
}

void FrontParams::validate() const {
  validate_lambda(lambda_plus);
  if (p) validate_density(*p);
  if (cutoffs.empty()) throw std::invalid_argument("front: need at least one cutoff");
  for (Site l : cutoffs) {
    if (l < 0 || l > outer) throw std::invalid_argument("front: cutoffs must lie in [0, outer]");
  }
  if (window < 0) throw std::invalid_argument("front: window must be >= 0");
  if (!(horizon > 0.0)) throw std::invalid_argument("front: horizon must be > 0");
  if (!(sample_dt > 0.0) || sample_dt > horizon) throw std::invalid_argument("front: bad sample_dt");
  if (reps < 1) throw std::invalid_argument("front: reps must be >= 1");
}

FrontResult exp_front_speed(const FrontParams& params) {
  params.validate();
  const ModelParams model = ModelParams::from_lambda_plus(params.lambda_plus);
  const double p = params.p.value_or(model.p_star());
  const Window window{-params.outer, params.window};
  const std::size_t nc = params.cutoffs.size();

  FrontResult result;
  result.cutoffs = params.cutoffs;
  const auto samples = static_cast<std::size_t>(std::floor(params.horizon / params.sample_dt + 1e-9));
  for (std::size_t k = 1; k <= samples; ++k) result.times.push_back(static_cast<double>(k) * params.sample_dt);
  result.agreement.assign(nc, std::vector<double>(samples, 0.0));
  std::vector<std::vector<double>> slopes(nc);

  const BoundaryPolicy outer_policy = BoundaryPolicy::cutoff(-params.outer);
  for (int rep = 0; rep < params.reps; ++rep) {
    const std::uint64_t seed = params.seed + static_cast<std::uint64_t>(rep);
    SpinConfig outer = sample_bernoulli(p, window, SiteUniforms(seed, kTagBernoulli));
    std::vector<SpinConfig> inner(nc, outer);
    std::vector<BoundaryPolicy> policies;
    for (Site l : params.cutoffs) policies.push_back(BoundaryPolicy::cutoff(-l));
    std::vector<double> first_breach(nc, std::numeric_limits<double>::infinity());
    std::vector<std::vector<double>> displacement(nc);

    EventStream stream(seed, window);
    for (std::size_t k = 0; k < samples; ++k) {
      const double t = result.times[k];
      while (stream.peek_time() < t) {
        const Event e = stream.next_event();
        const EventOutcome a = step(outer, e, outer_policy, model.lambda_plus());
        for (std::size_t i = 0; i < nc; ++i) {
          const EventOutcome b = step(inner[i], e, policies[i], model.lambda_plus());
          if (first_breach[i] <= e.time || !(a.acted() || b.acted())) continue;
          auto hit = [&](Site x) { return x >= 0 && differs(inner[i], outer, x); };
          if (hit(e.site) || (a.kind == EventOutcome::Kind::Exchange && hit(a.partner)) ||
              (b.kind == EventOutcome::Kind::Exchange && hit(b.partner))) {
            first_breach[i] = e.time;
          }
        }
      }
      for (std::size_t i = 0; i < nc; ++i) {
        const auto front = rightmost_difference(inner[i], outer);
        result.trace.push_back({rep, params.cutoffs[i], t, front});
        displacement[i].push_back(front ? static_cast<double>(*front + params.cutoffs[i]) : 0.0);
        if (first_breach[i] > t) result.agreement[i][k] += 1.0;
      }
    }
    // Per-rep speed: slope of the front displacement over the last 3/4 of the run.
    for (std::size_t i = 0; i < nc; ++i) {
      std::vector<double> xs, ys;
      for (std::size_t k = 0; k < samples; ++k) {
        if (result.times[k] >= 0.25 * params.horizon) {
          xs.push_back(result.times[k]);
          ys.push_back(displacement[i][k]);
        }
      }
      slopes[i].push_back(xs.size() >= 2 ? fit_line(xs, ys).slope : kNaN);
    }
  }
  for (std::size_t i = 0; i < nc; ++i) {
    for (double& a : result.agreement[i]) a /= static_cast<double>(params.reps);
    result.speed.push_back(
        make_report("front_speed_L" + std::to_string(params.cutoffs[i]), mean_se(slopes[i]), std::nullopt));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Current

CurrentParams CurrentParams::from_json(const json& j) {
  check_keys(j, {"lambda_plus", "p", "horizon", "buffer", "front_speed", "safety", "guard", "right",
                 "reps", "batches", "seed"},
             "current");
  CurrentParams p;
  read(j, "lambda_plus", p.lambda_plus);
  read(j, "p", p.p);
  read(j, "horizon", p.horizon);
  read_buffer(j, p.buffer);
  read(j, "reps", p.reps);
  read(j, "batches", p.batches);
  read_seed(j, p.seed);
  p.validate();
  return p;
}

void CurrentParams::validate() const {
  validate_lambda(lambda_plus);
  if (p) validate_density(*p);
  if (!(horizon > 0.0)) throw std::invalid_argument("current: horizon must be > 0");
  validate_buffer(buffer);
  if (buffer.right < 2) throw std::invalid_argument("current: right must be >= 2");
  if (reps < 1) throw std::invalid_argument("current: reps must be >= 1");
  if (batches < 2) throw std::invalid_argument("current: batches must be >= 2");
}

CurrentResult exp_current(const CurrentParams& params) {
  params.validate();
  const ModelParams model = ModelParams::from_lambda_plus(params.lambda_plus);
  CurrentResult result;
  result.p = params.p.value_or(model.p_star());
  const double p = result.p;
  const ResolvedBuffer rb = resolve_buffer(params.buffer, params.lambda_plus, p, params.horizon, params.seed);
  result.buffer = rb.buffer;
  result.front_speed = rb.speed;

  const std::size_t nb = params.batches;
  const double dt = params.horizon / static_cast<double>(nb);
  std::vector<double> rate_plus, rate_minus, rate_net;     // per valid rep
  std::vector<double> batch_plus, batch_minus, batch_net;  // single-rep batch series

  for (int rep = 0; rep < params.reps; ++rep) {
    const std::uint64_t seed = params.seed + static_cast<std::uint64_t>(rep);
    GuardedRun run(p, rb.buffer, params.buffer, params.buffer.right, seed, params.lambda_plus);
    EventStream stream(seed, run.window());
    CrossingCurrent current(1);
    std::vector<CurrentBatch> rows;
    for (std::size_t b = 1; b <= nb && !run.breached(); ++b) {
      const double t_end = b == nb ? params.horizon : static_cast<double>(b) * dt;
      while (stream.peek_time() < t_end) {
        current.on_outcome(run.step(stream.next_event()), run.config());
      }
      rows.push_back({rep, t_end, current.plus(), current.minus()});
    }
    if (run.breached()) {
      ++result.flagged;
      continue;
    }
    result.batches.insert(result.batches.end(), rows.begin(), rows.end());
    rate_plus.push_back(static_cast<double>(current.plus()) / params.horizon);
    rate_minus.push_back(static_cast<double>(current.minus()) / params.horizon);
    rate_net.push_back(static_cast<double>(current.net()) / params.horizon);
    if (params.reps == 1) {
      std::uint64_t prev_p = 0, prev_m = 0;
      for (const auto& r : rows) {
        batch_plus.push_back(static_cast<double>(r.h_plus - prev_p) / dt);
        batch_minus.push_back(static_cast<double>(r.h_minus - prev_m) / dt);
        batch_net.push_back((static_cast<double>(r.h_plus - prev_p) -
                             static_cast<double>(r.h_minus - prev_m)) / dt);
        prev_p = r.h_plus;
        prev_m = r.h_minus;
      }
    }
  }

  const double ref_plus = model.lambda_plus() * p / (1.0 - p);
  const double ref_minus = model.lambda_minus() * (1.0 - p) / p;
  auto estimate = [&](const std::vector<double>& per_rep, const std::vector<double>& batch) {
    if (per_rep.empty()) return MeanSe{};
    if (params.reps == 1) return batch_means(batch, nb);
    return mean_se(per_rep);
  };
  result.j_plus = make_report("j_plus", estimate(rate_plus, batch_plus), ref_plus, result.flagged);
  result.j_minus = make_report("j_minus", estimate(rate_minus, batch_minus), ref_minus, result.flagged);
  result.drift = make_report("k_drift", estimate(rate_net, batch_net), ref_plus - ref_minus, result.flagged);
  return result;
}

// ---------------------------------------------------------------------------
// Profile

ProfileParams ProfileParams::from_json(const json& j) {
  check_keys(j, {"lambda_plus", "m", "burn_in", "horizon", "sample_dt", "batches", "seed"}, "profile");
  ProfileParams p;
  read(j, "lambda_plus", p.lambda_plus);
  read(j, "m", p.m);
  read(j, "burn_in", p.burn_in);
  read(j, "horizon", p.horizon);
  read(j, "sample_dt", p.sample_dt);
  read(j, "batches", p.batches);
  read_seed(j, p.seed);
  p.validate();
  return p;
}

void ProfileParams::validate() const {
  validate_lambda(lambda_plus);
  if (m < 8) throw std::invalid_argument("profile: m must be >= 8");
  if (burn_in && *burn_in < 2.0 * m) throw std::invalid_argument("profile: burn_in must be >= 2M");
  if (!(horizon > 0.0) || !(sample_dt > 0.0)) throw std::invalid_argument("profile: bad horizon or sample_dt");
  if (batches < 2) throw std::invalid_argument("profile: batches must be >= 2");
  if (horizon / sample_dt < static_cast<double>(batches)) {
    throw std::invalid_argument("profile: fewer samples than batches");
  }
}

ProfileResult exp_profile(const ProfileParams& params) {
  params.validate();
  const ModelParams model = ModelParams::from_lambda_plus(params.lambda_plus);
  const int m = params.m;
  const double burn = params.burn_in.value_or(2.0 * m);
  const Window window{1, m};
  SpinConfig cfg = sample_bernoulli(model.p_star(), window, SiteUniforms(params.seed, kTagBernoulli));
  EventStream stream(params.seed, window);
  const BoundaryPolicy policy = BoundaryPolicy::none();
  run(cfg, stream, policy, model.lambda_plus(), burn);

  const std::size_t nb = params.batches;
  const auto total = static_cast<std::size_t>(std::floor(params.horizon / params.sample_dt + 1e-9));
  const std::size_t per_batch = total / nb;
  const std::size_t samples = per_batch * nb;
  const auto mm = static_cast<std::size_t>(m);
  const Site bulk_lo = m / 4;
  const Site bulk_hi = 3 * m / 4;

  std::vector<double> batch_site(nb * mm, 0.0);
  std::vector<double> h_sum(mm, 0.0), h_sq(mm, 0.0);
  std::vector<double> bulk_series;
  bulk_series.reserve(samples);
  std::vector<int> spins(mm);

  for (std::size_t k = 1; k <= samples; ++k) {
    const double target = burn + static_cast<double>(k) * params.sample_dt;
    while (stream.peek_time() < target) step(cfg, stream.next_event(), policy, model.lambda_plus());
    const std::size_t b = (k - 1) / per_batch;
    double h = 0.0;
    double bulk = 0.0;
    for (std::size_t i = 0; i < mm; ++i) {
      const int s = cfg.spin(static_cast<Site>(i) + 1);
      batch_site[b * mm + i] += s;
      h += s;
      h_sum[i] += h;
      h_sq[i] += h * h;
      const Site x = static_cast<Site>(i) + 1;
      if (x >= bulk_lo && x <= bulk_hi) bulk += s;
    }
    bulk_series.push_back(bulk / static_cast<double>(bulk_hi - bulk_lo + 1));
  }

  ProfileResult result;
  result.density.resize(mm);
  result.density_se.resize(mm);
  std::vector<double> averages(nb);
  for (std::size_t i = 0; i < mm; ++i) {
    for (std::size_t b = 0; b < nb; ++b) averages[b] = batch_site[b * mm + i] / static_cast<double>(per_batch);
    const MeanSe e = mean_se(averages);
    result.density[i] = e.mean;
    result.density_se[i] = e.se;
  }
  result.height_variance.resize(mm);
  const auto ns = static_cast<double>(samples);
  for (std::size_t i = 0; i < mm; ++i) {
    const double mean = h_sum[i] / ns;
    result.height_variance[i] = h_sq[i] / ns - mean * mean;
  }
  result.bulk = make_report("bulk_density", batch_means(bulk_series, nb), 2.0 * model.p_star() - 1.0);

  std::vector<double> lx, ly;
  const double lo = std::max(1.0, m / 8.0);
  const double hi = m / 2.0;
  for (int k = 0; k < 24; ++k) {
    const auto l = static_cast<std::size_t>(std::lround(lo * std::pow(hi / lo, k / 23.0)));
    if (!lx.empty() && std::log(static_cast<double>(l)) == lx.back()) continue;
    const double v = result.height_variance[l - 1];
    if (v <= 0.0) continue;
    lx.push_back(std::log(static_cast<double>(l)));
    ly.push_back(std::log(v));
  }
  if (lx.size() >= 2) result.variance_fit = fit_line(lx, ly);
  return result;
}

// ---------------------------------------------------------------------------
// Correlation

CorrelationParams CorrelationParams::from_json(const json& j) {
  check_keys(j, {"lambda_plus", "p", "f_support", "g_support", "t_min", "t_max", "points",
                 "variance_times", "sites", "reps", "buffer", "front_speed", "safety", "guard",
                 "right", "seed"},
             "correlation");
  CorrelationParams p;
  read(j, "lambda_plus", p.lambda_plus);
  read(j, "p", p.p);
  read(j, "f_support", p.f_support);
  read(j, "g_support", p.g_support);
  read(j, "t_min", p.t_min);
  read(j, "t_max", p.t_max);
  read(j, "points", p.points);
  read(j, "variance_times", p.variance_times);
  read(j, "sites", p.sites);
  read(j, "reps", p.reps);
  read_buffer(j, p.buffer);
  read_seed(j, p.seed);
  p.validate();
  return p;
}

void CorrelationParams::validate() const {
  validate_lambda(lambda_plus);
  validate_density(p);
  for (const auto* support : {&f_support, &g_support}) {
    if (support->empty() || support->size() > 12) {
      throw std::invalid_argument("correlation: supports must have 1..12 sites");
    }
    for (Site s : *support) {
      if (s < 0 || s > 64) throw std::invalid_argument("correlation: support offsets must lie in [0, 64]");
    }
  }
  if (!(t_min > 0.0) || !(t_max > t_min)) throw std::invalid_argument("correlation: need 0 < t_min < t_max");
  if (points < 2) throw std::invalid_argument("correlation: points must be >= 2");
  for (double t : variance_times) {
    if (!(t > 0.0)) throw std::invalid_argument("correlation: variance_times must be > 0");
  }
  if (sites < 1) throw std::invalid_argument("correlation: sites must be >= 1");
  if (reps < 2) throw std::invalid_argument("correlation: reps must be >= 2");
  validate_buffer(buffer);
}

CorrelationResult exp_correlation(const CorrelationParams& params) {
  params.validate();
  const double p = params.p;

  auto normalized = [&](std::vector<Site> support) {
    LocalFunction f = LocalFunction::monomial(std::move(support));
    const double mean = f.bernoulli_mean(p);
    const double sd = std::sqrt(f.bernoulli_variance(p));
    if (!(sd > 0.0)) throw std::invalid_argument("correlation: function has zero variance");
    for (double& v : f.table) v = (v - mean) / sd;
    return f;
  };
  const LocalFunction f = normalized(params.f_support);
  const LocalFunction g = normalized(params.g_support);

  CorrelationResult result;
  result.times.push_back(0.0);
  for (int k = 0; k < params.points; ++k) {
    result.times.push_back(params.t_min * std::pow(params.t_max / params.t_min,
                                                   static_cast<double>(k) / (params.points - 1)));
  }
  std::vector<double> checkpoints = result.times;
  checkpoints.insert(checkpoints.end(), params.variance_times.begin(), params.variance_times.end());
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  const double horizon = checkpoints.back();

  const ResolvedBuffer rb = resolve_buffer(params.buffer, params.lambda_plus, p, horizon, params.seed);
  result.buffer = rb.buffer;
  Site max_offset = 0;
  for (Site s : params.f_support) max_offset = std::max(max_offset, s);
  for (Site s : params.g_support) max_offset = std::max(max_offset, s);
  const Site right = params.sites - 1 + max_offset + params.buffer.right;

  const std::size_t nt = result.times.size();
  const std::size_t nv = params.variance_times.size();
  std::vector<std::vector<double>> corr(nt);
  std::vector<std::vector<double>> kvals(nv);

  for (int rep = 0; rep < params.reps; ++rep) {
    const std::uint64_t seed = params.seed + static_cast<std::uint64_t>(rep);
    GuardedRun run(p, rb.buffer, params.buffer, right, seed, params.lambda_plus);
    EventStream stream(seed, run.window());
    CrossingCurrent current(1);
    std::vector<double> f0(static_cast<std::size_t>(params.sites));
    for (Site x = 0; x < params.sites; ++x) f0[static_cast<std::size_t>(x)] = eval_shifted(f, run.config(), x);
    std::vector<double> c_rep(nt), k_rep(nv);
    for (double t : checkpoints) {
      while (stream.peek_time() < t && !run.breached()) {
        current.on_outcome(run.step(stream.next_event()), run.config());
      }
      if (run.breached()) break;
      for (std::size_t k = 0; k < nt; ++k) {
        if (result.times[k] != t) continue;
        double acc = 0.0;
        for (Site x = 0; x < params.sites; ++x) {
          acc += f0[static_cast<std::size_t>(x)] * eval_shifted(g, run.config(), x);
        }
        c_rep[k] = acc / static_cast<double>(params.sites);
      }
      for (std::size_t k = 0; k < nv; ++k) {
        if (params.variance_times[k] == t) k_rep[k] = static_cast<double>(current.net());
      }
    }
    if (run.breached()) {
      ++result.flagged;
      continue;
    }
    for (std::size_t k = 0; k < nt; ++k) corr[k].push_back(c_rep[k]);
    for (std::size_t k = 0; k < nv; ++k) kvals[k].push_back(k_rep[k]);
  }

  std::vector<double> xs, ys, ws;
  for (std::size_t k = 0; k < nt; ++k) {
    std::ostringstream name;
    name << "corr_t" << result.times[k];
    const MeanSe e = mean_se(corr[k]);
    result.correlation.push_back(make_report(name.str(), e, std::nullopt, result.flagged));
    if (result.times[k] > 0.0 && e.n > 1 && e.se > 0.0 && e.mean > 3.0 * e.se) {
      xs.push_back(result.times[k]);
      ys.push_back(std::log(e.mean));
      ws.push_back((e.mean / e.se) * (e.mean / e.se));
    }
  }
  MeanSe rate{kNaN, 0.0, 0};
  if (xs.size() >= 2) {
    const LineFit fit = fit_line(xs, ys, ws);
    rate = {-fit.slope, fit.slope_se, corr.front().size()};
  }
  result.decay_rate = make_report("decay_rate", rate, std::nullopt, result.flagged);

  for (std::size_t k = 0; k < nv; ++k) {
    const auto& v = kvals[k];
    const double t = params.variance_times[k];
    MeanSe e{kNaN, 0.0, v.size()};
    if (v.size() >= 2) {
      const double var = sample_variance(v);
      const MeanSe mu = mean_se(v);
      double m4 = 0.0;
      for (double x : v) m4 += std::pow(x - mu.mean, 4);
      m4 /= static_cast<double>(v.size());
      const double var_se = std::sqrt(std::max(0.0, m4 - var * var) / static_cast<double>(v.size()));
      e = {var / t, var_se / t, v.size()};
    }
    std::ostringstream name;
    name << "k_variance_over_t_t" << t;
    result.k_variance.push_back(make_report(name.str(), e, std::nullopt, result.flagged));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Stationarity

StationarityParams StationarityParams::from_json(const json& j) {
  check_keys(j, {"lambda_plus", "p", "window", "times", "reps", "buffer", "front_speed", "safety",
                 "guard", "right", "seed"},
             "stationarity");
  StationarityParams p;
  read(j, "lambda_plus", p.lambda_plus);
  read(j, "p", p.p);
  read(j, "window", p.window);
  read(j, "times", p.times);
  read(j, "reps", p.reps);
  read_buffer(j, p.buffer);
  read_seed(j, p.seed);
  p.validate();
  return p;
}

void StationarityParams::validate() const {
  validate_lambda(lambda_plus);
  validate_density(p);
  if (window < 1) throw std::invalid_argument("stationarity: window must be >= 1");
  if (times.empty()) throw std::invalid_argument("stationarity: need at least one time");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0 || (i > 0 && times[i] <= times[i - 1])) {
      throw std::invalid_argument("stationarity: times must be nonnegative and increasing");
    }
  }
  if (reps < 2) throw std::invalid_argument("stationarity: reps must be >= 2");
  validate_buffer(buffer);
}

StationarityResult exp_stationarity(const StationarityParams& params) {
  params.validate();
  const double p = params.p;
  StationarityResult result;
  const double horizon = std::max(params.times.back(), 1.0);
  const ResolvedBuffer rb = resolve_buffer(params.buffer, params.lambda_plus, p, horizon, params.seed);
  result.buffer = rb.buffer;
  const Site right = params.window + params.buffer.right;
  const std::size_t nt = params.times.size();
  const auto nx = static_cast<std::size_t>(params.window) + 1;

  // sums[t][x]: single-site and pair products, first and second moments.
  std::vector<double> s1(nt * nx, 0.0), s2(nt * nx, 0.0), p1(nt * nx, 0.0), p2(nt * nx, 0.0);
  std::size_t valid = 0;
  for (int rep = 0; rep < params.reps; ++rep) {
    const std::uint64_t seed = params.seed + static_cast<std::uint64_t>(rep);
    GuardedRun run(p, rb.buffer, params.buffer, right, seed, params.lambda_plus);
    EventStream stream(seed, run.window());
    std::vector<double> r1(nt * nx), rp(nt * nx);
    for (std::size_t k = 0; k < nt && !run.breached(); ++k) {
      while (stream.peek_time() < params.times[k] && !run.breached()) run.step(stream.next_event());
      for (std::size_t i = 0; i < nx; ++i) {
        const auto x = static_cast<Site>(i);
        r1[k * nx + i] = run.config().spin(x);
        if (i + 1 < nx) rp[k * nx + i] = run.config().spin(x) * run.config().spin(x + 1);
      }
    }
    if (run.breached()) {
      ++result.flagged;
      continue;
    }
    ++valid;
    for (std::size_t j = 0; j < nt * nx; ++j) {
      s1[j] += r1[j];
      s2[j] += r1[j] * r1[j];
      p1[j] += rp[j];
      p2[j] += rp[j] * rp[j];
    }
  }

  auto from_sums = [&](double sum, double sq) {
    MeanSe e;
    e.n = valid;
    if (valid == 0) return MeanSe{kNaN, 0.0, 0};
    const auto n = static_cast<double>(valid);
    e.mean = sum / n;
    if (valid > 1) e.se = std::sqrt(std::max(0.0, (sq - n * e.mean * e.mean) / (n - 1.0)) / n);
    return e;
  };
  const double m = 2.0 * p - 1.0;
  for (std::size_t k = 0; k < nt; ++k) {
    for (std::size_t i = 0; i < nx; ++i) {
      StationarityRow row;
      row.t = params.times[k];
      row.x = static_cast<Site>(i);
      const std::size_t j = k * nx + i;
      row.mean = make_report("mean", from_sums(s1[j], s2[j]), m, result.flagged);
      if (row.mean.within() != true) ++result.outside_band;
      if (i + 1 < nx) {
        row.pair = make_report("pair", from_sums(p1[j], p2[j]), m * m, result.flagged);
        if (row.pair.within() != true) ++result.outside_band;
      }
      result.rows.push_back(row);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// CSV writers

void write_mixing_csv(std::ostream& out, const MixingResult& result) {
  out << std::setprecision(17) << "rep,tau_couple,tau_chain\n";
  for (std::size_t i = 0; i < result.tau_couple.size(); ++i) {
    out << i << ',' << result.tau_couple[i] << ',' << result.tau_chain[i] << '\n';
  }
}

void write_front_trace_csv(std::ostream& out, const FrontResult& result) {
  out << std::setprecision(17) << "rep,L,t,X\n";
  for (const auto& s : result.trace) {
    out << s.rep << ',' << s.cutoff << ',' << s.t << ',';
    if (s.front) out << *s.front;
    out << '\n';
  }
}

void write_front_agreement_csv(std::ostream& out, const FrontResult& result) {
  out << std::setprecision(17) << "L,t,agreement\n";
  for (std::size_t i = 0; i < result.cutoffs.size(); ++i) {
    for (std::size_t k = 0; k < result.times.size(); ++k) {
      out << result.cutoffs[i] << ',' << result.times[k] << ',' << result.agreement[i][k] << '\n';
    }
  }
}

void write_current_csv(std::ostream& out, const CurrentResult& result) {
  out << std::setprecision(17) << "rep,t,H_plus,H_minus,K\n";
  for (const auto& b : result.batches) {
    out << b.rep << ',' << b.t << ',' << b.h_plus << ',' << b.h_minus << ','
        << static_cast<std::int64_t>(b.h_plus) - static_cast<std::int64_t>(b.h_minus) << '\n';
  }
}

void write_profile_csv(std::ostream& out, const ProfileResult& result) {
  out << std::setprecision(17) << "x,density,se\n";
  for (std::size_t i = 0; i < result.density.size(); ++i) {
    out << i + 1 << ',' << result.density[i] << ',' << result.density_se[i] << '\n';
  }
}

void write_height_variance_csv(std::ostream& out, const ProfileResult& result) {
  out << std::setprecision(17) << "L,variance\n";
  for (std::size_t i = 0; i < result.height_variance.size(); ++i) {
    out << i + 1 << ',' << result.height_variance[i] << '\n';
  }
}

void write_correlation_csv(std::ostream& out, const CorrelationResult& result) {
  out << std::setprecision(17) << "t,correlation,se,replications\n";
  for (std::size_t k = 0; k < result.times.size(); ++k) {
    const auto& r = result.correlation[k];
    out << result.times[k] << ',';
    write_double(out, r.estimate);
    out << ',' << r.se << ',' << r.replications << '\n';
  }
}

void write_stationarity_csv(std::ostream& out, const StationarityResult& result) {
  out << std::setprecision(17) << "t,x,mean,mean_se,pair,pair_se\n";
  for (const auto& row : result.rows) {
    out << row.t << ',' << row.x << ',';
    write_double(out, row.mean.estimate);
    out << ',' << row.mean.se << ',';
    if (row.pair.replications > 0) {
      write_double(out, row.pair.estimate);
      out << ',' << row.pair.se;
    } else {
      out << ',';
    }
    out << '\n';
  }
}

}  // namespace toom
