// Command-line runner for the experiments and exact computations.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "toom/exact.hpp"
#include "toom/experiments.hpp"
#include "toom/randomness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace toom;

namespace {

struct Outputs {
  fs::path dir;
  RunManifest manifest;
  std::vector<std::pair<std::string, std::function<void(std::ostream&)>>> tables;
  std::vector<EstimateReport> reports;
  json summary = json::object();
};

void write_all(Outputs& o) {
  fs::create_directories(o.dir);
  for (const auto& [name, body] : o.tables) {
    std::ofstream out(o.dir / (name + ".csv"));
    if (!out) throw std::runtime_error("cannot write " + (o.dir / (name + ".csv")).string());
    write_manifest_header(out, o.manifest);
    body(out);
  }
  if (!o.reports.empty()) {
    std::ofstream out(o.dir / "reports.csv");
    write_manifest_header(out, o.manifest);
    write_reports_csv(out, o.reports);
  }
  json m = manifest_json(o.manifest);
  m["summary"] = o.summary;
  json reports = json::array();
  for (const auto& r : o.reports) reports.push_back(r.to_json());
  m["reports"] = reports;
  std::ofstream(o.dir / "manifest.json") << std::setw(2) << m << '\n';
}

void print_reports(const std::vector<EstimateReport>& reports) {
  for (const auto& r : reports) {
    std::cout << std::setprecision(6) << r.name << " = " << r.estimate << " +/- " << r.se;
    if (r.reference) {
      const auto w = r.within();
      std::cout << "  (reference " << *r.reference << ", " << (*w ? "within" : "outside") << " 3 SE)";
    }
    if (r.flagged > 0) std::cout << "  [" << r.flagged << " runs flagged]";
    std::cout << '\n';
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void run_exact(const json& params, Outputs& o) {
  const int n = get_or(params, "n", 8);
  const double lp = get_or(params, "lambda_plus", 0.5);
  const double step = get_or(params, "grid_step", 0.1);
  const double t_max = get_or(params, "t_max", 2.0 * n);
  const ModelParams model = ModelParams::from_lambda_plus(lp);
  const GeneratorMatrix q = build_generator(n, model);
  const StationaryDistribution st = stationary(q);
  o.summary["residual"] = st.residual;
  if (n >= 2) {
    const StationaryDistribution prev = stationary(build_generator(n - 1, model));
    o.summary["tower_tv"] = total_variation(restrict_marginal(st.pi, n, n - 1), prev.pi);
  }
  if (lp == 0.5) o.summary["flip_tv"] = total_variation(st.pi, flipped(st.pi, n));
  o.tables.emplace_back("stationary", [pi = st.pi, n](std::ostream& out) { write_stationary_csv(out, pi, n); });
  std::vector<double> var;
  for (int l = 1; l <= n; ++l) var.push_back(height_variance(st.pi, n, l));
  o.tables.emplace_back("height_variance", [var](std::ostream& out) {
    out << std::setprecision(17) << "L,variance\n";
    for (std::size_t i = 0; i < var.size(); ++i) out << i + 1 << ',' << var[i] << '\n';
  });
  if (n <= 12) {
    std::vector<double> grid;
    for (int k = 0; k * step <= t_max + 1e-12; ++k) grid.push_back(k * step);
    const auto d = tv_mixing_curve(q, st.pi, grid);
    const double tmix = mixing_time_from_curve(grid, d);
    o.summary["tau_mix"] = tmix;
    o.tables.emplace_back("tv_curve", [grid, d](std::ostream& out) { write_tv_curve_csv(out, grid, d); });
  }
}

void run_genexp(const json& params, Outputs& o) {
  const auto support = get_or(params, "support", std::vector<Site>{0, 1, 2, 3});
  const auto ps = get_or(params, "p", std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
  const auto lps = get_or(params, "lambda_plus", std::vector<double>{0.2, 0.5, 0.8});
  struct Row {
    std::string subset;
    double p, lp, value;
  };
  std::vector<Row> rows;
  double worst = 0.0;
  const std::size_t subsets = std::size_t{1} << support.size();
  for (double lp : lps) {
    for (double p : ps) {
      for (std::size_t m = 0; m < subsets; ++m) {
        std::vector<Site> s;
        std::string label;
        for (std::size_t i = 0; i < support.size(); ++i) {
          if ((m >> i) & 1u) {
            s.push_back(support[i]);
            label += (label.empty() ? "" : " ") + std::to_string(support[i]);
          }
        }
        const double v = bernoulli_generator_expectation(LocalFunction::monomial(s), p,
                                                         ModelParams::from_lambda_plus(lp));
        worst = std::max(worst, std::abs(v));
        rows.push_back({label, p, lp, v});
      }
    }
  }
  o.summary["max_abs"] = worst;
  o.tables.emplace_back("generator_expectation", [rows](std::ostream& out) {
    out << std::setprecision(17) << "support,p,lambda_plus,value\n";
    for (const auto& r : rows) out << '"' << r.subset << "\"," << r.p << ',' << r.lp << ',' << r.value << '\n';
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toom interface simulator and exact solver"};
  app.require_subcommand(1);
  std::string config_path;
  std::string seed_text;
  std::string out_dir;
  const std::vector<std::string> names = {"mixing", "current", "front", "profile",
                                          "correlation", "stationarity", "exact", "genexp"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed_text, "master seed (decimal or 0x hex); overrides the config");
    sub->add_option("--out", out_dir, "output directory; overrides the config");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();

  try {
    ExperimentConfig cfg;
    cfg.experiment = name;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      std::stringstream buf;
      buf << in.rdbuf();
      cfg = ExperimentConfig::parse(buf.str());
      if (cfg.experiment != name) {
        throw std::invalid_argument("config is for '" + cfg.experiment + "', not '" + name + "'");
      }
    } else {
      cfg.text = R"({"experiment": ")" + name + R"("})";
    }
    if (!seed_text.empty()) cfg.params["seed"] = parse_seed(seed_text);
    Outputs o;
    o.dir = !out_dir.empty() ? fs::path(out_dir) : !cfg.output.empty() ? fs::path(cfg.output) : fs::path("out") / name;
    o.manifest.experiment = name;
    o.manifest.config_text = cfg.text;
    o.manifest.seed = 1;
    if (cfg.params.contains("seed")) {
      const auto& v = cfg.params.at("seed");
      o.manifest.seed = v.is_string() ? parse_seed(v.get<std::string>()) : v.get<std::uint64_t>();
    }
    if (!seed_text.empty()) o.manifest.config_text += "\n(seed overridden: " + seed_text + ")";

    const auto start = std::chrono::steady_clock::now();
    if (name == "mixing") {
      auto r = exp_mixing(MixingParams::from_json(cfg.params));
      o.reports = {r.couple_mean, r.chain_mean};
      o.summary["dominated"] = r.dominated;
      o.summary["reps"] = r.tau_couple.size();
      o.summary["tau_couple_median"] = r.couple_median;
      if (r.exact_tmix) o.summary["exact_tau_mix"] = *r.exact_tmix;
      o.tables.emplace_back("coupling_times", [r](std::ostream& out) { write_mixing_csv(out, r); });
      if (!r.tv.empty()) {
        o.tables.emplace_back("tv_curve", [r](std::ostream& out) { write_tv_curve_csv(out, r.grid, r.tv); });
      }
    } else if (name == "current") {
      auto r = exp_current(CurrentParams::from_json(cfg.params));
      o.reports = {r.j_plus, r.j_minus, r.drift};
      o.summary["p"] = r.p;
      o.summary["buffer"] = r.buffer;
      o.summary["front_speed"] = r.front_speed;
      o.summary["flagged"] = r.flagged;
      o.tables.emplace_back("current", [r](std::ostream& out) { write_current_csv(out, r); });
    } else if (name == "front") {
      auto r = exp_front_speed(FrontParams::from_json(cfg.params));
      o.reports = r.speed;
      o.tables.emplace_back("front_trace", [r](std::ostream& out) { write_front_trace_csv(out, r); });
      o.tables.emplace_back("agreement", [r](std::ostream& out) { write_front_agreement_csv(out, r); });
    } else if (name == "profile") {
      auto r = exp_profile(ProfileParams::from_json(cfg.params));
      o.reports = {r.bulk};
      o.summary["variance_slope"] = r.variance_fit.slope;
      o.summary["variance_slope_se"] = r.variance_fit.slope_se;
      o.tables.emplace_back("density", [r](std::ostream& out) { write_profile_csv(out, r); });
      o.tables.emplace_back("height_variance", [r](std::ostream& out) { write_height_variance_csv(out, r); });
    } else if (name == "correlation") {
      auto r = exp_correlation(CorrelationParams::from_json(cfg.params));
      o.reports = r.correlation;
      o.reports.push_back(r.decay_rate);
      o.reports.insert(o.reports.end(), r.k_variance.begin(), r.k_variance.end());
      o.summary["buffer"] = r.buffer;
      o.summary["flagged"] = r.flagged;
      o.tables.emplace_back("correlation", [r](std::ostream& out) { write_correlation_csv(out, r); });
    } else if (name == "stationarity") {
      auto r = exp_stationarity(StationarityParams::from_json(cfg.params));
      o.summary["outside_band"] = r.outside_band;
      o.summary["comparisons"] = 2 * r.rows.size();
      o.summary["buffer"] = r.buffer;
      o.summary["flagged"] = r.flagged;
      o.tables.emplace_back("stationarity", [r](std::ostream& out) { write_stationarity_csv(out, r); });
    } else if (name == "exact") {
      run_exact(cfg.params, o);
    } else {
      run_genexp(cfg.params, o);
    }
    o.manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_all(o);
    print_reports(o.reports);
    std::cout << o.summary.dump() << '\n' << "wrote " << o.dir.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
