#ifndef TOOM_EXPERIMENTS_HPP
#define TOOM_EXPERIMENTS_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "toom/core.hpp"
#include "toom/stats.hpp"

namespace toom {

inline constexpr std::string_view kVersion = "0.1.0";

/// A parsed experiment config. The text form is a JSON object:
///   {"experiment": "current", "output": "runs/current", "params": {...}}
/// `text` keeps the original bytes so they can be echoed into output headers.
struct ExperimentConfig {
  std::string experiment;
  nlohmann::json params = nlohmann::json::object();
  std::string output;
  std::string text;

  static ExperimentConfig parse(std::string_view text);
};

/// A point estimate with its standard error and, when one exists, the
/// analytic value it should match.
struct EstimateReport {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  std::size_t replications = 0;
  std::optional<double> reference;
  std::size_t flagged = 0;  ///< runs excluded for a buffer breach

  /// |estimate - reference| <= k * se, or nullopt without a reference.
  [[nodiscard]] std::optional<bool> within(double k = 3.0) const;
  [[nodiscard]] nlohmann::json to_json() const;
  static EstimateReport from_json(const nlohmann::json& j);
};

/// CSV: name,estimate,se,replications,reference,flagged,within_3se
void write_reports_csv(std::ostream& out, std::span<const EstimateReport> reports);

struct RunManifest {
  std::string experiment;
  std::string config_text;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::string version{kVersion};
};

/// Writes the manifest as '#'-prefixed lines, config echoed line by line.
void write_manifest_header(std::ostream& out, const RunManifest& manifest);
[[nodiscard]] nlohmann::json manifest_json(const RunManifest& manifest);

// ---------------------------------------------------------------------------
// Buffers for full-line approximations

/// Full-line runs use the window [-(buffer + guard), right]. The main process
/// freezes sites left of -buffer; a guard copy freezes left of -(buffer + guard).
/// A run is flagged as breached when the two ever differ at a site >= 0.
struct BufferSpec {
  Site buffer = 0;          ///< 0 = size from the front speed
  double front_speed = 0.0; ///< 0 = calibrate
  double safety = 1.25;
  Site guard = 64;
  Site right = 64;
};

/// Fitted front speed for (lambda_plus, p) from a short front experiment.
MeanSe calibrate_front_speed(double lambda_plus, double p, std::uint64_t seed);

/// ceil(safety * speed * horizon) + 128.
Site required_buffer(double speed, double safety, double horizon);

// ---------------------------------------------------------------------------
// Mixing

struct MixingParams {
  int n = 8;
  double lambda_plus = 0.5;
  int reps = 100;
  std::uint64_t seed = 1;
  int random_states = 64;   ///< used when N > 12
  double grid_step = 0.1;   ///< exact TV grid, N <= 10

  static MixingParams from_json(const nlohmann::json& j);
  void validate() const;
};

struct MixingResult {
  std::vector<double> tau_couple;
  std::vector<double> tau_chain;  ///< sequential site 1..N arrival chain
  std::size_t dominated = 0;      ///< reps with tau_couple <= tau_chain
  EstimateReport couple_mean;
  EstimateReport chain_mean;      ///< reference N
  double couple_median = 0.0;
  std::optional<double> exact_tmix;
  std::vector<double> grid;
  std::vector<double> tv;
};

MixingResult exp_mixing(const MixingParams& params);

// ---------------------------------------------------------------------------
// Front speed

struct FrontParams {
  double lambda_plus = 0.5;
  std::optional<double> p;        ///< default p*
  std::vector<Site> cutoffs{400}; ///< values of L
  Site outer = 464;               ///< L'
  Site window = 64;               ///< agreement checked on [0, window]
  double horizon = 100.0;
  double sample_dt = 1.0;
  int reps = 8;
  std::uint64_t seed = 1;

  static FrontParams from_json(const nlohmann::json& j);
  void validate() const;
};

struct FrontSample {
  int rep = 0;
  Site cutoff = 0;
  double t = 0.0;
  std::optional<Site> front;  ///< max D between sigma^L and sigma^L'
};

struct FrontResult {
  std::vector<double> times;
  std::vector<Site> cutoffs;
  /// agreement[i][k]: fraction of reps with sigma^L = sigma^L' on [0, window]
  /// throughout [0, times[k]], for L = cutoffs[i].
  std::vector<std::vector<double>> agreement;
  std::vector<EstimateReport> speed;  ///< one per cutoff
  std::vector<FrontSample> trace;
};

FrontResult exp_front_speed(const FrontParams& params);

// ---------------------------------------------------------------------------
// Current at site 1

struct CurrentParams {
  double lambda_plus = 0.5;
  std::optional<double> p;
  double horizon = 1000.0;
  BufferSpec buffer;
  int reps = 1;
  std::size_t batches = 30;
  std::uint64_t seed = 1;

  static CurrentParams from_json(const nlohmann::json& j);
  void validate() const;
};

struct CurrentBatch {
  int rep = 0;
  double t = 0.0;
  std::uint64_t h_plus = 0;  ///< cumulative
  std::uint64_t h_minus = 0;
};

struct CurrentResult {
  double p = 0.0;
  Site buffer = 0;
  double front_speed = 0.0;
  std::size_t flagged = 0;
  EstimateReport j_plus;
  EstimateReport j_minus;
  EstimateReport drift;
  std::vector<CurrentBatch> batches;
};

CurrentResult exp_current(const CurrentParams& params);

// ---------------------------------------------------------------------------
// Half-line profile

struct ProfileParams {
  double lambda_plus = 0.5;
  int m = 2000;
  std::optional<double> burn_in;  ///< default 2M
  double horizon = 20000.0;
  double sample_dt = 1.0;
  std::size_t batches = 30;
  std::uint64_t seed = 1;

  static ProfileParams from_json(const nlohmann::json& j);
  void validate() const;
};

struct ProfileResult {
  std::vector<double> density;     ///< index x-1
  std::vector<double> density_se;
  std::vector<double> height_variance;  ///< index L-1
  EstimateReport bulk;             ///< reference 2p* - 1
  LineFit variance_fit;            ///< log Var vs log L on [M/8, M/2]; exploratory
};

ProfileResult exp_profile(const ProfileParams& params);

// ---------------------------------------------------------------------------
// Autocorrelation

struct CorrelationParams {
  double lambda_plus = 0.5;
  double p = 0.5;
  std::vector<Site> f_support{0};  ///< monomial, relative to the measurement site
  std::vector<Site> g_support{0};
  double t_min = 0.25;
  double t_max = 20.0;
  int points = 12;                 ///< geometric grid on [t_min, t_max], plus t = 0
  std::vector<double> variance_times{10.0, 100.0};
  Site sites = 128;                ///< measurement sites [0, sites - 1]
  int reps = 100;
  BufferSpec buffer;
  std::uint64_t seed = 1;

  static CorrelationParams from_json(const nlohmann::json& j);
  void validate() const;
};

struct CorrelationResult {
  std::vector<double> times;
  std::vector<EstimateReport> correlation;  ///< one per time
  EstimateReport decay_rate;                ///< -slope of log C(t), weighted fit
  std::vector<EstimateReport> k_variance;   ///< Var(K(t)) / t at variance_times
  Site buffer = 0;
  std::size_t flagged = 0;
};

CorrelationResult exp_correlation(const CorrelationParams& params);

// ---------------------------------------------------------------------------
// Stationarity of Ber_p

struct StationarityParams {
  double lambda_plus = 0.7;
  double p = 0.5;
  Site window = 16;                     ///< sites [0, window]
  std::vector<double> times{0.0, 1.0, 5.0, 25.0};
  int reps = 1000;
  BufferSpec buffer;
  std::uint64_t seed = 1;

  static StationarityParams from_json(const nlohmann::json& j);
  void validate() const;
};

struct StationarityRow {
  double t = 0.0;
  Site x = 0;
  EstimateReport mean;  ///< reference 2p - 1
  EstimateReport pair;  ///< sigma(x) sigma(x+1), reference (2p - 1)^2
};

struct StationarityResult {
  std::vector<StationarityRow> rows;
  std::size_t outside_band = 0;  ///< comparisons outside 3 SE
  Site buffer = 0;
  std::size_t flagged = 0;
};

StationarityResult exp_stationarity(const StationarityParams& params);

// ---------------------------------------------------------------------------
// CSV writers (bodies only; callers prepend the manifest header)

void write_mixing_csv(std::ostream& out, const MixingResult& result);
void write_front_trace_csv(std::ostream& out, const FrontResult& result);
void write_front_agreement_csv(std::ostream& out, const FrontResult& result);
void write_current_csv(std::ostream& out, const CurrentResult& result);
void write_profile_csv(std::ostream& out, const ProfileResult& result);
void write_height_variance_csv(std::ostream& out, const ProfileResult& result);
void write_correlation_csv(std::ostream& out, const CorrelationResult& result);
void write_stationarity_csv(std::ostream& out, const StationarityResult& result);

}  // namespace toom

#endif  // TOOM_EXPERIMENTS_HPP
