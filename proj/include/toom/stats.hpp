#ifndef TOOM_STATS_HPP
#define TOOM_STATS_HPP

#include <cstddef>
#include <span>

namespace toom {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

/// Sample mean with the plain standard error s / sqrt(n). SE is 0 for n < 2.
MeanSe mean_se(std::span<const double> values);

/// Batch-means estimate for a stationary time series: the series is cut into
/// `batches` equal consecutive blocks (a remainder at the end is dropped) and
/// the block averages are treated as independent.
MeanSe batch_means(std::span<const double> series, std::size_t batches = 30);

/// Unbiased sample variance.
double sample_variance(std::span<const double> values);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double intercept_se = 0.0;
};

/// Least squares line y = intercept + slope * x. With weights (1 / var(y_i))
/// the standard errors come from the weights; without, from the residuals.
LineFit fit_line(std::span<const double> x, std::span<const double> y,
                 std::span<const double> weights = {});

}  // namespace toom

#endif  // TOOM_STATS_HPP
