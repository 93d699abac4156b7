#include "toom/stats.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace toom {

MeanSe mean_se(std::span<const double> values) {
  MeanSe out;
  out.n = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) out.se = std::sqrt(sample_variance(values) / static_cast<double>(values.size()));
  return out;
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size() - 1);
}

MeanSe batch_means(std::span<const double> series, std::size_t batches) {
  if (batches < 2) throw std::invalid_argument("batch_means: need at least two batches");
  const std::size_t len = series.size() / batches;
  if (len == 0) throw std::invalid_argument("batch_means: series shorter than batch count");
  std::vector<double> averages(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) sum += series[b * len + i];
    averages[b] = sum / static_cast<double>(len);
  }
  return mean_se(averages);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y,
                 std::span<const double> weights) {
  const std::size_t n = x.size();
  if (y.size() != n || (!weights.empty() && weights.size() != n)) {
    throw std::invalid_argument("fit_line: size mismatch");
  }
  if (n < 2) throw std::invalid_argument("fit_line: need at least two points");
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
    sxx += w * x[i] * x[i];
    sxy += w * x[i] * y[i];
  }
  const double det = sw * sxx - sx * sx;
  if (!(det > 0.0)) throw std::invalid_argument("fit_line: degenerate abscissae");
  LineFit fit;
  fit.slope = (sw * sxy - sx * sy) / det;
  fit.intercept = (sxx * sy - sx * sxy) / det;
  double scale = 1.0;
  if (weights.empty()) {
    if (n < 3) return fit;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - fit.intercept - fit.slope * x[i];
      rss += r * r;
    }
    scale = rss / static_cast<double>(n - 2);
  }
  fit.slope_se = std::sqrt(scale * sw / det);
  fit.intercept_se = std::sqrt(scale * sxx / det);
  return fit;
}

}  // namespace toom
