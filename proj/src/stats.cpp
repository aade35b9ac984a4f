#include "stemper/stats.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <limits>

#include <unsupported/Eigen/FFT>

#include "stemper/errors.hpp"

namespace stemper::stats {

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 64;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double mean(std::span<const double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  return pairwise_sum(values) / static_cast<double>(values.size());
}

double variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mu = mean(values);
  std::vector<double> sq(values.size());
  std::transform(values.begin(), values.end(), sq.begin(),
                 [mu](double v) { return (v - mu) * (v - mu); });
  return pairwise_sum(sq) / static_cast<double>(values.size() - 1);
}

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  std::vector<double> shifted(values.size());
  std::transform(values.begin(), values.end(), shifted.begin(),
                 [hi](double v) { return std::exp(v - hi); });
  return hi + std::log(pairwise_sum(shifted));
}

std::vector<double> softmax(std::span<const double> log_values) {
  const double lse = log_sum_exp(log_values);
  std::vector<double> out(log_values.size());
  std::transform(log_values.begin(), log_values.end(), out.begin(),
                 [lse](double v) { return std::exp(v - lse); });
  return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw InvalidArgument("ks_statistic: empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    const double di = static_cast<double>(i);
    d = std::max({d, (di + 1.0) / n - f, f - di / n});
  }
  return d;
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.0) {
    // Jacobi-theta form of the CDF converges fast for small lambda.
    double cdf = 0.0;
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    for (int k = 1; k <= 50; ++k) {
      const double term = std::exp(-(2.0 * k - 1.0) * (2.0 * k - 1.0) * c);
      cdf += term;
      if (term < 1e-20) break;
    }
    cdf *= std::sqrt(2.0 * std::numbers::pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-20) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_p_value(double statistic, std::size_t n) {
  const double rn = std::sqrt(static_cast<double>(n));
  return kolmogorov_survival((rn + 0.12 + 0.11 / rn) * statistic);
}

double integrated_autocorrelation_time(std::span<const double> series, double window_factor) {
  const std::size_t n = series.size();
  if (n < 4) return 1.0;
  const double mu = mean(series);
  // Autocovariance for every lag at once via a zero-padded FFT; a direct
  // sum per lag is quadratic when the chain barely decorrelates.
  std::size_t len = 1;
  while (len < 2 * n) len <<= 1;
  std::vector<double> padded(len, 0.0);
  std::transform(series.begin(), series.end(), padded.begin(), [mu](double v) { return v - mu; });
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& z : freq) z = std::norm(z);
  std::vector<double> acov;
  fft.inv(acov, freq);
  const double c0 = acov[0];
  if (!(c0 > 0.0)) return 1.0;
  double tau = 1.0;
  for (std::size_t lag = 1; lag < n / 2; ++lag) {
    tau += 2.0 * acov[lag] / c0;
    if (static_cast<double>(lag) >= window_factor * tau) break;
  }
  return std::max(tau, 1.0);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace stemper::stats
