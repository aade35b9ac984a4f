#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace stemper::stats {

/// Pairwise (cascade) summation; error grows as O(log n) instead of O(n).
double pairwise_sum(std::span<const double> values);
double mean(std::span<const double> values);
/// Unbiased sample variance. Returns 0 for fewer than two values.
double variance(std::span<const double> values);

/// log(sum(exp(v))) with max-shift. -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> values);
/// Softmax computed in log space.
std::vector<double> softmax(std::span<const double> log_values);

double normal_cdf(double z);

/// Two-sided one-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

/// P(K > lambda) for the asymptotic Kolmogorov distribution.
double kolmogorov_survival(double lambda);

/// Asymptotic p-value of a KS statistic from n samples (Stephens' small-n
/// correction to the argument).
double ks_p_value(double statistic, std::size_t n);

/// Integrated autocorrelation time 1 + 2 sum rho_k with Sokal's automatic
/// window (smallest M with M >= c * tau(M)). Always >= 1.
double integrated_autocorrelation_time(std::span<const double> series, double window_factor = 5.0);

/// Empirical quantile with linear interpolation, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace stemper::stats
