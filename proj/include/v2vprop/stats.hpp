#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace v2vprop::stats {

struct LsqResult {
    Eigen::VectorXd coef;
    Eigen::VectorXd residuals;  // targets - design * coef
    double rms = 0.0;           // sqrt(mean(residual^2)), target units
};

// Ordinary least squares. Throws ParameterError when rows < cols and
// SingularError when the design is not of full column rank.
LsqResult lsq_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& targets);

double mean(std::span<const double> x);
// Sample standard deviation (n - 1).
double stddev(std::span<const double> x);
// Root mean square of x.
double rms(std::span<const double> x);

struct Histogram {
    double origin = 0.0;
    double bin_width = 1.0;
    std::int64_t first_index = 0;  // bin k covers [origin + k w, origin + (k + 1) w)
    std::vector<std::size_t> counts;

    double bin_lo(std::size_t i) const;
    double bin_center(std::size_t i) const { return bin_lo(i) + 0.5 * bin_width; }
    std::size_t total() const;
};

Histogram make_histogram(std::span<const double> values, double bin_width, double origin = 0.0);

struct ModeResult {
    double mode = 0.0;
    bool unimodal = true;
    std::size_t peaks = 1;  // significant maxima after smoothing
};

// Histogram mode. The coarse peak is the maximum of the 3-bin moving average
// (ties -> lowest bin); it is refined by a Gaussian (log-quadratic) fit over
// the half-maximum window. When that fit is not possible the mode is the mean
// of the values in the most populated bin. `unimodal` counts maxima of the
// smoothed histogram whose prominence exceeds the counting noise.
ModeResult histogram_mode(std::span<const double> values, double bin_width, double origin = 0.0);

// Biased ACF for lags 0..max_lag (normalised by N and the sample variance).
std::vector<double> autocorr(std::span<const double> seq, std::size_t max_lag);

// Largest |ACF(k)| for 1 <= k <= max_lag.
double max_abs_acf(std::span<const double> seq, std::size_t max_lag);

struct KsResult {
    double d = 0.0;
    double p = 1.0;
};

// P(K > lambda) for the limiting Kolmogorov distribution.
double kolmogorov_survival(double lambda);

// One-sample KS test against a model CDF; p from the asymptotic distribution
// of sqrt(n) D. Needs at least 8 samples.
KsResult ks_test(std::span<const double> samples, const std::function<double(double)>& cdf);

enum class Family { nakagami_power, gaussian };

const char* to_string(Family f);
Family family_from_string(const std::string& s);

struct DistributionFit {
    Family family = Family::nakagami_power;
    double m = 1.0;           // nakagami shape (power ~ Gamma(m, 1/m))
    double mu = 1.0;          // gaussian mean
    double sigma = 1.0;       // gaussian std
    double ks_d = 0.0;
    double ks_p = 1.0;
};

// Method of moments on unit-mean power samples: m = mean^2 / variance.
double fit_nakagami_power(std::span<const double> samples);

double normal_cdf(double x, double mu = 0.0, double sigma = 1.0);
double normal_quantile(double p);
// CDF of the power of a unit-mean Nakagami-m amplitude (Gamma(m, 1/m)).
double nakagami_power_cdf(double x, double m);

struct QqPair {
    double theoretical = 0.0;
    double empirical = 0.0;
};

// Pairs at plotting positions (i - 0.5)/n against a Gaussian with the
// sample mean and standard deviation.
std::vector<QqPair> qq_gaussian(std::span<const double> samples);

}  // namespace v2vprop::stats
