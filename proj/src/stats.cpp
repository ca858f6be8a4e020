#include "v2vprop/stats.hpp"

#include "v2vprop/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace v2vprop::stats {

LsqResult lsq_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& targets)
{
    if (design.rows() != targets.size())
        throw ParameterError("lsq_fit: design has " + std::to_string(design.rows()) + " rows but " +
                             std::to_string(targets.size()) + " targets");
    if (design.cols() == 0 || design.rows() < design.cols())
        throw ParameterError("lsq_fit: need rows >= columns > 0");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    // Relative pivot threshold scaled by problem size, as LAPACK's xGELSY does.
    qr.setThreshold(static_cast<double>(std::max(design.rows(), design.cols())) *
                    std::numeric_limits<double>::epsilon() * 16.0);
    if (qr.rank() < design.cols())
        throw SingularError("lsq_fit: design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                            " < " + std::to_string(design.cols()) + ")");

    LsqResult out;
    out.coef = qr.solve(targets);
    out.residuals = targets - design * out.coef;
    out.rms = std::sqrt(out.residuals.squaredNorm() / static_cast<double>(targets.size()));
    return out;
}

double mean(std::span<const double> x)
{
    if (x.empty())
        throw ParameterError("mean of empty sequence");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x)
{
    if (x.size() < 2)
        throw ParameterError("stddev needs at least two values");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x)
        ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double rms(std::span<const double> x)
{
    if (x.empty())
        throw ParameterError("rms of empty sequence");
    double ss = 0.0;
    for (double v : x)
        ss += v * v;
    return std::sqrt(ss / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------- histogram

double Histogram::bin_lo(std::size_t i) const
{
    return origin + static_cast<double>(first_index + static_cast<std::int64_t>(i)) * bin_width;
}

std::size_t Histogram::total() const
{
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

Histogram make_histogram(std::span<const double> values, double bin_width, double origin)
{
    if (values.empty())
        throw ParameterError("histogram of empty sequence");
    if (!(bin_width > 0.0))
        throw ParameterError("histogram bin width must be > 0");
    std::vector<std::int64_t> idx(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        idx[i] = static_cast<std::int64_t>(std::floor((values[i] - origin) / bin_width));
    const auto [lo, hi] = std::minmax_element(idx.begin(), idx.end());

    Histogram h;
    h.origin = origin;
    h.bin_width = bin_width;
    h.first_index = *lo;
    h.counts.assign(static_cast<std::size_t>(*hi - *lo + 1), 0);
    for (auto k : idx)
        ++h.counts[static_cast<std::size_t>(k - *lo)];
    return h;
}

namespace {

// 3-bin sums (three times the moving average), zero padded.
std::vector<double> smooth3(const std::vector<std::size_t>& c)
{
    const std::size_t n = c.size();
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t sum = c[i];
        if (i > 0)
            sum += c[i - 1];
        if (i + 1 < n)
            sum += c[i + 1];
        s[i] = static_cast<double>(sum) / 3.0;
    }
    return s;
}

std::size_t count_significant_peaks(const std::vector<double>& s)
{
    const std::size_t n = s.size();
    auto at = [&](std::ptrdiff_t i) {
        return (i < 0 || i >= static_cast<std::ptrdiff_t>(n)) ? 0.0 : s[static_cast<std::size_t>(i)];
    };
    std::size_t peaks = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && s[j + 1] == s[i])
            ++j;
        const double h = s[i];
        const auto a = static_cast<std::ptrdiff_t>(i);
        const auto b = static_cast<std::ptrdiff_t>(j);
        if (h > 0.0 && at(a - 1) < h && at(b + 1) < h) {
            // Lowest point on each side before higher ground (or the edge).
            double left_min = h;
            for (std::ptrdiff_t k = a - 1; k >= -1; --k) {
                const double v = at(k);
                if (v > h)
                    break;
                left_min = std::min(left_min, v);
            }
            double right_min = h;
            for (std::ptrdiff_t k = b + 1; k <= static_cast<std::ptrdiff_t>(n); ++k) {
                const double v = at(k);
                if (v > h)
                    break;
                right_min = std::min(right_min, v);
            }
            const double prominence = h - std::max(left_min, right_min);
            const double noise = std::max(1.0, 2.0 * std::sqrt(h));
            if (prominence > noise)
                ++peaks;
        }
        i = j + 1;
    }
    return std::max<std::size_t>(peaks, 1);
}

}  // namespace

ModeResult histogram_mode(std::span<const double> values, double bin_width, double origin)
{
    if (values.empty())
        throw ParameterError("histogram_mode: empty input");
    const Histogram h = make_histogram(values, bin_width, origin);
    const auto& c = h.counts;
    const auto s = smooth3(c);

    ModeResult out;
    out.peaks = count_significant_peaks(s);
    out.unimodal = out.peaks == 1;

    const auto peak = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    const double half = 0.5 * s[peak];
    std::size_t lo = peak;
    while (lo > 0 && s[lo - 1] >= half)
        --lo;
    std::size_t hi = peak;
    while (hi + 1 < s.size() && s[hi + 1] >= half)
        ++hi;
    // A bin at the edge of the data (e.g. against a censoring cut) may be only
    // partly filled; keep it out of the fit.
    while (lo < peak && (lo == 0 || c[lo - 1] == 0))
        ++lo;
    while (hi > peak && (hi + 1 == c.size() || c[hi + 1] == 0))
        --hi;

    const bool all_filled = std::all_of(c.begin() + static_cast<std::ptrdiff_t>(lo),
                                        c.begin() + static_cast<std::ptrdiff_t>(hi) + 1,
                                        [](std::size_t v) { return v > 0; });
    if (hi - lo + 1 >= 3 && all_filled) {
        const std::size_t n = hi - lo + 1;
        const double x0 = h.bin_center(peak);
        Eigen::MatrixXd design(n, 3);
        Eigen::VectorXd target(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double cnt = static_cast<double>(c[lo + k]);
            const double w = std::sqrt(cnt);
            const double x = (h.bin_center(lo + k) - x0) / bin_width;
            design(k, 0) = w;
            design(k, 1) = w * x;
            design(k, 2) = w * x * x;
            target(k) = w * std::log(cnt);
        }
        const auto fit = lsq_fit(design, target);
        if (fit.coef(2) < 0.0) {
            const double vertex = x0 - 0.5 * fit.coef(1) / fit.coef(2) * bin_width;
            if (vertex >= h.bin_lo(lo) && vertex <= h.bin_lo(hi) + bin_width) {
                out.mode = vertex;
                return out;
            }
        }
    }

    // Fallback: mean of the values in the most populated raw bin.
    const auto top = static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
    const auto top_index = h.first_index + static_cast<std::int64_t>(top);
    double sum = 0.0;
    std::size_t n = 0;
    for (double v : values) {
        if (static_cast<std::int64_t>(std::floor((v - origin) / bin_width)) == top_index) {
            sum += v;
            ++n;
        }
    }
    out.mode = sum / static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------------- ACF

std::vector<double> autocorr(std::span<const double> seq, std::size_t max_lag)
{
    const std::size_t n = seq.size();
    if (n <= max_lag)
        throw ParameterError("autocorr: sequence length must exceed max_lag");
    const double m = mean(seq);
    double c0 = 0.0;
    for (double v : seq)
        c0 += (v - m) * (v - m);
    if (!(c0 > 0.0))
        throw DomainError("autocorr: zero-variance input");

    std::vector<double> acf(max_lag + 1);
    for (std::size_t k = 0; k <= max_lag; ++k) {
        double ck = 0.0;
        for (std::size_t t = 0; t + k < n; ++t)
            ck += (seq[t] - m) * (seq[t + k] - m);
        acf[k] = ck / c0;
    }
    return acf;
}

double max_abs_acf(std::span<const double> seq, std::size_t max_lag)
{
    const auto acf = autocorr(seq, max_lag);
    double worst = 0.0;
    for (std::size_t k = 1; k < acf.size(); ++k)
        worst = std::max(worst, std::abs(acf[k]));
    return worst;
}

// ----------------------------------------------------------------------- KS

double kolmogorov_survival(double lambda)
{
    if (lambda <= 0.0)
        return 1.0;
    constexpr double pi = std::numbers::pi;
    if (lambda < 1.18) {
        // P(K <= lambda) = sqrt(2 pi)/lambda * sum exp(-(2k-1)^2 pi^2 / (8 lambda^2))
        double sum = 0.0;
        for (int k = 1; k <= 20; ++k) {
            const double t = (2.0 * k - 1.0) * pi / lambda;
            sum += std::exp(-t * t / 8.0);
        }
        return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * sum, 0.0, 1.0);
    }
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-300)
            break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> samples, const std::function<double(double)>& cdf)
{
    if (samples.size() < 8)
        throw ParameterError("ks_test: need at least 8 samples");
    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return {d, kolmogorov_survival(std::sqrt(n) * d)};
}

const char* to_string(Family f)
{
    return f == Family::nakagami_power ? "nakagami_power" : "gaussian";
}

Family family_from_string(const std::string& s)
{
    if (s == "nakagami_power" || s == "nakagami")
        return Family::nakagami_power;
    if (s == "gaussian")
        return Family::gaussian;
    throw ParameterError("unknown distribution family '" + s + "'");
}

double fit_nakagami_power(std::span<const double> samples)
{
    if (samples.empty())
        throw ParameterError("fit_nakagami_power: empty input");
    for (double v : samples)
        if (!(v > 0.0))
            throw DomainError("fit_nakagami_power: samples must be positive");
    const double m1 = mean(samples);
    if (m1 < 0.9 || m1 > 1.1)
        throw ParameterError("fit_nakagami_power: samples must have unit mean (got " + std::to_string(m1) + ")");
    double var = 0.0;
    for (double v : samples)
        var += (v - m1) * (v - m1);
    var /= static_cast<double>(samples.size());
    if (!(var > 0.0))
        throw DomainError("fit_nakagami_power: zero variance");
    return m1 * m1 / var;
}

double normal_cdf(double x, double mu, double sigma)
{
    return 0.5 * std::erfc(-(x - mu) / (sigma * std::numbers::sqrt2));
}

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0))
        throw DomainError("normal_quantile: p must be in (0, 1)");
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double nakagami_power_cdf(double x, double m)
{
    if (x <= 0.0)
        return 0.0;
    return boost::math::gamma_p(m, m * x);
}

std::vector<QqPair> qq_gaussian(std::span<const double> samples)
{
    if (samples.size() < 2)
        throw ParameterError("qq_gaussian: need at least two samples");
    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());
    const double mu = mean(x);
    const double sd = stddev(x);
    const double n = static_cast<double>(x.size());
    std::vector<QqPair> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = (static_cast<double>(i) + 0.5) / n;
        out[i] = {mu + sd * normal_quantile(p), x[i]};
    }
    return out;
}

}  // namespace v2vprop::stats
