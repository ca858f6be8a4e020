#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "v2vprop/error.hpp"
#include "v2vprop/rng.hpp"
#include "v2vprop/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace v2vprop;
using namespace v2vprop::stats;

namespace {

// Normal equations X'X b = X'y by Gauss-Jordan with partial pivoting.
std::vector<double> normal_equations(const std::vector<std::vector<double>>& x, const std::vector<double>& y)
{
    const std::size_t p = x[0].size();
    std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
    for (std::size_t r = 0; r < x.size(); ++r)
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < p; ++j)
                a[i][j] += x[r][i] * x[r][j];
            a[i][p] += x[r][i] * y[r];
        }
    for (std::size_t c = 0; c < p; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < p; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c]))
                piv = r;
        std::swap(a[c], a[piv]);
        for (std::size_t r = 0; r < p; ++r) {
            if (r == c)
                continue;
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k <= p; ++k)
                a[r][k] -= f * a[c][k];
        }
    }
    std::vector<double> b(p);
    for (std::size_t i = 0; i < p; ++i)
        b[i] = a[i][p] / a[i][i];
    return b;
}

double kolmogorov_series(double lambda)
{
    double s = 0.0;
    for (int k = 1; k <= 200; ++k)
        s += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * lambda * lambda);
    return s;
}

std::vector<double> gaussian(std::size_t n, double mu, double sigma, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v)
        x = mu + sigma * rng.normal();
    return v;
}

std::vector<double> uniforms(std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v)
        x = rng.uniform();
    return v;
}

double uniform_cdf(double x)
{
    return std::clamp(x, 0.0, 1.0);
}

}  // namespace

TEST_CASE("lsq exact line through the origin")
{
    Eigen::MatrixXd x(4, 1);
    x << 1, 2, 3, 4;
    Eigen::VectorXd y(4);
    y << 2, 4, 6, 8;
    const auto r = lsq_fit(x, y);
    CHECK(r.coef(0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(r.rms == doctest::Approx(0.0));
}

TEST_CASE("lsq intercept-only design gives the constant")
{
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(5, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(5, -3.25);
    CHECK(lsq_fit(x, y).coef(0) == doctest::Approx(-3.25).epsilon(1e-14));
}

TEST_CASE("lsq matches the normal-equations oracle")
{
    Rng rng(99);
    const int n = 200, p = 4;
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    std::vector<std::vector<double>> xs(n, std::vector<double>(p));
    std::vector<double> ys(n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < p; ++c)
            xs[r][c] = x(r, c) = c == 0 ? 1.0 : rng.normal();
        ys[r] = y(r) = 1.5 - 2.0 * x(r, 1) + 0.3 * x(r, 2) + 0.01 * x(r, 3) + 0.5 * rng.normal();
    }
    const auto fit = lsq_fit(x, y);
    const auto oracle = normal_equations(xs, ys);
    for (int c = 0; c < p; ++c)
        CHECK(fit.coef(c) == doctest::Approx(oracle[c]).epsilon(1e-9));

    // residuals orthogonal to every regressor
    for (int c = 0; c < p; ++c) {
        const double dot = x.col(c).dot(fit.residuals);
        CHECK(std::abs(dot) < 1e-8 * x.col(c).norm() * std::max(1.0, fit.residuals.norm()));
    }
    CHECK(fit.rms == doctest::Approx(std::sqrt(fit.residuals.squaredNorm() / n)));
}

TEST_CASE("lsq rejects rank-deficient and underdetermined designs")
{
    Eigen::MatrixXd x(3, 2);
    x << 1, 2, 2, 4, 3, 6;
    Eigen::VectorXd y(3);
    y << 1, 2, 3;
    CHECK_THROWS_AS(lsq_fit(x, y), SingularError);
    Eigen::MatrixXd wide(1, 2);
    wide << 1, 2;
    CHECK_THROWS_AS(lsq_fit(wide, Eigen::VectorXd::Ones(1)), ParameterError);
}

TEST_CASE("mode of identical values")
{
    const std::vector<double> v(37, -81.3);
    const auto m = histogram_mode(v, 1.0);
    CHECK(m.mode == doctest::Approx(-81.3));
    CHECK(m.unimodal);
}

TEST_CASE("two separated clusters are not unimodal")
{
    auto v = gaussian(2000, -90.0, 1.0, 1);
    const auto w = gaussian(2000, -60.0, 1.0, 2);
    v.insert(v.end(), w.begin(), w.end());
    const auto m = histogram_mode(v, 1.0);
    CHECK_FALSE(m.unimodal);
    CHECK(m.peaks >= 2);
}

TEST_CASE("mode of a Gaussian sample")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto v = gaussian(10000, -80.0, 5.0, seed);
        const auto m = histogram_mode(v, 1.0);
        CHECK(std::abs(m.mode + 80.0) <= 1.0);
        CHECK(m.unimodal);
    }
}

TEST_CASE("mode shifts with values and origin")
{
    const auto v = gaussian(3000, -75.0, 4.0, 7);
    const auto base = histogram_mode(v, 1.0, 0.3);
    for (double c : {-17.25, 3.5, 101.0}) {
        std::vector<double> s(v);
        for (auto& x : s)
            x += c;
        const auto shifted = histogram_mode(s, 1.0, 0.3 + c);
        CHECK(shifted.mode == doctest::Approx(base.mode + c).epsilon(1e-9));
        CHECK(shifted.unimodal == base.unimodal);
    }
}

TEST_CASE("mode of an empty sample is an error")
{
    CHECK_THROWS(histogram_mode(std::vector<double>{}, 1.0));
}

TEST_CASE("histogram bins")
{
    const std::vector<double> v{0.1, 0.9, 1.0, 2.5, -0.5};
    const auto h = make_histogram(v, 1.0);
    CHECK(h.first_index == -1);
    REQUIRE(h.counts.size() == 4);
    CHECK(h.counts[0] == 1);
    CHECK(h.counts[1] == 2);
    CHECK(h.counts[2] == 1);
    CHECK(h.counts[3] == 1);
    CHECK(h.total() == 5);
    CHECK(h.bin_lo(1) == 0.0);
}

TEST_CASE("acf basics")
{
    const auto u = uniforms(500, 3);
    CHECK(autocorr(u, 5)[0] == doctest::Approx(1.0));

    std::vector<double> alt(100);
    for (std::size_t i = 0; i < alt.size(); ++i)
        alt[i] = i % 2 ? -1.0 : 1.0;
    CHECK(autocorr(alt, 1)[1] == doctest::Approx(-99.0 / 100.0));

    CHECK_THROWS_AS(autocorr(std::vector<double>(50, 2.0), 5), DomainError);
    CHECK_THROWS_AS(autocorr(u, 500), ParameterError);
}

TEST_CASE("acf of an iid sequence is small")
{
    const auto u = uniforms(10000, 21);
    const auto acf = autocorr(u, 20);
    for (std::size_t k = 1; k <= 20; ++k)
        CHECK(std::abs(acf[k]) < 0.05);
    CHECK(max_abs_acf(u, 20) < 0.05);
}

TEST_CASE("kolmogorov survival matches the alternating series")
{
    for (double l : {0.3, 0.6, 0.9, 1.0, 1.17, 1.19, 1.36, 1.63, 2.5})
        CHECK(kolmogorov_survival(l) == doctest::Approx(kolmogorov_series(l)).epsilon(1e-10));
    CHECK(kolmogorov_survival(0.0) == 1.0);
    CHECK(kolmogorov_survival(0.05) == doctest::Approx(1.0));
}

TEST_CASE("ks on exact quantiles")
{
    const std::size_t n = 40;
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i)
        q[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    CHECK(ks_test(q, uniform_cdf).d <= 0.5 / static_cast<double>(n) + 1e-15);
}

TEST_CASE("ks calibration on matched uniforms")
{
    int pass = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed)
        if (ks_test(uniforms(1000, 1000 + seed), uniform_cdf).p > 0.01)
            ++pass;
    CHECK(pass >= 95);
}

TEST_CASE("ks rejects a gross mismatch")
{
    const auto u = uniforms(1000, 8);
    CHECK(ks_test(u, [](double x) { return normal_cdf(x); }).p < 0.001);
}

TEST_CASE("ks statistic invariant under a monotone transform")
{
    const auto u = uniforms(300, 17);
    std::vector<double> t(u.size());
    std::transform(u.begin(), u.end(), t.begin(), [](double x) { return std::exp(3.0 * x); });
    const auto a = ks_test(u, uniform_cdf);
    const auto b = ks_test(t, [](double y) { return uniform_cdf(std::log(y) / 3.0); });
    CHECK(a.d == doctest::Approx(b.d).epsilon(1e-12));
}

TEST_CASE("ks needs eight samples")
{
    CHECK_THROWS(ks_test(std::vector<double>{0.1, 0.2, 0.3}, uniform_cdf));
}

TEST_CASE("nakagami moments")
{
    // unit mean; population variance 1, then 0.5
    CHECK(fit_nakagami_power(std::vector<double>{1e-300, 2.0}) == doctest::Approx(1.0));
    CHECK(fit_nakagami_power(std::vector<double>{1e-300, 1e-300, 2.0, 2.0}) == doctest::Approx(1.0));
    const double s = std::sqrt(0.5);
    CHECK(fit_nakagami_power(std::vector<double>{1 - s, 1 + s}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(fit_nakagami_power(std::vector<double>(10, 1.0)), DomainError);
    CHECK_THROWS(fit_nakagami_power(std::vector<double>{1.5, 1.7}));
    CHECK_THROWS(fit_nakagami_power(std::vector<double>{-0.5, 2.5}));
}

TEST_CASE("nakagami of exponential samples")
{
    Rng rng(4);
    std::vector<double> x(10000);
    for (auto& v : x)
        v = rng.exponential();
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    for (auto& v : x)
        v /= mean;
    const double m = fit_nakagami_power(x);
    CHECK(m >= 0.95);
    CHECK(m <= 1.05);

    // scale-free
    std::vector<double> y(x);
    for (auto& v : y)
        v *= 1.07;
    CHECK(fit_nakagami_power(y) == doctest::Approx(m).epsilon(1e-12));
}

TEST_CASE("nakagami cdf is the gamma cdf")
{
    CHECK(nakagami_power_cdf(1.0, 1.0) == doctest::Approx(1.0 - std::exp(-1.0)));
    CHECK(nakagami_power_cdf(0.5, 2.0) == doctest::Approx(1.0 - std::exp(-1.0) * 2.0));
    CHECK(nakagami_power_cdf(0.0, 3.0) == 0.0);
}

TEST_CASE("normal quantile inverts the cdf")
{
    for (double p : {1e-6, 0.025, 0.3, 0.5, 0.9, 0.999})
        CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-9));
}

TEST_CASE("qq pairs")
{
    const auto two = qq_gaussian(std::vector<double>{1.0, -1.0});
    REQUIRE(two.size() == 2);
    CHECK(two[0].empirical == -1.0);
    CHECK(two[1].empirical == 1.0);
    CHECK(two[0].theoretical == doctest::Approx(-two[1].theoretical));

    const auto g = gaussian(10000, 3.0, 2.0, 12);
    const auto pairs = qq_gaussian(g);
    double worst = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        // the extreme order statistics have O(sigma) spread on their own
        if (i < 10 || i + 10 >= pairs.size())
            continue;
        worst = std::max(worst, std::abs(pairs[i].empirical - pairs[i].theoretical));
    }
    CHECK(worst < 0.15 * 2.0);
}

TEST_CASE("qq tails of a heavy-tailed sample")
{
    Rng rng(31);
    const double nu = 3.0;
    std::vector<double> t(5000);
    for (auto& v : t)
        v = rng.normal() / std::sqrt(rng.gamma(nu / 2.0, 2.0) / nu);
    const auto pairs = qq_gaussian(t);
    const auto& top = pairs.back();
    const auto& bottom = pairs.front();
    CHECK(top.empirical > top.theoretical);
    CHECK(bottom.empirical < bottom.theoretical);
}

TEST_CASE("family names")
{
    CHECK(std::string(to_string(Family::nakagami_power)) == "nakagami_power");
    CHECK(family_from_string("gaussian") == Family::gaussian);
    CHECK_THROWS(family_from_string("weibull"));
}
