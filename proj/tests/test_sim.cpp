#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "v2vprop/error.hpp"
#include "v2vprop/model_io.hpp"
#include "v2vprop/sim.hpp"

#include <cmath>
#include <limits>
#include <sstream>

using namespace v2vprop;

namespace {

FadingModel rayleigh()
{
    FadingModel f;
    f.fit.family = stats::Family::nakagami_power;
    f.fit.m = 1.0;
    f.sigma_mp_db = fixtures::db_std_gamma(1.0);
    return f;
}

PacketLog manual_log(const std::vector<bool>& received, double rate = 10.0, double d = 100.0)
{
    PacketLog log;
    for (std::size_t i = 0; i < received.size(); ++i) {
        PacketRecord p;
        p.link_id = "a->b";
        p.seq_no = static_cast<std::int64_t>(i);
        p.timestamp = static_cast<double>(i) / rate;
        p.distance_m = d;
        p.rssi_dbm = -70.0;
        p.received = received[i];
        p.cause = received[i] ? LossCause::none : LossCause::noise;
        log.packets.push_back(p);
    }
    return log;
}

std::string csv_of(const PacketLog& log)
{
    std::ostringstream out;
    write_packet_log_csv(out, log);
    return out.str();
}

}  // namespace

TEST_CASE("no fading gives the median exactly")
{
    auto model = fixtures::trial_model();
    model.sigma_sh1_db = model.sigma_sh2_db = 0.0;
    FadingModel none;
    none.fit.m = std::numeric_limits<double>::infinity();
    LinkFadingState st;
    Rng rng(1);
    for (double d : {10.0, 55.5, 399.0, 400.0, 777.0})
        CHECK(sample_link_gain(model, &none, d, st, rng) == model.median_pl(d));
}

TEST_CASE("median is continuous across the breakpoint")
{
    auto model = fixtures::trial_model();
    model.sigma1_db = model.sigma2_db = 0.0;
    LinkFadingState st;
    Rng rng(2);
    const double below = sample_link_gain(model, nullptr, 400.0 - 1e-6, st, rng);
    const double above = sample_link_gain(model, nullptr, 400.0 + 1e-6, st, rng);
    CHECK(std::abs(below - above) < 0.01);
}

TEST_CASE("gain spread at a fixed distance adds in quadrature")
{
    auto model = fixtures::trial_model();
    model.sigma_sh1_db = model.sigma_sh2_db = 4.0;
    const auto fading = rayleigh();
    LinkFadingState st;
    st.decorrelation_m = 0.0;
    Rng rng(3);
    const int n = 100000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double pl = sample_link_gain(model, &fading, 250.0, st, rng);
        s += pl;
        ss += pl * pl;
    }
    const double sd = std::sqrt((ss - s * s / n) / (n - 1));
    const double oracle = std::hypot(4.0, fixtures::db_std_gamma(1.0));
    CHECK(std::abs(sd - oracle) < 0.15);
    // 10 log10 of unit exponential has mean -10 gamma_E / ln 10
    CHECK(s / n - model.median_pl(250.0) == doctest::Approx(-2.50682).epsilon(0.02));
}

TEST_CASE("distance outside the model range")
{
    const auto model = fixtures::trial_model();
    LinkFadingState st;
    Rng rng(4);
    CHECK_THROWS_AS(sample_link_gain(model, nullptr, 9.0, st, rng), ParameterError);
    CHECK_THROWS_AS(sample_link_gain(model, nullptr, 2500.0, st, rng, SimOptions{25.0, 2000.0}), ParameterError);
    CHECK_NOTHROW(sample_link_gain(model, nullptr, 2000.0, st, rng, SimOptions{25.0, 2000.0}));
}

TEST_CASE("shadow sigma selection")
{
    auto model = fixtures::trial_model();
    const auto fading = rayleigh();
    CHECK(shadow_sigma_at(model, nullptr, 100.0) == 5.25);
    // multipath spread exceeds the total, so nothing is left for shadowing
    CHECK(shadow_sigma_at(model, &fading, 100.0) == 0.0);
    model.sigma_sh2_db = 3.5;
    CHECK(shadow_sigma_at(model, &fading, 500.0) == 3.5);
}

TEST_CASE("shadow autocorrelation over travelled distance")
{
    auto model = fixtures::trial_model();
    model.sigma_sh1_db = model.sigma_sh2_db = 1.0;
    LinkFadingState st;
    st.decorrelation_m = 25.0;
    Rng rng(5);
    std::vector<double> u;
    // back and forth between 100 m and 900 m in 1 m steps
    double d = 100.0, step = 1.0;
    for (int i = 0; i < 200000; ++i) {
        sample_link_gain(model, nullptr, d, st, rng);
        u.push_back(st.shadow_unit);
        if (d + step > 900.0 || d + step < 100.0)
            step = -step;
        d += step;
    }
    const auto acf = stats::autocorr(u, 25);
    CHECK(std::abs(acf[25] - std::exp(-1.0)) < 0.05);
    CHECK(std::abs(acf[5] - std::exp(-0.2)) < 0.05);
}

TEST_CASE("huge transmit power loses nothing")
{
    PhyConfig phy;
    phy.tx_power_dbm = 300.0;
    const auto log = simulate_run(fixtures::trial_model(), nullptr, fixtures::linear_links(3, 10.0, 1500.0, 2.0), phy, 6);
    for (const auto& b : per_by_bin(log).bins)
        if (b.value)
            CHECK(*b.value == 0.0);
}

TEST_CASE("interference loss probability")
{
    auto phy = fixtures::open_phy();
    phy.interference_loss_prob = 0.3;
    const auto log = simulate_run(fixtures::trial_model(), nullptr, fixtures::static_links(10, 120.0, 10000), phy, 7);
    REQUIRE(log.packets.size() == 100000);
    std::size_t lost = 0;
    for (const auto& p : log.packets) {
        if (!p.received) {
            ++lost;
            CHECK(p.cause == LossCause::interference);
        }
    }
    CHECK(std::abs(static_cast<double>(lost) / 1e5 - 0.3) < 0.01);
}

TEST_CASE("fixed seed reproduces the log byte for byte")
{
    const auto model = fixtures::trial_model();
    const auto fading = rayleigh();
    const auto mob = fixtures::linear_links(4, 20.0, 1200.0, 1.5);
    PhyConfig phy;
    phy.interference_loss_prob = 0.05;
    const auto a = csv_of(simulate_run(model, &fading, mob, phy, 42));
    const auto b = csv_of(simulate_run(model, &fading, mob, phy, 42));
    const auto c = csv_of(simulate_run(model, &fading, mob, phy, 43));
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("packets follow the mobility trace")
{
    MobilityTrace mob;
    mob.links["x->y"] = {{10.0, 50.0}, {12.0, 70.0}, {14.0, 60.0}};
    const auto log = simulate_run(fixtures::trial_model(), nullptr, mob, fixtures::open_phy(), 8);
    REQUIRE(log.packets.size() == 41);
    CHECK(log.packets[0].timestamp == 10.0);
    CHECK(log.packets[10].distance_m == doctest::Approx(60.0));
    CHECK(log.packets[20].distance_m == doctest::Approx(70.0));
    CHECK(log.packets[40].timestamp == doctest::Approx(14.0));
    CHECK(log.packets[40].distance_m == doctest::Approx(60.0));
}

TEST_CASE("mobility validation")
{
    MobilityTrace empty;
    CHECK_THROWS_AS(simulate_run(fixtures::trial_model(), nullptr, empty, PhyConfig{}, 1), ValidationError);
    MobilityTrace back;
    back.links["a"] = {{1.0, 50.0}, {1.0, 60.0}};
    CHECK_THROWS_AS(back.validate(), ValidationError);
    MobilityTrace zero;
    zero.links["a"] = {{0.0, 0.0}};
    CHECK_THROWS_AS(zero.validate(), ValidationError);
    PhyConfig bad;
    bad.rate_hz = 0.0;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("received packets clear the noise floor")
{
    PhyConfig phy;
    const auto log = simulate_run(fixtures::trial_model(), nullptr, fixtures::linear_links(5, 20.0, 1500.0, 1.0), phy, 9);
    std::size_t noise = 0;
    for (const auto& p : log.packets) {
        if (p.received)
            CHECK(p.rssi_dbm > phy.noise_floor_dbm);
        else {
            CHECK(p.rssi_dbm <= phy.noise_floor_dbm);
            ++noise;
        }
    }
    CHECK(noise > 0);
}

TEST_CASE("log to trace keeps received packets")
{
    PhyConfig phy;
    const auto log = simulate_run(fixtures::trial_model(), nullptr, fixtures::linear_links(2, 20.0, 1500.0, 2.0), phy, 10);
    const auto ds = log_to_trace(log, phy);
    std::size_t received = 0;
    for (const auto& p : log.packets)
        received += p.received ? 1 : 0;
    REQUIRE(ds.records.size() == received);
    CHECK(ds.records[0].tx_id == "v0");
    CHECK(ds.records[0].rx_id == "r");
    CHECK(ds.noise_floor_dbm() == -96.0);
    CHECK(ds.metadata.rate_hz.value_or(0.0) == 10.0);
}

TEST_CASE("per of a hand-made bin")
{
    std::vector<bool> rx(100, true);
    for (int i = 0; i < 10; ++i)
        rx[static_cast<std::size_t>(i * 10)] = false;
    const auto per = per_by_bin(manual_log(rx), 40.0);
    REQUIRE(per.bins.size() == 3);
    CHECK_FALSE(per.bins[0].value);
    CHECK_FALSE(per.bins[1].value);
    REQUIRE(per.bins[2].value);
    CHECK(*per.bins[2].value == doctest::Approx(0.10));
    CHECK(per.bins[2].count == 100);
    CHECK(per.bins[2].lo_m == 80.0);
    CHECK(per.bins[2].hi_m == 120.0);
}

TEST_CASE("per at a fixed distance follows the gaussian tail")
{
    auto model = fixtures::trial_model();
    model.sigma1_db = model.sigma2_db = 6.0;
    PhyConfig phy;
    phy.tx_power_dbm = 0.0;
    const double d = 600.0;
    const auto log = simulate_run(model, nullptr, fixtures::static_links(10, d, 10000), phy, 11, SimOptions{0.0, 2000.0});
    const auto per = per_by_bin(log);
    const auto& bin = per.bins[static_cast<std::size_t>(d / 40.0)];
    REQUIRE(bin.value);
    CHECK(bin.count == 100000);
    const double oracle = fixtures::phi((phy.noise_floor_dbm - phy.tx_power_dbm - model.median_pl(d)) / 6.0);
    CHECK(oracle > 0.1);
    CHECK(oracle < 0.9);
    CHECK(std::abs(*bin.value - oracle) < 0.01);
}

TEST_CASE("per spread across seeds is binomial")
{
    auto model = fixtures::trial_model();
    PhyConfig phy;
    const double d = 500.0;
    const double p = fixtures::phi((phy.noise_floor_dbm - phy.tx_power_dbm - model.median_pl(d)) / model.sigma2_db);
    const double n = 10000.0;
    std::vector<double> pers;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto per = per_by_bin(
            simulate_run(model, nullptr, fixtures::static_links(1, d, 10000), phy, 100 + seed, SimOptions{0.0, 2000.0}));
        pers.push_back(*per.bins[static_cast<std::size_t>(d / 40.0)].value);
    }
    const double ratio = stats::stddev(pers) / std::sqrt(p * (1.0 - p) / n);
    CHECK(ratio > 0.4);
    CHECK(ratio < 1.7);
}

TEST_CASE("ipg without loss and with alternating loss")
{
    const auto clean = ipg95_by_bin(manual_log(std::vector<bool>(100, true)));
    REQUIRE(clean.bins.size() == 3);
    CHECK(*clean.bins[2].value == doctest::Approx(0.1));
    CHECK_FALSE(clean.bins[2].low_confidence);
    CHECK_FALSE(clean.bins[0].value);

    std::vector<bool> alt(100);
    for (std::size_t i = 0; i < alt.size(); ++i)
        alt[i] = i % 2 == 0;
    const auto a = ipg95_by_bin(manual_log(alt));
    CHECK(*a.bins[2].value == doctest::Approx(0.2));
}

TEST_CASE("ipg flags thin bins")
{
    const auto few = ipg95_by_bin(manual_log(std::vector<bool>(15, true)));
    REQUIRE(few.bins[2].value);
    CHECK(few.bins[2].low_confidence);
    CHECK(few.bins[2].count == 14);
}

TEST_CASE("ipg95 under iid loss matches the geometric quantile")
{
    auto phy = fixtures::open_phy();
    phy.interference_loss_prob = 0.5;
    const auto log = simulate_run(fixtures::trial_model(), nullptr, fixtures::static_links(10, 100.0, 10000), phy, 12);
    const auto ipg = ipg95_by_bin(log);
    const auto& bin = ipg.bins[2];
    REQUIRE(bin.value);
    const double oracle = 0.1 * std::ceil(std::log(0.05) / std::log(0.5));
    CHECK(oracle == doctest::Approx(0.5));
    CHECK(std::abs(*bin.value - oracle) <= 0.1 + 1e-9);
}

TEST_CASE("absolute error between metrics")
{
    BinnedMetric a, b;
    a.bin_width_m = b.bin_width_m = 40.0;
    a.bins = {{0, 40, 0.12, 10, false}, {40, 80, std::nullopt, 0, false}, {80, 120, 0.5, 5, true}};
    b.bins = {{0, 40, 0.10, 10, false}, {40, 80, 0.3, 10, false}};
    const auto e = abs_error(a, b);
    REQUIRE(e.bins.size() == 3);
    CHECK(*e.bins[0].value == doctest::Approx(0.02));
    CHECK_FALSE(e.bins[1].value);
    CHECK_FALSE(e.bins[2].value);

    const auto self = abs_error(a, a);
    CHECK(*self.bins[0].value == 0.0);
    CHECK(*self.bins[2].value == 0.0);
    CHECK(self.bins[2].low_confidence);

    b.bin_width_m = 50.0;
    CHECK_THROWS_AS(abs_error(a, b), ParameterError);
    b.bin_width_m = 40.0;
    b.bins[1].lo_m = 45.0;
    CHECK_THROWS_AS(abs_error(a, b), ParameterError);
}

TEST_CASE("two seeds of one model agree per bin")
{
    const auto model = fixtures::trial_model();
    PhyConfig phy;
    MobilityTrace mob;
    for (double d : {300.0, 460.0, 620.0})
        mob.links["p" + std::to_string(static_cast<int>(d)) + "->r"] = {{0.0, d}, {9999.9, d}};
    const auto a = per_by_bin(simulate_run(model, nullptr, mob, phy, 1, SimOptions{0.0, 2000.0}));
    const auto b = per_by_bin(simulate_run(model, nullptr, mob, phy, 2, SimOptions{0.0, 2000.0}));
    const auto e = abs_error(a, b);
    int populated = 0;
    for (const auto& bin : e.bins)
        if (bin.value) {
            ++populated;
            CHECK(*bin.value < 0.01);
        }
    CHECK(populated == 3);
}

TEST_CASE("loss cause names")
{
    CHECK(std::string(to_string(LossCause::noise)) == "noise");
    CHECK(loss_cause_from_string("interference") == LossCause::interference);
    CHECK(loss_cause_from_string("") == LossCause::none);
    CHECK_THROWS_AS(loss_cause_from_string("collision"), ParameterError);
}
