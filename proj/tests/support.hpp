#pragma once

// Fixture generators shared by the unit and acceptance tests.

#include "v2vprop/pathloss.hpp"
#include "v2vprop/sim.hpp"

#include <cmath>
#include <string>

namespace fixtures {

using namespace v2vprop;

// Field-trial parameters of the two-ray + log-distance model. a2 is taken from
// continuity at the breakpoint (referenced to d0 = 10 m).
inline PathLossModel trial_model()
{
    PathLossModel m;
    m.segment1 = Segment1Kind::two_ray;
    m.two_ray = {7.31e-7, 3.79e-7, 1.6, 0.0512, 10.0};
    m.d_br_m = 400.0;
    m.segment2.b = 4.30;
    m.segment2.d0_m = 10.0;
    m.segment2.a_db = two_ray_predict_db(400.0, m.two_ray) + 4.30 * 10.0 * std::log10(400.0 / 10.0);
    m.sigma1_db = 5.25;
    m.sigma2_db = 5.03;
    return m;
}

// `links` links, each driving from d_start to d_end at `step_m` per packet
// (packets at `rate_hz`).
inline MobilityTrace linear_links(int links, double d_start, double d_end, double step_m, double rate_hz = 10.0)
{
    MobilityTrace mob;
    const double duration = std::abs(d_end - d_start) / step_m / rate_hz;
    for (int k = 0; k < links; ++k)
        mob.links["v" + std::to_string(k) + "->r"] = {{0.0, d_start}, {duration, d_end}};
    return mob;
}

// One link parked at distance d for n packets.
inline MobilityTrace static_links(int links, double d, std::size_t n, double rate_hz = 10.0)
{
    MobilityTrace mob;
    const double duration = static_cast<double>(n - 1) / rate_hz;
    for (int k = 0; k < links; ++k)
        mob.links["s" + std::to_string(k) + "->r"] = {{0.0, d}, {duration, d}};
    return mob;
}

// Std of 10 log10(X), X ~ Gamma(m, 1/m), by trapezoid quadrature of the
// density of ln X.
inline double db_std_gamma(double m)
{
    const double lg = std::lgamma(m);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    const double h = 1e-4;
    for (double y = -60.0; y <= 6.0; y += h) {
        const double f = std::exp(m * std::log(m) - lg + m * y - m * std::exp(y));
        s0 += f;
        s1 += f * y;
        s2 += f * y * y;
    }
    const double mean = s1 / s0;
    return 10.0 / std::log(10.0) * std::sqrt(s2 / s0 - mean * mean);
}

// Standard normal CDF from the C library erfc.
inline double phi(double z)
{
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

inline PhyConfig open_phy(double tx_power = 20.0)
{
    PhyConfig phy;
    phy.tx_power_dbm = tx_power;
    phy.noise_floor_dbm = -400.0;
    return phy;
}

}  // namespace fixtures
