#include "v2vprop/sim.hpp"

#include "v2vprop/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace v2vprop {

namespace {

constexpr double kGaussianFloor = 1e-6;
constexpr std::size_t kMinGaps = 20;

std::size_t bin_index(double d, double w)
{
    return static_cast<std::size_t>(std::floor(d / w));
}

BinnedMetric empty_grid(double w, std::size_t n)
{
    BinnedMetric out;
    out.bin_width_m = w;
    out.bins.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.bins[i].lo_m = static_cast<double>(i) * w;
        out.bins[i].hi_m = static_cast<double>(i + 1) * w;
    }
    return out;
}

void check_width(double w)
{
    if (!(w > 0.0) || !std::isfinite(w))
        throw ParameterError("bin width must be > 0");
}

bool same(double a, double b)
{
    return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b));
}

}  // namespace

void PhyConfig::validate() const
{
    if (!(rate_hz > 0.0) || !std::isfinite(rate_hz))
        throw ParameterError("packet rate must be > 0");
    if (!(interference_loss_prob >= 0.0 && interference_loss_prob <= 1.0))
        throw ParameterError("interference_loss_prob must be in [0, 1]");
    if (!std::isfinite(tx_power_dbm) || !std::isfinite(noise_floor_dbm))
        throw ParameterError("tx power and noise floor must be finite");
}

void MobilityTrace::validate() const
{
    if (links.empty())
        throw ValidationError("mobility trace is empty");
    for (const auto& [id, track] : links) {
        if (track.empty())
            throw ValidationError("mobility for link " + id + " is empty");
        for (std::size_t i = 0; i < track.size(); ++i) {
            if (!(track[i].distance_m > 0.0))
                throw ValidationError("mobility for link " + id + ": distance must be > 0");
            if (i > 0 && !(track[i].timestamp > track[i - 1].timestamp))
                throw ValidationError("mobility for link " + id + ": timestamps must be strictly increasing");
        }
    }
}

double interpolate_distance(std::span<const MobilityPoint> track, double t)
{
    if (track.empty())
        throw ValidationError("interpolate_distance: empty track");
    if (t <= track.front().timestamp)
        return track.front().distance_m;
    if (t >= track.back().timestamp)
        return track.back().distance_m;
    auto hi = std::upper_bound(track.begin(), track.end(), t,
                               [](double v, const MobilityPoint& p) { return v < p.timestamp; });
    auto lo = hi - 1;
    const double w = (t - lo->timestamp) / (hi->timestamp - lo->timestamp);
    return lo->distance_m + w * (hi->distance_m - lo->distance_m);
}

double shadow_sigma_at(const PathLossModel& model, const FadingModel* fading, double d)
{
    if (auto s = model.sigma_sh_at(d))
        return *s;
    const double total = model.sigma_at(d);
    if (!fading)
        return total;
    return split_sigma(total, fading->sigma_mp_db).sigma_sh_db;
}

double draw_multipath_db(const FadingModel* fading, Rng& rng)
{
    if (!fading)
        return 0.0;
    const auto& f = fading->fit;
    if (f.family == stats::Family::nakagami_power) {
        if (std::isinf(f.m))
            return 0.0;
        return 10.0 * std::log10(rng.gamma(f.m, 1.0 / f.m));
    }
    const double x = std::max(kGaussianFloor, f.mu + f.sigma * rng.normal());
    return 10.0 * std::log10(x);
}

double sample_link_gain(const PathLossModel& model, const FadingModel* fading, double d, LinkFadingState& state,
                        Rng& rng, const SimOptions& opts)
{
    const double d0 = model.d0_m();
    if (!(d >= d0 && d <= opts.d_max_m))
        throw ParameterError("distance " + std::to_string(d) + " m outside the model range [" + std::to_string(d0) +
                             ", " + std::to_string(opts.d_max_m) + "]");
    if (state.decorrelation_m < 0.0)
        throw ParameterError("decorrelation distance must be >= 0");

    const double z = rng.normal();
    if (!state.started || state.decorrelation_m == 0.0) {
        state.shadow_unit = z;
        state.started = true;
    } else {
        const double rho = std::exp(-std::abs(d - state.last_position_m) / state.decorrelation_m);
        state.shadow_unit = rho * state.shadow_unit + std::sqrt(1.0 - rho * rho) * z;
    }
    state.last_position_m = d;
    state.shadow_db = shadow_sigma_at(model, fading, d) * state.shadow_unit;

    return model.median_pl(d) + state.shadow_db + draw_multipath_db(fading, rng);
}

const char* to_string(LossCause c)
{
    switch (c) {
    case LossCause::none: return "";
    case LossCause::noise: return "noise";
    case LossCause::interference: return "interference";
    }
    return "";
}

LossCause loss_cause_from_string(const std::string& s)
{
    if (s.empty() || s == "none")
        return LossCause::none;
    if (s == "noise")
        return LossCause::noise;
    if (s == "interference")
        return LossCause::interference;
    throw ParameterError("unknown loss cause '" + s + "'");
}

PacketLog simulate_run(const PathLossModel& model, const FadingModel* fading, const MobilityTrace& mobility,
                       const PhyConfig& phy, std::uint64_t seed, const SimOptions& opts)
{
    phy.validate();
    mobility.validate();

    PacketLog log;
    std::uint64_t link_index = 0;
    for (const auto& [id, track] : mobility.links) {
        Rng rng(derive_seed(seed, link_index++));
        LinkFadingState state;
        state.decorrelation_m = opts.decorrelation_m;
        const double t0 = track.front().timestamp;
        const double span = track.back().timestamp - t0;
        const auto count = static_cast<std::int64_t>(std::floor(span * phy.rate_hz + 1e-9)) + 1;
        for (std::int64_t k = 0; k < count; ++k) {
            PacketRecord p;
            p.link_id = id;
            p.seq_no = k;
            p.timestamp = t0 + static_cast<double>(k) / phy.rate_hz;
            p.distance_m = interpolate_distance(track, p.timestamp);
            p.rssi_dbm = phy.tx_power_dbm + sample_link_gain(model, fading, p.distance_m, state, rng, opts);
            const bool interfered = rng.uniform() < phy.interference_loss_prob;
            if (!(p.rssi_dbm > phy.noise_floor_dbm))
                p.cause = LossCause::noise;
            else if (interfered)
                p.cause = LossCause::interference;
            p.received = p.cause == LossCause::none;
            log.packets.push_back(std::move(p));
        }
    }
    return log;
}

TraceDataset log_to_trace(const PacketLog& log, const PhyConfig& phy)
{
    TraceDataset ds;
    ds.metadata.tx_power_dbm = phy.tx_power_dbm;
    ds.metadata.rate_hz = phy.rate_hz;
    ds.metadata.noise_floor_dbm = phy.noise_floor_dbm;
    for (const auto& p : log.packets) {
        if (!p.received)
            continue;
        RssiRecord r;
        const auto arrow = p.link_id.find("->");
        if (arrow != std::string::npos) {
            r.tx_id = p.link_id.substr(0, arrow);
            r.rx_id = p.link_id.substr(arrow + 2);
        } else {
            r.tx_id = p.link_id;
            r.rx_id = "rx";
        }
        r.timestamp = p.timestamp;
        r.seq_no = p.seq_no;
        r.distance_m = p.distance_m;
        r.rssi_dbm = p.rssi_dbm;
        r.tx_power_dbm = phy.tx_power_dbm;
        ds.records.push_back(std::move(r));
    }
    return ds;
}

BinnedMetric per_by_bin(const PacketLog& log, double w)
{
    check_width(w);
    std::size_t n = 0;
    for (const auto& p : log.packets)
        n = std::max(n, bin_index(p.distance_m, w) + 1);
    auto out = empty_grid(w, n);
    std::vector<std::size_t> lost(n, 0);
    for (const auto& p : log.packets) {
        const auto i = bin_index(p.distance_m, w);
        ++out.bins[i].count;
        if (!p.received)
            ++lost[i];
    }
    for (std::size_t i = 0; i < n; ++i)
        if (out.bins[i].count > 0)
            out.bins[i].value = static_cast<double>(lost[i]) / static_cast<double>(out.bins[i].count);
    return out;
}

BinnedMetric ipg95_by_bin(const PacketLog& log, double w)
{
    check_width(w);
    std::vector<std::vector<double>> gaps;
    std::map<std::string, const PacketRecord*> last;
    for (const auto& p : log.packets) {
        if (!p.received)
            continue;
        auto& prev = last[p.link_id];
        if (prev) {
            const auto i = bin_index(p.distance_m, w);
            if (gaps.size() <= i)
                gaps.resize(i + 1);
            gaps[i].push_back(p.timestamp - prev->timestamp);
        }
        prev = &p;
    }
    auto out = empty_grid(w, gaps.size());
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        auto& g = gaps[i];
        out.bins[i].count = g.size();
        if (g.empty())
            continue;
        std::sort(g.begin(), g.end());
        const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(g.size())));
        out.bins[i].value = g[std::max<std::size_t>(rank, 1) - 1];
        out.bins[i].low_confidence = g.size() < kMinGaps;
    }
    return out;
}

BinnedMetric abs_error(const BinnedMetric& sim, const BinnedMetric& ref)
{
    check_width(sim.bin_width_m);
    if (!same(sim.bin_width_m, ref.bin_width_m))
        throw ParameterError("bin grids differ: width " + std::to_string(sim.bin_width_m) + " vs " +
                             std::to_string(ref.bin_width_m));
    const double w = sim.bin_width_m;
    for (const auto* m : {&sim, &ref})
        for (std::size_t i = 0; i < m->bins.size(); ++i)
            if (!same(m->bins[i].lo_m, static_cast<double>(i) * w) || !same(m->bins[i].hi_m, static_cast<double>(i + 1) * w))
                throw ParameterError("bin grids differ: bin " + std::to_string(i) + " is not aligned to width " +
                                     std::to_string(w));

    auto out = empty_grid(w, std::max(sim.bins.size(), ref.bins.size()));
    for (std::size_t i = 0; i < out.bins.size(); ++i) {
        if (i >= sim.bins.size() || i >= ref.bins.size())
            continue;
        const auto& a = sim.bins[i];
        const auto& b = ref.bins[i];
        out.bins[i].count = std::min(a.count, b.count);
        if (a.value && b.value) {
            out.bins[i].value = std::abs(*a.value - *b.value);
            out.bins[i].low_confidence = a.low_confidence || b.low_confidence;
        }
    }
    return out;
}

}  // namespace v2vprop
