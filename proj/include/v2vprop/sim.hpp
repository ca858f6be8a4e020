#pragma once

#include "v2vprop/fading.hpp"
#include "v2vprop/pathloss.hpp"
#include "v2vprop/rng.hpp"
#include "v2vprop/trace.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace v2vprop {

struct PhyConfig {
    double tx_power_dbm = 20.0;
    double rate_hz = 10.0;
    double noise_floor_dbm = -96.0;
    double interference_loss_prob = 0.0;

    void validate() const;
};

struct MobilityPoint {
    double timestamp = 0.0;
    double distance_m = 0.0;
};

// Per-link separation over time. Link ids of the form "tx->rx" become the
// tx/rx pair when a log is turned back into a trace.
struct MobilityTrace {
    std::map<std::string, std::vector<MobilityPoint>> links;

    // Throws ValidationError on an empty trace, non-increasing timestamps or
    // distance <= 0.
    void validate() const;
};

// Separation distance by linear interpolation, clamped to the end points.
double interpolate_distance(std::span<const MobilityPoint> track, double t);

struct SimOptions {
    double decorrelation_m = 25.0;  // 0: independent shadow draw per packet
    double d_max_m = 2000.0;
};

struct LinkFadingState {
    double shadow_unit = 0.0;  // unit-variance Gaussian state
    double shadow_db = 0.0;    // shadow_unit scaled by the active sigma
    double last_position_m = 0.0;
    double decorrelation_m = 25.0;
    bool started = false;
};

// Shadow std used at distance d: the model's sigma_sh when present, else the
// total scatter with no multipath attached, else the quadrature split.
double shadow_sigma_at(const PathLossModel& model, const FadingModel* fading, double d);

// 10 log10(X) for one multipath power draw; 0 when fading is null or m is
// infinite. The gaussian family is truncated below at 1e-6.
double draw_multipath_db(const FadingModel* fading, Rng& rng);

// pl = median(d) + shadow + multipath. The shadow state decorrelates as
// exp(-travel / decorrelation) where travel is the change in separation.
// Throws ParameterError for d outside [d0, d_max].
double sample_link_gain(const PathLossModel& model, const FadingModel* fading, double d, LinkFadingState& state,
                        Rng& rng, const SimOptions& opts = {});

enum class LossCause { none, noise, interference };

const char* to_string(LossCause c);
LossCause loss_cause_from_string(const std::string& s);

struct PacketRecord {
    std::string link_id;
    std::int64_t seq_no = 0;
    double timestamp = 0.0;
    double distance_m = 0.0;
    double rssi_dbm = 0.0;
    bool received = false;
    LossCause cause = LossCause::none;
};

struct PacketLog {
    std::vector<PacketRecord> packets;
};

// Packets at rate R over each link's mobility span. Link k draws from its own
// stream derive_seed(seed, k), links in id order. Received iff rssi is above
// the noise floor and an independent uniform is >= interference_loss_prob;
// a packet below the floor is attributed to noise.
PacketLog simulate_run(const PathLossModel& model, const FadingModel* fading, const MobilityTrace& mobility,
                       const PhyConfig& phy, std::uint64_t seed, const SimOptions& opts = {});

// Received packets as a trace (seq_no holes mark losses).
TraceDataset log_to_trace(const PacketLog& log, const PhyConfig& phy);

struct MetricBin {
    double lo_m = 0.0;
    double hi_m = 0.0;
    std::optional<double> value;  // empty: absent
    std::size_t count = 0;        // packets (PER) or gaps (IPG)
    bool low_confidence = false;
};

// Bins [k w, (k + 1) w) from 0 up to the last populated one.
struct BinnedMetric {
    double bin_width_m = 40.0;
    std::vector<MetricBin> bins;
};

BinnedMetric per_by_bin(const PacketLog& log, double bin_width_m = 40.0);

// 95th-percentile (nearest rank) gap between consecutive received packets of
// one link, binned by the later packet's distance; < 20 gaps is flagged.
BinnedMetric ipg95_by_bin(const PacketLog& log, double bin_width_m = 40.0);

// |sim - ref| per bin. Grids must share width and origin; a bin past the end
// of either grid is absent. Throws ParameterError on mismatched grids.
BinnedMetric abs_error(const BinnedMetric& sim, const BinnedMetric& ref);

}  // namespace v2vprop
