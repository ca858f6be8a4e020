#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace v2vprop {

struct LinkId {
    std::string tx;
    std::string rx;

    auto operator<=>(const LinkId&) const = default;
    std::string str() const { return tx + "->" + rx; }
};

// One logged packet. Only decoded packets appear in a trace; losses show up
// as holes in seq_no.
struct RssiRecord {
    double timestamp = 0.0;  // s
    std::string tx_id;
    std::string rx_id;
    std::int64_t seq_no = 0;
    double distance_m = 0.0;
    double rssi_dbm = 0.0;
    double tx_power_dbm = 0.0;
    double rssi_offset_db = 0.0;

    LinkId link() const { return {tx_id, rx_id}; }
};

struct TraceMetadata {
    std::optional<std::string> trial;
    std::optional<double> tx_power_dbm;
    std::optional<double> rate_hz;
    std::optional<double> noise_floor_dbm;
    double rssi_offset_db = 0.0;
    // Unrecognised `# key=value` header entries, kept verbatim.
    std::map<std::string, std::string> extra;
};

struct TraceDataset {
    std::vector<RssiRecord> records;
    TraceMetadata metadata;

    // Throws SchemaError when the trace carries no noise floor.
    double noise_floor_dbm() const;
    double tx_power_dbm() const;
};

// Path gain in dB: received dB power minus transmitted dB power.
struct PathLossSample {
    double distance_m = 0.0;
    double pl_db = 0.0;
    double timestamp = 0.0;
    LinkId link;
};

enum class TraceFormat { csv, jsonl };

// CSV: `# key=value` metadata lines, then a header row naming at least
// timestamp,tx_id,rx_id,seq_no,distance_m,rssi_dbm (optional per-row
// tx_power_dbm and rssi_offset_db override the metadata). JSONL: one object
// per packet with the same field names; `#` metadata lines are accepted too.
TraceDataset parse_trace(std::istream& source, TraceFormat format);

// Picks the format from the extension (.jsonl / .json -> jsonl, else csv).
TraceDataset load_trace(const std::filesystem::path& path);

void write_trace_csv(std::ostream& out, const TraceDataset& dataset);

std::vector<PathLossSample> to_pathloss(const TraceDataset& dataset);

// Inverse of to_pathloss for one value.
inline double rssi_from_pathloss(double pl_db, double tx_power_dbm, double rssi_offset_db)
{
    return pl_db + tx_power_dbm - rssi_offset_db;
}

// Record indices per link, in file order. Throws StreamError when seq_no is
// not strictly increasing or timestamps decrease within a link.
std::map<LinkId, std::vector<std::size_t>> group_by_link(const TraceDataset& dataset);

struct CensusBin {
    double lo_m = 0.0;
    double hi_m = 0.0;
    std::size_t received = 0;
    std::size_t lost = 0;
};

// Received/lost packet counts per distance bin. A run of missing seq_no is
// attributed to the bin of the received packet before it.
std::vector<CensusBin> loss_census(const TraceDataset& dataset, std::span<const double> bin_edges);

// Uniform edges lo, lo+width, ... covering hi.
std::vector<double> uniform_edges(double lo, double hi, double width);

}  // namespace v2vprop
