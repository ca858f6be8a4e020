#pragma once

#include "v2vprop/fading.hpp"
#include "v2vprop/pathloss.hpp"
#include "v2vprop/sim.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace v2vprop {

struct ChannelModel {
    PathLossModel pathloss;
    std::optional<FadingModel> fading;
};

// JSON document: a1, b1, h_m, lambda_m, d0_m, d_br_m, a2_db, b2, sigma1_db,
// sigma2_db, optional sigma_sh1_db, sigma_sh2_db, noise_floor_dbm, plus
// `segment1` ("two_ray" | "linear", with seg1_a_db / seg1_b for linear) and an
// optional `fading` object {family, m, gauss_mu, gauss_sigma, sigma_mp_db,
// window_p, ks_d, ks_p, acf_max_abs}. An infinite m is written as null.
// Doubles are written in shortest round-trip form, so write -> read is exact.
std::string model_to_json(const ChannelModel& model);
ChannelModel model_from_json(const std::string& text);
ChannelModel load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const ChannelModel& model);

// Only the fading object, as stored under `fading`.
std::string fading_to_json(const FadingModel& fading);

// timestamp,distance_m,rssi_dbm,received,loss_cause,link_id
void write_packet_log_csv(std::ostream& out, const PacketLog& log);
PacketLog parse_packet_log_csv(std::istream& in);
PacketLog load_packet_log(const std::filesystem::path& path);

// bin_lo_m,bin_hi_m,value,flag with flag ok | absent | low_confidence.
void write_metric_csv(std::ostream& out, const BinnedMetric& metric);
BinnedMetric parse_metric_csv(std::istream& in);
BinnedMetric load_metric(const std::filesystem::path& path);

// link_id,timestamp,distance_m
void write_mobility_csv(std::ostream& out, const MobilityTrace& mobility);
MobilityTrace parse_mobility_csv(std::istream& in);
MobilityTrace load_mobility(const std::filesystem::path& path);

}  // namespace v2vprop
