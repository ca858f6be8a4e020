#include "v2vprop/model_io.hpp"

#include "v2vprop/error.hpp"
#include "v2vprop/text.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

namespace v2vprop {

using nlohmann::json;

namespace {

// Header-driven CSV rows; blank and `#` lines skipped.
class CsvReader {
public:
    CsvReader(std::istream& in, std::initializer_list<const char*> required) : in_(in)
    {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            const auto t = text::trim(line);
            if (t.empty() || t.front() == '#')
                continue;
            for (auto f : text::split(t, ','))
                header_.emplace_back(text::trim(f));
            for (std::size_t i = 0; i < header_.size(); ++i)
                col_[header_[i]] = i;
            for (const char* req : required)
                if (!col_.contains(req))
                    throw SchemaError(std::string("missing required column '") + req + "'");
            return;
        }
        throw SchemaError("file has no column header");
    }

    bool next()
    {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            const auto t = text::trim(line);
            if (t.empty() || t.front() == '#')
                continue;
            row_.clear();
            for (auto f : text::split(t, ','))
                row_.emplace_back(text::trim(f));
            if (row_.size() != header_.size())
                throw ParseError(line_no_, "expected " + std::to_string(header_.size()) + " fields, got " +
                                               std::to_string(row_.size()));
            return true;
        }
        return false;
    }

    bool has(const char* name) const { return col_.contains(name); }
    const std::string& str(const char* name) const { return row_[col_.at(name)]; }

    double num(const char* name) const
    {
        const auto v = text::parse_double(str(name));
        if (!v)
            throw ParseError(line_no_, std::string("bad number in column '") + name + "'");
        return *v;
    }

    std::size_t line() const { return line_no_; }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
    std::vector<std::string> header_;
    std::map<std::string, std::size_t> col_;
    std::vector<std::string> row_;
};

std::ifstream open_in(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path.string() + "'");
    return in;
}

double get_num(const json& j, const char* key)
{
    if (!j.contains(key))
        throw SchemaError(std::string("model JSON: missing '") + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number())
        throw SchemaError(std::string("model JSON: '") + key + "' must be a number");
    return v.get<double>();
}

std::optional<double> get_opt(const json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null())
        return std::nullopt;
    return get_num(j, key);
}

json fading_json(const FadingModel& f)
{
    json j;
    j["family"] = stats::to_string(f.fit.family);
    if (std::isfinite(f.fit.m))
        j["m"] = f.fit.m;
    else
        j["m"] = nullptr;
    j["gauss_mu"] = f.fit.mu;
    j["gauss_sigma"] = f.fit.sigma;
    j["sigma_mp_db"] = f.sigma_mp_db;
    j["window_p"] = f.window_p;
    j["ks_d"] = f.fit.ks_d;
    j["ks_p"] = f.fit.ks_p;
    j["acf_max_abs"] = f.acf_max_abs;
    return j;
}

FadingModel fading_from(const json& j)
{
    if (!j.is_object())
        throw SchemaError("model JSON: 'fading' must be an object");
    FadingModel f;
    if (!j.contains("family") || !j.at("family").is_string())
        throw SchemaError("model JSON: fading.family missing");
    try {
        f.fit.family = stats::family_from_string(j.at("family").get<std::string>());
    } catch (const Error& e) {
        throw SchemaError(std::string("model JSON: ") + e.what());
    }
    f.fit.m = j.contains("m") && j.at("m").is_null() ? std::numeric_limits<double>::infinity() : get_num(j, "m");
    f.fit.mu = get_opt(j, "gauss_mu").value_or(1.0);
    f.fit.sigma = get_opt(j, "gauss_sigma").value_or(0.0);
    f.sigma_mp_db = get_num(j, "sigma_mp_db");
    f.window_p = static_cast<std::size_t>(get_num(j, "window_p"));
    f.fit.ks_d = get_opt(j, "ks_d").value_or(0.0);
    f.fit.ks_p = get_opt(j, "ks_p").value_or(1.0);
    f.acf_max_abs = get_opt(j, "acf_max_abs").value_or(0.0);
    return f;
}

const char* flag_of(const MetricBin& b)
{
    if (!b.value)
        return "absent";
    return b.low_confidence ? "low_confidence" : "ok";
}

}  // namespace

std::string model_to_json(const ChannelModel& cm)
{
    const auto& m = cm.pathloss;
    json j;
    j["segment1"] = to_string(m.segment1);
    if (m.segment1 == Segment1Kind::two_ray) {
        j["a1"] = m.two_ray.a1;
        j["b1"] = m.two_ray.b1;
        j["h_m"] = m.two_ray.h_m;
        j["lambda_m"] = m.two_ray.lambda_m;
    } else {
        j["seg1_a_db"] = m.linear1.a_db;
        j["seg1_b"] = m.linear1.b;
    }
    j["d0_m"] = m.d0_m();
    j["d_br_m"] = m.d_br_m;
    j["a2_db"] = m.segment2.a_db;
    j["b2"] = m.segment2.b;
    j["sigma1_db"] = m.sigma1_db;
    j["sigma2_db"] = m.sigma2_db;
    if (m.sigma_sh1_db)
        j["sigma_sh1_db"] = *m.sigma_sh1_db;
    if (m.sigma_sh2_db)
        j["sigma_sh2_db"] = *m.sigma_sh2_db;
    if (m.noise_floor_dbm)
        j["noise_floor_dbm"] = *m.noise_floor_dbm;
    if (cm.fading)
        j["fading"] = fading_json(*cm.fading);
    return j.dump(2) + "\n";
}

std::string fading_to_json(const FadingModel& fading)
{
    return fading_json(fading).dump(2) + "\n";
}

ChannelModel model_from_json(const std::string& textdoc)
{
    json j;
    try {
        j = json::parse(textdoc);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("model JSON: ") + e.what());
    }
    if (!j.is_object())
        throw SchemaError("model JSON: top level must be an object");

    ChannelModel cm;
    auto& m = cm.pathloss;
    if (j.contains("segment1")) {
        if (!j.at("segment1").is_string())
            throw SchemaError("model JSON: 'segment1' must be a string");
        try {
            m.segment1 = segment1_from_string(j.at("segment1").get<std::string>());
        } catch (const Error& e) {
            throw SchemaError(std::string("model JSON: ") + e.what());
        }
    }
    const double d0 = get_num(j, "d0_m");
    if (m.segment1 == Segment1Kind::two_ray) {
        m.two_ray.a1 = get_num(j, "a1");
        m.two_ray.b1 = get_num(j, "b1");
        m.two_ray.h_m = get_num(j, "h_m");
        m.two_ray.lambda_m = get_num(j, "lambda_m");
        m.two_ray.d0_m = d0;
    } else {
        m.linear1.a_db = get_num(j, "seg1_a_db");
        m.linear1.b = get_num(j, "seg1_b");
        m.linear1.d0_m = d0;
    }
    m.d_br_m = get_num(j, "d_br_m");
    m.segment2.a_db = get_num(j, "a2_db");
    m.segment2.b = get_num(j, "b2");
    m.segment2.d0_m = d0;
    m.sigma1_db = get_num(j, "sigma1_db");
    m.sigma2_db = get_num(j, "sigma2_db");
    m.sigma_sh1_db = get_opt(j, "sigma_sh1_db");
    m.sigma_sh2_db = get_opt(j, "sigma_sh2_db");
    m.noise_floor_dbm = get_opt(j, "noise_floor_dbm");
    if (!(d0 > 0.0) || !(m.d_br_m > d0))
        throw SchemaError("model JSON: need 0 < d0_m < d_br_m");
    if (m.sigma1_db < 0.0 || m.sigma2_db < 0.0)
        throw SchemaError("model JSON: sigma must be >= 0");
    if (j.contains("fading") && !j.at("fading").is_null())
        cm.fading = fading_from(j.at("fading"));
    return cm;
}

ChannelModel load_model(const std::filesystem::path& path)
{
    auto in = open_in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

void save_model(const std::filesystem::path& path, const ChannelModel& model)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write '" + path.string() + "'");
    out << model_to_json(model);
}

void write_packet_log_csv(std::ostream& out, const PacketLog& log)
{
    out << "timestamp,distance_m,rssi_dbm,received,loss_cause,link_id\n";
    for (const auto& p : log.packets)
        out << text::format_double(p.timestamp) << ',' << text::format_double(p.distance_m) << ','
            << text::format_double(p.rssi_dbm) << ',' << (p.received ? 1 : 0) << ',' << to_string(p.cause) << ','
            << p.link_id << '\n';
}

PacketLog parse_packet_log_csv(std::istream& in)
{
    CsvReader csv(in, {"timestamp", "distance_m", "rssi_dbm", "received", "loss_cause"});
    PacketLog log;
    std::map<std::string, std::int64_t> next_seq;
    while (csv.next()) {
        PacketRecord p;
        p.link_id = csv.has("link_id") ? csv.str("link_id") : std::string("link");
        p.seq_no = next_seq[p.link_id]++;
        p.timestamp = csv.num("timestamp");
        p.distance_m = csv.num("distance_m");
        p.rssi_dbm = csv.num("rssi_dbm");
        const auto& r = csv.str("received");
        if (r == "1" || r == "true")
            p.received = true;
        else if (r == "0" || r == "false")
            p.received = false;
        else
            throw ParseError(csv.line(), "bad value in column 'received'");
        try {
            p.cause = loss_cause_from_string(csv.str("loss_cause"));
        } catch (const ParameterError& e) {
            throw ParseError(csv.line(), e.what());
        }
        if (p.received != (p.cause == LossCause::none))
            throw ParseError(csv.line(), "received flag disagrees with loss_cause");
        log.packets.push_back(std::move(p));
    }
    return log;
}

PacketLog load_packet_log(const std::filesystem::path& path)
{
    auto in = open_in(path);
    return parse_packet_log_csv(in);
}

void write_metric_csv(std::ostream& out, const BinnedMetric& metric)
{
    out << "bin_lo_m,bin_hi_m,value,flag\n";
    for (const auto& b : metric.bins) {
        out << text::format_double(b.lo_m) << ',' << text::format_double(b.hi_m) << ',';
        if (b.value)
            out << text::format_double(*b.value);
        out << ',' << flag_of(b) << '\n';
    }
}

BinnedMetric parse_metric_csv(std::istream& in)
{
    CsvReader csv(in, {"bin_lo_m", "bin_hi_m", "value", "flag"});
    BinnedMetric m;
    m.bin_width_m = std::numeric_limits<double>::quiet_NaN();
    while (csv.next()) {
        MetricBin b;
        b.lo_m = csv.num("bin_lo_m");
        b.hi_m = csv.num("bin_hi_m");
        if (!(b.hi_m > b.lo_m))
            throw ParseError(csv.line(), "bin_hi_m must exceed bin_lo_m");
        const auto& flag = csv.str("flag");
        if (flag == "absent") {
            if (!csv.str("value").empty())
                throw ParseError(csv.line(), "absent bin carries a value");
        } else if (flag == "ok" || flag == "low_confidence") {
            b.value = csv.num("value");
            b.low_confidence = flag == "low_confidence";
        } else {
            throw ParseError(csv.line(), "unknown flag '" + flag + "'");
        }
        if (m.bins.empty())
            m.bin_width_m = b.hi_m - b.lo_m;
        m.bins.push_back(b);
    }
    return m;
}

BinnedMetric load_metric(const std::filesystem::path& path)
{
    auto in = open_in(path);
    return parse_metric_csv(in);
}

void write_mobility_csv(std::ostream& out, const MobilityTrace& mobility)
{
    out << "link_id,timestamp,distance_m\n";
    for (const auto& [id, track] : mobility.links)
        for (const auto& p : track)
            out << id << ',' << text::format_double(p.timestamp) << ',' << text::format_double(p.distance_m) << '\n';
}

MobilityTrace parse_mobility_csv(std::istream& in)
{
    CsvReader csv(in, {"link_id", "timestamp", "distance_m"});
    MobilityTrace m;
    while (csv.next())
        m.links[csv.str("link_id")].push_back({csv.num("timestamp"), csv.num("distance_m")});
    m.validate();
    return m;
}

MobilityTrace load_mobility(const std::filesystem::path& path)
{
    auto in = open_in(path);
    return parse_mobility_csv(in);
}

}  // namespace v2vprop
