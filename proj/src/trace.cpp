#include "v2vprop/trace.hpp"

#include "v2vprop/error.hpp"
#include "v2vprop/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include <json.hpp>

namespace v2vprop {

namespace {

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

const std::vector<std::string> kRequiredColumns = {
    "timestamp", "tx_id", "rx_id", "seq_no", "distance_m", "rssi_dbm"};

void apply_metadata(TraceMetadata& meta, std::string_view line, std::size_t line_no)
{
    // `# key=value`
    auto body = text::trim(line.substr(1));
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
        return;  // plain comment
    const std::string key(text::trim(body.substr(0, eq)));
    const auto value = text::trim(body.substr(eq + 1));

    auto number = [&]() {
        const auto v = text::parse_double(value);
        if (!v || !std::isfinite(*v))
            throw ParseError(line_no, "metadata '" + key + "' is not a number");
        return *v;
    };

    if (key == "trial")
        meta.trial = std::string(value);
    else if (key == "tx_power_dbm")
        meta.tx_power_dbm = number();
    else if (key == "rate_hz")
        meta.rate_hz = number();
    else if (key == "noise_floor_dbm")
        meta.noise_floor_dbm = number();
    else if (key == "rssi_offset_db")
        meta.rssi_offset_db = number();
    else
        meta.extra[key] = std::string(value);
}

void validate_record(const RssiRecord& r, std::size_t line_no)
{
    if (!std::isfinite(r.timestamp) || !std::isfinite(r.rssi_dbm) || !std::isfinite(r.distance_m))
        throw ValidationError("line " + std::to_string(line_no) + ": non-finite value");
    if (!(r.distance_m > 0.0))
        throw ValidationError("line " + std::to_string(line_no) + ": distance must be > 0, got " +
                              text::format_double(r.distance_m));
}

void finish_records(TraceDataset& ds)
{
    for (auto& r : ds.records) {
        if (std::isnan(r.tx_power_dbm) && ds.metadata.tx_power_dbm)
            r.tx_power_dbm = *ds.metadata.tx_power_dbm;
        if (std::isnan(r.rssi_offset_db))
            r.rssi_offset_db = ds.metadata.rssi_offset_db;
    }
}

TraceDataset parse_csv(std::istream& in)
{
    TraceDataset ds;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    std::map<std::string, std::size_t> col;

    while (std::getline(in, line)) {
        ++line_no;
        const auto t = text::trim(line);
        if (t.empty())
            continue;
        if (t.front() == '#') {
            if (!header.empty())
                throw ParseError(line_no, "metadata line after the column header");
            apply_metadata(ds.metadata, t, line_no);
            continue;
        }
        if (header.empty()) {
            for (auto f : text::split(t, ','))
                header.emplace_back(text::trim(f));
            for (std::size_t i = 0; i < header.size(); ++i)
                col[header[i]] = i;
            for (const auto& req : kRequiredColumns)
                if (!col.contains(req))
                    throw SchemaError("missing required column '" + req + "'");
            continue;
        }

        const auto fields = text::split(t, ',');
        if (fields.size() != header.size())
            throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                          std::to_string(fields.size()));
        auto num = [&](const char* name) {
            const auto v = text::parse_double(fields[col.at(name)]);
            if (!v)
                throw ParseError(line_no, std::string("bad number in column '") + name + "'");
            return *v;
        };
        RssiRecord r;
        r.timestamp = num("timestamp");
        r.tx_id = std::string(text::trim(fields[col.at("tx_id")]));
        r.rx_id = std::string(text::trim(fields[col.at("rx_id")]));
        const auto seq = text::parse_int(fields[col.at("seq_no")]);
        if (!seq)
            throw ParseError(line_no, "bad integer in column 'seq_no'");
        r.seq_no = *seq;
        r.distance_m = num("distance_m");
        r.rssi_dbm = num("rssi_dbm");
        r.tx_power_dbm = col.contains("tx_power_dbm") ? num("tx_power_dbm") : kUnset;
        r.rssi_offset_db = col.contains("rssi_offset_db") ? num("rssi_offset_db") : kUnset;
        validate_record(r, line_no);
        ds.records.push_back(std::move(r));
    }
    if (header.empty())
        throw SchemaError("trace has no column header");
    finish_records(ds);
    return ds;
}

TraceDataset parse_jsonl(std::istream& in)
{
    TraceDataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = text::trim(line);
        if (t.empty())
            continue;
        if (t.front() == '#') {
            apply_metadata(ds.metadata, t, line_no);
            continue;
        }
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(t);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object())
            throw ParseError(line_no, "expected a JSON object");
        for (const auto& req : kRequiredColumns)
            if (!obj.contains(req))
                throw SchemaError("line " + std::to_string(line_no) + ": missing required field '" + req + "'");

        auto num = [&](const char* name) {
            const auto& v = obj.at(name);
            if (!v.is_number())
                throw ParseError(line_no, std::string("field '") + name + "' is not a number");
            return v.get<double>();
        };
        auto id = [&](const char* name) {
            const auto& v = obj.at(name);
            if (v.is_string())
                return v.get<std::string>();
            if (v.is_number_integer())
                return std::to_string(v.get<long long>());
            throw ParseError(line_no, std::string("field '") + name + "' must be a string or integer");
        };
        RssiRecord r;
        r.timestamp = num("timestamp");
        r.tx_id = id("tx_id");
        r.rx_id = id("rx_id");
        if (!obj.at("seq_no").is_number_integer())
            throw ParseError(line_no, "field 'seq_no' is not an integer");
        r.seq_no = obj.at("seq_no").get<std::int64_t>();
        r.distance_m = num("distance_m");
        r.rssi_dbm = num("rssi_dbm");
        r.tx_power_dbm = obj.contains("tx_power_dbm") ? num("tx_power_dbm") : kUnset;
        r.rssi_offset_db = obj.contains("rssi_offset_db") ? num("rssi_offset_db") : kUnset;
        validate_record(r, line_no);
        ds.records.push_back(std::move(r));
    }
    finish_records(ds);
    return ds;
}

}  // namespace

double TraceDataset::noise_floor_dbm() const
{
    if (!metadata.noise_floor_dbm)
        throw SchemaError("trace metadata has no noise_floor_dbm");
    return *metadata.noise_floor_dbm;
}

double TraceDataset::tx_power_dbm() const
{
    if (!metadata.tx_power_dbm)
        throw SchemaError("trace metadata has no tx_power_dbm");
    return *metadata.tx_power_dbm;
}

TraceDataset parse_trace(std::istream& source, TraceFormat format)
{
    return format == TraceFormat::csv ? parse_csv(source) : parse_jsonl(source);
}

TraceDataset load_trace(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open trace file '" + path.string() + "'");
    const auto ext = path.extension().string();
    const auto format = (ext == ".jsonl" || ext == ".json") ? TraceFormat::jsonl : TraceFormat::csv;
    return parse_trace(in, format);
}

void write_trace_csv(std::ostream& out, const TraceDataset& ds)
{
    const auto& m = ds.metadata;
    if (m.trial)
        out << "# trial=" << *m.trial << '\n';
    if (m.tx_power_dbm)
        out << "# tx_power_dbm=" << text::format_double(*m.tx_power_dbm) << '\n';
    if (m.rate_hz)
        out << "# rate_hz=" << text::format_double(*m.rate_hz) << '\n';
    if (m.noise_floor_dbm)
        out << "# noise_floor_dbm=" << text::format_double(*m.noise_floor_dbm) << '\n';
    out << "# rssi_offset_db=" << text::format_double(m.rssi_offset_db) << '\n';
    for (const auto& [k, v] : m.extra)
        out << "# " << k << '=' << v << '\n';

    const bool per_row_power = std::any_of(ds.records.begin(), ds.records.end(), [&](const RssiRecord& r) {
        return !m.tx_power_dbm || r.tx_power_dbm != *m.tx_power_dbm;
    });
    out << "timestamp,tx_id,rx_id,seq_no,distance_m,rssi_dbm";
    if (per_row_power)
        out << ",tx_power_dbm";
    out << '\n';
    for (const auto& r : ds.records) {
        out << text::format_double(r.timestamp) << ',' << r.tx_id << ',' << r.rx_id << ',' << r.seq_no << ','
            << text::format_double(r.distance_m) << ',' << text::format_double(r.rssi_dbm);
        if (per_row_power)
            out << ',' << text::format_double(r.tx_power_dbm);
        out << '\n';
    }
}

std::vector<PathLossSample> to_pathloss(const TraceDataset& ds)
{
    std::vector<PathLossSample> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records) {
        if (std::isnan(r.tx_power_dbm))
            throw SchemaError("tx_power_dbm unknown for record seq_no " + std::to_string(r.seq_no) + " on link " +
                              r.link().str());
        out.push_back({r.distance_m, (r.rssi_dbm + r.rssi_offset_db) - r.tx_power_dbm, r.timestamp, r.link()});
    }
    return out;
}

std::map<LinkId, std::vector<std::size_t>> group_by_link(const TraceDataset& ds)
{
    std::map<LinkId, std::vector<std::size_t>> links;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        auto& idx = links[ds.records[i].link()];
        if (!idx.empty()) {
            const auto& prev = ds.records[idx.back()];
            const auto& cur = ds.records[i];
            if (cur.seq_no <= prev.seq_no)
                throw StreamError("link " + cur.link().str() + ": seq_no " + std::to_string(cur.seq_no) +
                                  " does not increase (previous " + std::to_string(prev.seq_no) + ")");
            if (cur.timestamp < prev.timestamp)
                throw StreamError("link " + cur.link().str() + ": timestamp decreases at seq_no " +
                                  std::to_string(cur.seq_no));
        }
        idx.push_back(i);
    }
    return links;
}

std::vector<double> uniform_edges(double lo, double hi, double width)
{
    if (!(width > 0.0) || !(hi >= lo))
        throw ParameterError("uniform_edges: need width > 0 and hi >= lo");
    std::vector<double> edges;
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / width)) + 1;
    for (std::size_t i = 0; i <= n; ++i)
        edges.push_back(lo + static_cast<double>(i) * width);
    return edges;
}

std::vector<CensusBin> loss_census(const TraceDataset& ds, std::span<const double> edges)
{
    if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()))
        throw ParameterError("loss_census: need at least two increasing bin edges");
    std::vector<CensusBin> bins(edges.size() - 1);
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        bins[i].lo_m = edges[i];
        bins[i].hi_m = edges[i + 1];
    }
    auto bin_of = [&](double d) {
        if (d < edges.front() || d > edges.back())
            throw ParameterError("loss_census: distance " + text::format_double(d) + " m outside bin edges");
        const auto it = std::upper_bound(edges.begin(), edges.end(), d);
        const auto k = static_cast<std::size_t>(it - edges.begin());
        return std::min(k, edges.size() - 1) - 1;
    };

    for (const auto& [link, idx] : group_by_link(ds)) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const auto& r = ds.records[idx[j]];
            const auto b = bin_of(r.distance_m);
            ++bins[b].received;
            if (j + 1 < idx.size()) {
                const auto gap = ds.records[idx[j + 1]].seq_no - r.seq_no - 1;
                bins[b].lost += static_cast<std::size_t>(gap);
            }
        }
    }
    return bins;
}

}  // namespace v2vprop
