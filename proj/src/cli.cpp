#include "v2vprop/cli.hpp"

#include "v2vprop/error.hpp"
#include "v2vprop/fading.hpp"
#include "v2vprop/model_io.hpp"
#include "v2vprop/pathloss.hpp"
#include "v2vprop/sim.hpp"
#include "v2vprop/stats.hpp"
#include "v2vprop/text.hpp"
#include "v2vprop/trace.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <list>
#include <sstream>

namespace v2vprop {
namespace {

namespace fs = std::filesystem;
using text::format_double;

struct Global {
    std::string out_dir = ".";
    std::uint64_t seed = 1;
};

struct FitArgs {
    std::string trace;
    std::string segment1 = "two_ray";
    std::vector<double> breakpoints = FitConfig::default_breakpoints();
    bool mode_fit = false;
    bool unconstrained = false;
    double h_m = 1.6;
    double lambda_m = 0.0512;
    double d0_m = 10.0;
    std::optional<double> noise_floor;
    std::optional<double> tx_power;
    double sigma_bin_logd = 0.5;
    double mode_bin_logd = 0.5;
    double mode_value_bin_db = 1.0;
    double mode_margin_db = 3.0;
    std::size_t curve_points = 400;
};

struct FadingArgs {
    std::string trace;
    std::string model;
    std::vector<std::size_t> window_p = {25, 50, 100, 200};
    std::size_t min_len = 500;
    double max_loss = 0.02;
    double acf_threshold = 0.2;
    std::size_t max_lag = 20;
    bool sliding = false;
    std::size_t cdf_points = 1000;
};

struct SimulateArgs {
    std::string model;
    std::string mobility;
    bool no_fading = false;
    PhyConfig phy;
    std::optional<double> noise_floor;
    double decorrelation_m = 25.0;
    double d_max_m = 2000.0;
    double bin_width_m = 40.0;
};

struct EvaluateArgs {
    std::string sim;
    std::string ref;
    double bin_width_m = 40.0;
};

struct QqArgs {
    std::string trace;
    double d_min = 0.0;
    double d_max = 0.0;
    double census_bin_m = 100.0;
};

// Output files are collected first and written only once every computation
// has succeeded, so a failing command leaves no partial results behind.
class Outputs {
public:
    explicit Outputs(std::string dir) : dir_(std::move(dir)) {}

    std::ostringstream& file(const std::string& name)
    {
        files_.emplace_back(name, std::ostringstream{});
        return files_.back().second;
    }

    void commit() const
    {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec)
            throw IoError("cannot create output directory '" + dir_ + "': " + ec.message());
        for (const auto& [name, body] : files_) {
            const auto path = fs::path(dir_) / name;
            std::ofstream out(path, std::ios::binary);
            out << body.str();
            if (!out)
                throw IoError("cannot write '" + path.string() + "'");
        }
    }

private:
    std::string dir_;
    std::list<std::pair<std::string, std::ostringstream>> files_;
};

TraceDataset read_trace(const std::string& path)
{
    if (!fs::exists(path))
        throw IoError("no such file '" + path + "'");
    return load_trace(path);
}

double trace_tx_power(const TraceDataset& ds, std::optional<double> flag)
{
    if (flag)
        return *flag;
    if (ds.metadata.tx_power_dbm)
        return *ds.metadata.tx_power_dbm;
    if (!ds.records.empty())
        return ds.records.front().tx_power_dbm;
    throw UsageError("transmit power unknown: pass --tx-power or add tx_power_dbm to the trace");
}

double trace_noise_floor(const TraceDataset& ds, std::optional<double> flag)
{
    if (flag)
        return *flag;
    if (ds.metadata.noise_floor_dbm)
        return *ds.metadata.noise_floor_dbm;
    throw UsageError("noise floor unknown: pass --noise-floor or add noise_floor_dbm to the trace");
}

void run_fit(const FitArgs& a, const Global& g)
{
    const auto ds = read_trace(a.trace);
    const auto samples = to_pathloss(ds);

    FitConfig cfg;
    cfg.segment1 = segment1_from_string(a.segment1);
    cfg.breakpoints = a.breakpoints;
    cfg.h_m = a.h_m;
    cfg.lambda_m = a.lambda_m;
    cfg.d0_m = a.d0_m;
    cfg.mode_fit = a.mode_fit;
    cfg.constrain_segment2 = !a.unconstrained;
    cfg.mode.bin_width_logd = a.mode_bin_logd;
    cfg.mode.value_bin_db = a.mode_value_bin_db;
    cfg.mode.margin_db = a.mode_margin_db;
    if (a.noise_floor || ds.metadata.noise_floor_dbm || a.mode_fit)
        cfg.noise_floor_dbm = trace_noise_floor(ds, a.noise_floor);
    if (a.mode_fit)
        cfg.tx_power_dbm = trace_tx_power(ds, a.tx_power);

    const auto fit = fit_model(samples, cfg);
    for (const auto& w : fit.warnings)
        std::cerr << "warning: " << w << '\n';

    Outputs out(g.out_dir);
    ChannelModel cm;
    cm.pathloss = fit.model;
    out.file("model.json") << model_to_json(cm);

    auto& scatter = out.file("scatter.csv");
    scatter << "distance_m,pl_db,link_id\n";
    for (const auto& s : samples)
        scatter << format_double(s.distance_m) << ',' << format_double(s.pl_db) << ',' << s.link.str() << '\n';

    double d_hi = fit.model.d_br_m;
    for (const auto& s : samples)
        d_hi = std::max(d_hi, s.distance_m);
    const double d_lo = fit.model.d0_m();
    auto& curve = out.file("curve.csv");
    curve << "distance_m,pl_db\n";
    const std::size_t n = std::max<std::size_t>(a.curve_points, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = d_lo * std::pow(d_hi / d_lo, static_cast<double>(i) / static_cast<double>(n - 1));
        curve << format_double(d) << ',' << format_double(fit.model.median_pl(d)) << '\n';
    }

    auto& sig = out.file("sigma_bins.csv");
    sig << "bin_lo_m,bin_hi_m,count,mean_residual_db,std_residual_db\n";
    for (const auto& b : sigma_by_bin(samples, fit.model, a.sigma_bin_logd))
        sig << format_double(b.lo_m) << ',' << format_double(b.hi_m) << ',' << b.count << ','
            << format_double(b.mean_residual_db) << ',' << format_double(b.std_residual_db) << '\n';

    auto& bp = out.file("breakpoint_rms.csv");
    bp << "d_br_m,rms_db,feasible,note\n";
    for (const auto& c : fit.table)
        bp << format_double(c.d_br_m) << ',' << (c.feasible ? format_double(c.rms_db) : "") << ','
           << (c.feasible ? 1 : 0) << ',' << c.note << '\n';

    if (a.mode_fit) {
        auto& med = out.file("medians.csv");
        med << "distance_m,pl_db,count\n";
        for (const auto& m : fit.medians)
            med << format_double(m.distance_m) << ',' << format_double(m.pl_median_db) << ',' << m.count << '\n';
    }
    out.commit();
}

void run_fading(const FadingArgs& a, const Global& g)
{
    const auto ds = read_trace(a.trace);
    std::optional<ChannelModel> cm;
    if (!a.model.empty()) {
        if (!fs::exists(a.model))
            throw IoError("no such file '" + a.model + "'");
        cm = load_model(a.model);
    }

    FadingOptions opts;
    opts.min_len = a.min_len;
    opts.max_loss_fraction = a.max_loss;
    opts.window_candidates = a.window_p;
    opts.acf_threshold = a.acf_threshold;
    opts.max_lag = a.max_lag;
    opts.mode = a.sliding ? WindowMode::sliding : WindowMode::non_overlapping;
    const auto res = analyze_fading(ds, opts);

    nlohmann::ordered_json doc;
    doc["fading"] = res.model ? nlohmann::ordered_json::parse(fading_to_json(*res.model)) : nullptr;
    doc["signatures"] = res.signatures.size();
    doc["samples"] = res.block.samples.size();
    if (res.model) {
        doc["window_p"] = res.selection.window_p;
        doc["window_converged"] = res.selection.converged;
        auto report = nlohmann::ordered_json::array();
        for (const auto& c : res.selection.report)
            report.push_back({{"window_p", c.window_p}, {"acf_max_abs", c.acf_max_abs}, {"usable", c.usable}});
        doc["window_report"] = report;
    }
    doc["note"] = res.note;

    Outputs out(g.out_dir);
    out.file("fading.json") << doc.dump(2) << '\n';

    auto& cdf = out.file("cdf.csv");
    cdf << "power,empirical,nakagami,gaussian\n";
    auto& acf = out.file("acf.csv");
    acf << "lag,acf\n";
    if (res.model) {
        auto x = res.block.samples;
        std::sort(x.begin(), x.end());
        const auto& fit = res.model->fit;
        const std::size_t n = x.size();
        const std::size_t k = std::min(n, std::max<std::size_t>(a.cdf_points, 2));
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t i = k == 1 ? 0 : j * (n - 1) / (k - 1);
            const double naka = std::isinf(fit.m) ? (x[i] >= 1.0 ? 1.0 : 0.0) : stats::nakagami_power_cdf(x[i], fit.m);
            cdf << format_double(x[i]) << ',' << format_double(static_cast<double>(i + 1) / static_cast<double>(n))
                << ',' << format_double(naka) << ',' << format_double(stats::normal_cdf(x[i], fit.mu, fit.sigma))
                << '\n';
        }
        const auto r = stats::autocorr(res.block.samples, a.max_lag);
        for (std::size_t lag = 0; lag < r.size(); ++lag)
            acf << lag << ',' << format_double(r[lag]) << '\n';
    }

    if (cm && res.model) {
        for (const auto& w : apply_sigma_split(cm->pathloss, *res.model))
            std::cerr << "warning: " << w << '\n';
        cm->fading = res.model;
        out.file("model.json") << model_to_json(*cm);
    }
    if (!res.model)
        std::cerr << "note: " << res.note << '\n';
    out.commit();
}

void run_simulate(SimulateArgs a, const Global& g)
{
    if (!fs::exists(a.model))
        throw IoError("no such file '" + a.model + "'");
    if (!fs::exists(a.mobility))
        throw IoError("no such file '" + a.mobility + "'");
    const auto cm = load_model(a.model);
    const auto mob = load_mobility(a.mobility);
    a.phy.noise_floor_dbm = a.noise_floor.value_or(cm.pathloss.noise_floor_dbm.value_or(-96.0));
    a.phy.validate();

    const FadingModel* fading = (cm.fading && !a.no_fading) ? &*cm.fading : nullptr;
    const auto log = simulate_run(cm.pathloss, fading, mob, a.phy, g.seed, SimOptions{a.decorrelation_m, a.d_max_m});

    Outputs out(g.out_dir);
    write_packet_log_csv(out.file("packets.csv"), log);
    write_metric_csv(out.file("per.csv"), per_by_bin(log, a.bin_width_m));
    write_metric_csv(out.file("ipg95.csv"), ipg95_by_bin(log, a.bin_width_m));
    out.commit();
}

bool is_metric_file(const std::string& path)
{
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        const auto t = text::trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        return t.starts_with("bin_lo_m");
    }
    return false;
}

BinnedMetric checked_abs_error(const BinnedMetric& sim, const BinnedMetric& ref)
{
    try {
        return abs_error(sim, ref);
    } catch (const ParameterError& e) {
        throw UsageError(std::string("incompatible bin grids: ") + e.what());
    }
}

void run_evaluate(const EvaluateArgs& a, const Global& g)
{
    for (const auto& p : {a.sim, a.ref})
        if (!fs::exists(p))
            throw IoError("no such file '" + p + "'");
    const bool sim_metric = is_metric_file(a.sim);
    if (sim_metric != is_metric_file(a.ref))
        throw UsageError("evaluate needs two packet logs or two metric files");

    Outputs out(g.out_dir);
    if (sim_metric) {
        write_metric_csv(out.file("abs_error.csv"), checked_abs_error(load_metric(a.sim), load_metric(a.ref)));
    } else {
        const auto sim = load_packet_log(a.sim);
        const auto ref = load_packet_log(a.ref);
        write_metric_csv(out.file("per_abs_error.csv"),
                         checked_abs_error(per_by_bin(sim, a.bin_width_m), per_by_bin(ref, a.bin_width_m)));
        write_metric_csv(out.file("ipg95_abs_error.csv"),
                         checked_abs_error(ipg95_by_bin(sim, a.bin_width_m), ipg95_by_bin(ref, a.bin_width_m)));
    }
    out.commit();
}

void run_qq(const QqArgs& a, const Global& g)
{
    if (!(a.d_max > a.d_min) || a.d_min < 0.0)
        throw UsageError("qq needs 0 <= --d-min < --d-max");
    const auto ds = read_trace(a.trace);
    std::vector<double> pl;
    for (const auto& s : to_pathloss(ds))
        if (s.distance_m >= a.d_min && s.distance_m < a.d_max)
            pl.push_back(s.pl_db);

    Outputs out(g.out_dir);
    auto& qq = out.file("qq.csv");
    qq << "theoretical_db,empirical_db\n";
    if (pl.size() >= 2)
        for (const auto& p : stats::qq_gaussian(pl))
            qq << format_double(p.theoretical) << ',' << format_double(p.empirical) << '\n';

    auto& census = out.file("census.csv");
    census << "bin_lo_m,bin_hi_m,received,lost\n";
    if (!(a.census_bin_m > 0.0))
        throw UsageError("--census-bin must be positive");
    std::vector<double> edges;
    const auto nbins = static_cast<std::size_t>(std::ceil((a.d_max - a.d_min) / a.census_bin_m - 1e-9));
    for (std::size_t i = 0; i <= nbins; ++i)
        edges.push_back(std::min(a.d_min + static_cast<double>(i) * a.census_bin_m, a.d_max));
    // pad the edges so every record has a bin; only the requested range is written
    double d_lo = a.d_min, d_hi = a.d_max;
    for (const auto& r : ds.records) {
        d_lo = std::min(d_lo, r.distance_m);
        d_hi = std::max(d_hi, r.distance_m);
    }
    if (d_lo < a.d_min)
        edges.insert(edges.begin(), d_lo);
    if (d_hi >= a.d_max)
        edges.push_back(std::nextafter(d_hi, HUGE_VAL) + 1.0);
    for (const auto& b : loss_census(ds, edges))
        if (b.lo_m >= a.d_min && b.hi_m <= a.d_max)
            census << format_double(b.lo_m) << ',' << format_double(b.hi_m) << ',' << b.received << ',' << b.lost
               << '\n';
    out.commit();
}

}  // namespace

int run_cli(int argc, const char* const* argv)
{
    CLI::App app{"Vehicle-to-vehicle propagation model fitting and simulation"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value configuration file; command line flags take precedence");
    Global g;
    app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit", "Fit the median path loss model to a trace");
    c_fit->add_option("trace", fit.trace, "Trace file (.csv or .jsonl)")->required();
    c_fit->add_option("--segment1", fit.segment1, "First segment model")
        ->check(CLI::IsMember({"two_ray", "linear"}))
        ->capture_default_str();
    c_fit->add_option("--breakpoints", fit.breakpoints, "Candidate breakpoints in m")->delimiter(',');
    c_fit->add_flag("--mode-fit", fit.mode_fit, "Use histogram-mode medians for the second segment");
    c_fit->add_flag("--unconstrained", fit.unconstrained, "Do not tie the second segment to the first at d_br");
    c_fit->add_option("--height", fit.h_m, "Antenna height in m")->capture_default_str();
    c_fit->add_option("--lambda", fit.lambda_m, "Wavelength in m")->capture_default_str();
    c_fit->add_option("--d0", fit.d0_m, "Reference distance in m")->capture_default_str();
    c_fit->add_option("--noise-floor", fit.noise_floor, "Noise floor in dBm (default: trace metadata)");
    c_fit->add_option("--tx-power", fit.tx_power, "Transmit power in dBm (default: trace metadata)");
    c_fit->add_option("--sigma-bin-width", fit.sigma_bin_logd, "Sigma bin width in dB of distance")
        ->capture_default_str();
    c_fit->add_option("--mode-bin-width", fit.mode_bin_logd, "Mode-fit distance bin width in dB of distance")
        ->capture_default_str();
    c_fit->add_option("--mode-value-bin", fit.mode_value_bin_db, "Mode-fit histogram bin in dB")
        ->capture_default_str();
    c_fit->add_option("--mode-margin", fit.mode_margin_db, "Required clearance of the mode above the cut in dB")
        ->capture_default_str();
    c_fit->add_option("--curve-points", fit.curve_points, "Samples in curve.csv")->capture_default_str();

    FadingArgs fad;
    auto* c_fad = app.add_subcommand("fading", "Fit the multipath fading distribution");
    c_fad->add_option("trace", fad.trace, "Trace file (.csv or .jsonl)")->required();
    c_fad->add_option("--model", fad.model, "Model file to extend with the fading fit and shadow split");
    c_fad->add_option("--window-p", fad.window_p, "Candidate normalization windows in packets")->delimiter(',');
    c_fad->add_option("--min-len", fad.min_len, "Minimum signature length in packets")->capture_default_str();
    c_fad->add_option("--max-loss", fad.max_loss, "Maximum loss fraction inside a signature")
        ->capture_default_str();
    c_fad->add_option("--acf-threshold", fad.acf_threshold, "Largest acceptable |ACF|")->capture_default_str();
    c_fad->add_option("--max-lag", fad.max_lag, "Largest ACF lag checked")->capture_default_str();
    c_fad->add_flag("--sliding", fad.sliding, "Normalize with a sliding window");
    c_fad->add_option("--cdf-points", fad.cdf_points, "Rows in cdf.csv")->capture_default_str();

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Simulate packet reception over a mobility trace");
    c_sim->add_option("--model", sim.model, "Model file")->required();
    c_sim->add_option("--mobility", sim.mobility, "Mobility CSV (link_id,timestamp,distance_m)")->required();
    c_sim->add_flag("--no-fading", sim.no_fading, "Ignore the multipath part of the model");
    c_sim->add_option("--tx-power", sim.phy.tx_power_dbm, "Transmit power in dBm")->capture_default_str();
    c_sim->add_option("--rate", sim.phy.rate_hz, "Packet rate in Hz")->capture_default_str();
    c_sim->add_option("--noise-floor", sim.noise_floor, "Noise floor in dBm (default: model, else -96)");
    c_sim->add_option("--interference", sim.phy.interference_loss_prob, "Independent loss probability")
        ->capture_default_str();
    c_sim->add_option("--decorrelation", sim.decorrelation_m, "Shadow decorrelation distance in m (0: iid)")
        ->capture_default_str();
    c_sim->add_option("--d-max", sim.d_max_m, "Largest simulated distance in m")->capture_default_str();
    c_sim->add_option("--bin-width", sim.bin_width_m, "Metric bin width in m")->capture_default_str();

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "Absolute PER / IPG95 error between two runs");
    c_ev->add_option("sim", ev.sim, "Packet log or metric CSV")->required();
    c_ev->add_option("ref", ev.ref, "Reference packet log or metric CSV")->required();
    c_ev->add_option("--bin-width", ev.bin_width_m, "Metric bin width in m for packet logs")->capture_default_str();

    QqArgs qq;
    auto* c_qq = app.add_subcommand("qq", "Gaussian QQ pairs and loss census over a distance range");
    c_qq->add_option("trace", qq.trace, "Trace file (.csv or .jsonl)")->required();
    c_qq->add_option("--d-min", qq.d_min, "Lower distance in m")->required();
    c_qq->add_option("--d-max", qq.d_max, "Upper distance in m (exclusive)")->required();
    c_qq->add_option("--census-bin", qq.census_bin_m, "Census bin width in m")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*c_fit)
            run_fit(fit, g);
        else if (*c_fad)
            run_fading(fad, g);
        else if (*c_sim)
            run_simulate(sim, g);
        else if (*c_ev)
            run_evaluate(ev, g);
        else if (*c_qq)
            run_qq(qq, g);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace v2vprop
