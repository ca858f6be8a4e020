#include "v2vprop/pathloss.hpp"

#include "v2vprop/error.hpp"
#include "v2vprop/stats.hpp"
#include "v2vprop/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace v2vprop {

namespace {

constexpr double kMinGain = 1e-30;  // -300 dB floor for degenerate two-ray fits

double db(double linear) { return 10.0 * std::log10(std::max(linear, kMinGain)); }

double two_ray_phase_cos(double d, double h, double lambda)
{
    const double d_reflect = std::sqrt(d * d + 4.0 * h * h);
    return std::cos(2.0 * std::numbers::pi * (d_reflect - d) / lambda);
}

}  // namespace

double LinearSegParams::predict(double d) const
{
    return a_db - b * 10.0 * std::log10(d / d0_m);
}

const char* to_string(Segment1Kind k)
{
    return k == Segment1Kind::two_ray ? "two_ray" : "linear";
}

Segment1Kind segment1_from_string(const std::string& s)
{
    if (s == "two_ray" || s == "two-ray" || s == "tworay")
        return Segment1Kind::two_ray;
    if (s == "linear")
        return Segment1Kind::linear;
    throw ParameterError("unknown segment-1 kind '" + s + "' (expected two_ray or linear)");
}

double PathLossModel::segment1_pl(double d) const
{
    return segment1 == Segment1Kind::two_ray ? two_ray_predict_db(d, two_ray) : linear1.predict(d);
}

double PathLossModel::median_pl(double d) const
{
    return d < d_br_m ? segment1_pl(d) : segment2_pl(d);
}

double two_ray_predict(double d, const TwoRayParams& p)
{
    if (!(d >= p.d0_m))
        throw DomainError("two_ray_predict: d = " + text::format_double(d) + " m is below d0 = " +
                          text::format_double(p.d0_m) + " m");
    const double spread = (p.d0_m / d) * (p.d0_m / d);
    return spread * (p.a1 - p.b1 * two_ray_phase_cos(d, p.h_m, p.lambda_m));
}

double two_ray_predict_db(double d, const TwoRayParams& p)
{
    return db(two_ray_predict(d, p));
}

std::vector<double> dip_distances(double h, double lambda, int n_max)
{
    if (!(h > 0.0) || !(lambda > 0.0))
        throw ParameterError("dip_distances: h and lambda must be > 0");
    std::vector<double> out;
    for (int n = 1; n <= n_max; ++n) {
        const double nl = n * lambda;
        const double d = (4.0 * h * h - nl * nl) / (2.0 * nl);
        if (d > 0.0)
            out.push_back(d);
    }
    return out;
}

TwoRayFit fit_two_ray(std::span<const PathLossSample> samples, double h, double lambda, double d0, double d_max)
{
    std::vector<const PathLossSample*> used;
    for (const auto& s : samples)
        if (s.distance_m >= d0 && s.distance_m <= d_max)
            used.push_back(&s);
    if (used.size() < 10)
        throw InsufficientDataError("fit_two_ray: need at least 10 samples in [" + text::format_double(d0) + ", " +
                                    text::format_double(d_max) + "] m, got " + std::to_string(used.size()));

    const auto n = static_cast<Eigen::Index>(used.size());
    Eigen::MatrixXd design(n, 2);
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = *used[static_cast<std::size_t>(i)];
        const double ratio = s.distance_m / d0;
        target(i) = std::pow(10.0, s.pl_db / 10.0) * ratio * ratio;
        design(i, 0) = 1.0;
        design(i, 1) = -two_ray_phase_cos(s.distance_m, h, lambda);
    }

    TwoRayFit out;
    out.params = {0.0, 0.0, h, lambda, d0};
    out.samples_used = used.size();

    const auto fit = stats::lsq_fit(design, target);
    out.params.a1 = fit.coef(0);
    out.params.b1 = fit.coef(1);
    if (out.params.b1 < 0.0) {
        out.warnings.push_back("fitted b1 < 0 clamped to 0");
        out.params.b1 = 0.0;
        out.params.a1 = stats::lsq_fit(design.leftCols(1), target).coef(0);
    }

    // Re-centre so the mean dB residual is zero.
    double log_ratio = 0.0;
    std::size_t positive = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double pred = out.params.a1 + out.params.b1 * design(i, 1);
        if (pred > 0.0 && target(i) > 0.0) {
            log_ratio += std::log(target(i) / pred);
            ++positive;
        }
    }
    if (positive > 0) {
        const double scale = std::exp(log_ratio / static_cast<double>(positive));
        out.params.a1 *= scale;
        out.params.b1 *= scale;
    }

    if (!(out.params.a1 > out.params.b1)) {
        out.degenerate = true;
        out.warnings.push_back("degenerate two-ray fit: a1 <= b1");
    }

    double ss = 0.0;
    for (const auto* s : used) {
        const double r = s->pl_db - two_ray_predict_db(s->distance_m, out.params);
        ss += r * r;
    }
    out.rms_db = std::sqrt(ss / static_cast<double>(used.size()));
    return out;
}

LinearSegFit fit_linear_segment(std::span<const PathLossSample> samples, double d_br,
                                std::optional<double> anchor_pl, double d0)
{
    if (samples.empty())
        throw InsufficientDataError("fit_linear_segment: no samples");
    const auto n = static_cast<Eigen::Index>(samples.size());
    LinearSegFit out;
    out.samples_used = samples.size();
    out.params.d0_m = d0;

    if (anchor_pl) {
        // pl - anchor = -b * 10 log10(d / d_br)
        Eigen::MatrixXd design(n, 1);
        Eigen::VectorXd target(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& s = samples[static_cast<std::size_t>(i)];
            if (!(s.distance_m > d_br))
                throw ParameterError("fit_linear_segment: sample at " + text::format_double(s.distance_m) +
                                     " m is not beyond the breakpoint " + text::format_double(d_br) + " m");
            design(i, 0) = -10.0 * std::log10(s.distance_m / d_br);
            target(i) = s.pl_db - *anchor_pl;
        }
        const auto fit = stats::lsq_fit(design, target);
        out.params.b = fit.coef(0);
        out.params.a_db = *anchor_pl + out.params.b * 10.0 * std::log10(d_br / d0);
        out.rms_db = fit.rms;
    } else {
        Eigen::MatrixXd design(n, 2);
        Eigen::VectorXd target(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& s = samples[static_cast<std::size_t>(i)];
            design(i, 0) = 1.0;
            design(i, 1) = -10.0 * std::log10(s.distance_m / d0);
            target(i) = s.pl_db;
        }
        const auto fit = stats::lsq_fit(design, target);
        out.params.a_db = fit.coef(0);
        out.params.b = fit.coef(1);
        out.rms_db = fit.rms;
    }
    return out;
}

std::vector<MedianPoint> mode_fit_medians(std::span<const PathLossSample> samples, double noise_floor_dbm,
                                          double tx_power_dbm, const ModeFitOptions& opts)
{
    if (!(opts.bin_width_logd > 0.0) || !(opts.value_bin_db > 0.0))
        throw ParameterError("mode_fit_medians: bin widths must be > 0");
    const double censor_pl = noise_floor_dbm - tx_power_dbm;

    struct Bin {
        std::vector<double> pl;
        double sum_logd = 0.0;
    };
    std::map<std::int64_t, Bin> bins;
    for (const auto& s : samples) {
        const double logd = 10.0 * std::log10(s.distance_m);
        auto& b = bins[static_cast<std::int64_t>(std::floor(logd / opts.bin_width_logd))];
        b.pl.push_back(s.pl_db);
        b.sum_logd += logd;
    }

    std::vector<MedianPoint> out;
    for (const auto& [k, b] : bins) {
        if (b.pl.size() < opts.min_samples)
            continue;
        const auto m = stats::histogram_mode(b.pl, opts.value_bin_db, censor_pl);
        if (!m.unimodal || m.mode < censor_pl + opts.margin_db)
            continue;
        const double mean_logd = b.sum_logd / static_cast<double>(b.pl.size());
        out.push_back({std::pow(10.0, mean_logd / 10.0), m.mode, MedianPoint::Source::bin_mode, b.pl.size()});
    }
    return out;
}

std::vector<double> FitConfig::default_breakpoints()
{
    std::vector<double> out;
    for (int d = 100; d <= 600; d += 50)
        out.push_back(d);
    return out;
}

std::vector<PathLossSample> as_samples(std::span<const MedianPoint> points)
{
    std::vector<PathLossSample> out;
    out.reserve(points.size());
    for (const auto& p : points)
        out.push_back({p.distance_m, p.pl_median_db, 0.0, {}});
    return out;
}

namespace {

struct CandidateResult {
    PathLossModel model;
    double rms = 0.0;
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    std::vector<std::string> warnings;
};

CandidateResult fit_candidate(std::span<const PathLossSample> samples, double d_br, const FitConfig& cfg,
                              std::span<const MedianPoint> medians)
{
    std::vector<PathLossSample> near, far;
    for (const auto& s : samples) {
        if (s.distance_m > d_br)
            far.push_back(s);
        else if (cfg.segment1 == Segment1Kind::linear || s.distance_m >= cfg.d0_m)
            near.push_back(s);
    }

    CandidateResult out;
    auto& m = out.model;
    m.segment1 = cfg.segment1;
    m.d_br_m = d_br;
    m.noise_floor_dbm = cfg.noise_floor_dbm;
    if (cfg.segment1 == Segment1Kind::two_ray) {
        auto fit = fit_two_ray(near, cfg.h_m, cfg.lambda_m, cfg.d0_m, d_br);
        m.two_ray = fit.params;
        out.warnings = std::move(fit.warnings);
    } else {
        m.linear1 = fit_linear_segment(near, d_br, std::nullopt, cfg.d0_m).params;
    }
    m.linear1.d0_m = cfg.d0_m;
    m.two_ray.d0_m = cfg.d0_m;

    const double anchor = m.segment1_pl(d_br);
    const auto anchor_opt = cfg.constrain_segment2 ? std::optional<double>(anchor) : std::nullopt;
    if (!medians.empty()) {
        std::vector<MedianPoint> beyond;
        for (const auto& p : medians)
            if (p.distance_m > d_br)
                beyond.push_back(p);
        const auto pts = as_samples(beyond);
        m.segment2 = fit_linear_segment(pts, d_br, anchor_opt, cfg.d0_m).params;
    } else {
        m.segment2 = fit_linear_segment(far, d_br, anchor_opt, cfg.d0_m).params;
    }
    if (!(m.segment2.b > 0.0))
        out.warnings.push_back("segment-2 slope b2 <= 0: path loss does not grow with distance");

    double ss1 = 0.0, ss2 = 0.0;
    for (const auto& s : near) {
        const double r = s.pl_db - m.segment1_pl(s.distance_m);
        ss1 += r * r;
    }
    for (const auto& s : far) {
        const double r = s.pl_db - m.segment2_pl(s.distance_m);
        ss2 += r * r;
    }
    out.sigma1 = near.empty() ? 0.0 : std::sqrt(ss1 / static_cast<double>(near.size()));
    out.sigma2 = far.empty() ? 0.0 : std::sqrt(ss2 / static_cast<double>(far.size()));
    out.rms = std::sqrt((ss1 + ss2) / static_cast<double>(near.size() + far.size()));
    m.sigma1_db = out.sigma1;
    m.sigma2_db = out.sigma2;
    return out;
}

}  // namespace

PathLossFit search_breakpoint(std::span<const PathLossSample> samples, std::span<const double> candidates,
                              const FitConfig& cfg, std::span<const MedianPoint> medians)
{
    if (candidates.empty())
        throw ParameterError("search_breakpoint: no candidate breakpoints");
    std::vector<double> sorted(candidates.begin(), candidates.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    const bool lone = sorted.size() == 1;

    PathLossFit out;
    std::optional<CandidateResult> best;
    for (double c : sorted) {
        BreakpointCandidate row{c, 0.0, false, {}};
        std::size_t n_near = 0, n_far = 0, n_med = 0;
        for (const auto& s : samples) {
            if (s.distance_m > c)
                ++n_far;
            else if (cfg.segment1 == Segment1Kind::linear || s.distance_m >= cfg.d0_m)
                ++n_near;
        }
        for (const auto& p : medians)
            n_med += p.distance_m > c ? 1 : 0;
        const std::size_t need_med = cfg.constrain_segment2 ? 1 : 2;
        if (!lone && (n_near < cfg.min_side_samples || n_far < cfg.min_side_samples)) {
            row.note = "fewer than " + std::to_string(cfg.min_side_samples) + " samples on one side";
        } else if (!lone && !medians.empty() && n_med < need_med) {
            row.note = "not enough mode-fit medians beyond the breakpoint";
        } else {
            try {
                auto r = fit_candidate(samples, c, cfg, medians);
                row.rms_db = r.rms;
                row.feasible = true;
                // Strict improvement only, so ties keep the smaller breakpoint.
                if (!best || r.rms < best->rms * (1.0 - 1e-12))
                    best = std::move(r);
            } catch (const Error& e) {
                if (lone)
                    throw;
                row.note = e.what();
            }
        }
        out.table.push_back(row);
    }
    if (!best)
        throw InsufficientDataError("search_breakpoint: no feasible breakpoint candidate");

    out.model = best->model;
    out.rms_db = best->rms;
    out.warnings = best->warnings;
    out.medians.assign(medians.begin(), medians.end());
    return out;
}

PathLossFit fit_model(std::span<const PathLossSample> samples, const FitConfig& cfg)
{
    std::vector<MedianPoint> medians;
    if (cfg.mode_fit) {
        if (!cfg.noise_floor_dbm || !cfg.tx_power_dbm)
            throw ParameterError("fit_model: mode-fit needs the noise floor and the transmit power");
        medians = mode_fit_medians(samples, *cfg.noise_floor_dbm, *cfg.tx_power_dbm, cfg.mode);
        if (medians.empty())
            throw InsufficientDataError("fit_model: mode-fit found no usable distance bins");
    }
    return search_breakpoint(samples, cfg.breakpoints, cfg, medians);
}

std::vector<MedianPoint> static_link_modes(const TraceDataset& dataset, double value_bin_db)
{
    const auto samples = to_pathloss(dataset);
    std::vector<MedianPoint> out;
    for (const auto& [link, idx] : group_by_link(dataset)) {
        double dmin = samples[idx.front()].distance_m, dmax = dmin, dsum = 0.0;
        std::vector<double> pl;
        pl.reserve(idx.size());
        for (auto i : idx) {
            dmin = std::min(dmin, samples[i].distance_m);
            dmax = std::max(dmax, samples[i].distance_m);
            dsum += samples[i].distance_m;
            pl.push_back(samples[i].pl_db);
        }
        if (dmax - dmin > 1.0)
            throw ValidationError("static_link_modes: link " + link.str() + " is not static (distance spread " +
                                  text::format_double(dmax - dmin) + " m)");
        const auto m = stats::histogram_mode(pl, value_bin_db);
        out.push_back({dsum / static_cast<double>(idx.size()), m.mode, MedianPoint::Source::bin_mode, idx.size()});
    }
    return out;
}

std::vector<SigmaBin> sigma_by_bin(std::span<const PathLossSample> samples, const PathLossModel& model,
                                   double bin_width_logd)
{
    std::map<std::int64_t, std::vector<double>> bins;
    for (const auto& s : samples) {
        if (s.distance_m < model.d0_m() && model.segment1 == Segment1Kind::two_ray)
            continue;
        const double logd = 10.0 * std::log10(s.distance_m);
        bins[static_cast<std::int64_t>(std::floor(logd / bin_width_logd))].push_back(
            s.pl_db - model.median_pl(s.distance_m));
    }
    std::vector<SigmaBin> out;
    for (const auto& [k, r] : bins) {
        SigmaBin b;
        b.lo_m = std::pow(10.0, static_cast<double>(k) * bin_width_logd / 10.0);
        b.hi_m = std::pow(10.0, static_cast<double>(k + 1) * bin_width_logd / 10.0);
        b.count = r.size();
        b.mean_residual_db = stats::mean(r);
        b.std_residual_db = r.size() > 1 ? stats::stddev(r) : 0.0;
        out.push_back(b);
    }
    return out;
}

}  // namespace v2vprop
