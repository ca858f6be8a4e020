#pragma once

#include "v2vprop/trace.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace v2vprop {

// Two-ray median gain (d0/d)^2 [a1 - b1 cos(2 pi (d' - d) / lambda)],
// d' = sqrt(d^2 + 4 h^2) (ground bounce at mid-path).
struct TwoRayParams {
    double a1 = 0.0;  // linear power scale
    double b1 = 0.0;  // linear power scale, 0 <= b1 < a1
    double h_m = 1.6;
    double lambda_m = 0.0512;
    double d0_m = 10.0;
};

// PL = a2 - b2 * 10 log10(d / d0)
struct LinearSegParams {
    double a_db = 0.0;
    double b = 0.0;
    double d0_m = 10.0;

    double predict(double d) const;
};

enum class Segment1Kind { two_ray, linear };

const char* to_string(Segment1Kind k);
Segment1Kind segment1_from_string(const std::string& s);

struct PathLossModel {
    Segment1Kind segment1 = Segment1Kind::two_ray;
    TwoRayParams two_ray;
    LinearSegParams linear1;  // used when segment1 == linear
    double d_br_m = 400.0;
    LinearSegParams segment2;
    double sigma1_db = 0.0;
    double sigma2_db = 0.0;
    std::optional<double> sigma_sh1_db;
    std::optional<double> sigma_sh2_db;
    std::optional<double> noise_floor_dbm;

    double d0_m() const { return segment1 == Segment1Kind::two_ray ? two_ray.d0_m : linear1.d0_m; }
    double segment1_pl(double d) const;
    double segment2_pl(double d) const { return segment2.predict(d); }
    // Segment 1 below d_br, segment 2 from d_br on.
    double median_pl(double d) const;
    double sigma_at(double d) const { return d < d_br_m ? sigma1_db : sigma2_db; }
    std::optional<double> sigma_sh_at(double d) const { return d < d_br_m ? sigma_sh1_db : sigma_sh2_db; }
};

struct MedianPoint {
    enum class Source { bin_mode, bin_mean };
    double distance_m = 0.0;
    double pl_median_db = 0.0;
    Source source = Source::bin_mode;
    std::size_t count = 0;  // samples behind the point
};

// Linear gain p_r/p_t. Throws DomainError for d < d0.
double two_ray_predict(double d, const TwoRayParams& p);
double two_ray_predict_db(double d, const TwoRayParams& p);

// Dip distances d_n = (4h^2 - (n lambda)^2) / (2 n lambda) for n = 1..n_max,
// non-positive ones omitted. Descending in n.
std::vector<double> dip_distances(double h, double lambda, int n_max);

struct TwoRayFit {
    TwoRayParams params;
    double rms_db = 0.0;
    std::size_t samples_used = 0;
    bool degenerate = false;  // fitted a1 <= b1
    std::vector<std::string> warnings;
};

// Least squares on de-logged gains with d0 <= d <= d_max. The linear system
// is solved on gain / (d0/d)^2 (relative error), and the curve is then scaled
// so the dB residuals have zero mean, making it a median rather than a mean.
// Negative b1 is clamped to 0 (with a warning) and a1 refitted.
TwoRayFit fit_two_ray(std::span<const PathLossSample> samples, double h, double lambda, double d0, double d_max);

struct LinearSegFit {
    LinearSegParams params;
    double rms_db = 0.0;
    std::size_t samples_used = 0;
};

// With an anchor (segment-1 PL at d_br) only the slope is fitted and
// a = anchor + b * 10 log10(d_br / d0); every sample must lie beyond d_br.
// Without an anchor it is a plain two-parameter fit and d_br is unused.
LinearSegFit fit_linear_segment(std::span<const PathLossSample> samples, double d_br,
                                std::optional<double> anchor_pl, double d0 = 10.0);

struct ModeFitOptions {
    double bin_width_logd = 0.5;  // in 10 log10(d / 1 m)
    double value_bin_db = 1.0;
    double margin_db = 3.0;
    std::size_t min_samples = 20;
};

// Per log-distance bin: histogram mode of PL, kept when the bin is unimodal
// and the mode clears the censoring level (noise_floor - tx_power) by the
// margin. Value bins start at the censoring level.
std::vector<MedianPoint> mode_fit_medians(std::span<const PathLossSample> samples, double noise_floor_dbm,
                                          double tx_power_dbm, const ModeFitOptions& opts = {});

struct FitConfig {
    Segment1Kind segment1 = Segment1Kind::two_ray;
    std::vector<double> breakpoints = default_breakpoints();
    double h_m = 1.6;
    double lambda_m = 0.0512;
    double d0_m = 10.0;
    bool mode_fit = false;
    bool constrain_segment2 = true;
    ModeFitOptions mode;
    std::optional<double> noise_floor_dbm;
    std::optional<double> tx_power_dbm;
    std::size_t min_side_samples = 10;

    // 100 m to 600 m in 50 m steps.
    static std::vector<double> default_breakpoints();
};

struct BreakpointCandidate {
    double d_br_m = 0.0;
    double rms_db = 0.0;
    bool feasible = false;
    std::string note;
};

struct PathLossFit {
    PathLossModel model;
    std::vector<BreakpointCandidate> table;
    std::vector<MedianPoint> medians;  // filled when mode-fit is on
    double rms_db = 0.0;               // pooled over both segments
    std::vector<std::string> warnings;
};

// Fits both segments for every candidate and keeps the lowest pooled dB RMS
// (ties -> smallest d_br). A lone candidate is fitted without the per-side
// sample check. `medians`, when non-empty, replace the raw samples for
// segment 2.
PathLossFit search_breakpoint(std::span<const PathLossSample> samples, std::span<const double> candidates,
                              const FitConfig& cfg, std::span<const MedianPoint> medians = {});

PathLossFit fit_model(std::span<const PathLossSample> samples, const FitConfig& cfg);

// One point per tx-rx pair at its fixed distance: the PL histogram mode.
// Throws ValidationError for a pair whose distance spread exceeds 1 m.
std::vector<MedianPoint> static_link_modes(const TraceDataset& dataset, double value_bin_db = 1.0);

std::vector<PathLossSample> as_samples(std::span<const MedianPoint> points);

struct SigmaBin {
    double lo_m = 0.0;
    double hi_m = 0.0;
    std::size_t count = 0;
    double mean_residual_db = 0.0;
    double std_residual_db = 0.0;
};

// Residual statistics about the median model in uniform 10 log10(d) bins.
std::vector<SigmaBin> sigma_by_bin(std::span<const PathLossSample> samples, const PathLossModel& model,
                                   double bin_width_logd = 0.5);

}  // namespace v2vprop
