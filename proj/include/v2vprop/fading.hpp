#pragma once

#include "v2vprop/pathloss.hpp"
#include "v2vprop/stats.hpp"
#include "v2vprop/trace.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace v2vprop {

// A long, nearly loss-free run of consecutive packets on one link.
struct FadeSignature {
    LinkId link;
    std::vector<double> samples_db;  // path gain, one per seq_no slot
    std::vector<double> timestamps;
    std::int64_t first_seq = 0;
    double loss_fraction = 0.0;      // interpolated slots / length
    std::size_t interpolated = 0;

    std::size_t size() const { return samples_db.size(); }
};

// Clean runs of a link are joined across a gap of g missing packets only when
// both neighbouring runs are at least g (1 - f) / f long and the joined block
// keeps its loss fraction <= f, so losses stay sparse everywhere in the block.
// Missing slots are filled by linear interpolation in dB.
std::vector<FadeSignature> extract_signatures(const TraceDataset& dataset, std::size_t min_len = 500,
                                              double max_loss_fraction = 0.02);

enum class WindowMode { non_overlapping, sliding };

// Unit-local-mean linear power.
struct NormalizedBlock {
    std::vector<double> samples;
    std::size_t window_p = 0;
};

// De-logs the signature and divides each P-sample window by its own mean
// (trailing partial window dropped). `sliding` divides every sample by the
// centred P-wide running mean instead. Needs 10 <= P <= length / 5.
NormalizedBlock normalize_block(const FadeSignature& sig, std::size_t window_p,
                                WindowMode mode = WindowMode::non_overlapping);

struct WindowCheck {
    std::size_t window_p = 0;
    double acf_max_abs = 0.0;
    bool usable = false;  // enough samples for this P
};

struct WindowSelection {
    std::size_t window_p = 0;
    bool converged = false;
    std::vector<WindowCheck> report;
};

// Smallest candidate P whose normalized block has max |ACF(1..max_lag)| below
// the threshold; otherwise the candidate with the lowest ACF, not converged.
WindowSelection select_window(const FadeSignature& sig, std::span<const std::size_t> candidates,
                              double acf_threshold = 0.2, std::size_t max_lag = 20);

// Same rule with every signature normalized by the candidate P and pooled.
WindowSelection select_window(std::span<const FadeSignature> sigs, std::span<const std::size_t> candidates,
                              double acf_threshold = 0.2, std::size_t max_lag = 20);

// Concatenation of normalize_block over the signatures long enough for P.
NormalizedBlock normalize_pooled(std::span<const FadeSignature> sigs, std::size_t window_p,
                                 WindowMode mode = WindowMode::non_overlapping);

struct FadingModel {
    stats::DistributionFit fit;
    double sigma_mp_db = 0.0;
    double acf_max_abs = 0.0;
    std::size_t window_p = 0;
};

// Fits nakagami_power and gaussian, keeps the smaller KS distance (ties ->
// nakagami). sigma_mp is the std of the dB values of the block.
FadingModel fit_fading(const NormalizedBlock& block, std::size_t max_lag = 20);

struct SigmaSplit {
    double sigma_sh_db = 0.0;
    bool inconsistent = false;  // sigma_mp > sigma_total
};

// sigma_sh = sqrt(max(0, sigma_total^2 - sigma_mp^2)).
SigmaSplit split_sigma(double sigma_total_db, double sigma_mp_db);

// Fills sigma_sh1/sigma_sh2 of the model; returns warnings for segments where
// sigma_mp exceeds the total scatter.
std::vector<std::string> apply_sigma_split(PathLossModel& model, const FadingModel& fading);

struct FadingOptions {
    std::size_t min_len = 500;
    double max_loss_fraction = 0.02;
    std::vector<std::size_t> window_candidates = {25, 50, 100, 200};
    double acf_threshold = 0.2;
    std::size_t max_lag = 20;
    WindowMode mode = WindowMode::non_overlapping;
};

struct FadingAnalysis {
    std::vector<FadeSignature> signatures;
    WindowSelection selection;
    NormalizedBlock block;
    std::optional<FadingModel> model;  // empty when no signature qualifies
    std::string note;
};

// extract -> select window -> normalize -> fit, pooled over all signatures.
FadingAnalysis analyze_fading(const TraceDataset& dataset, const FadingOptions& opts = {});

}  // namespace v2vprop
