#include "v2vprop/fading.hpp"

#include "v2vprop/error.hpp"

#include <algorithm>
#include <cmath>

namespace v2vprop {

namespace {

struct Run {
    std::size_t begin = 0;  // index into the link's record list
    std::size_t end = 0;    // one past
};

FadeSignature build_signature(const TraceDataset& ds, const std::vector<std::size_t>& idx,
                              const std::vector<PathLossSample>& pl, std::size_t begin, std::size_t end)
{
    FadeSignature sig;
    const auto& first = ds.records[idx[begin]];
    sig.link = first.link();
    sig.first_seq = first.seq_no;
    for (std::size_t j = begin; j < end; ++j) {
        const auto& r = ds.records[idx[j]];
        const double v = pl[idx[j]].pl_db;
        if (j > begin) {
            const auto& prev = ds.records[idx[j - 1]];
            const auto gap = r.seq_no - prev.seq_no;
            const double v_prev = pl[idx[j - 1]].pl_db;
            for (std::int64_t k = 1; k < gap; ++k) {
                const double w = static_cast<double>(k) / static_cast<double>(gap);
                sig.samples_db.push_back(v_prev + w * (v - v_prev));
                sig.timestamps.push_back(prev.timestamp + w * (r.timestamp - prev.timestamp));
                ++sig.interpolated;
            }
        }
        sig.samples_db.push_back(v);
        sig.timestamps.push_back(r.timestamp);
    }
    sig.loss_fraction = static_cast<double>(sig.interpolated) / static_cast<double>(sig.samples_db.size());
    return sig;
}

void check_window(std::size_t length, std::size_t window_p)
{
    if (window_p < 10 || window_p * 5 > length)
        throw ParameterError("window P = " + std::to_string(window_p) + " must satisfy 10 <= P <= length/5 (length " +
                             std::to_string(length) + ")");
}

WindowSelection choose(std::vector<WindowCheck> report, double acf_threshold)
{
    WindowSelection out;
    out.report = std::move(report);
    const WindowCheck* lowest = nullptr;
    for (const auto& c : out.report) {
        if (!c.usable)
            continue;
        if (c.acf_max_abs < acf_threshold) {
            out.window_p = c.window_p;
            out.converged = true;
            return out;
        }
        if (!lowest || c.acf_max_abs < lowest->acf_max_abs)
            lowest = &c;
    }
    if (lowest)
        out.window_p = lowest->window_p;
    return out;
}

std::vector<std::size_t> sorted_unique(std::span<const std::size_t> candidates)
{
    std::vector<std::size_t> c(candidates.begin(), candidates.end());
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
}

}  // namespace

std::vector<FadeSignature> extract_signatures(const TraceDataset& ds, std::size_t min_len, double max_loss_fraction)
{
    if (!(max_loss_fraction >= 0.0 && max_loss_fraction < 1.0))
        throw ParameterError("extract_signatures: max_loss_fraction must be in [0, 1)");
    const auto pl = to_pathloss(ds);
    const double f = max_loss_fraction;
    std::vector<FadeSignature> out;

    for (const auto& [link, idx] : group_by_link(ds)) {
        // Clean runs: consecutive seq_no.
        std::vector<Run> runs;
        std::size_t start = 0;
        for (std::size_t j = 1; j <= idx.size(); ++j) {
            if (j == idx.size() || ds.records[idx[j]].seq_no != ds.records[idx[j - 1]].seq_no + 1) {
                runs.push_back({start, j});
                start = j;
            }
        }

        auto seq = [&](std::size_t j) { return ds.records[idx[j]].seq_no; };
        auto flush = [&](std::size_t begin, std::size_t end) {
            const auto span_len = static_cast<std::size_t>(seq(end - 1) - seq(begin) + 1);
            if (span_len >= min_len)
                out.push_back(build_signature(ds, idx, pl, begin, end));
        };

        std::size_t block_begin = runs.front().begin;
        std::size_t block_end = runs.front().end;
        std::size_t block_missing = 0;
        std::size_t last_run_len = runs.front().end - runs.front().begin;
        for (std::size_t r = 1; r < runs.size(); ++r) {
            const auto& run = runs[r];
            const auto gap = static_cast<std::size_t>(seq(run.begin) - seq(block_end - 1) - 1);
            const std::size_t run_len = run.end - run.begin;
            const double need = f > 0.0 ? static_cast<double>(gap) * (1.0 - f) / f : 0.0;
            const auto new_span = static_cast<std::size_t>(seq(run.end - 1) - seq(block_begin) + 1);
            const bool sparse = f > 0.0 && static_cast<double>(last_run_len) >= need &&
                                static_cast<double>(run_len) >= need;
            const bool within = static_cast<double>(block_missing + gap) <= f * static_cast<double>(new_span);
            if (sparse && within) {
                block_end = run.end;
                block_missing += gap;
            } else {
                flush(block_begin, block_end);
                block_begin = run.begin;
                block_end = run.end;
                block_missing = 0;
            }
            last_run_len = run_len;
        }
        flush(block_begin, block_end);
    }
    return out;
}

NormalizedBlock normalize_block(const FadeSignature& sig, std::size_t window_p, WindowMode mode)
{
    const std::size_t n = sig.size();
    check_window(n, window_p);
    std::vector<double> power(n);
    for (std::size_t i = 0; i < n; ++i)
        power[i] = std::pow(10.0, sig.samples_db[i] / 10.0);

    NormalizedBlock out;
    out.window_p = window_p;
    if (mode == WindowMode::non_overlapping) {
        const std::size_t windows = n / window_p;
        out.samples.reserve(windows * window_p);
        for (std::size_t w = 0; w < windows; ++w) {
            const auto first = power.begin() + static_cast<std::ptrdiff_t>(w * window_p);
            double sum = 0.0;
            for (auto it = first; it != first + static_cast<std::ptrdiff_t>(window_p); ++it)
                sum += *it;
            const double local_mean = sum / static_cast<double>(window_p);
            for (auto it = first; it != first + static_cast<std::ptrdiff_t>(window_p); ++it)
                out.samples.push_back(*it / local_mean);
        }
    } else {
        // Centred running mean, truncated at the ends.
        std::vector<double> prefix(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            prefix[i + 1] = prefix[i] + power[i];
        const std::size_t half = window_p / 2;
        out.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t lo = i >= half ? i - half : 0;
            const std::size_t hi = std::min(n, lo + window_p);
            const std::size_t lo2 = hi >= window_p ? hi - window_p : 0;
            const double local_mean = (prefix[hi] - prefix[lo2]) / static_cast<double>(hi - lo2);
            out.samples[i] = power[i] / local_mean;
        }
    }
    return out;
}

NormalizedBlock normalize_pooled(std::span<const FadeSignature> sigs, std::size_t window_p, WindowMode mode)
{
    NormalizedBlock out;
    out.window_p = window_p;
    for (const auto& s : sigs) {
        if (window_p < 10 || window_p * 5 > s.size())
            continue;
        const auto b = normalize_block(s, window_p, mode);
        out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
    }
    return out;
}

WindowSelection select_window(const FadeSignature& sig, std::span<const std::size_t> candidates,
                              double acf_threshold, std::size_t max_lag)
{
    return select_window(std::span<const FadeSignature>(&sig, 1), candidates, acf_threshold, max_lag);
}

WindowSelection select_window(std::span<const FadeSignature> sigs, std::span<const std::size_t> candidates,
                              double acf_threshold, std::size_t max_lag)
{
    if (candidates.empty())
        throw ParameterError("select_window: no candidate window sizes");
    std::vector<WindowCheck> report;
    for (auto p : sorted_unique(candidates)) {
        WindowCheck c{p, 1.0, false};
        const auto block = normalize_pooled(sigs, p);
        if (block.samples.size() > max_lag) {
            try {
                c.acf_max_abs = stats::max_abs_acf(block.samples, max_lag);
                c.usable = true;
            } catch (const DomainError&) {
                // constant block: every sample is 1, nothing to correlate
                c.acf_max_abs = 0.0;
                c.usable = true;
            }
        }
        report.push_back(c);
    }
    return choose(std::move(report), acf_threshold);
}

FadingModel fit_fading(const NormalizedBlock& block, std::size_t max_lag)
{
    const auto& x = block.samples;
    if (x.size() < 100)
        throw InsufficientDataError("fit_fading: need at least 100 normalized samples, got " +
                                    std::to_string(x.size()));
    for (double v : x)
        if (!(v > 0.0))
            throw DomainError("fit_fading: non-positive power sample cannot be de-logged");

    FadingModel out;
    out.window_p = block.window_p;

    const double m = stats::fit_nakagami_power(x);
    const auto ks_nak = stats::ks_test(x, [m](double v) { return stats::nakagami_power_cdf(v, m); });
    const double mu = stats::mean(x);
    const double sd = stats::stddev(x);
    const auto ks_gauss = stats::ks_test(x, [mu, sd](double v) { return stats::normal_cdf(v, mu, sd); });

    out.fit.m = m;
    out.fit.mu = mu;
    out.fit.sigma = sd;
    if (ks_nak.d <= ks_gauss.d) {
        out.fit.family = stats::Family::nakagami_power;
        out.fit.ks_d = ks_nak.d;
        out.fit.ks_p = ks_nak.p;
    } else {
        out.fit.family = stats::Family::gaussian;
        out.fit.ks_d = ks_gauss.d;
        out.fit.ks_p = ks_gauss.p;
    }

    std::vector<double> db(x.size());
    std::transform(x.begin(), x.end(), db.begin(), [](double v) { return 10.0 * std::log10(v); });
    out.sigma_mp_db = stats::stddev(db);
    out.acf_max_abs = stats::max_abs_acf(x, std::min(max_lag, x.size() - 1));
    return out;
}

SigmaSplit split_sigma(double sigma_total_db, double sigma_mp_db)
{
    if (!(sigma_total_db >= 0.0) || !(sigma_mp_db >= 0.0))
        throw DomainError("split_sigma: standard deviations must be >= 0");
    SigmaSplit out;
    const double diff = sigma_total_db * sigma_total_db - sigma_mp_db * sigma_mp_db;
    out.inconsistent = sigma_mp_db > sigma_total_db;
    out.sigma_sh_db = diff > 0.0 ? std::sqrt(diff) : 0.0;
    return out;
}

std::vector<std::string> apply_sigma_split(PathLossModel& model, const FadingModel& fading)
{
    std::vector<std::string> warnings;
    const auto s1 = split_sigma(model.sigma1_db, fading.sigma_mp_db);
    const auto s2 = split_sigma(model.sigma2_db, fading.sigma_mp_db);
    if (s1.inconsistent)
        warnings.push_back("sigma_mp exceeds segment-1 scatter; sigma_sh1 set to 0");
    if (s2.inconsistent)
        warnings.push_back("sigma_mp exceeds segment-2 scatter; sigma_sh2 set to 0");
    model.sigma_sh1_db = s1.sigma_sh_db;
    model.sigma_sh2_db = s2.sigma_sh_db;
    return warnings;
}

FadingAnalysis analyze_fading(const TraceDataset& dataset, const FadingOptions& opts)
{
    FadingAnalysis out;
    out.signatures = extract_signatures(dataset, opts.min_len, opts.max_loss_fraction);
    if (out.signatures.empty()) {
        out.note = "no signature of at least " + std::to_string(opts.min_len) + " packets with loss fraction <= " +
                   std::to_string(opts.max_loss_fraction);
        return out;
    }
    out.selection = select_window(out.signatures, opts.window_candidates, opts.acf_threshold, opts.max_lag);
    if (out.selection.window_p == 0) {
        out.note = "signatures too short for every candidate window";
        return out;
    }
    out.block = normalize_pooled(out.signatures, out.selection.window_p, opts.mode);
    if (out.block.samples.size() < 100) {
        out.note = "fewer than 100 normalized samples";
        return out;
    }
    out.model = fit_fading(out.block, opts.max_lag);
    if (!out.selection.converged)
        out.note = "no candidate window reached the ACF threshold; using the least correlated one";
    return out;
}

}  // namespace v2vprop
