#include "pulsebp/rppg.hpp"
#include "pulsebp/dsp.hpp"
#include "pulsebp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pulsebp {

namespace {

constexpr double kPosWindowSeconds = 1.6;

void validate_trace(const RgbTrace& trace) {
    if (!(trace.fps > 0.0)) throw Error(errc::data, "trace fps must be positive");
    if (trace.r.size() != trace.g.size() || trace.r.size() != trace.b.size())
        throw Error(errc::data, "RGB channels must have equal length");
    if (trace.r.size() < 2) throw Error(errc::insufficient_length, "trace too short");
    for (std::size_t i = 0; i < trace.r.size(); ++i)
        if (!(trace.r[i] > 0.0) || !(trace.g[i] > 0.0) || !(trace.b[i] > 0.0))
            throw Error(errc::data, "intensity means must be positive");
}

double stddev(const std::vector<double>& x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(x.size()));
}

// Half-record heart-rate references so a window is never scored against a
// frequency estimated from itself.
struct HalfRefs {
    double first_hz = 0.0, second_hz = 0.0;
    bool valid = false;
    double for_center(double center_s, double duration_s) const {
        return center_s < duration_s / 2.0 ? second_hz : first_hz;
    }
};

HalfRefs make_half_refs(const TimeSeries& pulse) {
    HalfRefs ref;
    const std::size_t half = pulse.samples.size() / 2;
    try {
        TimeSeries a{{pulse.samples.begin(), pulse.samples.begin() + static_cast<std::ptrdiff_t>(half)}, pulse.fs};
        TimeSeries b{{pulse.samples.begin() + static_cast<std::ptrdiff_t>(half), pulse.samples.end()}, pulse.fs};
        ref.first_hz = estimate_heart_rate(a) / 60.0;
        ref.second_hz = estimate_heart_rate(b) / 60.0;
        ref.valid = true;
    } catch (const Error&) {
        try {
            ref.first_hz = ref.second_hz = estimate_heart_rate(pulse) / 60.0;
            ref.valid = true;
        } catch (const Error&) {
        }
    }
    return ref;
}

} // namespace

TimeSeries pos_extract(const RgbTrace& trace) {
    validate_trace(trace);
    const std::size_t n = trace.size();
    const std::size_t l = static_cast<std::size_t>(std::llround(kPosWindowSeconds * trace.fps));
    if (l < 2 || n < l)
        throw Error(errc::insufficient_length, "trace shorter than one POS window");

    std::vector<double> h(n, 0.0);
    std::vector<double> s1(l), s2(l);

    for (std::size_t m = 0; m + l <= n; ++m) {
        double mr = 0.0, mg = 0.0, mb = 0.0;
        for (std::size_t i = 0; i < l; ++i) {
            mr += trace.r[m + i];
            mg += trace.g[m + i];
            mb += trace.b[m + i];
        }
        mr /= static_cast<double>(l);
        mg /= static_cast<double>(l);
        mb /= static_cast<double>(l);
        if (!(mr > 0.0) || !(mg > 0.0) || !(mb > 0.0))
            throw Error(errc::degenerate_trace, "zero channel mean inside POS window");

        // Projection of the temporally normalized channels onto the POS plane:
        // S1 = Gn - Bn, S2 = Gn + Bn - 2 Rn.
        for (std::size_t i = 0; i < l; ++i) {
            const double rn = trace.r[m + i] / mr;
            const double gn = trace.g[m + i] / mg;
            const double bn = trace.b[m + i] / mb;
            s1[i] = gn - bn;
            s2[i] = -2.0 * rn + gn + bn;
        }
        const double sd2 = stddev(s2);
        const double alpha = sd2 > 0.0 ? stddev(s1) / sd2 : 0.0;

        double mean_w = 0.0;
        for (std::size_t i = 0; i < l; ++i) mean_w += s1[i] + alpha * s2[i];
        mean_w /= static_cast<double>(l);
        for (std::size_t i = 0; i < l; ++i) {
            // Sign flip: green dips on the systolic upstroke for reflective skin.
            h[m + i] -= (s1[i] + alpha * s2[i] - mean_w);
        }
    }

    TimeSeries out;
    out.fs = trace.fps;
    out.samples = std::move(h);
    return out;
}

std::vector<RppgCandidate> cut_rppg_windows(const RgbTrace& trace, int beats) {
    if (beats < 1) throw Error(errc::invalid_spec, "beats must be a positive integer");
    const TimeSeries pulse = pos_extract(trace);
    const TimeSeries filtered = bandpass(pulse, kPulseBand);

    std::vector<RppgCandidate> out;
    double hr;
    try {
        hr = estimate_heart_rate(filtered);
    } catch (const Error&) {
        return out; // no dominant component: nothing to window
    }
    const HalfRefs refs = make_half_refs(filtered);

    const std::size_t span =
        static_cast<std::size_t>(std::llround(static_cast<double>(beats) * 60.0 / hr * trace.fps));
    if (span < 2 || span > filtered.samples.size()) return out;
    const std::size_t target = static_cast<std::size_t>(std::llround(static_cast<double>(beats) * 125.0));

    const std::size_t count = filtered.samples.size() / span;
    for (std::size_t i = 0; i < count; ++i) {
        RppgCandidate c;
        c.source.fs = trace.fps;
        c.source.samples.assign(filtered.samples.begin() + static_cast<std::ptrdiff_t>(i * span),
                                filtered.samples.begin() + static_cast<std::ptrdiff_t>((i + 1) * span));
        c.window = resample_to_length(c.source, target);
        c.window.fs = 125.0;
        c.source_offset_s = static_cast<double>(i * span) / trace.fps;
        const double center = c.source_offset_s + c.source.duration_s() / 2.0;
        c.snr_ref_hz = refs.valid ? refs.for_center(center, trace.duration_s()) : hr / 60.0;
        out.push_back(std::move(c));
    }
    return out;
}

WindowSet rppg_window_pipeline(const RgbTrace& trace, const GatingRules& rules, int beats) {
    validate_trace(trace);

    WindowSet set;
    set.policy = SegmentPolicy::const_beats(beats);
    set.rules = rules;
    set.channel_count = 1;
    set.window_len = set.policy.target_len();

    std::vector<RppgCandidate> candidates;
    try {
        candidates = cut_rppg_windows(trace, beats);
    } catch (const Error& e) {
        if (e.code() == errc::insufficient_length) return set; // shorter than one window
        throw;
    }

    for (const RppgCandidate& c : candidates) {
        ++set.n_generated;

        // Nearest BP stamp to the window center, within the label resolution.
        const double center = c.source_offset_s + c.source.duration_s() / 2.0;
        const BpStamp* nearest = nullptr;
        double best = std::numeric_limits<double>::infinity();
        for (const BpStamp& s : trace.bp_labels) {
            const double d = std::abs(s.t - center);
            if (d < best) {
                best = d;
                nearest = &s;
            }
        }
        if (nearest == nullptr || best > 60.0) {
            ++set.rejection_log["no_label"];
            continue;
        }

        LabeledWindow w;
        w.subject_id = trace.subject_id;
        w.sbp = nearest->sbp;
        w.dbp = nearest->dbp;
        w.source_offset_s = c.source_offset_s;
        try {
            const TimeSeries pulse = zscore(c.window);
            w.channels.push_back(pulse.samples);
            w.hr = estimate_heart_rate(pulse); // normalized-domain rate (about 60 bpm)
            w.snr = snr_db(c.source, 60.0 * c.snr_ref_hz, 0.0);
        } catch (const Error&) {
            ++set.rejection_log["degenerate_pulse"];
            continue;
        }

        // Without ABP there is no per-beat heart rate to gate on, and the
        // beat normalization pins the window rate near 60 bpm anyway; the
        // rPPG pipeline gates on BP plausibility and SNR only.
        GatingRules window_rules = rules;
        window_rules.hr_min = -std::numeric_limits<double>::infinity();
        window_rules.hr_max = std::numeric_limits<double>::infinity();
        if (auto reject = apply_gates(w, window_rules)) {
            ++set.rejection_log[reject_reason_name(*reject)];
            continue;
        }
        set.windows.push_back(std::move(w));
    }
    return set;
}

std::vector<std::pair<int, double>> acceptance_curve(
    const std::vector<std::vector<RppgCandidate>>& windows_per_length,
    const std::vector<int>& lengths, double snr_min_db) {
    if (windows_per_length.size() != lengths.size())
        throw Error(errc::data, "one window list per candidate length required");

    std::vector<std::pair<int, double>> out;
    for (std::size_t li = 0; li < lengths.size(); ++li) {
        const auto& windows = windows_per_length[li];
        std::size_t accepted = 0;
        for (const RppgCandidate& c : windows) {
            try {
                const double snr = snr_db(c.source, 60.0 * c.snr_ref_hz, 0.0);
                if (snr >= snr_min_db) ++accepted;
            } catch (const Error&) {
                // degenerate window: counts as rejected
            }
        }
        const double frac = windows.empty() ? 0.0
                                            : static_cast<double>(accepted) /
                                                  static_cast<double>(windows.size());
        out.emplace_back(lengths[li], frac);
    }
    return out;
}

} // namespace pulsebp
