#include "pulsebp/segmentation.hpp"
#include "pulsebp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace pulsebp {

namespace {

double median(std::vector<double> v) {
    if (v.empty()) throw Error(errc::no_label, "median of empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Centered moving average with edge shrinking.
std::vector<double> moving_average(const std::vector<double>& x, std::size_t width) {
    const std::size_t n = x.size();
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
    std::vector<double> out(n);
    const std::size_t half = width / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n - 1, i + half);
        out[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
    }
    return out;
}

TimeSeries slice(const TimeSeries& ts, std::size_t begin, std::size_t len) {
    TimeSeries out;
    out.fs = ts.fs;
    out.samples.assign(ts.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                       ts.samples.begin() + static_cast<std::ptrdiff_t>(begin + len));
    return out;
}

} // namespace

SegmentPolicy SegmentPolicy::const_time(double seconds) {
    if (!(seconds > 0.0)) throw Error(errc::invalid_spec, "window seconds must be positive");
    SegmentPolicy p;
    p.kind = Kind::ConstTime;
    p.seconds = seconds;
    return p;
}

SegmentPolicy SegmentPolicy::const_beats(int beats, double nominal_fs) {
    if (beats < 1) throw Error(errc::invalid_spec, "beats must be a positive integer");
    if (!(nominal_fs > 0.0)) throw Error(errc::invalid_spec, "nominal rate must be positive");
    SegmentPolicy p;
    p.kind = Kind::ConstBeats;
    p.beats = beats;
    p.nominal_fs = nominal_fs;
    return p;
}

std::size_t SegmentPolicy::target_len() const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(beats) * nominal_fs));
}

std::string SegmentPolicy::name() const {
    if (kind == Kind::ConstTime) {
        const double s = seconds;
        if (s == std::floor(s)) return "const_time_" + std::to_string(static_cast<long long>(s));
        return "const_time_" + std::to_string(s);
    }
    return "const_beats_" + std::to_string(beats);
}

const char* reject_reason_name(RejectReason r) {
    switch (r) {
        case RejectReason::sbp_range: return "sbp_range";
        case RejectReason::dbp_range: return "dbp_range";
        case RejectReason::hr_range: return "hr_range";
        case RejectReason::snr_min: return "snr_min";
    }
    return "unknown";
}

std::vector<std::string> WindowSet::subject_ids() const {
    std::set<std::string> ids;
    for (const auto& w : windows) ids.insert(w.subject_id);
    return {ids.begin(), ids.end()};
}

std::vector<SegmentedPair> segment_const_time(const TimeSeries& ppg, const TimeSeries& abp,
                                              double seconds) {
    validate_time_series(ppg);
    validate_time_series(abp);
    if (ppg.fs != abp.fs || ppg.samples.size() != abp.samples.size())
        throw Error(errc::data, "PPG and ABP must be time-aligned (same fs and length)");
    if (!(seconds > 0.0)) throw Error(errc::invalid_spec, "window seconds must be positive");

    const std::size_t win = static_cast<std::size_t>(std::llround(seconds * ppg.fs));
    std::vector<SegmentedPair> out;
    if (win < 2 || win > ppg.samples.size()) return out;
    const std::size_t count = ppg.samples.size() / win;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        SegmentedPair p;
        p.ppg = slice(ppg, i * win, win);
        p.abp = slice(abp, i * win, win);
        p.abp_source = p.abp;
        p.source_offset_s = static_cast<double>(i * win) / ppg.fs;
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<SegmentedPair> segment_const_beats(const TimeSeries& ppg, const TimeSeries& abp,
                                               int beats, double nominal_fs) {
    validate_time_series(ppg);
    validate_time_series(abp);
    if (ppg.fs != abp.fs || ppg.samples.size() != abp.samples.size())
        throw Error(errc::data, "PPG and ABP must be time-aligned (same fs and length)");
    if (beats < 1) throw Error(errc::invalid_spec, "beats must be a positive integer");

    const double hr = estimate_heart_rate(ppg); // throws when no dominant component
    const double span_s = static_cast<double>(beats) * 60.0 / hr;
    const std::size_t span = static_cast<std::size_t>(std::llround(span_s * ppg.fs));
    const std::size_t target = static_cast<std::size_t>(std::llround(static_cast<double>(beats) * nominal_fs));

    std::vector<SegmentedPair> out;
    if (span < 2 || span > ppg.samples.size()) return out;
    const std::size_t count = ppg.samples.size() / span;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        SegmentedPair p;
        const TimeSeries ppg_raw = slice(ppg, i * span, span);
        p.abp_source = slice(abp, i * span, span);
        p.ppg = resample_to_length(ppg_raw, target);
        p.ppg.fs = nominal_fs; // windows are expressed at the nominal rate
        p.abp = resample_to_length(p.abp_source, target);
        p.abp.fs = nominal_fs;
        p.source_offset_s = static_cast<double>(i * span) / ppg.fs;
        out.push_back(std::move(p));
    }
    return out;
}

PeakIndices detect_abp_peaks(const TimeSeries& abp) {
    validate_time_series(abp);
    if (abp.duration_s() < 2.0 - 1e-9)
        throw Error(errc::insufficient_length, "need at least 2 s of ABP for peak detection");

    const std::vector<double>& raw = abp.samples;
    const std::size_t n = raw.size();

    TimeSeries filt = bandpass(abp, kPulseBand);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double c = std::max(filt.samples[i], 0.0);
        sq[i] = c * c;
    }

    auto odd_width = [&](double seconds) {
        std::size_t w = static_cast<std::size_t>(std::llround(seconds * abp.fs));
        if (w < 1) w = 1;
        if (w % 2 == 0) ++w;
        return w;
    };
    const std::size_t w_peak = odd_width(0.111);
    const std::size_t w_beat = odd_width(0.667);
    const std::vector<double> ma_peak = moving_average(sq, w_peak);
    const std::vector<double> ma_beat = moving_average(sq, w_beat);
    const double z_mean = std::accumulate(sq.begin(), sq.end(), 0.0) / static_cast<double>(n);
    const double alpha = 0.02 * z_mean;

    PeakIndices out;
    std::size_t block_start = 0;
    bool in_block = false;
    for (std::size_t i = 0; i <= n; ++i) {
        const bool active = i < n && ma_peak[i] > ma_beat[i] + alpha;
        if (active && !in_block) {
            in_block = true;
            block_start = i;
        } else if (!active && in_block) {
            in_block = false;
            if (i - block_start >= w_peak) {
                std::size_t best = block_start;
                for (std::size_t j = block_start + 1; j < i; ++j)
                    if (raw[j] > raw[best]) best = j;
                out.systolic.push_back(best);
            }
        }
    }

    if (out.systolic.empty()) return out;

    // Diastolic troughs between beats, plus the last beat's trough when enough
    // tail remains after the final systolic peak.
    for (std::size_t b = 0; b + 1 < out.systolic.size(); ++b) {
        std::size_t best = out.systolic[b] + 1;
        for (std::size_t j = out.systolic[b] + 1; j < out.systolic[b + 1]; ++j)
            if (raw[j] < raw[best]) best = j;
        out.diastolic.push_back(best);
    }
    double beat_samples;
    if (out.systolic.size() >= 2) {
        std::vector<double> gaps;
        for (std::size_t b = 0; b + 1 < out.systolic.size(); ++b)
            gaps.push_back(static_cast<double>(out.systolic[b + 1] - out.systolic[b]));
        beat_samples = median(gaps);
    } else {
        beat_samples = static_cast<double>(n - out.systolic.back());
    }
    const std::size_t last = out.systolic.back();
    const std::size_t tail = n - 1 - last;
    const std::size_t need = out.systolic.size() >= 2
                                 ? static_cast<std::size_t>(std::llround(0.3 * beat_samples))
                                 : 3;
    if (tail >= std::max<std::size_t>(need, 3)) {
        std::size_t best = last + 1;
        for (std::size_t j = last + 1; j < n; ++j)
            if (raw[j] < raw[best]) best = j;
        out.diastolic.push_back(best);
    }
    return out;
}

BpLabel ground_truth_bp(const TimeSeries& abp_window) {
    const PeakIndices peaks = detect_abp_peaks(abp_window);
    if (peaks.systolic.empty() || peaks.diastolic.empty())
        throw Error(errc::no_label, "no usable beats in ABP window");

    std::vector<double> sys_vals, dia_vals;
    for (std::size_t i : peaks.systolic) sys_vals.push_back(abp_window.samples[i]);
    for (std::size_t i : peaks.diastolic) dia_vals.push_back(abp_window.samples[i]);

    BpLabel label;
    label.sbp = median(sys_vals);
    label.dbp = median(dia_vals);
    if (peaks.systolic.size() >= 2) {
        std::vector<double> rates;
        for (std::size_t b = 0; b + 1 < peaks.systolic.size(); ++b) {
            const double gap = static_cast<double>(peaks.systolic[b + 1] - peaks.systolic[b]);
            rates.push_back(60.0 * abp_window.fs / gap);
        }
        label.hr = median(rates);
        label.hr_valid = true;
    }
    return label;
}

std::optional<RejectReason> apply_gates(const LabeledWindow& w, const GatingRules& rules) {
    if (!(w.sbp >= rules.sbp_min && w.sbp <= rules.sbp_max)) return RejectReason::sbp_range;
    if (!(w.dbp >= rules.dbp_min && w.dbp <= rules.dbp_max)) return RejectReason::dbp_range;
    if (!(w.hr >= rules.hr_min && w.hr <= rules.hr_max)) return RejectReason::hr_range;
    if (!(w.snr >= rules.snr_min_db)) return RejectReason::snr_min;
    return std::nullopt;
}

namespace {

// Heart-rate reference for window SNR: estimated on the half of the record the
// window does NOT sit in, so noise cannot tune the template onto itself.
struct SnrReference {
    double first_half_hz = 0.0;
    double second_half_hz = 0.0;
    bool valid = false;

    double for_center(double center_s, double record_duration_s) const {
        return center_s < record_duration_s / 2.0 ? second_half_hz : first_half_hz;
    }
};

SnrReference make_snr_reference(const TimeSeries& pulse_record) {
    SnrReference ref;
    const std::size_t n = pulse_record.samples.size();
    const std::size_t half = n / 2;
    try {
        TimeSeries a{std::vector<double>(pulse_record.samples.begin(),
                                         pulse_record.samples.begin() + static_cast<std::ptrdiff_t>(half)),
                     pulse_record.fs};
        TimeSeries b{std::vector<double>(pulse_record.samples.begin() + static_cast<std::ptrdiff_t>(half),
                                         pulse_record.samples.end()),
                     pulse_record.fs};
        ref.first_half_hz = estimate_heart_rate(a) / 60.0;
        ref.second_half_hz = estimate_heart_rate(b) / 60.0;
        ref.valid = true;
    } catch (const Error&) {
        try {
            const double hz = estimate_heart_rate(pulse_record) / 60.0;
            ref.first_half_hz = ref.second_half_hz = hz;
            ref.valid = true;
        } catch (const Error&) {
            ref.valid = false;
        }
    }
    return ref;
}

} // namespace

WindowSet build_window_set(const std::vector<RecordInput>& records, const SegmentPolicy& policy,
                           const GatingRules& rules, bool with_derivatives) {
    if (records.empty()) throw Error(errc::data, "no records to process");

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return records[a].subject_id < records[b].subject_id;
    });

    WindowSet set;
    set.policy = policy;
    set.rules = rules;
    set.channel_count = with_derivatives ? 3 : 1;

    auto log = [&](const std::string& reason) { ++set.rejection_log[reason]; };

    for (std::size_t idx : order) {
        const RecordInput& rec = records[idx];
        if (rec.subject_id.empty()) throw Error(errc::data, "record with empty subject id");

        TimeSeries ppg_bp;
        std::vector<SegmentedPair> pairs;
        try {
            ppg_bp = bandpass(rec.ppg, kPulseBand);
            if (rec.ppg.fs != rec.abp.fs || rec.ppg.samples.size() != rec.abp.samples.size())
                throw Error(errc::data, "record channels not aligned");
            pairs = policy.kind == SegmentPolicy::Kind::ConstTime
                        ? segment_const_time(ppg_bp, rec.abp, policy.seconds)
                        : segment_const_beats(ppg_bp, rec.abp, policy.beats, policy.nominal_fs);
        } catch (const Error& e) {
            log(std::string("record_skipped_") + errc_name(e.code()));
            continue;
        }
        if (pairs.empty()) continue;

        const SnrReference snr_ref = make_snr_reference(ppg_bp);
        double record_hr = 0.0;
        bool record_hr_valid = false;
        try {
            record_hr = estimate_heart_rate(ppg_bp);
            record_hr_valid = true;
        } catch (const Error&) {
        }

        for (const SegmentedPair& pair : pairs) {
            ++set.n_generated;

            BpLabel label;
            try {
                label = ground_truth_bp(pair.abp_source);
            } catch (const Error&) {
                log("no_label");
                continue;
            }

            LabeledWindow w;
            w.subject_id = rec.subject_id;
            w.sbp = label.sbp;
            w.dbp = label.dbp;
            w.hr = label.hr_valid ? label.hr : (record_hr_valid ? record_hr : std::nan(""));
            w.source_offset_s = pair.source_offset_s;

            try {
                TimeSeries pulse = zscore(pair.ppg);
                w.channels.push_back(pulse.samples);
                if (with_derivatives) {
                    w.channels.push_back(zscore(derivative(pulse, 1)).samples);
                    w.channels.push_back(zscore(derivative(pulse, 2)).samples);
                }

                // SNR against the opposite record half's heart rate, scored on
                // the source-domain window (pre-resampling for ConstBeats).
                if (!snr_ref.valid) throw Error(errc::undefined_snr, "no heart-rate reference");
                TimeSeries snr_input;
                if (policy.kind == SegmentPolicy::Kind::ConstBeats) {
                    const std::size_t begin = static_cast<std::size_t>(
                        std::llround(pair.source_offset_s * ppg_bp.fs));
                    const std::size_t len = pair.abp_source.samples.size();
                    snr_input.fs = ppg_bp.fs;
                    snr_input.samples.assign(
                        ppg_bp.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                        ppg_bp.samples.begin() + static_cast<std::ptrdiff_t>(begin + len));
                } else {
                    snr_input = pair.ppg;
                }
                const double center = pair.source_offset_s + snr_input.duration_s() / 2.0;
                const double f_ref_hz = snr_ref.for_center(center, rec.ppg.duration_s());
                w.snr = snr_db(snr_input, 60.0 * f_ref_hz, 1.0);
            } catch (const Error&) {
                log("degenerate_pulse");
                continue;
            }

            if (auto reject = apply_gates(w, rules)) {
                log(reject_reason_name(*reject));
                continue;
            }
            set.windows.push_back(std::move(w));
        }
    }

    set.window_len = set.windows.empty()
                         ? (policy.kind == SegmentPolicy::Kind::ConstBeats
                                ? policy.target_len()
                                : static_cast<std::size_t>(std::llround(policy.seconds * 125.0)))
                         : set.windows.front().len();
    for (const auto& w : set.windows)
        if (w.len() != set.window_len || static_cast<int>(w.channels.size()) != set.channel_count)
            throw Error(errc::shape_mismatch, "inconsistent window shapes in set");
    return set;
}

} // namespace pulsebp
