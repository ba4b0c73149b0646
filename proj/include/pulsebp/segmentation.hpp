#pragma once

#include "pulsebp/dsp.hpp"
#include "pulsebp/timeseries.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pulsebp {

/// Windowing policy: fixed duration (cycles may be cut mid-beat) or a fixed
/// integer number of beats resampled so each beat spans one second at the
/// nominal rate (60 bpm equivalent).
struct SegmentPolicy {
    enum class Kind { ConstTime, ConstBeats };
    Kind kind = Kind::ConstBeats;
    double seconds = 7.0;       // ConstTime
    int beats = 7;              // ConstBeats
    double nominal_fs = 125.0;  // rate the windows are expressed at

    static SegmentPolicy const_time(double seconds);
    static SegmentPolicy const_beats(int beats, double nominal_fs = 125.0);
    /// ConstBeats window length in samples (beats x nominal_fs).
    std::size_t target_len() const;
    std::string name() const; // "const_time_7" / "const_beats_7"
};

/// Plausibility gates; closed intervals, values on the boundary are accepted.
struct GatingRules {
    double sbp_min = 75.0, sbp_max = 165.0;  // mmHg
    double dbp_min = 40.0, dbp_max = 80.0;   // mmHg
    double hr_min = 50.0, hr_max = 140.0;    // bpm
    double snr_min_db = -7.0;
};

enum class RejectReason { sbp_range, dbp_range, hr_range, snr_min };
const char* reject_reason_name(RejectReason r);

/// Fixed-length labeled pulse segment (1 or 3 channels).
struct LabeledWindow {
    std::string subject_id;
    std::vector<std::vector<double>> channels; // pulse [, d1, d2], equal length
    double sbp = 0.0;   // mmHg
    double dbp = 0.0;   // mmHg
    double hr = 0.0;    // bpm
    double snr = 0.0;   // dB
    double source_offset_s = 0.0;

    std::size_t len() const { return channels.empty() ? 0 : channels.front().size(); }
};

/// Gated windows plus bookkeeping about everything that was dropped.
struct WindowSet {
    std::vector<LabeledWindow> windows;
    SegmentPolicy policy;
    GatingRules rules;
    std::map<std::string, std::size_t> rejection_log;
    std::size_t n_generated = 0; // labeled-window candidates before gating
    int channel_count = 1;
    std::size_t window_len = 0;

    std::vector<std::string> subject_ids() const; // sorted unique
};

/// One raw window cut from a record. For ConstBeats, ppg/abp are the
/// resampled views and abp_source is the unresampled ABP slice the labels
/// must be extracted from.
struct SegmentedPair {
    TimeSeries ppg;
    TimeSeries abp;
    TimeSeries abp_source;
    double source_offset_s = 0.0;
};

std::vector<SegmentedPair> segment_const_time(const TimeSeries& ppg, const TimeSeries& abp,
                                              double seconds);

/// Cuts windows spanning `beats` beats at the record's estimated heart rate and
/// resamples them to beats x nominal_fs samples (labels come from abp_source).
std::vector<SegmentedPair> segment_const_beats(const TimeSeries& ppg, const TimeSeries& abp,
                                               int beats, double nominal_fs = 125.0);

struct PeakIndices {
    std::vector<std::size_t> systolic;
    std::vector<std::size_t> diastolic;
};

/// Two-moving-average beat detector (111 ms / 667 ms windows over the squared,
/// positive-clipped, band-passed signal). Systolic = block maxima of the raw
/// signal; diastolic = minima between beats plus the final beat's tail trough.
PeakIndices detect_abp_peaks(const TimeSeries& abp);

struct BpLabel {
    double sbp = 0.0;
    double dbp = 0.0;
    double hr = 0.0;
    bool hr_valid = false; // false when fewer than two systolic peaks
};

/// Median systolic amplitude, median diastolic amplitude, median inter-beat
/// heart rate of an ABP window. Throws errc::no_label when no beat is found.
BpLabel ground_truth_bp(const TimeSeries& abp_window);

/// First failed rule, or nullopt when the window passes all gates.
std::optional<RejectReason> apply_gates(const LabeledWindow& w, const GatingRules& rules);

struct RecordInput {
    std::string subject_id;
    TimeSeries ppg;
    TimeSeries abp;
};

/// Full record-to-dataset pipeline: band-pass, segment, label, z-score,
/// optional derivative channels, gate. Deterministic; records are processed in
/// subject order and windows kept in source order.
WindowSet build_window_set(const std::vector<RecordInput>& records, const SegmentPolicy& policy,
                           const GatingRules& rules, bool with_derivatives);

} // namespace pulsebp
