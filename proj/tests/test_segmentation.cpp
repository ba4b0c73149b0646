#include <doctest.h>

#include "pulsebp/error.hpp"
#include "pulsebp/rng.hpp"
#include "pulsebp/segmentation.hpp"
#include "pulsebp/synth.hpp"
#include "test_oracles.hpp"

#include <cmath>

using namespace pulsebp;

namespace {

TimeSeries pulse_train(double hr_bpm, double fs, double duration_s) {
    const double beat_s = 60.0 / hr_bpm;
    const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
    TimeSeries ts;
    ts.fs = fs;
    ts.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        double phi = std::fmod(t / beat_s, 1.0);
        auto bump = [&](double c, double w) {
            double d = phi - c;
            d -= std::floor(d + 0.5);
            return std::exp(-d * d / (2.0 * w * w));
        };
        ts.samples[i] = bump(0.3, 0.1) + 0.45 * bump(0.58, 0.12);
    }
    return ts;
}

CohortSpec small_spec() {
    CohortSpec spec;
    spec.n_subjects = 4;
    spec.duration_s = 120.0;
    spec.noise_std = 0.0;
    spec.bp_within_subject_std = 2.0;
    spec.seed = 42;
    return spec;
}

} // namespace

TEST_CASE("const_time cutting discards the remainder") {
    const TimeSeries ppg = pulse_train(72.0, 125.0, 60.0);
    const TimeSeries abp = pulse_train(72.0, 125.0, 60.0);
    const auto windows = segment_const_time(ppg, abp, 7.0);
    CHECK(windows.size() == 8);
    for (const auto& w : windows) {
        CHECK(w.ppg.samples.size() == 875);
        CHECK(w.abp.samples.size() == 875);
    }
    CHECK(windows.back().source_offset_s == doctest::Approx(7.0 * 7));
}

TEST_CASE("const_time on a too-short record yields nothing") {
    const TimeSeries ppg = pulse_train(72.0, 125.0, 5.0);
    CHECK(segment_const_time(ppg, ppg, 7.0).empty());
}

TEST_CASE("const_time accepts a window equal to the record") {
    const TimeSeries ppg = pulse_train(60.0, 125.0, 20.0);
    const auto windows = segment_const_time(ppg, ppg, 20.0);
    CHECK(windows.size() == 1);
    CHECK(windows.front().ppg.samples.size() == 2500);
}

TEST_CASE("const_beats windows are normalized to 60 bpm") {
    const TimeSeries ppg = pulse_train(90.0, 125.0, 60.0);
    const auto windows = segment_const_beats(ppg, ppg, 7);
    REQUIRE(!windows.empty());
    for (const auto& w : windows) {
        CHECK(w.ppg.samples.size() == 875);
        CHECK(w.ppg.fs == 125.0);
        // Source span of 7 beats at 90 bpm is 4.667 s.
        CHECK(w.abp_source.samples.size() ==
              static_cast<std::size_t>(std::llround(7.0 * 60.0 / 90.0 * 125.0)));
        CHECK(estimate_heart_rate(w.ppg) == doctest::Approx(60.0).epsilon(1.0 / 60.0));
    }
}

TEST_CASE("const_beats at 60 bpm is an identity in length") {
    const TimeSeries ppg = pulse_train(60.0, 125.0, 60.0);
    const auto windows = segment_const_beats(ppg, ppg, 7);
    REQUIRE(!windows.empty());
    CHECK(windows.front().abp_source.samples.size() == 875);
    CHECK(windows.front().ppg.samples.size() == 875);
}

TEST_CASE("const_beats arithmetic at 120 bpm") {
    const TimeSeries ppg = pulse_train(120.0, 125.0, 30.0);
    const auto windows = segment_const_beats(ppg, ppg, 2);
    REQUIRE(!windows.empty());
    CHECK(windows.front().abp_source.samples.size() == 125); // 1.0 s of source
    CHECK(windows.front().ppg.samples.size() == 250);
}

TEST_CASE("abp peak detection finds programmed peaks") {
    const CohortSpec spec = small_spec();
    const SubjectRecord rec = synth_subject(spec, 0);
    const PeakIndices peaks = detect_abp_peaks(rec.abp);
    REQUIRE(peaks.systolic.size() > 10);

    std::size_t hits = 0;
    for (const BeatTruth& beat : rec.truth) {
        const auto programmed = static_cast<std::ptrdiff_t>(std::llround(beat.t * rec.abp.fs));
        for (std::size_t idx : peaks.systolic)
            if (std::abs(static_cast<std::ptrdiff_t>(idx) - programmed) <= 3) {
                ++hits;
                break;
            }
    }
    CHECK(static_cast<double>(hits) >= 0.95 * static_cast<double>(rec.truth.size()));

    // Strict interleaving: sys < dia < sys < dia ...
    for (std::size_t b = 0; b + 1 < peaks.systolic.size(); ++b) {
        REQUIRE(b < peaks.diastolic.size());
        CHECK(peaks.systolic[b] < peaks.diastolic[b]);
        CHECK(peaks.diastolic[b] < peaks.systolic[b + 1]);
    }
}

TEST_CASE("abp peak detection on a constant signal finds nothing") {
    TimeSeries flat;
    flat.fs = 125.0;
    flat.samples.assign(500, 80.0);
    const PeakIndices peaks = detect_abp_peaks(flat);
    CHECK(peaks.systolic.empty());
    CHECK(peaks.diastolic.empty());
}

TEST_CASE("abp peak detection locates a single triangular pulse") {
    TimeSeries tri;
    tri.fs = 125.0;
    tri.samples.assign(250, 60.0);
    for (int i = -12; i <= 12; ++i)
        tri.samples[static_cast<std::size_t>(100 + i)] = 60.0 + 40.0 * (1.0 - std::abs(i) / 12.0);
    const PeakIndices peaks = detect_abp_peaks(tri);
    REQUIRE(peaks.systolic.size() == 1);
    CHECK(std::abs(static_cast<int>(peaks.systolic.front()) - 100) <= 2);
}

TEST_CASE("ground truth takes the median over beats") {
    // Five beats, peak amplitudes 118..122 with trough 60; per-beat affine
    // scaling makes the realized extrema exact, so the median is exact.
    const double fs = 125.0;
    const std::vector<double> peaks = {118.0, 120.0, 122.0, 119.0, 121.0};
    TimeSeries abp;
    abp.fs = fs;
    abp.samples.resize(peaks.size() * 125);
    for (std::size_t k = 0; k < peaks.size(); ++k) {
        double lo = 1e300, hi = -1e300;
        std::vector<double> shape(125);
        for (std::size_t i = 0; i < 125; ++i) {
            const double phi = static_cast<double>(i) / 125.0;
            auto bump = [&](double c, double w) {
                double d = phi - c;
                d -= std::floor(d + 0.5);
                return std::exp(-d * d / (2.0 * w * w));
            };
            shape[i] = bump(0.3, 0.1) + 0.45 * bump(0.58, 0.12);
            lo = std::min(lo, shape[i]);
            hi = std::max(hi, shape[i]);
        }
        for (std::size_t i = 0; i < 125; ++i)
            abp.samples[k * 125 + i] = 60.0 + (peaks[k] - 60.0) * (shape[i] - lo) / (hi - lo);
    }
    const BpLabel label = ground_truth_bp(abp);
    CHECK(label.sbp == doctest::Approx(120.0).epsilon(1e-9));
    CHECK(label.dbp == doctest::Approx(60.0).epsilon(1e-9));
    CHECK(label.hr_valid);
    CHECK(label.hr == doctest::Approx(60.0).epsilon(0.05));
}

TEST_CASE("ground truth recovers a programmed subject") {
    CohortSpec spec = small_spec();
    spec.sbp_mean = 135.0;
    spec.dbp_mean = 70.0;
    spec.bp_between_subject_std = 0.0;
    spec.bp_within_subject_std = 0.0;
    spec.hr_min = spec.hr_max = 80.0;
    const SubjectRecord rec = synth_subject(spec, 0);
    TimeSeries window;
    window.fs = rec.abp.fs;
    window.samples.assign(rec.abp.samples.begin(),
                          rec.abp.samples.begin() + static_cast<std::ptrdiff_t>(std::llround(7.0 * 125.0)));
    const BpLabel label = ground_truth_bp(window);
    CHECK(std::abs(label.sbp - 135.0) <= 1.0);
    CHECK(std::abs(label.dbp - 70.0) <= 1.0);
    CHECK(label.hr_valid);
    CHECK(std::abs(label.hr - 80.0) <= 2.0);
}

TEST_CASE("ground truth of a single beat uses that beat") {
    // One isolated pulse in an otherwise flat 2.4 s window: a systolic value
    // and a trough exist, but no beat-to-beat interval.
    TimeSeries one_beat;
    one_beat.fs = 125.0;
    one_beat.samples.assign(300, 60.0);
    for (std::size_t i = 0; i < 300; ++i) {
        const double t = static_cast<double>(i) / 125.0;
        one_beat.samples[i] += 60.0 * std::exp(-(t - 1.0) * (t - 1.0) / (2.0 * 0.1 * 0.1)) +
                               27.0 * std::exp(-(t - 1.28) * (t - 1.28) / (2.0 * 0.12 * 0.12));
    }
    const BpLabel label = ground_truth_bp(one_beat);
    CHECK(label.sbp > 100.0);
    CHECK(label.dbp < 75.0);
    CHECK_FALSE(label.hr_valid);
}

TEST_CASE("gates reject each rule with its own reason") {
    GatingRules rules;
    LabeledWindow w;
    w.channels = {{0.0, 1.0}};
    w.sbp = 170.0;
    w.dbp = 70.0;
    w.hr = 80.0;
    w.snr = 5.0;
    CHECK(apply_gates(w, rules) == RejectReason::sbp_range);

    w.sbp = 120.0;
    w.dbp = 60.0;
    w.hr = 145.0;
    CHECK(apply_gates(w, rules) == RejectReason::hr_range);

    w.hr = 80.0;
    w.dbp = 85.0;
    CHECK(apply_gates(w, rules) == RejectReason::dbp_range);

    w.dbp = 60.0;
    w.snr = -8.0;
    CHECK(apply_gates(w, rules) == RejectReason::snr_min);
}

TEST_CASE("gates accept boundary values (closed intervals)") {
    GatingRules rules;
    LabeledWindow w;
    w.sbp = 165.0;
    w.dbp = 40.0;
    w.hr = 50.0;
    w.snr = -7.0;
    CHECK(!apply_gates(w, rules).has_value());
    w.sbp = 75.0;
    w.dbp = 80.0;
    w.hr = 140.0;
    CHECK(!apply_gates(w, rules).has_value());
}

TEST_CASE("gates reject NaN heart rate") {
    GatingRules rules;
    LabeledWindow w;
    w.sbp = 120.0;
    w.dbp = 60.0;
    w.hr = std::nan("");
    w.snr = 5.0;
    CHECK(apply_gates(w, rules) == RejectReason::hr_range);
}

TEST_CASE("window set from a clean cohort accepts everything labelable") {
    const CohortSpec spec = small_spec();
    const auto cohort = synth_cohort(spec);
    std::vector<RecordInput> records;
    for (const auto& rec : cohort) records.push_back({rec.subject_id, rec.ppg, rec.abp});

    const WindowSet ws =
        build_window_set(records, SegmentPolicy::const_beats(7), GatingRules{}, false);
    REQUIRE(ws.windows.size() > 20);

    // Conservation: accepted + rejected = generated.
    std::size_t rejected = 0;
    for (const auto& [reason, count] : ws.rejection_log)
        if (reason.rfind("record_", 0) != 0) rejected += count;
    CHECK(ws.windows.size() + rejected == ws.n_generated);

    // Clean data: nothing should fail the gates.
    CHECK(rejected == 0);

    // Shape and normalization invariants.
    for (const auto& w : ws.windows) {
        CHECK(w.len() == 875);
        CHECK(w.channels.size() == 1);
        TimeSeries pulse{w.channels.front(), 125.0};
        const double hr = estimate_heart_rate(pulse);
        CHECK(hr >= 55.0);
        CHECK(hr <= 65.0);
    }

    // Labels match programmed values (resampling happens after labeling).
    std::size_t close = 0;
    for (const auto& w : ws.windows) {
        double best_s = 1e300, best_d = 1e300;
        for (const auto& rec : cohort) {
            if (rec.subject_id != w.subject_id) continue;
            for (const BeatTruth& b : rec.truth) {
                best_s = std::min(best_s, std::abs(b.sbp - w.sbp));
                best_d = std::min(best_d, std::abs(b.dbp - w.dbp));
            }
        }
        if (best_s <= 1.0 && best_d <= 1.0) ++close;
    }
    CHECK(close == ws.windows.size());

    // Subject ids survive the pipeline.
    const auto ids = ws.subject_ids();
    CHECK(ids.size() == cohort.size());
}

TEST_CASE("window set rejects an implausible cohort wholesale") {
    CohortSpec spec = small_spec();
    spec.n_subjects = 2;
    spec.sbp_mean = 170.0;
    spec.bp_between_subject_std = 0.0;
    spec.bp_within_subject_std = 0.0;
    const auto cohort = synth_cohort(spec);
    std::vector<RecordInput> records;
    for (const auto& rec : cohort) records.push_back({rec.subject_id, rec.ppg, rec.abp});

    const WindowSet ws =
        build_window_set(records, SegmentPolicy::const_beats(7), GatingRules{}, false);
    CHECK(ws.windows.empty());
    CHECK(ws.rejection_log.at("sbp_range") == ws.n_generated);
}

TEST_CASE("derivative channels come out z-scored and equal length") {
    CohortSpec spec = small_spec();
    spec.n_subjects = 1;
    const auto cohort = synth_cohort(spec);
    std::vector<RecordInput> records{{cohort[0].subject_id, cohort[0].ppg, cohort[0].abp}};

    const WindowSet ws =
        build_window_set(records, SegmentPolicy::const_beats(7), GatingRules{}, true);
    REQUIRE(!ws.windows.empty());
    CHECK(ws.channel_count == 3);
    for (const auto& w : ws.windows) {
        REQUIRE(w.channels.size() == 3);
        for (const auto& ch : w.channels) {
            CHECK(ch.size() == w.channels.front().size());
            double mean = 0.0;
            for (double v : ch) mean += v;
            mean /= static_cast<double>(ch.size());
            CHECK(std::abs(mean) < 1e-6);
        }
    }
}

TEST_CASE("const_time windows keep their subject and offsets") {
    CohortSpec spec = small_spec();
    spec.n_subjects = 2;
    const auto cohort = synth_cohort(spec);
    std::vector<RecordInput> records;
    for (const auto& rec : cohort) records.push_back({rec.subject_id, rec.ppg, rec.abp});

    const WindowSet ws =
        build_window_set(records, SegmentPolicy::const_time(7.0), GatingRules{}, false);
    REQUIRE(!ws.windows.empty());
    double last_offset = -1.0;
    std::string last_subject;
    for (const auto& w : ws.windows) {
        if (w.subject_id == last_subject) CHECK(w.source_offset_s > last_offset);
        last_offset = w.source_offset_s;
        last_subject = w.subject_id;
        CHECK((w.subject_id == "S0000" || w.subject_id == "S0001"));
    }
}
