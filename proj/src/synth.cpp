#include "pulsebp/synth.hpp"
#include "pulsebp/error.hpp"
#include "pulsebp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace pulsebp {

namespace {

constexpr double kTwoPi = 6.28318530717958647692528676655900577;

// Wrapped phase distance so beat templates are periodic across beat borders.
double wrapped(double phi, double center) {
    double d = phi - center;
    d -= std::floor(d + 0.5);
    return d;
}

double gaussian_bump(double phi, double center, double width) {
    const double d = wrapped(phi, center);
    return std::exp(-d * d / (2.0 * width * width));
}

// Beat morphology: systolic wave plus a dicrotic wave whose delay and relative
// amplitude carry the BP information (scaled by the coupling dial).
struct BeatShape {
    double dicrotic_delay;
    double dicrotic_amp;

    double eval(double phi) const {
        return gaussian_bump(phi, 0.30, 0.10) + dicrotic_amp * gaussian_bump(phi, 0.30 + dicrotic_delay, 0.12);
    }
};

// Standardized skew-normal draw (zero mean, unit variance) with shape alpha.
double skew_normal(Rng& rng, double alpha) {
    const double delta = alpha / std::sqrt(1.0 + alpha * alpha);
    const double u0 = rng.normal();
    const double u1 = rng.normal();
    const double z = delta * std::abs(u0) + std::sqrt(1.0 - delta * delta) * u1;
    const double mean = std::sqrt(2.0 / 3.14159265358979323846) * delta;
    const double sd = std::sqrt(1.0 - 2.0 * delta * delta / 3.14159265358979323846);
    return (z - mean) / sd;
}

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

} // namespace

void CohortSpec::validate() const {
    if (n_subjects < 1) throw Error(errc::invalid_spec, "cohort needs at least one subject");
    if (noise_std < 0.0) throw Error(errc::invalid_spec, "noise_std must be >= 0");
    if (!(morphology_coupling >= 0.0 && morphology_coupling <= 1.0))
        throw Error(errc::invalid_spec, "morphology_coupling must be in [0, 1]");
    if (!(hr_min > 0.0 && hr_max >= hr_min)) throw Error(errc::invalid_spec, "bad heart-rate range");
    if (!(duration_s > 1.0)) throw Error(errc::invalid_spec, "duration too short");
    if (!(fs > 0.0) || !(rgb_fps > 0.0)) throw Error(errc::invalid_spec, "sampling rates must be positive");
    if (!(bp_between_subject_std >= 0.0) || !(bp_within_subject_std >= 0.0))
        throw Error(errc::invalid_spec, "BP spreads must be >= 0");
}

SubjectRecord synth_subject(const CohortSpec& spec, int subject_index) {
    spec.validate();
    if (subject_index < 0 || subject_index >= spec.n_subjects)
        throw Error(errc::invalid_spec, "subject index out of range");

    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(subject_index) + 1));

    SubjectRecord rec;
    {
        char buf[16];
        std::snprintf(buf, sizeof buf, "S%04d", subject_index);
        rec.subject_id = buf;
    }

    const double hr = rng.uniform(spec.hr_min, spec.hr_max);
    const double beat_s = 60.0 / hr;

    double sbp0 = clamp(spec.sbp_mean + spec.bp_between_subject_std * skew_normal(rng, spec.bp_skew), 70.0, 180.0);
    double dbp0 = clamp(spec.dbp_mean + 0.5 * spec.bp_between_subject_std * skew_normal(rng, spec.bp_skew), 35.0, 90.0);
    if (sbp0 - dbp0 < 20.0) dbp0 = std::max(35.0, sbp0 - 20.0);

    const double mc = spec.morphology_coupling;
    // Per-subject morphology bias; it keys the shape to the subject, not to BP,
    // and vanishes with the coupling so an uncoupled cohort has identical shapes.
    const double off_delay = mc * rng.normal(0.0, 0.012);
    const double off_amp = mc * rng.normal(0.0, 0.025);
    const double drift_phase = rng.uniform(0.0, kTwoPi);

    const int n_beats = static_cast<int>(std::ceil(spec.duration_s / beat_s)) + 1;

    // Bounded per-beat BP wander around the subject baseline.
    std::vector<double> sbp_k(n_beats), dbp_k(n_beats);
    double dev_s = 0.0, dev_d = 0.0;
    const double w = spec.bp_within_subject_std;
    for (int k = 0; k < n_beats; ++k) {
        if (w > 0.0 && k > 0) {
            dev_s = clamp(dev_s + rng.normal(0.0, w / 4.0), -2.0 * w, 2.0 * w);
            dev_d = clamp(dev_d + rng.normal(0.0, w / 8.0), -w, w);
        }
        sbp_k[k] = clamp(sbp0 + dev_s, 70.0, 180.0);
        dbp_k[k] = clamp(dbp0 + dev_d, 35.0, 90.0);
        if (sbp_k[k] - dbp_k[k] < 15.0) dbp_k[k] = sbp_k[k] - 15.0;
    }

    auto shape_for_beat = [&](int k) {
        const double sbp_n = (sbp_k[k] - 120.0) / 40.0;
        const double dbp_n = (dbp_k[k] - 60.0) / 20.0;
        BeatShape s;
        s.dicrotic_delay = clamp(0.26 + mc * 0.10 * sbp_n + off_delay, 0.12, 0.45);
        s.dicrotic_amp = clamp(0.45 + mc * 0.25 * dbp_n + off_amp, 0.05, 0.95);
        return s;
    };

    const std::size_t n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.fs));
    rec.ppg.fs = spec.fs;
    rec.ppg.samples.resize(n);
    rec.abp.fs = spec.fs;
    rec.abp.samples.resize(n);

    std::vector<double> pulse_clean(n);
    std::vector<int> beat_of(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.fs;
        const int k = std::min(static_cast<int>(t / beat_s), n_beats - 1);
        const double phi = t / beat_s - static_cast<double>(k);
        beat_of[i] = k;
        pulse_clean[i] = shape_for_beat(k).eval(phi);
    }

    // ABP: per-beat affine map of the realized samples so the extrema equal the
    // programmed SBP/DBP exactly (the last, partial beat reuses the previous
    // beat's map to avoid forcing a fake extremum).
    {
        double prev_scale = 1.0, prev_offset = 0.0;
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j < n && beat_of[j] == beat_of[i]) ++j;
            const int k = beat_of[i];
            const double t_end = static_cast<double>(j) / spec.fs;
            const bool complete = t_end >= (static_cast<double>(k) + 1.0) * beat_s - 0.5 / spec.fs ||
                                  j < n;
            double lo = pulse_clean[i], hi = pulse_clean[i];
            std::size_t arg_hi = i;
            for (std::size_t m = i; m < j; ++m) {
                if (pulse_clean[m] < lo) lo = pulse_clean[m];
                if (pulse_clean[m] > hi) {
                    hi = pulse_clean[m];
                    arg_hi = m;
                }
            }
            double scale, offset;
            if (complete && hi > lo) {
                scale = (sbp_k[k] - dbp_k[k]) / (hi - lo);
                offset = dbp_k[k] - lo * scale;
                prev_scale = scale;
                prev_offset = offset;
                rec.truth.push_back({static_cast<double>(arg_hi) / spec.fs, sbp_k[k], dbp_k[k], hr});
            } else {
                scale = prev_scale;
                offset = prev_offset;
            }
            for (std::size_t m = i; m < j; ++m) rec.abp.samples[m] = pulse_clean[m] * scale + offset;
            i = j;
        }
    }

    // PPG: unit-amplitude pulse plus slow baseline drift and sensor noise.
    const double pp_mean = sbp0 - dbp0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.fs;
        const double drift = 0.25 * std::sin(kTwoPi * 0.08 * t + drift_phase);
        rec.ppg.samples[i] = pulse_clean[i] + drift;
    }
    if (spec.noise_std > 0.0) {
        for (std::size_t i = 0; i < n; ++i) rec.ppg.samples[i] += spec.noise_std * rng.normal();
        // The ABP reference line is much cleaner than the optical channel; a
        // full noise share would let order statistics inflate the per-beat
        // extrema that ground-truth labels are read from.
        for (std::size_t i = 0; i < n; ++i)
            rec.abp.samples[i] += 0.1 * spec.noise_std * pp_mean * rng.normal();
    }

    // RGB trace: constant skin tone, shared slow intensity modulation, pulse
    // embedded in the green channel at rPPG-realistic relative amplitude.
    const std::size_t n_rgb = static_cast<std::size_t>(std::llround(spec.duration_s * spec.rgb_fps));
    rec.rgb.fps = spec.rgb_fps;
    rec.rgb.subject_id = rec.subject_id;
    rec.rgb.r.resize(n_rgb);
    rec.rgb.g.resize(n_rgb);
    rec.rgb.b.resize(n_rgb);
    const double pulse_rel = 0.02; // green-channel modulation depth
    for (std::size_t i = 0; i < n_rgb; ++i) {
        const double t = static_cast<double>(i) / spec.rgb_fps;
        const int k = std::min(static_cast<int>(t / beat_s), n_beats - 1);
        const double phi = t / beat_s - static_cast<double>(k);
        const double pulse = shape_for_beat(k).eval(phi);
        const double intensity = 1.0 + 0.05 * std::sin(kTwoPi * 0.1 * t + drift_phase);
        const double sigma = spec.noise_std * 120.0 * pulse_rel;
        rec.rgb.r[i] = 160.0 * intensity + sigma * rng.normal();
        rec.rgb.g[i] = 120.0 * intensity * (1.0 - pulse_rel * pulse) + sigma * rng.normal();
        rec.rgb.b[i] = 95.0 * intensity + sigma * rng.normal();
    }

    // Bedside-monitor style labels: one per minute (centered), median of the
    // beats inside that minute.
    {
        const double step = 60.0;
        for (double t0 = 0.0; t0 < spec.duration_s; t0 += step) {
            const double t1 = std::min(t0 + step, spec.duration_s);
            std::vector<double> s_vals, d_vals;
            for (const BeatTruth& b : rec.truth)
                if (b.t >= t0 && b.t < t1) {
                    s_vals.push_back(b.sbp);
                    d_vals.push_back(b.dbp);
                }
            if (s_vals.empty()) continue;
            auto med = [](std::vector<double> v) {
                std::sort(v.begin(), v.end());
                const std::size_t m = v.size();
                return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
            };
            rec.rgb.bp_labels.push_back({(t0 + t1) / 2.0, med(s_vals), med(d_vals)});
        }
    }

    return rec;
}

std::vector<SubjectRecord> synth_cohort(const CohortSpec& spec) {
    spec.validate();
    std::vector<SubjectRecord> out;
    out.reserve(static_cast<std::size_t>(spec.n_subjects));
    for (int i = 0; i < spec.n_subjects; ++i) out.push_back(synth_subject(spec, i));
    return out;
}

} // namespace pulsebp
