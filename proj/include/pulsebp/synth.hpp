#pragma once

#include "pulsebp/rppg_types.hpp"
#include "pulsebp/timeseries.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pulsebp {

/// Seeded synthetic cohort description. morphology_coupling dials how strongly
/// the pulse shape encodes blood pressure (0 = uninformative, 1 = a BP pair is
/// recoverable from two shape parameters).
struct CohortSpec {
    int n_subjects = 1;
    double sbp_mean = 120.0;              // mmHg
    double dbp_mean = 60.0;               // mmHg
    double bp_between_subject_std = 15.0; // mmHg (SBP; DBP uses half)
    double bp_within_subject_std = 0.0;   // mmHg wander around the baseline
    double bp_skew = 0.0;                 // skew-normal shape parameter
    double hr_min = 55.0, hr_max = 95.0;  // bpm, uniform per subject
    double morphology_coupling = 1.0;     // [0, 1]
    double noise_std = 0.0;               // fraction of pulse amplitude
    double duration_s = 60.0;
    double fs = 125.0;
    double rgb_fps = 30.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct BeatTruth {
    double t = 0.0;   // s, systolic peak time
    double sbp = 0.0; // mmHg
    double dbp = 0.0; // mmHg
    double hr = 0.0;  // bpm
};

struct SubjectRecord {
    std::string subject_id;
    TimeSeries ppg;
    TimeSeries abp;
    RgbTrace rgb;
    std::vector<BeatTruth> truth;
};

/// Deterministic function of (spec.seed, subject_index); subjects use
/// independent random streams so parallel generation matches sequential.
SubjectRecord synth_subject(const CohortSpec& spec, int subject_index);

std::vector<SubjectRecord> synth_cohort(const CohortSpec& spec);

} // namespace pulsebp
