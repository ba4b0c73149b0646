#pragma once

#include "pulsebp/models.hpp"
#include "pulsebp/segmentation.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pulsebp {

struct SplitSpec {
    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;
    std::uint64_t seed = 0;
};

struct BinStat {
    double lo = 0.0, hi = 0.0; // mmHg edges; [lo, hi) except the last bin [lo, hi]
    std::size_t count = 0;
    std::optional<double> mae; // absent (not zero) for empty bins
};

struct TargetReport {
    double mae = 0.0;
    double std = 0.0; // population std of absolute errors
    std::vector<BinStat> bins;
};

struct EvalReport {
    TargetReport sbp;
    TargetReport dbp;
    std::size_t n_windows = 0;
    std::size_t n_subjects = 0;
    std::string model_id;
};

struct TTestResult {
    double t = 0.0;
    int df = 0;
    double p = 1.0;
};

struct BhsResult {
    bool pass = false;
    double fraction = 0.0;
};

using Pred = std::array<double, 2>; // (SBP, DBP) mmHg

/// Seeded shuffle of the sorted subject list, cut by fractions; every window
/// follows its subject. Throws errc::empty_partition naming the empty part.
std::array<WindowSet, 3> subject_split(const WindowSet& windows, const SplitSpec& spec);

/// Sample-level split that deliberately ignores subjects. Only for the
/// leakage demonstration; training on its output requires the explicit
/// allow_subject_overlap escape hatch.
std::array<WindowSet, 3> sample_random_split(const WindowSet& windows, const SplitSpec& spec);

struct MaeStats {
    double sbp_mae = 0.0, dbp_mae = 0.0;
    double sbp_std = 0.0, dbp_std = 0.0;
};

MaeStats mae(const std::vector<Pred>& pred, const std::vector<Pred>& truth);

/// Per-bin counts and MAE over [lo, hi] with the given width; truth values
/// must lie inside the range.
std::vector<BinStat> binned_mae(const std::vector<double>& pred, const std::vector<double>& truth,
                                double bin_width, double lo, double hi);

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

BhsResult bhs_aami_check(const std::vector<double>& pred, const std::vector<double>& truth,
                         double threshold_mmhg = 10.0, double required_fraction = 0.85);

/// Predictions plus full report (overall + 10 mmHg bins anchored at the gating
/// range) for a model over a window set.
EvalReport evaluate_model(const ModelSpec& spec, const Parameters& params, const WindowSet& ws,
                          const std::string& model_id, double bin_width = 10.0);

struct LosoFold {
    std::string subject_id;
    EvalReport model;
    EvalReport mean_regressor;
};

struct LosoResult {
    std::vector<LosoFold> folds;
    EvalReport pooled_model;
    EvalReport pooled_mean_regressor;
};

/// Leave-one-subject-out driver: per fold the base checkpoint's final layer is
/// fine-tuned on the remaining subjects (next subject in id order serves as
/// validation); with personalization the held-out subject's chronologically
/// first 20% joins the tuning set and evaluation uses only the remainder. The
/// mean regressor is re-fit per fold on the same effective training labels.
LosoResult loso_experiment(const WindowSet& windows, const Checkpoint& base,
                           const TrainConfig& cfg, bool personalization,
                           double personal_frac = 0.2);

} // namespace pulsebp
