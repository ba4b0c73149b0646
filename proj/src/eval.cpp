#include "pulsebp/eval.hpp"
#include "pulsebp/error.hpp"
#include "pulsebp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace pulsebp {

namespace {

// Regularized incomplete beta I_x(a, b) via Lentz's continued fraction.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, int df) {
    const double x = static_cast<double>(df) / (static_cast<double>(df) + t * t);
    return reg_inc_beta(static_cast<double>(df) / 2.0, 0.5, x);
}

WindowSet shell_of(const WindowSet& src) {
    WindowSet out = src;
    out.windows.clear();
    out.rejection_log.clear();
    out.n_generated = 0;
    return out;
}

std::array<WindowSet, 3> cut_by_fractions(const WindowSet& windows,
                                          const std::vector<std::size_t>& order,
                                          const SplitSpec& spec,
                                          bool order_is_subjects,
                                          const std::vector<std::string>& subjects) {
    if (!(spec.train_frac > 0.0 && spec.val_frac > 0.0 && spec.test_frac > 0.0))
        throw Error(errc::invalid_spec, "split fractions must be positive");
    if (spec.train_frac + spec.val_frac + spec.test_frac > 1.0 + 1e-9)
        throw Error(errc::invalid_spec, "split fractions must sum to at most 1");

    const std::size_t n = order.size();
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train_frac * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::floor(spec.val_frac * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(std::floor(spec.test_frac * static_cast<double>(n)));
    if (n_train == 0) throw Error(errc::empty_partition, "train partition is empty");
    if (n_val == 0) throw Error(errc::empty_partition, "validation partition is empty");
    if (n_test == 0) throw Error(errc::empty_partition, "test partition is empty");

    std::array<WindowSet, 3> out{shell_of(windows), shell_of(windows), shell_of(windows)};
    auto part_of = [&](std::size_t rank) {
        if (rank < n_train) return 0;
        if (rank < n_train + n_val) return 1;
        if (rank < n_train + n_val + n_test) return 2;
        return 0; // leftover fraction goes to train
    };

    if (order_is_subjects) {
        std::map<std::string, int> assign;
        for (std::size_t r = 0; r < n; ++r) assign[subjects[order[r]]] = part_of(r);
        for (const auto& w : windows.windows)
            out[static_cast<std::size_t>(assign.at(w.subject_id))].windows.push_back(w);
    } else {
        for (std::size_t r = 0; r < n; ++r)
            out[static_cast<std::size_t>(part_of(r))].windows.push_back(windows.windows[order[r]]);
        for (auto& part : out) {
            std::stable_sort(part.windows.begin(), part.windows.end(),
                             [](const LabeledWindow& a, const LabeledWindow& b) {
                                 if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
                                 return a.source_offset_s < b.source_offset_s;
                             });
        }
    }
    return out;
}

std::vector<Pred> predictions_for(const ModelSpec& spec, const Parameters& params,
                                  const WindowSet& ws) {
    std::vector<Pred> preds;
    preds.reserve(ws.windows.size());
    for (const auto& w : ws.windows) preds.push_back(predict(spec, params, w));
    return preds;
}

EvalReport report_from_pairs(const std::vector<Pred>& preds, const std::vector<const LabeledWindow*>& windows,
                             const GatingRules& rules, const std::string& model_id, double bin_width) {
    std::vector<Pred> truth;
    truth.reserve(windows.size());
    std::vector<double> ps, ts, pd, td;
    std::set<std::string> subjects;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        truth.push_back({windows[i]->sbp, windows[i]->dbp});
        ps.push_back(preds[i][0]);
        ts.push_back(windows[i]->sbp);
        pd.push_back(preds[i][1]);
        td.push_back(windows[i]->dbp);
        subjects.insert(windows[i]->subject_id);
    }
    const MaeStats overall = mae(preds, truth);
    EvalReport rep;
    rep.model_id = model_id;
    rep.n_windows = windows.size();
    rep.n_subjects = subjects.size();
    rep.sbp.mae = overall.sbp_mae;
    rep.sbp.std = overall.sbp_std;
    rep.dbp.mae = overall.dbp_mae;
    rep.dbp.std = overall.dbp_std;
    rep.sbp.bins = binned_mae(ps, ts, bin_width, rules.sbp_min, rules.sbp_max);
    rep.dbp.bins = binned_mae(pd, td, bin_width, rules.dbp_min, rules.dbp_max);
    return rep;
}

} // namespace

std::array<WindowSet, 3> subject_split(const WindowSet& windows, const SplitSpec& spec) {
    const std::vector<std::string> subjects = windows.subject_ids();
    if (subjects.size() < 3)
        throw Error(errc::insufficient_data, "need at least 3 subjects for a subject split");
    std::vector<std::size_t> order(subjects.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(spec.seed, 0x73706c69));
    rng.shuffle(order);
    auto parts = cut_by_fractions(windows, order, spec, /*order_is_subjects=*/true, subjects);
    check_subject_disjoint(parts[0], parts[1]);
    check_subject_disjoint(parts[0], parts[2]);
    check_subject_disjoint(parts[1], parts[2]);
    return parts;
}

std::array<WindowSet, 3> sample_random_split(const WindowSet& windows, const SplitSpec& spec) {
    if (windows.windows.size() < 3)
        throw Error(errc::insufficient_data, "need at least 3 windows");
    std::vector<std::size_t> order(windows.windows.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(spec.seed, 0x73616d70));
    rng.shuffle(order);
    return cut_by_fractions(windows, order, spec, /*order_is_subjects=*/false, {});
}

MaeStats mae(const std::vector<Pred>& pred, const std::vector<Pred>& truth) {
    if (pred.size() != truth.size()) throw Error(errc::data, "prediction/truth length mismatch");
    if (pred.empty()) throw Error(errc::data, "empty prediction list");
    const double n = static_cast<double>(pred.size());
    double ms = 0.0, md = 0.0;
    std::vector<double> abs_s, abs_d;
    abs_s.reserve(pred.size());
    abs_d.reserve(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        abs_s.push_back(std::abs(pred[i][0] - truth[i][0]));
        abs_d.push_back(std::abs(pred[i][1] - truth[i][1]));
        ms += abs_s.back();
        md += abs_d.back();
    }
    ms /= n;
    md /= n;
    double vs = 0.0, vd = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        vs += (abs_s[i] - ms) * (abs_s[i] - ms);
        vd += (abs_d[i] - md) * (abs_d[i] - md);
    }
    return {ms, md, std::sqrt(vs / n), std::sqrt(vd / n)};
}

std::vector<BinStat> binned_mae(const std::vector<double>& pred, const std::vector<double>& truth,
                                double bin_width, double lo, double hi) {
    if (pred.size() != truth.size()) throw Error(errc::data, "prediction/truth length mismatch");
    if (!(bin_width > 0.0) || !(hi > lo)) throw Error(errc::invalid_spec, "bad bin range");

    const auto n_bins = static_cast<std::size_t>(std::ceil((hi - lo) / bin_width - 1e-9));
    std::vector<BinStat> bins(n_bins);
    std::vector<double> sums(n_bins, 0.0);
    for (std::size_t b = 0; b < n_bins; ++b) {
        bins[b].lo = lo + static_cast<double>(b) * bin_width;
        bins[b].hi = std::min(hi, bins[b].lo + bin_width);
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double t = truth[i];
        if (t < lo || t > hi)
            throw Error(errc::data, "truth value " + std::to_string(t) + " outside bin range");
        std::size_t b = t >= hi ? n_bins - 1
                                : static_cast<std::size_t>(std::floor((t - lo) / bin_width));
        if (b >= n_bins) b = n_bins - 1;
        ++bins[b].count;
        sums[b] += std::abs(pred[i] - t);
    }
    for (std::size_t b = 0; b < n_bins; ++b)
        if (bins[b].count > 0) bins[b].mae = sums[b] / static_cast<double>(bins[b].count);
    return bins;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error(errc::data, "paired t-test needs equal lengths");
    if (a.size() < 2) throw Error(errc::insufficient_data, "paired t-test needs n >= 2");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);

    TTestResult result;
    result.df = static_cast<int>(n) - 1;
    if (var == 0.0) {
        if (mean == 0.0) {
            result.t = 0.0;
            result.p = 1.0;
            return result; // identical samples: no evidence either way
        }
        throw Error(errc::degenerate_test, "constant nonzero differences have no t statistic");
    }
    result.t = mean / std::sqrt(var / static_cast<double>(n));
    result.p = student_t_two_sided_p(result.t, result.df);
    return result;
}

BhsResult bhs_aami_check(const std::vector<double>& pred, const std::vector<double>& truth,
                         double threshold_mmhg, double required_fraction) {
    if (pred.size() != truth.size()) throw Error(errc::data, "prediction/truth length mismatch");
    if (pred.empty()) throw Error(errc::data, "empty prediction list");
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (std::abs(pred[i] - truth[i]) <= threshold_mmhg) ++ok;
    BhsResult r;
    r.fraction = static_cast<double>(ok) / static_cast<double>(pred.size());
    r.pass = r.fraction >= required_fraction;
    return r;
}

EvalReport evaluate_model(const ModelSpec& spec, const Parameters& params, const WindowSet& ws,
                          const std::string& model_id, double bin_width) {
    if (ws.windows.empty()) throw Error(errc::data, "nothing to evaluate");
    const std::vector<Pred> preds = predictions_for(spec, params, ws);
    std::vector<const LabeledWindow*> wptr;
    for (const auto& w : ws.windows) wptr.push_back(&w);
    return report_from_pairs(preds, wptr, ws.rules, model_id, bin_width);
}

LosoResult loso_experiment(const WindowSet& windows, const Checkpoint& base, const TrainConfig& cfg,
                           bool personalization, double personal_frac) {
    const std::vector<std::string> subjects = windows.subject_ids();
    if (subjects.size() < 3)
        throw Error(errc::insufficient_data, "leave-one-subject-out needs at least 3 subjects");

    auto windows_of = [&](const std::string& id) {
        WindowSet ws = shell_of(windows);
        for (const auto& w : windows.windows)
            if (w.subject_id == id) ws.windows.push_back(w);
        return ws;
    };
    auto windows_excluding = [&](const std::string& test_id, const std::string& val_id) {
        WindowSet ws = shell_of(windows);
        for (const auto& w : windows.windows)
            if (w.subject_id != test_id && w.subject_id != val_id) ws.windows.push_back(w);
        return ws;
    };

    LosoResult result;
    std::vector<Pred> pooled_pred, pooled_mean_pred;
    std::vector<const LabeledWindow*> pooled_windows;
    std::vector<LabeledWindow> pooled_storage;
    pooled_storage.reserve(windows.windows.size());

    for (std::size_t si = 0; si < subjects.size(); ++si) {
        const std::string& test_id = subjects[si];
        // Deterministic rotation: the next subject in id order validates.
        const std::string& val_id = subjects[(si + 1) % subjects.size()];

        const WindowSet train_set = windows_excluding(test_id, val_id);
        const WindowSet val_set = windows_of(val_id);
        const WindowSet test_set = windows_of(test_id);
        if (train_set.windows.empty() || val_set.windows.empty() || test_set.windows.empty())
            throw Error(errc::insufficient_data, "fold with an empty partition");

        WindowSet eval_set = test_set;
        Checkpoint tuned;
        std::vector<const LabeledWindow*> mean_fit_windows;
        for (const auto& w : train_set.windows) mean_fit_windows.push_back(&w);

        if (personalization) {
            auto [res, held] = personalize(base, test_set, personal_frac, cfg, &train_set, &val_set);
            tuned = std::move(res.checkpoint);
            // Disjointness of tuning and evaluation windows, fold by fold.
            const std::size_t n_tune = test_set.windows.size() - held.windows.size();
            if (n_tune != static_cast<std::size_t>(std::ceil(
                              personal_frac * static_cast<double>(test_set.windows.size()) - 1e-12)))
                throw Error(errc::split_contamination, "personalization split size mismatch");
            // The subject's tuning windows (chronologically first) also feed the
            // fold's mean regressor: they are part of its effective training data.
            std::vector<const LabeledWindow*> chron;
            for (const auto& w : test_set.windows) chron.push_back(&w);
            std::sort(chron.begin(), chron.end(), [](const LabeledWindow* a, const LabeledWindow* b) {
                if (a->source_offset_s != b->source_offset_s)
                    return a->source_offset_s < b->source_offset_s;
                if (a->sbp != b->sbp) return a->sbp < b->sbp;
                if (a->dbp != b->dbp) return a->dbp < b->dbp;
                return a->snr < b->snr;
            });
            for (std::size_t i = 0; i < n_tune; ++i) mean_fit_windows.push_back(chron[i]);
            eval_set = std::move(held);
        } else {
            TrainResult res = finetune_final_layer(base, train_set, val_set, cfg);
            tuned = std::move(res.checkpoint);
        }

        // Mean regressor re-fit on the fold's effective training labels.
        ModelSpec mean_spec = ModelSpec::mean(base.spec.input_channels, base.spec.input_len);
        Parameters mean_params = init(mean_spec, 0);
        double ms = 0.0, md = 0.0;
        for (const auto* w : mean_fit_windows) {
            ms += w->sbp;
            md += w->dbp;
        }
        mean_params.tensors.front().v = {ms / static_cast<double>(mean_fit_windows.size()),
                                         md / static_cast<double>(mean_fit_windows.size())};

        LosoFold fold;
        fold.subject_id = test_id;
        fold.model = evaluate_model(tuned.spec, tuned.params, eval_set, base.spec.kind_name());
        fold.mean_regressor = evaluate_model(mean_spec, mean_params, eval_set, "mean_regressor");
        result.folds.push_back(std::move(fold));

        const std::vector<Pred> mp = predictions_for(tuned.spec, tuned.params, eval_set);
        const std::vector<Pred> rp = predictions_for(mean_spec, mean_params, eval_set);
        for (std::size_t i = 0; i < eval_set.windows.size(); ++i) {
            pooled_storage.push_back(eval_set.windows[i]);
            pooled_pred.push_back(mp[i]);
            pooled_mean_pred.push_back(rp[i]);
        }
    }

    for (const auto& w : pooled_storage) pooled_windows.push_back(&w);
    result.pooled_model =
        report_from_pairs(pooled_pred, pooled_windows, windows.rules, base.spec.kind_name(), 10.0);
    result.pooled_mean_regressor =
        report_from_pairs(pooled_mean_pred, pooled_windows, windows.rules, "mean_regressor", 10.0);
    return result;
}

} // namespace pulsebp
