// Python bindings for the main pipeline operations. Thin wrappers: numpy
// arrays in, numpy arrays / plain dicts out; model checkpoints travel as the
// same JSON the CLI writes.

#include "pulsebp/dsp.hpp"
#include "pulsebp/error.hpp"
#include "pulsebp/eval.hpp"
#include "pulsebp/io.hpp"
#include "pulsebp/models.hpp"
#include "pulsebp/rppg.hpp"
#include "pulsebp/segmentation.hpp"
#include "pulsebp/rng.hpp"
#include "pulsebp/synth.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace pulsebp;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vec(const DArray& a) {
    if (a.ndim() != 1) throw Error(errc::data, "expected a 1-D array");
    return {a.data(), a.data() + a.shape(0)};
}

py::array_t<double> to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

SegmentPolicy policy_from_string(const std::string& text) {
    const std::size_t colon = text.find(':');
    if (colon == std::string::npos) throw Error(errc::config, "policy must look like const_beats:7");
    const std::string kind = text.substr(0, colon);
    if (kind == "const_time") return SegmentPolicy::const_time(std::stod(text.substr(colon + 1)));
    if (kind == "const_beats") return SegmentPolicy::const_beats(std::stoi(text.substr(colon + 1)));
    throw Error(errc::config, "unknown policy kind: " + kind);
}

GatingRules rules_from_dict(const py::dict& d) {
    GatingRules rules;
    if (d.contains("sbp")) {
        auto t = d["sbp"].cast<std::pair<double, double>>();
        rules.sbp_min = t.first;
        rules.sbp_max = t.second;
    }
    if (d.contains("dbp")) {
        auto t = d["dbp"].cast<std::pair<double, double>>();
        rules.dbp_min = t.first;
        rules.dbp_max = t.second;
    }
    if (d.contains("hr")) {
        auto t = d["hr"].cast<std::pair<double, double>>();
        rules.hr_min = t.first;
        rules.hr_max = t.second;
    }
    if (d.contains("snr_min_db")) rules.snr_min_db = d["snr_min_db"].cast<double>();
    return rules;
}

CohortSpec cohort_from_dict(const py::dict& d) {
    CohortSpec s;
    auto get = [&](const char* key, double fallback) {
        return d.contains(key) ? d[key].cast<double>() : fallback;
    };
    if (d.contains("n_subjects")) s.n_subjects = d["n_subjects"].cast<int>();
    s.sbp_mean = get("sbp_mean", s.sbp_mean);
    s.dbp_mean = get("dbp_mean", s.dbp_mean);
    s.bp_between_subject_std = get("bp_between_subject_std", s.bp_between_subject_std);
    s.bp_within_subject_std = get("bp_within_subject_std", s.bp_within_subject_std);
    s.bp_skew = get("bp_skew", s.bp_skew);
    s.hr_min = get("hr_min", s.hr_min);
    s.hr_max = get("hr_max", s.hr_max);
    s.morphology_coupling = get("morphology_coupling", s.morphology_coupling);
    s.noise_std = get("noise_std", s.noise_std);
    s.duration_s = get("duration_s", s.duration_s);
    s.fs = get("fs", s.fs);
    s.rgb_fps = get("rgb_fps", s.rgb_fps);
    if (d.contains("seed")) s.seed = d["seed"].cast<std::uint64_t>();
    return s;
}

py::dict window_set_to_dict(const WindowSet& ws) {
    const std::size_t n = ws.windows.size();
    const std::size_t channels = static_cast<std::size_t>(ws.channel_count);
    const std::size_t len = ws.window_len;
    py::array_t<double> data({n, channels, len});
    auto buf = data.mutable_unchecked<3>();
    py::list subjects;
    py::array_t<double> sbp(static_cast<py::ssize_t>(n)), dbp(static_cast<py::ssize_t>(n)),
        hr(static_cast<py::ssize_t>(n)), snr(static_cast<py::ssize_t>(n)),
        offsets(static_cast<py::ssize_t>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const LabeledWindow& w = ws.windows[i];
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t j = 0; j < len; ++j)
                buf(i, c, j) = w.channels[c][j];
        subjects.append(w.subject_id);
        sbp.mutable_data()[i] = w.sbp;
        dbp.mutable_data()[i] = w.dbp;
        hr.mutable_data()[i] = w.hr;
        snr.mutable_data()[i] = w.snr;
        offsets.mutable_data()[i] = w.source_offset_s;
    }
    py::dict out;
    out["windows"] = data;
    out["subject_id"] = subjects;
    out["sbp"] = sbp;
    out["dbp"] = dbp;
    out["hr"] = hr;
    out["snr"] = snr;
    out["source_offset_s"] = offsets;
    py::dict log;
    for (const auto& [k, v] : ws.rejection_log) log[py::str(k)] = v;
    out["rejection_log"] = log;
    out["n_generated"] = ws.n_generated;
    out["policy"] = ws.policy.name();
    return out;
}

WindowSet window_set_from_dict(const py::dict& d) {
    WindowSet ws;
    const auto data = d["windows"].cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
    if (data.ndim() != 3) throw Error(errc::data, "windows must be [n, channels, len]");
    const auto n = static_cast<std::size_t>(data.shape(0));
    const auto channels = static_cast<std::size_t>(data.shape(1));
    const auto len = static_cast<std::size_t>(data.shape(2));
    ws.channel_count = static_cast<int>(channels);
    ws.window_len = len;
    const auto subjects = d["subject_id"].cast<std::vector<std::string>>();
    const auto sbp = to_vec(d["sbp"].cast<DArray>());
    const auto dbp = to_vec(d["dbp"].cast<DArray>());
    std::vector<double> offsets(n, 0.0);
    if (d.contains("source_offset_s")) offsets = to_vec(d["source_offset_s"].cast<DArray>());
    auto buf = data.unchecked<3>();
    for (std::size_t i = 0; i < n; ++i) {
        LabeledWindow w;
        w.subject_id = subjects.at(i);
        w.sbp = sbp.at(i);
        w.dbp = dbp.at(i);
        w.hr = 60.0;
        w.snr = 0.0;
        w.source_offset_s = offsets[i];
        for (std::size_t c = 0; c < channels; ++c) {
            std::vector<double> ch(len);
            for (std::size_t j = 0; j < len; ++j) ch[j] = buf(i, c, j);
            w.channels.push_back(std::move(ch));
        }
        ws.windows.push_back(std::move(w));
    }
    ws.n_generated = n;
    return ws;
}

ModelSpec spec_from_dict(const py::dict& d, const WindowSet& shaped) {
    io::json j;
    j["kind"] = d.contains("kind") ? d["kind"].cast<std::string>() : "linear";
    j["input_channels"] = shaped.channel_count;
    j["input_len"] = static_cast<int>(shaped.window_len);
    if (d.contains("hidden")) j["hidden"] = d["hidden"].cast<std::vector<int>>();
    if (d.contains("dense")) j["dense"] = d["dense"].cast<std::vector<int>>();
    return io::model_spec_from_json(j);
}

TrainConfig config_from_dict(const py::dict& d) {
    TrainConfig cfg;
    if (d.contains("lr")) cfg.lr = d["lr"].cast<double>();
    if (d.contains("epochs")) cfg.epochs = d["epochs"].cast<int>();
    if (d.contains("batch_size")) cfg.batch_size = d["batch_size"].cast<int>();
    if (d.contains("seed")) cfg.seed = d["seed"].cast<std::uint64_t>();
    if (d.contains("patience")) cfg.patience = d["patience"].cast<int>();
    return cfg;
}

std::string checkpoint_to_json_string(const Checkpoint& ckpt) {
    io::json j;
    j["spec"] = io::model_spec_to_json(ckpt.spec);
    j["target_scaling"] = {{"mean", {ckpt.params.target_mean[0], ckpt.params.target_mean[1]}},
                           {"std", {ckpt.params.target_std[0], ckpt.params.target_std[1]}}};
    j["tensors"] = io::json::array();
    for (const Tensor& t : ckpt.params.tensors)
        j["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"trainable", t.trainable}, {"data", t.v}});
    j["metadata"] = {{"epochs_run", ckpt.epochs_run},
                     {"best_val_mae", ckpt.best_val_mae},
                     {"config_hash", ckpt.config_hash}};
    return j.dump();
}

Checkpoint checkpoint_from_json_string(const std::string& text) {
    const io::json j = io::json::parse(text);
    Checkpoint ckpt;
    ckpt.spec = io::model_spec_from_json(j.at("spec"));
    ckpt.params.target_mean = {j.at("target_scaling").at("mean")[0].get<double>(),
                               j.at("target_scaling").at("mean")[1].get<double>()};
    ckpt.params.target_std = {j.at("target_scaling").at("std")[0].get<double>(),
                              j.at("target_scaling").at("std")[1].get<double>()};
    for (const auto& tj : j.at("tensors")) {
        Tensor t;
        t.name = tj.at("name").get<std::string>();
        t.shape = tj.at("shape").get<std::vector<int>>();
        t.trainable = tj.at("trainable").get<bool>();
        t.v = tj.at("data").get<std::vector<double>>();
        ckpt.params.tensors.push_back(std::move(t));
    }
    ckpt.epochs_run = j.at("metadata").at("epochs_run").get<int>();
    ckpt.best_val_mae = j.at("metadata").at("best_val_mae").get<double>();
    ckpt.config_hash = j.at("metadata").at("config_hash").get<std::string>();
    return ckpt;
}

} // namespace

PYBIND11_MODULE(_pulsebp, m) {
    m.doc() = "PPG/rPPG blood-pressure pipeline (C++ core)";
    m.attr("__version__") = "0.1.0";

    py::register_exception<Error>(m, "PipelineError");

    m.def(
        "bandpass",
        [](const DArray& x, double fs, double low, double high, int order) {
            return to_array(bandpass({to_vec(x), fs}, {low, high, order}).samples);
        },
        py::arg("samples"), py::arg("fs"), py::arg("low_hz") = 0.5, py::arg("high_hz") = 8.0,
        py::arg("order") = 4, "Zero-phase Butterworth band-pass.");

    m.def(
        "derivative",
        [](const DArray& x, double fs, int order) {
            return to_array(derivative({to_vec(x), fs}, order).samples);
        },
        py::arg("samples"), py::arg("fs"), py::arg("order") = 1);

    m.def(
        "estimate_heart_rate",
        [](const DArray& x, double fs, double low, double high) {
            return estimate_heart_rate({to_vec(x), fs}, {low, high, 1});
        },
        py::arg("samples"), py::arg("fs"), py::arg("low_hz") = 0.7, py::arg("high_hz") = 3.0,
        "Dominant spectral component as bpm.");

    m.def(
        "resample_to_length",
        [](const DArray& x, double fs, std::size_t target_len) {
            const TimeSeries out = resample_to_length({to_vec(x), fs}, target_len);
            return py::make_tuple(to_array(out.samples), out.fs);
        },
        py::arg("samples"), py::arg("fs"), py::arg("target_len"));

    m.def(
        "snr_db",
        [](const DArray& x, double fs, double hr_bpm, double min_duration_s) {
            return snr_db({to_vec(x), fs}, hr_bpm, min_duration_s);
        },
        py::arg("samples"), py::arg("fs"), py::arg("hr_bpm"), py::arg("min_duration_s") = 5.0,
        "Harmonic-template SNR in dB.");

    m.def(
        "zscore",
        [](const DArray& x) { return to_array(zscore({to_vec(x), 1.0}).samples); },
        py::arg("samples"));

    m.def(
        "pos_extract",
        [](const DArray& r, const DArray& g, const DArray& b, double fps) {
            RgbTrace trace;
            trace.r = to_vec(r);
            trace.g = to_vec(g);
            trace.b = to_vec(b);
            trace.fps = fps;
            trace.subject_id = "trace";
            return to_array(pos_extract(trace).samples);
        },
        py::arg("r"), py::arg("g"), py::arg("b"), py::arg("fps"),
        "Plane-orthogonal-to-skin pulse from per-frame RGB means.");

    m.def(
        "synth_cohort",
        [](const py::dict& spec_dict) {
            const CohortSpec spec = cohort_from_dict(spec_dict);
            py::list out;
            for (const SubjectRecord& rec : synth_cohort(spec)) {
                py::dict d;
                d["subject_id"] = rec.subject_id;
                d["fs"] = rec.ppg.fs;
                d["ppg"] = to_array(rec.ppg.samples);
                d["abp"] = to_array(rec.abp.samples);
                py::dict rgb;
                rgb["fps"] = rec.rgb.fps;
                rgb["r"] = to_array(rec.rgb.r);
                rgb["g"] = to_array(rec.rgb.g);
                rgb["b"] = to_array(rec.rgb.b);
                py::list labels;
                for (const BpStamp& s : rec.rgb.bp_labels)
                    labels.append(py::make_tuple(s.t, s.sbp, s.dbp));
                rgb["labels"] = labels;
                d["rgb"] = rgb;
                py::list truth;
                for (const BeatTruth& b : rec.truth)
                    truth.append(py::make_tuple(b.t, b.sbp, b.dbp, b.hr));
                d["truth"] = truth;
                out.append(d);
            }
            return out;
        },
        py::arg("spec"), "Seeded synthetic cohort of PPG/ABP records with RGB traces.");

    m.def(
        "build_window_set",
        [](const py::list& records, const std::string& policy, bool derivatives,
           const py::object& gating) {
            std::vector<RecordInput> inputs;
            for (const auto& item : records) {
                const py::dict d = item.cast<py::dict>();
                RecordInput rec;
                rec.subject_id = d["subject_id"].cast<std::string>();
                const double fs = d["fs"].cast<double>();
                rec.ppg = {to_vec(d["ppg"].cast<DArray>()), fs};
                rec.abp = {to_vec(d["abp"].cast<DArray>()), fs};
                inputs.push_back(std::move(rec));
            }
            const GatingRules rules =
                gating.is_none() ? GatingRules{} : rules_from_dict(gating.cast<py::dict>());
            return window_set_to_dict(
                build_window_set(inputs, policy_from_string(policy), rules, derivatives));
        },
        py::arg("records"), py::arg("policy") = "const_beats:7", py::arg("derivatives") = false,
        py::arg("gating") = py::none(),
        "Records to gated, labeled, fixed-length windows.");

    m.def(
        "rppg_window_pipeline",
        [](const py::dict& trace_dict, const py::object& gating, int beats) {
            RgbTrace trace;
            trace.subject_id = trace_dict.contains("subject_id")
                                   ? trace_dict["subject_id"].cast<std::string>()
                                   : "trace";
            trace.fps = trace_dict["fps"].cast<double>();
            trace.r = to_vec(trace_dict["r"].cast<DArray>());
            trace.g = to_vec(trace_dict["g"].cast<DArray>());
            trace.b = to_vec(trace_dict["b"].cast<DArray>());
            for (const auto& item : trace_dict["labels"].cast<py::list>()) {
                const auto t = item.cast<std::tuple<double, double, double>>();
                trace.bp_labels.push_back({std::get<0>(t), std::get<1>(t), std::get<2>(t)});
            }
            const GatingRules rules =
                gating.is_none() ? GatingRules{} : rules_from_dict(gating.cast<py::dict>());
            return window_set_to_dict(rppg_window_pipeline(trace, rules, beats));
        },
        py::arg("trace"), py::arg("gating") = py::none(), py::arg("beats") = 7,
        "POS extraction plus the beat-normalized windowing pipeline.");

    m.def(
        "train_model",
        [](const py::dict& train_set, const py::dict& val_set, const py::dict& model,
           const py::dict& config, bool allow_subject_overlap) {
            const WindowSet train_ws = window_set_from_dict(train_set);
            const WindowSet val_ws = window_set_from_dict(val_set);
            const ModelSpec spec = spec_from_dict(model, train_ws);
            const TrainConfig cfg = config_from_dict(config);
            const TrainResult res = train(spec, train_ws, val_ws, cfg, allow_subject_overlap);
            py::dict out;
            out["checkpoint"] = checkpoint_to_json_string(res.checkpoint);
            py::list history;
            for (const EpochStats& h : res.history)
                history.append(py::make_tuple(h.train_loss, h.val_mae));
            out["history"] = history;
            out["best_val_mae"] = res.checkpoint.best_val_mae;
            return out;
        },
        py::arg("train_set"), py::arg("val_set"), py::arg("model"), py::arg("config"),
        py::arg("allow_subject_overlap") = false,
        "Adam training on MSE; returns the checkpoint as a JSON string.");

    m.def(
        "predict",
        [](const std::string& checkpoint_json, const py::dict& window_set) {
            const Checkpoint ckpt = checkpoint_from_json_string(checkpoint_json);
            const WindowSet ws = window_set_from_dict(window_set);
            py::array_t<double> out({ws.windows.size(), std::size_t{2}});
            auto buf = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < ws.windows.size(); ++i) {
                const auto y = predict(ckpt.spec, ckpt.params, ws.windows[i]);
                buf(i, 0) = y[0];
                buf(i, 1) = y[1];
            }
            return out;
        },
        py::arg("checkpoint"), py::arg("window_set"), "Predictions [n, 2] in mmHg.");

    m.def(
        "gradient_check",
        [](const std::string& kind, std::uint64_t seed) {
            Rng rng(seed);
            const int len = 48;
            ModelSpec spec = kind == "cnn1d" ? ModelSpec::cnn1d(1, len, {{4, 5, 2}, {6, 5, 2}}, {8})
                             : kind == "mlp" ? ModelSpec::mlp(1, len, {16, 8})
                                             : ModelSpec::linear(1, len);
            Parameters p = init(spec, seed);
            p.target_mean = {120.0, 60.0};
            p.target_std = {15.0, 8.0};
            LabeledWindow w;
            w.subject_id = "g";
            std::vector<double> x(len);
            for (double& v : x) v = rng.normal();
            w.channels = {x};
            w.sbp = 115.0;
            w.dbp = 62.0;
            return gradient_check(spec, p, w, {115.0, 62.0}, seed);
        },
        py::arg("kind") = "mlp", py::arg("seed") = 0,
        "Max relative analytic-vs-numeric gradient error for a fresh model.");

    m.def(
        "paired_t_test",
        [](const DArray& a, const DArray& b) {
            const TTestResult r = paired_t_test(to_vec(a), to_vec(b));
            return py::make_tuple(r.t, r.df, r.p);
        },
        py::arg("a"), py::arg("b"), "Returns (t, df, two-sided p).");

    m.def(
        "bhs_aami_check",
        [](const DArray& pred, const DArray& truth, double threshold, double required) {
            const BhsResult r = bhs_aami_check(to_vec(pred), to_vec(truth), threshold, required);
            return py::make_tuple(r.pass, r.fraction);
        },
        py::arg("pred"), py::arg("truth"), py::arg("threshold_mmhg") = 10.0,
        py::arg("required_fraction") = 0.85);
}
