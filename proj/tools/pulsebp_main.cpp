// pulsebp: batch front-end for the PPG/rPPG blood-pressure pipeline.
// Subcommands: synth, preprocess, train, finetune, eval, report.
// Exit codes: 0 success, 1 config error, 2 data error, 3 contamination guard.

#include "pulsebp/error.hpp"
#include "pulsebp/eval.hpp"
#include "pulsebp/io.hpp"
#include "pulsebp/models.hpp"
#include "pulsebp/rppg.hpp"
#include "pulsebp/segmentation.hpp"
#include "pulsebp/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using pulsebp::io::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw pulsebp::Error(pulsebp::errc::config, "cannot open config " + path);
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw pulsebp::Error(pulsebp::errc::config, std::string("bad config JSON: ") + e.what());
    }
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand, const json& config,
                    const std::map<std::string, std::string>& input_hashes,
                    std::vector<std::string> outputs) {
    std::sort(outputs.begin(), outputs.end());
    json m;
    m["tool"] = "pulsebp";
    m["version"] = kToolVersion;
    m["subcommand"] = subcommand;
    m["config_hash"] = pulsebp::io::sha256_hex(config.dump());
    m["inputs"] = json::object();
    for (const auto& [name, hash] : input_hashes) m["inputs"][name] = hash;
    m["outputs"] = outputs;
    std::ofstream out(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << m.dump(2) << "\n";
}

std::vector<fs::path> scan_csv_inputs(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw pulsebp::Error(pulsebp::errc::data, "input directory not found: " + dir.string());
    std::vector<fs::path> paths;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() != ".csv") continue;
        fs::path sidecar = entry.path();
        sidecar.replace_extension(".json");
        if (fs::exists(sidecar)) paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty())
        throw pulsebp::Error(pulsebp::errc::data, "no record CSVs with sidecars in " + dir.string());
    return paths;
}

pulsebp::SegmentPolicy parse_policy(const std::string& text) {
    const std::size_t colon = text.find(':');
    if (colon == std::string::npos)
        throw pulsebp::Error(pulsebp::errc::config, "policy must look like const_beats:7");
    const std::string kind = text.substr(0, colon);
    const std::string num = text.substr(colon + 1);
    try {
        if (kind == "const_time") return pulsebp::SegmentPolicy::const_time(std::stod(num));
        if (kind == "const_beats") return pulsebp::SegmentPolicy::const_beats(std::stoi(num));
    } catch (const pulsebp::Error&) {
        throw;
    } catch (const std::exception&) {
        throw pulsebp::Error(pulsebp::errc::config, "bad policy parameter: " + num);
    }
    throw pulsebp::Error(pulsebp::errc::config, "unknown policy kind: " + kind);
}

struct CommonArgs {
    std::string config_path;
    std::string in_path;
    std::string out_path;
    std::string policy = "const_beats:7";
    bool derivatives = false;
    bool personalize = false;
    std::string sweep;
    std::string checkpoint_path;
    std::string train_path;
    std::optional<std::uint64_t> seed;
};

fs::path ensure_out_dir(const std::string& path) {
    if (path.empty()) throw pulsebp::Error(pulsebp::errc::config, "--out is required");
    fs::create_directories(path);
    return path;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const CommonArgs& args) {
    json config = args.config_path.empty() ? json::object() : load_config(args.config_path);
    pulsebp::CohortSpec spec =
        pulsebp::io::cohort_spec_from_json(config.contains("cohort") ? config["cohort"] : config);
    if (args.seed) spec.seed = *args.seed;
    spec.validate();

    const auto cohort = pulsebp::synth_cohort(spec);
    const fs::path out = ensure_out_dir(args.out_path);
    std::vector<std::string> outputs;
    for (const auto& rec : cohort) {
        const fs::path rec_csv = out / "records" / ("rec_" + rec.subject_id + ".csv");
        const fs::path rgb_csv = out / "rgb" / ("rgb_" + rec.subject_id + ".csv");
        pulsebp::io::write_record(rec_csv, rec);
        pulsebp::io::write_rgb_trace(rgb_csv, rec.rgb);
        outputs.push_back("records/rec_" + rec.subject_id + ".csv");
        outputs.push_back("rgb/rgb_" + rec.subject_id + ".csv");
    }
    json effective;
    effective["cohort"] = pulsebp::io::cohort_spec_to_json(spec);
    write_manifest(out, "synth", effective, {}, std::move(outputs));
    return 0;
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

pulsebp::WindowSet preprocess_one_policy(const std::vector<fs::path>& inputs,
                                         const pulsebp::SegmentPolicy& policy,
                                         const pulsebp::GatingRules& rules, bool derivatives,
                                         bool rgb_mode) {
    if (rgb_mode) {
        pulsebp::WindowSet merged;
        bool first = true;
        for (const auto& path : inputs) {
            const pulsebp::RgbTrace trace = pulsebp::io::read_rgb_trace(path);
            pulsebp::WindowSet ws = pulsebp::rppg_window_pipeline(trace, rules, policy.beats);
            if (first) {
                merged = ws;
                first = false;
                continue;
            }
            merged.n_generated += ws.n_generated;
            for (const auto& [k, v] : ws.rejection_log) merged.rejection_log[k] += v;
            merged.windows.insert(merged.windows.end(), ws.windows.begin(), ws.windows.end());
        }
        std::stable_sort(merged.windows.begin(), merged.windows.end(),
                         [](const pulsebp::LabeledWindow& a, const pulsebp::LabeledWindow& b) {
                             if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
                             return a.source_offset_s < b.source_offset_s;
                         });
        return merged;
    }
    std::vector<pulsebp::RecordInput> records;
    for (const auto& path : inputs) records.push_back(pulsebp::io::read_record(path));
    return pulsebp::build_window_set(records, policy, rules, derivatives);
}

int cmd_preprocess(const CommonArgs& args) {
    json config = args.config_path.empty() ? json::object() : load_config(args.config_path);
    const pulsebp::GatingRules rules = config.contains("gating")
                                           ? pulsebp::io::gating_rules_from_json(config["gating"])
                                           : pulsebp::GatingRules{};
    const pulsebp::SegmentPolicy policy = parse_policy(args.policy);
    const fs::path out = ensure_out_dir(args.out_path);
    const std::vector<fs::path> inputs = scan_csv_inputs(args.in_path);
    const bool rgb_mode = pulsebp::io::sidecar_is_rgb(inputs.front());
    if (rgb_mode && policy.kind != pulsebp::SegmentPolicy::Kind::ConstBeats)
        throw pulsebp::Error(pulsebp::errc::config, "rPPG traces support const_beats only");

    std::map<std::string, std::string> input_hashes;
    for (const auto& p : inputs) input_hashes[p.filename().string()] = pulsebp::io::sha256_file(p);

    std::vector<std::string> outputs;
    if (args.sweep.empty()) {
        const pulsebp::WindowSet ws =
            preprocess_one_policy(inputs, policy, rules, args.derivatives, rgb_mode);
        pulsebp::io::write_window_set(out / "windows.csv", ws);
        outputs = {"windows.csv", "windows.manifest.json"};
    } else {
        std::vector<int> lengths;
        std::string item;
        std::istringstream ss(args.sweep);
        while (std::getline(ss, item, ',')) lengths.push_back(std::stoi(item));
        std::string curve_csv = "length,windows,accepted,fraction\n";
        for (int len : lengths) {
            const pulsebp::SegmentPolicy p = policy.kind == pulsebp::SegmentPolicy::Kind::ConstTime
                                                 ? pulsebp::SegmentPolicy::const_time(len)
                                                 : pulsebp::SegmentPolicy::const_beats(len);
            const pulsebp::WindowSet ws =
                preprocess_one_policy(inputs, p, rules, args.derivatives, rgb_mode);
            const std::string name = "windows_" + p.name() + ".csv";
            pulsebp::io::write_window_set(out / name, ws);
            outputs.push_back(name);
            outputs.push_back("windows_" + p.name() + ".manifest.json");
            const double frac = ws.n_generated == 0
                                    ? 0.0
                                    : static_cast<double>(ws.windows.size()) /
                                          static_cast<double>(ws.n_generated);
            curve_csv += std::to_string(len) + "," + std::to_string(ws.n_generated) + "," +
                         std::to_string(ws.windows.size()) + "," + pulsebp::io::format_double(frac) +
                         "\n";
        }
        std::ofstream curve(out / "acceptance_fraction.csv", std::ios::binary | std::ios::trunc);
        curve << curve_csv;
        outputs.push_back("acceptance_fraction.csv");
    }

    json effective;
    effective["policy"] = pulsebp::io::policy_to_json(policy);
    effective["gating"] = pulsebp::io::gating_rules_to_json(rules);
    effective["derivatives"] = args.derivatives;
    if (!args.sweep.empty()) effective["sweep"] = args.sweep;
    write_manifest(out, "preprocess", effective, input_hashes, std::move(outputs));
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const CommonArgs& args) {
    if (args.config_path.empty())
        throw pulsebp::Error(pulsebp::errc::config, "train needs --config");
    json config = load_config(args.config_path);
    const fs::path out = ensure_out_dir(args.out_path);
    if (args.in_path.empty()) throw pulsebp::Error(pulsebp::errc::config, "train needs --in");

    pulsebp::WindowSet all = pulsebp::io::read_window_set(args.in_path);
    pulsebp::ModelSpec spec = pulsebp::io::model_spec_from_json(config.at("model"));
    if (spec.input_len == 0) {
        spec.input_len = static_cast<int>(all.window_len);
        spec.input_channels = all.channel_count;
    }
    pulsebp::TrainConfig cfg = config.contains("train")
                                   ? pulsebp::io::train_config_from_json(config["train"])
                                   : pulsebp::TrainConfig{};
    pulsebp::SplitSpec split;
    if (config.contains("split")) {
        split.train_frac = config["split"].value("train_frac", split.train_frac);
        split.val_frac = config["split"].value("val_frac", split.val_frac);
        split.test_frac = config["split"].value("test_frac", split.test_frac);
        split.seed = config["split"].value("seed", split.seed);
    }
    if (args.seed) {
        cfg.seed = *args.seed;
        split.seed = *args.seed;
    }

    const auto parts = pulsebp::subject_split(all, split);
    pulsebp::TrainResult result = pulsebp::train(spec, parts[0], parts[1], cfg);
    result.checkpoint.config_hash = pulsebp::io::sha256_hex(config.dump());

    pulsebp::io::save_checkpoint(out / "checkpoint.json", result.checkpoint);
    pulsebp::io::write_window_set(out / "train_windows.csv", parts[0]);
    pulsebp::io::write_window_set(out / "val_windows.csv", parts[1]);
    pulsebp::io::write_window_set(out / "test_windows.csv", parts[2]);

    std::string history = "epoch,train_loss,val_mae\n";
    for (std::size_t e = 0; e < result.history.size(); ++e)
        history += std::to_string(e + 1) + "," + pulsebp::io::format_double(result.history[e].train_loss) +
                   "," + pulsebp::io::format_double(result.history[e].val_mae) + "\n";
    std::ofstream hist(out / "history.csv", std::ios::binary | std::ios::trunc);
    hist << history;

    write_manifest(out, "train", config,
                   {{fs::path(args.in_path).filename().string(), pulsebp::io::sha256_file(args.in_path)}},
                   {"checkpoint.json", "history.csv", "train_windows.csv", "val_windows.csv",
                    "test_windows.csv", "train_windows.manifest.json", "val_windows.manifest.json",
                    "test_windows.manifest.json"});
    return 0;
}

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------

std::string table1_row(const std::string& model, const std::string& arm,
                       const pulsebp::EvalReport& rep) {
    return model + "," + arm + "," + pulsebp::io::format_double(rep.sbp.mae) + "," +
           pulsebp::io::format_double(rep.sbp.std) + "," + pulsebp::io::format_double(rep.dbp.mae) +
           "," + pulsebp::io::format_double(rep.dbp.std) + "\n";
}

int cmd_finetune(const CommonArgs& args) {
    if (args.checkpoint_path.empty())
        throw pulsebp::Error(pulsebp::errc::config, "finetune needs --checkpoint");
    if (args.in_path.empty()) throw pulsebp::Error(pulsebp::errc::config, "finetune needs --in");
    json config = args.config_path.empty() ? json::object() : load_config(args.config_path);
    const fs::path out = ensure_out_dir(args.out_path);

    const pulsebp::Checkpoint base = pulsebp::io::load_checkpoint(args.checkpoint_path);
    pulsebp::WindowSet windows = pulsebp::io::read_window_set(args.in_path);
    pulsebp::TrainConfig cfg = config.contains("train")
                                   ? pulsebp::io::train_config_from_json(config["train"])
                                   : pulsebp::TrainConfig{};
    if (args.seed) cfg.seed = *args.seed;

    const std::map<std::string, std::string> input_hashes = {
        {fs::path(args.in_path).filename().string(), pulsebp::io::sha256_file(args.in_path)},
        {fs::path(args.checkpoint_path).filename().string(),
         pulsebp::io::sha256_file(args.checkpoint_path)}};

    if (args.personalize) {
        // Table-1 style comparison: leave-one-subject-out with and without
        // personalization, model vs re-fit mean regressor.
        const pulsebp::LosoResult plain = pulsebp::loso_experiment(windows, base, cfg, false);
        const pulsebp::LosoResult pers = pulsebp::loso_experiment(windows, base, cfg, true);

        pulsebp::io::write_eval_report(out / "loso_no_personalization.json", plain.pooled_model);
        pulsebp::io::write_eval_report(out / "loso_with_personalization.json", pers.pooled_model);

        std::string table = "model,personalization,sbp_mae,sbp_std,dbp_mae,dbp_std\n";
        table += table1_row(plain.pooled_model.model_id, "no", plain.pooled_model);
        table += table1_row("mean_regressor", "no", plain.pooled_mean_regressor);
        table += table1_row(pers.pooled_model.model_id, "with", pers.pooled_model);
        table += table1_row("mean_regressor", "with", pers.pooled_mean_regressor);
        std::ofstream t1(out / "table1.csv", std::ios::binary | std::ios::trunc);
        t1 << table;

        std::string per_subject = "subject,personalization,model,sbp_mae,dbp_mae,n_windows\n";
        for (const auto& fold : plain.folds)
            per_subject += fold.subject_id + ",no," + fold.model.model_id + "," +
                           pulsebp::io::format_double(fold.model.sbp.mae) + "," +
                           pulsebp::io::format_double(fold.model.dbp.mae) + "," +
                           std::to_string(fold.model.n_windows) + "\n";
        for (const auto& fold : pers.folds)
            per_subject += fold.subject_id + ",with," + fold.model.model_id + "," +
                           pulsebp::io::format_double(fold.model.sbp.mae) + "," +
                           pulsebp::io::format_double(fold.model.dbp.mae) + "," +
                           std::to_string(fold.model.n_windows) + "\n";
        std::ofstream ps(out / "per_subject.csv", std::ios::binary | std::ios::trunc);
        ps << per_subject;

        write_manifest(out, "finetune", config, input_hashes,
                       {"loso_no_personalization.json", "loso_with_personalization.json",
                        "table1.csv", "per_subject.csv"});
        return 0;
    }

    pulsebp::SplitSpec split;
    if (config.contains("split")) {
        split.train_frac = config["split"].value("train_frac", split.train_frac);
        split.val_frac = config["split"].value("val_frac", split.val_frac);
        split.test_frac = config["split"].value("test_frac", split.test_frac);
        split.seed = config["split"].value("seed", split.seed);
    }
    const auto parts = pulsebp::subject_split(windows, split);
    pulsebp::TrainResult result = pulsebp::finetune_final_layer(base, parts[0], parts[1], cfg);
    result.checkpoint.config_hash = pulsebp::io::sha256_hex(config.dump());
    pulsebp::io::save_checkpoint(out / "checkpoint.json", result.checkpoint);
    write_manifest(out, "finetune", config, input_hashes, {"checkpoint.json"});
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const CommonArgs& args) {
    if (args.checkpoint_path.empty())
        throw pulsebp::Error(pulsebp::errc::config, "eval needs --checkpoint");
    if (args.in_path.empty() || args.train_path.empty())
        throw pulsebp::Error(pulsebp::errc::config, "eval needs --in (test) and --train windows");
    const fs::path out = ensure_out_dir(args.out_path);

    const pulsebp::Checkpoint ckpt = pulsebp::io::load_checkpoint(args.checkpoint_path);
    const pulsebp::WindowSet test = pulsebp::io::read_window_set(args.in_path);
    const pulsebp::WindowSet train_ws = pulsebp::io::read_window_set(args.train_path);

    pulsebp::check_subject_disjoint(train_ws, test); // exit code 3 on overlap

    const pulsebp::EvalReport model_rep =
        pulsebp::evaluate_model(ckpt.spec, ckpt.params, test, ckpt.spec.kind_name());

    // Mean regressor fit on the training labels, evaluated on the same set.
    pulsebp::ModelSpec mean_spec =
        pulsebp::ModelSpec::mean(ckpt.spec.input_channels, ckpt.spec.input_len);
    pulsebp::Parameters mean_params = pulsebp::init(mean_spec, 0);
    double ms = 0.0, md = 0.0;
    for (const auto& w : train_ws.windows) {
        ms += w.sbp;
        md += w.dbp;
    }
    mean_params.tensors.front().v = {ms / static_cast<double>(train_ws.windows.size()),
                                     md / static_cast<double>(train_ws.windows.size())};
    const pulsebp::EvalReport mean_rep =
        pulsebp::evaluate_model(mean_spec, mean_params, test, "mean_regressor");

    pulsebp::io::write_eval_report(out / "eval_model.json", model_rep);
    pulsebp::io::write_eval_report_csv(out / "eval_model.csv", model_rep);
    pulsebp::io::write_eval_report(out / "eval_mean_regressor.json", mean_rep);
    pulsebp::io::write_eval_report_csv(out / "eval_mean_regressor.csv", mean_rep);

    // BHS/AAMI style acceptability per target for both models.
    std::vector<double> ps, ts, pd, td, ms_pred, md_pred;
    for (const auto& w : test.windows) {
        const auto y = pulsebp::predict(ckpt.spec, ckpt.params, w);
        ps.push_back(y[0]);
        pd.push_back(y[1]);
        ts.push_back(w.sbp);
        td.push_back(w.dbp);
        const auto m = pulsebp::predict(mean_spec, mean_params, w);
        ms_pred.push_back(m[0]);
        md_pred.push_back(m[1]);
    }
    json summary;
    summary["model"] = model_rep.model_id;
    summary["n_windows"] = test.windows.size();
    summary["sbp_mae"] = model_rep.sbp.mae;
    summary["dbp_mae"] = model_rep.dbp.mae;
    summary["mean_regressor_sbp_mae"] = mean_rep.sbp.mae;
    summary["mean_regressor_dbp_mae"] = mean_rep.dbp.mae;
    const auto bhs_s = pulsebp::bhs_aami_check(ps, ts);
    const auto bhs_d = pulsebp::bhs_aami_check(pd, td);
    summary["bhs_aami"] = {{"sbp", {{"fraction", bhs_s.fraction}, {"pass", bhs_s.pass}}},
                           {"dbp", {{"fraction", bhs_d.fraction}, {"pass", bhs_d.pass}}}};
    // Paired comparison of absolute errors, model vs mean regressor.
    std::vector<double> abs_model, abs_mean;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        abs_model.push_back(std::abs(ps[i] - ts[i]));
        abs_mean.push_back(std::abs(ms_pred[i] - ts[i]));
    }
    try {
        const auto tt = pulsebp::paired_t_test(abs_model, abs_mean);
        summary["sbp_paired_t_vs_mean"] = {{"t", tt.t}, {"df", tt.df}, {"p", tt.p}};
    } catch (const pulsebp::Error&) {
        summary["sbp_paired_t_vs_mean"] = nullptr;
    }
    std::ofstream s(out / "summary.json", std::ios::binary | std::ios::trunc);
    s << summary.dump(2) << "\n";

    write_manifest(out, "eval", json::object(),
                   {{fs::path(args.in_path).filename().string(), pulsebp::io::sha256_file(args.in_path)},
                    {fs::path(args.train_path).filename().string(),
                     pulsebp::io::sha256_file(args.train_path)},
                    {fs::path(args.checkpoint_path).filename().string(),
                     pulsebp::io::sha256_file(args.checkpoint_path)}},
                   {"eval_model.json", "eval_model.csv", "eval_mean_regressor.json",
                    "eval_mean_regressor.csv", "summary.json"});
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const CommonArgs& args) {
    if (args.in_path.empty()) throw pulsebp::Error(pulsebp::errc::config, "report needs --in");
    const fs::path out = ensure_out_dir(args.out_path);
    const fs::path in = args.in_path;
    std::vector<std::string> outputs;
    std::map<std::string, std::string> input_hashes;

    // BP distribution (10 mmHg bins over the gating ranges) from any window set.
    const fs::path windows_csv = in / "windows.csv";
    if (fs::exists(windows_csv)) {
        const pulsebp::WindowSet ws = pulsebp::io::read_window_set(windows_csv);
        input_hashes["windows.csv"] = pulsebp::io::sha256_file(windows_csv);
        auto histogram = [&](auto get, double lo, double hi) {
            const auto n_bins = static_cast<std::size_t>(std::ceil((hi - lo) / 10.0 - 1e-9));
            std::vector<std::size_t> counts(n_bins, 0);
            for (const auto& w : ws.windows) {
                const double v = get(w);
                std::size_t b = v >= hi ? n_bins - 1
                                        : static_cast<std::size_t>(std::floor((v - lo) / 10.0));
                if (b < n_bins) ++counts[b];
            }
            return counts;
        };
        const auto sbp_counts =
            histogram([](const pulsebp::LabeledWindow& w) { return w.sbp; }, 75.0, 165.0);
        const auto dbp_counts =
            histogram([](const pulsebp::LabeledWindow& w) { return w.dbp; }, 40.0, 80.0);
        std::string csv = "target,bin_lo,bin_hi,count\n";
        for (std::size_t b = 0; b < sbp_counts.size(); ++b)
            csv += "sbp," + pulsebp::io::format_double(75.0 + 10.0 * b) + "," +
                   pulsebp::io::format_double(std::min(165.0, 85.0 + 10.0 * b)) + "," +
                   std::to_string(sbp_counts[b]) + "\n";
        for (std::size_t b = 0; b < dbp_counts.size(); ++b)
            csv += "dbp," + pulsebp::io::format_double(40.0 + 10.0 * b) + "," +
                   pulsebp::io::format_double(std::min(80.0, 50.0 + 10.0 * b)) + "," +
                   std::to_string(dbp_counts[b]) + "\n";
        std::ofstream f(out / "bp_distribution.csv", std::ios::binary | std::ios::trunc);
        f << csv;
        outputs.push_back("bp_distribution.csv");
    }

    // Binned-error CSVs from any eval reports present.
    for (const char* name : {"eval_model.json", "eval_mean_regressor.json"}) {
        const fs::path rep_path = in / name;
        if (!fs::exists(rep_path)) continue;
        input_hashes[name] = pulsebp::io::sha256_file(rep_path);
        std::ifstream rf(rep_path);
        const json j = json::parse(rf);
        std::string csv = "model,target,bin_lo,bin_hi,count,mae\n";
        for (const char* target : {"sbp", "dbp"}) {
            for (const auto& b : j.at(target).at("bins")) {
                csv += j.at("model").get<std::string>();
                csv += ",";
                csv += target;
                csv += "," + pulsebp::io::format_double(b.at("lo").get<double>());
                csv += "," + pulsebp::io::format_double(b.at("hi").get<double>());
                csv += "," + std::to_string(b.at("count").get<std::size_t>());
                csv += ",";
                if (!b.at("mae").is_null()) csv += pulsebp::io::format_double(b.at("mae").get<double>());
                csv += "\n";
            }
        }
        const std::string out_name = std::string("binned_") +
                                     (std::string(name) == "eval_model.json" ? "model" : "mean_regressor") +
                                     ".csv";
        std::ofstream f(out / out_name, std::ios::binary | std::ios::trunc);
        f << csv;
        outputs.push_back(out_name);
    }

    // Fig. 3 analogue passes through untouched.
    const fs::path curve = in / "acceptance_fraction.csv";
    if (fs::exists(curve)) {
        input_hashes["acceptance_fraction.csv"] = pulsebp::io::sha256_file(curve);
        fs::copy_file(curve, out / "acceptance_fraction.csv", fs::copy_options::overwrite_existing);
        outputs.push_back("acceptance_fraction.csv");
    }

    if (outputs.empty())
        throw pulsebp::Error(pulsebp::errc::data, "nothing to report in " + in.string());
    write_manifest(out, "report", json::object(), input_hashes, std::move(outputs));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PPG/rPPG blood-pressure pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    auto add_common = [&](CLI::App* sub, bool with_policy = false) {
        sub->add_option("--config", args.config_path, "JSON config file");
        sub->add_option("--in", args.in_path, "input file or directory");
        sub->add_option("--out", args.out_path, "output directory");
        sub->add_option("--seed", args.seed, "seed override");
        if (with_policy) {
            sub->add_option("--policy", args.policy, "const_time:N or const_beats:N");
            sub->add_flag("--derivatives", args.derivatives, "append d1/d2 channels");
            sub->add_option("--sweep", args.sweep, "comma-separated lengths to sweep");
        }
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    add_common(synth);
    CLI::App* preprocess = app.add_subcommand("preprocess", "records or traces to window sets");
    add_common(preprocess, true);
    CLI::App* train_cmd = app.add_subcommand("train", "train a regressor on a window set");
    add_common(train_cmd);
    CLI::App* finetune = app.add_subcommand("finetune", "final-layer fine-tuning / personalization");
    add_common(finetune);
    finetune->add_option("--checkpoint", args.checkpoint_path, "base checkpoint");
    finetune->add_flag("--personalize", args.personalize, "run the LOSO personalization table");
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint against a test set");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", args.checkpoint_path, "checkpoint to evaluate");
    eval_cmd->add_option("--train", args.train_path, "training windows (baseline + guard)");
    CLI::App* report = app.add_subcommand("report", "plot-ready CSVs from pipeline outputs");
    add_common(report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(args);
        if (preprocess->parsed()) return cmd_preprocess(args);
        if (train_cmd->parsed()) return cmd_train(args);
        if (finetune->parsed()) return cmd_finetune(args);
        if (eval_cmd->parsed()) return cmd_eval(args);
        if (report->parsed()) return cmd_report(args);
    } catch (const pulsebp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.code()) {
            case pulsebp::errc::config:
            case pulsebp::errc::invalid_spec:
            case pulsebp::errc::invalid_band:
                return 1;
            case pulsebp::errc::split_contamination:
                return 3;
            default:
                return 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
