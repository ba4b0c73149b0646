#include <doctest.h>

#include "pulsebp/eval.hpp"
#include "pulsebp/io.hpp"
#include "pulsebp/models.hpp"
#include "pulsebp/rng.hpp"
#include "pulsebp/segmentation.hpp"
#include "pulsebp/synth.hpp"

#include <filesystem>
#include <fstream>

using namespace pulsebp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("pulsebp_test_" + std::to_string(Rng(0).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("sha256 known vectors") {
    CHECK(io::sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(io::sha256_hex("The quick brown fox jumps over the lazy dog") ==
          "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.0, 1.0, -1.5, 120.000001, 1e-9, 3.141592653589793, -7.0}) {
        const std::string s = io::format_double(v);
        CHECK(std::stod(s) == v);
    }
}

TEST_CASE("record files round trip") {
    TempDir dir;
    CohortSpec spec;
    spec.n_subjects = 1;
    spec.duration_s = 20.0;
    spec.seed = 5;
    const SubjectRecord rec = synth_subject(spec, 0);
    const fs::path csv = dir.path / "rec_S0000.csv";
    io::write_record(csv, rec);

    CHECK_FALSE(io::sidecar_is_rgb(csv));
    const RecordInput loaded = io::read_record(csv);
    CHECK(loaded.subject_id == rec.subject_id);
    CHECK(loaded.ppg.fs == rec.ppg.fs);
    REQUIRE(loaded.ppg.samples.size() == rec.ppg.samples.size());
    for (std::size_t i = 0; i < loaded.ppg.samples.size(); ++i) {
        CHECK(loaded.ppg.samples[i] == rec.ppg.samples[i]); // shortest round trip is exact
        CHECK(loaded.abp.samples[i] == rec.abp.samples[i]);
    }
}

TEST_CASE("rgb trace files round trip") {
    TempDir dir;
    CohortSpec spec;
    spec.n_subjects = 1;
    spec.duration_s = 70.0;
    spec.seed = 6;
    const SubjectRecord rec = synth_subject(spec, 0);
    const fs::path csv = dir.path / "rgb_S0000.csv";
    io::write_rgb_trace(csv, rec.rgb);

    CHECK(io::sidecar_is_rgb(csv));
    const RgbTrace loaded = io::read_rgb_trace(csv);
    CHECK(loaded.subject_id == rec.rgb.subject_id);
    CHECK(loaded.fps == rec.rgb.fps);
    CHECK(loaded.r == rec.rgb.r);
    CHECK(loaded.g == rec.rgb.g);
    CHECK(loaded.b == rec.rgb.b);
    REQUIRE(loaded.bp_labels.size() == rec.rgb.bp_labels.size());
    for (std::size_t i = 0; i < loaded.bp_labels.size(); ++i) {
        CHECK(loaded.bp_labels[i].t == rec.rgb.bp_labels[i].t);
        CHECK(loaded.bp_labels[i].sbp == rec.rgb.bp_labels[i].sbp);
    }
}

TEST_CASE("window sets round trip with their manifest") {
    TempDir dir;
    CohortSpec spec;
    spec.n_subjects = 2;
    spec.duration_s = 90.0;
    spec.seed = 7;
    const auto cohort = synth_cohort(spec);
    std::vector<RecordInput> records;
    for (const auto& rec : cohort) records.push_back({rec.subject_id, rec.ppg, rec.abp});
    const WindowSet ws =
        build_window_set(records, SegmentPolicy::const_beats(7), GatingRules{}, true);
    REQUIRE(!ws.windows.empty());

    const fs::path csv = dir.path / "windows.csv";
    io::write_window_set(csv, ws);
    const WindowSet loaded = io::read_window_set(csv);

    CHECK(loaded.channel_count == ws.channel_count);
    CHECK(loaded.window_len == ws.window_len);
    CHECK(loaded.policy.kind == ws.policy.kind);
    CHECK(loaded.policy.beats == ws.policy.beats);
    CHECK(loaded.rules.snr_min_db == ws.rules.snr_min_db);
    CHECK(loaded.n_generated == ws.n_generated);
    REQUIRE(loaded.windows.size() == ws.windows.size());
    for (std::size_t i = 0; i < ws.windows.size(); ++i) {
        CHECK(loaded.windows[i].subject_id == ws.windows[i].subject_id);
        CHECK(loaded.windows[i].sbp == ws.windows[i].sbp);
        CHECK(loaded.windows[i].dbp == ws.windows[i].dbp);
        CHECK(loaded.windows[i].hr == ws.windows[i].hr);
        CHECK(loaded.windows[i].snr == ws.windows[i].snr);
        CHECK(loaded.windows[i].channels == ws.windows[i].channels);
    }
    // Chronological order within a subject survives (offsets become ranks).
    for (std::size_t i = 1; i < loaded.windows.size(); ++i)
        if (loaded.windows[i].subject_id == loaded.windows[i - 1].subject_id)
            CHECK(loaded.windows[i].source_offset_s > loaded.windows[i - 1].source_offset_s);
}

TEST_CASE("checkpoints load and save byte-identically") {
    TempDir dir;
    const ModelSpec spec = ModelSpec::mlp(1, 16, {8, 4});
    Rng rng(8);
    WindowSet train_ws, val_ws;
    train_ws.channel_count = val_ws.channel_count = 1;
    train_ws.window_len = val_ws.window_len = 16;
    for (int i = 0; i < 32; ++i) {
        LabeledWindow w;
        w.subject_id = (i < 24 ? "tr" : "va") + std::to_string(i);
        std::vector<double> x(16);
        for (double& v : x) v = rng.normal();
        w.channels = {x};
        w.sbp = 110.0 + 10.0 * rng.normal();
        w.dbp = 60.0 + 5.0 * rng.normal();
        (i < 24 ? train_ws : val_ws).windows.push_back(std::move(w));
    }
    TrainConfig cfg;
    cfg.epochs = 3;
    const TrainResult res = train(spec, train_ws, val_ws, cfg);

    const fs::path a = dir.path / "a.json";
    const fs::path b = dir.path / "b.json";
    io::save_checkpoint(a, res.checkpoint);
    const Checkpoint loaded = io::load_checkpoint(a);
    io::save_checkpoint(b, loaded);
    CHECK(slurp(a) == slurp(b));

    // In-memory and reloaded predictions agree exactly.
    const auto out_a = predict(res.checkpoint.spec, res.checkpoint.params, val_ws.windows[0]);
    const auto out_b = predict(loaded.spec, loaded.params, val_ws.windows[0]);
    CHECK(std::abs(out_a[0] - out_b[0]) < 1e-12);
    CHECK(std::abs(out_a[1] - out_b[1]) < 1e-12);
}

TEST_CASE("model spec json round trip") {
    const ModelSpec cnn = ModelSpec::cnn1d(3, 875);
    const ModelSpec back = io::model_spec_from_json(io::model_spec_to_json(cnn));
    CHECK(back.kind == cnn.kind);
    CHECK(back.input_channels == 3);
    CHECK(back.input_len == 875);
    REQUIRE(back.conv.size() == cnn.conv.size());
    CHECK(back.conv[1].filters == 32);
    CHECK(back.dense == cnn.dense);
}

TEST_CASE("eval report serialization carries bins and null mae") {
    EvalReport rep;
    rep.model_id = "cnn1d";
    rep.n_windows = 3;
    rep.n_subjects = 2;
    rep.sbp.mae = 7.5;
    rep.sbp.std = 2.0;
    rep.sbp.bins = {{75.0, 85.0, 0, std::nullopt}, {85.0, 95.0, 3, 7.5}};
    rep.dbp.mae = 4.0;
    rep.dbp.std = 1.0;
    rep.dbp.bins = {{40.0, 50.0, 3, 4.0}};
    const io::json j = io::eval_report_to_json(rep);
    CHECK(j["sbp"]["bins"][0]["mae"].is_null());
    CHECK(j["sbp"]["bins"][1]["mae"].get<double>() == doctest::Approx(7.5));

    TempDir dir;
    io::write_eval_report_csv(dir.path / "report.csv", rep);
    const std::string csv = slurp(dir.path / "report.csv");
    CHECK(csv.find("cnn1d,sbp,75,85,0,\n") != std::string::npos); // empty bin: no value
}
