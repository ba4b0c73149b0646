#include <doctest.h>

#include "pulsebp/error.hpp"
#include "pulsebp/models.hpp"
#include "pulsebp/rng.hpp"

#include <cmath>

using namespace pulsebp;

namespace {

LabeledWindow make_window(const std::string& subject, std::vector<std::vector<double>> channels,
                          double sbp, double dbp, double offset = 0.0) {
    LabeledWindow w;
    w.subject_id = subject;
    w.channels = std::move(channels);
    w.sbp = sbp;
    w.dbp = dbp;
    w.hr = 60.0;
    w.snr = 5.0;
    w.source_offset_s = offset;
    return w;
}

// Windows whose labels are an affine function of two orthogonal window
// statistics; a linear model can represent the map exactly.
WindowSet affine_set(std::size_t n, const std::string& subject_prefix, std::uint64_t seed) {
    Rng rng(seed);
    WindowSet ws;
    ws.channel_count = 1;
    ws.window_len = 8;
    const std::vector<double> e1 = {0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0};
    const std::vector<double> e2 = {0.0, 0.0, 0.0, 0.0, 0.5, -0.5, 0.5, -0.5};
    for (std::size_t i = 0; i < n; ++i) {
        const double s1 = rng.normal();
        const double s2 = rng.normal();
        std::vector<double> x(8);
        for (std::size_t j = 0; j < 8; ++j) x[j] = s1 * e1[j] + s2 * e2[j];
        ws.windows.push_back(make_window(subject_prefix + std::to_string(i), {x},
                                         120.0 + 12.0 * s1, 60.0 + 6.0 * s2,
                                         static_cast<double>(i)));
    }
    ws.n_generated = n;
    return ws;
}

WindowSet random_set(int channels, int len, std::size_t n, const std::string& subject,
                     std::uint64_t seed) {
    Rng rng(seed);
    WindowSet ws;
    ws.channel_count = channels;
    ws.window_len = static_cast<std::size_t>(len);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::vector<double>> ch(static_cast<std::size_t>(channels));
        for (auto& c : ch) {
            c.resize(static_cast<std::size_t>(len));
            for (double& v : c) v = rng.normal();
        }
        ws.windows.push_back(make_window(subject + std::to_string(i), std::move(ch),
                                         100.0 + 30.0 * rng.uniform(), 50.0 + 20.0 * rng.uniform(),
                                         static_cast<double>(i)));
    }
    ws.n_generated = n;
    return ws;
}

} // namespace

TEST_CASE("init is deterministic and spec-validated") {
    const ModelSpec spec = ModelSpec::mlp(1, 32, {8, 4});
    const Parameters a = init(spec, 99);
    const Parameters b = init(spec, 99);
    REQUIRE(a.tensors.size() == b.tensors.size());
    for (std::size_t i = 0; i < a.tensors.size(); ++i) CHECK(a.tensors[i].v == b.tensors[i].v);

    const Parameters c = init(spec, 100);
    CHECK(a.tensors[0].v != c.tensors[0].v);

    const Parameters mean = init(ModelSpec::mean(1, 32), 0);
    REQUIRE(mean.tensors.size() == 1);
    CHECK(mean.tensors[0].v == std::vector<double>{0.0, 0.0});

    CHECK_THROWS_AS(init(ModelSpec::cnn1d(1, 8, {{4, 16, 2}}, {4}), 0), Error);
}

TEST_CASE("mean model predicts its stored means") {
    const ModelSpec spec = ModelSpec::mean(1, 4);
    Parameters p = init(spec, 0);
    p.tensors[0].v = {123.4, 62.1};
    const LabeledWindow w = make_window("s", {{0.1, 0.2, 0.3, 0.4}}, 100, 50);
    const auto out = predict(spec, p, w);
    CHECK(out[0] == doctest::Approx(123.4));
    CHECK(out[1] == doctest::Approx(62.1));
}

TEST_CASE("linear model with zero weights returns its bias") {
    const ModelSpec spec = ModelSpec::linear(1, 4);
    Parameters p = init(spec, 0);
    for (auto& t : p.tensors)
        std::fill(t.v.begin(), t.v.end(), 0.0);
    for (auto& t : p.tensors)
        if (t.name == "out_b") t.v = {100.0, 60.0};
    const LabeledWindow w = make_window("s", {{1.0, -1.0, 2.0, 0.5}}, 100, 50);
    const auto out = predict(spec, p, w);
    CHECK(out[0] == doctest::Approx(100.0));
    CHECK(out[1] == doctest::Approx(60.0));
}

TEST_CASE("mlp forward pass matches a hand computation") {
    const ModelSpec spec = ModelSpec::mlp(1, 3, {2});
    Parameters p = init(spec, 0);
    REQUIRE(p.tensors.size() == 4); // dense0_w, dense0_b, out_w, out_b
    p.tensors[0].v = {0.1, 0.2, 0.3, 0.4, -0.5, 0.6};
    p.tensors[1].v = {0.05, 0.1};
    p.tensors[2].v = {0.7, -0.8, 0.9, 1.0};
    p.tensors[3].v = {0.2, -0.3};
    p.target_mean = {100.0, 50.0};
    p.target_std = {10.0, 5.0};
    // Hidden pre-activations: (-0.1, 1.8) -> ReLU (0, 1.8);
    // outputs: (0.2 - 0.8*1.8, -0.3 + 1.0*1.8) = (-1.24, 1.5);
    // de-standardized: (100 - 12.4, 50 + 7.5).
    const LabeledWindow w = make_window("s", {{1.0, -2.0, 0.5}}, 100, 50);
    const auto out = predict(spec, p, w);
    CHECK(out[0] == doctest::Approx(87.6).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(57.5).epsilon(1e-6));
}

TEST_CASE("predict rejects shape mismatches") {
    const ModelSpec spec = ModelSpec::linear(1, 4);
    const Parameters p = init(spec, 0);
    const LabeledWindow w = make_window("s", {{1.0, 2.0}}, 100, 50);
    CHECK_THROWS_AS(predict(spec, p, w), Error);
}

TEST_CASE("gradient check: linear is exact to rounding") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const ModelSpec spec = ModelSpec::linear(3, 16);
        Parameters p = init(spec, seed);
        // Realistic scaling so the loss sits at the magnitude training uses.
        p.target_mean = {120.0, 60.0};
        p.target_std = {15.0, 8.0};
        const WindowSet ws = random_set(3, 16, 1, "g", seed);
        const double err = gradient_check(spec, p, ws.windows[0], {112.0, 65.0}, seed);
        CHECK(err < 1e-7);
    }
}

TEST_CASE("gradient check: mlp and cnn under 1e-4") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        {
            const ModelSpec spec = ModelSpec::mlp(1, 24, {12, 6});
            Parameters p = init(spec, seed);
            p.target_mean = {120.0, 60.0};
            p.target_std = {15.0, 8.0};
            const WindowSet ws = random_set(1, 24, 1, "g", 50 + seed);
            CHECK(gradient_check(spec, p, ws.windows[0], {110.0, 60.0}, seed) < 1e-4);
        }
        {
            const ModelSpec spec = ModelSpec::cnn1d(1, 64, {{4, 5, 2}, {6, 5, 2}}, {8});
            Parameters p = init(spec, seed);
            p.target_mean = {120.0, 60.0};
            p.target_std = {15.0, 8.0};
            const WindowSet ws = random_set(1, 64, 1, "g", 80 + seed);
            CHECK(gradient_check(spec, p, ws.windows[0], {110.0, 60.0}, seed) < 1e-4);
        }
    }
}

TEST_CASE("training the mean model stores label means") {
    WindowSet train_ws = affine_set(64, "tr", 1);
    WindowSet val_ws = affine_set(16, "va", 2);
    TrainConfig cfg;
    cfg.epochs = 5;
    const ModelSpec spec = ModelSpec::mean(1, 8);
    const TrainResult res = train(spec, train_ws, val_ws, cfg);

    double ms = 0.0, md = 0.0;
    for (const auto& w : train_ws.windows) {
        ms += w.sbp;
        md += w.dbp;
    }
    ms /= static_cast<double>(train_ws.windows.size());
    md /= static_cast<double>(train_ws.windows.size());
    CHECK(res.checkpoint.params.tensors[0].v[0] == doctest::Approx(ms).epsilon(1e-12));
    CHECK(res.checkpoint.params.tensors[0].v[1] == doctest::Approx(md).epsilon(1e-12));

    // Validation history is constant, and the training MSE equals the label
    // variance (mean of the two targets' population variances).
    REQUIRE(res.history.size() == 5);
    for (const auto& h : res.history) CHECK(h.val_mae == doctest::Approx(res.history[0].val_mae));
    double vs = 0.0, vd = 0.0;
    for (const auto& w : train_ws.windows) {
        vs += (w.sbp - ms) * (w.sbp - ms);
        vd += (w.dbp - md) * (w.dbp - md);
    }
    vs /= static_cast<double>(train_ws.windows.size());
    vd /= static_cast<double>(train_ws.windows.size());
    CHECK(2.0 * res.history[0].train_loss == doctest::Approx(vs + vd).epsilon(1e-9));
}

TEST_CASE("linear training drives a realizable problem below 1 mmHg") {
    WindowSet train_ws = affine_set(2048, "tr", 3);
    WindowSet val_ws = affine_set(256, "va", 4);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.seed = 5;
    const ModelSpec spec = ModelSpec::linear(1, 8);
    const TrainResult res = train(spec, train_ws, val_ws, cfg);

    double mae_s = 0.0, mae_d = 0.0;
    for (const auto& w : train_ws.windows) {
        const auto out = predict(spec, res.checkpoint.params, w);
        mae_s += std::abs(out[0] - w.sbp);
        mae_d += std::abs(out[1] - w.dbp);
    }
    mae_s /= static_cast<double>(train_ws.windows.size());
    mae_d /= static_cast<double>(train_ws.windows.size());
    CHECK(mae_s < 1.0);
    CHECK(mae_d < 1.0);

    // Loss descent along the way.
    CHECK(res.history.back().train_loss < res.history.front().train_loss);
}

TEST_CASE("training twice gives identical checkpoints") {
    WindowSet train_ws = affine_set(128, "tr", 6);
    WindowSet val_ws = affine_set(32, "va", 7);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.seed = 9;
    const ModelSpec spec = ModelSpec::mlp(1, 8, {6});
    const TrainResult a = train(spec, train_ws, val_ws, cfg);
    const TrainResult b = train(spec, train_ws, val_ws, cfg);
    REQUIRE(a.checkpoint.params.tensors.size() == b.checkpoint.params.tensors.size());
    for (std::size_t i = 0; i < a.checkpoint.params.tensors.size(); ++i)
        CHECK(a.checkpoint.params.tensors[i].v == b.checkpoint.params.tensors[i].v);
    CHECK(a.checkpoint.best_val_mae == b.checkpoint.best_val_mae);
}

TEST_CASE("train refuses subject contamination") {
    WindowSet train_ws = affine_set(16, "shared", 10);
    WindowSet val_ws = affine_set(4, "shared", 11); // overlapping subject ids
    TrainConfig cfg;
    cfg.epochs = 1;
    const ModelSpec spec = ModelSpec::linear(1, 8);
    CHECK_THROWS_AS(train(spec, train_ws, val_ws, cfg), Error);
    CHECK_NOTHROW(train(spec, train_ws, val_ws, cfg, /*allow_subject_overlap=*/true));
}

TEST_CASE("fine-tuning freezes everything but the output layer") {
    WindowSet train_ws = affine_set(128, "tr", 12);
    WindowSet val_ws = affine_set(32, "va", 13);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.seed = 14;
    const ModelSpec spec = ModelSpec::mlp(1, 8, {6});
    const TrainResult base = train(spec, train_ws, val_ws, cfg);

    WindowSet tune_train = affine_set(64, "ft", 15);
    WindowSet tune_val = affine_set(16, "fv", 16);
    cfg.patience = 3;
    const TrainResult tuned = finetune_final_layer(base.checkpoint, tune_train, tune_val, cfg);

    bool final_changed = false;
    for (std::size_t i = 0; i < base.checkpoint.params.tensors.size(); ++i) {
        const Tensor& before = base.checkpoint.params.tensors[i];
        const Tensor& after = tuned.checkpoint.params.tensors[i];
        if (before.name == "out_w" || before.name == "out_b") {
            if (before.v != after.v) final_changed = true;
        } else {
            CHECK(before.v == after.v); // bit-identical
        }
    }
    CHECK(final_changed);
}

TEST_CASE("fine-tuning the mean regressor is rejected") {
    WindowSet train_ws = affine_set(8, "tr", 17);
    WindowSet val_ws = affine_set(4, "va", 18);
    TrainConfig cfg;
    Checkpoint ckpt{ModelSpec::mean(1, 8), init(ModelSpec::mean(1, 8), 0), 0, 0.0, ""};
    CHECK_THROWS_AS(finetune_final_layer(ckpt, train_ws, val_ws, cfg), Error);
}

TEST_CASE("early stopping halts after patience epochs without improvement") {
    // Pretrained to predict the validation labels exactly; the tuning labels
    // pull away from them, so validation MAE rises monotonically from epoch 1.
    const ModelSpec spec = ModelSpec::linear(1, 4);
    Parameters p = init(spec, 0);
    for (auto& t : p.tensors) std::fill(t.v.begin(), t.v.end(), 0.0);
    Checkpoint ckpt{spec, p, 0, 0.0, ""};

    WindowSet tune, val;
    tune.channel_count = val.channel_count = 1;
    tune.window_len = val.window_len = 4;
    for (int i = 0; i < 8; ++i)
        tune.windows.push_back(make_window("t" + std::to_string(i), {{1.0, 1.0, 1.0, 1.0}}, 10.0, 5.0, i));
    for (int i = 0; i < 8; ++i)
        val.windows.push_back(make_window("v" + std::to_string(i), {{1.0, 1.0, 1.0, 1.0}}, 0.0, 0.0, i));

    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.patience = 5;
    cfg.batch_size = 8;
    const TrainResult res = finetune_final_layer(ckpt, tune, val, cfg);
    CHECK(res.checkpoint.epochs_run == 6); // epoch 1 best, then 5 non-improving
    REQUIRE(res.history.size() == 6);
    CHECK(res.checkpoint.best_val_mae == doctest::Approx(res.history.front().val_mae));
    for (std::size_t i = 1; i < res.history.size(); ++i)
        CHECK(res.history[i].val_mae > res.history[i - 1].val_mae);
}

TEST_CASE("personalization splits chronologically and returns the rest") {
    const ModelSpec spec = ModelSpec::linear(1, 8);
    WindowSet train_ws = affine_set(64, "tr", 20);
    WindowSet val_ws = affine_set(16, "va", 21);
    TrainConfig cfg;
    cfg.epochs = 4;
    const TrainResult base = train(spec, train_ws, val_ws, cfg);

    WindowSet subject;
    subject.channel_count = 1;
    subject.window_len = 8;
    for (int i = 0; i < 10; ++i) {
        auto w = make_window("p0", {{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}}, 110.0 + i, 60.0,
                             static_cast<double>(i));
        subject.windows.push_back(w);
    }

    cfg.patience = 2;
    auto [res, held] = personalize(base.checkpoint, subject, 0.2, cfg);
    CHECK(held.windows.size() == 8);
    for (const auto& w : held.windows) CHECK(w.source_offset_s >= 2.0); // first 2 went to tuning
    (void)res;

    // Input order must not matter.
    WindowSet shuffled = subject;
    std::swap(shuffled.windows[0], shuffled.windows[7]);
    std::swap(shuffled.windows[3], shuffled.windows[9]);
    auto [res2, held2] = personalize(base.checkpoint, shuffled, 0.2, cfg);
    REQUIRE(held2.windows.size() == held.windows.size());
    std::vector<double> offsets1, offsets2;
    for (const auto& w : held.windows) offsets1.push_back(w.source_offset_s);
    for (const auto& w : held2.windows) offsets2.push_back(w.source_offset_s);
    std::sort(offsets1.begin(), offsets1.end());
    std::sort(offsets2.begin(), offsets2.end());
    CHECK(offsets1 == offsets2);
    (void)res2;

    CHECK_THROWS_AS(personalize(base.checkpoint, subject, 0.0, cfg), Error);
    WindowSet tiny;
    tiny.windows.push_back(subject.windows[0]);
    CHECK_THROWS_AS(personalize(base.checkpoint, tiny, 0.2, cfg), Error);
}

TEST_CASE("divergent training reports the epoch") {
    WindowSet train_ws = affine_set(32, "tr", 22);
    WindowSet val_ws = affine_set(8, "va", 23);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.lr = 1e200; // guaranteed overflow within an epoch
    const ModelSpec spec = ModelSpec::mlp(1, 8, {4});
    CHECK_THROWS_WITH_AS(train(spec, train_ws, val_ws, cfg), doctest::Contains("epoch"), Error);
}
