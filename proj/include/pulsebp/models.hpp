#pragma once

#include "pulsebp/segmentation.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace pulsebp {

struct ConvLayerSpec {
    int filters = 0;
    int kernel = 0;
    int stride = 1;
};

/// Regressor family. Every kind ends in a 2-unit linear head (SBP, DBP).
struct ModelSpec {
    enum class Kind { Mean, Linear, Mlp, Cnn1d };
    Kind kind = Kind::Mean;
    std::vector<int> hidden;           // Mlp hidden sizes
    std::vector<ConvLayerSpec> conv;   // Cnn1d conv stack
    std::vector<int> dense;            // Cnn1d dense sizes after pooling
    int input_channels = 1;
    int input_len = 0;

    static ModelSpec mean(int channels, int len);
    static ModelSpec linear(int channels, int len);
    static ModelSpec mlp(int channels, int len, std::vector<int> hidden = {128, 64});
    static ModelSpec cnn1d(int channels, int len,
                           std::vector<ConvLayerSpec> conv = {{16, 9, 2}, {32, 9, 2}, {32, 9, 2}},
                           std::vector<int> dense = {64});
    std::string kind_name() const;
    void validate() const; // throws errc::invalid_spec
};

struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> v;
    bool trainable = true;

    std::size_t size() const { return v.size(); }
};

/// Ordered named tensors plus the label standardization the non-Mean models
/// train against (stored so checkpoints are self-contained).
struct Parameters {
    std::vector<Tensor> tensors;
    std::array<double, 2> target_mean{0.0, 0.0};
    std::array<double, 2> target_std{1.0, 1.0};
};

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int epochs = 60;
    int batch_size = 64;
    std::uint64_t seed = 0;
    int patience = 10; // fine-tuning early stop
};

struct EpochStats {
    double train_loss = 0.0; // mean per-sample MSE over the 2-vector
    double val_mae = 0.0;    // mean of SBP and DBP MAE, mmHg
};

struct Checkpoint {
    ModelSpec spec;
    Parameters params;
    int epochs_run = 0;
    double best_val_mae = 0.0;
    std::string config_hash;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochStats> history;
};

/// Deterministic fan-in-scaled uniform weights, zero biases.
Parameters init(const ModelSpec& spec, std::uint64_t seed);

/// Forward pass, de-standardized to mmHg.
std::array<double, 2> predict(const ModelSpec& spec, const Parameters& params,
                              const LabeledWindow& window);

/// Adam on MSE over the (SBP, DBP) vector with standardized targets; returns
/// the parameters of the epoch with the lowest validation MAE. Train and
/// validation sets must be subject-disjoint unless allow_subject_overlap (the
/// leakage-demonstration escape hatch) is set.
TrainResult train(const ModelSpec& spec, const WindowSet& trainset, const WindowSet& valset,
                  const TrainConfig& cfg, bool allow_subject_overlap = false);

/// Max relative error between analytic and central finite-difference gradients
/// over a random subsample of parameters (>= 200 per tensor).
double gradient_check(const ModelSpec& spec, const Parameters& params, const LabeledWindow& window,
                      const std::array<double, 2>& label, std::uint64_t seed);

/// Optimizes only the final dense layer; all other tensors stay bit-identical.
/// Early-stops after cfg.patience epochs without validation improvement.
TrainResult finetune_final_layer(const Checkpoint& checkpoint, const WindowSet& trainset,
                                 const WindowSet& valset, const TrainConfig& cfg);

/// Splits one subject's windows chronologically, fine-tunes on the first
/// ceil(frac*N) (optionally together with context_train, validated against
/// context_val) and returns the untouched remainder for evaluation.
std::pair<TrainResult, WindowSet> personalize(const Checkpoint& checkpoint,
                                              const WindowSet& subject_windows, double frac,
                                              const TrainConfig& cfg,
                                              const WindowSet* context_train = nullptr,
                                              const WindowSet* context_val = nullptr);

/// Throws errc::split_contamination if the two sets share a subject.
void check_subject_disjoint(const WindowSet& a, const WindowSet& b);

} // namespace pulsebp
