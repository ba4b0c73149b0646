#include "pulsebp/models.hpp"
#include "pulsebp/error.hpp"
#include "pulsebp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace pulsebp {

namespace {

// ---------------------------------------------------------------------------
// Layer plan
// ---------------------------------------------------------------------------

enum class LayerType { Conv1d, Relu, GlobalAvgPool, Flatten, Dense };

struct LayerPlan {
    LayerType type;
    int in_ch = 0, in_len = 0;
    int out_ch = 0, out_len = 0;
    int kernel = 0, stride = 1;
    int w_idx = -1, b_idx = -1; // tensor indices (Conv1d / Dense)
};

struct NetPlan {
    std::vector<LayerPlan> layers;
    std::vector<Tensor> tensor_templates; // names + shapes, data left empty
};

void add_dense(NetPlan& plan, int in_dim, int out_dim, const std::string& name) {
    LayerPlan l;
    l.type = LayerType::Dense;
    l.in_len = in_dim;
    l.out_len = out_dim;
    l.w_idx = static_cast<int>(plan.tensor_templates.size());
    plan.tensor_templates.push_back({name + "_w", {out_dim, in_dim}, {}, true});
    l.b_idx = static_cast<int>(plan.tensor_templates.size());
    plan.tensor_templates.push_back({name + "_b", {out_dim}, {}, true});
    plan.layers.push_back(l);
}

void add_relu(NetPlan& plan) {
    const LayerPlan& prev = plan.layers.back();
    LayerPlan l;
    l.type = LayerType::Relu;
    l.in_ch = prev.out_ch;
    l.in_len = prev.out_len;
    l.out_ch = prev.out_ch;
    l.out_len = prev.out_len;
    plan.layers.push_back(l);
}

NetPlan build_plan(const ModelSpec& spec) {
    spec.validate();
    NetPlan plan;
    const int c = spec.input_channels;
    const int len = spec.input_len;

    switch (spec.kind) {
        case ModelSpec::Kind::Mean:
            plan.tensor_templates.push_back({"mean", {2}, {}, true});
            break;
        case ModelSpec::Kind::Linear:
            add_dense(plan, c * len, 2, "out");
            break;
        case ModelSpec::Kind::Mlp: {
            int dim = c * len;
            for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
                add_dense(plan, dim, spec.hidden[i], "dense" + std::to_string(i));
                add_relu(plan);
                dim = spec.hidden[i];
            }
            add_dense(plan, dim, 2, "out");
            break;
        }
        case ModelSpec::Kind::Cnn1d: {
            int cur_ch = c;
            int cur_len = len;
            for (std::size_t i = 0; i < spec.conv.size(); ++i) {
                const ConvLayerSpec& cl = spec.conv[i];
                if (cl.kernel > cur_len)
                    throw Error(errc::invalid_spec, "conv kernel larger than input length");
                LayerPlan l;
                l.type = LayerType::Conv1d;
                l.in_ch = cur_ch;
                l.in_len = cur_len;
                l.out_ch = cl.filters;
                l.out_len = (cur_len - cl.kernel) / cl.stride + 1;
                l.kernel = cl.kernel;
                l.stride = cl.stride;
                l.w_idx = static_cast<int>(plan.tensor_templates.size());
                plan.tensor_templates.push_back(
                    {"conv" + std::to_string(i) + "_w", {cl.filters, cur_ch, cl.kernel}, {}, true});
                l.b_idx = static_cast<int>(plan.tensor_templates.size());
                plan.tensor_templates.push_back({"conv" + std::to_string(i) + "_b", {cl.filters}, {}, true});
                plan.layers.push_back(l);
                add_relu(plan);
                cur_ch = cl.filters;
                cur_len = l.out_len;
            }
            LayerPlan gap;
            gap.type = LayerType::GlobalAvgPool;
            gap.in_ch = cur_ch;
            gap.in_len = cur_len;
            gap.out_len = cur_ch;
            plan.layers.push_back(gap);
            int dim = cur_ch;
            for (std::size_t i = 0; i < spec.dense.size(); ++i) {
                add_dense(plan, dim, spec.dense[i], "dense" + std::to_string(i));
                add_relu(plan);
                dim = spec.dense[i];
            }
            add_dense(plan, dim, 2, "out");
            break;
        }
    }
    return plan;
}

std::size_t tensor_elems(const Tensor& t) {
    std::size_t n = 1;
    for (int d : t.shape) n *= static_cast<std::size_t>(d);
    return n;
}

int fan_in_of(const Tensor& t) {
    // Dense weights: {out, in}; conv weights: {filters, in_ch, kernel}.
    if (t.shape.size() == 2) return t.shape[1];
    if (t.shape.size() == 3) return t.shape[1] * t.shape[2];
    return 1;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct Workspace {
    std::vector<std::vector<double>> acts; // activations at each layer boundary
    double min_abs_preact = 1e300;         // ReLU kink proximity probe
};

std::array<double, 2> forward(const ModelSpec& spec, const NetPlan& plan, const Parameters& params,
                              const std::vector<double>& input, Workspace* ws) {
    if (spec.kind == ModelSpec::Kind::Mean) {
        const auto& m = params.tensors.front().v;
        return {m[0], m[1]};
    }
    std::vector<double> cur = input; // channel-major flattening is the input layout
    if (ws) {
        ws->acts.clear();
        ws->acts.push_back(cur);
    }
    for (const LayerPlan& l : plan.layers) {
        std::vector<double> next;
        switch (l.type) {
            case LayerType::Flatten:
                next = std::move(cur);
                break;
            case LayerType::Conv1d: {
                const auto& w = params.tensors[static_cast<std::size_t>(l.w_idx)].v;
                const auto& b = params.tensors[static_cast<std::size_t>(l.b_idx)].v;
                next.assign(static_cast<std::size_t>(l.out_ch) * static_cast<std::size_t>(l.out_len), 0.0);
                for (int f = 0; f < l.out_ch; ++f) {
                    for (int t = 0; t < l.out_len; ++t) {
                        double acc = b[static_cast<std::size_t>(f)];
                        const int t0 = t * l.stride;
                        for (int ch = 0; ch < l.in_ch; ++ch) {
                            const double* wp =
                                &w[(static_cast<std::size_t>(f) * l.in_ch + ch) * static_cast<std::size_t>(l.kernel)];
                            const double* xp =
                                &cur[static_cast<std::size_t>(ch) * static_cast<std::size_t>(l.in_len) + t0];
                            for (int k = 0; k < l.kernel; ++k) acc += wp[k] * xp[k];
                        }
                        next[static_cast<std::size_t>(f) * static_cast<std::size_t>(l.out_len) + t] = acc;
                    }
                }
                break;
            }
            case LayerType::Relu:
                next.resize(cur.size());
                for (std::size_t i = 0; i < cur.size(); ++i) {
                    if (ws) ws->min_abs_preact = std::min(ws->min_abs_preact, std::abs(cur[i]));
                    next[i] = cur[i] > 0.0 ? cur[i] : 0.0;
                }
                break;
            case LayerType::GlobalAvgPool:
                next.assign(static_cast<std::size_t>(l.in_ch), 0.0);
                for (int ch = 0; ch < l.in_ch; ++ch) {
                    double acc = 0.0;
                    const double* xp = &cur[static_cast<std::size_t>(ch) * static_cast<std::size_t>(l.in_len)];
                    for (int t = 0; t < l.in_len; ++t) acc += xp[t];
                    next[static_cast<std::size_t>(ch)] = acc / static_cast<double>(l.in_len);
                }
                break;
            case LayerType::Dense: {
                const auto& w = params.tensors[static_cast<std::size_t>(l.w_idx)].v;
                const auto& b = params.tensors[static_cast<std::size_t>(l.b_idx)].v;
                next.assign(static_cast<std::size_t>(l.out_len), 0.0);
                for (int o = 0; o < l.out_len; ++o) {
                    double acc = b[static_cast<std::size_t>(o)];
                    const double* wp = &w[static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in_len)];
                    for (int i = 0; i < l.in_len; ++i) acc += wp[i] * cur[static_cast<std::size_t>(i)];
                    next[static_cast<std::size_t>(o)] = acc;
                }
                break;
            }
        }
        cur = std::move(next);
        if (ws) ws->acts.push_back(cur);
    }
    return {cur[0], cur[1]};
}

void backward(const ModelSpec& spec, const NetPlan& plan, const Parameters& params,
              const Workspace& ws, const std::array<double, 2>& dy,
              std::vector<std::vector<double>>& grads) {
    if (spec.kind == ModelSpec::Kind::Mean) {
        grads[0][0] += dy[0];
        grads[0][1] += dy[1];
        return;
    }
    std::vector<double> delta = {dy[0], dy[1]};
    for (std::size_t li = plan.layers.size(); li-- > 0;) {
        const LayerPlan& l = plan.layers[li];
        const std::vector<double>& x = ws.acts[li];
        std::vector<double> dprev;
        switch (l.type) {
            case LayerType::Flatten:
                dprev = std::move(delta);
                break;
            case LayerType::Dense: {
                const auto& w = params.tensors[static_cast<std::size_t>(l.w_idx)].v;
                auto& gw = grads[static_cast<std::size_t>(l.w_idx)];
                auto& gb = grads[static_cast<std::size_t>(l.b_idx)];
                dprev.assign(static_cast<std::size_t>(l.in_len), 0.0);
                for (int o = 0; o < l.out_len; ++o) {
                    const double d = delta[static_cast<std::size_t>(o)];
                    gb[static_cast<std::size_t>(o)] += d;
                    double* gwp = &gw[static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in_len)];
                    const double* wp = &w[static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in_len)];
                    for (int i = 0; i < l.in_len; ++i) {
                        gwp[i] += d * x[static_cast<std::size_t>(i)];
                        dprev[static_cast<std::size_t>(i)] += d * wp[i];
                    }
                }
                break;
            }
            case LayerType::Relu:
                dprev.resize(delta.size());
                for (std::size_t i = 0; i < delta.size(); ++i)
                    dprev[i] = x[i] > 0.0 ? delta[i] : 0.0;
                break;
            case LayerType::GlobalAvgPool:
                dprev.assign(static_cast<std::size_t>(l.in_ch) * static_cast<std::size_t>(l.in_len), 0.0);
                for (int ch = 0; ch < l.in_ch; ++ch) {
                    const double d =
                        delta[static_cast<std::size_t>(ch)] / static_cast<double>(l.in_len);
                    double* dp = &dprev[static_cast<std::size_t>(ch) * static_cast<std::size_t>(l.in_len)];
                    for (int t = 0; t < l.in_len; ++t) dp[t] += d;
                }
                break;
            case LayerType::Conv1d: {
                const auto& w = params.tensors[static_cast<std::size_t>(l.w_idx)].v;
                auto& gw = grads[static_cast<std::size_t>(l.w_idx)];
                auto& gb = grads[static_cast<std::size_t>(l.b_idx)];
                dprev.assign(static_cast<std::size_t>(l.in_ch) * static_cast<std::size_t>(l.in_len), 0.0);
                for (int f = 0; f < l.out_ch; ++f) {
                    for (int t = 0; t < l.out_len; ++t) {
                        const double d =
                            delta[static_cast<std::size_t>(f) * static_cast<std::size_t>(l.out_len) + t];
                        if (d == 0.0) continue;
                        gb[static_cast<std::size_t>(f)] += d;
                        const int t0 = t * l.stride;
                        for (int ch = 0; ch < l.in_ch; ++ch) {
                            const std::size_t wbase =
                                (static_cast<std::size_t>(f) * l.in_ch + ch) * static_cast<std::size_t>(l.kernel);
                            const std::size_t xbase =
                                static_cast<std::size_t>(ch) * static_cast<std::size_t>(l.in_len) + t0;
                            for (int k = 0; k < l.kernel; ++k) {
                                gw[wbase + k] += d * x[xbase + k];
                                dprev[xbase + k] += d * w[wbase + k];
                            }
                        }
                    }
                }
                break;
            }
        }
        delta = std::move(dprev);
    }
}

std::vector<double> window_input(const LabeledWindow& w) {
    std::vector<double> x;
    x.reserve(w.channels.size() * w.len());
    for (const auto& ch : w.channels) x.insert(x.end(), ch.begin(), ch.end());
    return x;
}

void check_window_shape(const ModelSpec& spec, const LabeledWindow& w) {
    if (static_cast<int>(w.channels.size()) != spec.input_channels ||
        static_cast<int>(w.len()) != spec.input_len)
        throw Error(errc::shape_mismatch,
                    "window shape (" + std::to_string(w.channels.size()) + " x " +
                        std::to_string(w.len()) + ") does not match model input (" +
                        std::to_string(spec.input_channels) + " x " + std::to_string(spec.input_len) +
                        ")");
}

// Per-sample loss 1/2 |yhat - y|^2 in standardized units, with gradient.
double loss_and_grad(const std::array<double, 2>& yhat, const std::array<double, 2>& y,
                     std::array<double, 2>& dy) {
    const double d0 = yhat[0] - y[0];
    const double d1 = yhat[1] - y[1];
    dy = {d0, d1};
    return 0.5 * (d0 * d0 + d1 * d1);
}

struct Adam {
    std::vector<std::vector<double>> m, v;
    double beta1, beta2, eps, lr;
    double b1t = 1.0, b2t = 1.0;

    Adam(const Parameters& p, const TrainConfig& cfg)
        : beta1(cfg.beta1), beta2(cfg.beta2), eps(cfg.epsilon), lr(cfg.lr) {
        for (const Tensor& t : p.tensors) {
            m.emplace_back(t.v.size(), 0.0);
            v.emplace_back(t.v.size(), 0.0);
        }
    }

    void step(Parameters& p, const std::vector<std::vector<double>>& grads) {
        b1t *= beta1;
        b2t *= beta2;
        for (std::size_t ti = 0; ti < p.tensors.size(); ++ti) {
            Tensor& t = p.tensors[ti];
            if (!t.trainable) continue;
            auto& mt = m[ti];
            auto& vt = v[ti];
            const auto& g = grads[ti];
            for (std::size_t i = 0; i < t.v.size(); ++i) {
                mt[i] = beta1 * mt[i] + (1.0 - beta1) * g[i];
                vt[i] = beta2 * vt[i] + (1.0 - beta2) * g[i] * g[i];
                const double mhat = mt[i] / (1.0 - b1t);
                const double vhat = vt[i] / (1.0 - b2t);
                t.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

std::array<double, 2> standardized_label(const Parameters& p, const LabeledWindow& w) {
    return {(w.sbp - p.target_mean[0]) / p.target_std[0],
            (w.dbp - p.target_mean[1]) / p.target_std[1]};
}

double val_mae_mmhg(const ModelSpec& spec, const NetPlan& plan, const Parameters& p,
                    const std::vector<std::vector<double>>& inputs,
                    const std::vector<const LabeledWindow*>& windows) {
    double mae_s = 0.0, mae_d = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto out = forward(spec, plan, p, inputs[i], nullptr);
        double sbp = out[0], dbp = out[1];
        if (spec.kind != ModelSpec::Kind::Mean) {
            sbp = p.target_mean[0] + p.target_std[0] * sbp;
            dbp = p.target_mean[1] + p.target_std[1] * dbp;
        }
        mae_s += std::abs(sbp - windows[i]->sbp);
        mae_d += std::abs(dbp - windows[i]->dbp);
    }
    const double n = static_cast<double>(inputs.size());
    return 0.5 * (mae_s / n + mae_d / n);
}

// Shared minibatch loop for train() and finetune_final_layer().
TrainResult run_training(const ModelSpec& spec, Parameters params, const WindowSet& trainset,
                         const WindowSet& valset, const TrainConfig& cfg, bool early_stop,
                         bool refresh_target_scaling) {
    const NetPlan plan = build_plan(spec);
    if (trainset.windows.empty() || valset.windows.empty())
        throw Error(errc::insufficient_data, "empty training or validation set");
    for (const auto& w : trainset.windows) check_window_shape(spec, w);
    for (const auto& w : valset.windows) check_window_shape(spec, w);
    if (cfg.epochs < 1) throw Error(errc::invalid_spec, "epochs must be >= 1");
    if (cfg.batch_size < 1) throw Error(errc::invalid_spec, "batch size must be >= 1");
    if (!(cfg.lr > 0.0)) throw Error(errc::invalid_spec, "learning rate must be positive");

    TrainResult result;

    if (spec.kind == ModelSpec::Kind::Mean) {
        double ms = 0.0, md = 0.0;
        for (const auto& w : trainset.windows) {
            ms += w.sbp;
            md += w.dbp;
        }
        const double n = static_cast<double>(trainset.windows.size());
        params.tensors.front().v = {ms / n, md / n};
        double loss = 0.0;
        for (const auto& w : trainset.windows) {
            const double d0 = params.tensors.front().v[0] - w.sbp;
            const double d1 = params.tensors.front().v[1] - w.dbp;
            loss += 0.5 * (d0 * d0 + d1 * d1);
        }
        loss /= n;

        std::vector<std::vector<double>> val_in;
        std::vector<const LabeledWindow*> val_w;
        for (const auto& w : valset.windows) {
            val_in.push_back(window_input(w));
            val_w.push_back(&w);
        }
        const double vm = val_mae_mmhg(spec, plan, params, val_in, val_w);
        for (int e = 0; e < cfg.epochs; ++e) result.history.push_back({loss, vm});
        result.checkpoint = {spec, std::move(params), cfg.epochs, vm, ""};
        return result;
    }

    if (refresh_target_scaling) {
        double ms = 0.0, md = 0.0;
        for (const auto& w : trainset.windows) {
            ms += w.sbp;
            md += w.dbp;
        }
        const double n = static_cast<double>(trainset.windows.size());
        ms /= n;
        md /= n;
        double vs = 0.0, vd = 0.0;
        for (const auto& w : trainset.windows) {
            vs += (w.sbp - ms) * (w.sbp - ms);
            vd += (w.dbp - md) * (w.dbp - md);
        }
        params.target_mean = {ms, md};
        params.target_std = {std::max(std::sqrt(vs / n), 1e-9), std::max(std::sqrt(vd / n), 1e-9)};
    }

    std::vector<std::vector<double>> train_in, val_in;
    std::vector<const LabeledWindow*> train_w, val_w;
    for (const auto& w : trainset.windows) {
        train_in.push_back(window_input(w));
        train_w.push_back(&w);
    }
    for (const auto& w : valset.windows) {
        val_in.push_back(window_input(w));
        val_w.push_back(&w);
    }

    Adam adam(params, cfg);
    Rng rng(mix_seed(cfg.seed, 0x7261696e)); // batch-order stream

    std::vector<std::size_t> order(train_in.size());
    std::iota(order.begin(), order.end(), 0);

    Parameters best = params;
    double best_mae = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int since_improvement = 0;
    int epochs_run = 0;

    std::vector<std::vector<double>> grads;
    for (const Tensor& t : params.tensors) grads.emplace_back(t.v.size(), 0.0);
    Workspace ws;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t b = 0;
        while (b < order.size()) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t i = b; i < e; ++i) {
                const std::size_t idx = order[i];
                const auto yhat = forward(spec, plan, params, train_in[idx], &ws);
                std::array<double, 2> dy;
                batch_loss += loss_and_grad(yhat, standardized_label(params, *train_w[idx]), dy);
                const double inv = 1.0 / static_cast<double>(e - b);
                dy[0] *= inv;
                dy[1] *= inv;
                backward(spec, plan, params, ws, dy, grads);
            }
            batch_loss /= static_cast<double>(e - b);
            if (!std::isfinite(batch_loss))
                throw Error(errc::divergence, "loss diverged at epoch " + std::to_string(epoch));
            epoch_loss += batch_loss * static_cast<double>(e - b);
            adam.step(params, grads);
            b = e;
        }
        epoch_loss /= static_cast<double>(order.size());

        const double vm = val_mae_mmhg(spec, plan, params, val_in, val_w);
        result.history.push_back({epoch_loss, vm});
        epochs_run = epoch;

        if (vm < best_mae) {
            best_mae = vm;
            best = params;
            best_epoch = epoch;
            since_improvement = 0;
        } else {
            ++since_improvement;
        }
        if (early_stop && since_improvement >= cfg.patience) break;
    }

    (void)best_epoch;
    result.checkpoint = {spec, std::move(best), epochs_run, best_mae, ""};
    return result;
}

} // namespace

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

ModelSpec ModelSpec::mean(int channels, int len) {
    ModelSpec s;
    s.kind = Kind::Mean;
    s.input_channels = channels;
    s.input_len = len;
    return s;
}

ModelSpec ModelSpec::linear(int channels, int len) {
    ModelSpec s;
    s.kind = Kind::Linear;
    s.input_channels = channels;
    s.input_len = len;
    return s;
}

ModelSpec ModelSpec::mlp(int channels, int len, std::vector<int> hidden) {
    ModelSpec s;
    s.kind = Kind::Mlp;
    s.input_channels = channels;
    s.input_len = len;
    s.hidden = std::move(hidden);
    return s;
}

ModelSpec ModelSpec::cnn1d(int channels, int len, std::vector<ConvLayerSpec> conv,
                           std::vector<int> dense) {
    ModelSpec s;
    s.kind = Kind::Cnn1d;
    s.input_channels = channels;
    s.input_len = len;
    s.conv = std::move(conv);
    s.dense = std::move(dense);
    return s;
}

std::string ModelSpec::kind_name() const {
    switch (kind) {
        case Kind::Mean: return "mean";
        case Kind::Linear: return "linear";
        case Kind::Mlp: return "mlp";
        case Kind::Cnn1d: return "cnn1d";
    }
    return "unknown";
}

void ModelSpec::validate() const {
    if (input_channels != 1 && input_channels != 3)
        throw Error(errc::invalid_spec, "input_channels must be 1 or 3");
    if (input_len < 1) throw Error(errc::invalid_spec, "input_len must be positive");
    if (kind == Kind::Mlp) {
        if (hidden.empty()) throw Error(errc::invalid_spec, "MLP needs at least one hidden layer");
        for (int h : hidden)
            if (h < 1) throw Error(errc::invalid_spec, "hidden sizes must be positive");
    }
    if (kind == Kind::Cnn1d) {
        if (conv.empty()) throw Error(errc::invalid_spec, "CNN needs at least one conv layer");
        int cur_len = input_len;
        for (const ConvLayerSpec& c : conv) {
            if (c.filters < 1 || c.kernel < 1 || c.stride < 1)
                throw Error(errc::invalid_spec, "conv layer sizes must be positive");
            if (c.kernel > cur_len)
                throw Error(errc::invalid_spec, "conv kernel larger than input length");
            cur_len = (cur_len - c.kernel) / c.stride + 1;
        }
        for (int d : dense)
            if (d < 1) throw Error(errc::invalid_spec, "dense sizes must be positive");
    }
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

Parameters init(const ModelSpec& spec, std::uint64_t seed) {
    const NetPlan plan = build_plan(spec);
    Parameters p;
    Rng rng(mix_seed(seed, 0x696e6974));
    for (const Tensor& tpl : plan.tensor_templates) {
        Tensor t = tpl;
        t.v.assign(tensor_elems(tpl), 0.0);
        const bool is_weight = t.shape.size() >= 2;
        if (is_weight && spec.kind != ModelSpec::Kind::Mean) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in_of(t)));
            for (double& x : t.v) x = rng.uniform(-bound, bound);
        }
        p.tensors.push_back(std::move(t));
    }
    return p;
}

std::array<double, 2> predict(const ModelSpec& spec, const Parameters& params,
                              const LabeledWindow& window) {
    const NetPlan plan = build_plan(spec);
    if (params.tensors.size() != plan.tensor_templates.size())
        throw Error(errc::shape_mismatch, "parameter count does not match model spec");
    if (spec.kind != ModelSpec::Kind::Mean) check_window_shape(spec, window);
    const auto out = forward(spec, plan, params, window_input(window), nullptr);
    if (spec.kind == ModelSpec::Kind::Mean) return out;
    return {params.target_mean[0] + params.target_std[0] * out[0],
            params.target_mean[1] + params.target_std[1] * out[1]};
}

void check_subject_disjoint(const WindowSet& a, const WindowSet& b) {
    const auto ids_a = a.subject_ids();
    const auto ids_b = b.subject_ids();
    std::vector<std::string> overlap;
    std::set_intersection(ids_a.begin(), ids_a.end(), ids_b.begin(), ids_b.end(),
                          std::back_inserter(overlap));
    if (!overlap.empty())
        throw Error(errc::split_contamination,
                    "subject " + overlap.front() + " appears in both partitions");
}

TrainResult train(const ModelSpec& spec, const WindowSet& trainset, const WindowSet& valset,
                  const TrainConfig& cfg, bool allow_subject_overlap) {
    if (!allow_subject_overlap) check_subject_disjoint(trainset, valset);
    Parameters params = init(spec, cfg.seed);
    return run_training(spec, std::move(params), trainset, valset, cfg,
                        /*early_stop=*/false, /*refresh_target_scaling=*/true);
}

double gradient_check(const ModelSpec& spec, const Parameters& params_in,
                      const LabeledWindow& window_in, const std::array<double, 2>& label,
                      std::uint64_t seed) {
    const NetPlan plan = build_plan(spec);
    for (const Tensor& t : params_in.tensors)
        if (!t.trainable) throw Error(errc::invalid_spec, "gradient check requires all parameters trainable");

    Parameters params = params_in;
    LabeledWindow window = window_in;
    if (spec.kind != ModelSpec::Kind::Mean) check_window_shape(spec, window);
    Rng rng(mix_seed(seed, 0x67636b));

    const std::array<double, 2> y = spec.kind == ModelSpec::Kind::Mean
                                        ? label
                                        : standardized_label(params, window);

    // Keep pre-activations away from the ReLU kink so the finite-difference
    // quotient stays one-sided; jitter the input until clear.
    Workspace ws;
    std::vector<double> input = window_input(window);
    for (int attempt = 0; attempt < 50; ++attempt) {
        ws.min_abs_preact = 1e300;
        forward(spec, plan, params, input, &ws);
        if (ws.min_abs_preact > 1e-4) break;
        for (double& v : input) v += rng.normal(0.0, 1e-2);
    }

    std::vector<std::vector<double>> grads;
    for (const Tensor& t : params.tensors) grads.emplace_back(t.v.size(), 0.0);
    {
        Workspace w2;
        const auto yhat = forward(spec, plan, params, input, &w2);
        std::array<double, 2> dy;
        loss_and_grad(yhat, y, dy);
        backward(spec, plan, params, w2, dy, grads);
    }

    auto loss_at = [&]() {
        const auto yhat = forward(spec, plan, params, input, nullptr);
        std::array<double, 2> dy;
        return loss_and_grad(yhat, y, dy);
    };

    double max_rel = 0.0;
    for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
        Tensor& t = params.tensors[ti];
        const std::size_t n = t.v.size();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        if (n > 200) {
            rng.shuffle(idx);
            idx.resize(200);
        }
        for (std::size_t i : idx) {
            const double theta = t.v[i];
            const double h = std::max(1e-6, 1e-4 * std::abs(theta));
            t.v[i] = theta + h;
            const double lp = loss_at();
            t.v[i] = theta - h;
            const double lm = loss_at();
            t.v[i] = theta;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = grads[ti][i];
            const double denom = std::max(std::abs(numeric) + std::abs(analytic), 1e-8);
            max_rel = std::max(max_rel, std::abs(numeric - analytic) / denom);
        }
    }
    return max_rel;
}

TrainResult finetune_final_layer(const Checkpoint& checkpoint, const WindowSet& trainset,
                                 const WindowSet& valset, const TrainConfig& cfg) {
    if (checkpoint.spec.kind == ModelSpec::Kind::Mean)
        throw Error(errc::invalid_spec, "mean regressor has no final layer to fine-tune");
    check_subject_disjoint(trainset, valset);

    Parameters params = checkpoint.params;
    for (Tensor& t : params.tensors)
        t.trainable = (t.name == "out_w" || t.name == "out_b");

    // Target scaling stays frozen with the pretrained weights.
    return run_training(checkpoint.spec, std::move(params), trainset, valset, cfg,
                        /*early_stop=*/true, /*refresh_target_scaling=*/false);
}

std::pair<TrainResult, WindowSet> personalize(const Checkpoint& checkpoint,
                                              const WindowSet& subject_windows, double frac,
                                              const TrainConfig& cfg,
                                              const WindowSet* context_train,
                                              const WindowSet* context_val) {
    if (!(frac > 0.0 && frac < 1.0))
        throw Error(errc::invalid_spec, "personalization fraction must be in (0, 1)");
    if (checkpoint.spec.kind == ModelSpec::Kind::Mean)
        throw Error(errc::invalid_spec, "mean regressor has no final layer to fine-tune");
    const auto ids = subject_windows.subject_ids();
    if (ids.size() != 1)
        throw Error(errc::invalid_spec, "personalization takes exactly one subject's windows");
    const std::size_t n = subject_windows.windows.size();
    if (n < 2) throw Error(errc::insufficient_data, "need at least two windows to personalize");

    // Chronological order, independent of input order.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& wa = subject_windows.windows[a];
        const auto& wb = subject_windows.windows[b];
        if (wa.source_offset_s != wb.source_offset_s) return wa.source_offset_s < wb.source_offset_s;
        if (wa.sbp != wb.sbp) return wa.sbp < wb.sbp;
        if (wa.dbp != wb.dbp) return wa.dbp < wb.dbp;
        return wa.snr < wb.snr;
    });

    const std::size_t n_tune = static_cast<std::size_t>(
        std::ceil(frac * static_cast<double>(n) - 1e-12));
    WindowSet tune = subject_windows;
    WindowSet held = subject_windows;
    tune.windows.clear();
    held.windows.clear();
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_tune)
            tune.windows.push_back(subject_windows.windows[order[i]]);
        else
            held.windows.push_back(subject_windows.windows[order[i]]);
    }

    WindowSet train_set = context_train != nullptr ? *context_train : tune;
    if (context_train != nullptr)
        train_set.windows.insert(train_set.windows.end(), tune.windows.begin(), tune.windows.end());

    Parameters params = checkpoint.params;
    for (Tensor& t : params.tensors)
        t.trainable = (t.name == "out_w" || t.name == "out_b");

    const WindowSet& val_set = context_val != nullptr ? *context_val : tune;
    TrainResult result = run_training(checkpoint.spec, std::move(params), train_set, val_set, cfg,
                                      /*early_stop=*/true, /*refresh_target_scaling=*/false);
    return {std::move(result), std::move(held)};
}

} // namespace pulsebp
