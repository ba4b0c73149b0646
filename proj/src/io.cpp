#include "pulsebp/io.hpp"
#include "pulsebp/error.hpp"

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pulsebp::io {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(errc::data, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(errc::data, "cannot write " + path.string());
    out << content;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
    std::filesystem::path p = csv_path;
    p.replace_extension(".json");
    return p;
}

double parse_double(std::string_view sv) {
    double v = 0.0;
    const auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    if (res.ec != std::errc()) throw Error(errc::data, "bad numeric field: " + std::string(sv));
    return v;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), self-contained so manifests need no extra dependency.
// ---------------------------------------------------------------------------

constexpr std::array<std::uint32_t, 64> kSha256K = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};

std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

} // namespace

std::string sha256_hex(const std::string& bytes) {
    std::array<std::uint32_t, 8> h = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                                      0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    std::string msg = bytes;
    const std::uint64_t bit_len = static_cast<std::uint64_t>(bytes.size()) * 8;
    msg.push_back(static_cast<char>(0x80));
    while (msg.size() % 64 != 56) msg.push_back('\0');
    for (int i = 7; i >= 0; --i) msg.push_back(static_cast<char>((bit_len >> (8 * i)) & 0xff));

    std::array<std::uint32_t, 64> w{};
    for (std::size_t chunk = 0; chunk < msg.size(); chunk += 64) {
        for (int i = 0; i < 16; ++i) {
            w[static_cast<std::size_t>(i)] =
                (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * i])) << 24) |
                (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * i + 1])) << 16) |
                (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * i + 2])) << 8) |
                static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * i + 3]));
        }
        for (int i = 16; i < 64; ++i) {
            const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[static_cast<std::size_t>(i)] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        auto [a, b, c, d, e, f, g, hh] = h;
        for (int i = 0; i < 64; ++i) {
            const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            const std::uint32_t ch = (e & f) ^ (~e & g);
            const std::uint32_t temp1 = hh + s1 + ch + kSha256K[static_cast<std::size_t>(i)] +
                                        w[static_cast<std::size_t>(i)];
            const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            const std::uint32_t temp2 = s0 + maj;
            hh = g;
            g = f;
            f = e;
            e = d + temp1;
            d = c;
            c = b;
            b = a;
            a = temp1 + temp2;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
        h[5] += f;
        h[6] += g;
        h[7] += hh;
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (std::uint32_t word : h)
        for (int i = 7; i >= 0; --i) out.push_back(hex[(word >> (4 * i)) & 0xf]);
    return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string format_double(double v) {
    std::array<char, 40> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

void write_record(const std::filesystem::path& csv_path, const SubjectRecord& rec) {
    std::string out = "t,ppg,abp\n";
    const std::size_t n = rec.ppg.samples.size();
    for (std::size_t i = 0; i < n; ++i) {
        out += format_double(static_cast<double>(i) / rec.ppg.fs);
        out += ',';
        out += format_double(rec.ppg.samples[i]);
        out += ',';
        out += format_double(rec.abp.samples[i]);
        out += '\n';
    }
    write_file(csv_path, out);
    json side;
    side["subject_id"] = rec.subject_id;
    side["fs"] = rec.ppg.fs;
    write_file(sidecar_path(csv_path), side.dump(2) + "\n");
}

RecordInput read_record(const std::filesystem::path& csv_path) {
    const json side = json::parse(read_file(sidecar_path(csv_path)));
    RecordInput rec;
    rec.subject_id = side.at("subject_id").get<std::string>();
    const double fs = side.at("fs").get<double>();
    rec.ppg.fs = fs;
    rec.abp.fs = fs;

    const std::string content = read_file(csv_path);
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,ppg,abp", 0) != 0)
        throw Error(errc::data, "record CSV must start with header t,ppg,abp");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 3) throw Error(errc::data, "record CSV row needs 3 fields");
        rec.ppg.samples.push_back(parse_double(fields[1]));
        rec.abp.samples.push_back(parse_double(fields[2]));
    }
    return rec;
}

void write_rgb_trace(const std::filesystem::path& csv_path, const RgbTrace& trace) {
    std::string out = "t,r,g,b\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out += format_double(static_cast<double>(i) / trace.fps);
        out += ',';
        out += format_double(trace.r[i]);
        out += ',';
        out += format_double(trace.g[i]);
        out += ',';
        out += format_double(trace.b[i]);
        out += '\n';
    }
    write_file(csv_path, out);
    json side;
    side["subject_id"] = trace.subject_id;
    side["fps"] = trace.fps;
    side["labels"] = json::array();
    for (const BpStamp& s : trace.bp_labels)
        side["labels"].push_back({{"t", s.t}, {"sbp", s.sbp}, {"dbp", s.dbp}});
    write_file(sidecar_path(csv_path), side.dump(2) + "\n");
}

RgbTrace read_rgb_trace(const std::filesystem::path& csv_path) {
    const json side = json::parse(read_file(sidecar_path(csv_path)));
    RgbTrace trace;
    trace.subject_id = side.at("subject_id").get<std::string>();
    trace.fps = side.at("fps").get<double>();
    for (const auto& l : side.at("labels"))
        trace.bp_labels.push_back(
            {l.at("t").get<double>(), l.at("sbp").get<double>(), l.at("dbp").get<double>()});

    const std::string content = read_file(csv_path);
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,r,g,b", 0) != 0)
        throw Error(errc::data, "trace CSV must start with header t,r,g,b");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 4) throw Error(errc::data, "trace CSV row needs 4 fields");
        trace.r.push_back(parse_double(fields[1]));
        trace.g.push_back(parse_double(fields[2]));
        trace.b.push_back(parse_double(fields[3]));
    }
    return trace;
}

bool sidecar_is_rgb(const std::filesystem::path& csv_path) {
    const json side = json::parse(read_file(sidecar_path(csv_path)));
    return side.contains("fps");
}

// ---------------------------------------------------------------------------
// Window sets
// ---------------------------------------------------------------------------

json policy_to_json(const SegmentPolicy& policy) {
    json j;
    j["kind"] = policy.kind == SegmentPolicy::Kind::ConstTime ? "const_time" : "const_beats";
    if (policy.kind == SegmentPolicy::Kind::ConstTime)
        j["seconds"] = policy.seconds;
    else
        j["beats"] = policy.beats;
    j["nominal_fs"] = policy.nominal_fs;
    return j;
}

SegmentPolicy policy_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "const_time") return SegmentPolicy::const_time(j.at("seconds").get<double>());
    if (kind == "const_beats")
        return SegmentPolicy::const_beats(j.at("beats").get<int>(),
                                          j.value("nominal_fs", 125.0));
    throw Error(errc::config, "unknown policy kind: " + kind);
}

json gating_rules_to_json(const GatingRules& rules) {
    json j;
    j["sbp"] = {rules.sbp_min, rules.sbp_max};
    j["dbp"] = {rules.dbp_min, rules.dbp_max};
    j["hr"] = {rules.hr_min, rules.hr_max};
    j["snr_min_db"] = rules.snr_min_db;
    return j;
}

GatingRules gating_rules_from_json(const json& j) {
    GatingRules rules;
    if (j.contains("sbp")) {
        rules.sbp_min = j["sbp"][0].get<double>();
        rules.sbp_max = j["sbp"][1].get<double>();
    }
    if (j.contains("dbp")) {
        rules.dbp_min = j["dbp"][0].get<double>();
        rules.dbp_max = j["dbp"][1].get<double>();
    }
    if (j.contains("hr")) {
        rules.hr_min = j["hr"][0].get<double>();
        rules.hr_max = j["hr"][1].get<double>();
    }
    rules.snr_min_db = j.value("snr_min_db", -7.0);
    return rules;
}

void write_window_set(const std::filesystem::path& csv_path, const WindowSet& ws) {
    const std::size_t len = ws.window_len;
    std::string header = "subject_id,window_id,sbp,dbp,hr,snr";
    for (int c = 0; c < ws.channel_count; ++c)
        for (std::size_t i = 0; i < len; ++i)
            header += ",ch" + std::to_string(c) + "_" + std::to_string(i);
    std::string out = header + "\n";
    std::size_t window_id = 0;
    for (const LabeledWindow& w : ws.windows) {
        out += w.subject_id;
        out += ',';
        out += std::to_string(window_id++);
        out += ',';
        out += format_double(w.sbp);
        out += ',';
        out += format_double(w.dbp);
        out += ',';
        out += format_double(w.hr);
        out += ',';
        out += format_double(w.snr);
        for (const auto& ch : w.channels)
            for (double v : ch) {
                out += ',';
                out += format_double(v);
            }
        out += '\n';
    }
    write_file(csv_path, out);

    json manifest;
    manifest["policy"] = policy_to_json(ws.policy);
    manifest["rules"] = gating_rules_to_json(ws.rules);
    manifest["channel_count"] = ws.channel_count;
    manifest["window_len"] = len;
    manifest["n_windows"] = ws.windows.size();
    manifest["n_generated"] = ws.n_generated;
    manifest["rejection_log"] = json::object();
    for (const auto& [reason, count] : ws.rejection_log) manifest["rejection_log"][reason] = count;
    std::filesystem::path mpath = csv_path;
    mpath.replace_extension(".manifest.json");
    write_file(mpath, manifest.dump(2) + "\n");
}

WindowSet read_window_set(const std::filesystem::path& csv_path) {
    WindowSet ws;
    std::filesystem::path mpath = csv_path;
    mpath.replace_extension(".manifest.json");
    if (std::filesystem::exists(mpath)) {
        const json manifest = json::parse(read_file(mpath));
        ws.policy = policy_from_json(manifest.at("policy"));
        ws.rules = gating_rules_from_json(manifest.at("rules"));
        ws.n_generated = manifest.value("n_generated", std::size_t{0});
        if (manifest.contains("rejection_log"))
            for (const auto& [k, v] : manifest["rejection_log"].items())
                ws.rejection_log[k] = v.get<std::size_t>();
    }

    const std::string content = read_file(csv_path);
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line) || line.rfind("subject_id,window_id,sbp,dbp,hr,snr", 0) != 0)
        throw Error(errc::data, "window CSV header mismatch");
    // Channel layout from the header tail.
    int channels = 0;
    std::size_t len = 0;
    {
        const auto fields = split_csv_line(line);
        for (std::size_t i = 6; i < fields.size(); ++i) {
            const std::string_view f = fields[i];
            if (f.rfind("ch", 0) != 0) throw Error(errc::data, "unexpected column in window CSV");
            const std::size_t us = f.find('_');
            const int c = static_cast<int>(parse_double(f.substr(2, us - 2)));
            channels = std::max(channels, c + 1);
        }
        if (channels == 0) throw Error(errc::data, "window CSV has no sample columns");
        len = (fields.size() - 6) / static_cast<std::size_t>(channels);
    }
    ws.channel_count = channels;
    ws.window_len = len;

    std::map<std::string, std::size_t> per_subject_rank;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 6 + static_cast<std::size_t>(channels) * len)
            throw Error(errc::data, "window CSV row width mismatch");
        LabeledWindow w;
        w.subject_id = std::string(fields[0]);
        w.sbp = parse_double(fields[2]);
        w.dbp = parse_double(fields[3]);
        w.hr = parse_double(fields[4]);
        w.snr = parse_double(fields[5]);
        // Chronology within a subject is the file order; reconstruct offsets
        // from the per-subject rank (the CSV schema does not carry them).
        w.source_offset_s = static_cast<double>(per_subject_rank[w.subject_id]++);
        std::size_t f = 6;
        for (int c = 0; c < channels; ++c) {
            std::vector<double> ch(len);
            for (std::size_t i = 0; i < len; ++i) ch[i] = parse_double(fields[f++]);
            w.channels.push_back(std::move(ch));
        }
        ws.windows.push_back(std::move(w));
    }
    ws.n_generated = std::max(ws.n_generated, ws.windows.size());
    return ws;
}

// ---------------------------------------------------------------------------
// Model / config JSON
// ---------------------------------------------------------------------------

json model_spec_to_json(const ModelSpec& spec) {
    json j;
    j["kind"] = spec.kind_name();
    j["input_channels"] = spec.input_channels;
    j["input_len"] = spec.input_len;
    if (spec.kind == ModelSpec::Kind::Mlp) j["hidden"] = spec.hidden;
    if (spec.kind == ModelSpec::Kind::Cnn1d) {
        j["conv"] = json::array();
        for (const auto& c : spec.conv)
            j["conv"].push_back({{"filters", c.filters}, {"kernel", c.kernel}, {"stride", c.stride}});
        j["dense"] = spec.dense;
    }
    return j;
}

ModelSpec model_spec_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    const int channels = j.at("input_channels").get<int>();
    const int len = j.at("input_len").get<int>();
    if (kind == "mean") return ModelSpec::mean(channels, len);
    if (kind == "linear") return ModelSpec::linear(channels, len);
    if (kind == "mlp")
        return ModelSpec::mlp(channels, len,
                              j.value("hidden", std::vector<int>{128, 64}));
    if (kind == "cnn1d") {
        std::vector<ConvLayerSpec> conv;
        if (j.contains("conv"))
            for (const auto& c : j["conv"])
                conv.push_back({c.at("filters").get<int>(), c.at("kernel").get<int>(),
                                c.at("stride").get<int>()});
        else
            conv = {{16, 9, 2}, {32, 9, 2}, {32, 9, 2}};
        return ModelSpec::cnn1d(channels, len, std::move(conv),
                                j.value("dense", std::vector<int>{64}));
    }
    throw Error(errc::config, "unknown model kind: " + kind);
}

json cohort_spec_to_json(const CohortSpec& spec) {
    json j;
    j["n_subjects"] = spec.n_subjects;
    j["sbp_mean"] = spec.sbp_mean;
    j["dbp_mean"] = spec.dbp_mean;
    j["bp_between_subject_std"] = spec.bp_between_subject_std;
    j["bp_within_subject_std"] = spec.bp_within_subject_std;
    j["bp_skew"] = spec.bp_skew;
    j["hr_min"] = spec.hr_min;
    j["hr_max"] = spec.hr_max;
    j["morphology_coupling"] = spec.morphology_coupling;
    j["noise_std"] = spec.noise_std;
    j["duration_s"] = spec.duration_s;
    j["fs"] = spec.fs;
    j["rgb_fps"] = spec.rgb_fps;
    j["seed"] = spec.seed;
    return j;
}

CohortSpec cohort_spec_from_json(const json& j) {
    CohortSpec s;
    s.n_subjects = j.value("n_subjects", s.n_subjects);
    s.sbp_mean = j.value("sbp_mean", s.sbp_mean);
    s.dbp_mean = j.value("dbp_mean", s.dbp_mean);
    s.bp_between_subject_std = j.value("bp_between_subject_std", s.bp_between_subject_std);
    s.bp_within_subject_std = j.value("bp_within_subject_std", s.bp_within_subject_std);
    s.bp_skew = j.value("bp_skew", s.bp_skew);
    s.hr_min = j.value("hr_min", s.hr_min);
    s.hr_max = j.value("hr_max", s.hr_max);
    s.morphology_coupling = j.value("morphology_coupling", s.morphology_coupling);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.duration_s = j.value("duration_s", s.duration_s);
    s.fs = j.value("fs", s.fs);
    s.rgb_fps = j.value("rgb_fps", s.rgb_fps);
    s.seed = j.value("seed", s.seed);
    return s;
}

json train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["lr"] = cfg.lr;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["epsilon"] = cfg.epsilon;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["patience"] = cfg.patience;
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.lr = j.value("lr", cfg.lr);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.patience = j.value("patience", cfg.patience);
    return cfg;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json j;
    j["spec"] = model_spec_to_json(ckpt.spec);
    j["target_scaling"] = {{"mean", {ckpt.params.target_mean[0], ckpt.params.target_mean[1]}},
                           {"std", {ckpt.params.target_std[0], ckpt.params.target_std[1]}}};
    j["tensors"] = json::array();
    for (const Tensor& t : ckpt.params.tensors) {
        json tj;
        tj["name"] = t.name;
        tj["shape"] = t.shape;
        tj["trainable"] = t.trainable;
        tj["data"] = t.v;
        j["tensors"].push_back(std::move(tj));
    }
    j["metadata"] = {{"epochs_run", ckpt.epochs_run},
                     {"best_val_mae", ckpt.best_val_mae},
                     {"config_hash", ckpt.config_hash}};
    write_file(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const json j = json::parse(read_file(path));
    Checkpoint ckpt;
    ckpt.spec = model_spec_from_json(j.at("spec"));
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

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {
json target_report_to_json(const TargetReport& t) {
    json j;
    j["mae"] = t.mae;
    j["std"] = t.std;
    j["bins"] = json::array();
    for (const BinStat& b : t.bins) {
        json bj;
        bj["lo"] = b.lo;
        bj["hi"] = b.hi;
        bj["count"] = b.count;
        if (b.mae.has_value())
            bj["mae"] = *b.mae;
        else
            bj["mae"] = nullptr;
        j["bins"].push_back(std::move(bj));
    }
    return j;
}
} // namespace

json eval_report_to_json(const EvalReport& report) {
    json j;
    j["model"] = report.model_id;
    j["n_windows"] = report.n_windows;
    j["n_subjects"] = report.n_subjects;
    j["sbp"] = target_report_to_json(report.sbp);
    j["dbp"] = target_report_to_json(report.dbp);
    j["meta"] = {{"std_definition", "population std of absolute errors"},
                 {"bin_width_mmhg", 10.0}};
    return j;
}

void write_eval_report(const std::filesystem::path& json_path, const EvalReport& report) {
    write_file(json_path, eval_report_to_json(report).dump(2) + "\n");
}

void write_eval_report_csv(const std::filesystem::path& csv_path, const EvalReport& report) {
    std::string out = "model,target,bin_lo,bin_hi,count,mae\n";
    auto add_target = [&](const char* name, const TargetReport& t) {
        out += report.model_id;
        out += ',';
        out += name;
        out += ",,,";
        out += std::to_string(report.n_windows);
        out += ',';
        out += format_double(t.mae);
        out += '\n';
        for (const BinStat& b : t.bins) {
            out += report.model_id;
            out += ',';
            out += name;
            out += ',';
            out += format_double(b.lo);
            out += ',';
            out += format_double(b.hi);
            out += ',';
            out += std::to_string(b.count);
            out += ',';
            if (b.mae.has_value()) out += format_double(*b.mae);
            out += '\n';
        }
    };
    add_target("sbp", report.sbp);
    add_target("dbp", report.dbp);
    write_file(csv_path, out);
}

} // namespace pulsebp::io
