#pragma once

#include "pulsebp/eval.hpp"
#include "pulsebp/models.hpp"
#include "pulsebp/rppg_types.hpp"
#include "pulsebp/segmentation.hpp"
#include "pulsebp/synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace pulsebp::io {

using json = nlohmann::ordered_json;

/// Shortest round-trip decimal form (std::to_chars); keeps CSV output
/// byte-stable across runs.
std::string format_double(double v);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// --- record files: <name>.csv with header t,ppg,abp + <name>.json sidecar ---
void write_record(const std::filesystem::path& csv_path, const SubjectRecord& rec);
RecordInput read_record(const std::filesystem::path& csv_path);

// --- RGB traces: <name>.csv with header t,r,g,b + sidecar with labels ---
void write_rgb_trace(const std::filesystem::path& csv_path, const RgbTrace& trace);
RgbTrace read_rgb_trace(const std::filesystem::path& csv_path);

/// True if the sidecar of csv_path describes an RGB trace (fps + labels)
/// rather than a PPG/ABP record (fs).
bool sidecar_is_rgb(const std::filesystem::path& csv_path);

// --- window sets: windows.csv + manifest.json with policy/rules/log ---
void write_window_set(const std::filesystem::path& csv_path, const WindowSet& ws);
WindowSet read_window_set(const std::filesystem::path& csv_path);

// --- checkpoints (byte-stable JSON; load-then-save is byte identical) ---
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const json& j);
json gating_rules_to_json(const GatingRules& rules);
GatingRules gating_rules_from_json(const json& j);
json policy_to_json(const SegmentPolicy& policy);
SegmentPolicy policy_from_json(const json& j);
json cohort_spec_to_json(const CohortSpec& spec);
CohortSpec cohort_spec_from_json(const json& j);
json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);

json eval_report_to_json(const EvalReport& report);
void write_eval_report(const std::filesystem::path& json_path, const EvalReport& report);
/// Flat per-bin CSV (one row per target/bin plus overall rows).
void write_eval_report_csv(const std::filesystem::path& csv_path, const EvalReport& report);

} // namespace pulsebp::io
