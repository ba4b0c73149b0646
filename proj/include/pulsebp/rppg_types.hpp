#pragma once

#include <string>
#include <vector>

namespace pulsebp {

/// Timestamped blood-pressure reference (bedside-monitor style, coarse rate).
struct BpStamp {
    double t = 0.0;   // s
    double sbp = 0.0; // mmHg
    double dbp = 0.0; // mmHg
};

/// Per-frame spatial means of ROI pixels plus the reference BP stream.
struct RgbTrace {
    std::vector<double> r, g, b;
    double fps = 0.0;
    std::string subject_id;
    std::vector<BpStamp> bp_labels;

    std::size_t size() const { return r.size(); }
    double duration_s() const { return fps > 0.0 ? static_cast<double>(r.size()) / fps : 0.0; }
};

} // namespace pulsebp
