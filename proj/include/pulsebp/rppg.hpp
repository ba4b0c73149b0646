#pragma once

#include "pulsebp/rppg_types.hpp"
#include "pulsebp/segmentation.hpp"
#include "pulsebp/timeseries.hpp"

#include <utility>
#include <vector>

namespace pulsebp {

/// Plane-orthogonal-to-skin pulse extraction from per-frame RGB means.
/// Sliding 1.6 s window, one-sample hops, overlap-add of the projected,
/// temporally normalized channels. Output has the trace's length and fps; the
/// sign is chosen so systolic upstrokes point up for reflective skin (green
/// dips on the pulse).
TimeSeries pos_extract(const RgbTrace& trace);

/// POS -> band-pass -> ConstBeats{beats} windows resampled to the nominal rate
/// -> z-score -> SNR gate; labels come from the trace's BP stream (nearest
/// entry to the window center, 60 s tolerance).
WindowSet rppg_window_pipeline(const RgbTrace& trace, const GatingRules& rules, int beats = 7);

/// Raw candidate windows for one beat count (band-passed pulse, cut at the
/// record heart rate, resampled; paired with its source-domain slice used for
/// SNR scoring). Exposed so the acceptance sweep can share preprocessing.
struct RppgCandidate {
    TimeSeries window;       // resampled, nominal rate
    TimeSeries source;       // source-domain slice (for SNR)
    double source_offset_s = 0.0;
    double snr_ref_hz = 0.0; // leave-half-out record reference
};
std::vector<RppgCandidate> cut_rppg_windows(const RgbTrace& trace, int beats);

/// Fraction of SNR-acceptable windows per candidate length. Window lists must
/// come from identical preprocessing of the same traces (see cut_rppg_windows).
std::vector<std::pair<int, double>> acceptance_curve(
    const std::vector<std::vector<RppgCandidate>>& windows_per_length,
    const std::vector<int>& lengths, double snr_min_db);

} // namespace pulsebp
