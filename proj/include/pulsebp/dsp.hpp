#pragma once

#include "pulsebp/timeseries.hpp"

#include <cstddef>
#include <vector>

namespace pulsebp {

// Band used to condition pulse signals (4th order Butterworth, 0.5-8 Hz).
inline constexpr BandSpec kPulseBand{0.5, 8.0, 4};
// Search band for spectral heart-rate estimation (42-180 bpm).
inline constexpr BandSpec kHrSearchBand{0.7, 3.0, 1};

/// One second-order section, direct form II transposed, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2;
    double a1, a2;
};

/// Butterworth band-pass as cascaded biquads via analog prototype + bilinear
/// transform. band.order is the prototype order (order 4 -> 4 sections).
std::vector<Biquad> design_butter_bandpass(const BandSpec& band, double fs);

/// |H(f)| of the cascade for a single (forward) pass.
double sos_gain(const std::vector<Biquad>& sections, double freq_hz, double fs);

/// Zero-phase band-pass: forward-backward filtering with odd-reflection
/// padding and step-response initial conditions. Same length and fs as input.
TimeSeries bandpass(const TimeSeries& ts, const BandSpec& band);

/// Central differences (one-sided at the edges), scaled by fs per order.
TimeSeries derivative(const TimeSeries& ts, int order);

/// Frequency of the strongest spectral component in search_band, as bpm.
/// Hann window, >=8x zero-padding, parabolic peak refinement.
double estimate_heart_rate(const TimeSeries& ts, const BandSpec& search_band = kHrSearchBand);

/// Endpoint-aligned linear interpolation to exactly target_len samples;
/// fs is rescaled by target_len / source_len.
TimeSeries resample_to_length(const TimeSeries& ts, std::size_t target_len);

/// Harmonic-template SNR: energy within +-0.1 Hz of the fundamental and
/// +-0.2 Hz of the 2nd harmonic vs the rest of the 0.5-8 Hz band, computed on
/// the native-resolution (unpadded, rectangular-window) spectrum.
/// min_duration_s guards the public contract; pipelines that score short
/// windows relax it explicitly.
double snr_db(const TimeSeries& ts, double hr_bpm, double min_duration_s = 5.0);

/// Zero mean, unit variance (population convention).
TimeSeries zscore(const TimeSeries& ts);

namespace detail {
/// Power spectrum |X_k|^2 for k = 0..n/2 at native resolution (no window, no
/// padding; input should already be zero-mean). Exposed for the SNR path.
std::vector<double> power_spectrum_native(const std::vector<double>& x);
} // namespace detail

} // namespace pulsebp
