#pragma once

#include <cstddef>
#include <vector>

namespace pulsebp {

/// Uniformly sampled real-valued signal. The carrier for PPG, ABP and rPPG
/// pulse data throughout the library.
struct TimeSeries {
    std::vector<double> samples;
    double fs = 0.0; // Hz

    std::size_t size() const { return samples.size(); }
    double duration_s() const { return fs > 0.0 ? static_cast<double>(samples.size()) / fs : 0.0; }
};

/// Frequency band plus filter order for band-pass design and spectral searches.
struct BandSpec {
    double low_hz = 0.0;
    double high_hz = 0.0;
    int order = 1;
};

/// Throws Error(errc::data / errc::insufficient_length) if the series violates
/// its invariants (fs > 0, finite samples, length >= min_len).
void validate_time_series(const TimeSeries& ts, std::size_t min_len = 2);

} // namespace pulsebp
