#pragma once

// Test-only reference implementations, independent of the library's signal
// path. Deliberately naive: correctness over speed.

#include "pulsebp/rng.hpp"
#include "pulsebp/timeseries.hpp"

#include <cmath>
#include <complex>
#include <vector>

namespace oracle {

// Direct DFT magnitude at one (possibly fractional) bin frequency.
inline double dft_mag(const std::vector<double>& x, double freq_hz, double fs) {
    std::complex<double> acc(0.0, 0.0);
    const double w = -2.0 * M_PI * freq_hz / fs;
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += x[i] * std::exp(std::complex<double>(0.0, w * static_cast<double>(i)));
    return std::abs(acc);
}

// Harmonic-template SNR recomputed from scratch on native-resolution bins
// (rectangular window), mirroring the documented definition.
inline double snr_reference(const std::vector<double>& samples, double fs, double hr_bpm) {
    const std::size_t n = samples.size();
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = samples[i] - mean;

    const double f0 = hr_bpm / 60.0;
    const double df = fs / static_cast<double>(n);
    const auto k_near = static_cast<std::size_t>(std::llround(f0 / df));
    double sig = 0.0, rest = 0.0;
    for (std::size_t k = 1; k <= n / 2; ++k) {
        const double f = static_cast<double>(k) * df;
        if (f < 0.5 - 1e-9 || f > 8.0 + 1e-9) continue;
        const double p = dft_mag(x, f, fs);
        const double e = p * p;
        if (std::abs(f - f0) <= 0.1 + 1e-9 || std::abs(f - 2.0 * f0) <= 0.2 + 1e-9 || k == k_near)
            sig += e;
        else
            rest += e;
    }
    return 10.0 * std::log10(std::max(sig, 1e-300) / std::max(rest, 1e-300));
}

inline std::vector<double> sine(double freq_hz, double fs, double duration_s, double amp = 1.0,
                                double phase = 0.0) {
    const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = amp * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) / fs + phase);
    return x;
}

inline std::size_t zero_crossings(const std::vector<double>& x) {
    std::size_t count = 0;
    for (std::size_t i = 1; i < x.size(); ++i)
        if ((x[i - 1] < 0.0 && x[i] >= 0.0) || (x[i - 1] >= 0.0 && x[i] < 0.0)) ++count;
    return count;
}

inline double rms(const std::vector<double>& x, std::size_t skip = 0) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = skip; i + skip < x.size(); ++i) {
        acc += x[i] * x[i];
        ++n;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

} // namespace oracle
