#include "pulsebp/dsp.hpp"
#include "pulsebp/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>

namespace pulsebp {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative radix-2 FFT, in place. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (n < 2) return w;
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1)));
    return w;
}

void check_band(const BandSpec& band, double fs) {
    if (!(band.low_hz > 0.0) || !(band.high_hz > band.low_hz) || !(band.high_hz < fs / 2.0))
        throw Error(errc::invalid_band,
                    "band [" + std::to_string(band.low_hz) + ", " + std::to_string(band.high_hz) +
                        "] Hz invalid for fs " + std::to_string(fs));
    if (band.order < 1) throw Error(errc::invalid_band, "filter order must be >= 1");
}

// One biquad over a signal, direct form II transposed, with initial state
// scaled to the steady-state step response of x0 (kills start-up transients
// for signals with a DC-like start).
void biquad_filter(const Biquad& s, std::vector<double>& x) {
    const double denom = 1.0 + s.a1 + s.a2;
    const double h1 = denom != 0.0 ? (s.b0 + s.b1 + s.b2) / denom : 0.0;
    const double x0 = x.empty() ? 0.0 : x.front();
    double z2 = (s.b2 - s.a2 * h1) * x0;
    double z1 = (s.b1 - s.a1 * h1) * x0 + z2;
    for (double& v : x) {
        const double in = v;
        const double out = s.b0 * in + z1;
        z1 = s.b1 * in - s.a1 * out + z2;
        z2 = s.b2 * in - s.a2 * out;
        v = out;
    }
}

void sosfilt(const std::vector<Biquad>& sections, std::vector<double>& x) {
    for (const Biquad& s : sections) biquad_filter(s, x);
}

} // namespace

void validate_time_series(const TimeSeries& ts, std::size_t min_len) {
    if (!(ts.fs > 0.0)) throw Error(errc::data, "sampling rate must be positive");
    if (ts.samples.size() < std::max<std::size_t>(min_len, 2))
        throw Error(errc::insufficient_length,
                    "signal has " + std::to_string(ts.samples.size()) + " samples, need >= " +
                        std::to_string(std::max<std::size_t>(min_len, 2)));
    for (double v : ts.samples)
        if (!std::isfinite(v)) throw Error(errc::data, "non-finite sample in signal");
}

std::vector<Biquad> design_butter_bandpass(const BandSpec& band, double fs) {
    check_band(band, fs);
    const int n = band.order;
    using cplx = std::complex<double>;

    // Pre-warped analog edges, geometric center and width.
    const double w1 = 2.0 * fs * std::tan(kPi * band.low_hz / fs);
    const double w2 = 2.0 * fs * std::tan(kPi * band.high_hz / fs);
    const double w0 = std::sqrt(w1 * w2);
    const double bw = w2 - w1;

    // Low-pass prototype poles on the unit circle's left half.
    std::vector<cplx> proto;
    for (int k = 0; k < n; ++k) {
        const double theta = kPi * (2.0 * k + 1.0) / (2.0 * n) + kPi / 2.0;
        proto.emplace_back(std::cos(theta), std::sin(theta));
    }

    // Band-pass transform: each prototype pole yields two analog poles.
    // Collect conjugate pairs as sections.
    std::vector<std::pair<cplx, cplx>> pole_pairs;
    for (const cplx& p : proto) {
        if (p.imag() < -1e-12) continue; // conjugates handled together
        const cplx q = p * (bw / 2.0);
        const cplx disc = std::sqrt(q * q - cplx(w0 * w0, 0.0));
        const cplx sa = q + disc;
        const cplx sb = q - disc;
        if (p.imag() > 1e-12) {
            pole_pairs.emplace_back(sa, std::conj(sa));
            pole_pairs.emplace_back(sb, std::conj(sb));
        } else {
            pole_pairs.emplace_back(sa, sb); // real prototype pole -> conjugate analog pair
        }
    }

    // Bilinear transform; band-pass zeros land at z = +1 and z = -1, one pair
    // per section: b = {1, 0, -1}.
    std::vector<Biquad> sections;
    const double two_fs = 2.0 * fs;
    for (const auto& [s1, s2] : pole_pairs) {
        const cplx z1 = (two_fs + s1) / (two_fs - s1);
        const cplx z2 = (two_fs + s2) / (two_fs - s2);
        Biquad s{1.0, 0.0, -1.0, -(z1 + z2).real(), (z1 * z2).real()};
        sections.push_back(s);
    }

    // Normalize to unit gain at the (digital) center frequency, spreading the
    // factor evenly so coefficients stay well scaled.
    const double f_center = std::atan(w0 / two_fs) * fs / kPi;
    const double g = sos_gain(sections, f_center, fs);
    if (!(g > 0.0)) throw Error(errc::invalid_band, "degenerate band-pass design");
    const double per_section = std::pow(1.0 / g, 1.0 / static_cast<double>(sections.size()));
    for (Biquad& s : sections) {
        s.b0 *= per_section;
        s.b1 *= per_section;
        s.b2 *= per_section;
    }
    return sections;
}

double sos_gain(const std::vector<Biquad>& sections, double freq_hz, double fs) {
    using cplx = std::complex<double>;
    const double w = 2.0 * kPi * freq_hz / fs;
    const cplx z_inv = std::exp(cplx(0.0, -w));
    cplx h(1.0, 0.0);
    for (const Biquad& s : sections) {
        const cplx num = cplx(s.b0) + cplx(s.b1) * z_inv + cplx(s.b2) * z_inv * z_inv;
        const cplx den = cplx(1.0) + cplx(s.a1) * z_inv + cplx(s.a2) * z_inv * z_inv;
        h *= num / den;
    }
    return std::abs(h);
}

TimeSeries bandpass(const TimeSeries& ts, const BandSpec& band) {
    validate_time_series(ts);
    check_band(band, ts.fs);
    const std::size_t n = ts.samples.size();
    if (n < static_cast<std::size_t>(3 * band.order))
        throw Error(errc::insufficient_length, "signal shorter than 3x filter order");

    const std::vector<Biquad> sections = design_butter_bandpass(band, ts.fs);

    // Odd-reflection padding, three periods of the low cut-off (capped by the
    // signal itself) so the low-frequency transient settles off-record.
    const std::size_t want = static_cast<std::size_t>(std::lround(3.0 * ts.fs / band.low_hz));
    const std::size_t pad = std::min(n - 1, std::max<std::size_t>(want, static_cast<std::size_t>(12)));

    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    const double first = ts.samples.front();
    const double last = ts.samples.back();
    for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * first - ts.samples[pad - i]);
    ext.insert(ext.end(), ts.samples.begin(), ts.samples.end());
    for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * last - ts.samples[n - 2 - i]);

    sosfilt(sections, ext);
    std::reverse(ext.begin(), ext.end());
    sosfilt(sections, ext);
    std::reverse(ext.begin(), ext.end());

    TimeSeries out;
    out.fs = ts.fs;
    out.samples.assign(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                       ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
    return out;
}

TimeSeries derivative(const TimeSeries& ts, int order) {
    if (order != 1 && order != 2)
        throw Error(errc::unsupported_order, "derivative order must be 1 or 2");
    validate_time_series(ts, static_cast<std::size_t>(order) + 1);
    const std::vector<double>& x = ts.samples;
    const std::size_t n = x.size();
    TimeSeries out;
    out.fs = ts.fs;
    out.samples.resize(n);
    if (order == 1) {
        const double s = ts.fs;
        out.samples[0] = (x[1] - x[0]) * s;
        for (std::size_t i = 1; i + 1 < n; ++i) out.samples[i] = (x[i + 1] - x[i - 1]) * 0.5 * s;
        out.samples[n - 1] = (x[n - 1] - x[n - 2]) * s;
    } else {
        const double s2 = ts.fs * ts.fs;
        for (std::size_t i = 1; i + 1 < n; ++i)
            out.samples[i] = (x[i + 1] - 2.0 * x[i] + x[i - 1]) * s2;
        out.samples[0] = out.samples[1];
        out.samples[n - 1] = out.samples[n - 2];
    }
    return out;
}

double estimate_heart_rate(const TimeSeries& ts, const BandSpec& search_band) {
    validate_time_series(ts, 4);
    if (!(search_band.low_hz > 0.0) || !(search_band.high_hz > search_band.low_hz) ||
        !(search_band.high_hz < ts.fs / 2.0))
        throw Error(errc::invalid_band, "heart-rate search band invalid for fs");
    if (ts.duration_s() < 2.0 / search_band.low_hz)
        throw Error(errc::insufficient_length,
                    "need at least two periods at the low band edge to estimate heart rate");

    const std::size_t n = ts.samples.size();
    const double mean = std::accumulate(ts.samples.begin(), ts.samples.end(), 0.0) / static_cast<double>(n);
    const std::vector<double> w = hann_window(n);

    const std::size_t nfft = next_pow2(8 * n);
    std::vector<std::complex<double>> buf(nfft, {0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) buf[i] = (ts.samples[i] - mean) * w[i];
    fft_inplace(buf);

    const double df = ts.fs / static_cast<double>(nfft);
    const std::size_t k_lo = static_cast<std::size_t>(std::ceil(search_band.low_hz / df));
    const std::size_t k_hi = std::min<std::size_t>(static_cast<std::size_t>(std::floor(search_band.high_hz / df)), nfft / 2);
    if (k_lo >= k_hi) throw Error(errc::invalid_band, "search band narrower than spectral resolution");

    std::size_t k_max = k_lo;
    double m_max = -1.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
        const double m = std::abs(buf[k]);
        if (m > m_max) {
            m_max = m;
            k_max = k;
        }
    }
    if (!(m_max > 1e-12 * static_cast<double>(n)))
        throw Error(errc::no_dominant_component, "no dominant spectral component in search band");

    // Parabolic refinement on the magnitude spectrum.
    double delta = 0.0;
    if (k_max > 0 && k_max < nfft / 2) {
        const double m_l = std::abs(buf[k_max - 1]);
        const double m_r = std::abs(buf[k_max + 1]);
        const double denom = m_l - 2.0 * m_max + m_r;
        if (denom != 0.0) delta = std::clamp(0.5 * (m_l - m_r) / denom, -0.5, 0.5);
    }
    const double f = std::clamp((static_cast<double>(k_max) + delta) * df, search_band.low_hz, search_band.high_hz);
    return 60.0 * f;
}

TimeSeries resample_to_length(const TimeSeries& ts, std::size_t target_len) {
    validate_time_series(ts);
    if (target_len < 2) throw Error(errc::invalid_spec, "target length must be >= 2");
    const std::size_t n = ts.samples.size();
    TimeSeries out;
    out.fs = ts.fs * static_cast<double>(target_len) / static_cast<double>(n);
    if (target_len == n) {
        out.samples = ts.samples;
        out.fs = ts.fs;
        return out;
    }
    out.samples.resize(target_len);
    const double scale = static_cast<double>(n - 1) / static_cast<double>(target_len - 1);
    for (std::size_t j = 0; j < target_len; ++j) {
        const double pos = static_cast<double>(j) * scale;
        std::size_t i = static_cast<std::size_t>(pos);
        if (i >= n - 1) i = n - 2;
        const double frac = pos - static_cast<double>(i);
        out.samples[j] = ts.samples[i] + frac * (ts.samples[i + 1] - ts.samples[i]);
    }
    return out;
}

namespace detail {

std::vector<double> power_spectrum_native(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<double> p(n / 2 + 1, 0.0);
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double ang = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
        const std::complex<double> wk(std::cos(ang), std::sin(ang));
        std::complex<double> rot(1.0, 0.0);
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            acc += x[i] * rot;
            rot *= wk;
        }
        p[k] = std::norm(acc);
    }
    return p;
}

} // namespace detail

double snr_db(const TimeSeries& ts, double hr_bpm, double min_duration_s) {
    validate_time_series(ts);
    if (!(hr_bpm >= 30.0 && hr_bpm <= 240.0))
        throw Error(errc::data, "reference heart rate outside [30, 240] bpm");
    if (ts.duration_s() < min_duration_s - 1e-9)
        throw Error(errc::insufficient_length, "signal too short for SNR estimate");

    const std::size_t n = ts.samples.size();
    const double mean = std::accumulate(ts.samples.begin(), ts.samples.end(), 0.0) / static_cast<double>(n);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = ts.samples[i] - mean;

    const double f0 = hr_bpm / 60.0;
    const double df = ts.fs / static_cast<double>(n);
    const std::size_t k_lo = static_cast<std::size_t>(std::ceil(0.5 / df - 1e-9));
    const std::size_t k_hi = std::min<std::size_t>(static_cast<std::size_t>(std::floor(8.0 / df + 1e-9)), n / 2);
    if (k_lo > k_hi) throw Error(errc::undefined_snr, "analysis band empty at this resolution");

    // Direct DFT over the 0.5-8 Hz bins only (native resolution keeps a
    // beat-aligned fundamental on an exact bin).
    const std::size_t k_near = static_cast<std::size_t>(std::llround(f0 / df));
    double sig = 0.0, rest = 0.0, total = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
        const double ang = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
        const std::complex<double> wk(std::cos(ang), std::sin(ang));
        std::complex<double> rot(1.0, 0.0);
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            acc += x[i] * rot;
            rot *= wk;
        }
        const double p = std::norm(acc);
        const double f = static_cast<double>(k) * df;
        const bool in_template = std::abs(f - f0) <= 0.1 + 1e-9 ||
                                 std::abs(f - 2.0 * f0) <= 0.2 + 1e-9 ||
                                 k == k_near;
        total += p;
        if (in_template)
            sig += p;
        else
            rest += p;
    }
    if (!(total > 0.0)) throw Error(errc::undefined_snr, "zero in-band energy");
    if (rest <= total * 1e-12) return 120.0; // everything inside the template
    return 10.0 * std::log10(std::max(sig, 1e-300) / rest);
}

TimeSeries zscore(const TimeSeries& ts) {
    validate_time_series(ts);
    const std::size_t n = ts.samples.size();
    const double mean = std::accumulate(ts.samples.begin(), ts.samples.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : ts.samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    double scale_ref = 0.0;
    for (double v : ts.samples) scale_ref = std::max(scale_ref, std::abs(v));
    if (!(sd > 1e-12 * std::max(1.0, scale_ref)))
        throw Error(errc::zero_variance, "constant signal cannot be z-scored");
    TimeSeries out;
    out.fs = ts.fs;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = (ts.samples[i] - mean) / sd;
    return out;
}

} // namespace pulsebp
