#pragma once

// Resampling, normalization, zero-phase filtering, augmentation and the log-mel frontend.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "ecgcode/error.hpp"
#include "ecgcode/signal_io.hpp"

namespace ecgcode::dsp {

using Signal = std::vector<double>;

/// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// ---------------------------------------------------------------------------
// Resampling (windowed-sinc, polyphase)

namespace detail {

inline double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 64; ++k) {
        term *= q / (static_cast<double>(k) * k);
        sum += term;
        if (term < 1e-17 * sum) break;
    }
    return sum;
}

inline double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

/// Whole-sample symmetric reflection about the edges: x[-i] = x[i], x[N-1+i] = x[N-1-i].
inline std::size_t reflect_index(std::int64_t i, std::int64_t n) {
    if (n == 1) return 0;
    const std::int64_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    if (i >= n) i = period - i;
    return static_cast<std::size_t>(i);
}

} // namespace detail

inline Signal resample(std::span<const double> x, int from_hz, int to_hz) {
    if (from_hz <= 0 || to_hz <= 0) throw ValidationError("resample: rates must be positive");
    if (x.empty()) throw ValidationError("resample: empty signal");
    if (from_hz == to_hz) return Signal(x.begin(), x.end());

    const std::int64_t g = std::gcd(from_hz, to_hz);
    const std::int64_t up = to_hz / g;  // L
    const std::int64_t down = from_hz / g; // M
    const auto n_in = static_cast<std::int64_t>(x.size());
    const auto n_out = static_cast<std::int64_t>(std::llround(static_cast<double>(n_in) * to_hz / from_hz));

    // Cutoff relative to the input Nyquist; slightly inside to leave room for the transition band.
    const double fc = 0.95 * std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
    const auto half = static_cast<std::int64_t>(std::ceil(24.0 / fc));
    const double beta = 8.6;
    const double i0b = detail::bessel_i0(beta);

    // One coefficient bank per output phase p/L.
    std::vector<std::vector<double>> bank(static_cast<std::size_t>(up));
    for (std::int64_t p = 0; p < up; ++p) {
        const double frac = static_cast<double>(p) / static_cast<double>(up);
        auto& c = bank[static_cast<std::size_t>(p)];
        c.resize(static_cast<std::size_t>(2 * half));
        double sum = 0;
        for (std::int64_t j = -half + 1; j <= half; ++j) {
            const double d = frac - static_cast<double>(j);
            const double r = d / static_cast<double>(half);
            const double win = std::abs(r) >= 1.0 ? 0.0 : detail::bessel_i0(beta * std::sqrt(1.0 - r * r)) / i0b;
            const double v = fc * detail::sinc(fc * d) * win;
            c[static_cast<std::size_t>(j + half - 1)] = v;
            sum += v;
        }
        for (double& v : c) v /= sum;
    }

    Signal y(static_cast<std::size_t>(n_out));
    for (std::int64_t n = 0; n < n_out; ++n) {
        const std::int64_t num = n * down;
        const std::int64_t k0 = num / up;
        const auto& c = bank[static_cast<std::size_t>(num % up)];
        double acc = 0;
        for (std::int64_t j = -half + 1; j <= half; ++j)
            acc += c[static_cast<std::size_t>(j + half - 1)] * x[detail::reflect_index(k0 + j, n_in)];
        y[static_cast<std::size_t>(n)] = acc;
    }
    return y;
}

// ---------------------------------------------------------------------------
// z-score

struct ZscoreResult {
    Signal values;
    bool degenerate = false; ///< input had zero variance; values are all zero
};

/// Per-signal standardization with population (1/N) standard deviation.
inline ZscoreResult zscore(std::span<const double> x) {
    if (x.size() < 2) throw ValidationError("zscore: need at least 2 samples");
    const double n = static_cast<double>(x.size());
    double mean = 0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double sd = std::sqrt(var);
    ZscoreResult r;
    r.values.resize(x.size());
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
        std::fill(r.values.begin(), r.values.end(), 0.0);
        r.degenerate = true;
        return r;
    }
    for (std::size_t i = 0; i < x.size(); ++i) r.values[i] = (x[i] - mean) / sd;
    return r;
}

// ---------------------------------------------------------------------------
// Biquad cascades, applied forward-backward

/// Transposed direct form II section, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2, a1, a2;

    double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }

    static Biquad lowpass(double f, double fs, double q = std::numbers::sqrt2 / 2) {
        const double w = 2 * std::numbers::pi * f / fs, cw = std::cos(w), alpha = std::sin(w) / (2 * q);
        const double a0 = 1 + alpha;
        return {(1 - cw) / 2 / a0, (1 - cw) / a0, (1 - cw) / 2 / a0, -2 * cw / a0, (1 - alpha) / a0};
    }
    static Biquad highpass(double f, double fs, double q = std::numbers::sqrt2 / 2) {
        const double w = 2 * std::numbers::pi * f / fs, cw = std::cos(w), alpha = std::sin(w) / (2 * q);
        const double a0 = 1 + alpha;
        return {(1 + cw) / 2 / a0, -(1 + cw) / a0, (1 + cw) / 2 / a0, -2 * cw / a0, (1 - alpha) / a0};
    }
    static Biquad notch(double f, double fs, double q) {
        const double w = 2 * std::numbers::pi * f / fs, cw = std::cos(w), alpha = std::sin(w) / (2 * q);
        const double a0 = 1 + alpha;
        return {1 / a0, -2 * cw / a0, 1 / a0, -2 * cw / a0, (1 - alpha) / a0};
    }
};

namespace detail {

// Section state starts at its steady-state response to a constant x[0], which keeps the pass linear in x.
inline void run_section(const Biquad& s, std::vector<double>& x) {
    if (x.empty()) return;
    const double x0 = x[0];
    const double yss = x0 * s.dc_gain();
    double z2 = s.b2 * x0 - s.a2 * yss;
    double z1 = yss - s.b0 * x0;
    for (double& v : x) {
        const double in = v;
        const double y = s.b0 * in + z1;
        z1 = s.b1 * in - s.a1 * y + z2;
        z2 = s.b2 * in - s.a2 * y;
        v = y;
    }
}

} // namespace detail

/// Zero-phase filtering with odd extension of `padlen` samples at each end.
inline Signal filtfilt(std::span<const double> x, std::span<const Biquad> cascade, std::size_t padlen) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    padlen = std::min(padlen, n - 1);
    std::vector<double> ext;
    ext.reserve(n + 2 * padlen);
    for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2 * x[n - 1] - x[n - 1 - i]);

    for (const auto& s : cascade) detail::run_section(s, ext);
    std::reverse(ext.begin(), ext.end());
    for (const auto& s : cascade) detail::run_section(s, ext);
    std::reverse(ext.begin(), ext.end());
    return Signal(ext.begin() + static_cast<std::ptrdiff_t>(padlen),
                  ext.begin() + static_cast<std::ptrdiff_t>(padlen + n));
}

inline Signal bandpass(std::span<const double> x, double fs, double low_hz, double high_hz) {
    if (!(low_hz > 0) || !(high_hz > low_hz) || !(high_hz < fs / 2))
        throw ValidationError("bandpass: need 0 < low < high < Nyquist");
    const std::array<Biquad, 2> cascade = {Biquad::highpass(low_hz, fs), Biquad::lowpass(high_hz, fs)};
    const auto padlen = static_cast<std::size_t>(std::ceil(3.0 * fs / low_hz));
    return filtfilt(x, cascade, padlen);
}

inline Signal notch(std::span<const double> x, double fs, double center_hz, double q) {
    if (!(center_hz > 0) || !(center_hz < fs / 2)) throw ValidationError("notch: center must lie in (0, Nyquist)");
    if (!(q > 0)) throw ValidationError("notch: q must be positive");
    const std::array<Biquad, 1> cascade = {Biquad::notch(center_hz, fs, q)};
    const auto padlen = static_cast<std::size_t>(std::ceil(3.0 * q * fs / center_hz));
    return filtfilt(x, cascade, padlen);
}

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentConfig {
    double bandpass_prob = 0.5;
    double notch_prob = 0.5;
    double bandpass_low_hz = 0.5;
    double bandpass_high_hz = 40.0;
    double notch_hz = 50.0;
    double notch_q = 30.0;
    std::uint64_t seed = 0;

    void validate(double fs) const {
        if (!(bandpass_prob >= 0 && bandpass_prob <= 1) || !(notch_prob >= 0 && notch_prob <= 1))
            throw ValidationError("augment: probabilities must lie in [0,1]");
        if (!(bandpass_low_hz > 0 && bandpass_low_hz < bandpass_high_hz && bandpass_high_hz < fs / 2))
            throw ValidationError("augment: need 0 < low < high < Nyquist");
        if (!(notch_hz > 0 && notch_hz < fs / 2) || !(notch_q > 0))
            throw ValidationError("augment: bad notch parameters");
    }
};

struct AugmentDraw {
    bool bandpass = false;
    bool notch = false;
};

/// Both Bernoulli draws are always consumed so the stream position does not depend on the outcome.
template <class Rng>
AugmentDraw draw_augment(const AugmentConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    AugmentDraw d;
    d.bandpass = u(rng) < cfg.bandpass_prob;
    d.notch = u(rng) < cfg.notch_prob;
    return d;
}

inline EcgRecord apply_augment(const EcgRecord& record, const AugmentConfig& cfg, AugmentDraw d) {
    if (!d.bandpass && !d.notch) return record;
    const double fs = record.sampling_rate_hz();
    cfg.validate(fs);
    std::vector<std::vector<double>> leads;
    for (std::size_t l = 0; l < record.n_leads(); ++l) {
        Signal s = record.lead_as_double(l);
        if (d.bandpass) s = bandpass(s, fs, cfg.bandpass_low_hz, cfg.bandpass_high_hz);
        if (d.notch) s = notch(s, fs, cfg.notch_hz, cfg.notch_q);
        leads.push_back(std::move(s));
    }
    return make_record(record.id(), record.sampling_rate_hz(), record.leads(), leads, record.meta());
}

/// Bandpass with probability bandpass_prob, then notch with probability notch_prob.
template <class Rng>
EcgRecord augment(const EcgRecord& record, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate(record.sampling_rate_hz());
    return apply_augment(record, cfg, draw_augment(cfg, rng));
}

// ---------------------------------------------------------------------------
// Log-mel spectrogram

enum class Window { Hann };

struct StftConfig {
    std::size_t n_fft = 128;
    std::size_t hop = 50;
    Window window = Window::Hann;
    std::size_t n_mel = 48;
    double f_min_hz = 0.5;
    double f_max_hz = 250.0;

    void validate(double fs) const {
        if (n_fft == 0 || hop == 0 || hop > n_fft) throw ValidationError("stft: need 0 < hop <= n_fft");
        if (n_mel < 1) throw ValidationError("stft: n_mel must be >= 1");
        if (!(f_min_hz >= 0 && f_min_hz < f_max_hz && f_max_hz <= fs / 2))
            throw ValidationError("stft: need 0 <= f_min < f_max <= Nyquist");
    }
    std::size_t n_frames(std::size_t n) const { return (n + hop - 1) / hop; }
};

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// Center frequency of each triangular filter.
inline std::vector<double> mel_centers_hz(const StftConfig& cfg) {
    const double lo = hz_to_mel(cfg.f_min_hz), hi = hz_to_mel(cfg.f_max_hz);
    std::vector<double> c(cfg.n_mel);
    for (std::size_t m = 0; m < cfg.n_mel; ++m)
        c[m] = mel_to_hz(lo + (hi - lo) * static_cast<double>(m + 1) / static_cast<double>(cfg.n_mel + 1));
    return c;
}

/// (n_mel x n_fft/2+1) triangular weights on the HTK mel scale.
inline Matrix mel_filterbank(const StftConfig& cfg, double fs) {
    const std::size_t n_bins = cfg.n_fft / 2 + 1;
    const double lo = hz_to_mel(cfg.f_min_hz), hi = hz_to_mel(cfg.f_max_hz);
    std::vector<double> edges(cfg.n_mel + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mel + 1));
    Matrix fb(cfg.n_mel, n_bins);
    for (std::size_t m = 0; m < cfg.n_mel; ++m) {
        const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * fs / static_cast<double>(cfg.n_fft);
            double w = 0;
            if (f > l && f <= c) w = (f - l) / (c - l);
            else if (f > c && f < r) w = (r - f) / (r - c);
            fb(m, k) = w;
        }
    }
    return fb;
}

namespace detail {

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

/// In-place iterative radix-2 FFT.
inline void fft_pow2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const auto u = a[i + j], v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

} // namespace detail

/// Power spectrum |X_k|^2, k = 0..n/2.
inline std::vector<double> power_spectrum(std::span<const double> frame) {
    const std::size_t n = frame.size();
    std::vector<double> p(n / 2 + 1);
    if (detail::is_pow2(n)) {
        std::vector<std::complex<double>> a(frame.begin(), frame.end());
        detail::fft_pow2(a);
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::norm(a[k]);
    } else {
        for (std::size_t k = 0; k < p.size(); ++k) {
            std::complex<double> acc(0);
            for (std::size_t i = 0; i < n; ++i) {
                const double ang = -2 * std::numbers::pi * static_cast<double>(k * i % n) / static_cast<double>(n);
                acc += frame[i] * std::complex<double>(std::cos(ang), std::sin(ang));
            }
            p[k] = std::norm(acc);
        }
    }
    return p;
}

/// Precomputed window and filterbank for repeated spectrogram calls.
class MelFrontend {
public:
    MelFrontend(StftConfig cfg, double fs) : cfg_(cfg), fs_(fs) {
        cfg_.validate(fs);
        window_.resize(cfg_.n_fft);
        for (std::size_t i = 0; i < cfg_.n_fft; ++i)
            window_[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(cfg_.n_fft));
        fb_ = mel_filterbank(cfg_, fs);
    }

    const StftConfig& config() const { return cfg_; }

    /// log(1 + mel power), shape (n_mel, ceil(N / hop)).
    Matrix operator()(std::span<const double> x) const {
        if (x.size() < cfg_.n_fft) throw ValidationError("mel_spectrogram: signal shorter than n_fft");
        const std::size_t frames = cfg_.n_frames(x.size());
        Matrix out(cfg_.n_mel, frames);
        std::vector<double> buf(cfg_.n_fft);
        for (std::size_t f = 0; f < frames; ++f) {
            const std::size_t start = f * cfg_.hop;
            for (std::size_t i = 0; i < cfg_.n_fft; ++i)
                buf[i] = start + i < x.size() ? x[start + i] * window_[i] : 0.0;
            const auto p = power_spectrum(buf);
            for (std::size_t m = 0; m < cfg_.n_mel; ++m) {
                double e = 0;
                for (std::size_t k = 0; k < p.size(); ++k) e += fb_(m, k) * p[k];
                out(m, f) = std::log1p(e);
            }
        }
        return out;
    }

private:
    StftConfig cfg_;
    double fs_;
    std::vector<double> window_;
    Matrix fb_;
};

inline Matrix mel_spectrogram(std::span<const double> x, double fs, const StftConfig& cfg) {
    return MelFrontend(cfg, fs)(x);
}

/// Leads x mel bins x frames, stored flat in that order.
struct FeatureTensor {
    std::size_t leads = 0;
    std::size_t mel = 0;
    std::size_t frames = 0;
    std::vector<float> values;

    float at(std::size_t l, std::size_t m, std::size_t f) const { return values[(l * mel + m) * frames + f]; }
};

/// z-score each lead, then take its log-mel spectrogram.
inline FeatureTensor compute_features(const EcgRecord& record, const MelFrontend& frontend) {
    FeatureTensor t;
    t.leads = record.n_leads();
    t.mel = frontend.config().n_mel;
    t.frames = frontend.config().n_frames(record.n_samples());
    t.values.reserve(t.leads * t.mel * t.frames);
    for (std::size_t l = 0; l < record.n_leads(); ++l) {
        const auto z = zscore(record.lead_as_double(l));
        const Matrix m = frontend(z.values);
        for (double v : m.data) t.values.push_back(static_cast<float>(v));
    }
    return t;
}

/// Resample every lead to `to_hz`, then crop or zero-pad to `length` samples.
inline EcgRecord conform_record(const EcgRecord& record, int to_hz, std::size_t length) {
    std::vector<std::vector<double>> leads;
    for (std::size_t l = 0; l < record.n_leads(); ++l) {
        Signal s = resample(record.lead_as_double(l), record.sampling_rate_hz(), to_hz);
        s.resize(length, 0.0);
        leads.push_back(std::move(s));
    }
    if (record.sampling_rate_hz() == to_hz && record.n_samples() == length) return record;
    return make_record(record.id(), to_hz, record.leads(), leads, record.meta());
}

/// Map segment sample indices between rates; segments falling outside [0, length) are clipped or dropped.
inline AnnotationSet rescale_annotations(const AnnotationSet& set, int from_hz, int to_hz, std::int64_t length) {
    AnnotationSet out;
    out.record_id = set.record_id;
    const double r = static_cast<double>(to_hz) / from_hz;
    for (auto s : set.segments) {
        s.onset = std::clamp<std::int64_t>(std::llround(s.onset * r), 0, length);
        s.offset = std::clamp<std::int64_t>(std::llround(s.offset * r), 0, length);
        if (s.offset > s.onset) out.segments.push_back(s);
    }
    out.normalize(length);
    return out;
}

} // namespace ecgcode::dsp
