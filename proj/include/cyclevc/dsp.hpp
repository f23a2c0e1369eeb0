#pragma once

// Deterministic signal-processing math: log-mel extraction, DCT-II mel
// cepstra, and mel-cepstral distortion.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "cyclevc/mat.hpp"

namespace cyclevc {

constexpr int kDefaultSampleRate = 22050;
constexpr int kDefaultMelBins = 80;
constexpr int kDefaultWin = 1024;
constexpr int kDefaultHop = 256;
constexpr double kMelFloorEps = 1e-5;

inline double mel_log_floor() { return std::log(kMelFloorEps); }

struct Waveform {
    std::vector<double> samples;  // in [-1, 1]
    int sample_rate_hz = kDefaultSampleRate;
};

struct MelSpectrogram {
    Mat values;  // frames x mel_bins, natural-log scale
    int sample_rate_hz = kDefaultSampleRate;
    int hop_length_samples = kDefaultHop;

    Eigen::Index frames() const { return values.rows(); }
    Eigen::Index mel_bins() const { return values.cols(); }
};

struct MfccSequence {
    Mat values;  // frames x num_coeffs

    Eigen::Index frames() const { return values.rows(); }
    Eigen::Index num_coeffs() const { return values.cols(); }
};

// ---------------------------------------------------------------- mel scale

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Center frequency (Hz) of mel filter b out of mel_bins spanning [0, sr/2].
inline double mel_center_hz(int b, int mel_bins, int sample_rate_hz) {
    const double mel_max = hz_to_mel(sample_rate_hz / 2.0);
    const double step = mel_max / (mel_bins + 1);
    return mel_to_hz(step * (b + 1));
}

// Triangular filters with continuous frequency interpolation, peak 1.
// Returns (mel_bins x n_fft/2+1).
inline Mat mel_filterbank(int mel_bins, int n_fft, int sample_rate_hz) {
    const int n_bins = n_fft / 2 + 1;
    const double mel_max = hz_to_mel(sample_rate_hz / 2.0);
    const double step = mel_max / (mel_bins + 1);

    std::vector<double> pts(mel_bins + 2);
    for (int i = 0; i < mel_bins + 2; ++i) pts[i] = mel_to_hz(step * i);

    Mat fb = Mat::Zero(mel_bins, n_bins);
    for (int m = 0; m < mel_bins; ++m) {
        const double lo = pts[m], c = pts[m + 1], hi = pts[m + 2];
        for (int k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate_hz / n_fft;
            if (f > lo && f < c)
                fb(m, k) = (f - lo) / (c - lo);
            else if (f >= c && f < hi)
                fb(m, k) = (hi - f) / (hi - c);
        }
    }
    return fb;
}

// ---------------------------------------------------------------- FFT

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// ---------------------------------------------------------------- front end

// Log-scaled mel energies; frames = floor((len - win)/hop) + 1, no padding.
inline MelSpectrogram melspectrogram(const Waveform& wave, int mel_bins = kDefaultMelBins,
                                     int hop = kDefaultHop, int win = kDefaultWin) {
    if (static_cast<int>(wave.samples.size()) < win)
        throw std::invalid_argument("input too short");
    if (mel_bins < 1) throw std::invalid_argument("mel_bins must be >= 1");
    if (hop < 1 || hop > win) throw std::invalid_argument("hop must be in [1, win]");

    const std::size_t n_fft = next_pow2(static_cast<std::size_t>(win));
    const int n_bins = static_cast<int>(n_fft) / 2 + 1;
    const Eigen::Index n_frames =
        static_cast<Eigen::Index>((wave.samples.size() - win) / hop) + 1;

    std::vector<double> hann(win);
    for (int i = 0; i < win; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / win);

    const Mat fb = mel_filterbank(mel_bins, static_cast<int>(n_fft), wave.sample_rate_hz);

    MelSpectrogram mel;
    mel.sample_rate_hz = wave.sample_rate_hz;
    mel.hop_length_samples = hop;
    mel.values.resize(n_frames, mel_bins);

    std::vector<std::complex<double>> buf(n_fft);
    Eigen::Matrix<double, Eigen::Dynamic, 1> power(n_bins);
    for (Eigen::Index t = 0; t < n_frames; ++t) {
        const std::size_t off = static_cast<std::size_t>(t) * hop;
        for (std::size_t i = 0; i < n_fft; ++i)
            buf[i] = (i < static_cast<std::size_t>(win))
                         ? std::complex<double>(wave.samples[off + i] * hann[i], 0.0)
                         : std::complex<double>(0.0, 0.0);
        fft_radix2(buf);
        for (int k = 0; k < n_bins; ++k) power(k) = std::norm(buf[k]);
        Eigen::Matrix<double, Eigen::Dynamic, 1> e = fb * power;
        for (int m = 0; m < mel_bins; ++m)
            mel.values(t, m) = std::log(std::max(e(m), kMelFloorEps));
    }
    return mel;
}

// ---------------------------------------------------------------- DCT-II

// C_k = 2 * sum_n S_n cos(pi k (2n+1) / (2N)), k = 0..num_coeffs-1.
// No orthonormal rescaling.
inline Mat dct2_basis(int n, int num_coeffs) {
    Mat d(n, num_coeffs);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < num_coeffs; ++k)
            d(i, k) = 2.0 * std::cos(M_PI * k * (2.0 * i + 1.0) / (2.0 * n));
    return d;
}

inline MfccSequence dct2_mfcc(const MelSpectrogram& mel, int num_coeffs) {
    if (num_coeffs < 1 || num_coeffs > mel.mel_bins())
        throw std::invalid_argument("num_coeffs out of range");
    MfccSequence out;
    out.values = mel.values * dct2_basis(static_cast<int>(mel.mel_bins()), num_coeffs);
    return out;
}

// ---------------------------------------------------------------- MCD

// sqrt(mean over frames of squared Euclidean distance between coefficient
// vectors). The conventional 10*sqrt(2)/ln(10) factor is off by default.
inline double mcd(const MfccSequence& reference, const MfccSequence& synthesized,
                  bool conventional_constant = false) {
    if (reference.frames() != synthesized.frames() ||
        reference.num_coeffs() != synthesized.num_coeffs())
        throw std::invalid_argument("unaligned sequences");
    const Eigen::Index n = reference.frames();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        acc += (reference.values.row(i) - synthesized.values.row(i)).squaredNorm();
    double v = std::sqrt(acc / static_cast<double>(n));
    if (conventional_constant) v *= 10.0 * std::sqrt(2.0) / std::log(10.0);
    return v;
}

}  // namespace cyclevc
