#pragma once

// Framing, Hanning-windowed magnitude DFT, and triangular filterbanks.

#include "kneeae/common.hpp"
#include "kneeae/signal_io.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

namespace kneeae {

struct FrameMatrix {
    RowMatrix values;  // T_f x l_s
    double frame_ms = 0.0;
    std::size_t hop = 0;
    int sample_rate = 0;

    Eigen::Index frames() const { return values.rows(); }
    Eigen::Index frame_length() const { return values.cols(); }
};

struct SpectrogramMatrix {
    RowMatrix values;  // T_f x K, magnitudes
    std::size_t frame_length = 0;
    int sample_rate = 0;

    Eigen::Index bins() const { return values.cols(); }
    double bin_hz() const { return static_cast<double>(sample_rate) / static_cast<double>(frame_length); }
};

enum class Spacing { linear, mel };

struct Filterbank {
    Matrix weights;            // K x N_B
    Spacing spacing = Spacing::linear;
    std::vector<double> edges; // N_B + 2 frequencies in Hz; filter m peaks at edges[m + 1]

    Eigen::Index bands() const { return weights.cols(); }
    double center_hz(Eigen::Index m) const { return edges[static_cast<std::size_t>(m) + 1]; }
};

inline std::size_t frame_samples(double frame_ms, int sample_rate) {
    return static_cast<std::size_t>(std::llround(frame_ms * sample_rate / 1000.0));
}

inline std::size_t bin_count(std::size_t frame_length) { return 1 + frame_length / 2; }

/// 50%-overlapped frames; the trailing partial frame is dropped.
inline FrameMatrix enframe(std::span<const double> samples, int sample_rate, double frame_ms) {
    const std::size_t ls = frame_samples(frame_ms, sample_rate);
    if (ls < 2 || ls > samples.size())
        throw Error(Errc::invalid_frame_length, "frame of " + std::to_string(ls) + " samples for a segment of " +
                                                   std::to_string(samples.size()));
    const std::size_t hop = ls / 2;
    const std::size_t frames = (samples.size() - ls) / hop + 1;
    FrameMatrix fm;
    fm.frame_ms = frame_ms;
    fm.hop = hop;
    fm.sample_rate = sample_rate;
    fm.values.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(ls));
    for (std::size_t t = 0; t < frames; ++t)
        fm.values.row(static_cast<Eigen::Index>(t)) =
            Eigen::Map<const Eigen::RowVectorXd>(samples.data() + t * hop, static_cast<Eigen::Index>(ls));
    return fm;
}

inline FrameMatrix enframe(const Segment& seg, double frame_ms) {
    return enframe(seg.samples(), seg.sample_rate, frame_ms);
}

/// Symmetric Hanning window without zero end points:
/// w(n) = 0.5 (1 - cos(2 pi (n + 1) / (N + 1))), n = 0..N-1.
inline Vector hanning(std::size_t n) {
    Vector w(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        w[static_cast<Eigen::Index>(i)] =
            0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(n + 1)));
    return w;
}

namespace detail {

// One r2c plan per transform length. Planning is serialised; executing a
// plan on caller-owned buffers (fftw_execute_dft_r2c) is thread safe.
class FftPlanCache {
public:
    static FftPlanCache& instance() {
        static FftPlanCache cache;
        return cache;
    }

    fftw_plan r2c(std::size_t n) {
        std::lock_guard lock(mutex_);
        auto it = plans_.find(n);
        if (it != plans_.end()) return it->second;
        auto* in = fftw_alloc_real(n);
        auto* out = fftw_alloc_complex(n / 2 + 1);
        fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(in);
        fftw_free(out);
        plans_.emplace(n, p);
        return p;
    }

    ~FftPlanCache() {
        for (auto& [n, p] : plans_) fftw_destroy_plan(p);
    }

private:
    std::mutex mutex_;
    std::map<std::size_t, fftw_plan> plans_;
};

}  // namespace detail

/// |DFT| of each Hanning-windowed frame, first K = floor(1 + l_s/2) bins.
inline SpectrogramMatrix dft_magnitude(const FrameMatrix& fm) {
    const auto ls = static_cast<std::size_t>(fm.frame_length());
    const std::size_t k = bin_count(ls);
    const Vector w = hanning(ls);
    fftw_plan plan = detail::FftPlanCache::instance().r2c(ls);

    SpectrogramMatrix out;
    out.frame_length = ls;
    out.sample_rate = fm.sample_rate;
    out.values.resize(fm.frames(), static_cast<Eigen::Index>(k));
    std::vector<double> buf(ls);
    std::vector<std::complex<double>> spec(k);
    for (Eigen::Index t = 0; t < fm.frames(); ++t) {
        for (std::size_t n = 0; n < ls; ++n)
            buf[n] = fm.values(t, static_cast<Eigen::Index>(n)) * w[static_cast<Eigen::Index>(n)];
        fftw_execute_dft_r2c(plan, buf.data(), reinterpret_cast<fftw_complex*>(spec.data()));
        for (std::size_t b = 0; b < k; ++b) out.values(t, static_cast<Eigen::Index>(b)) = std::abs(spec[b]);
    }
    return out;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// N_B unit-peak triangles with centres uniformly spaced on the chosen axis
/// over [0, Fs/2]; adjacent filters overlap by half. Column m is evaluated
/// at the bin frequencies k * Fs / l_s.
inline Filterbank make_filterbank(std::size_t bins, std::size_t frame_length, int sample_rate, int n_bands,
                                  Spacing spacing) {
    if (n_bands < 1) throw Error(Errc::config, "filterbank needs at least one band");
    if (bins < static_cast<std::size_t>(n_bands) + 2)
        throw Error(Errc::resolution, std::to_string(bins) + " bins cannot hold " + std::to_string(n_bands) +
                                          " triangular filters");
    const double nyquist = sample_rate / 2.0;
    Filterbank fb;
    fb.spacing = spacing;
    fb.edges.resize(static_cast<std::size_t>(n_bands) + 2);
    const double top = spacing == Spacing::mel ? hz_to_mel(nyquist) : nyquist;
    for (std::size_t i = 0; i < fb.edges.size(); ++i) {
        const double v = top * static_cast<double>(i) / static_cast<double>(n_bands + 1);
        fb.edges[i] = spacing == Spacing::mel ? mel_to_hz(v) : v;
    }
    fb.edges.front() = 0.0;
    fb.edges.back() = nyquist;

    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(frame_length);
    fb.weights = Matrix::Zero(static_cast<Eigen::Index>(bins), n_bands);
    for (int m = 0; m < n_bands; ++m) {
        const double lo = fb.edges[m], mid = fb.edges[m + 1], hi = fb.edges[m + 2];
        bool covered = false;
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            double v = 0.0;
            if (f > lo && f <= mid) v = (f - lo) / (mid - lo);
            else if (f > mid && f < hi) v = (hi - f) / (hi - mid);
            if (v > 0.0) {
                fb.weights(static_cast<Eigen::Index>(k), m) = v;
                covered = true;
            }
        }
        if (!covered)
            throw Error(Errc::resolution, "filter " + std::to_string(m) + " covers no DFT bin at " +
                                              std::to_string(bin_hz) + " Hz resolution");
    }
    return fb;
}

inline Filterbank make_filterbank(const SpectrogramMatrix& spec, int n_bands, Spacing spacing) {
    return make_filterbank(static_cast<std::size_t>(spec.bins()), spec.frame_length, spec.sample_rate, n_bands,
                           spacing);
}

/// Compressed spectrum: spectrogram times filterbank (T_f x N_B).
inline Matrix compress(const SpectrogramMatrix& spec, const Filterbank& fb) {
    if (fb.weights.rows() != spec.bins())
        throw Error(Errc::shape, "filterbank has " + std::to_string(fb.weights.rows()) + " rows, spectrogram " +
                                     std::to_string(spec.bins()) + " bins");
    return spec.values * fb.weights;
}

/// K rows by N_B columns, header carries the centre frequencies.
inline void write_filterbank_csv(std::ostream& out, const Filterbank& fb) {
    out.precision(17);
    out << "bin";
    for (Eigen::Index m = 0; m < fb.bands(); ++m) out << ",f" << m << "_" << fb.center_hz(m);
    out << '\n';
    for (Eigen::Index k = 0; k < fb.weights.rows(); ++k) {
        out << k;
        for (Eigen::Index m = 0; m < fb.bands(); ++m) out << ',' << fb.weights(k, m);
        out << '\n';
    }
}

}  // namespace kneeae
