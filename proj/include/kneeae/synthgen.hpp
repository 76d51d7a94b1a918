#pragma once

// Synthetic gait-sound corpora. Each recording is a white noise floor plus
// two damped-sinusoid transients per stride (heel strike, push off).
// Abnormal knees add band-limited noise during the stance phase.

#include "kneeae/common.hpp"
#include "kneeae/rng.hpp"
#include "kneeae/signal_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace kneeae {

struct TransientSpec {
    double center_hz = 1500.0;
    double decay_ms = 8.0;
    double amplitude = 1.0;
};

struct SynthSpec {
    int knees_normal = 10;
    int knees_abnormal = 10;
    double duration_s = 300.0;
    // Optional per-knee durations; when non-empty they override duration_s.
    std::vector<double> durations_normal;
    std::vector<double> durations_abnormal;
    int sample_rate = 16000;
    double stride_s = 1.1;
    double stride_jitter = 0.03;    // fractional, uniform
    double stance_fraction = 0.6;   // push off lands here; band noise fills [0, stance)
    TransientSpec heel_strike{1500.0, 8.0, 1.0};
    TransientSpec push_off{2600.0, 6.0, 0.6};
    double band_center_hz = 300.0;
    double band_width_hz = 100.0;
    double abnormal_gain_db = 12.0;  // band power added on top of the floor's in-band power
    double noise_floor_db = -30.0;   // white floor level relative to unit amplitude
    double knee_jitter_db = 3.0;     // per-knee transient gain spread, uniform +-
    double peak = 0.9;
    std::uint64_t seed = 0;

    double duration(Label l, int i) const {
        const auto& d = l == Label::abnormal ? durations_abnormal : durations_normal;
        return d.empty() ? duration_s : d.at(static_cast<std::size_t>(i));
    }

    int knees(Label l) const { return l == Label::abnormal ? knees_abnormal : knees_normal; }

    void validate() const {
        const double nyq = sample_rate / 2.0;
        auto fail = [](const std::string& m) { throw Error(Errc::config, "synth spec: " + m); };
        if (sample_rate <= 0) fail("sample rate must be positive");
        if (knees_normal < 0 || knees_abnormal < 0) fail("knee counts must be nonnegative");
        if (!durations_normal.empty() && static_cast<int>(durations_normal.size()) != knees_normal)
            fail("durations_normal must list one value per normal knee");
        if (!durations_abnormal.empty() && static_cast<int>(durations_abnormal.size()) != knees_abnormal)
            fail("durations_abnormal must list one value per abnormal knee");
        if (heel_strike.center_hz >= nyq || push_off.center_hz >= nyq ||
            band_center_hz + band_width_hz / 2 >= nyq)
            fail("frequencies must lie below Nyquist");
        if (band_center_hz - band_width_hz / 2 <= 0) fail("band must lie above 0 Hz");
        if (abnormal_gain_db < 0) fail("abnormal gain must be >= 0 dB");
        if (stride_s <= 0 || stride_jitter < 0 || stride_jitter >= 1) fail("invalid stride parameters");
        if (stance_fraction <= 0 || stance_fraction >= 1) fail("stance fraction must lie in (0, 1)");
    }
};

inline void to_json(nlohmann::json& j, const TransientSpec& t) {
    j = {{"center_hz", t.center_hz}, {"decay_ms", t.decay_ms}, {"amplitude", t.amplitude}};
}

inline void from_json(const nlohmann::json& j, TransientSpec& t) {
    t.center_hz = j.value("center_hz", t.center_hz);
    t.decay_ms = j.value("decay_ms", t.decay_ms);
    t.amplitude = j.value("amplitude", t.amplitude);
}

inline void to_json(nlohmann::json& j, const SynthSpec& s) {
    j = {{"knees_normal", s.knees_normal},
         {"knees_abnormal", s.knees_abnormal},
         {"duration_s", s.duration_s},
         {"durations_normal", s.durations_normal},
         {"durations_abnormal", s.durations_abnormal},
         {"sample_rate", s.sample_rate},
         {"stride_s", s.stride_s},
         {"stride_jitter", s.stride_jitter},
         {"stance_fraction", s.stance_fraction},
         {"heel_strike", s.heel_strike},
         {"push_off", s.push_off},
         {"band_center_hz", s.band_center_hz},
         {"band_width_hz", s.band_width_hz},
         {"abnormal_gain_db", s.abnormal_gain_db},
         {"noise_floor_db", s.noise_floor_db},
         {"knee_jitter_db", s.knee_jitter_db},
         {"peak", s.peak},
         {"seed", s.seed}};
}

/// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, SynthSpec& s) {
    s.knees_normal = j.value("knees_normal", s.knees_normal);
    s.knees_abnormal = j.value("knees_abnormal", s.knees_abnormal);
    s.duration_s = j.value("duration_s", s.duration_s);
    s.durations_normal = j.value("durations_normal", s.durations_normal);
    s.durations_abnormal = j.value("durations_abnormal", s.durations_abnormal);
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    s.stride_s = j.value("stride_s", s.stride_s);
    s.stride_jitter = j.value("stride_jitter", s.stride_jitter);
    s.stance_fraction = j.value("stance_fraction", s.stance_fraction);
    s.heel_strike = j.value("heel_strike", s.heel_strike);
    s.push_off = j.value("push_off", s.push_off);
    s.band_center_hz = j.value("band_center_hz", s.band_center_hz);
    s.band_width_hz = j.value("band_width_hz", s.band_width_hz);
    s.abnormal_gain_db = j.value("abnormal_gain_db", s.abnormal_gain_db);
    s.noise_floor_db = j.value("noise_floor_db", s.noise_floor_db);
    s.knee_jitter_db = j.value("knee_jitter_db", s.knee_jitter_db);
    s.peak = j.value("peak", s.peak);
    s.seed = j.value("seed", s.seed);
}

namespace detail {

/// Constant-peak-gain band-pass biquad (direct form I).
struct Biquad {
    double b0, b1, b2, a1, a2;
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

    static Biquad bandpass(double f0, double q, double fs) {
        const double w = 2.0 * std::numbers::pi * f0 / fs;
        const double alpha = std::sin(w) / (2.0 * q);
        const double a0 = 1.0 + alpha;
        return {alpha / a0, 0.0, -alpha / a0, -2.0 * std::cos(w) / a0, (1.0 - alpha) / a0};
    }

    double operator()(double x) {
        const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
        return y;
    }
};

inline std::string knee_name(Label l, int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%c%03d", l == Label::abnormal ? 'A' : 'N', i);
    return buf;
}

}  // namespace detail

inline constexpr int band_sections = 3;

/// One knee's recording. Knee i of class l depends only on (seed, l, i).
inline Recording generate_recording(const SynthSpec& spec, Label label, int knee) {
    spec.validate();
    const double fs = spec.sample_rate;
    const auto n = static_cast<std::size_t>(std::llround(spec.duration(label, knee) * fs));
    Rng rng(derive_seed(spec.seed, {label == Label::abnormal ? 1u : 0u, static_cast<std::uint64_t>(knee)}));

    Recording rec;
    rec.sample_rate = spec.sample_rate;
    rec.label = label;
    rec.knee_id = detail::knee_name(label, knee);
    rec.subject_id = "S" + rec.knee_id.substr(1);
    rec.samples.resize(n);

    const double knee_gain = std::pow(10.0, rng.uniform(-spec.knee_jitter_db, spec.knee_jitter_db) / 20.0);
    const double floor_sigma = std::pow(10.0, spec.noise_floor_db / 20.0);
    for (auto& x : rec.samples) x = floor_sigma * rng.normal();

    // Stride onsets with jitter; the first stride starts at a random phase.
    std::vector<std::pair<double, double>> strides;  // (onset s, period s)
    double t = -rng.uniform() * spec.stride_s;
    const double total = static_cast<double>(n) / fs;
    while (t < total) {
        const double period = spec.stride_s * (1.0 + spec.stride_jitter * rng.uniform(-1.0, 1.0));
        strides.emplace_back(t, period);
        t += period;
    }

    auto add_transient = [&](double onset, const TransientSpec& tr) {
        const double tau = tr.decay_ms / 1000.0;
        const double amp = tr.amplitude * knee_gain;
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const auto first = static_cast<long>(std::ceil(onset * fs));
        const auto last = static_cast<long>(std::ceil((onset + 10.0 * tau) * fs));
        for (long i = std::max(0L, first); i < std::min(last, static_cast<long>(n)); ++i) {
            const double dt = static_cast<double>(i) / fs - onset;
            rec.samples[static_cast<std::size_t>(i)] +=
                amp * std::exp(-dt / tau) * std::sin(2.0 * std::numbers::pi * tr.center_hz * dt + phase);
        }
    };
    for (const auto& [onset, period] : strides) {
        add_transient(onset, spec.heel_strike);
        add_transient(onset + spec.stance_fraction * period, spec.push_off);
    }

    // Band noise is drawn for both classes so that a 0 dB gain leaves the
    // classes identically distributed.
    std::vector<double> band(n);
    std::vector<detail::Biquad> filters;
    for (int s = 0; s < band_sections; ++s)
        filters.push_back(detail::Biquad::bandpass(spec.band_center_hz, spec.band_center_hz / spec.band_width_hz, fs));
    for (auto& b : band) {
        double v = rng.normal();
        for (auto& f : filters) v = f(v);
        b = v;
    }
    if (label == Label::abnormal && spec.abnormal_gain_db > 0 && n > 0) {
        const double band_var = std::max(rms(band), 1e-300);
        const double floor_in_band = floor_sigma * floor_sigma * spec.band_width_hz / (fs / 2.0);
        const double added = (std::pow(10.0, spec.abnormal_gain_db / 10.0) - 1.0) * floor_in_band;
        const double g = std::sqrt(added) / band_var;
        // Raised-cosine gate over the stance phase (10 ms ramps).
        const double ramp = 0.010;
        for (const auto& [onset, period] : strides) {
            const double stop = onset + spec.stance_fraction * period;
            const auto first = static_cast<long>(std::ceil(onset * fs));
            const auto last = static_cast<long>(std::ceil(stop * fs));
            for (long i = std::max(0L, first); i < std::min(last, static_cast<long>(n)); ++i) {
                const double u = static_cast<double>(i) / fs;
                const double edge = std::min(u - onset, stop - u);
                const double gate = edge >= ramp ? 1.0 : 0.5 - 0.5 * std::cos(std::numbers::pi * edge / ramp);
                rec.samples[static_cast<std::size_t>(i)] += g * gate * band[static_cast<std::size_t>(i)];
            }
        }
    }

    double peak = 0.0;
    for (double x : rec.samples) peak = std::max(peak, std::abs(x));
    if (peak > 0)
        for (double& x : rec.samples) x *= spec.peak / peak;
    return rec;
}

/// Whole corpus in memory, normal knees first.
inline std::vector<Recording> generate(const SynthSpec& spec) {
    spec.validate();
    std::vector<Recording> out;
    for (Label l : {Label::normal, Label::abnormal})
        for (int i = 0; i < spec.knees(l); ++i) out.push_back(generate_recording(spec, l, i));
    return out;
}

/// Writes one WAV per knee plus manifest.csv and spec.json into `dir`.
inline std::vector<ManifestEntry> write_corpus(const SynthSpec& spec, const std::filesystem::path& dir,
                                               int bits = 16) {
    spec.validate();
    std::filesystem::create_directories(dir);
    std::vector<ManifestEntry> entries;
    for (Label l : {Label::normal, Label::abnormal})
        for (int i = 0; i < spec.knees(l); ++i) {
            const Recording rec = generate_recording(spec, l, i);
            const std::string file = rec.knee_id + ".wav";
            save_wav(dir / file, rec.samples, rec.sample_rate, bits);
            entries.push_back({file, rec.knee_id, rec.subject_id, l});
        }
    write_manifest(dir / "manifest.csv", entries);
    std::ofstream(dir / "spec.json") << nlohmann::json(spec).dump(2) << '\n';
    return entries;
}

}  // namespace kneeae
