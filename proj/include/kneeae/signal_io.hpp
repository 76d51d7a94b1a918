#pragma once

// Audio ingestion: WAV I/O, corpus manifests, resampling, RMS
// normalisation and fixed-length segmentation.

#include "kneeae/common.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace kneeae {

struct Recording {
    std::vector<double> samples;
    int sample_rate = 0;
    std::string knee_id;
    std::string subject_id;
    Label label = Label::normal;

    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// A Δ-second slice of a recording. Segments of the same recording share
/// one immutable sample buffer.
struct Segment {
    std::shared_ptr<const std::vector<double>> source;
    std::size_t offset = 0;
    std::size_t length = 0;
    int sample_rate = 0;
    std::string knee_id;
    Label label = Label::normal;
    int index = 0;

    std::span<const double> samples() const { return {source->data() + offset, length}; }
};

namespace detail {

inline std::uint32_t read_le(const unsigned char* p, int bytes) {
    std::uint32_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

inline void put_le(std::string& out, std::uint32_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

/// Decodes a RIFF/WAVE byte buffer. PCM 8/16/24/32-bit and IEEE float
/// 32/64-bit are accepted; only channel 0 is kept.
inline Recording decode_wav(std::span<const unsigned char> bytes) {
    using detail::read_le;
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw Error(Errc::format, "not a RIFF/WAVE stream");

    int format = -1, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::size_t size = read_le(chunk + 4, 4);
        const std::size_t avail = bytes.size() - pos - 8;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16 || size > avail) throw Error(Errc::format, "truncated fmt chunk");
            format = static_cast<int>(read_le(chunk + 8, 2));
            channels = static_cast<int>(read_le(chunk + 10, 2));
            rate = read_le(chunk + 12, 4);
            bits = static_cast<int>(read_le(chunk + 22, 2));
            if (format == 0xFFFE) {
                if (size < 40) throw Error(Errc::format, "truncated WAVE_FORMAT_EXTENSIBLE header");
                format = static_cast<int>(read_le(chunk + 32, 2));
            }
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_size = std::min(size, avail);
        }
        pos += 8 + size + (size & 1);
    }
    if (format < 0) throw Error(Errc::format, "missing fmt chunk");
    if (data == nullptr) throw Error(Errc::format, "missing data chunk");
    if (channels < 1 || rate == 0) throw Error(Errc::format, "invalid channel count or sample rate");
    const bool is_pcm = format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
    const bool is_float = format == 3 && (bits == 32 || bits == 64);
    if (!is_pcm && !is_float)
        throw Error(Errc::format, "unsupported sample format " + std::to_string(format) + "/" +
                                      std::to_string(bits) + " bit");

    const int width = bits / 8;
    const std::size_t frame_bytes = static_cast<std::size_t>(width) * channels;
    const std::size_t frames = data_size / frame_bytes;
    if (frames == 0) throw Error(Errc::empty_input, "WAV file has no samples");

    Recording rec;
    rec.sample_rate = static_cast<int>(rate);
    rec.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        const unsigned char* p = data + i * frame_bytes;
        double v = 0.0;
        if (is_float) {
            if (bits == 32) {
                v = std::bit_cast<float>(read_le(p, 4));
            } else {
                const std::uint64_t lo = read_le(p, 4), hi = read_le(p + 4, 4);
                v = std::bit_cast<double>(lo | (hi << 32));
            }
        } else if (bits == 8) {
            v = (static_cast<int>(p[0]) - 128) / 128.0;
        } else {
            const std::uint32_t raw = read_le(p, width);
            const int shift = 32 - bits;
            const auto s = static_cast<std::int32_t>(raw << shift) >> shift;
            v = s / std::ldexp(1.0, bits - 1);
        }
        rec.samples[i] = v;
    }
    return rec;
}

inline Recording load_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_wav(bytes);
}

/// Encodes mono PCM (16 or 24 bit). Samples are clipped to [-1, 1).
inline std::string encode_wav(std::span<const double> samples, int sample_rate, int bits = 16) {
    using detail::put_le;
    if (bits != 16 && bits != 24) throw Error(Errc::config, "WAV writer supports 16 or 24 bit");
    if (sample_rate <= 0) throw Error(Errc::config, "sample rate must be positive");
    const int width = bits / 8;
    const auto data_size = static_cast<std::uint32_t>(samples.size() * width);
    std::string out;
    out.reserve(44 + data_size);
    out += "RIFF";
    put_le(out, 36 + data_size, 4);
    out += "WAVEfmt ";
    put_le(out, 16, 4);
    put_le(out, 1, 2);
    put_le(out, 1, 2);
    put_le(out, static_cast<std::uint32_t>(sample_rate), 4);
    put_le(out, static_cast<std::uint32_t>(sample_rate * width), 4);
    put_le(out, static_cast<std::uint32_t>(width), 2);
    put_le(out, static_cast<std::uint32_t>(bits), 2);
    out += "data";
    put_le(out, data_size, 4);
    const double full = std::ldexp(1.0, bits - 1);
    for (double x : samples) {
        const double q = std::clamp(std::round(x * full), -full, full - 1.0);
        put_le(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(q)), width);
    }
    return out;
}

inline void save_wav(const std::filesystem::path& path, std::span<const double> samples, int sample_rate,
                     int bits = 16) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot write " + path.string());
    const std::string bytes = encode_wav(samples, sample_rate, bits);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Corpus manifest: CSV with header path,knee_id,subject_id,label.

struct ManifestEntry {
    std::filesystem::path path;
    std::string knee_id;
    std::string subject_id;
    Label label = Label::normal;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

}  // namespace detail

/// Relative paths are resolved against the manifest's directory.
inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw Error(Errc::io, "cannot open manifest " + manifest.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::format, "empty manifest");
    const auto header = detail::split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* name : {"path", "knee_id", "subject_id", "label"})
        if (!col.contains(name)) throw Error(Errc::format, std::string("manifest missing column ") + name);

    std::vector<ManifestEntry> entries;
    std::map<std::string, Label> knee_labels;
    const auto base = manifest.parent_path();
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() < header.size()) throw Error(Errc::format, "short manifest row: " + line);
        ManifestEntry e;
        e.path = f[col["path"]];
        if (e.path.is_relative()) e.path = base / e.path;
        e.knee_id = f[col["knee_id"]];
        e.subject_id = f[col["subject_id"]];
        e.label = parse_label(f[col["label"]]);
        auto [it, inserted] = knee_labels.emplace(e.knee_id, e.label);
        if (!inserted && it->second != e.label)
            throw Error(Errc::format, "knee " + e.knee_id + " carries two labels");
        entries.push_back(std::move(e));
    }
    return entries;
}

inline void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(manifest);
    if (!out) throw Error(Errc::io, "cannot write " + manifest.string());
    out << "path,knee_id,subject_id,label\n";
    for (const auto& e : entries)
        out << e.path.generic_string() << ',' << e.knee_id << ',' << e.subject_id << ',' << to_string(e.label)
            << '\n';
}

inline Recording load_entry(const ManifestEntry& e) {
    Recording rec = load_wav(e.path);
    rec.knee_id = e.knee_id;
    rec.subject_id = e.subject_id;
    rec.label = e.label;
    return rec;
}

// ---------------------------------------------------------------------------
// Resampling

struct ResamplerOptions {
    double rolloff = 0.9;     // passband edge as a fraction of the lower Nyquist
    int zero_crossings = 16;  // sinc half-width in lower-rate periods
    double kaiser_beta = 8.6; // about 85 dB stopband
};

namespace detail {

inline double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 64; ++k) {
        term *= q / (static_cast<double>(k) * k);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum;
}

}  // namespace detail

/// Windowed-sinc polyphase resampler for integer rate ratios L/M.
/// Output length is floor(n * target / source); the signal is zero-extended
/// at both ends.
inline Recording resample(const Recording& rec, int target_rate = 16000, ResamplerOptions opt = {}) {
    if (target_rate <= 0) throw Error(Errc::config, "target rate must be positive");
    if (rec.sample_rate <= 0) throw Error(Errc::config, "recording has no sample rate");
    if (rec.sample_rate == target_rate) return rec;

    const long long g = std::gcd(rec.sample_rate, target_rate);
    const long long up = target_rate / g;       // L
    const long long down = rec.sample_rate / g; // M

    // Kernel in input-sample units: cutoff scaled to the lower of the two rates.
    const double scale = std::min(1.0, static_cast<double>(up) / static_cast<double>(down)) * opt.rolloff;
    const double half_width = opt.zero_crossings / scale;
    const long long reach = static_cast<long long>(std::ceil(half_width));
    const double i0_beta = detail::bessel_i0(opt.kaiser_beta);

    auto kernel = [&](double t) {
        const double r = t / half_width;
        if (std::abs(r) >= 1.0) return 0.0;
        const double w = detail::bessel_i0(opt.kaiser_beta * std::sqrt(1.0 - r * r)) / i0_beta;
        const double x = scale * t;
        const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
        return scale * sinc * w;
    };

    // One tap table per phase p = (n*M) mod L; taps cover k = base-reach..base+reach.
    const auto taps_per_phase = static_cast<std::size_t>(2 * reach + 1);
    std::vector<double> taps(static_cast<std::size_t>(up) * taps_per_phase);
    for (long long p = 0; p < up; ++p) {
        const double frac = static_cast<double>(p) / static_cast<double>(up);
        for (long long k = -reach; k <= reach; ++k)
            taps[static_cast<std::size_t>(p) * taps_per_phase + static_cast<std::size_t>(k + reach)] =
                kernel(frac - static_cast<double>(k));
    }

    const auto n_in = static_cast<long long>(rec.samples.size());
    const auto n_out = static_cast<std::size_t>((n_in * up) / down);
    Recording out;
    out.sample_rate = target_rate;
    out.knee_id = rec.knee_id;
    out.subject_id = rec.subject_id;
    out.label = rec.label;
    out.samples.resize(n_out);
    const double* x = rec.samples.data();
    for (std::size_t n = 0; n < n_out; ++n) {
        const long long pos = static_cast<long long>(n) * down;
        const long long base = pos / up;
        const long long phase = pos % up;
        const double* h = taps.data() + static_cast<std::size_t>(phase) * taps_per_phase;
        const long long lo = std::max(base - reach, 0LL);
        const long long hi = std::min(base + reach, n_in - 1);
        double acc = 0.0;
        for (long long k = lo; k <= hi; ++k) acc += x[k] * h[k - base + reach];
        out.samples[n] = acc;
    }
    return out;
}

// ---------------------------------------------------------------------------

inline double rms(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    long double acc = 0.0L;
    for (double x : xs) acc += static_cast<long double>(x) * x;
    return static_cast<double>(std::sqrt(acc / static_cast<long double>(xs.size())));
}

/// Scales each recording to unit RMS.
inline Recording rms_normalize(Recording rec, double level = 1.0) {
    const double r = rms(rec.samples);
    if (!(r > 0.0) || !std::isfinite(r))
        throw Error(Errc::degenerate_signal, "recording " + rec.knee_id + " has zero RMS");
    const double g = level / r;
    for (double& x : rec.samples) x *= g;
    return rec;
}

inline std::vector<Recording> rms_normalize(std::vector<Recording> corpus, double level = 1.0) {
    for (auto& rec : corpus) rec = rms_normalize(std::move(rec), level);
    return corpus;
}

inline std::size_t segment_length(int sample_rate, double seconds) {
    return static_cast<std::size_t>(std::llround(seconds * sample_rate));
}

/// Non-overlapping segments of `seconds`; the trailing remainder is dropped.
inline std::vector<Segment> segment(Recording&& rec, double seconds = 20.0) {
    if (!(seconds > 0.0)) throw Error(Errc::config, "segment length must be positive");
    const std::size_t len = segment_length(rec.sample_rate, seconds);
    if (len == 0) throw Error(Errc::config, "segment length rounds to zero samples");
    const std::size_t count = rec.samples.size() / len;
    auto buffer = std::make_shared<const std::vector<double>>(std::move(rec.samples));
    std::vector<Segment> out;
    out.reserve(count);
    for (std::size_t j = 0; j < count; ++j)
        out.push_back(Segment{buffer, j * len, len, rec.sample_rate, rec.knee_id, rec.label, static_cast<int>(j)});
    return out;
}

inline std::vector<Segment> segment(const Recording& rec, double seconds = 20.0) {
    return segment(Recording(rec), seconds);
}

/// Full ingestion chain: resample to the analysis rate, normalise, segment.
/// Segment indices continue across multiple recordings of the same knee.
inline std::vector<Segment> prepare_corpus(std::vector<Recording> corpus, int analysis_rate = 16000,
                                           double seconds = 20.0, bool normalize = true) {
    std::vector<Segment> out;
    std::map<std::string, int> next_index;
    for (auto& rec : corpus) {
        if (rec.samples.empty()) throw Error(Errc::empty_input, "recording " + rec.knee_id + " is empty");
        Recording r = rec.sample_rate == analysis_rate ? std::move(rec) : resample(rec, analysis_rate);
        if (normalize) r = rms_normalize(std::move(r));
        const std::string knee = r.knee_id;
        auto segs = segment(std::move(r), seconds);
        int& base = next_index[knee];
        for (auto& s : segs) {
            s.index += base;
            out.push_back(std::move(s));
        }
        base += static_cast<int>(segs.size());
    }
    std::stable_sort(out.begin(), out.end(), [](const Segment& a, const Segment& b) {
        return a.knee_id != b.knee_id ? a.knee_id < b.knee_id : a.index < b.index;
    });
    return out;
}

}  // namespace kneeae
