#pragma once

// Delta trajectories, the 11-statistic column summary, and assembly of
// the five per-segment feature sets:
//   D  mel-compressed spectrum      E  linear-compressed spectrum
//   F  full magnitude spectrum      L  linear cepstra (LFCC)
//   M  mel cepstra (MFCC)

#include "kneeae/cepstral.hpp"
#include "kneeae/common.hpp"
#include "kneeae/parallel.hpp"
#include "kneeae/signal_io.hpp"
#include "kneeae/spectral.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace kneeae {

enum class SetTag { D, E, F, L, M };

inline constexpr std::array<SetTag, 5> all_set_tags{SetTag::D, SetTag::E, SetTag::F, SetTag::L, SetTag::M};

inline char to_char(SetTag t) { return "DEFLM"[static_cast<int>(t)]; }

inline SetTag parse_set_tag(std::string_view s) {
    if (s.size() == 1)
        for (SetTag t : all_set_tags)
            if (to_char(t) == s[0]) return t;
    throw Error(Errc::config, "unknown feature set '" + std::string(s) + "' (expected D, E, F, L or M)");
}

inline constexpr int stat_count = 11;
inline constexpr std::array<const char*, stat_count> stat_names{
    "mean", "kurtosis", "variance", "skewness", "max", "min", "p10", "p25", "p50", "p75", "p90"};

// ---------------------------------------------------------------------------

/// Regression delta with span U and edge replication:
/// d_t = sum_u u (a_{t+u} - a_{t-u}) / (2 sum_u u^2).
inline std::vector<double> delta(std::span<const double> series, int span) {
    if (span < 1) throw Error(Errc::config, "delta span must be >= 1");
    const auto n = static_cast<long>(series.size());
    std::vector<double> out(series.size(), 0.0);
    if (n == 0) return out;
    double denom = 0.0;
    for (int u = 1; u <= span; ++u) denom += static_cast<double>(u) * u;
    denom *= 2.0;
    auto at = [&](long t) { return series[static_cast<std::size_t>(std::clamp(t, 0L, n - 1))]; };
    for (long t = 0; t < n; ++t) {
        double acc = 0.0;
        for (int u = 1; u <= span; ++u) acc += u * (at(t + u) - at(t - u));
        out[static_cast<std::size_t>(t)] = acc / denom;
    }
    return out;
}

/// Column-wise delta of a T_f x N matrix.
inline Matrix delta(const Matrix& m, int span) {
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const Vector col = m.col(c);
        const auto d = delta(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), span);
        out.col(c) = Eigen::Map<const Vector>(d.data(), col.size());
    }
    return out;
}

using Stats11 = std::array<double, stat_count>;

/// Linear interpolation between order statistics at zero-based rank (n-1)p/100.
inline double percentile_sorted(std::span<const double> sorted, double p) {
    const double rank = (static_cast<double>(sorted.size()) - 1.0) * p / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// [mean, kurtosis, variance, skewness, max, min, p10, p25, p50, p75, p90]
/// with population moments; kurtosis is non-excess. Constant columns report
/// zero skewness and kurtosis.
inline Stats11 stats11(std::span<const double> xs) {
    if (xs.size() < 2) throw Error(Errc::insufficient_frames, "statistics need at least 2 frames");
    const auto n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, peak = 0.0;
    for (double x : xs) {
        const double d = x - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        peak = std::max(peak, std::abs(x));
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double tiny = 1e-14 * peak;
    const bool degenerate = m2 <= tiny * tiny;
    if (degenerate) m2 = 0.0;
    const double skew = degenerate ? 0.0 : m3 / std::pow(m2, 1.5);
    const double kurt = degenerate ? 0.0 : m4 / (m2 * m2);

    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    return {mean,
            kurt,
            m2,
            skew,
            sorted.back(),
            sorted.front(),
            percentile_sorted(sorted, 10),
            percentile_sorted(sorted, 25),
            percentile_sorted(sorted, 50),
            percentile_sorted(sorted, 75),
            percentile_sorted(sorted, 90)};
}

/// Statistics of each column of a T_f x N matrix, flattened column-major
/// (11 contiguous values per column).
inline std::vector<double> stats11(const Matrix& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.cols()) * stat_count);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const auto s = stats11(std::span<const double>(m.col(c).data(), static_cast<std::size_t>(m.rows())));
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

// ---------------------------------------------------------------------------

struct FeatureConfig {
    double frame_ms = 48.0;
    int n_bands = 20;
    double segment_s = 20.0;
    int delta_span = 4;
    int delta_delta_span = 1;
    bool f_deltas = false;  // add delta / delta-delta vectors to the F set
    std::vector<SetTag> sets{all_set_tags.begin(), all_set_tags.end()};
};

/// Provenance of one 11-dimensional feature vector.
struct VectorSource {
    int coefficient = 0;  // band, bin or cepstral index
    int order = 0;        // 0 static, 1 delta, 2 delta-delta
    double center_hz = std::numeric_limits<double>::quiet_NaN();  // NaN for cepstra
};

struct FeatureSet {
    SetTag tag = SetTag::M;
    Matrix data;  // segments x (vectors * 11)
    std::vector<VectorSource> vectors;
    std::vector<std::string> knee_ids;
    std::vector<int> segment_index;
    std::vector<Label> labels;
    FeatureConfig config;
    int sample_rate = 0;

    Eigen::Index rows() const { return data.rows(); }
    Eigen::Index vector_count() const { return static_cast<Eigen::Index>(vectors.size()); }

    std::vector<int> label_signs() const {
        std::vector<int> y;
        y.reserve(labels.size());
        for (Label l : labels) y.push_back(sign(l));
        return y;
    }

    /// Columns of the selected feature vectors, concatenated in the given order.
    Matrix columns(std::span<const int> vector_ids) const {
        Matrix out(data.rows(), static_cast<Eigen::Index>(vector_ids.size()) * stat_count);
        for (std::size_t i = 0; i < vector_ids.size(); ++i) {
            const int v = vector_ids[i];
            if (v < 0 || v >= vector_count()) throw Error(Errc::shape, "feature vector index out of range");
            out.middleCols(static_cast<Eigen::Index>(i) * stat_count, stat_count) =
                data.middleCols(static_cast<Eigen::Index>(v) * stat_count, stat_count);
        }
        return out;
    }

    std::string column_name(Eigen::Index col) const {
        const auto& src = vectors[static_cast<std::size_t>(col / stat_count)];
        return std::string(1, to_char(tag)) + ":" + std::to_string(src.coefficient) + ":" +
               std::to_string(src.order) + ":" + stat_names[static_cast<std::size_t>(col % stat_count)];
    }
};

namespace detail {

// Appends statics, then deltas, then delta-deltas of a T_f x N matrix.
inline void append_with_trajectories(std::vector<double>& row, const Matrix& statics, const FeatureConfig& cfg,
                                     bool with_deltas) {
    auto s = stats11(statics);
    row.insert(row.end(), s.begin(), s.end());
    if (!with_deltas) return;
    const Matrix d1 = delta(statics, cfg.delta_span);
    s = stats11(d1);
    row.insert(row.end(), s.begin(), s.end());
    s = stats11(delta(d1, cfg.delta_delta_span));
    row.insert(row.end(), s.begin(), s.end());
}

inline std::vector<VectorSource> sources_for(int count, bool with_deltas, const std::vector<double>& centers) {
    std::vector<VectorSource> out;
    for (int order = 0; order < (with_deltas ? 3 : 1); ++order)
        for (int c = 0; c < count; ++c)
            out.push_back({c, order,
                           centers.empty() ? std::numeric_limits<double>::quiet_NaN()
                                           : centers[static_cast<std::size_t>(c)]});
    return out;
}

}  // namespace detail

inline bool has_deltas(SetTag t, const FeatureConfig& cfg) { return t != SetTag::F || cfg.f_deltas; }

/// Extracts every requested feature set for a list of segments. Rows are
/// ordered by (knee_id, segment index).
inline std::map<SetTag, FeatureSet> build_feature_sets(std::vector<Segment> segments, const FeatureConfig& cfg,
                                                       unsigned jobs = default_jobs()) {
    if (segments.empty()) throw Error(Errc::empty_input, "no segments to parameterise");
    std::stable_sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) {
        return a.knee_id != b.knee_id ? a.knee_id < b.knee_id : a.index < b.index;
    });
    const int fs = segments.front().sample_rate;
    const std::size_t len = segments.front().length;
    for (const auto& s : segments)
        if (s.sample_rate != fs || s.length != len)
            throw Error(Errc::shape, "segments must share sample rate and length");

    const std::size_t ls = frame_samples(cfg.frame_ms, fs);
    if (ls < 2 || ls > len)
        throw Error(Errc::invalid_frame_length, "frame of " + std::to_string(ls) + " samples for segments of " +
                                                    std::to_string(len));
    const std::size_t bins = bin_count(ls);
    const std::size_t frames = (len - ls) / (ls / 2) + 1;
    if (frames < 2) throw Error(Errc::insufficient_frames, "segment yields fewer than 2 frames");

    auto wants = [&](SetTag t) { return std::find(cfg.sets.begin(), cfg.sets.end(), t) != cfg.sets.end(); };
    const bool need_mel = wants(SetTag::D) || wants(SetTag::M);
    const bool need_lin = wants(SetTag::E) || wants(SetTag::L);
    Filterbank mel_fb, lin_fb;
    if (need_mel) mel_fb = make_filterbank(bins, ls, fs, cfg.n_bands, Spacing::mel);
    if (need_lin) lin_fb = make_filterbank(bins, ls, fs, cfg.n_bands, Spacing::linear);

    std::map<SetTag, FeatureSet> sets;
    for (SetTag t : cfg.sets) {
        FeatureSet fsx;
        fsx.tag = t;
        fsx.config = cfg;
        fsx.sample_rate = fs;
        const bool dd = has_deltas(t, cfg);
        switch (t) {
        case SetTag::D: fsx.vectors = detail::sources_for(cfg.n_bands, dd, {mel_fb.edges.begin() + 1, mel_fb.edges.end() - 1}); break;
        case SetTag::E: fsx.vectors = detail::sources_for(cfg.n_bands, dd, {lin_fb.edges.begin() + 1, lin_fb.edges.end() - 1}); break;
        case SetTag::F: {
            std::vector<double> centers(bins);
            for (std::size_t k = 0; k < bins; ++k) centers[k] = static_cast<double>(k) * fs / static_cast<double>(ls);
            fsx.vectors = detail::sources_for(static_cast<int>(bins), dd, centers);
            break;
        }
        case SetTag::L:
        case SetTag::M: fsx.vectors = detail::sources_for(cfg.n_bands, dd, {}); break;
        }
        fsx.data.resize(static_cast<Eigen::Index>(segments.size()), fsx.vector_count() * stat_count);
        for (const auto& s : segments) {
            fsx.knee_ids.push_back(s.knee_id);
            fsx.segment_index.push_back(s.index);
            fsx.labels.push_back(s.label);
        }
        sets.emplace(t, std::move(fsx));
    }

    parallel_for(segments.size(), jobs, [&](std::size_t i) {
        const auto spec = dft_magnitude(enframe(segments[i], cfg.frame_ms));
        Matrix mel, lin;
        if (need_mel) mel = compress(spec, mel_fb);
        if (need_lin) lin = compress(spec, lin_fb);
        for (auto& [tag, fsx] : sets) {
            std::vector<double> row;
            row.reserve(static_cast<std::size_t>(fsx.data.cols()));
            switch (tag) {
            case SetTag::D: detail::append_with_trajectories(row, mel, cfg, true); break;
            case SetTag::E: detail::append_with_trajectories(row, lin, cfg, true); break;
            case SetTag::F: detail::append_with_trajectories(row, Matrix(spec.values), cfg, cfg.f_deltas); break;
            case SetTag::L: detail::append_with_trajectories(row, cepstra(lin, CepstrumFlavor::linear).values, cfg, true); break;
            case SetTag::M: detail::append_with_trajectories(row, cepstra(mel, CepstrumFlavor::mel).values, cfg, true); break;
            }
            fsx.data.row(static_cast<Eigen::Index>(i)) =
                Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
        }
    });
    return sets;
}

// ---------------------------------------------------------------------------
// Persistence: CSV matrix plus JSON sidecar; a binary form for caches.

inline nlohmann::json sidecar_json(const FeatureSet& fs) {
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& v : fs.vectors) {
        nlohmann::json j{{"coefficient", v.coefficient}, {"order", v.order}};
        j["center_hz"] = std::isnan(v.center_hz) ? nlohmann::json(nullptr) : nlohmann::json(v.center_hz);
        vectors.push_back(std::move(j));
    }
    return {{"set", std::string(1, to_char(fs.tag))},
            {"frame_ms", fs.config.frame_ms},
            {"n_bands", fs.config.n_bands},
            {"sample_rate", fs.sample_rate},
            {"segment_s", fs.config.segment_s},
            {"f_deltas", fs.config.f_deltas},
            {"rows", fs.rows()},
            {"vectors", std::move(vectors)}};
}

inline void write_feature_csv(std::ostream& out, const FeatureSet& fs) {
    out.precision(17);
    out << "knee_id,segment,label";
    for (Eigen::Index c = 0; c < fs.data.cols(); ++c) out << ',' << fs.column_name(c);
    out << '\n';
    for (Eigen::Index r = 0; r < fs.rows(); ++r) {
        const auto i = static_cast<std::size_t>(r);
        out << fs.knee_ids[i] << ',' << fs.segment_index[i] << ',' << to_string(fs.labels[i]);
        for (Eigen::Index c = 0; c < fs.data.cols(); ++c) out << ',' << fs.data(r, c);
        out << '\n';
    }
}

inline FeatureSet feature_set_from_sidecar(const nlohmann::json& side) {
    FeatureSet fs;
    fs.tag = parse_set_tag(side.at("set").get<std::string>());
    fs.config.frame_ms = side.at("frame_ms").get<double>();
    fs.config.n_bands = side.at("n_bands").get<int>();
    fs.config.segment_s = side.at("segment_s").get<double>();
    fs.config.f_deltas = side.value("f_deltas", false);
    fs.config.sets = {fs.tag};
    fs.sample_rate = side.at("sample_rate").get<int>();
    for (const auto& v : side.at("vectors")) {
        VectorSource s;
        s.coefficient = v.at("coefficient").get<int>();
        s.order = v.at("order").get<int>();
        if (!v.at("center_hz").is_null()) s.center_hz = v.at("center_hz").get<double>();
        fs.vectors.push_back(s);
    }
    return fs;
}

inline FeatureSet read_feature_csv(std::istream& csv, const nlohmann::json& side) {
    FeatureSet fs = feature_set_from_sidecar(side);
    const auto rows = side.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = fs.vector_count() * stat_count;
    fs.data.resize(rows, cols);
    std::string line;
    if (!std::getline(csv, line)) throw Error(Errc::format, "empty feature CSV");
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (!std::getline(csv, line)) throw Error(Errc::format, "feature CSV has fewer rows than its sidecar");
        const auto f = detail::split_csv_line(line);
        if (static_cast<Eigen::Index>(f.size()) != cols + 3) throw Error(Errc::format, "feature CSV row width");
        fs.knee_ids.push_back(f[0]);
        fs.segment_index.push_back(std::stoi(f[1]));
        fs.labels.push_back(parse_label(f[2]));
        for (Eigen::Index c = 0; c < cols; ++c) fs.data(r, c) = std::stod(f[static_cast<std::size_t>(c) + 3]);
    }
    return fs;
}

/// Binary cache: length-prefixed JSON header followed by raw doubles.
inline void write_feature_binary(std::ostream& out, const FeatureSet& fs) {
    nlohmann::json head = sidecar_json(fs);
    head["knee_ids"] = fs.knee_ids;
    head["segment_index"] = fs.segment_index;
    std::vector<int> y = fs.label_signs();
    head["labels"] = y;
    const std::string text = head.dump();
    const std::uint64_t n = text.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(text.data(), static_cast<std::streamsize>(n));
    out.write(reinterpret_cast<const char*>(fs.data.data()),
              static_cast<std::streamsize>(fs.data.size() * static_cast<Eigen::Index>(sizeof(double))));
}

inline FeatureSet read_feature_binary(std::istream& in) {
    std::uint64_t n = 0;
    if (!in.read(reinterpret_cast<char*>(&n), sizeof n) || n > (1u << 30))
        throw Error(Errc::format, "bad feature cache header");
    std::string text(n, '\0');
    in.read(text.data(), static_cast<std::streamsize>(n));
    const auto head = nlohmann::json::parse(text);
    FeatureSet fs = feature_set_from_sidecar(head);
    fs.knee_ids = head.at("knee_ids").get<std::vector<std::string>>();
    fs.segment_index = head.at("segment_index").get<std::vector<int>>();
    for (int y : head.at("labels").get<std::vector<int>>()) fs.labels.push_back(y > 0 ? Label::abnormal : Label::normal);
    fs.data.resize(head.at("rows").get<Eigen::Index>(), fs.vector_count() * stat_count);
    if (!in.read(reinterpret_cast<char*>(fs.data.data()),
                 static_cast<std::streamsize>(fs.data.size() * static_cast<Eigen::Index>(sizeof(double)))))
        throw Error(Errc::format, "truncated feature cache");
    return fs;
}

}  // namespace kneeae
