#pragma once

// End-to-end experiments: corpus loading, the extract -> score -> select
// -> evaluate pipeline at one (l, N_B) configuration, on-disk feature
// caching and the four parameter sweeps.

#include "kneeae/features.hpp"
#include "kneeae/selection.hpp"
#include "kneeae/signal_io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace kneeae {

// ---------------------------------------------------------------------------
// Corpus

struct Corpus {
    std::vector<Segment> segments;
    std::uint64_t hash = 0;
};

namespace detail {

struct Fnv1a {
    std::uint64_t h = 0xcbf29ce484222325ULL;

    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= c[i];
            h *= 0x100000001b3ULL;
        }
    }
    void str(const std::string& s) {
        bytes(s.data(), s.size());
        bytes("\0", 1);
    }
    template <typename T>
    void pod(const T& v) { bytes(&v, sizeof v); }
};

}  // namespace detail

/// FNV-1a over segment identity and samples.
inline std::uint64_t corpus_hash(std::span<const Segment> segments) {
    detail::Fnv1a f;
    for (const auto& s : segments) {
        f.str(s.knee_id);
        f.pod(sign(s.label));
        f.pod(s.index);
        f.pod(s.sample_rate);
        const auto xs = s.samples();
        f.bytes(xs.data(), xs.size_bytes());
    }
    return f.h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline Corpus make_corpus(std::vector<Recording> recordings, double segment_s = 20.0, int analysis_rate = 16000) {
    Corpus c;
    c.segments = prepare_corpus(std::move(recordings), analysis_rate, segment_s);
    if (c.segments.empty()) throw Error(Errc::empty_input, "corpus yields no segments");
    c.hash = corpus_hash(c.segments);
    return c;
}

inline Corpus load_corpus(const std::filesystem::path& manifest, double segment_s = 20.0,
                          int analysis_rate = 16000) {
    std::vector<Recording> recs;
    for (const auto& e : read_manifest(manifest)) recs.push_back(load_entry(e));
    return make_corpus(std::move(recs), segment_s, analysis_rate);
}

// ---------------------------------------------------------------------------
// Feature cache keyed by (corpus hash, l, N_B, extraction options)

class FeatureCache {
public:
    FeatureCache() = default;
    explicit FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    bool enabled() const { return !dir_.empty(); }

    std::filesystem::path path(std::uint64_t hash, const FeatureConfig& cfg, SetTag tag) const {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s_l%.6g_nb%d_seg%.6g_d%d-%d_fd%d_%c.bin", hex64(hash).c_str(), cfg.frame_ms,
                      cfg.n_bands, cfg.segment_s, cfg.delta_span, cfg.delta_delta_span, cfg.f_deltas ? 1 : 0,
                      to_char(tag));
        return dir_ / buf;
    }

    std::optional<FeatureSet> load(std::uint64_t hash, const FeatureConfig& cfg, SetTag tag) const {
        if (!enabled()) return std::nullopt;
        const auto p = path(hash, cfg, tag);
        std::ifstream in(p, std::ios::binary);
        if (!in) return std::nullopt;
        try {
            FeatureSet fs = read_feature_binary(in);
            fs.config = cfg;
            return fs;
        } catch (const Error&) {
            return std::nullopt;  // stale or truncated entry: rebuild
        }
    }

    void store(std::uint64_t hash, const FeatureConfig& cfg, const FeatureSet& fs) const {
        if (!enabled()) return;
        std::filesystem::create_directories(dir_);
        const auto p = path(hash, cfg, fs.tag);
        const auto tmp = p.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out) throw Error(Errc::io, "cannot write cache file " + tmp);
            write_feature_binary(out, fs);
        }
        std::filesystem::rename(tmp, p);
    }

private:
    std::filesystem::path dir_;
};

/// Feature sets for one configuration. Sets whose extraction fails for
/// resolution reasons are reported in `skipped` instead of aborting.
struct ExtractionResult {
    std::map<SetTag, FeatureSet> sets;
    std::map<SetTag, std::string> skipped;
};

inline ExtractionResult extract(const Corpus& corpus, FeatureConfig cfg, const FeatureCache& cache = {},
                                unsigned jobs = 1) {
    ExtractionResult out;
    std::vector<SetTag> missing;
    for (SetTag t : cfg.sets) {
        if (auto fs = cache.load(corpus.hash, cfg, t)) out.sets.emplace(t, std::move(*fs));
        else missing.push_back(t);
    }
    if (missing.empty()) return out;

    auto build = [&](const std::vector<SetTag>& tags) {
        FeatureConfig c = cfg;
        c.sets = tags;
        auto built = build_feature_sets(corpus.segments, c, jobs);
        for (auto& [t, fs] : built) {
            fs.config = cfg;
            cache.store(corpus.hash, cfg, fs);
            out.sets.insert_or_assign(t, std::move(fs));
        }
    };
    try {
        build(missing);
    } catch (const Error& e) {
        if (e.code() != Errc::resolution) throw;
        for (SetTag t : missing) {
            try {
                build({t});
            } catch (const Error& inner) {
                if (inner.code() != Errc::resolution) throw;
                out.skipped.emplace(t, inner.what());
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline at one configuration

struct ExperimentConfig {
    CvProtocol cv;
    FeatureConfig features;
    std::vector<ClassifierKind> classifiers{ClassifierKind::svm_linear};
    double theta_er = 0.456;
    double step = 0.05;
    unsigned jobs = 1;
};

struct SetResult {
    SetTag set = SetTag::M;
    ClassifierKind classifier = ClassifierKind::svm_linear;
    double frame_ms = 0.0;
    int n_bands = 0;
    bool skipped = false;
    std::string reason;
    std::vector<FeatureScore> scores;
    SelectionOutcome selection;
};

struct PointReport {
    FeatureConfig features;
    std::vector<SetResult> results;
    std::map<SetTag, FeatureSet> feature_sets;  // kept for provenance in JSON
};

inline CvPlan plan_for(const FeatureSet& fs, const CvProtocol& cv) {
    return make_plan(fs.knee_ids, fs.label_signs(), cv);
}

/// Full scoring, subset construction and selection for every requested set
/// and classifier at the configuration in cfg.features. Feature scores use
/// the linear SVM regardless of the evaluating classifier, so they are
/// shared across classifiers.
inline PointReport evaluate_point(const Corpus& corpus, const ExperimentConfig& cfg, const FeatureCache& cache = {}) {
    PointReport rep;
    rep.features = cfg.features;
    auto ex = extract(corpus, cfg.features, cache, cfg.jobs);
    std::optional<CvPlan> plan;
    for (SetTag t : cfg.features.sets) {
        if (auto it = ex.skipped.find(t); it != ex.skipped.end()) {
            for (auto k : cfg.classifiers) {
                SetResult r;
                r.set = t;
                r.classifier = k;
                r.frame_ms = cfg.features.frame_ms;
                r.n_bands = cfg.features.n_bands;
                r.skipped = true;
                r.reason = it->second;
                rep.results.push_back(std::move(r));
            }
            continue;
        }
        const FeatureSet& fs = ex.sets.at(t);
        if (!plan) plan = plan_for(fs, cfg.cv);
        const auto scores = score_features(fs, *plan, cfg.jobs);
        auto subsets = build_subsets(scores, cfg.theta_er, cfg.step);
        const bool fallback = subsets.empty();
        if (fallback) subsets.push_back(fallback_subset(scores));
        for (auto k : cfg.classifiers) {
            SetResult r;
            r.set = t;
            r.classifier = k;
            r.frame_ms = cfg.features.frame_ms;
            r.n_bands = cfg.features.n_bands;
            r.scores = scores;
            r.selection = select_best(subsets, fs, *plan, k, cfg.jobs);
            r.selection.fallback = fallback;
            rep.results.push_back(std::move(r));
        }
    }
    rep.feature_sets = std::move(ex.sets);
    return rep;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepKind { framelen, local_search, monte_carlo, nbands };

inline std::string_view to_string(SweepKind k) {
    switch (k) {
    case SweepKind::framelen: return "framelen";
    case SweepKind::local_search: return "local-search";
    case SweepKind::monte_carlo: return "monte-carlo";
    case SweepKind::nbands: return "nbands";
    }
    return "unknown";
}

inline SweepKind parse_sweep_kind(std::string_view s) {
    for (auto k : {SweepKind::framelen, SweepKind::local_search, SweepKind::monte_carlo, SweepKind::nbands})
        if (to_string(k) == s) return k;
    if (s == "local_search") return SweepKind::local_search;
    if (s == "monte_carlo") return SweepKind::monte_carlo;
    throw Error(Errc::config, "unknown sweep kind '" + std::string(s) + "'");
}

/// Frame lengths that scored best per set with the linear SVM (ms).
inline std::map<SetTag, double> reference_frame_ms() {
    return {{SetTag::M, 49.0}, {SetTag::L, 20.0}, {SetTag::F, 23.0}, {SetTag::E, 90.0}, {SetTag::D, 21.0}};
}

inline std::vector<double> framelen_grid(double lo = 20.0, double hi = 100.0, double step = 4.0) {
    std::vector<double> g;
    for (int i = 0; lo + i * step <= hi + 1e-9; ++i) g.push_back(lo + i * step);
    return g;
}

/// Offsets -3..+3 ms around a centre, centre excluded.
inline std::vector<double> local_grid(double center, int reach = 3, double step = 1.0) {
    std::vector<double> g;
    for (int t = -reach; t <= reach; ++t)
        if (t != 0) g.push_back(center + t * step);
    return g;
}

/// `draws` distinct integer frame lengths, uniform over [lo, hi] minus
/// [ex_lo, ex_hi], in ascending order.
inline std::vector<double> monte_carlo_grid(std::uint64_t seed, int draws = 20, int lo = 2, int hi = 700,
                                            int ex_lo = 20, int ex_hi = 100) {
    std::vector<int> pool;
    for (int v = lo; v <= hi; ++v)
        if (v < ex_lo || v > ex_hi) pool.push_back(v);
    if (draws > static_cast<int>(pool.size())) throw Error(Errc::config, "more Monte Carlo draws than candidates");
    Rng rng(seed);
    // Partial Fisher-Yates: the first `draws` slots are a uniform sample.
    for (int i = 0; i < draws; ++i) {
        const auto j = i + static_cast<int>(rng.below(pool.size() - static_cast<std::size_t>(i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    std::vector<double> g(pool.begin(), pool.begin() + draws);
    std::sort(g.begin(), g.end());
    return g;
}

inline std::vector<double> nbands_grid(int lo = 10, int hi = 75, int step = 5) {
    std::vector<double> g;
    for (int v = lo; v <= hi; v += step) g.push_back(v);
    return g;
}

struct SweepConfig {
    SweepKind kind = SweepKind::framelen;
    std::vector<double> grid;                 // empty: the kind's default grid
    std::map<SetTag, double> center_ms;       // local_search centres and nbands frame lengths
    int draws = 20;                           // Monte Carlo draw count
};

/// One evaluated configuration of a sweep.
struct SweepPoint {
    double value = 0.0;  // frame length (ms) or band count
    PointReport report;
};

inline std::vector<double> default_grid(const SweepConfig& sc, std::uint64_t seed) {
    if (!sc.grid.empty()) return sc.grid;
    switch (sc.kind) {
    case SweepKind::framelen: return framelen_grid();
    case SweepKind::monte_carlo: return monte_carlo_grid(derive_seed(seed, {0x6d63}), sc.draws);
    case SweepKind::nbands: return nbands_grid();
    case SweepKind::local_search: return local_grid(0.0);  // offsets; centres come per set
    }
    return {};
}

/// Runs a sweep. framelen and monte_carlo vary l at fixed N_B; nbands
/// varies N_B with l fixed per set; local_search visits per-set offsets
/// around each set's centre. Points come back in grid order.
inline std::vector<SweepPoint> run_sweep(const Corpus& corpus, const ExperimentConfig& base, const SweepConfig& sc,
                                         const FeatureCache& cache = {},
                                         const std::function<void(const SweepPoint&)>& on_point = {}) {
    std::vector<SweepPoint> out;
    auto emit = [&](SweepPoint p) {
        if (on_point) on_point(p);
        out.push_back(std::move(p));
    };
    const auto grid = default_grid(sc, base.cv.seed);
    const auto centres = sc.center_ms.empty() ? reference_frame_ms() : sc.center_ms;
    switch (sc.kind) {
    case SweepKind::framelen:
    case SweepKind::monte_carlo:
        for (double l : grid) {
            ExperimentConfig c = base;
            c.features.frame_ms = l;
            emit({l, evaluate_point(corpus, c, cache)});
        }
        break;
    case SweepKind::nbands: {
        std::vector<SetTag> sets;
        for (SetTag t : base.features.sets)
            if (t != SetTag::F) sets.push_back(t);  // band count does not affect the STFT set
        for (double nb : grid)
            for (SetTag t : sets) {
                ExperimentConfig c = base;
                c.features.n_bands = static_cast<int>(nb);
                c.features.sets = {t};
                c.features.frame_ms = centres.count(t) ? centres.at(t) : base.features.frame_ms;
                emit({nb, evaluate_point(corpus, c, cache)});
            }
        break;
    }
    case SweepKind::local_search:
        for (SetTag t : base.features.sets) {
            const double centre = centres.count(t) ? centres.at(t) : base.features.frame_ms;
            for (double off : grid) {
                ExperimentConfig c = base;
                c.features.sets = {t};
                c.features.frame_ms = centre + off;
                if (c.features.frame_ms <= 0) continue;
                emit({c.features.frame_ms, evaluate_point(corpus, c, cache)});
            }
        }
        break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json config_json(const FeatureConfig& f, const ExperimentConfig& e, std::uint64_t hash) {
    nlohmann::json sets = nlohmann::json::array();
    for (SetTag t : f.sets) sets.push_back(std::string(1, to_char(t)));
    nlohmann::json classifiers = nlohmann::json::array();
    for (auto k : e.classifiers) classifiers.push_back(std::string(to_string(k)));
    return {{"corpus_hash", hex64(hash)},
            {"frame_ms", f.frame_ms},
            {"n_bands", f.n_bands},
            {"segment_s", f.segment_s},
            {"delta_span", f.delta_span},
            {"delta_delta_span", f.delta_delta_span},
            {"f_deltas", f.f_deltas},
            {"sets", std::move(sets)},
            {"classifiers", std::move(classifiers)},
            {"repetitions", e.cv.repetitions},
            {"seed", e.cv.seed},
            {"normal_template", e.cv.normal_template},
            {"abnormal_template", e.cv.abnormal_template},
            {"theta_er", e.theta_er},
            {"step", e.step}};
}

inline nlohmann::json to_json(const SetResult& r, const FeatureSet* fs) {
    nlohmann::json j{{"set", std::string(1, to_char(r.set))},
                     {"classifier", std::string(to_string(r.classifier))},
                     {"frame_ms", r.frame_ms},
                     {"n_bands", r.n_bands},
                     {"skipped", r.skipped}};
    if (r.skipped) {
        j["reason"] = r.reason;
        return j;
    }
    j["fallback"] = r.selection.fallback;
    j["candidates"] = r.selection.subsets.size();
    const auto& w = r.selection.winner();
    j["winner"] = to_json(w, *fs);
    j["mean"] = to_json(w.result.mean);
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& s : r.selection.subsets)
        cands.push_back({{"rank", s.rank}, {"size", s.members.size()}, {"auc", s.result.mean.auc}});
    j["candidate_auc"] = std::move(cands);
    return j;
}

inline nlohmann::json to_json(const PointReport& p, const ExperimentConfig& e, std::uint64_t hash,
                              std::string_view report_type = "evaluation") {
    nlohmann::json results = nlohmann::json::array();
    for (const auto& r : p.results) {
        const auto it = p.feature_sets.find(r.set);
        results.push_back(to_json(r, it == p.feature_sets.end() ? nullptr : &it->second));
    }
    return {{"report", std::string(report_type)},
            {"format_version", 1},
            {"config", config_json(p.features, e, hash)},
            {"results", std::move(results)}};
}

/// Per-vector scores as CSV: one row per feature vector.
inline void write_scores_csv(std::ostream& os, const std::vector<FeatureScore>& scores) {
    os << "set,vector,coefficient,order,center_hz,er,f05,mcc,auc\n";
    os.precision(17);
    for (const auto& s : scores) {
        os << to_char(s.set) << ',' << s.vector << ',' << s.source.coefficient << ',' << s.source.order << ',';
        if (!std::isnan(s.source.center_hz)) os << s.source.center_hz;
        os << ',' << s.er << ',' << s.f05 << ',' << s.mcc << ',' << s.auc << '\n';
    }
}

}  // namespace kneeae
