// kneeae: command-line front end.
//
//   kneeae synth    --out DIR [--config spec.json] [--seed N]
//   kneeae extract  --corpus manifest.csv --out DIR
//   kneeae score    --corpus manifest.csv --out DIR
//   kneeae select   --corpus manifest.csv --out DIR [--classifier K]
//   kneeae evaluate --corpus manifest.csv --out DIR [--selection report.json]
//   kneeae sweep    --corpus manifest.csv --out DIR --kind framelen|local-search|monte-carlo|nbands
//
// Usage errors exit 2, pipeline errors exit 1.
#include "kneeae/kneeae.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

using namespace kneeae;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string config_path;
    std::string out;
    std::string corpus;
    std::optional<std::uint64_t> seed;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::string> classifiers;
    std::optional<double> frame_ms;
    std::optional<int> n_bands;
    std::vector<std::string> sets;
    std::optional<int> reps;
    bool no_cache = false;
    std::string cache_dir;
    std::string kind = "framelen";
    std::vector<double> grid;
    std::string selection;
};

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(Errc::io, "cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(Errc::config, p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(Errc::io, "cannot write " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::vector<SetTag> parse_sets(const json& j) {
    std::vector<SetTag> out;
    for (const auto& s : j) out.push_back(parse_set_tag(s.get<std::string>()));
    return out;
}

// Experiment settings use the key names of a report's "config" block, so a
// report can be fed back as --config.
void apply_experiment_json(const json& j, ExperimentConfig& e, SweepConfig& sweep) {
    static const std::set<std::string> known{
        "corpus_hash", "frame_ms",   "n_bands",         "segment_s",         "delta_span", "delta_delta_span",
        "f_deltas",    "sets",       "classifiers",     "repetitions",       "seed",       "normal_template",
        "abnormal_template", "theta_er", "step",        "sweep",             "synth"};
    if (!j.is_object()) throw Error(Errc::config, "config must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw Error(Errc::config, "unknown config key '" + k + "'");
    try {
        auto& f = e.features;
        f.frame_ms = j.value("frame_ms", f.frame_ms);
        f.n_bands = j.value("n_bands", f.n_bands);
        f.segment_s = j.value("segment_s", f.segment_s);
        f.delta_span = j.value("delta_span", f.delta_span);
        f.delta_delta_span = j.value("delta_delta_span", f.delta_delta_span);
        f.f_deltas = j.value("f_deltas", f.f_deltas);
        if (j.contains("sets")) f.sets = parse_sets(j.at("sets"));
        if (j.contains("classifiers")) {
            e.classifiers.clear();
            for (const auto& c : j.at("classifiers")) e.classifiers.push_back(parse_classifier(c.get<std::string>()));
        }
        e.cv.repetitions = j.value("repetitions", e.cv.repetitions);
        e.cv.seed = j.value("seed", e.cv.seed);
        e.cv.normal_template = j.value("normal_template", e.cv.normal_template);
        e.cv.abnormal_template = j.value("abnormal_template", e.cv.abnormal_template);
        e.theta_er = j.value("theta_er", e.theta_er);
        e.step = j.value("step", e.step);
        if (j.contains("sweep")) {
            const auto& s = j.at("sweep");
            if (s.contains("kind")) sweep.kind = parse_sweep_kind(s.at("kind").get<std::string>());
            sweep.grid = s.value("grid", sweep.grid);
            sweep.draws = s.value("draws", sweep.draws);
            if (s.contains("center_ms"))
                for (const auto& [tag, ms] : s.at("center_ms").items()) sweep.center_ms[parse_set_tag(tag)] = ms.get<double>();
        }
    } catch (const json::exception& ex) {
        throw Error(Errc::config, std::string("config: ") + ex.what());
    }
}

struct Setup {
    ExperimentConfig exp;
    SweepConfig sweep;
    FeatureCache cache;
};

// Precedence: defaults, then `base` (a prior report's config), then
// --config, then flags.
Setup make_setup(const Options& o, std::vector<ClassifierKind> default_classifiers, const json* base = nullptr) {
    Setup s;
    s.exp.classifiers = std::move(default_classifiers);
    if (base) apply_experiment_json(*base, s.exp, s.sweep);
    if (!o.config_path.empty()) apply_experiment_json(read_json(o.config_path), s.exp, s.sweep);
    if (o.frame_ms) s.exp.features.frame_ms = *o.frame_ms;
    if (o.n_bands) s.exp.features.n_bands = *o.n_bands;
    if (!o.sets.empty()) {
        s.exp.features.sets.clear();
        for (const auto& t : o.sets) s.exp.features.sets.push_back(parse_set_tag(t));
    }
    if (!o.classifiers.empty()) {
        s.exp.classifiers.clear();
        for (const auto& c : o.classifiers) s.exp.classifiers.push_back(parse_classifier(c));
    }
    if (o.reps) s.exp.cv.repetitions = *o.reps;
    if (o.seed) s.exp.cv.seed = *o.seed;
    s.exp.jobs = o.jobs;
    if (s.exp.cv.repetitions < 1) throw Error(Errc::config, "repetitions must be >= 1");
    if (!o.no_cache) s.cache = FeatureCache(o.cache_dir.empty() ? fs::path(o.out) / "cache" : fs::path(o.cache_dir));
    return s;
}

std::string set_name(SetTag t) { return std::string(1, to_char(t)); }

// ---------------------------------------------------------------------------

int cmd_synth(const Options& o) {
    SynthSpec spec;
    if (!o.config_path.empty()) {
        const json j = read_json(o.config_path);
        try {
            spec = (j.contains("synth") ? j.at("synth") : j).get<SynthSpec>();
        } catch (const json::exception& e) {
            throw Error(Errc::config, std::string("synth spec: ") + e.what());
        }
    }
    if (o.seed) spec.seed = *o.seed;
    const auto entries = write_corpus(spec, o.out);
    std::cerr << "wrote " << entries.size() << " recordings to " << o.out << "\n";
    return 0;
}

int cmd_extract(const Options& o) {
    const auto st = make_setup(o, {});
    const auto corpus = load_corpus(o.corpus, st.exp.features.segment_s);
    const auto ex = extract(corpus, st.exp.features, st.cache, o.jobs);
    fs::create_directories(o.out);
    json results = json::array();
    for (SetTag t : st.exp.features.sets) {
        json r{{"set", set_name(t)}, {"frame_ms", st.exp.features.frame_ms}, {"n_bands", st.exp.features.n_bands}};
        if (auto it = ex.skipped.find(t); it != ex.skipped.end()) {
            r["skipped"] = true;
            r["reason"] = it->second;
        } else {
            const auto& fset = ex.sets.at(t);
            const std::string stem = "features_" + set_name(t);
            std::ostringstream csv;
            write_feature_csv(csv, fset);
            write_text(fs::path(o.out) / (stem + ".csv"), csv.str());
            write_json(fs::path(o.out) / (stem + ".meta.json"), sidecar_json(fset));
            r["skipped"] = false;
            r["rows"] = fset.rows();
            r["vectors"] = fset.vector_count();
            r["file"] = stem + ".csv";
        }
        results.push_back(std::move(r));
    }
    write_json(fs::path(o.out) / "extract_report.json",
               {{"report", "extraction"},
                {"format_version", 1},
                {"config", config_json(st.exp.features, st.exp, corpus.hash)},
                {"results", std::move(results)}});
    return 0;
}

int cmd_score(const Options& o) {
    auto st = make_setup(o, {ClassifierKind::svm_linear});
    st.exp.classifiers = {ClassifierKind::svm_linear};  // scoring always uses the linear SVM
    const auto corpus = load_corpus(o.corpus, st.exp.features.segment_s);
    const auto ex = extract(corpus, st.exp.features, st.cache, o.jobs);
    fs::create_directories(o.out);
    json results = json::array();
    std::optional<CvPlan> plan;
    for (SetTag t : st.exp.features.sets) {
        json r{{"set", set_name(t)}, {"frame_ms", st.exp.features.frame_ms}, {"n_bands", st.exp.features.n_bands}};
        if (auto it = ex.skipped.find(t); it != ex.skipped.end()) {
            r["skipped"] = true;
            r["reason"] = it->second;
        } else {
            const auto& fset = ex.sets.at(t);
            if (!plan) plan = plan_for(fset, st.exp.cv);
            const auto scores = score_features(fset, *plan, o.jobs);
            std::ostringstream csv;
            write_scores_csv(csv, scores);
            write_text(fs::path(o.out) / ("scores_" + set_name(t) + ".csv"), csv.str());
            json arr = json::array();
            for (const auto& s : scores) arr.push_back(to_json(s));
            r["skipped"] = false;
            r["scores"] = std::move(arr);
        }
        results.push_back(std::move(r));
    }
    write_json(fs::path(o.out) / "score_report.json",
               {{"report", "scores"},
                {"format_version", 1},
                {"config", config_json(st.exp.features, st.exp, corpus.hash)},
                {"results", std::move(results)}});
    return 0;
}

void write_point_scores(const fs::path& dir, const std::string& stem, const PointReport& p) {
    std::set<SetTag> done;
    for (const auto& r : p.results) {
        if (r.skipped || !done.insert(r.set).second) continue;
        std::ostringstream csv;
        write_scores_csv(csv, r.scores);
        write_text(dir / (stem + "_scores_" + set_name(r.set) + ".csv"), csv.str());
    }
}

int cmd_select(const Options& o, std::string_view report_type, std::vector<ClassifierKind> defaults) {
    const auto st = make_setup(o, std::move(defaults));
    const auto corpus = load_corpus(o.corpus, st.exp.features.segment_s);
    const auto point = evaluate_point(corpus, st.exp, st.cache);
    fs::create_directories(o.out);
    const std::string stem = std::string(report_type);
    write_json(fs::path(o.out) / (stem + "_report.json"), to_json(point, st.exp, corpus.hash, report_type));
    write_point_scores(o.out, stem, point);
    return 0;
}

// Re-evaluates the winners of a selection report under this run's protocol
// and classifiers.
int cmd_evaluate_selection(const Options& o) {
    const json sel = read_json(o.selection);
    json base = sel.value("config", json::object());
    base.erase("classifiers");
    auto st = make_setup(o, {all_classifier_kinds.begin(), all_classifier_kinds.end()}, &base);

    std::map<SetTag, std::vector<int>> subsets;
    for (const auto& r : sel.at("results")) {
        if (r.value("skipped", false) || !r.contains("winner")) continue;
        const SetTag t = parse_set_tag(r.at("set").get<std::string>());
        if (subsets.count(t)) continue;
        std::vector<int> members;
        for (const auto& m : r.at("winner").at("members")) members.push_back(m.at("vector").get<int>());
        subsets[t] = members;
    }
    if (subsets.empty()) throw Error(Errc::config, "selection report has no winners");
    FeatureConfig fc = st.exp.features;
    fc.sets.clear();
    for (const auto& [t, m] : subsets) fc.sets.push_back(t);
    st.exp.features = fc;

    const auto corpus = load_corpus(o.corpus, fc.segment_s);
    const auto ex = extract(corpus, fc, st.cache, o.jobs);
    json results = json::array();
    std::optional<CvPlan> plan;
    for (const auto& [t, members] : subsets) {
        for (auto k : st.exp.classifiers) {
            json r{{"set", set_name(t)},
                   {"classifier", std::string(to_string(k))},
                   {"frame_ms", fc.frame_ms},
                   {"n_bands", fc.n_bands}};
            if (auto it = ex.skipped.find(t); it != ex.skipped.end()) {
                r["skipped"] = true;
                r["reason"] = it->second;
                results.push_back(std::move(r));
                continue;
            }
            const auto& fset = ex.sets.at(t);
            if (!plan) plan = plan_for(fset, st.exp.cv);
            const auto cv = run_cv(fset.columns(members), *plan, k, o.jobs);
            json mem = json::array();
            for (int v : members) {
                auto m = to_json(fset.vectors.at(static_cast<std::size_t>(v)), t);
                m["vector"] = v;
                mem.push_back(std::move(m));
            }
            r["skipped"] = false;
            r["members"] = std::move(mem);
            r["mean"] = to_json(cv.mean);
            r["evaluation"] = to_json(cv);
            results.push_back(std::move(r));
        }
    }
    fs::create_directories(o.out);
    write_json(fs::path(o.out) / "evaluation_report.json",
               {{"report", "subset_evaluation"},
                {"format_version", 1},
                {"config", config_json(fc, st.exp, corpus.hash)},
                {"results", std::move(results)}});
    return 0;
}

int cmd_sweep(const Options& o) {
    auto st = make_setup(o, {ClassifierKind::svm_linear});
    st.sweep.kind = parse_sweep_kind(o.kind);
    if (!o.grid.empty()) st.sweep.grid = o.grid;
    const auto corpus = load_corpus(o.corpus, st.exp.features.segment_s);
    fs::create_directories(o.out);

    std::ostringstream curve;
    curve.precision(17);
    curve << "point,value,set,classifier,frame_ms,n_bands,skipped,fallback,members,auc,er,f05,mcc,s\n";
    int index = 0;
    run_sweep(corpus, st.exp, st.sweep, st.cache, [&](const SweepPoint& p) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "point_%03d", index);
        ExperimentConfig e = st.exp;
        e.features = p.report.features;
        json j = to_json(p.report, e, corpus.hash, "sweep_point");
        j["sweep"] = {{"kind", std::string(to_string(st.sweep.kind))}, {"index", index}, {"value", p.value}};
        write_json(fs::path(o.out) / (std::string(stem) + ".json"), j);
        write_point_scores(o.out, stem, p.report);
        for (const auto& r : p.report.results) {
            curve << index << ',' << p.value << ',' << to_char(r.set) << ',' << to_string(r.classifier) << ','
                  << r.frame_ms << ',' << r.n_bands << ',' << (r.skipped ? 1 : 0) << ',';
            if (r.skipped) {
                curve << ",,,,,,\n";
                continue;
            }
            const auto& w = r.selection.winner();
            const auto& m = w.result.mean;
            curve << (r.selection.fallback ? 1 : 0) << ',' << w.members.size() << ',' << m.auc << ',' << m.er << ','
                  << m.f05 << ',' << m.mcc << ',' << m.s << '\n';
        }
        std::cerr << stem << ": " << to_string(st.sweep.kind) << " = " << p.value << "\n";
        ++index;
    });
    write_text(fs::path(o.out) / "curve.csv", curve.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knee acoustic-emission feature extraction, selection and evaluation"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* c, bool needs_corpus) {
        c->add_option("--config", o.config_path, "JSON configuration file")->check(CLI::ExistingFile);
        c->add_option("--out", o.out, "output directory")->required();
        c->add_option("--seed", o.seed, "seed override")->check(CLI::NonNegativeNumber);
        if (!needs_corpus) return;
        c->add_option("--corpus", o.corpus, "corpus manifest CSV")->required()->check(CLI::ExistingFile);
        c->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
        c->add_option("--frame-ms", o.frame_ms, "frame length in ms")->check(CLI::PositiveNumber);
        c->add_option("--nbands", o.n_bands, "filterbank size")->check(CLI::PositiveNumber);
        c->add_option("--feature-set", o.sets, "feature sets (D, E, F, L, M)")
            ->check(CLI::IsMember({"D", "E", "F", "L", "M"}))
            ->delimiter(',');
        c->add_option("--reps", o.reps, "cross-validation repetitions")->check(CLI::PositiveNumber);
        c->add_flag("--no-cache", o.no_cache, "do not read or write the feature cache");
        c->add_option("--cache-dir", o.cache_dir, "feature cache directory (default OUT/cache)");
    };
    auto classifier_option = [&](CLI::App* c) {
        c->add_option("--classifier", o.classifiers, "svm-linear, svm-gaussian, lda or cart")
            ->check(CLI::IsMember({"svm-linear", "svm-gaussian", "lda", "cart"}))
            ->delimiter(',');
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    common(synth, false);
    auto* extract_cmd = app.add_subcommand("extract", "build feature sets");
    common(extract_cmd, true);
    auto* score = app.add_subcommand("score", "score every feature vector with the linear SVM");
    common(score, true);
    auto* select = app.add_subcommand("select", "build candidate subsets and pick the best");
    common(select, true);
    classifier_option(select);
    auto* evaluate = app.add_subcommand("evaluate", "cross-validated evaluation");
    common(evaluate, true);
    classifier_option(evaluate);
    evaluate->add_option("--selection", o.selection, "evaluate the winners of this selection report")
        ->check(CLI::ExistingFile);
    auto* sweep = app.add_subcommand("sweep", "frame length or band count sweep");
    common(sweep, true);
    classifier_option(sweep);
    sweep->add_option("--kind", o.kind, "framelen, local-search, monte-carlo or nbands")
        ->check(CLI::IsMember({"framelen", "local-search", "local_search", "monte-carlo", "monte_carlo", "nbands"}));
    sweep->add_option("--grid", o.grid, "explicit grid values")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return cmd_synth(o);
        if (*extract_cmd) return cmd_extract(o);
        if (*score) return cmd_score(o);
        if (*select) return cmd_select(o, "selection", {ClassifierKind::svm_linear});
        if (*evaluate)
            return o.selection.empty()
                       ? cmd_select(o, "evaluation", {all_classifier_kinds.begin(), all_classifier_kinds.end()})
                       : cmd_evaluate_selection(o);
        if (*sweep) return cmd_sweep(o);
    } catch (const Error& e) {
        std::cerr << "kneeae: " << to_string(e.code()) << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "kneeae: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
