#pragma once

// Confidence-ranked pseudolabeling and the train-from-scratch + fine-tune schedule.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecgcode/error.hpp"
#include "ecgcode/eval.hpp"
#include "ecgcode/grid_codec.hpp"
#include "ecgcode/model.hpp"
#include "ecgcode/pipeline.hpp"
#include "ecgcode/signal_io.hpp"
#include "ecgcode/train.hpp"

namespace ecgcode::selftrain {

struct ClassScore {
    double mean = 0; ///< mean of |0.5 - confidence| over intervals
    double std = 0;  ///< population std of the same
};

using ClassScores = std::array<ClassScore, kNumClasses>;

/// Per class, statistics of |0.5 - c| over every interval.
inline ClassScores delineation_scores(const grid::PredictionGrid& pred) {
    ClassScores out{};
    if (pred.n_intervals == 0) return out;
    const double n = static_cast<double>(pred.n_intervals);
    for (WaveClass c : kWaveClasses) {
        double sum = 0;
        for (std::size_t i = 0; i < pred.n_intervals; ++i) sum += std::abs(0.5 - pred.at(i, c).confidence);
        const double mean = sum / n;
        double var = 0;
        for (std::size_t i = 0; i < pred.n_intervals; ++i) {
            const double d = std::abs(0.5 - pred.at(i, c).confidence) - mean;
            var += d * d;
        }
        out[class_index(c)] = {mean, std::sqrt(var / n)};
    }
    return out;
}

struct ScoredRecord {
    std::string record_id;
    ClassScores scores{};
    AnnotationSet predicted;
};

/// round(top_percent / 100 * n), halves away from zero.
inline std::size_t selection_count(std::size_t n, double top_percent) {
    return static_cast<std::size_t>(std::round(top_percent / 100.0 * static_cast<double>(n)));
}

/// Ids of the highest-mean-score records for one class; ties go to the smaller id.
inline std::vector<std::string> select_top(const std::vector<ScoredRecord>& scored, WaveClass c, double top_percent) {
    if (!(top_percent > 0 && top_percent <= 100)) throw ValidationError("select_top: top_percent must lie in (0, 100]");
    if (scored.empty()) throw ValidationError("select_top: empty corpus");
    std::vector<const ScoredRecord*> order;
    for (const auto& s : scored) order.push_back(&s);
    const int k = class_index(c);
    std::sort(order.begin(), order.end(), [k](const ScoredRecord* a, const ScoredRecord* b) {
        if (a->scores[k].mean != b->scores[k].mean) return a->scores[k].mean > b->scores[k].mean;
        return a->record_id < b->record_id;
    });
    std::vector<std::string> ids;
    const std::size_t n = selection_count(scored.size(), top_percent);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(order[i]->record_id);
    return ids;
}

struct PseudolabelManifest {
    double top_percent = 50;
    std::array<std::vector<std::string>, kNumClasses> selected; ///< per class, in rank order
    std::map<std::string, std::array<bool, kNumClasses>> masks; ///< every scored record
    std::map<std::string, ClassScores> scores;
    std::string checkpoint_id;
    grid::GridConfig grid;
    std::string timestamp;
    std::size_t skipped = 0;

    bool any_selected(const std::string& id) const {
        auto it = masks.find(id);
        return it != masks.end() && (it->second[0] || it->second[1] || it->second[2]);
    }
};

inline nlohmann::json to_json(const PseudolabelManifest& m) {
    nlohmann::json sel = nlohmann::json::object(), masks = nlohmann::json::object(), scores = nlohmann::json::object();
    for (WaveClass c : kWaveClasses) sel[std::string(to_string(c))] = m.selected[class_index(c)];
    for (const auto& [id, mask] : m.masks) {
        nlohmann::json jm = nlohmann::json::object();
        for (WaveClass c : kWaveClasses) jm[std::string(to_string(c))] = mask[class_index(c)];
        masks[id] = jm;
    }
    for (const auto& [id, sc] : m.scores) {
        nlohmann::json js = nlohmann::json::object();
        for (WaveClass c : kWaveClasses)
            js[std::string(to_string(c))] = {{"mean", sc[class_index(c)].mean}, {"std", sc[class_index(c)].std}};
        scores[id] = js;
    }
    return {{"top_percent", m.top_percent},
            {"selected", sel},
            {"masks", masks},
            {"scores", scores},
            {"provenance",
             {{"checkpoint_id", m.checkpoint_id},
              {"timestamp", m.timestamp},
              {"grid",
               {{"n_intervals", m.grid.n_intervals},
                {"record_len", m.grid.record_len},
                {"conf_threshold", m.grid.conf_threshold},
                {"merge_gap", m.grid.merge_gap},
                {"min_len", m.grid.min_len}}}}},
            {"skipped", m.skipped}};
}

inline PseudolabelManifest manifest_from_json(const nlohmann::json& j) {
    PseudolabelManifest m;
    try {
        m.top_percent = j.at("top_percent").get<double>();
        for (WaveClass c : kWaveClasses)
            m.selected[class_index(c)] = j.at("selected").at(std::string(to_string(c))).get<std::vector<std::string>>();
        for (auto it = j.at("masks").begin(); it != j.at("masks").end(); ++it) {
            std::array<bool, kNumClasses> mask{};
            for (WaveClass c : kWaveClasses) mask[class_index(c)] = it.value().at(std::string(to_string(c))).get<bool>();
            m.masks[it.key()] = mask;
        }
        for (auto it = j.at("scores").begin(); it != j.at("scores").end(); ++it) {
            ClassScores sc{};
            for (WaveClass c : kWaveClasses) {
                const auto& e = it.value().at(std::string(to_string(c)));
                sc[class_index(c)] = {e.at("mean").get<double>(), e.at("std").get<double>()};
            }
            m.scores[it.key()] = sc;
        }
        const auto& p = j.at("provenance");
        m.checkpoint_id = p.at("checkpoint_id").get<std::string>();
        m.timestamp = p.at("timestamp").get<std::string>();
        const auto& g = p.at("grid");
        m.grid.n_intervals = g.at("n_intervals").get<std::size_t>();
        m.grid.record_len = g.at("record_len").get<std::int64_t>();
        m.grid.conf_threshold = g.at("conf_threshold").get<double>();
        m.grid.merge_gap = g.at("merge_gap").get<std::int64_t>();
        m.grid.min_len = g.at("min_len").get<std::int64_t>();
        m.skipped = j.at("skipped").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("manifest: ") + e.what());
    }
    return m;
}

inline std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Build the manifest from already-scored records.
inline PseudolabelManifest make_manifest(const std::vector<ScoredRecord>& scored, double top_percent,
                                         const grid::GridConfig& grid_cfg, std::string checkpoint_id,
                                         std::string timestamp = utc_timestamp()) {
    PseudolabelManifest m;
    m.top_percent = top_percent;
    m.grid = grid_cfg;
    m.checkpoint_id = std::move(checkpoint_id);
    m.timestamp = std::move(timestamp);
    for (const auto& s : scored) {
        m.masks[s.record_id] = {false, false, false};
        m.scores[s.record_id] = s.scores;
    }
    for (WaveClass c : kWaveClasses) {
        m.selected[class_index(c)] = select_top(scored, c, top_percent);
        for (const auto& id : m.selected[class_index(c)]) m.masks[id][class_index(c)] = true;
    }
    return m;
}

struct PseudolabelResult {
    PseudolabelManifest manifest;
    std::vector<ScoredRecord> scored;
};

/// Predict, score and select over an in-memory corpus.
template <class T>
PseudolabelResult pseudolabel(const nn::ModelParams<T>& model, const std::vector<EcgRecord>& corpus,
                              const PipelineConfig& cfg, double top_percent, std::string checkpoint_id = {},
                              std::string timestamp = utc_timestamp()) {
    if (!(top_percent > 0 && top_percent <= 100)) throw ValidationError("pseudolabel: top_percent must lie in (0, 100]");
    if (corpus.empty()) throw ValidationError("pseudolabel: empty corpus");
    const dsp::MelFrontend frontend(cfg.stft, cfg.sample_rate_hz);
    PseudolabelResult r;
    for (const auto& rec : corpus) {
        auto p = predict_record(model, rec, cfg, frontend);
        r.scored.push_back({rec.id(), delineation_scores(p.grid), std::move(p.annotations)});
    }
    r.manifest = make_manifest(r.scored, top_percent, cfg.grid, std::move(checkpoint_id), std::move(timestamp));
    return r;
}

/// Directory variant: unreadable records are skipped and counted; writes `<id>.pseudo.delin.json`
/// beside the records and `manifest_path`.
template <class T>
PseudolabelResult pseudolabel_dir(const nn::ModelParams<T>& model, const fs::path& corpus_dir,
                                  const fs::path& manifest_path, const PipelineConfig& cfg, double top_percent,
                                  std::string checkpoint_id = {}, std::ostream* log = &std::cerr) {
    std::vector<EcgRecord> corpus;
    std::size_t skipped = 0;
    for (const auto& dir : list_record_dirs(corpus_dir)) {
        try {
            corpus.push_back(read_record(dir));
        } catch (const std::exception& e) {
            ++skipped;
            if (log) *log << "pseudolabel: skipping '" << dir.string() << "': " << e.what() << "\n";
        }
    }
    auto r = pseudolabel(model, corpus, cfg, top_percent, std::move(checkpoint_id));
    r.manifest.skipped = skipped;
    for (const auto& s : r.scored) write_annotations(s.predicted, annotation_path(corpus_dir, s.record_id, "pseudo"));
    if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
    ecgcode::detail::write_atomic(manifest_path, to_json(r.manifest).dump(2) + "\n");
    return r;
}

// ---------------------------------------------------------------------------

using LabeledRecord = std::pair<EcgRecord, AnnotationSet>;

template <class T>
eval::EvalReport evaluate_model(const nn::ModelParams<T>& model, const std::vector<LabeledRecord>& data,
                                const PipelineConfig& cfg, const eval::EvalConfig& ecfg) {
    const dsp::MelFrontend frontend(cfg.stft, cfg.sample_rate_hz);
    std::vector<AnnotationSet> pred, truth;
    std::map<std::string, eval::RecordTiming> timing;
    for (const auto& [rec, ann] : data) {
        pred.push_back(predict_record(model, rec, cfg, frontend).annotations);
        truth.push_back(ann);
        timing[rec.id()] = {rec.sampling_rate_hz(), static_cast<std::int64_t>(rec.n_samples())};
    }
    return eval::evaluate_dataset(pred, truth, timing, ecfg);
}

struct SelfTrainConfig {
    double top_percent = 50;
    nn::TrainConfig base;     ///< stage 1, labeled data
    nn::TrainConfig scratch;  ///< stage 3, pseudolabels, fresh init
    nn::TrainConfig finetune; ///< stage 4, labeled data
    eval::EvalConfig eval;

    SelfTrainConfig() { finetune.epochs = 40; }
};

struct StageReport {
    std::string stage;
    std::vector<double> history;
    std::optional<eval::EvalReport> report; ///< on the labeled set
    nlohmann::json details = nlohmann::json::object();
};

struct SelfTrainResult {
    nn::ModelParams<float> base;
    nn::ModelParams<float> final_model;
    PseudolabelManifest manifest;
    std::vector<StageReport> stages;
};

inline nlohmann::json to_json(const StageReport& s) {
    nlohmann::json j = {{"stage", s.stage}, {"history", s.history}, {"details", s.details}};
    j["eval"] = s.report ? eval::to_json(*s.report) : nlohmann::json(nullptr);
    return j;
}

namespace detail {
template <class F>
auto run_stage(const std::string& name, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}
} // namespace detail

/// base training -> pseudolabeling -> from-scratch training on pseudolabels -> fine-tuning.
inline SelfTrainResult selftrain_run(const std::vector<LabeledRecord>& labeled, const std::vector<EcgRecord>& unlabeled,
                                     const PipelineConfig& cfg, const SelfTrainConfig& st,
                                     const nn::EpochCallback& on_epoch = {}) {
    if (!(st.top_percent > 0 && st.top_percent <= 100))
        throw ValidationError("selftrain: top_percent must lie in (0, 100]");
    if (labeled.empty() || unlabeled.empty()) throw ValidationError("selftrain: labeled and unlabeled sets must be non-empty");
    cfg.validate();

    std::vector<Example> labeled_ex;
    for (const auto& [rec, ann] : labeled) labeled_ex.push_back(make_example(rec, ann, cfg));
    FeatureCache labeled_cache(cfg);

    SelfTrainResult out;

    auto base = detail::run_stage("base", [&] {
        auto r = nn::train(nn::build_model<float>(cfg.model), labeled_ex, st.base, cfg, &labeled_cache, on_epoch);
        StageReport rep{"base", r.history, evaluate_model(r.params, labeled, cfg, st.eval), {}};
        out.stages.push_back(std::move(rep));
        return r.params;
    });
    out.base = base;

    auto pl = detail::run_stage("pseudolabel", [&] {
        auto r = pseudolabel(base, unlabeled, cfg, st.top_percent, "selftrain-base");
        StageReport rep{"pseudolabel", {}, std::nullopt, {}};
        for (WaveClass c : kWaveClasses)
            rep.details["selected_" + std::string(to_string(c))] = r.manifest.selected[class_index(c)].size();
        out.stages.push_back(std::move(rep));
        return r;
    });
    out.manifest = pl.manifest;

    auto scratch = detail::run_stage("scratch", [&] {
        std::vector<Example> pseudo_ex;
        for (std::size_t i = 0; i < unlabeled.size(); ++i) {
            const auto& id = pl.scored[i].record_id;
            if (!pl.manifest.any_selected(id)) continue;
            pseudo_ex.push_back(make_example(unlabeled[i], pl.scored[i].predicted, cfg, pl.manifest.masks.at(id)));
        }
        if (pseudo_ex.empty()) throw ValidationError("no pseudolabeled records selected");
        FeatureCache cache(cfg);
        auto r = nn::train(nn::build_model<float>(cfg.model), pseudo_ex, st.scratch, cfg, &cache, on_epoch);
        StageReport rep{"scratch", r.history, evaluate_model(r.params, labeled, cfg, st.eval), {}};
        rep.details["n_records"] = pseudo_ex.size();
        out.stages.push_back(std::move(rep));
        return r.params;
    });

    out.final_model = detail::run_stage("finetune", [&] {
        auto r = nn::train(scratch, labeled_ex, st.finetune, cfg, &labeled_cache, on_epoch);
        StageReport rep{"finetune", r.history, evaluate_model(r.params, labeled, cfg, st.eval), {}};
        out.stages.push_back(std::move(rep));
        return r.params;
    });
    return out;
}

} // namespace ecgcode::selftrain
