#pragma once

// Window-tolerance matching of fiducial points and the Se / PPV / F1 / error report.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecgcode/error.hpp"
#include "ecgcode/signal_io.hpp"

namespace ecgcode::eval {

enum class FiducialKind : int { P_on = 0, P_off, QRS_on, QRS_off, T_on, T_off };
inline constexpr std::size_t kNumKinds = 6;
inline constexpr std::array<FiducialKind, kNumKinds> kKinds = {FiducialKind::P_on,   FiducialKind::P_off,
                                                                FiducialKind::QRS_on, FiducialKind::QRS_off,
                                                                FiducialKind::T_on,   FiducialKind::T_off};

inline std::string_view to_string(FiducialKind k) {
    static constexpr std::array<std::string_view, kNumKinds> names = {"P_on", "P_off", "QRS_on", "QRS_off", "T_on",
                                                                      "T_off"};
    return names[static_cast<std::size_t>(k)];
}

inline FiducialKind fiducial_kind(WaveClass c, bool offset) {
    return static_cast<FiducialKind>(2 * class_index(c) + (offset ? 1 : 0));
}

struct FiducialPoint {
    FiducialKind kind = FiducialKind::P_on;
    double time_ms = 0;
    std::optional<double> confidence;
};

struct EvalConfig {
    double tolerance_ms = 150.0;
    double exclude_edges_s = 0.0;

    void validate() const {
        if (!(tolerance_ms > 0)) throw ValidationError("eval: tolerance_ms must be positive");
        if (!(exclude_edges_s >= 0)) throw ValidationError("eval: exclude_edges_s must be >= 0");
    }
};

struct MatchResult {
    std::vector<std::pair<std::size_t, std::size_t>> pairs; ///< (prediction index, truth index)
    std::vector<std::size_t> unmatched_pred;
    std::vector<std::size_t> unmatched_truth;
    std::vector<double> errors_ms; ///< prediction - truth, per pair

    std::size_t tp() const { return pairs.size(); }
    std::size_t fp() const { return unmatched_pred.size(); }
    std::size_t fn() const { return unmatched_truth.size(); }
};

/// One-to-one matching under |pred - truth| <= tolerance, greedy over time-sorted lists.
/// Indices refer to the caller's input order.
inline MatchResult match_points(std::span<const FiducialPoint> pred, std::span<const FiducialPoint> truth,
                                double tolerance_ms) {
    if (!(tolerance_ms > 0)) throw ValidationError("match_points: tolerance must be positive");
    std::optional<FiducialKind> kind;
    for (const auto* list : {&pred, &truth})
        for (const auto& p : *list) {
            if (kind && *kind != p.kind) throw ValidationError("match_points: mixed fiducial kinds in one call");
            kind = p.kind;
        }
    auto sorted_order = [](std::span<const FiducialPoint> pts) {
        std::vector<std::size_t> idx(pts.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pts[a].time_ms < pts[b].time_ms; });
        return idx;
    };
    const auto po = sorted_order(pred), to = sorted_order(truth);
    MatchResult r;
    std::size_t i = 0, j = 0;
    while (i < po.size() && j < to.size()) {
        const double p = pred[po[i]].time_ms, t = truth[to[j]].time_ms;
        if (std::abs(p - t) <= tolerance_ms) {
            r.pairs.emplace_back(po[i], to[j]);
            r.errors_ms.push_back(p - t);
            ++i;
            ++j;
        } else if (p < t) {
            r.unmatched_pred.push_back(po[i++]);
        } else {
            r.unmatched_truth.push_back(to[j++]);
        }
    }
    for (; i < po.size(); ++i) r.unmatched_pred.push_back(po[i]);
    for (; j < to.size(); ++j) r.unmatched_truth.push_back(to[j]);
    return r;
}

struct PointMetrics {
    std::size_t tp = 0, fp = 0, fn = 0;
    std::optional<double> se, ppv, f1;
    std::optional<double> err_mean_ms, err_std_ms;
};

/// Ratios with a zero denominator stay empty. Error statistics use the population std.
inline PointMetrics point_metrics(std::size_t tp, std::size_t fp, std::size_t fn, std::span<const double> errors_ms) {
    PointMetrics m{tp, fp, fn, {}, {}, {}, {}, {}};
    if (tp + fn > 0) m.se = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tp + fp > 0) m.ppv = static_cast<double>(tp) / static_cast<double>(tp + fp);
    // Equals 2*se*ppv/(se+ppv) whenever that is defined; 0 when se = ppv = 0.
    if (m.se && m.ppv) m.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    if (!errors_ms.empty()) {
        const double n = static_cast<double>(errors_ms.size());
        double mean = 0;
        for (double e : errors_ms) mean += e;
        mean /= n;
        double var = 0;
        for (double e : errors_ms) var += (e - mean) * (e - mean);
        m.err_mean_ms = mean;
        m.err_std_ms = std::sqrt(var / n);
    }
    return m;
}

inline PointMetrics point_metrics(const MatchResult& r) { return point_metrics(r.tp(), r.fp(), r.fn(), r.errors_ms); }

struct RecordTiming {
    int sampling_rate_hz = 1000;
    std::int64_t n_samples = 0;
    double duration_ms() const { return 1000.0 * static_cast<double>(n_samples) / sampling_rate_hz; }
};

/// Onset and offset points per kind, dropping those within `exclude_edges_s` of either record end.
inline std::array<std::vector<FiducialPoint>, kNumKinds> fiducial_points(const AnnotationSet& set,
                                                                          const RecordTiming& timing,
                                                                          double exclude_edges_s = 0.0) {
    std::array<std::vector<FiducialPoint>, kNumKinds> out;
    const double edge = 1000.0 * exclude_edges_s;
    const double dur = timing.duration_ms();
    auto add = [&](FiducialKind k, std::int64_t sample, std::optional<double> conf) {
        const double t = 1000.0 * static_cast<double>(sample) / timing.sampling_rate_hz;
        if (t < edge || t > dur - edge) return;
        out[static_cast<std::size_t>(k)].push_back({k, t, conf});
    };
    for (const auto& s : set.segments) {
        add(fiducial_kind(s.wave_class, false), s.onset, s.confidence);
        add(fiducial_kind(s.wave_class, true), s.offset, s.confidence);
    }
    return out;
}

struct EvalReport {
    EvalConfig config;
    std::array<PointMetrics, kNumKinds> per_kind;
    PointMetrics aggregate;
    std::size_t n_records = 0;

    const PointMetrics& operator[](FiducialKind k) const { return per_kind[static_cast<std::size_t>(k)]; }
};

/// Per-kind matching accumulated over records; record order does not affect counts.
inline EvalReport evaluate_dataset(const std::vector<AnnotationSet>& predicted, const std::vector<AnnotationSet>& truth,
                                   const std::map<std::string, RecordTiming>& timing, const EvalConfig& cfg) {
    cfg.validate();
    std::map<std::string, const AnnotationSet*> truth_by_id, pred_by_id;
    for (const auto& t : truth)
        if (!truth_by_id.emplace(t.record_id, &t).second)
            throw ValidationError("evaluate: duplicate truth record '" + t.record_id + "'");
    for (const auto& p : predicted) {
        if (!truth_by_id.count(p.record_id)) throw ValidationError("evaluate: no truth for predicted record '" + p.record_id + "'");
        if (!pred_by_id.emplace(p.record_id, &p).second)
            throw ValidationError("evaluate: duplicate predicted record '" + p.record_id + "'");
    }
    for (const auto& [id, _] : truth_by_id)
        if (!pred_by_id.count(id)) throw ValidationError("evaluate: no prediction for truth record '" + id + "'");

    std::array<std::size_t, kNumKinds> tp{}, fp{}, fn{};
    std::array<std::vector<double>, kNumKinds> errors;
    // std::map iteration gives a fixed record order for the error concatenation.
    for (const auto& [id, t] : truth_by_id) {
        auto it = timing.find(id);
        if (it == timing.end()) throw ValidationError("evaluate: no timing for record '" + id + "'");
        const auto tp_pts = fiducial_points(*t, it->second, cfg.exclude_edges_s);
        const auto pp_pts = fiducial_points(*pred_by_id.at(id), it->second, cfg.exclude_edges_s);
        for (std::size_t k = 0; k < kNumKinds; ++k) {
            const auto r = match_points(pp_pts[k], tp_pts[k], cfg.tolerance_ms);
            tp[k] += r.tp();
            fp[k] += r.fp();
            fn[k] += r.fn();
            errors[k].insert(errors[k].end(), r.errors_ms.begin(), r.errors_ms.end());
        }
    }
    EvalReport rep;
    rep.config = cfg;
    rep.n_records = truth_by_id.size();
    std::size_t atp = 0, afp = 0, afn = 0;
    std::vector<double> all;
    for (std::size_t k = 0; k < kNumKinds; ++k) {
        rep.per_kind[k] = point_metrics(tp[k], fp[k], fn[k], errors[k]);
        atp += tp[k];
        afp += fp[k];
        afn += fn[k];
        all.insert(all.end(), errors[k].begin(), errors[k].end());
    }
    rep.aggregate = point_metrics(atp, afp, afn, all);
    return rep;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const PointMetrics& m) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"tp", m.tp},   {"fp", m.fp},   {"fn", m.fn},
            {"se", opt(m.se)}, {"ppv", opt(m.ppv)}, {"f1", opt(m.f1)},
            {"err_mean_ms", opt(m.err_mean_ms)}, {"err_std_ms", opt(m.err_std_ms)}};
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per = nlohmann::json::object();
    for (auto k : kKinds) per[std::string(to_string(k))] = to_json(r[k]);
    return {{"config", {{"tolerance_ms", r.config.tolerance_ms}, {"exclude_edges_s", r.config.exclude_edges_s}}},
            {"per_kind", per},
            {"aggregate", to_json(r.aggregate)},
            {"n_records", r.n_records}};
}

/// Rows Se / PPV / F1-score / mean +- std, one column per fiducial point.
inline std::string to_markdown(const EvalReport& r) {
    auto fmt = [](const char* f, double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, f, v);
        return std::string(buf);
    };
    auto ratio = [&](const std::optional<double>& v) { return v ? fmt("%.3f", *v) : std::string("n/a"); };
    std::string s = "|  | P on | P off | QRS on | QRS off | T on | T off |\n|---|---|---|---|---|---|---|\n";
    auto row = [&](const char* name, auto cell) {
        s += "| ";
        s += name;
        s += " |";
        for (auto k : kKinds) s += " " + cell(r[k]) + " |";
        s += "\n";
    };
    row("Se", [&](const PointMetrics& m) { return ratio(m.se); });
    row("PPV", [&](const PointMetrics& m) { return ratio(m.ppv); });
    row("F1-score", [&](const PointMetrics& m) { return ratio(m.f1); });
    row("μ ± σ (ms)", [&](const PointMetrics& m) {
        if (!m.err_mean_ms) return std::string("n/a");
        return fmt("%.1f", *m.err_mean_ms) + " ± " + fmt("%.1f", *m.err_std_ms);
    });
    char tail[128];
    std::snprintf(tail, sizeof tail, "\n%zu records, tolerance %.0f ms, edge exclusion %.2f s\n", r.n_records,
                  r.config.tolerance_ms, r.config.exclude_edges_s);
    return s + tail;
}

} // namespace ecgcode::eval
