// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "ecgcode/cli.hpp"
#include "ecgcode/dsp.hpp"
#include "ecgcode/eval.hpp"
#include "ecgcode/grid_codec.hpp"
#include "ecgcode/loss.hpp"
#include "ecgcode/selftrain.hpp"
#include "ecgcode/train.hpp"
#include "support.hpp"
#include "tiny_pipeline.hpp"

#ifndef ECGCODE_SCHEMA_DIR
#define ECGCODE_SCHEMA_DIR "schemas"
#endif

using namespace ecgcode;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail.clear();
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string& s) {
        if (pass) detail += (detail.empty() ? "" : ", ") + s;
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Loss exactness

Outcome loss_exactness() {
    using namespace loss;
    using grid::GridCell;
    Outcome o;
    auto near = [&](double a, double b, const char* what) { o.check(std::abs(a - b) <= 1e-12, what); };
    near(confidence_loss(0.9, 1.0), 0.0, "CL(0.9,1)");
    near(confidence_loss(0.5, 1.0), 0.25, "CL(0.5,1)");
    near(confidence_loss(0.3, 0.0), 0.09, "CL(0.3,0)");
    const auto a = start_end_loss(0.2, 0.8, 0.2, 0.8, 1.0);
    near(a.ss + a.sel, 0.0, "perfect start/end");
    const auto b = start_end_loss(0.5, 0.9, 0.2, 0.5, 1.0);
    near(b.ss, 0.25, "ss");
    near(b.sel, 0.25, "sel");
    const auto c = start_end_loss(0.5, 0.9, 0.2, 0.5, 0.0);
    near(c.sel, 0.0, "tc-gated sel");

    grid::TargetGrid t(20);
    grid::PredictionGrid p(20);
    std::mt19937_64 rng(1);
    for (std::size_t k = 0; k < t.cells.size(); ++k) {
        t.cells[k] = rng() % 2 ? GridCell{1, 0.2, 0.7} : GridCell{};
        p.cells[k] = {t.cells[k].confidence == 1 ? 0.99 : 0.01, t.cells[k].start_frac, t.cells[k].end_frac};
    }
    near(grid_loss(p, t).total, 0.0, "prediction = target");
    grid::TargetGrid t1(1);
    grid::PredictionGrid p1(1);
    p1.cells.assign(3, GridCell{0.01, 0.01, 0.01});
    t1.at(0, WaveClass::P) = {1.0, 0.2, 0.5};
    p1.at(0, WaveClass::P) = {0.5, 0.5, 0.9};
    near(grid_loss(p1, t1).total, 0.5, "1x1 grid");
    std::uniform_real_distribution<double> u(0.01, 0.99);
    double pq = 0;
    for (std::size_t i = 0; i < t.n_intervals; ++i)
        for (WaveClass cl : kWaveClasses) {
            p.at(i, cl) = {u(rng), u(rng), u(rng)};
            if (cl != WaveClass::T) pq += cell_loss(p.at(i, cl), t.at(i, cl)).total();
        }
    t.label_mask = {true, true, false};
    near(grid_loss(p, t).total, pq, "masked T");

    std::uniform_real_distribution<double> v(0.0, 1.0);
    std::size_t bad = 0;
    for (int i = 0; i < 100000; ++i) {
        const double pc = std::clamp(v(rng), 1e-9, 1 - 1e-9), tc = static_cast<double>(rng() % 2);
        const double cl = confidence_loss(pc, tc);
        if (std::abs(pc - tc) < 0.25 ? cl != 0 : cl != (pc - tc) * (pc - tc)) ++bad;
        const double ps = v(rng), pe = v(rng), ts = v(rng), te = v(rng);
        const auto s1 = start_end_loss(ps, pe, ts, te, 1.0), s0 = start_end_loss(ps, pe, ts, te, 0.0);
        if (s0.sel != 0 || (s1.ss < 0.15 ? s1.sel != 0 : s1.sel != s1.ss) || cl < 0) ++bad;
    }
    o.check(bad == 0, std::to_string(bad) + " property violations");
    o.note("9 examples, 1e5 random inputs");
    return o;
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness

Outcome gradient_correctness() {
    Outcome o;
    const auto base = nn::ModelConfig::tiny();
    double worst = 0;
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto c = base;
        c.seed = seed;
        const auto p = nn::build_model<double>(c);
        std::mt19937_64 rng(100 + seed);
        std::uniform_real_distribution<float> u(0.0f, 3.0f);
        dsp::FeatureTensor f{c.n_leads, c.n_mel, c.n_frames, {}};
        f.values.resize(c.n_leads * c.n_mel * c.n_frames);
        for (auto& x : f.values) x = u(rng);
        grid::TargetGrid t(c.n_intervals);
        for (auto& cell : t.cells) cell = rng() % 2 ? grid::GridCell{1, 0.0, 1.0} : grid::GridCell{};
        if (nn::near_loss_threshold(nn::forward(p, f), t, 0.02)) continue;
        const auto r = nn::gradient_check(p, f, t, 1e-5, 200, seed);
        worst = std::max(worst, r.max_rel_deviation);
        ++checked;
    }
    o.check(checked >= 3, "too few samples away from thresholds");
    o.check(worst < 1e-3, "max relative deviation " + fmt("%.3g", worst));
    o.note(std::to_string(checked) + " samples, max rel dev " + fmt("%.2e", worst));
    return o;
}

// ---------------------------------------------------------------------------
// 3. Codec round-trip

Outcome codec_roundtrip() {
    Outcome o;
    const grid::GridConfig cfg;
    std::mt19937_64 rng(2024);
    std::size_t failures = 0, segments = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto a = testsupport::random_clean_set(rng, cfg.record_len);
        const auto target = grid::encode_targets(a, cfg);
        grid::PredictionGrid p(target.n_intervals);
        for (std::size_t k = 0; k < p.cells.size(); ++k) {
            const auto& c = target.cells[k];
            p.cells[k] = {c.confidence == 1 ? 0.999 : 0.001, c.start_frac, c.end_frac};
        }
        const auto back = grid::postprocess(grid::decode_grid(p, cfg), cfg, a.record_id);
        bool same = back.segments.size() == a.segments.size();
        for (std::size_t i = 0; same && i < a.segments.size(); ++i) same = same_extent(back.segments[i], a.segments[i]);
        failures += !same;
        segments += a.segments.size();
    }
    o.check(failures == 0, std::to_string(failures) + " of 1000 sets changed");
    o.note("1000 sets, " + std::to_string(segments) + " segments");
    return o;
}

// ---------------------------------------------------------------------------
// 4. Matching oracle

std::size_t brute_max_matching(const std::vector<double>& p, const std::vector<double>& t, double tol) {
    std::vector<bool> used(t.size(), false);
    std::function<std::size_t(std::size_t)> go = [&](std::size_t i) -> std::size_t {
        if (i == p.size()) return 0;
        std::size_t best = go(i + 1);
        for (std::size_t j = 0; j < t.size(); ++j)
            if (!used[j] && std::abs(p[i] - t[j]) <= tol) {
                used[j] = true;
                best = std::max(best, 1 + go(i + 1));
                used[j] = false;
            }
        return best;
    };
    return go(0);
}

Outcome matching_oracle() {
    using namespace eval;
    Outcome o;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1000);
    std::size_t mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> p(rng() % 9), q(rng() % 9);
        for (auto& v : p) v = std::round(u(rng));
        for (auto& v : q) v = std::round(u(rng));
        std::vector<FiducialPoint> fp, ft;
        for (double v : p) fp.push_back({FiducialKind::QRS_on, v, std::nullopt});
        for (double v : q) ft.push_back({FiducialKind::QRS_on, v, std::nullopt});
        const double tol = 20 + static_cast<double>(rng() % 150);
        mismatches += match_points(fp, ft, tol).tp() != brute_max_matching(p, q, tol);
    }
    o.check(mismatches == 0, std::to_string(mismatches) + " of 1000 TP counts differ");

    auto one = [](double v) { return std::vector<FiducialPoint>{{FiducialKind::P_on, v, std::nullopt}}; };
    const auto a = match_points(one(100), one(180), 150);
    o.check(a.tp() == 1 && a.errors_ms == std::vector<double>{-80}, "[100] vs [180]");
    const auto b = match_points(one(100), one(300), 150);
    o.check(b.tp() == 0 && b.fp() == 1 && b.fn() == 1, "[100] vs [300]");
    std::vector<FiducialPoint> two = {{FiducialKind::P_on, 100, {}}, {FiducialKind::P_on, 120, {}}};
    const auto c = match_points(two, one(110), 150);
    o.check(c.tp() == 1 && c.fp() == 1 && c.fn() == 0, "[100,120] vs [110]");
    const auto m = point_metrics(9, 1, 1, std::vector<double>{});
    o.check(*m.se == 0.9 && *m.ppv == 0.9 && std::abs(*m.f1 - 0.9) < 1e-15, "9/1/1 metrics");
    const auto e = point_metrics(0, 0, 0, std::vector<double>{});
    o.check(!e.se && !e.ppv && !e.f1, "empty metrics absent");
    const auto s = point_metrics(2, 0, 0, std::vector<double>{-10, 10});
    o.check(*s.err_mean_ms == 0 && *s.err_std_ms == 10, "error mean/std");
    o.note("1000 oracle instances, 6 hand-counted examples");
    return o;
}

// ---------------------------------------------------------------------------
// 5 and 6. Desk-scale training runs

std::vector<selftrain::LabeledRecord> corpus(std::size_t n, std::uint64_t seed, const std::string& prefix) {
    std::vector<selftrain::LabeledRecord> out;
    for (auto& p : synth_corpus(n, seed, prefix)) out.push_back(std::move(p));
    return out;
}

std::string f1_summary(const eval::EvalReport& r) {
    std::string s;
    for (auto k : eval::kKinds) s += std::string(s.empty() ? "" : " ") + std::string(eval::to_string(k)) + "=" +
                                     (r[k].f1 ? fmt("%.3f", *r[k].f1) : std::string("n/a"));
    return s;
}

Outcome overfit() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const PipelineConfig cfg;
    const auto data = corpus(20, 1, "fit_");
    std::vector<Example> ex;
    for (const auto& [r, a] : data) ex.push_back(make_example(r, a, cfg));
    FeatureCache cache(cfg);
    const nn::TrainConfig tc;
    const auto res = nn::train(nn::build_model<float>(cfg.model), ex, tc, cfg, &cache);
    const auto rep = selftrain::evaluate_model(res.params, data, cfg, {});
    const double secs = seconds_since(t0);
    for (auto k : eval::kKinds) {
        const bool qrs = k == eval::FiducialKind::QRS_on || k == eval::FiducialKind::QRS_off;
        const double need = qrs ? 0.95 : 0.90;
        o.check(rep[k].f1 && *rep[k].f1 >= need, std::string(eval::to_string(k)) + " F1 below " + fmt("%.2f", need));
    }
    const double ratio = res.history.back() / res.history.front();
    o.check(ratio < 0.1, "final/initial loss " + fmt("%.3f", ratio));
    o.check(secs <= 600, "took " + fmt("%.0f", secs) + " s");
    o.note(f1_summary(rep));
    o.note("loss " + fmt("%.2f", res.history.front()) + " -> " + fmt("%.3f", res.history.back()));
    o.note(fmt("%.0f s", secs));
    return o;
}

Outcome selftraining() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const PipelineConfig cfg;
    const auto labeled = corpus(20, 11, "lab_");
    std::vector<EcgRecord> unlabeled;
    for (auto& [r, a] : corpus(40, 12, "unl_")) unlabeled.push_back(r);
    const auto held_out = corpus(20, 13, "ho_");
    selftrain::SelfTrainConfig st;
    st.top_percent = 50;
    const auto res = selftrain::selftrain_run(labeled, unlabeled, cfg, st);
    o.check(res.stages.size() == 4, "expected 4 stage reports");

    const auto& m = res.manifest;
    for (WaveClass c : kWaveClasses) {
        const int k = class_index(c);
        o.check(m.selected[k].size() == 20, std::string(to_string(c)) + " selected " + std::to_string(m.selected[k].size()));
        double min_sel = 1;
        for (const auto& id : m.selected[k]) min_sel = std::min(min_sel, m.scores.at(id)[k].mean);
        for (const auto& [id, mask] : m.masks)
            if (!mask[k]) o.check(m.scores.at(id)[k].mean <= min_sel, "threshold invariant broken for " + id);
    }
    const auto base = selftrain::evaluate_model(res.base, held_out, cfg, {});
    const auto fin = selftrain::evaluate_model(res.final_model, held_out, cfg, {});
    for (auto k : eval::kKinds) {
        const double b = base[k].f1.value_or(0), f = fin[k].f1.value_or(0);
        o.check(f >= b - 0.02, std::string(eval::to_string(k)) + " fell from " + fmt("%.3f", b) + " to " + fmt("%.3f", f));
    }
    const double secs = seconds_since(t0);
    o.check(secs <= 1800, "took " + fmt("%.0f", secs) + " s");
    o.note("held-out baseline " + f1_summary(base));
    o.note("final " + f1_summary(fin));
    o.note(fmt("%.0f s", secs));
    return o;
}

// ---------------------------------------------------------------------------
// 7. DSP contracts

double fitted_amplitude(const dsp::Signal& x, double f, double fs, std::size_t lo, std::size_t hi) {
    double ss = 0, sc = 0, cc = 0, xs = 0, xc = 0;
    for (std::size_t i = lo; i < hi; ++i) {
        const double w = 2 * std::numbers::pi * f * static_cast<double>(i) / fs;
        const double s = std::sin(w), c = std::cos(w);
        ss += s * s;
        cc += c * c;
        sc += s * c;
        xs += x[i] * s;
        xc += x[i] * c;
    }
    const double det = ss * cc - sc * sc;
    return std::hypot((xs * cc - xc * sc) / det, (xc * ss - xs * sc) / det);
}

dsp::Signal tone(double f, double fs, std::size_t n) {
    dsp::Signal x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / fs);
    return x;
}

Outcome dsp_contracts() {
    Outcome o;
    // Resampling: DFT peak of the output within one bin of the input tone.
    struct Case { int from, to; double f; };
    for (const auto c : {Case{500, 1000, 7}, Case{1000, 360, 50}, Case{360, 1000, 60}}) {
        const auto y = dsp::resample(tone(c.f, c.from, static_cast<std::size_t>(c.from) * 4), c.from, c.to);
        const std::size_t n = y.size();
        std::size_t best = 1;
        double best_mag = -1;
        for (std::size_t k = 1; k <= n / 2; ++k) {
            std::complex<double> acc = 0;
            for (std::size_t i = 0; i < n; ++i)
                acc += y[i] * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(k * i % n) / static_cast<double>(n));
            if (std::abs(acc) > best_mag) best_mag = std::abs(acc), best = k;
        }
        const double bin = static_cast<double>(c.to) / static_cast<double>(n);
        o.check(std::abs(static_cast<double>(best) * bin - c.f) <= bin,
                "resample " + std::to_string(c.from) + "->" + std::to_string(c.to) + " peak off");
    }
    // zscore moments.
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(5, 3);
    dsp::Signal x(5000);
    for (auto& v : x) v = nd(rng);
    const auto z = dsp::zscore(x).values;
    double mean = 0, var = 0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(z.size());
    for (double v : z) var += (v - mean) * (v - mean);
    o.check(std::abs(mean) <= 1e-6 && std::abs(std::sqrt(var / static_cast<double>(z.size())) - 1) <= 1e-6, "zscore moments");
    // Notch.
    const double fs = 1000;
    const double att = 20 * std::log10(fitted_amplitude(dsp::notch(tone(50, fs, 10000), fs, 50, 30), 50, fs, 2000, 8000));
    const double pass = 20 * std::log10(fitted_amplitude(dsp::notch(tone(10, fs, 10000), fs, 50, 30), 10, fs, 2000, 8000));
    o.check(att <= -20, "notch center " + fmt("%.1f dB", att));
    o.check(std::abs(pass) <= 1, "notch 10 Hz " + fmt("%.2f dB", pass));
    // Augmentation frequency: 6 sigma of Binomial(1e4, 0.5) is 300.
    dsp::AugmentConfig ac;
    std::mt19937_64 arng(99);
    int bp = 0, nt = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto d = dsp::draw_augment(ac, arng);
        bp += d.bandpass;
        nt += d.notch;
    }
    o.check(std::abs(bp - 5000) <= 300 && std::abs(nt - 5000) <= 300, "augment counts " + std::to_string(bp) + "/" + std::to_string(nt));
    o.note("notch " + fmt("%.1f dB", att) + " / " + fmt("%.2f dB", pass) + ", augment " + std::to_string(bp) + "/" + std::to_string(nt));
    return o;
}

// ---------------------------------------------------------------------------
// 8. Score math

Outcome score_math() {
    Outcome o;
    auto grid_of = [](const std::vector<double>& conf) {
        grid::PredictionGrid g(conf.size());
        for (auto& c : g.cells) c = {0.5, 0.5, 0.5};
        for (std::size_t i = 0; i < conf.size(); ++i) g.at(i, WaveClass::QRS).confidence = conf[i];
        return g;
    };
    const int q = class_index(WaveClass::QRS);
    const auto s = selftrain::delineation_scores(grid_of({0.9, 0.1, 0.5}));
    o.check(std::abs(s[q].mean - 0.8 / 3) <= 1e-12 && std::abs(s[q].std - std::sqrt(2.0) * 0.4 / 3) <= 1e-12,
            "[0.9,0.1,0.5] example");
    const auto hi = selftrain::delineation_scores(grid_of({0.99, 0.99}));
    const auto lo = selftrain::delineation_scores(grid_of({0.01, 0.01}));
    o.check(std::abs(hi[q].mean - 0.49) <= 1e-12 && std::abs(lo[q].mean - 0.49) <= 1e-12, "0.99 / 0.01 examples");
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    std::size_t bad = 0;
    for (int i = 0; i < 100000; ++i) {
        const double c = u(rng);
        const auto a = selftrain::delineation_scores(grid_of({c}));
        const auto b = selftrain::delineation_scores(grid_of({1 - c}));
        bad += std::abs(a[q].mean - b[q].mean) > 1e-12 || a[q].mean < 0 || a[q].mean > 0.5;
    }
    o.check(bad == 0, std::to_string(bad) + " reflection violations");
    o.note("3 examples, 1e5 reflections");
    return o;
}

// ---------------------------------------------------------------------------
// 9. CLI closure

/// The subset of JSON Schema the report schema uses: type, required, properties,
/// additionalProperties=false, minimum, maximum and local $ref.
bool schema_valid(const nlohmann::json& v, const nlohmann::json& s, const nlohmann::json& root, std::string& why,
                  const std::string& at = "$") {
    if (s.contains("$ref")) {
        const std::string ref = s["$ref"];
        return schema_valid(v, root["$defs"][ref.substr(ref.rfind('/') + 1)], root, why, at);
    }
    if (s.contains("type")) {
        auto is = [&](const std::string& t) {
            if (t == "object") return v.is_object();
            if (t == "integer") return v.is_number_integer();
            if (t == "number") return v.is_number();
            if (t == "null") return v.is_null();
            if (t == "string") return v.is_string();
            if (t == "array") return v.is_array();
            return false;
        };
        bool ok = false;
        if (s["type"].is_array()) for (const auto& t : s["type"]) ok = ok || is(t);
        else ok = is(s["type"]);
        if (!ok) return why = at + ": wrong type", false;
    }
    if (v.is_number()) {
        if (s.contains("minimum") && v.get<double>() < s["minimum"].get<double>()) return why = at + ": below minimum", false;
        if (s.contains("maximum") && v.get<double>() > s["maximum"].get<double>()) return why = at + ": above maximum", false;
    }
    if (v.is_object()) {
        for (const auto& r : s.value("required", nlohmann::json::array()))
            if (!v.contains(r.get<std::string>())) return why = at + ": missing " + r.get<std::string>(), false;
        const auto props = s.value("properties", nlohmann::json::object());
        for (const auto& [k, sub] : v.items()) {
            if (props.contains(k)) {
                if (!schema_valid(sub, props[k], root, why, at + "." + k)) return false;
            } else if (s.contains("additionalProperties") && s["additionalProperties"] == false) {
                return why = at + ": unexpected key " + k, false;
            }
        }
    }
    return true;
}

/// Well-formedness only: balanced tags, quoted attributes, declaration and comments skipped.
bool xml_well_formed(const std::string& s, std::string& why) {
    std::vector<std::string> stack;
    std::size_t i = 0, roots = 0;
    while ((i = s.find('<', i)) != std::string::npos) {
        const auto end = s.find('>', i);
        if (end == std::string::npos) return why = "unterminated tag", false;
        std::string tag = s.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.starts_with("?") || tag.starts_with("!")) continue;
        if (std::count(tag.begin(), tag.end(), '"') % 2) return why = "unbalanced quotes in <" + tag + ">", false;
        if (tag.starts_with("/")) {
            if (stack.empty() || stack.back() != tag.substr(1)) return why = "mismatched </" + tag.substr(1) + ">", false;
            stack.pop_back();
            continue;
        }
        const bool self_closing = tag.ends_with("/");
        const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
        if (name.empty()) return why = "empty tag name", false;
        if (stack.empty()) ++roots;
        if (!self_closing) stack.push_back(name);
    }
    if (!stack.empty()) return why = "unclosed <" + stack.back() + ">", false;
    if (roots != 1) return why = "expected one root element", false;
    return true;
}

Outcome cli_closure() {
    Outcome o;
    testsupport::TempDir tmp;
    const std::string w = tmp.path().string();
    auto run = [&](std::vector<std::string> args) {
        args.insert(args.begin(), {"ecgcode", "--workdir", w, "--quiet"});
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        if (code != 0) o.check(false, args[4] + " exited " + std::to_string(code) + ": " + err.str());
        return code == 0;
    };
    if (!run({"synth", "--n", "3", "--out", "data"})) return o;
    if (!run({"train", "--data", "data", "--out", "model", "--epochs", "2"})) return o;
    if (!run({"predict", "--model", "model", "--data", "data", "--out", "pred"})) return o;
    if (!run({"eval", "--pred", "pred", "--data", "data", "--out", "report"})) return o;
    if (!run({"eval", "--pred", "data", "--data", "data", "--out", "identity"})) return o;
    if (!run({"plot", "--data", "data", "--id", "rec_0000", "--out", "rec_0000.svg"})) return o;

    const auto schema = detail::parse_json_file(fs::path(ECGCODE_SCHEMA_DIR) / "eval_report.schema.json");
    for (const char* name : {"report.json", "identity.json"}) {
        std::string why;
        o.check(schema_valid(detail::parse_json_file(tmp / name), schema, schema, why), std::string(name) + " " + why);
    }
    const auto id = detail::parse_json_file(tmp / "identity.json");
    for (auto k : eval::kKinds) {
        const auto& m = id["per_kind"][std::string(eval::to_string(k))];
        o.check(m["f1"] == 1.0 && m["err_mean_ms"] == 0.0 && m["err_std_ms"] == 0.0,
                std::string(eval::to_string(k)) + " identity metrics");
    }
    const std::string svg = detail::read_text(tmp / "rec_0000.svg");
    std::string why;
    o.check(xml_well_formed(svg, why), "SVG: " + why);
    std::size_t rects = 0;
    for (auto p = svg.find("class=\"segment "); p != std::string::npos; p = svg.find("class=\"segment ", p + 1)) ++rects;
    const auto truth = read_annotations(annotation_path(tmp / "data", "rec_0000"));
    o.check(rects == truth.segments.size(),
            "SVG has " + std::to_string(rects) + " regions for " + std::to_string(truth.segments.size()) + " segments");
    o.note("5 subcommands, 2 reports schema-valid, " + std::to_string(rects) + " SVG regions");
    return o;
}

} // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        Outcome (*fn)();
    };
    const std::vector<Criterion> all = {
        {1, "loss exactness", loss_exactness},      {2, "gradient correctness", gradient_correctness},
        {3, "codec round-trip", codec_roundtrip},   {4, "matching oracle", matching_oracle},
        {5, "desk-scale overfit", overfit},         {6, "self-training pipeline", selftraining},
        {7, "DSP contracts", dsp_contracts},        {8, "score math", score_math},
        {9, "CLI closure", cli_closure},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << " ("
                  << fmt("%.1f s", seconds_since(t0)) << "): " << o.detail << std::endl;
    }
    return failed ? 1 : 0;
}
