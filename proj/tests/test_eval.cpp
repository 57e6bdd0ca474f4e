#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "ecgcode/eval.hpp"

using namespace ecgcode;
using namespace ecgcode::eval;

namespace {

std::vector<FiducialPoint> pts(std::initializer_list<double> t, FiducialKind k = FiducialKind::QRS_on) {
    std::vector<FiducialPoint> out;
    for (double v : t) out.push_back({k, v, std::nullopt});
    return out;
}

/// Maximum-cardinality matching by exhaustive search; fine for up to 8 points a side.
std::size_t max_matching(const std::vector<double>& p, const std::vector<double>& t, double tol) {
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

AnnotationSet beats(const std::string& id, std::int64_t start, int n, std::int64_t period = 800) {
    AnnotationSet s;
    s.record_id = id;
    for (int b = 0; b < n; ++b) {
        const auto o = start + b * period;
        s.segments.push_back({WaveClass::P, o, o + 90, std::nullopt});
        s.segments.push_back({WaveClass::QRS, o + 150, o + 250, std::nullopt});
        s.segments.push_back({WaveClass::T, o + 400, o + 600, std::nullopt});
    }
    s.normalize();
    return s;
}

} // namespace

TEST(Match, Examples) {
    auto a = match_points(pts({100}), pts({180}), 150);
    EXPECT_EQ(a.tp(), 1u);
    EXPECT_EQ(a.errors_ms, std::vector<double>{-80});
    auto b = match_points(pts({100}), pts({300}), 150);
    EXPECT_EQ(b.tp(), 0u);
    EXPECT_EQ(b.fp(), 1u);
    EXPECT_EQ(b.fn(), 1u);
    auto c = match_points(pts({100, 120}), pts({110}), 150);
    EXPECT_EQ(c.tp(), 1u);
    EXPECT_EQ(c.fp(), 1u);
    EXPECT_EQ(c.fn(), 0u);
    // Tolerance is inclusive.
    EXPECT_EQ(match_points(pts({0}), pts({150}), 150).tp(), 1u);
    EXPECT_EQ(match_points(pts({0}), pts({150.001}), 150).tp(), 0u);
}

TEST(Match, Preconditions) {
    EXPECT_THROW(match_points(pts({1}), pts({1}), 0), ValidationError);
    EXPECT_THROW(match_points(pts({1}), pts({1}, FiducialKind::T_off), 150), ValidationError);
    const auto e = match_points({}, {}, 150);
    EXPECT_EQ(e.tp() + e.fp() + e.fn(), 0u);
}

TEST(Match, AgreesWithExhaustiveMaximumMatching) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1000);
    for (int t = 0; t < 2000; ++t) {
        const std::size_t np = rng() % 9, nt = rng() % 9;
        const double tol = 10 + static_cast<double>(rng() % 150);
        std::vector<double> p(np), q(nt);
        for (auto& v : p) v = std::round(u(rng));
        for (auto& v : q) v = std::round(u(rng));
        std::vector<FiducialPoint> fp, ft;
        for (double v : p) fp.push_back({FiducialKind::P_on, v, std::nullopt});
        for (double v : q) ft.push_back({FiducialKind::P_on, v, std::nullopt});
        const auto r = match_points(fp, ft, tol);
        ASSERT_EQ(r.tp(), max_matching(p, q, tol)) << "trial " << t;
        ASSERT_EQ(r.tp() + r.fp(), np);
        ASSERT_EQ(r.tp() + r.fn(), nt);
        for (std::size_t k = 0; k < r.pairs.size(); ++k) {
            const auto [i, j] = r.pairs[k];
            ASSERT_LE(std::abs(p[i] - q[j]), tol);
            ASSERT_EQ(r.errors_ms[k], p[i] - q[j]);
        }
        // Input order does not change counts.
        std::shuffle(fp.begin(), fp.end(), rng);
        ASSERT_EQ(match_points(fp, ft, tol).tp(), r.tp());
        // Widening the tolerance never loses matches.
        ASSERT_GE(match_points(fp, ft, tol + 50).tp(), r.tp());
    }
}

TEST(Metrics, Examples) {
    const auto m = point_metrics(9, 1, 1, std::vector<double>{});
    EXPECT_DOUBLE_EQ(*m.se, 0.9);
    EXPECT_DOUBLE_EQ(*m.ppv, 0.9);
    EXPECT_DOUBLE_EQ(*m.f1, 0.9);
    EXPECT_FALSE(m.err_mean_ms);

    const auto empty = point_metrics(0, 0, 0, std::vector<double>{});
    EXPECT_FALSE(empty.se);
    EXPECT_FALSE(empty.ppv);
    EXPECT_FALSE(empty.f1);

    const auto e = point_metrics(2, 0, 0, std::vector<double>{-10, 10});
    EXPECT_DOUBLE_EQ(*e.err_mean_ms, 0.0);
    EXPECT_DOUBLE_EQ(*e.err_std_ms, 10.0);

    const auto miss = point_metrics(0, 3, 2, std::vector<double>{});
    EXPECT_EQ(*miss.se, 0.0);
    EXPECT_EQ(*miss.f1, 0.0);
    const auto no_pred = point_metrics(0, 0, 4, std::vector<double>{});
    EXPECT_EQ(*no_pred.se, 0.0);
    EXPECT_FALSE(no_pred.ppv);
    EXPECT_FALSE(no_pred.f1);
}

TEST(Metrics, F1IsHarmonicMean) {
    for (std::size_t tp = 1; tp < 20; ++tp)
        for (std::size_t fp = 0; fp < 6; ++fp)
            for (std::size_t fn = 0; fn < 6; ++fn) {
                const auto m = point_metrics(tp, fp, fn, std::vector<double>{});
                ASSERT_NEAR(*m.f1, 2 * *m.se * *m.ppv / (*m.se + *m.ppv), 1e-12);
            }
}

TEST(Dataset, IdentityIsPerfect) {
    std::vector<AnnotationSet> truth = {beats("a", 100, 10), beats("b", 300, 9)};
    std::map<std::string, RecordTiming> timing = {{"a", {1000, 10000}}, {"b", {1000, 10000}}};
    const auto r = evaluate_dataset(truth, truth, timing, {});
    EXPECT_EQ(r.n_records, 2u);
    for (auto k : kKinds) {
        EXPECT_EQ(*r[k].f1, 1.0);
        EXPECT_EQ(*r[k].err_mean_ms, 0.0);
        EXPECT_EQ(*r[k].err_std_ms, 0.0);
        EXPECT_EQ(r[k].tp, 19u);
    }
    EXPECT_EQ(r.aggregate.tp, 6u * 19);
}

TEST(Dataset, OrderDoesNotMatter) {
    std::vector<AnnotationSet> truth = {beats("a", 100, 10), beats("b", 300, 9)};
    std::vector<AnnotationSet> pred = {beats("b", 330, 9), beats("a", 90, 11)};
    std::map<std::string, RecordTiming> timing = {{"a", {1000, 10000}}, {"b", {1000, 10000}}};
    const auto x = evaluate_dataset(pred, truth, timing, {});
    std::reverse(pred.begin(), pred.end());
    std::reverse(truth.begin(), truth.end());
    const auto y = evaluate_dataset(pred, truth, timing, {});
    EXPECT_EQ(to_json(x), to_json(y));
}

TEST(Dataset, EdgeExclusion) {
    AnnotationSet t = beats("a", 100, 10);
    std::map<std::string, RecordTiming> timing = {{"a", {1000, 10000}}};
    EvalConfig cfg;
    cfg.exclude_edges_s = 0.5;
    const auto r = evaluate_dataset({t}, {t}, timing, cfg);
    // First beat P on at 100 ms, P off at 190 ms fall inside the first 0.5 s.
    EXPECT_EQ(r[FiducialKind::P_on].tp, 9u);
    EXPECT_EQ(r[FiducialKind::T_off].tp, 10u);
    // Sampling rate is honoured in the ms conversion.
    cfg.exclude_edges_s = 0.15;
    std::map<std::string, RecordTiming> t500 = {{"a", {500, 10000}}};
    EXPECT_EQ(evaluate_dataset({t}, {t}, timing, cfg)[FiducialKind::P_on].tp, 9u);
    EXPECT_EQ(evaluate_dataset({t}, {t}, t500, cfg)[FiducialKind::P_on].tp, 10u);
}

TEST(Dataset, JitterOracle) {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> jit(-40, 40);
    std::vector<AnnotationSet> truth, pred;
    std::map<std::string, RecordTiming> timing;
    for (int r = 0; r < 40; ++r) {
        const auto id = "r" + std::to_string(r);
        auto t = beats(id, 100, 12);
        auto p = t;
        for (auto& s : p.segments) {
            s.onset += jit(rng);
            s.offset += jit(rng);
        }
        p.normalize();
        truth.push_back(t);
        pred.push_back(p);
        timing[id] = {1000, 10000};
    }
    const auto rep = evaluate_dataset(pred, truth, timing, {});
    for (auto k : kKinds) {
        EXPECT_EQ(*rep[k].f1, 1.0);
        EXPECT_LE(std::abs(*rep[k].err_mean_ms), 5.0);
        EXPECT_NEAR(*rep[k].err_std_ms, std::sqrt(81.0 * 81.0 - 1) / std::sqrt(12.0), 5.0);
    }
}

TEST(Dataset, Errors) {
    std::vector<AnnotationSet> truth = {beats("a", 100, 3)};
    std::map<std::string, RecordTiming> timing = {{"a", {1000, 10000}}};
    EXPECT_THROW(evaluate_dataset({}, truth, timing, {}), ValidationError);
    EXPECT_THROW(evaluate_dataset({beats("z", 0, 1)}, truth, timing, {}), ValidationError);
    EXPECT_THROW(evaluate_dataset(truth, {truth[0], truth[0]}, timing, {}), ValidationError);
    EXPECT_THROW(evaluate_dataset(truth, truth, {}, {}), ValidationError);
    EvalConfig bad;
    bad.tolerance_ms = -1;
    EXPECT_THROW(evaluate_dataset(truth, truth, timing, bad), ValidationError);
}

TEST(Report, JsonAndMarkdown) {
    std::vector<AnnotationSet> truth = {beats("a", 100, 10)};
    std::vector<AnnotationSet> pred = {AnnotationSet{"a", {}}};
    std::map<std::string, RecordTiming> timing = {{"a", {1000, 10000}}};
    const auto r = evaluate_dataset(pred, truth, timing, {});
    const auto j = to_json(r);
    for (const char* k : {"P_on", "P_off", "QRS_on", "QRS_off", "T_on", "T_off"}) {
        ASSERT_TRUE(j["per_kind"].contains(k));
        EXPECT_EQ(j["per_kind"][k]["se"], 0.0);
        EXPECT_TRUE(j["per_kind"][k]["ppv"].is_null());
        EXPECT_TRUE(j["per_kind"][k]["f1"].is_null());
    }
    EXPECT_EQ(j["config"]["tolerance_ms"], 150.0);
    const auto md = to_markdown(r);
    EXPECT_NE(md.find("| Se |"), std::string::npos);
    EXPECT_NE(md.find("F1-score"), std::string::npos);
    EXPECT_NE(md.find("n/a"), std::string::npos);
}
