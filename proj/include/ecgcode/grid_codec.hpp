#pragma once

// Segment annotations <-> per-interval grid cells, plus merge/drop post-processing.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ecgcode/error.hpp"
#include "ecgcode/signal_io.hpp"

namespace ecgcode::grid {

struct GridConfig {
    std::size_t n_intervals = 200;
    std::int64_t record_len = 10000;
    double conf_threshold = 0.5;
    std::int64_t merge_gap = 300;
    std::int64_t min_len = 50;

    void validate() const {
        if (n_intervals == 0 || record_len <= 0) throw ValidationError("grid: n_intervals and record_len must be positive");
        if (record_len % static_cast<std::int64_t>(n_intervals) != 0)
            throw ValidationError("grid: record_len must be divisible by n_intervals");
        if (!(conf_threshold > 0 && conf_threshold < 1)) throw ValidationError("grid: conf_threshold must lie in (0,1)");
        if (merge_gap < 0) throw ValidationError("grid: merge_gap must be >= 0");
        if (min_len < 1) throw ValidationError("grid: min_len must be >= 1");
    }
    std::int64_t interval_len() const { return record_len / static_cast<std::int64_t>(n_intervals); }
};

struct GridCell {
    double confidence = 0;
    double start_frac = 0;
    double end_frac = 0;
    bool operator==(const GridCell&) const = default;
};

/// n_intervals x {P, QRS, T} cells. The label mask marks which classes carry supervision.
template <class Tag>
struct Grid {
    std::size_t n_intervals = 0;
    std::vector<GridCell> cells;
    std::array<bool, kNumClasses> label_mask{true, true, true};

    Grid() = default;
    explicit Grid(std::size_t n) : n_intervals(n), cells(n * kNumClasses) {}

    GridCell& at(std::size_t interval, WaveClass c) { return cells[interval * kNumClasses + class_index(c)]; }
    const GridCell& at(std::size_t interval, WaveClass c) const {
        return cells[interval * kNumClasses + class_index(c)];
    }
    bool operator==(const Grid&) const = default;
};

struct TargetTag;
struct PredictionTag;
using TargetGrid = Grid<TargetTag>;
using PredictionGrid = Grid<PredictionTag>;

/// Per-interval overlap fragments of every segment. Several same-class segments in one interval
/// are covered by their hull.
inline TargetGrid encode_targets(const AnnotationSet& annotations, const GridConfig& cfg) {
    cfg.validate();
    TargetGrid g(cfg.n_intervals);
    const std::int64_t len = cfg.interval_len();
    for (const auto& s : annotations.segments) {
        validate_segment(s);
        if (s.offset > cfg.record_len)
            throw ValidationError("encode_targets: segment offset " + std::to_string(s.offset) + " > record_len");
        const std::int64_t first = s.onset / len;
        const std::int64_t last = (s.offset - 1) / len;
        for (std::int64_t i = first; i <= last; ++i) {
            const std::int64_t lo = std::max(s.onset, i * len);
            const std::int64_t hi = std::min(s.offset, (i + 1) * len);
            if (hi - lo < 1) continue;
            const double start = std::clamp(static_cast<double>(lo - i * len) / static_cast<double>(len), 0.0, 1.0);
            const double end = std::clamp(static_cast<double>(hi - i * len) / static_cast<double>(len), 0.0, 1.0);
            GridCell& cell = g.at(static_cast<std::size_t>(i), s.wave_class);
            if (cell.confidence == 1.0) {
                cell.start_frac = std::min(cell.start_frac, start);
                cell.end_frac = std::max(cell.end_frac, end);
            } else {
                cell = {1.0, start, end};
            }
        }
    }
    return g;
}

/// Every cell above the confidence threshold becomes a raw segment, sorted by onset.
inline std::vector<Segment> decode_grid(const PredictionGrid& pred, const GridConfig& cfg) {
    cfg.validate();
    if (pred.n_intervals != cfg.n_intervals) throw ValidationError("decode_grid: grid size does not match config");
    const std::int64_t len = cfg.interval_len();
    std::vector<Segment> out;
    for (std::size_t i = 0; i < pred.n_intervals; ++i) {
        for (WaveClass c : kWaveClasses) {
            const GridCell& cell = pred.at(i, c);
            if (!(cell.confidence > cfg.conf_threshold)) continue;
            const double base = static_cast<double>(static_cast<std::int64_t>(i) * len);
            auto on = static_cast<std::int64_t>(std::llround(base + cell.start_frac * static_cast<double>(len)));
            auto off = static_cast<std::int64_t>(std::llround(base + cell.end_frac * static_cast<double>(len)));
            on = std::clamp<std::int64_t>(on, 0, cfg.record_len);
            off = std::clamp<std::int64_t>(off, 0, cfg.record_len);
            if (off <= on) continue;
            std::optional<double> conf;
            if (cell.confidence > 0 && cell.confidence < 1) conf = cell.confidence;
            out.push_back({c, on, off, conf});
        }
    }
    std::stable_sort(out.begin(), out.end(), segment_order);
    return out;
}

namespace detail {

inline std::optional<double> max_conf(std::optional<double> a, std::optional<double> b) {
    if (!a) return b;
    if (!b) return a;
    return std::max(*a, *b);
}

} // namespace detail

/// Unite same-class neighbours whose gap (next.onset - prev.offset) is below `merge_gap`.
inline std::vector<Segment> merge_segments(std::vector<Segment> segments, std::int64_t merge_gap) {
    std::stable_sort(segments.begin(), segments.end(), segment_order);
    std::vector<Segment> out;
    std::array<std::optional<std::size_t>, kNumClasses> open{};
    for (const auto& s : segments) {
        auto& slot = open[class_index(s.wave_class)];
        if (slot) {
            Segment& prev = out[*slot];
            if (s.onset - prev.offset < merge_gap) {
                prev.offset = std::max(prev.offset, s.offset);
                prev.confidence = detail::max_conf(prev.confidence, s.confidence);
                continue;
            }
        }
        slot = out.size();
        out.push_back(s);
    }
    std::stable_sort(out.begin(), out.end(), segment_order);
    return out;
}

inline std::vector<Segment> drop_short(std::vector<Segment> segments, std::int64_t min_len) {
    std::erase_if(segments, [&](const Segment& s) { return s.length() < min_len; });
    return segments;
}

/// merge_segments, then drop_short, then sort and validate.
inline AnnotationSet postprocess(std::vector<Segment> segments, const GridConfig& cfg, std::string record_id = {}) {
    cfg.validate();
    AnnotationSet set;
    set.record_id = std::move(record_id);
    set.segments = drop_short(merge_segments(std::move(segments), cfg.merge_gap), cfg.min_len);
    set.normalize(cfg.record_len);
    return set;
}

} // namespace ecgcode::grid
