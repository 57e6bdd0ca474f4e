#pragma once

// Dead-zone confidence loss and start-end loss over prediction/target grids.

#include <cmath>
#include <vector>

#include "ecgcode/error.hpp"
#include "ecgcode/grid_codec.hpp"

namespace ecgcode::loss {

inline constexpr double kConfidenceDeadZone = 0.25;
inline constexpr double kStartEndDeadZone = 0.15;

struct CellLossBreakdown {
    double cl = 0;
    double sel = 0;
    double ss = 0;
    double total() const { return cl + sel; }
};

namespace detail {
inline void require_finite(std::initializer_list<double> xs, const char* what) {
    for (double x : xs)
        if (!std::isfinite(x)) throw ValidationError(std::string(what) + ": non-finite input");
}
} // namespace detail

/// 0 when |pc - tc| < 0.25, else (pc - tc)^2.
inline double confidence_loss(double pc, double tc) {
    detail::require_finite({pc, tc}, "confidence_loss");
    const double d = pc - tc;
    return std::abs(d) < kConfidenceDeadZone ? 0.0 : d * d;
}

/// d CL / d pc.
inline double confidence_loss_grad(double pc, double tc) {
    const double d = pc - tc;
    return std::abs(d) < kConfidenceDeadZone ? 0.0 : 2.0 * d;
}

struct StartEnd {
    double ss = 0;
    double sel = 0;
};

/// ss = (ps-ts)^2 + (pe-te)^2; sel = 0 when ss < 0.15, else ss * tc.
inline StartEnd start_end_loss(double ps, double pe, double ts, double te, double tc) {
    detail::require_finite({ps, pe, ts, te, tc}, "start_end_loss");
    const double ss = (ps - ts) * (ps - ts) + (pe - te) * (pe - te);
    return {ss, ss < kStartEndDeadZone ? 0.0 : ss * tc};
}

struct StartEndGrad {
    double d_ps = 0;
    double d_pe = 0;
};

inline StartEndGrad start_end_loss_grad(double ps, double pe, double ts, double te, double tc) {
    const double ss = (ps - ts) * (ps - ts) + (pe - te) * (pe - te);
    if (ss < kStartEndDeadZone) return {};
    return {2.0 * (ps - ts) * tc, 2.0 * (pe - te) * tc};
}

inline CellLossBreakdown cell_loss(const grid::GridCell& p, const grid::GridCell& t) {
    const auto se = start_end_loss(p.start_frac, p.end_frac, t.start_frac, t.end_frac, t.confidence);
    return {confidence_loss(p.confidence, t.confidence), se.sel, se.ss};
}

struct GridLoss {
    double total = 0;
    std::vector<CellLossBreakdown> cells; ///< same layout as the grids; masked cells are zero
};

namespace detail {
// Pairwise summation gives a fixed, order-stable reduction.
inline double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 8) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}
} // namespace detail

/// Sum of CL + SEL over all unmasked cells.
inline GridLoss grid_loss(const grid::PredictionGrid& pred, const grid::TargetGrid& target) {
    if (pred.n_intervals != target.n_intervals || pred.cells.size() != target.cells.size())
        throw ValidationError("grid_loss: shape mismatch");
    GridLoss out;
    out.cells.resize(pred.cells.size());
    std::vector<double> terms(pred.cells.size(), 0.0);
    for (std::size_t i = 0; i < pred.n_intervals; ++i) {
        for (WaveClass c : kWaveClasses) {
            if (!target.label_mask[class_index(c)]) continue;
            const std::size_t k = i * kNumClasses + class_index(c);
            out.cells[k] = cell_loss(pred.cells[k], target.cells[k]);
            terms[k] = out.cells[k].total();
        }
    }
    out.total = detail::pairwise_sum(terms.data(), terms.size());
    return out;
}

/// d loss / d (confidence, start, end) per cell; masked cells get zero.
inline std::vector<grid::GridCell> grid_loss_grad(const grid::PredictionGrid& pred, const grid::TargetGrid& target) {
    if (pred.n_intervals != target.n_intervals || pred.cells.size() != target.cells.size())
        throw ValidationError("grid_loss_grad: shape mismatch");
    std::vector<grid::GridCell> g(pred.cells.size());
    for (std::size_t i = 0; i < pred.n_intervals; ++i) {
        for (WaveClass c : kWaveClasses) {
            if (!target.label_mask[class_index(c)]) continue;
            const std::size_t k = i * kNumClasses + class_index(c);
            const auto& p = pred.cells[k];
            const auto& t = target.cells[k];
            const auto se = start_end_loss_grad(p.start_frac, p.end_frac, t.start_frac, t.end_frac, t.confidence);
            g[k] = {confidence_loss_grad(p.confidence, t.confidence), se.d_ps, se.d_pe};
        }
    }
    return g;
}

} // namespace ecgcode::loss
