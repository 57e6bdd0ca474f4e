#pragma once

// Mini-batch training, optimizers, and the finite-difference gradient check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ecgcode/error.hpp"
#include "ecgcode/loss.hpp"
#include "ecgcode/model.hpp"
#include "ecgcode/pipeline.hpp"

namespace ecgcode::nn {

enum class Optimizer { SgdMomentum, Adam };

struct TrainConfig {
    Optimizer optimizer = Optimizer::Adam;
    double learning_rate = 1e-3;
    std::size_t batch_size = 4;
    std::size_t epochs = 150;
    std::uint64_t seed = 0;
    bool augment = true;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (!(learning_rate >= 0) || !std::isfinite(learning_rate))
            throw ValidationError("train: learning rate must be finite and >= 0");
        if (batch_size < 1) throw ValidationError("train: batch size must be >= 1");
        if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
        if (!(momentum >= 0 && momentum < 1) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
            throw ValidationError("train: momentum/beta terms must lie in [0,1)");
    }
};

inline std::string_view to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd-momentum"; }

inline Optimizer parse_optimizer(std::string_view s) {
    if (s == "adam") return Optimizer::Adam;
    if (s == "sgd-momentum" || s == "sgd") return Optimizer::SgdMomentum;
    throw ValidationError("unknown optimizer '" + std::string(s) + "'");
}

template <class T>
class OptimizerState {
public:
    OptimizerState(const TrainConfig& cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<T>& params, std::span<const T> grad) {
        ++t_;
        const double lr = cfg_.learning_rate;
        if (cfg_.optimizer == Optimizer::SgdMomentum) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i] = cfg_.momentum * m_[i] + grad[i];
                params[i] = static_cast<T>(params[i] - lr * m_[i]);
            }
            return;
        }
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = grad[i];
            m_[i] = cfg_.beta1 * m_[i] + (1 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1 - cfg_.beta2) * g * g;
            params[i] = static_cast<T>(params[i] - lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps));
        }
    }

private:
    TrainConfig cfg_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

/// Loss of one sample and its gradient (accumulated into `grad`).
template <class T>
double sample_loss_and_grad(const ModelParams<T>& params, const dsp::FeatureTensor& features,
                            const grid::TargetGrid& target, Workspace<T>& ws, std::vector<T>& grad) {
    const auto pred = forward(params, features, ws);
    for (const auto& c : pred.cells)
        if (!std::isfinite(c.confidence) || !std::isfinite(c.start_frac) || !std::isfinite(c.end_frac))
            throw DivergenceError("train: non-finite model output");
    const double l = loss::grid_loss(pred, target).total;
    const auto d = loss::grid_loss_grad(pred, target);
    backward(params, ws, d, grad);
    return l;
}

struct TrainResult {
    ModelParams<float> params;
    std::vector<double> history; ///< mean per-record loss of each epoch, measured during the epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Deterministic in (params, data order, cfg.seed). Per-record loss is a plain sum over cells;
/// each batch step uses the batch mean.
inline TrainResult train(ModelParams<float> params, const std::vector<Example>& data, const TrainConfig& cfg,
                         const PipelineConfig& pipeline, FeatureCache* cache = nullptr,
                         const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (data.empty()) throw ValidationError("train: empty dataset");
    FeatureCache local(pipeline);
    FeatureCache& features = cache ? *cache : local;

    std::mt19937_64 order_rng(cfg.seed);
    std::mt19937_64 aug_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    OptimizerState<float> opt(cfg, params.values.size());
    Workspace<float> ws;
    std::vector<float> grad(params.values.size());
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        double epoch_loss = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0f);
            double batch_loss = 0;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                dsp::AugmentDraw draw;
                if (cfg.augment) draw = dsp::draw_augment(pipeline.augment, aug_rng);
                const auto& f = features.get(idx, data[idx].record, draw);
                batch_loss += sample_loss_and_grad(params, f, data[idx].target, ws, grad);
            }
            if (!std::isfinite(batch_loss))
                throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                                      std::to_string(start));
            const float inv = 1.0f / static_cast<float>(end - start);
            for (float& g : grad) g *= inv;
            for (float g : grad)
                if (!std::isfinite(g))
                    throw DivergenceError("train: non-finite gradient at epoch " + std::to_string(epoch));
            opt.step(params.values, grad);
            epoch_loss += batch_loss;
        }
        epoch_loss /= static_cast<double>(data.size());
        result.history.push_back(epoch_loss);
        if (on_epoch) on_epoch(epoch, epoch_loss);
    }
    result.params = std::move(params);
    return result;
}

/// Mean per-record loss without augmentation or updates.
template <class T>
double dataset_loss(const ModelParams<T>& params, const std::vector<Example>& data, FeatureCache& cache) {
    double total = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        total += loss::grid_loss(forward(params, cache.get(i, data[i].record)), data[i].target).total;
    return data.empty() ? 0.0 : total / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Gradient check

/// True when any unmasked cell sits within `band` of a loss threshold.
inline bool near_loss_threshold(const grid::PredictionGrid& pred, const grid::TargetGrid& target, double band = 0.01) {
    for (std::size_t i = 0; i < pred.n_intervals; ++i) {
        for (WaveClass c : kWaveClasses) {
            if (!target.label_mask[class_index(c)]) continue;
            const auto& p = pred.at(i, c);
            const auto& t = target.at(i, c);
            if (std::abs(std::abs(p.confidence - t.confidence) - loss::kConfidenceDeadZone) <= band) return true;
            const double ss = loss::start_end_loss(p.start_frac, p.end_frac, t.start_frac, t.end_frac, t.confidence).ss;
            if (std::abs(ss - loss::kStartEndDeadZone) <= band) return true;
        }
    }
    return false;
}

struct GradCheckResult {
    double max_rel_deviation = 0;
    std::size_t coordinates = 0;
    std::vector<double> analytic; ///< full analytic gradient
};

/// Compares the analytic gradient of grid_loss(forward(.)) with central differences on
/// `n_coords` random coordinates (all of them when the model is smaller). Relative deviation
/// is |a - n| / max(|a|, |n|, abs_floor).
inline GradCheckResult gradient_check(const ModelParams<double>& params, const dsp::FeatureTensor& features,
                                      const grid::TargetGrid& target, double epsilon = 1e-5,
                                      std::size_t n_coords = 200, std::uint64_t seed = 0, double abs_floor = 1e-6) {
    Workspace<double> ws;
    GradCheckResult r;
    r.analytic.assign(params.values.size(), 0.0);
    sample_loss_and_grad(params, features, target, ws, r.analytic);

    std::vector<std::size_t> coords(params.values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n_coords < coords.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(n_coords);
    }
    ModelParams<double> probe = params;
    for (std::size_t i : coords) {
        const double orig = probe.values[i];
        probe.values[i] = orig + epsilon;
        const double up = loss::grid_loss(forward(probe, features, ws), target).total;
        probe.values[i] = orig - epsilon;
        const double down = loss::grid_loss(forward(probe, features, ws), target).total;
        probe.values[i] = orig;
        const double numeric = (up - down) / (2 * epsilon);
        const double a = r.analytic[i];
        const double dev = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), abs_floor});
        r.max_rel_deviation = std::max(r.max_rel_deviation, dev);
    }
    r.coordinates = coords.size();
    return r;
}

} // namespace ecgcode::nn
