#pragma once

// Record -> features -> grid, and grid -> post-processed annotations.

#include <array>
#include <optional>
#include <vector>

#include "ecgcode/dsp.hpp"
#include "ecgcode/grid_codec.hpp"
#include "ecgcode/model.hpp"
#include "ecgcode/signal_io.hpp"

namespace ecgcode {

struct PipelineConfig {
    int sample_rate_hz = 1000;
    grid::GridConfig grid;
    dsp::StftConfig stft;
    dsp::AugmentConfig augment;
    nn::ModelConfig model;

    /// Checks each part and that the frame/interval arithmetic lines up.
    void validate() const {
        if (sample_rate_hz <= 0) throw ValidationError("sample rate must be positive");
        grid.validate();
        stft.validate(sample_rate_hz);
        augment.validate(sample_rate_hz);
        model.validate();
        if (stft.n_frames(static_cast<std::size_t>(grid.record_len)) != model.n_frames)
            throw ValidationError("ceil(record_len / hop) must equal model n_frames");
        if (grid.n_intervals != model.n_intervals) throw ValidationError("grid and model disagree on n_intervals");
        if (stft.n_mel != model.n_mel) throw ValidationError("stft and model disagree on n_mel");
    }
};

/// A conformed record with its encoded targets.
struct Example {
    EcgRecord record;
    grid::TargetGrid target;
};

inline Example make_example(const EcgRecord& record, const AnnotationSet& annotations, const PipelineConfig& cfg,
                            std::array<bool, kNumClasses> mask = {true, true, true}) {
    const auto len = static_cast<std::size_t>(cfg.grid.record_len);
    EcgRecord conformed = dsp::conform_record(record, cfg.sample_rate_hz, len);
    const AnnotationSet scaled =
        dsp::rescale_annotations(annotations, record.sampling_rate_hz(), cfg.sample_rate_hz, cfg.grid.record_len);
    Example ex{std::move(conformed), grid::encode_targets(scaled, cfg.grid)};
    ex.target.label_mask = mask;
    return ex;
}

/// Feature tensors per example and augmentation outcome, computed on first use.
class FeatureCache {
public:
    explicit FeatureCache(const PipelineConfig& cfg) : cfg_(cfg), frontend_(cfg.stft, cfg.sample_rate_hz) {}

    const dsp::FeatureTensor& get(std::size_t index, const EcgRecord& record, dsp::AugmentDraw draw = {}) {
        if (index >= slots_.size()) slots_.resize(index + 1);
        auto& slot = slots_[index][(draw.bandpass ? 1 : 0) + (draw.notch ? 2 : 0)];
        if (!slot) slot = dsp::compute_features(dsp::apply_augment(record, cfg_.augment, draw), frontend_);
        return *slot;
    }

    const dsp::MelFrontend& frontend() const { return frontend_; }

private:
    PipelineConfig cfg_;
    dsp::MelFrontend frontend_;
    std::vector<std::array<std::optional<dsp::FeatureTensor>, 4>> slots_;
};

struct Prediction {
    grid::PredictionGrid grid;
    AnnotationSet annotations; ///< at the input record's own rate and length
};

template <class T>
Prediction predict_record(const nn::ModelParams<T>& params, const EcgRecord& record, const PipelineConfig& cfg,
                          const dsp::MelFrontend& frontend) {
    const auto len = static_cast<std::size_t>(cfg.grid.record_len);
    const EcgRecord conformed = dsp::conform_record(record, cfg.sample_rate_hz, len);
    const auto features = dsp::compute_features(conformed, frontend);
    Prediction p;
    p.grid = nn::forward(params, features);
    AnnotationSet set = grid::postprocess(grid::decode_grid(p.grid, cfg.grid), cfg.grid, record.id());
    if (record.sampling_rate_hz() != cfg.sample_rate_hz || record.n_samples() != len) {
        // Drop anything that falls in the zero padding, then return to the record's rate.
        const auto native_len = static_cast<std::int64_t>(record.n_samples());
        const auto covered = static_cast<std::int64_t>(
            std::llround(static_cast<double>(native_len) * cfg.sample_rate_hz / record.sampling_rate_hz()));
        std::erase_if(set.segments, [&](const Segment& s) { return s.onset >= covered; });
        set = dsp::rescale_annotations(set, cfg.sample_rate_hz, record.sampling_rate_hz(), native_len);
    }
    p.annotations = std::move(set);
    return p;
}

template <class T>
Prediction predict_record(const nn::ModelParams<T>& params, const EcgRecord& record, const PipelineConfig& cfg) {
    const dsp::MelFrontend frontend(cfg.stft, cfg.sample_rate_hz);
    return predict_record(params, record, cfg, frontend);
}

} // namespace ecgcode
