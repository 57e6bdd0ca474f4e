#pragma once

#include "ecgcode/pipeline.hpp"
#include "ecgcode/signal_io.hpp"

namespace testsupport {

/// 1 lead, 1.6 s at 1000 Hz, 8 mel bins x 8 frames, 2 intervals: small enough for exhaustive checks.
inline ecgcode::PipelineConfig tiny_pipeline() {
    ecgcode::PipelineConfig c;
    c.model = ecgcode::nn::ModelConfig::tiny();
    c.grid.n_intervals = 2;
    c.grid.record_len = 1600;
    c.stft.n_fft = 256;
    c.stft.hop = 200;
    c.stft.n_mel = 8;
    c.validate();
    return c;
}

/// One-lead synthetic records matching tiny_pipeline().
inline std::vector<std::pair<ecgcode::EcgRecord, ecgcode::AnnotationSet>> tiny_corpus(std::size_t n,
                                                                                      std::uint64_t seed,
                                                                                      const std::string& prefix = "t_") {
    std::vector<std::pair<ecgcode::EcgRecord, ecgcode::AnnotationSet>> out;
    for (std::size_t i = 0; i < n; ++i) {
        ecgcode::SynthSpec s;
        s.duration_s = 1.6;
        s.n_leads = 1;
        s.noise_mv = 0.02;
        s.start_ms = 20.0 + 40.0 * static_cast<double>((i * 7 + seed) % 10);
        s.seed = seed * 1000 + i;
        s.id = ecgcode::corpus_record_id(prefix, i);
        out.push_back(ecgcode::synth_record(s));
    }
    return out;
}

} // namespace testsupport
