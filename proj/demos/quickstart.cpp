// Train a model on a handful of synthetic records and print the evaluation table.
//
//   quickstart [n_records] [epochs]

#include <cstdlib>
#include <iostream>
#include <map>

#include "ecgcode/eval.hpp"
#include "ecgcode/pipeline.hpp"
#include "ecgcode/signal_io.hpp"
#include "ecgcode/train.hpp"

int main(int argc, char** argv) {
    using namespace ecgcode;
    const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 8;
    const std::size_t epochs = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 60;

    PipelineConfig cfg;
    cfg.validate();
    const auto corpus = synth_corpus(n, 1);

    std::vector<Example> data;
    for (const auto& [rec, ann] : corpus) data.push_back(make_example(rec, ann, cfg));

    nn::TrainConfig tc;
    tc.epochs = epochs;
    FeatureCache cache(cfg);
    auto result = nn::train(nn::build_model<float>(cfg.model), data, tc, cfg, &cache,
                            [](std::size_t e, double loss) {
                                if (e % 10 == 0) std::cerr << "epoch " << e << "  loss " << loss << "\n";
                            });

    std::vector<AnnotationSet> pred, truth;
    std::map<std::string, eval::RecordTiming> timing;
    for (const auto& [rec, ann] : corpus) {
        pred.push_back(predict_record(result.params, rec, cfg).annotations);
        truth.push_back(ann);
        timing[rec.id()] = {rec.sampling_rate_hz(), static_cast<std::int64_t>(rec.n_samples())};
    }
    std::cout << eval::to_markdown(eval::evaluate_dataset(pred, truth, timing, eval::EvalConfig{}));
}
