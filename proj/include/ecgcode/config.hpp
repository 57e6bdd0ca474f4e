#pragma once

// Toolkit config file: every sub-config in one JSON object, unknown keys rejected.

#include <initializer_list>
#include <string>

#include "json.hpp"

#include "ecgcode/error.hpp"
#include "ecgcode/eval.hpp"
#include "ecgcode/pipeline.hpp"
#include "ecgcode/signal_io.hpp"
#include "ecgcode/train.hpp"

namespace ecgcode {

struct ToolkitConfig {
    PipelineConfig pipeline;
    nn::TrainConfig train;
    nn::TrainConfig finetune = [] {
        nn::TrainConfig t;
        t.epochs = 40;
        return t;
    }();
    eval::EvalConfig eval;
    double top_percent = 50;
    std::uint64_t seed = 0;

    void validate() const {
        pipeline.validate();
        train.validate();
        finetune.validate();
        eval.validate();
        if (!(top_percent > 0 && top_percent <= 100)) throw ValidationError("config: top_percent must lie in (0, 100]");
    }
};

namespace detail {

/// Field reader over one JSON object that refuses keys outside `allowed`.
class ObjectReader {
public:
    ObjectReader(const nlohmann::json& j, std::string where, std::initializer_list<const char*> allowed)
        : j_(j), where_(std::move(where)) {
        if (!j.is_object()) throw ValidationError(where_ + ": expected an object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || it.key() == a;
            if (!ok) throw ValidationError(where_ + ": unknown key '" + it.key() + "'");
        }
    }

    template <class T>
    void get(const char* key, T& out) const {
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(where_ + "." + key + ": " + e.what());
        }
    }

    bool has(const char* key) const { return j_.contains(key); }
    const nlohmann::json& at(const char* key) const { return j_.at(key); }

private:
    const nlohmann::json& j_;
    std::string where_;
};

inline void read_train(const nlohmann::json& j, const std::string& where, nn::TrainConfig& t) {
    ObjectReader r(j, where,
                   {"optimizer", "learning_rate", "batch_size", "epochs", "seed", "augment", "momentum", "beta1",
                    "beta2", "adam_eps"});
    if (r.has("optimizer")) {
        std::string s;
        r.get("optimizer", s);
        t.optimizer = nn::parse_optimizer(s);
    }
    r.get("learning_rate", t.learning_rate);
    r.get("batch_size", t.batch_size);
    r.get("epochs", t.epochs);
    r.get("seed", t.seed);
    r.get("augment", t.augment);
    r.get("momentum", t.momentum);
    r.get("beta1", t.beta1);
    r.get("beta2", t.beta2);
    r.get("adam_eps", t.adam_eps);
}

inline nlohmann::json train_to_json(const nn::TrainConfig& t) {
    return {{"optimizer", std::string(nn::to_string(t.optimizer))},
            {"learning_rate", t.learning_rate},
            {"batch_size", t.batch_size},
            {"epochs", t.epochs},
            {"seed", t.seed},
            {"augment", t.augment},
            {"momentum", t.momentum},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"adam_eps", t.adam_eps}};
}

} // namespace detail

inline nlohmann::json to_json(const ToolkitConfig& c) {
    const auto& p = c.pipeline;
    return {{"sample_rate_hz", p.sample_rate_hz},
            {"grid",
             {{"n_intervals", p.grid.n_intervals},
              {"record_len", p.grid.record_len},
              {"conf_threshold", p.grid.conf_threshold},
              {"merge_gap", p.grid.merge_gap},
              {"min_len", p.grid.min_len}}},
            {"stft",
             {{"n_fft", p.stft.n_fft},
              {"hop", p.stft.hop},
              {"window", "hann"},
              {"n_mel", p.stft.n_mel},
              {"f_min_hz", p.stft.f_min_hz},
              {"f_max_hz", p.stft.f_max_hz}}},
            {"augment",
             {{"bandpass_prob", p.augment.bandpass_prob},
              {"notch_prob", p.augment.notch_prob},
              {"bandpass_low_hz", p.augment.bandpass_low_hz},
              {"bandpass_high_hz", p.augment.bandpass_high_hz},
              {"notch_hz", p.augment.notch_hz},
              {"notch_q", p.augment.notch_q},
              {"seed", p.augment.seed}}},
            {"model", nlohmann::json(p.model)},
            {"train", detail::train_to_json(c.train)},
            {"finetune", detail::train_to_json(c.finetune)},
            {"eval", {{"tolerance_ms", c.eval.tolerance_ms}, {"exclude_edges_s", c.eval.exclude_edges_s}}},
            {"top_percent", c.top_percent},
            {"seed", c.seed}};
}

/// Keys absent from `j` keep their defaults. The result is validated.
inline ToolkitConfig toolkit_config_from_json(const nlohmann::json& j) {
    ToolkitConfig c;
    auto& p = c.pipeline;
    detail::ObjectReader r(j, "config",
                           {"sample_rate_hz", "grid", "stft", "augment", "model", "train", "finetune", "eval",
                            "top_percent", "seed"});
    r.get("sample_rate_hz", p.sample_rate_hz);
    r.get("top_percent", c.top_percent);
    r.get("seed", c.seed);
    if (r.has("grid")) {
        detail::ObjectReader g(r.at("grid"), "config.grid",
                               {"n_intervals", "record_len", "conf_threshold", "merge_gap", "min_len"});
        g.get("n_intervals", p.grid.n_intervals);
        g.get("record_len", p.grid.record_len);
        g.get("conf_threshold", p.grid.conf_threshold);
        g.get("merge_gap", p.grid.merge_gap);
        g.get("min_len", p.grid.min_len);
    }
    if (r.has("stft")) {
        detail::ObjectReader s(r.at("stft"), "config.stft", {"n_fft", "hop", "window", "n_mel", "f_min_hz", "f_max_hz"});
        std::string window = "hann";
        s.get("window", window);
        if (window != "hann") throw ValidationError("config.stft.window: only 'hann' is supported");
        s.get("n_fft", p.stft.n_fft);
        s.get("hop", p.stft.hop);
        s.get("n_mel", p.stft.n_mel);
        s.get("f_min_hz", p.stft.f_min_hz);
        s.get("f_max_hz", p.stft.f_max_hz);
    }
    if (r.has("augment")) {
        detail::ObjectReader a(r.at("augment"), "config.augment",
                               {"bandpass_prob", "notch_prob", "bandpass_low_hz", "bandpass_high_hz", "notch_hz",
                                "notch_q", "seed"});
        a.get("bandpass_prob", p.augment.bandpass_prob);
        a.get("notch_prob", p.augment.notch_prob);
        a.get("bandpass_low_hz", p.augment.bandpass_low_hz);
        a.get("bandpass_high_hz", p.augment.bandpass_high_hz);
        a.get("notch_hz", p.augment.notch_hz);
        a.get("notch_q", p.augment.notch_q);
        a.get("seed", p.augment.seed);
    }
    if (r.has("model")) p.model = nn::model_config_from_json(r.at("model"));
    if (r.has("train")) detail::read_train(r.at("train"), "config.train", c.train);
    if (r.has("finetune")) detail::read_train(r.at("finetune"), "config.finetune", c.finetune);
    if (r.has("eval")) {
        detail::ObjectReader e(r.at("eval"), "config.eval", {"tolerance_ms", "exclude_edges_s"});
        e.get("tolerance_ms", c.eval.tolerance_ms);
        e.get("exclude_edges_s", c.eval.exclude_edges_s);
    }
    c.validate();
    return c;
}

inline ToolkitConfig load_toolkit_config(const fs::path& path) {
    return toolkit_config_from_json(ecgcode::detail::parse_json_file(path));
}

} // namespace ecgcode
