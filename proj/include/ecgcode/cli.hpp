#pragma once

// The `ecgcode` command line: one binary, one subcommand per pipeline step.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ecgcode/config.hpp"
#include "ecgcode/error.hpp"
#include "ecgcode/eval.hpp"
#include "ecgcode/model.hpp"
#include "ecgcode/pipeline.hpp"
#include "ecgcode/plot.hpp"
#include "ecgcode/selftrain.hpp"
#include "ecgcode/signal_io.hpp"
#include "ecgcode/train.hpp"

namespace ecgcode::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2 };

inline constexpr const char* kConfigEnv = "ECGCODE_CONFIG";
inline constexpr const char* kCheckpointConfigName = "toolkit_config.json";

namespace detail {

struct Globals {
    std::string workdir = ".";
    std::string config;
    std::uint64_t seed = 0;
    int sample_rate = 1000;
    std::int64_t merge_gap = 300;
    std::int64_t min_len = 50;
    double tolerance_ms = 150;
    double top_percent = 50;
    double exclude_edges_s = 0;
    bool quiet = false;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* rate_opt = nullptr;
    CLI::Option* gap_opt = nullptr;
    CLI::Option* len_opt = nullptr;
    CLI::Option* tol_opt = nullptr;
    CLI::Option* top_opt = nullptr;
    CLI::Option* edge_opt = nullptr;

    fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : fs::path(workdir) / p; }

    /// --config, else $ECGCODE_CONFIG, else `fallback` when it exists, else built-in defaults.
    /// Flags given on the command line override whatever the file says.
    ToolkitConfig load(const std::optional<fs::path>& fallback = std::nullopt) const {
        ToolkitConfig c;
        std::optional<fs::path> path;
        if (!config.empty()) path = resolve(config);
        else if (const char* env = std::getenv(kConfigEnv); env && *env) path = resolve(env);
        else if (fallback && fs::exists(*fallback)) path = fallback;
        if (path) {
            if (!fs::exists(*path)) throw IoError("config file '" + path->string() + "' not found");
            c = load_toolkit_config(*path);
        }
        if (seed_opt->count()) {
            c.seed = seed;
            c.train.seed = c.finetune.seed = c.pipeline.model.seed = c.pipeline.augment.seed = seed;
        }
        if (rate_opt->count()) c.pipeline.sample_rate_hz = sample_rate;
        if (gap_opt->count()) c.pipeline.grid.merge_gap = merge_gap;
        if (len_opt->count()) c.pipeline.grid.min_len = min_len;
        if (tol_opt->count()) c.eval.tolerance_ms = tolerance_ms;
        if (top_opt->count()) c.top_percent = top_percent;
        if (edge_opt->count()) c.eval.exclude_edges_s = exclude_edges_s;
        c.validate();
        return c;
    }
};

struct TrainFlags {
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::optional<std::size_t> batch_size;
    std::optional<std::string> optimizer;
    bool no_augment = false;

    void add(CLI::App* sub, const std::string& prefix = "") {
        sub->add_option("--" + prefix + "epochs", epochs, "Training epochs");
        sub->add_option("--" + prefix + "lr", lr, "Learning rate");
        sub->add_option("--" + prefix + "batch-size", batch_size, "Mini-batch size");
        sub->add_option("--" + prefix + "optimizer", optimizer, "adam | sgd-momentum");
        sub->add_flag("--" + prefix + "no-augment", no_augment, "Disable bandpass/notch augmentation");
    }
    void apply(nn::TrainConfig& t) const {
        if (epochs) t.epochs = *epochs;
        if (lr) t.learning_rate = *lr;
        if (batch_size) t.batch_size = *batch_size;
        if (optimizer) t.optimizer = nn::parse_optimizer(*optimizer);
        if (no_augment) t.augment = false;
        t.validate();
    }
};

inline std::vector<EcgRecord> read_records(const fs::path& dir) {
    std::vector<EcgRecord> out;
    for (const auto& d : list_record_dirs(dir)) out.push_back(read_record(d));
    if (out.empty()) throw ValidationError("no records under '" + dir.string() + "'");
    return out;
}

inline std::vector<selftrain::LabeledRecord> read_labeled(const fs::path& dir, const std::string& tag = "") {
    std::vector<selftrain::LabeledRecord> out;
    for (auto& r : read_records(dir)) {
        auto ann = read_annotations(annotation_path(dir, r.id(), tag));
        ann.validate(static_cast<std::int64_t>(r.n_samples()));
        out.emplace_back(std::move(r), std::move(ann));
    }
    return out;
}

inline nn::EpochCallback progress(bool quiet, std::ostream& err, std::string label) {
    if (quiet) return {};
    return [&err, label](std::size_t epoch, double loss) {
        if (epoch % 10 == 0) err << label << " epoch " << epoch << " loss " << loss << "\n";
    };
}

inline void write_json(const fs::path& p, const nlohmann::json& j) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    ecgcode::detail::write_atomic(p, j.dump(2) + "\n");
}

/// Loads the checkpoint and makes the pipeline's model section agree with it.
inline nn::ModelParams<float> load_model(const fs::path& dir, ToolkitConfig& cfg) {
    auto params = nn::load_checkpoint<float>(dir);
    cfg.pipeline.model = params.config;
    cfg.validate();
    return params;
}

} // namespace detail

/// Exit status 0 on success, 1 on validation errors and usage errors, 2 on I/O errors.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"ECG P/QRS/T delineation toolkit", "ecgcode"};
    app.require_subcommand(1);
    app.fallthrough();
    detail::Globals g;
    app.add_option("--workdir", g.workdir, "Base directory for every relative path")->capture_default_str();
    app.add_option("--config", g.config, "Toolkit config JSON (default: $ECGCODE_CONFIG)");
    g.seed_opt = app.add_option("--seed", g.seed, "Seed for synthesis, initialization, shuffling and augmentation")
                     ->capture_default_str();
    g.rate_opt = app.add_option("--sample-rate", g.sample_rate, "Working sampling rate in Hz")->capture_default_str();
    g.gap_opt = app.add_option("--merge-gap", g.merge_gap, "Unite same-class segments closer than this (samples)")
                    ->capture_default_str();
    g.len_opt = app.add_option("--min-len", g.min_len, "Drop segments shorter than this (samples)")->capture_default_str();
    g.tol_opt = app.add_option("--tolerance-ms", g.tolerance_ms, "Evaluation window tolerance")->capture_default_str();
    g.top_opt = app.add_option("--top-percent", g.top_percent, "Share of records pseudolabeled per class")
                    ->capture_default_str();
    g.edge_opt = app.add_option("--exclude-edges-s", g.exclude_edges_s, "Ignore points this close to either record end")
                     ->capture_default_str();
    app.add_flag("--quiet", g.quiet, "No progress output");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
    std::size_t synth_n = 20, synth_leads = 12;
    std::string synth_out = "corpus", synth_prefix = "rec_";
    double synth_noise = 0.02;
    synth->add_option("--n", synth_n, "Number of records")->capture_default_str();
    synth->add_option("--out", synth_out, "Output corpus directory")->capture_default_str();
    synth->add_option("--prefix", synth_prefix, "Record id prefix")->capture_default_str();
    synth->add_option("--noise", synth_noise, "Gaussian noise amplitude in mV")->capture_default_str();
    synth->add_option("--leads", synth_leads, "Leads per record")->capture_default_str();

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "Resample records (and their annotations) to the working rate");
    std::string prep_in, prep_out = "preprocessed";
    std::vector<std::string> prep_csv;
    std::optional<int> csv_rate;
    bool prep_conform = false;
    prep->add_option("--in", prep_in, "Directory of record directories");
    prep->add_option("--csv", prep_csv, "CSV files to import (time or index column first)");
    prep->add_option("--csv-rate", csv_rate, "Sampling rate of the CSV files when not inferable");
    prep->add_option("--out", prep_out, "Output corpus directory")->capture_default_str();
    prep->add_flag("--conform", prep_conform, "Also crop or zero-pad to the grid record length");

    // train
    auto* trn = app.add_subcommand("train", "Train a model on a labeled corpus");
    std::string trn_data, trn_out, trn_init, trn_tag, trn_manifest;
    detail::TrainFlags trn_flags;
    trn->add_option("--data", trn_data, "Labeled corpus directory")->required();
    trn->add_option("--out", trn_out, "Checkpoint directory")->required();
    trn->add_option("--init", trn_init, "Start from this checkpoint instead of a fresh model");
    trn->add_option("--tag", trn_tag, "Annotation tag to train on (e.g. pseudo)");
    trn->add_option("--manifest", trn_manifest, "Pseudolabel manifest: use only selected records and mask classes");
    trn_flags.add(trn);

    // predict
    auto* pred = app.add_subcommand("predict", "Delineate every record in a corpus");
    std::string pred_model, pred_data, pred_out = "predictions";
    pred->add_option("--model", pred_model, "Checkpoint directory")->required();
    pred->add_option("--data", pred_data, "Corpus directory")->required();
    pred->add_option("--out", pred_out, "Directory for <id>.delin.json files")->capture_default_str();

    // pseudolabel
    auto* pl = app.add_subcommand("pseudolabel", "Score an unlabeled corpus and select the most confident records");
    std::string pl_model, pl_data, pl_manifest = "pseudolabels/manifest.json";
    pl->add_option("--model", pl_model, "Checkpoint directory")->required();
    pl->add_option("--data", pl_data, "Unlabeled corpus directory")->required();
    pl->add_option("--manifest", pl_manifest, "Manifest output path")->capture_default_str();

    // selftrain
    auto* st = app.add_subcommand("selftrain", "Base model, pseudolabels, training from scratch, fine-tuning");
    std::string st_labeled, st_unlabeled, st_out = "selftrain";
    detail::TrainFlags st_flags, st_ft_flags;
    st->add_option("--labeled", st_labeled, "Labeled corpus directory")->required();
    st->add_option("--unlabeled", st_unlabeled, "Unlabeled corpus directory")->required();
    st->add_option("--out", st_out, "Output directory")->capture_default_str();
    st_flags.add(st);
    st_ft_flags.add(st, "finetune-");

    // eval
    auto* ev = app.add_subcommand("eval", "Match predicted fiducial points to ground truth");
    std::string ev_pred, ev_data, ev_truth, ev_out = "report";
    ev->add_option("--pred", ev_pred, "Directory of predicted <id>.delin.json files")->required();
    ev->add_option("--data", ev_data, "Corpus directory (records; truth annotations unless --truth)")->required();
    ev->add_option("--truth", ev_truth, "Directory of ground-truth <id>.delin.json files");
    ev->add_option("--out", ev_out, "Report path prefix; writes <out>.json and <out>.md")->capture_default_str();

    // plot
    auto* plt = app.add_subcommand("plot", "Render a record with shaded P/QRS/T segments as SVG");
    std::string plt_data, plt_id, plt_ann, plt_out = "plot.svg";
    std::vector<std::size_t> plt_leads;
    plt->add_option("--data", plt_data, "Corpus directory")->required();
    plt->add_option("--id", plt_id, "Record id")->required();
    plt->add_option("--annotations", plt_ann, "Annotation file (default: the record's ground truth)");
    plt->add_option("--out", plt_out, "SVG path")->capture_default_str();
    plt->add_option("--leads", plt_leads, "Lead indices to draw (default: all)")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kValidation;
    }

    try {
        if (*synth) {
            const auto cfg = g.load();
            const fs::path dir = g.resolve(synth_out);
            fs::create_directories(dir);
            for (const auto& [rec, ann] : synth_corpus(synth_n, cfg.seed, synth_prefix, synth_noise, synth_leads)) {
                write_record(rec, dir / rec.id());
                write_annotations(ann, annotation_path(dir, rec.id()));
            }
            out << "wrote " << synth_n << " records to " << dir.string() << "\n";
        } else if (*prep) {
            const auto cfg = g.load();
            const int rate = cfg.pipeline.sample_rate_hz;
            const fs::path dst = g.resolve(prep_out);
            std::vector<std::pair<EcgRecord, std::optional<AnnotationSet>>> inputs;
            if (!prep_in.empty()) {
                const fs::path src = g.resolve(prep_in);
                for (auto& r : detail::read_records(src)) {
                    const auto ap = annotation_path(src, r.id());
                    std::optional<AnnotationSet> ann;
                    if (fs::exists(ap)) ann = read_annotations(ap);
                    inputs.emplace_back(std::move(r), std::move(ann));
                }
            }
            for (const auto& c : prep_csv) {
                const fs::path p = g.resolve(c);
                inputs.emplace_back(import_csv(p, p.stem().string(), csv_rate), std::nullopt);
            }
            if (inputs.empty()) throw ValidationError("preprocess: give --in and/or --csv");
            for (const auto& [rec, ann] : inputs) {
                const auto len = prep_conform ? cfg.pipeline.grid.record_len
                                              : static_cast<std::int64_t>(std::llround(
                                                    static_cast<double>(rec.n_samples()) * rate / rec.sampling_rate_hz()));
                const auto conformed = dsp::conform_record(rec, rate, static_cast<std::size_t>(len));
                write_record(conformed, dst / rec.id());
                if (ann)
                    write_annotations(dsp::rescale_annotations(*ann, rec.sampling_rate_hz(), rate, len),
                                      annotation_path(dst, rec.id()));
            }
            out << "wrote " << inputs.size() << " records to " << dst.string() << "\n";
        } else if (*trn) {
            auto cfg = g.load();
            trn_flags.apply(cfg.train);
            const fs::path data_dir = g.resolve(trn_data);
            std::optional<selftrain::PseudolabelManifest> manifest;
            if (!trn_manifest.empty())
                manifest = selftrain::manifest_from_json(ecgcode::detail::parse_json_file(g.resolve(trn_manifest)));
            nn::ModelParams<float> init;
            if (!trn_init.empty()) init = detail::load_model(g.resolve(trn_init), cfg);
            else {
                cfg.validate();
                init = nn::build_model<float>(cfg.pipeline.model);
            }
            std::vector<Example> examples;
            for (const auto& [rec, ann] : detail::read_labeled(data_dir, trn_tag)) {
                std::array<bool, kNumClasses> mask{true, true, true};
                if (manifest) {
                    if (!manifest->any_selected(rec.id())) continue;
                    mask = manifest->masks.at(rec.id());
                }
                examples.push_back(make_example(rec, ann, cfg.pipeline, mask));
            }
            FeatureCache cache(cfg.pipeline);
            auto r = nn::train(init, examples, cfg.train, cfg.pipeline, &cache, detail::progress(g.quiet, err, "train"));
            const fs::path ckpt = g.resolve(trn_out);
            nn::save_checkpoint(r.params, ckpt, {cfg.train.seed, cfg.train.epochs, ckpt.filename().string()});
            detail::write_json(ckpt / kCheckpointConfigName, to_json(cfg));
            detail::write_json(ckpt / "history.json", {{"loss", r.history}});
            out << "trained on " << examples.size() << " records, final loss " << r.history.back() << "\n";
        } else if (*pred) {
            const fs::path ckpt = g.resolve(pred_model);
            auto cfg = g.load(ckpt / kCheckpointConfigName);
            const auto params = detail::load_model(ckpt, cfg);
            const fs::path dst = g.resolve(pred_out);
            const dsp::MelFrontend frontend(cfg.pipeline.stft, cfg.pipeline.sample_rate_hz);
            const auto records = detail::read_records(g.resolve(pred_data));
            for (const auto& rec : records)
                write_annotations(predict_record(params, rec, cfg.pipeline, frontend).annotations,
                                  annotation_path(dst, rec.id()));
            out << "wrote " << records.size() << " predictions to " << dst.string() << "\n";
        } else if (*pl) {
            const fs::path ckpt = g.resolve(pl_model);
            auto cfg = g.load(ckpt / kCheckpointConfigName);
            const auto params = detail::load_model(ckpt, cfg);
            nn::CheckpointInfo info;
            nn::load_checkpoint<float>(ckpt, nullptr, &info);
            const auto r = selftrain::pseudolabel_dir(params, g.resolve(pl_data), g.resolve(pl_manifest), cfg.pipeline,
                                                      cfg.top_percent, info.id.empty() ? ckpt.string() : info.id, &err);
            out << "scored " << r.scored.size() << " records (" << r.manifest.skipped << " skipped); selected P "
                << r.manifest.selected[0].size() << ", QRS " << r.manifest.selected[1].size() << ", T "
                << r.manifest.selected[2].size() << "\n";
        } else if (*st) {
            auto cfg = g.load();
            st_flags.apply(cfg.train);
            st_ft_flags.apply(cfg.finetune);
            selftrain::SelfTrainConfig sc;
            sc.top_percent = cfg.top_percent;
            sc.base = sc.scratch = cfg.train;
            sc.finetune = cfg.finetune;
            sc.eval = cfg.eval;
            const auto labeled = detail::read_labeled(g.resolve(st_labeled));
            const auto unlabeled = detail::read_records(g.resolve(st_unlabeled));
            const auto r = selftrain::selftrain_run(labeled, unlabeled, cfg.pipeline, sc,
                                                    detail::progress(g.quiet, err, "selftrain"));
            const fs::path dst = g.resolve(st_out);
            nn::save_checkpoint(r.base, dst / "base", {cfg.train.seed, cfg.train.epochs, "base"});
            nn::save_checkpoint(r.final_model, dst / "final", {cfg.finetune.seed, cfg.finetune.epochs, "final"});
            detail::write_json(dst / "base" / kCheckpointConfigName, to_json(cfg));
            detail::write_json(dst / "final" / kCheckpointConfigName, to_json(cfg));
            detail::write_json(dst / "pseudolabels" / "manifest.json", selftrain::to_json(r.manifest));
            nlohmann::json stages = nlohmann::json::array();
            for (const auto& s : r.stages) stages.push_back(selftrain::to_json(s));
            detail::write_json(dst / "stages.json", stages);
            for (const auto& s : r.stages)
                if (s.report) out << "## " << s.stage << "\n\n" << eval::to_markdown(*s.report) << "\n";
        } else if (*ev) {
            const auto cfg = g.load();
            const fs::path data_dir = g.resolve(ev_data);
            const fs::path truth_dir = ev_truth.empty() ? data_dir : g.resolve(ev_truth);
            const fs::path pred_dir = g.resolve(ev_pred);
            std::vector<AnnotationSet> predicted, truth;
            std::map<std::string, eval::RecordTiming> timing;
            for (const auto& d : list_record_dirs(data_dir)) {
                const auto rec = read_record(d);
                timing[rec.id()] = {rec.sampling_rate_hz(), static_cast<std::int64_t>(rec.n_samples())};
                truth.push_back(read_annotations(annotation_path(truth_dir, rec.id())));
                predicted.push_back(read_annotations(annotation_path(pred_dir, rec.id())));
                truth.back().validate(timing[rec.id()].n_samples);
                predicted.back().validate(timing[rec.id()].n_samples);
            }
            if (timing.empty()) throw ValidationError("no records under '" + data_dir.string() + "'");
            const auto report = eval::evaluate_dataset(predicted, truth, timing, cfg.eval);
            const fs::path prefix = g.resolve(ev_out);
            const std::string md = eval::to_markdown(report);
            detail::write_json(fs::path(prefix.string() + ".json"), eval::to_json(report));
            ecgcode::detail::write_atomic(fs::path(prefix.string() + ".md"), md);
            out << md;
        } else if (*plt) {
            const fs::path data_dir = g.resolve(plt_data);
            const auto rec = read_record(data_dir / plt_id);
            const fs::path ap = plt_ann.empty() ? annotation_path(data_dir, plt_id) : g.resolve(plt_ann);
            plot::PlotOptions opt;
            opt.leads = plt_leads;
            const fs::path dst = g.resolve(plt_out);
            if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
            ecgcode::detail::write_atomic(dst, plot::render_svg(rec, read_annotations(ap), opt));
            out << "wrote " << dst.string() << "\n";
        }
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kOk;
}

} // namespace ecgcode::cli
