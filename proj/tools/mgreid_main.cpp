// Command-line entry point: data generation, annotation, the two training
// stages, retrieval evaluation and mask rendering.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mgreid/config.hpp"
#include "mgreid/dataset.hpp"
#include "mgreid/evaluation.hpp"
#include "mgreid/grounding.hpp"
#include "mgreid/model.hpp"
#include "mgreid/synth_data.hpp"
#include "mgreid/trainer.hpp"
#include "mgreid/util.hpp"

namespace fs = std::filesystem;
using namespace mgreid;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<uint64_t> seed;
    std::string mask_source;
    std::string granularities;
    bool no_corruption = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "key = value config file");
    cmd->add_option("--set", o.sets, "config override key=value (repeatable)");
    cmd->add_option("--seed", o.seed, "override every seed in the config");
    cmd->add_option("--mask-source", o.mask_source,
                    "attention gating source: predicted|external|stripe|none");
    cmd->add_option("--granularities", o.granularities, "subset of GHUL, must contain G");
    cmd->add_flag("--no-corruption", o.no_corruption, "disable box corruption");
}

cfg::RunConfig resolve(const CommonOpts& o) {
    cfg::RunConfig c;
    if (!o.config_path.empty()) cfg::apply_file(c, o.config_path);
    cfg::apply_overrides(c, o.sets);
    if (o.seed) {
        c.data.seed = *o.seed;
        c.model_seed = *o.seed + 1;
        c.train.seed = *o.seed + 2;
    }
    if (!o.mask_source.empty()) c.mask_source = o.mask_source;
    if (!o.granularities.empty()) c.granularities = o.granularities;
    if (o.no_corruption) {
        c.data.oversize_rate = 0.0;
        c.data.oversplit_rate = 0.0;
    }
    cfg::finalize(c);
    return c;
}

void snapshot_config(const cfg::RunConfig& c, const std::string& dir) {
    fs::create_directories(dir);
    util::write_text_atomic((fs::path(dir) / "config.txt").string(), cfg::serialize(c));
}

model::Model make_model(const cfg::RunConfig& c) { return model::Model::init(c.model_config()); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-granularity re-identification on synthetic data"};
    app.require_subcommand(1);

    CommonOpts gen_o, ann_o, train_o, eval_o, render_o;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "render the synthetic dataset");
    std::string gen_out;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    add_common(gen, gen_o);

    // annotate
    auto* ann = app.add_subcommand("annotate", "locate, calibrate and rasterize part boxes");
    std::string ann_data, ann_out;
    ann->add_option("--data", ann_data, "dataset directory")->required();
    ann->add_option("--out", ann_out, "output labels JSONL path")->required();
    add_common(ann, ann_o);

    // train
    auto* tr = app.add_subcommand("train", "run one training stage");
    int tr_stage = 0;
    std::string tr_data, tr_labels, tr_out, tr_init;
    tr->add_option("--stage", tr_stage, "1 (prompts) or 2 (encoder)")->required();
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--labels", tr_labels, "labels JSONL path")->required();
    tr->add_option("--out", tr_out, "run directory")->required();
    tr->add_option("--init", tr_init, "checkpoint to start from (required for stage 2)");
    add_common(tr, train_o);

    // eval
    auto* ev = app.add_subcommand("eval", "retrieval metrics and mask quality");
    std::string ev_data, ev_labels, ev_ckpt, ev_out;
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--labels", ev_labels, "labels JSONL path")->required();
    ev->add_option("--ckpt", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--out", ev_out, "output directory")->required();
    add_common(ev, eval_o);

    // render-masks
    auto* rm = app.add_subcommand("render-masks", "write per-part mask heatmaps");
    std::string rm_data, rm_labels, rm_ckpt, rm_out;
    std::vector<int> rm_samples;
    rm->add_option("--data", rm_data, "dataset directory")->required();
    rm->add_option("--labels", rm_labels, "labels JSONL path")->required();
    rm->add_option("--ckpt", rm_ckpt, "model checkpoint")->required();
    rm->add_option("--out", rm_out, "output directory")->required();
    rm->add_option("--samples", rm_samples, "sample ids (default: all queries)");
    add_common(rm, render_o);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            cfg::RunConfig c = resolve(gen_o);
            synth::Dataset ds = synth::generate_dataset(c.data);
            synth::save_dataset(ds, gen_out);
            snapshot_config(c, gen_out);
            std::cout << "wrote " << ds.manifest.samples.size() << " samples to " << gen_out
                      << "\n";
        } else if (*ann) {
            cfg::RunConfig c = resolve(ann_o);
            synth::Manifest manifest = synth::load_manifest(ann_data);
            std::unique_ptr<grounding::BoxProvider> provider;
            if (c.box_source == "oracle") {
                double ors = ann_o.no_corruption ? 0.0 : manifest.config.oversize_rate;
                double osp = ann_o.no_corruption ? 0.0 : manifest.config.oversplit_rate;
                provider = std::make_unique<grounding::OracleBoxProvider>(manifest, ors, osp,
                                                                          manifest.config.seed);
            } else {
                provider = std::make_unique<grounding::FileBoxProvider>(c.box_source);
            }
            auto rows = grounding::annotate(manifest, *provider,
                                            grounding::CalibPolicy::defaults());
            grounding::save_labels(rows, ann_out);
            std::cout << "wrote " << rows.size() << " label rows to " << ann_out << "\n";
        } else if (*tr) {
            cfg::RunConfig c = resolve(train_o);
            data::Corpus corpus = data::load_corpus(tr_data, tr_labels);
            c.data = corpus.manifest.config;  // dataset on disk wins
            cfg::finalize(c);
            model::Model m = make_model(c);
            snapshot_config(c, tr_out);

            train::TrainConfig tc = c.train;
            tc.mask_source = img::mask_source_from_name(c.mask_source);
            if (tr_stage == 1) {
                if (!tr_init.empty()) model::load_checkpoint(tr_init, m, nullptr);
                train::Trainer trainer(m, corpus, tc);
                auto logs = trainer.run_stage1();
                util::write_text_atomic((fs::path(tr_out) / "stage1_losses.csv").string(),
                                        train::loss_csv(logs));
                model::save_checkpoint((fs::path(tr_out) / "stage1.ckpt").string(), m,
                                       &trainer.optimizer(), 1, tc.stage1_epochs);
                std::cout << "stage 1 done; final prompt loss "
                          << logs.back().mean.cmp << "\n";
            } else if (tr_stage == 2) {
                if (tr_init.empty())
                    throw std::runtime_error("stage 2 needs --init with the stage-1 checkpoint");
                model::load_checkpoint(tr_init, m, nullptr);
                train::Trainer trainer(m, corpus, tc);
                auto logs = trainer.run_stage2();
                util::write_text_atomic((fs::path(tr_out) / "stage2_losses.csv").string(),
                                        train::loss_csv(logs));
                model::save_checkpoint((fs::path(tr_out) / "stage2.ckpt").string(), m,
                                       &trainer.optimizer(), 2, tc.stage2_epochs);
                std::cout << "stage 2 done; final loss " << logs.back().mean.total << "\n";
            } else {
                throw std::runtime_error("--stage must be 1 or 2");
            }
        } else if (*ev) {
            cfg::RunConfig c = resolve(eval_o);
            data::Corpus corpus = data::load_corpus(ev_data, ev_labels);
            c.data = corpus.manifest.config;
            cfg::finalize(c);
            model::Model m = make_model(c);
            model::load_checkpoint(ev_ckpt, m, nullptr);
            m.set_stage_trainable(0);
            const auto source = img::mask_source_from_name(c.mask_source);
            auto rr = eval::evaluate_retrieval(m, corpus, source);
            auto mq = eval::mask_quality(m, corpus, corpus.manifest.split_indices("query"));
            fs::create_directories(ev_out);
            util::write_text_atomic((fs::path(ev_out) / "metrics.json").string(),
                                    eval::metrics_json(rr, mq));
            std::cout << eval::metrics_json(rr, mq);
        } else if (*rm) {
            cfg::RunConfig c = resolve(render_o);
            data::Corpus corpus = data::load_corpus(rm_data, rm_labels);
            c.data = corpus.manifest.config;
            cfg::finalize(c);
            model::Model m = make_model(c);
            model::load_checkpoint(rm_ckpt, m, nullptr);
            std::vector<int> samples = rm_samples;
            if (samples.empty()) samples = corpus.manifest.split_indices("query");
            for (int sid : samples) eval::render_mask_heatmaps(m, corpus, sid, rm_out);
            std::cout << "wrote heatmaps for " << samples.size() << " samples to " << rm_out
                      << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
