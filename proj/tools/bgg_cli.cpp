// bgg: command-line front end over the bggen shared library (C API only).
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "bgg.h"

using nlohmann::json;

namespace {

int status_to_exit(bgg_status s) {
    switch (s) {
        case BGG_OK: return 0;
        case BGG_E_RUNTIME: return 1;
        default: return 2;
    }
}

int report_failure(bgg_status s) {
    std::cerr << "error: " << bgg_last_error() << "\n";
    return status_to_exit(s);
}

void write_or_print(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text << "\n";
        return;
    }
    std::ofstream out(out_path);
    out << text << "\n";
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in.good()) throw CLI::ValidationError("--config", "cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw CLI::ValidationError("--config", std::string("invalid JSON: ") + e.what());
    }
    return j;
}

struct SynthArgs {
    std::string out, config;
    int num_categories = 3;
    int records = 200;
    int image_size = 32;
    int brands = 2;
    uint64_t seed = 0;
};

struct TrainArgs {
    std::string manifest, out, config, stage = "backbone", init, resume, run_name = "train";
    int steps = -1, batch = -1;
    double lr = -1;
    uint64_t seed = 0;
    bool seed_set = false;
    bool joint = false, shared_prompt = false, unmasked_cg = false;
    bool no_dilation = false, no_fill = false, no_mixup = false;
    int base_channels = -1;
};

struct GenerateArgs {
    std::string checkpoint, product, mask, reference, reference_mask, out, mode = "final_composite";
    int category = 0, steps = 50;
    uint64_t seed = 0;
    bool use_pg = false, no_reference_init = false;
};

struct EvaluateArgs {
    std::string metric, manifest, extractor, set_a, set_b, image_a, image_b;
    std::string generated, reference, mask, full_checkpoint, rowa_checkpoint, out_report;
    std::vector<std::string> cluster_sets;  // label:dir
    int sample_steps = 25, max_pairs = 40;
    uint64_t seed = 0;
};

struct PreviewArgs {
    std::string manifest, record, partner, out;
    int dilation_radius = 2;
    bool no_dilation = false, no_fill = false, no_mixup = false;
    uint64_t seed = 0;
};

struct ExtractorArgs {
    std::string manifest, out;
    int d_e = 64, steps = 600, batch = 32;
    double lr = 1e-3, gate = 0.9;
    uint64_t seed = 0;
};

struct ReproduceArgs {
    std::string experiment, out, profile = "desk";
    uint64_t seed = 0;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bggen: category- and reference-conditioned product background generation"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth-data", "Synthesize the deterministic toy corpus");
    synth->add_option("--out", sa.out, "Output directory")->required();
    synth->add_option("--config", sa.config, "JSON config file (flags override)");
    synth->add_option("--num-categories", sa.num_categories, "Number of categories (>= 2)");
    synth->add_option("--records-per-category", sa.records, "Records per category");
    synth->add_option("--image-size", sa.image_size, "Image side length (power of two)");
    synth->add_option("--brands-per-category", sa.brands, "Brand sub-styles per category");
    synth->add_option("--seed", sa.seed, "Synthesis seed");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train a stage (backbone, cg_only, cg_pg)");
    tr->add_option("--manifest", ta.manifest, "Dataset manifest path")->required();
    tr->add_option("--out", ta.out, "Output directory for checkpoints/logs")->required();
    tr->add_option("--stage", ta.stage, "backbone | cg_only | cg_pg");
    tr->add_option("--config", ta.config, "JSON train config file (flags override)");
    tr->add_option("--steps", ta.steps, "Optimization steps");
    tr->add_option("--batch-size", ta.batch, "Batch size");
    tr->add_option("--lr", ta.lr, "Learning rate");
    auto* seed_opt = tr->add_option("--seed", ta.seed, "Training seed");
    tr->add_option("--init", ta.init, "Warm-start checkpoint (earlier stage)");
    tr->add_option("--resume", ta.resume, "Resume checkpoint (same stage)");
    tr->add_option("--run-name", ta.run_name, "Prefix for logs/checkpoints");
    tr->add_option("--base-channels", ta.base_channels, "UNet base channels");
    tr->add_flag("--joint-backbone", ta.joint, "Train the backbone jointly in branch stages");
    tr->add_flag("--shared-prompt", ta.shared_prompt, "No-identifier ablation (single shared prompt)");
    tr->add_flag("--unmasked-cg", ta.unmasked_cg, "Branch with plain (unmasked) attention");
    tr->add_flag("--no-dilation", ta.no_dilation, "Disable mask dilation in perturbation");
    tr->add_flag("--no-fill", ta.no_fill, "Disable margin fill in perturbation");
    tr->add_flag("--no-mixup", ta.no_mixup, "Disable mixup in perturbation");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Generate a background for a product image");
    gen->add_option("--checkpoint", ga.checkpoint, "Model checkpoint")->required();
    gen->add_option("--product", ga.product, "Product image (PNG)")->required();
    gen->add_option("--mask", ga.mask, "Binary product mask (PNG)")->required();
    gen->add_option("--category", ga.category, "Category id");
    gen->add_option("--reference", ga.reference, "Reference image (PNG)");
    gen->add_option("--reference-mask", ga.reference_mask, "Reference product mask (PNG)");
    gen->add_option("--steps", ga.steps, "Sampler steps");
    gen->add_option("--seed", ga.seed, "Sampling seed");
    gen->add_option("--mode", ga.mode, "final_composite | per_step_blend");
    gen->add_option("--out", ga.out, "Output image path")->required();
    gen->add_flag("--use-pg", ga.use_pg, "Condition on the reference via the personality branch");
    gen->add_flag("--no-reference-init", ga.no_reference_init, "Start from pure noise even with a reference");

    EvaluateArgs ea;
    auto* ev = app.add_subcommand("evaluate", "Run a metric: fid, sim, cluster, copypaste, ablation");
    ev->add_option("--metric", ea.metric, "fid | sim | cluster | copypaste | ablation")->required();
    ev->add_option("--manifest", ea.manifest, "Dataset manifest (ablation)");
    ev->add_option("--extractor", ea.extractor, "Feature extractor checkpoint");
    ev->add_option("--set-a", ea.set_a, "Directory of PNGs (fid)");
    ev->add_option("--set-b", ea.set_b, "Directory of PNGs (fid)");
    ev->add_option("--image-a", ea.image_a, "Image path (sim)");
    ev->add_option("--image-b", ea.image_b, "Image path (sim)");
    ev->add_option("--generated", ea.generated, "Generated image (copypaste)");
    ev->add_option("--reference", ea.reference, "Reference image (copypaste)");
    ev->add_option("--mask", ea.mask, "Product mask (copypaste)");
    ev->add_option("--cluster-set", ea.cluster_sets, "label:dir pairs (cluster); repeatable");
    ev->add_option("--full-checkpoint", ea.full_checkpoint, "Full cg_pg checkpoint (ablation rows b/c/d)");
    ev->add_option("--rowa-checkpoint", ea.rowa_checkpoint, "Unmasked-branch checkpoint (ablation row a)");
    ev->add_option("--sample-steps", ea.sample_steps, "Sampler steps for ablation sweeps");
    ev->add_option("--max-pairs", ea.max_pairs, "Pair cap for ablation sweeps");
    ev->add_option("--seed", ea.seed, "Sweep seed (ablation)");
    ev->add_option("--out-report", ea.out_report, "Write the JSON report here (stdout otherwise)");

    PreviewArgs pa;
    auto* pv = app.add_subcommand("perturb-preview", "Emit the perturbation pipeline image grid");
    pv->add_option("--manifest", pa.manifest, "Dataset manifest")->required();
    pv->add_option("--record", pa.record, "Record id")->required();
    pv->add_option("--partner", pa.partner, "Mixup partner record id (default: first other record)");
    pv->add_option("--out", pa.out, "Output PNG")->required();
    pv->add_option("--dilation-radius", pa.dilation_radius, "Dilation radius in pixels");
    pv->add_option("--seed", pa.seed, "Sigma draw seed");
    pv->add_flag("--no-dilation", pa.no_dilation, "Disable dilation");
    pv->add_flag("--no-fill", pa.no_fill, "Disable margin fill");
    pv->add_flag("--no-mixup", pa.no_mixup, "Disable mixup");

    ExtractorArgs xa;
    auto* tx = app.add_subcommand("train-extractor", "Train the evaluation feature extractor");
    tx->add_option("--manifest", xa.manifest, "Dataset manifest")->required();
    tx->add_option("--out", xa.out, "Output extractor checkpoint")->required();
    tx->add_option("--embedding-dim", xa.d_e, "Penultimate dimension");
    tx->add_option("--steps", xa.steps, "Training steps");
    tx->add_option("--batch-size", xa.batch, "Batch size");
    tx->add_option("--lr", xa.lr, "Learning rate");
    tx->add_option("--accuracy-gate", xa.gate, "Held-out accuracy gate");
    tx->add_option("--seed", xa.seed, "Training seed");

    ReproduceArgs ra;
    auto* rp = app.add_subcommand("reproduce", "Run a registered experiment pipeline");
    rp->add_option("experiment", ra.experiment, "category_scale | personalized | ablation")->required();
    rp->add_option("--out", ra.out, "Output directory")->required();
    rp->add_option("--profile", ra.profile, "desk | ci");
    rp->add_option("--seed", ra.seed, "Base seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) {
            json cfg = load_config_file(sa.config);
            if (synth->count("--num-categories")) cfg["num_categories"] = sa.num_categories;
            else if (!cfg.contains("num_categories")) cfg["num_categories"] = sa.num_categories;
            if (synth->count("--records-per-category")) cfg["records_per_category"] = sa.records;
            else if (!cfg.contains("records_per_category")) cfg["records_per_category"] = sa.records;
            if (synth->count("--image-size")) cfg["image_size"] = sa.image_size;
            else if (!cfg.contains("image_size")) cfg["image_size"] = sa.image_size;
            if (synth->count("--brands-per-category")) cfg["brands_per_category"] = sa.brands;
            if (synth->count("--seed") || !cfg.contains("seed")) cfg["seed"] = sa.seed;
            char manifest_path[4096];
            bgg_status s = bgg_synth_corpus(cfg.dump().c_str(), sa.out.c_str(), manifest_path,
                                            sizeof manifest_path);
            if (s != BGG_OK) return report_failure(s);
            std::cout << manifest_path << "\n";
            return 0;
        }

        if (tr->parsed()) {
            json cfg = load_config_file(ta.config);
            if (tr->count("--stage") || !cfg.contains("stage")) cfg["stage"] = ta.stage;
            if (ta.steps >= 0) cfg["steps"] = ta.steps;
            if (ta.batch >= 0) cfg["batch_size"] = ta.batch;
            if (ta.lr >= 0) cfg["lr"] = ta.lr;
            if (seed_opt->count() || !cfg.contains("seed")) cfg["seed"] = ta.seed;
            if (!ta.init.empty()) cfg["init_checkpoint"] = ta.init;
            if (!ta.resume.empty()) cfg["resume_checkpoint"] = ta.resume;
            if (tr->count("--run-name") || !cfg.contains("run_name")) cfg["run_name"] = ta.run_name;
            if (ta.joint) cfg["joint_backbone"] = true;
            if (ta.shared_prompt) cfg["shared_prompt"] = true;
            if (ta.unmasked_cg) cfg["unmasked_cg"] = true;
            if (ta.base_channels > 0) cfg["denoiser"]["base_channels"] = ta.base_channels;
            if (ta.no_dilation) cfg["perturb"]["enable_dilation"] = false;
            if (ta.no_fill) cfg["perturb"]["enable_fill"] = false;
            if (ta.no_mixup) cfg["perturb"]["enable_mixup"] = false;
            char ckpt[4096];
            bgg_status s = bgg_train(ta.manifest.c_str(), cfg.dump().c_str(), ta.out.c_str(), ckpt,
                                     sizeof ckpt);
            if (s != BGG_OK) return report_failure(s);
            std::cout << ckpt << "\n";
            return 0;
        }

        if (gen->parsed()) {
            bgg_model* model = nullptr;
            bgg_status s = bgg_model_open(ga.checkpoint.c_str(), &model);
            if (s != BGG_OK) return report_failure(s);
            json req;
            req["product"] = ga.product;
            req["mask"] = ga.mask;
            req["category"] = ga.category;
            if (!ga.reference.empty()) req["reference"] = ga.reference;
            if (!ga.reference_mask.empty()) req["reference_mask"] = ga.reference_mask;
            req["use_pg"] = ga.use_pg;
            req["reference_init"] = !ga.no_reference_init;
            req["steps"] = ga.steps;
            req["seed"] = ga.seed;
            req["mode"] = ga.mode;
            bgg_image* img = nullptr;
            char prov[2048];
            s = bgg_generate(model, req.dump().c_str(), &img, prov, sizeof prov);
            if (s != BGG_OK) {
                bgg_model_close(model);
                return report_failure(s);
            }
            s = bgg_image_save(img, ga.out.c_str());
            bgg_image_close(img);
            bgg_model_close(model);
            if (s != BGG_OK) return report_failure(s);
            // provenance sidecar lives next to the image
            std::ofstream side(ga.out + ".provenance.json");
            side << prov << "\n";
            std::cout << ga.out << "\n";
            return 0;
        }

        if (ev->parsed()) {
            json args;
            if (!ea.extractor.empty()) args["extractor"] = ea.extractor;
            if (!ea.manifest.empty()) args["manifest"] = ea.manifest;
            if (!ea.set_a.empty()) args["set_a"] = ea.set_a;
            if (!ea.set_b.empty()) args["set_b"] = ea.set_b;
            if (!ea.image_a.empty()) args["image_a"] = ea.image_a;
            if (!ea.image_b.empty()) args["image_b"] = ea.image_b;
            if (!ea.generated.empty()) args["generated"] = ea.generated;
            if (!ea.reference.empty()) args["reference"] = ea.reference;
            if (!ea.mask.empty()) args["mask"] = ea.mask;
            if (!ea.full_checkpoint.empty()) args["full_checkpoint"] = ea.full_checkpoint;
            if (!ea.rowa_checkpoint.empty()) args["rowa_checkpoint"] = ea.rowa_checkpoint;
            args["sample_steps"] = ea.sample_steps;
            args["max_pairs"] = ea.max_pairs;
            args["seed"] = ea.seed;
            if (!ea.cluster_sets.empty()) {
                json sets = json::array();
                for (const auto& s : ea.cluster_sets) {
                    auto pos = s.find(':');
                    if (pos == std::string::npos) {
                        std::cerr << "error: --cluster-set expects label:dir\n";
                        return 2;
                    }
                    sets.push_back({{"label", std::stoi(s.substr(0, pos))}, {"dir", s.substr(pos + 1)}});
                }
                args["sets"] = sets;
            }
            std::string report(1 << 16, '\0');
            bgg_status s = bgg_evaluate(ea.metric.c_str(), args.dump().c_str(), report.data(), report.size());
            if (s != BGG_OK) return report_failure(s);
            report.resize(std::strlen(report.c_str()));
            write_or_print(report, ea.out_report);
            return 0;
        }

        if (pv->parsed()) {
            json params;
            params["dilation_radius"] = pa.dilation_radius;
            params["enable_dilation"] = !pa.no_dilation;
            params["enable_fill"] = !pa.no_fill;
            params["enable_mixup"] = !pa.no_mixup;
            params["seed"] = pa.seed;
            if (!pa.partner.empty()) params["partner_record_id"] = pa.partner;
            bgg_status s = bgg_perturb_preview(pa.manifest.c_str(), pa.record.c_str(),
                                               params.dump().c_str(), pa.out.c_str());
            if (s != BGG_OK) return report_failure(s);
            std::cout << pa.out << "\n";
            return 0;
        }

        if (tx->parsed()) {
            json cfg = {{"d_e", xa.d_e},           {"steps", xa.steps}, {"batch", xa.batch},
                        {"lr", xa.lr},             {"seed", xa.seed},   {"accuracy_gate", xa.gate}};
            bgg_status s = bgg_train_extractor(xa.manifest.c_str(), cfg.dump().c_str(), xa.out.c_str());
            if (s != BGG_OK) return report_failure(s);
            std::cout << xa.out << "\n";
            return 0;
        }

        if (rp->parsed()) {
            json cfg = {{"profile", ra.profile}, {"seed", ra.seed}};
            char report[4096];
            bgg_status s = bgg_reproduce(ra.experiment.c_str(), cfg.dump().c_str(), ra.out.c_str(), report,
                                         sizeof report);
            if (s != BGG_OK) return report_failure(s);
            std::cout << report << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
