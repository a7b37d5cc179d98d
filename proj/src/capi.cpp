#include "bgg.h"

#include <cstring>
#include <filesystem>
#include <string>

#include "bgg/checkpoint.hpp"
#include "bgg/dataset.hpp"
#include "bgg/eval.hpp"
#include "bgg/experiments.hpp"
#include "bgg/perturb.hpp"
#include "bgg/png_io.hpp"
#include "bgg/sample.hpp"
#include "bgg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

thread_local std::string g_last_error;

bgg_status status_of(const bgg::Error& e) {
    switch (e.kind()) {
        case bgg::ErrorKind::io:
        case bgg::ErrorKind::runtime:
            return BGG_E_RUNTIME;
        default:
            return BGG_E_USAGE;
    }
}

template <typename F>
bgg_status guarded(F&& fn) {
    try {
        return fn();
    } catch (const bgg::Error& e) {
        g_last_error = e.what();
        return status_of(e);
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return BGG_E_RUNTIME;
    } catch (...) {
        g_last_error = "unknown error";
        return BGG_E_RUNTIME;
    }
}

bgg_status copy_out(const std::string& s, char* buf, size_t cap) {
    if (buf == nullptr || cap == 0) {
        g_last_error = "null output buffer";
        return BGG_E_BUFFER;
    }
    size_t n = std::min(cap - 1, s.size());
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
    if (n < s.size()) {
        g_last_error = "output buffer too small (" + std::to_string(s.size() + 1) + " bytes needed)";
        return BGG_E_BUFFER;
    }
    return BGG_OK;
}

json parse_json_arg(const char* text, const char* what) {
    if (text == nullptr || *text == '\0') return json::object();
    try {
        return json::parse(text);
    } catch (const std::exception& e) {
        bgg::fail(bgg::ErrorKind::argument, std::string(what) + " is not valid JSON: " + e.what());
    }
}

uint64_t seed_from(const json& j, const char* key, uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    if (j.at(key).is_string()) return std::stoull(j.at(key).get<std::string>(), nullptr, 16);
    return j.at(key).get<uint64_t>();
}

}  // namespace

struct bgg_manifest {
    bgg::DatasetManifest m;
};
struct bgg_model {
    std::unique_ptr<bgg::Model<float>> model;
    std::string kind;
    std::string stage;
};
struct bgg_extractor {
    std::unique_ptr<bgg::FeatureExtractor> ex;
};
struct bgg_image {
    bgg::Image img;
};

extern "C" {

const char* bgg_version(void) { return "1.0.0"; }

const char* bgg_last_error(void) { return g_last_error.c_str(); }

bgg_status bgg_synth_corpus(const char* config_json, const char* out_dir, char* manifest_path_out,
                            size_t manifest_path_cap) {
    return guarded([&]() -> bgg_status {
        bgg::require(out_dir != nullptr, bgg::ErrorKind::argument, "out_dir is required");
        json j = parse_json_arg(config_json, "synth config");
        bgg::SynthConfig cfg;
        cfg.num_categories = j.value("num_categories", cfg.num_categories);
        cfg.records_per_category = j.value("records_per_category", cfg.records_per_category);
        cfg.image_size = j.value("image_size", cfg.image_size);
        cfg.seed = seed_from(j, "seed", cfg.seed);
        cfg.brands_per_category = j.value("brands_per_category", cfg.brands_per_category);
        cfg.train_fraction = j.value("train_fraction", cfg.train_fraction);
        cfg.bg1k_fraction = j.value("bg1k_fraction", cfg.bg1k_fraction);
        bgg::synthesize_corpus(cfg, out_dir);
        std::string path = (fs::path(out_dir) / "manifest.json").string();
        if (manifest_path_out) return copy_out(path, manifest_path_out, manifest_path_cap);
        return BGG_OK;
    });
}

bgg_status bgg_manifest_open(const char* manifest_path, bgg_manifest** out) {
    return guarded([&]() -> bgg_status {
        bgg::require(manifest_path && out, bgg::ErrorKind::argument, "manifest_path and out are required");
        auto* h = new bgg_manifest{bgg::load_manifest(manifest_path)};
        *out = h;
        return BGG_OK;
    });
}

void bgg_manifest_close(bgg_manifest* m) { delete m; }

int bgg_manifest_record_count(const bgg_manifest* m) {
    return m ? static_cast<int>(m->m.records.size()) : -1;
}

int bgg_manifest_category_count(const bgg_manifest* m) { return m ? m->m.num_categories() : -1; }

bgg_status bgg_validate_record(const bgg_manifest* m, const char* record_id, char* report_json_out,
                               size_t report_cap) {
    return guarded([&]() -> bgg_status {
        bgg::require(m && record_id, bgg::ErrorKind::argument, "manifest and record_id are required");
        bgg::ValidationReport rep = bgg::validate_record_files(m->m, record_id);
        json j = {{"record_id", rep.record_id}, {"ok", rep.ok()}, {"violations", rep.violations}};
        return copy_out(j.dump(), report_json_out, report_cap);
    });
}

bgg_status bgg_image_load(const char* png_path, bgg_image** out) {
    return guarded([&]() -> bgg_status {
        bgg::require(png_path && out, bgg::ErrorKind::argument, "png_path and out are required");
        *out = new bgg_image{bgg::read_png_rgb8(png_path)};
        return BGG_OK;
    });
}

bgg_status bgg_image_save(const bgg_image* img, const char* png_path) {
    return guarded([&]() -> bgg_status {
        bgg::require(img && png_path, bgg::ErrorKind::argument, "image and png_path are required");
        bgg::write_png_rgb8(png_path, img->img);
        return BGG_OK;
    });
}

void bgg_image_close(bgg_image* img) { delete img; }
int bgg_image_width(const bgg_image* img) { return img ? img->img.w : -1; }
int bgg_image_height(const bgg_image* img) { return img ? img->img.h : -1; }
const float* bgg_image_data(const bgg_image* img) { return img ? img->img.v.data() : nullptr; }

bgg_status bgg_perturb_preview(const char* manifest_path, const char* record_id, const char* params_json,
                               const char* out_png) {
    return guarded([&]() -> bgg_status {
        bgg::require(manifest_path && record_id && out_png, bgg::ErrorKind::argument,
                     "manifest, record_id and out_png are required");
        bgg::DatasetManifest man = bgg::load_manifest(manifest_path);
        bgg::AdRecord rec = bgg::load_record(man, record_id);
        json j = parse_json_arg(params_json, "perturb params");

        bgg::PerturbParams params;
        params.dilation_radius = j.value("dilation_radius", params.dilation_radius);
        params.sigma_lo = j.value("sigma_lo", params.sigma_lo);
        params.sigma_hi = j.value("sigma_hi", params.sigma_hi);
        params.enable_dilation = j.value("enable_dilation", params.enable_dilation);
        params.enable_fill = j.value("enable_fill", params.enable_fill);
        params.enable_mixup = j.value("enable_mixup", params.enable_mixup);
        uint64_t seed = seed_from(j, "seed", 0);

        std::string partner_id = j.value("partner_record_id", std::string());
        if (partner_id.empty()) {
            for (const auto& r : man.records)
                if (r.record_id != record_id) {
                    partner_id = r.record_id;
                    break;
                }
        }
        bgg::require(!partner_id.empty(), bgg::ErrorKind::config, "no partner record available for mixup");
        bgg::AdRecord partner = bgg::load_record(man, partner_id);

        bgg::Rng rng(seed);
        bgg::Mask aug = params.enable_dilation ? bgg::dilate_mask(rec.mask, params.dilation_radius) : rec.mask;
        bgg::Image filled = params.enable_fill ? bgg::fill_margin(rec.image, rec.mask, aug) : rec.image;
        float sigma = params.enable_mixup
                          ? static_cast<float>(bgg::Rng(rng).uniform(params.sigma_lo, params.sigma_hi))
                          : 1.f;
        bgg::Image mixed = params.enable_mixup ? bgg::mixup(filled, partner.image, sigma) : filled;
        bgg::PerturbResult pr = bgg::perturb_background(rec, partner.image, params, rng);

        // dilated-mask overlay panel: margin tinted red
        bgg::Image overlay = rec.image;
        for (int y = 0; y < overlay.h; ++y)
            for (int x = 0; x < overlay.w; ++x)
                if (aug.at(y, x) && !rec.mask.at(y, x)) {
                    overlay.at(y, x, 0) = 1.f;
                    overlay.at(y, x, 1) *= 0.25f;
                    overlay.at(y, x, 2) *= 0.25f;
                }

        const bgg::Image* panels[5] = {&rec.image, &overlay, &filled, &mixed, &pr.pg_input};
        int sep = 2;
        bgg::Image grid(rec.image.h, rec.image.w * 5 + sep * 4, 3, 1.f);
        for (int p = 0; p < 5; ++p) {
            int x0 = p * (rec.image.w + sep);
            for (int y = 0; y < rec.image.h; ++y)
                for (int x = 0; x < rec.image.w; ++x)
                    for (int c = 0; c < 3; ++c) grid.at(y, x0 + x, c) = panels[p]->at(y, x, c);
        }
        bgg::write_png_rgb8(out_png, grid);
        return BGG_OK;
    });
}

bgg_status bgg_train(const char* manifest_path, const char* config_json, const char* out_dir,
                     char* checkpoint_path_out, size_t checkpoint_path_cap) {
    return guarded([&]() -> bgg_status {
        bgg::require(manifest_path && out_dir, bgg::ErrorKind::argument,
                     "manifest_path and out_dir are required");
        bgg::DatasetManifest man = bgg::load_manifest(manifest_path);
        bgg::TrainConfig cfg = bgg::TrainConfig::from_json(parse_json_arg(config_json, "train config"));
        cfg.out_dir = out_dir;
        bgg::TrainResult res = bgg::train(cfg, man);
        if (checkpoint_path_out) return copy_out(res.checkpoint_path, checkpoint_path_out, checkpoint_path_cap);
        return BGG_OK;
    });
}

bgg_status bgg_model_open(const char* checkpoint_path, bgg_model** out) {
    return guarded([&]() -> bgg_status {
        bgg::require(checkpoint_path && out, bgg::ErrorKind::argument, "checkpoint_path and out are required");
        bgg::Checkpoint ck;
        auto model = bgg::load_model_file(checkpoint_path, &ck);
        auto* h = new bgg_model;
        h->model = std::move(model);
        h->kind = ck.header.value("kind", "model");
        if (ck.header.contains("train")) h->stage = ck.header["train"].value("stage", "");
        *out = h;
        return BGG_OK;
    });
}

void bgg_model_close(bgg_model* m) { delete m; }

bgg_status bgg_model_info(const bgg_model* m, char* info_json_out, size_t info_cap) {
    return guarded([&]() -> bgg_status {
        bgg::require(m != nullptr, bgg::ErrorKind::argument, "model is required");
        const bgg::ModelConfig& mc = m->model->config();
        json j = {{"kind", m->kind},
                  {"stage", m->stage},
                  {"image_size", mc.denoiser.image_size},
                  {"categories", mc.categories},
                  {"has_cg", mc.has_cg},
                  {"has_pg", mc.has_pg},
                  {"cg_masked_attention", mc.cg_masked_attention},
                  {"shared_prompt", mc.shared_prompt},
                  {"train_steps", mc.schedule.train_steps}};
        return copy_out(j.dump(), info_json_out, info_cap);
    });
}

bgg_status bgg_generate(bgg_model* m, const char* request_json, bgg_image** image_out,
                        char* provenance_json_out, size_t provenance_cap) {
    return guarded([&]() -> bgg_status {
        bgg::require(m && image_out, bgg::ErrorKind::argument, "model and image_out are required");
        json j = parse_json_arg(request_json, "generate request");
        bgg::SampleRequest req;
        bgg::require(j.contains("product") && j.contains("mask"), bgg::ErrorKind::argument,
                     "request needs 'product' and 'mask' image paths");
        req.product_image = bgg::read_png_rgb8(j.at("product").get<std::string>());
        req.product_mask = bgg::read_png_mask(j.at("mask").get<std::string>());
        req.category_id = j.value("category", 0);
        if (j.contains("reference"))
            req.reference_image = bgg::read_png_rgb8(j.at("reference").get<std::string>());
        if (j.contains("reference_mask"))
            req.reference_mask = bgg::read_png_mask(j.at("reference_mask").get<std::string>());
        req.use_pg = j.value("use_pg", false);
        req.reference_init = j.value("reference_init", true);
        req.steps = j.value("steps", 50);
        req.seed = seed_from(j, "seed", 0);
        req.mode = bgg::preserve_mode_from_name(j.value("mode", std::string("final_composite")));

        json prov;
        bgg::Image img = bgg::generate(*m->model, req, &prov);
        *image_out = new bgg_image{std::move(img)};
        if (provenance_json_out) return copy_out(prov.dump(), provenance_json_out, provenance_cap);
        return BGG_OK;
    });
}

bgg_status bgg_train_extractor(const char* manifest_path, const char* config_json, const char* out_path) {
    return guarded([&]() -> bgg_status {
        bgg::require(manifest_path && out_path, bgg::ErrorKind::argument,
                     "manifest_path and out_path are required");
        bgg::DatasetManifest man = bgg::load_manifest(manifest_path);
        json j = parse_json_arg(config_json, "extractor config");
        bgg::ExtractorConfig cfg;
        cfg.d_e = j.value("d_e", cfg.d_e);
        cfg.steps = j.value("steps", cfg.steps);
        cfg.batch = j.value("batch", cfg.batch);
        cfg.lr = j.value("lr", cfg.lr);
        cfg.seed = seed_from(j, "seed", cfg.seed);
        cfg.accuracy_gate = j.value("accuracy_gate", cfg.accuracy_gate);
        cfg.image_size = man.image_size;
        bgg::FeatureExtractor ex = bgg::train_extractor(man, cfg);
        ex.save(out_path);
        return BGG_OK;
    });
}

bgg_status bgg_extractor_open(const char* path, bgg_extractor** out) {
    return guarded([&]() -> bgg_status {
        bgg::require(path && out, bgg::ErrorKind::argument, "path and out are required");
        auto* h = new bgg_extractor;
        h->ex = std::make_unique<bgg::FeatureExtractor>(bgg::FeatureExtractor::load(path));
        *out = h;
        return BGG_OK;
    });
}

void bgg_extractor_close(bgg_extractor* e) { delete e; }

bgg_status bgg_embed_similarity(const bgg_extractor* e, const bgg_image* a, const bgg_image* mask_a,
                                const bgg_image* b, const bgg_image* mask_b, double* out) {
    return guarded([&]() -> bgg_status {
        bgg::require(e && a && b && out, bgg::ErrorKind::argument, "extractor, images and out are required");
        auto to_bg = [](const bgg_image* img, const bgg_image* mask) -> bgg::Image {
            if (!mask) return img->img;
            bgg::Mask m(mask->img.h, mask->img.w);
            for (int y = 0; y < m.h; ++y)
                for (int x = 0; x < m.w; ++x) m.at(y, x) = mask->img.at(y, x, 0) >= 0.5f ? 1 : 0;
            return bgg::apply_mask(img->img, m, 0);
        };
        *out = bgg::embed_similarity(to_bg(a, mask_a), to_bg(b, mask_b), *e->ex);
        return BGG_OK;
    });
}

bgg_status bgg_evaluate(const char* metric, const char* args_json, char* report_json_out, size_t report_cap) {
    return guarded([&]() -> bgg_status {
        bgg::require(metric != nullptr, bgg::ErrorKind::argument, "metric is required");
        json args = parse_json_arg(args_json, "evaluate args");
        std::string mt = metric;
        json report;
        report["metric"] = mt;

        auto load_dir_embeddings = [&](const std::string& dir,
                                       const bgg::FeatureExtractor& ex) -> std::vector<std::vector<float>> {
            std::vector<fs::path> files;
            for (auto& e : fs::directory_iterator(dir))
                if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            bgg::require(!files.empty(), bgg::ErrorKind::argument, "no PNG files under " + dir);
            std::vector<std::vector<float>> out;
            for (const auto& f : files) out.push_back(ex.embed(bgg::read_png_rgb8(f.string())));
            return out;
        };

        if (mt == "fid") {
            bgg::FeatureExtractor ex =
                bgg::FeatureExtractor::load(args.at("extractor").get<std::string>());
            auto ea = load_dir_embeddings(args.at("set_a").get<std::string>(), ex);
            auto eb = load_dir_embeddings(args.at("set_b").get<std::string>(), ex);
            report["fid"] = bgg::fid_from_embeddings(ea, eb);
        } else if (mt == "sim") {
            bgg::FeatureExtractor ex =
                bgg::FeatureExtractor::load(args.at("extractor").get<std::string>());
            bgg::Image a = bgg::read_png_rgb8(args.at("image_a").get<std::string>());
            bgg::Image b = bgg::read_png_rgb8(args.at("image_b").get<std::string>());
            report["similarity"] = bgg::embed_similarity(a, b, ex);
        } else if (mt == "cluster") {
            bgg::FeatureExtractor ex =
                bgg::FeatureExtractor::load(args.at("extractor").get<std::string>());
            std::vector<std::vector<float>> embeds;
            std::vector<int> labels;
            for (const auto& e : args.at("sets")) {
                auto set = load_dir_embeddings(e.at("dir").get<std::string>(), ex);
                for (auto& v : set) {
                    embeds.push_back(std::move(v));
                    labels.push_back(e.at("label").get<int>());
                }
            }
            bgg::ClusterMetrics cm = bgg::cluster_metrics(embeds, labels);
            report["intra_mean"] = cm.intra_mean;
            report["inter_mean"] = cm.inter_mean;
            report["ratio"] = cm.ratio;
            report["warnings"] = cm.warnings;
        } else if (mt == "copypaste") {
            bgg::Image gen = bgg::read_png_rgb8(args.at("generated").get<std::string>());
            bgg::Image ref = bgg::read_png_rgb8(args.at("reference").get<std::string>());
            bgg::Mask mask = bgg::read_png_mask(args.at("mask").get<std::string>());
            bgg::CopyPasteScore s = bgg::copy_paste_score(gen, ref, mask);
            report["pixel_mse"] = s.pixel_mse;
            report["identical_fraction"] = s.identical_fraction;
        } else if (mt == "ablation") {
            bgg::DatasetManifest man = bgg::load_manifest(args.at("manifest").get<std::string>());
            bgg::FeatureExtractor ex =
                bgg::FeatureExtractor::load(args.at("extractor").get<std::string>());
            std::vector<std::string> missing;
            bgg::AblationSeedResult rows = bgg::evaluate_ablation_rows(
                man, ex, args.at("full_checkpoint").get<std::string>(),
                args.value("rowa_checkpoint", std::string()), args.value("sample_steps", 25),
                args.value("max_pairs", 40), seed_from(args, "seed", 0), &missing);
            json jr = json::array();
            for (auto& r : rows.rows)
                jr.push_back({{"row", r.name}, {"sim", r.sim_mean}, {"fid", r.fid}});
            report["rows"] = jr;
            report["partial"] = !missing.empty();
            report["missing_rows"] = missing;
        } else {
            bgg::fail(bgg::ErrorKind::lookup,
                      "unknown metric '" + mt + "' (known: fid, sim, cluster, copypaste, ablation)");
        }
        return copy_out(report.dump(), report_json_out, report_cap);
    });
}

bgg_status bgg_reproduce(const char* experiment, const char* config_json, const char* out_dir,
                         char* report_path_out, size_t report_path_cap) {
    return guarded([&]() -> bgg_status {
        bgg::require(experiment && out_dir, bgg::ErrorKind::argument, "experiment and out_dir are required");
        json j = parse_json_arg(config_json, "reproduce config");
        uint64_t seed = seed_from(j, "seed", 0);
        std::string profile_name = j.value("profile", "desk");
        bgg::ExperimentProfile profile;
        if (profile_name == "desk")
            profile = bgg::ExperimentProfile::desk(seed);
        else if (profile_name == "ci")
            profile = bgg::ExperimentProfile::ci(seed);
        else
            bgg::fail(bgg::ErrorKind::argument, "unknown profile '" + profile_name + "' (desk|ci)");
        std::string path = bgg::run_experiment(experiment, out_dir, profile);
        if (report_path_out) return copy_out(path, report_path_out, report_path_cap);
        return BGG_OK;
    });
}

}  // extern "C"
