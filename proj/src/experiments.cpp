#include "bgg/experiments.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "bgg/png_io.hpp"
#include "bgg/sample.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bgg {

ExperimentProfile ExperimentProfile::desk(uint64_t base_seed) {
    ExperimentProfile p;
    p.name = "desk";
    p.corpus.num_categories = 3;
    p.corpus.records_per_category = 200;
    p.corpus.image_size = 32;
    p.corpus.seed = base_seed;
    p.corpus.train_fraction = 0.6;
    p.corpus.bg1k_fraction = 0.15;
    p.denoiser.image_size = 32;
    p.denoiser.base_channels = 16;
    p.denoiser.channel_mults = {1, 2, 4};
    p.denoiser.attention_resolutions = {8, 4};
    p.denoiser.prompt_dim = 32;
    p.denoiser.num_heads = 4;
    p.denoiser.gn_groups = 8;
    p.extractor.d_e = 16;
    p.extractor.steps = 600;
    p.extractor.batch = 32;
    p.extractor.seed = base_seed ^ 0x5eedULL;
    p.cg_steps = 2200;
    p.shared_steps = 600;
    p.cgpg_steps = 700;
    p.rowa_steps = 2900;
    p.batch_size = 16;
    p.lr = 4e-4f;
    p.sample_steps = 30;
    p.blend_sweeps = true;
    p.eval_products = 45;
    p.max_pairs = 36;
    p.seeds = {base_seed + 101, base_seed + 202, base_seed + 303};
    return p;
}

ExperimentProfile ExperimentProfile::ci(uint64_t base_seed) {
    ExperimentProfile p = desk(base_seed);
    p.name = "ci";
    p.corpus.records_per_category = 36;
    p.corpus.train_fraction = 0.5;
    p.corpus.bg1k_fraction = 0.2;
    p.denoiser.base_channels = 8;
    p.denoiser.gn_groups = 4;
    p.denoiser.num_heads = 2;
    p.denoiser.prompt_dim = 16;
    p.extractor.d_e = 8;
    p.extractor.steps = 200;
    p.extractor.batch = 16;
    p.cg_steps = 60;
    p.shared_steps = 30;
    p.cgpg_steps = 40;
    p.rowa_steps = 80;
    p.batch_size = 8;
    p.lr = 1e-3f;
    p.sample_steps = 6;
    p.eval_products = 9;
    p.max_pairs = 12;
    p.seeds = {base_seed + 101};
    return p;
}

json ExperimentProfile::to_json() const {
    json j;
    j["name"] = name;
    j["corpus"] = {{"num_categories", corpus.num_categories},
                   {"records_per_category", corpus.records_per_category},
                   {"image_size", corpus.image_size},
                   {"seed", corpus.seed},
                   {"brands_per_category", corpus.brands_per_category},
                   {"train_fraction", corpus.train_fraction},
                   {"bg1k_fraction", corpus.bg1k_fraction}};
    j["denoiser"] = {{"base_channels", denoiser.base_channels},
                     {"channel_mults", denoiser.channel_mults},
                     {"attention_resolutions", denoiser.attention_resolutions},
                     {"prompt_dim", denoiser.prompt_dim},
                     {"num_heads", denoiser.num_heads},
                     {"gn_groups", denoiser.gn_groups}};
    j["extractor"] = {{"d_e", extractor.d_e}, {"steps", extractor.steps}, {"batch", extractor.batch}};
    j["steps"] = {{"cg", cg_steps},
                  {"shared", shared_steps},
                  {"cgpg", cgpg_steps},
                  {"rowa", rowa_steps}};
    j["batch_size"] = batch_size;
    j["lr"] = lr;
    j["sample_steps"] = sample_steps;
    j["blend_sweeps"] = blend_sweeps;
    j["eval_products"] = eval_products;
    j["max_pairs"] = max_pairs;
    j["seeds"] = seeds;
    return j;
}

namespace {

struct Context {
    fs::path out;
    ExperimentProfile profile;
    DatasetManifest manifest;
    std::unique_ptr<FeatureExtractor> extractor;
};

Context setup(const std::string& out_dir, const ExperimentProfile& profile) {
    Context ctx;
    ctx.out = out_dir;
    ctx.profile = profile;
    fs::create_directories(ctx.out);
    {
        std::ofstream echo(ctx.out / "config_echo.json");
        echo << profile.to_json().dump(2) << "\n";
    }
    ctx.manifest = synthesize_corpus(profile.corpus, (ctx.out / "corpus").string());
    ctx.extractor = std::make_unique<FeatureExtractor>(train_extractor(ctx.manifest, profile.extractor));
    ctx.extractor->save((ctx.out / "extractor.ckpt").string());
    return ctx;
}

TrainConfig base_train(const Context& ctx, uint64_t seed, const std::string& run_name) {
    TrainConfig cfg;
    cfg.denoiser = ctx.profile.denoiser;
    cfg.schedule = ctx.profile.schedule;
    cfg.batch_size = ctx.profile.batch_size;
    cfg.lr = ctx.profile.lr;
    cfg.seed = seed;
    cfg.perturb = ctx.profile.perturb;
    cfg.run_name = run_name;
    cfg.log_every = 50;
    return cfg;
}

std::string seed_dir(const Context& ctx, uint64_t seed) {
    fs::path d = ctx.out / ("seed_" + std::to_string(seed));
    fs::create_directories(d);
    return d.string();
}

// cg_only with the joint-from-scratch flag: the backbone is not pretrained at
// desk scale, so branch stages build on a jointly trained category model.
std::string train_cg_joint(const Context& ctx, uint64_t seed) {
    TrainConfig cg = base_train(ctx, seed, "cg");
    cg.stage = TrainStage::cg_only;
    cg.joint_backbone = true;
    cg.steps = ctx.profile.cg_steps;
    cg.out_dir = seed_dir(ctx, seed);
    return train(cg, ctx.manifest).checkpoint_path;
}

Image record_background(const AdRecord& rec) { return apply_mask(rec.image, rec.mask, 0); }

// Evenly pick held-out products across categories.
std::vector<std::string> pick_products(const DatasetManifest& m, int count) {
    std::vector<std::vector<std::string>> per_cat(static_cast<size_t>(m.num_categories()));
    for (const auto& id : m.split("eval_bg1k")) per_cat[size_t(m.find_record(id).category_id)].push_back(id);
    std::vector<std::string> out;
    size_t k = 0;
    while (static_cast<int>(out.size()) < count) {
        bool any = false;
        for (auto& v : per_cat)
            if (k < v.size() && static_cast<int>(out.size()) < count) {
                out.push_back(v[k]);
                any = true;
            }
        if (!any) break;
        ++k;
    }
    return out;
}

struct PairSweepResult {
    double sim_mean = 0;
    double fid = 0;
    double identical_fraction_mean = 0;
};

PairSweepResult sweep_pairs(const DatasetManifest& manifest, const FeatureExtractor& extractor,
                            int sample_steps, PreserveMode mode, Model<float>& model,
                            const std::vector<PairRecord>& pairs, bool use_pg, bool reference_init,
                            uint64_t seed, const std::string& row_tag, const std::string& sample_dir) {
    PairSweepResult res;
    std::vector<std::vector<float>> gen_embeds;
    double sim_sum = 0, ident_sum = 0;
    Rng gen_seeds = Rng(seed).fork("sweep:" + row_tag);
    for (size_t i = 0; i < pairs.size(); ++i) {
        AdRecord prod = load_record(manifest, pairs[i].product_record_id);
        AdRecord ref = load_record(manifest, pairs[i].reference_record_id);
        SampleRequest req;
        req.product_image = prod.image;
        req.product_mask = prod.mask;
        req.category_id = prod.category_id;
        req.reference_image = ref.image;
        req.reference_mask = ref.mask;
        req.use_pg = use_pg;
        req.reference_init = reference_init;
        req.steps = sample_steps;
        req.mode = mode;
        req.seed = gen_seeds.fork(static_cast<uint64_t>(i)).raw_state();
        Image gen = generate(model, req);

        Image gen_bg = apply_mask(gen, prod.mask, 0);
        Image ref_bg = record_background(ref);
        sim_sum += embed_similarity(gen_bg, ref_bg, extractor);
        gen_embeds.push_back(extractor.embed(gen_bg));
        ident_sum += copy_paste_score(gen, ref.image, prod.mask).identical_fraction;

        if (!sample_dir.empty() && i < 3)
            write_png_rgb8(sample_dir + "/row_" + row_tag + "_" + std::to_string(i) + ".png", gen);
    }
    res.sim_mean = sim_sum / static_cast<double>(pairs.size());
    res.identical_fraction_mean = ident_sum / static_cast<double>(pairs.size());

    std::vector<std::vector<float>> orig_embeds;
    for (const auto& id : manifest.split("eval_bg1k")) {
        AdRecord rec = load_record(manifest, id);
        orig_embeds.push_back(extractor.embed(record_background(rec)));
    }
    res.fid = fid_from_embeddings(gen_embeds, orig_embeds);
    return res;
}

PairSweepResult sweep_pairs(const Context& ctx, Model<float>& model, const std::vector<PairRecord>& pairs,
                            bool use_pg, bool reference_init, uint64_t seed, const std::string& row_tag,
                            const std::string& sample_dir) {
    return sweep_pairs(ctx.manifest, *ctx.extractor, ctx.profile.sample_steps, model, pairs, use_pg,
                       reference_init, seed, row_tag, sample_dir);
}

std::vector<PairRecord> limit_pairs(const DatasetManifest& manifest, uint64_t seed, int max_pairs) {
    PairSet ps = build_pairs(manifest, seed);
    std::vector<PairRecord> pairs = ps.pairs;
    if (max_pairs > 0 && static_cast<int>(pairs.size()) > max_pairs)
        pairs.resize(static_cast<size_t>(max_pairs));
    require(!pairs.empty(), ErrorKind::config, "pair split produced no usable pairs");
    return pairs;
}

std::vector<PairRecord> capped_pairs(const Context& ctx) {
    return limit_pairs(ctx.manifest, ctx.profile.corpus.seed, ctx.profile.max_pairs);
}

void write_report(const Context& ctx, const json& body, const std::string& text_table) {
    json full;
    full["profile"] = ctx.profile.to_json();
    full["report"] = body;
    std::ofstream out(ctx.out / "report.json");
    out << full.dump(2) << "\n";
    std::ofstream txt(ctx.out / "report.txt");
    txt << text_table;
}

float smoothed(const std::vector<std::pair<int, float>>& log, size_t begin, size_t count) {
    double acc = 0;
    size_t n = 0;
    for (size_t i = begin; i < std::min(begin + count, log.size()); ++i) {
        acc += log[i].second;
        ++n;
    }
    return n ? static_cast<float>(acc / double(n)) : 0.f;
}

}  // namespace

json CategoryScaleReport::to_json() const {
    json arr = json::array();
    for (const auto& s : seeds)
        arr.push_back({{"seed", s.seed},
                       {"gen_accuracy", s.gen_accuracy},
                       {"ratio_cg", s.ratio_cg},
                       {"ratio_shared", s.ratio_shared},
                       {"loss_first", s.loss_first},
                       {"loss_last", s.loss_last}});
    return {{"seeds", arr}};
}

CategoryScaleReport run_category_scale(const std::string& out_dir, const ExperimentProfile& profile) {
    Context ctx = setup(out_dir, profile);
    CategoryScaleReport report;

    std::vector<std::string> product_ids = pick_products(ctx.manifest, profile.eval_products);
    require(!product_ids.empty(), ErrorKind::config, "no held-out products available");

    for (uint64_t seed : profile.seeds) {
        CategorySeedResult r;
        r.seed = seed;
        StageOutputs so = train_backbone_and_cg(ctx, seed);

        TrainConfig shared = base_train(ctx, seed, "shared");
        shared.stage = TrainStage::cg_only;
        shared.steps = profile.cg_steps;
        shared.shared_prompt = true;
        shared.init_checkpoint = so.backbone;
        shared.out_dir = seed_dir(ctx, seed);
        std::string shared_ckpt = train(shared, ctx.manifest).checkpoint_path;

        auto cg_model = load_model_file(so.cg);
        auto shared_model = load_model_file(shared_ckpt);

        auto sweep = [&](Model<float>& model, const std::string& tag, std::vector<std::vector<float>>& embeds,
                         std::vector<int>& labels) {
            int correct = 0;
            Rng gen_seeds = Rng(seed).fork("catsweep:" + tag);
            fs::path samples = fs::path(seed_dir(ctx, seed)) / "samples";
            fs::create_directories(samples);
            for (size_t i = 0; i < product_ids.size(); ++i) {
                AdRecord rec = load_record(ctx.manifest, product_ids[i]);
                SampleRequest req;
                req.product_image = rec.image;
                req.product_mask = rec.mask;
                req.category_id = rec.category_id;
                req.steps = profile.sample_steps;
                req.seed = gen_seeds.fork(static_cast<uint64_t>(i)).raw_state();
                Image gen = generate(model, req);
                Image gen_bg = apply_mask(gen, rec.mask, 0);
                if (ctx.extractor->classify(gen_bg) == rec.category_id) ++correct;
                embeds.push_back(ctx.extractor->embed(gen_bg));
                labels.push_back(rec.category_id);
                if (i < 3) write_png_rgb8((samples / (tag + "_" + std::to_string(i) + ".png")).string(), gen);
            }
            return static_cast<double>(correct) / static_cast<double>(product_ids.size());
        };

        std::vector<std::vector<float>> emb_cg, emb_shared;
        std::vector<int> lab_cg, lab_shared;
        r.gen_accuracy = sweep(*cg_model, "cg", emb_cg, lab_cg);
        (void)sweep(*shared_model, "shared", emb_shared, lab_shared);
        r.ratio_cg = cluster_metrics(emb_cg, lab_cg).ratio;
        r.ratio_shared = cluster_metrics(emb_shared, lab_shared).ratio;

        report.seeds.push_back(r);
    }

    // fill smoothed losses from logs
    for (size_t i = 0; i < report.seeds.size(); ++i) {
        std::ifstream log(fs::path(seed_dir(ctx, report.seeds[i].seed)) / "cg_log.jsonl");
        std::vector<std::pair<int, float>> entries;
        std::string line;
        while (std::getline(log, line)) {
            if (line.empty()) continue;
            json e = json::parse(line);
            entries.emplace_back(e.at("step").get<int>(), e.at("loss").get<float>());
        }
        if (!entries.empty()) {
            report.seeds[i].loss_first = smoothed(entries, 0, 3);
            report.seeds[i].loss_last = smoothed(entries, entries.size() >= 3 ? entries.size() - 3 : 0, 3);
        }
    }

    std::ostringstream txt;
    txt << "category_scale report\n";
    txt << "seed  gen_accuracy  ratio_cg  ratio_shared\n";
    for (const auto& s : report.seeds) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-6llu %10.3f %9.4f %12.4f\n",
                      static_cast<unsigned long long>(s.seed), s.gen_accuracy, s.ratio_cg, s.ratio_shared);
        txt << buf;
    }
    write_report(ctx, report.to_json(), txt.str());
    return report;
}

json AblationReport::to_json() const {
    json arr = json::array();
    for (const auto& s : seeds) {
        json rows = json::array();
        for (const auto& r : s.rows)
            rows.push_back({{"row", r.name},
                            {"cg_masked", r.cg_masked},
                            {"pg", r.use_pg},
                            {"init", r.reference_init},
                            {"sim", r.sim_mean},
                            {"fid", r.fid}});
        arr.push_back({{"seed", s.seed}, {"rows", rows}});
    }
    json j = {{"seeds", arr}};
    if (copy_paste)
        j["copy_paste"] = {{"identical_with_perturbation", copy_paste->identical_with},
                           {"identical_without_perturbation", copy_paste->identical_without},
                           {"sim_with_perturbation", copy_paste->sim_with},
                           {"sim_without_perturbation", copy_paste->sim_without}};
    return j;
}

AblationReport run_ablation(const std::string& out_dir, const ExperimentProfile& profile,
                            bool with_copy_paste) {
    Context ctx = setup(out_dir, profile);
    AblationReport report;
    std::vector<PairRecord> pairs = capped_pairs(ctx);

    std::string first_full_ckpt, first_cg_ckpt;
    for (uint64_t seed : profile.seeds) {
        AblationSeedResult sr;
        sr.seed = seed;
        StageOutputs so = train_backbone_and_cg(ctx, seed);

        TrainConfig full = base_train(ctx, seed, "cgpg");
        full.stage = TrainStage::cg_pg;
        full.steps = profile.cgpg_steps;
        full.init_checkpoint = so.cg;
        full.out_dir = seed_dir(ctx, seed);
        std::string full_ckpt = train(full, ctx.manifest).checkpoint_path;

        TrainConfig rowa = base_train(ctx, seed, "rowa");
        rowa.stage = TrainStage::cg_pg;
        rowa.steps = profile.rowa_steps;
        rowa.unmasked_cg = true;
        rowa.init_checkpoint = so.backbone;
        rowa.out_dir = seed_dir(ctx, seed);
        std::string rowa_ckpt = train(rowa, ctx.manifest).checkpoint_path;

        if (first_full_ckpt.empty()) {
            first_full_ckpt = full_ckpt;
            first_cg_ckpt = so.cg;
        }

        auto full_model = load_model_file(full_ckpt);
        auto rowa_model = load_model_file(rowa_ckpt);
        fs::path samples = fs::path(seed_dir(ctx, seed)) / "samples";
        fs::create_directories(samples);

        auto add_row = [&](const std::string& name, Model<float>& model, bool masked, bool pg, bool init) {
            PairSweepResult r = sweep_pairs(ctx, model, pairs, pg, init, seed, name, samples.string());
            AblationRow row;
            row.name = name;
            row.cg_masked = masked;
            row.use_pg = pg;
            row.reference_init = init;
            row.sim_mean = r.sim_mean;
            row.fid = r.fid;
            sr.rows.push_back(row);
        };
        add_row("a", *rowa_model, false, true, true);
        add_row("b", *full_model, true, false, true);
        add_row("c", *full_model, true, true, false);
        add_row("d", *full_model, true, true, true);
        report.seeds.push_back(std::move(sr));
    }

    if (with_copy_paste) {
        uint64_t seed = profile.seeds.front();
        TrainConfig nop = base_train(ctx, seed, "noperturb");
        nop.stage = TrainStage::cg_pg;
        nop.steps = profile.cgpg_steps;
        nop.init_checkpoint = first_cg_ckpt;
        nop.perturb.enable_dilation = nop.perturb.enable_fill = nop.perturb.enable_mixup = false;
        nop.out_dir = seed_dir(ctx, seed);
        std::string nop_ckpt = train(nop, ctx.manifest).checkpoint_path;

        auto full_model = load_model_file(first_full_ckpt);
        auto nop_model = load_model_file(nop_ckpt);
        PairSweepResult with_r = sweep_pairs(ctx, *full_model, pairs, true, true, seed, "cp_with", "");
        PairSweepResult without_r = sweep_pairs(ctx, *nop_model, pairs, true, true, seed, "cp_without", "");
        CopyPasteSection cp;
        cp.identical_with = with_r.identical_fraction_mean;
        cp.identical_without = without_r.identical_fraction_mean;
        cp.sim_with = with_r.sim_mean;
        cp.sim_without = without_r.sim_mean;
        report.copy_paste = cp;
    }

    std::ostringstream txt;
    txt << "ablation report (rows: a=no-CG-masking, b=no-PG, c=no-init, d=full)\n";
    txt << "seed  row  sim      fid\n";
    for (const auto& s : report.seeds)
        for (const auto& r : s.rows) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%-6llu %-4s %8.3f %8.4f\n",
                          static_cast<unsigned long long>(s.seed), r.name.c_str(), r.sim_mean, r.fid);
            txt << buf;
        }
    if (report.copy_paste) {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "copy_paste identical_fraction: with=%.5f without=%.5f | sim: with=%.3f without=%.3f\n",
                      report.copy_paste->identical_with, report.copy_paste->identical_without,
                      report.copy_paste->sim_with, report.copy_paste->sim_without);
        txt << buf;
    }
    write_report(ctx, report.to_json(), txt.str());
    return report;
}

json PersonalizedReport::to_json() const {
    json arr = json::array();
    for (const auto& s : seeds)
        arr.push_back({{"seed", s.seed},
                       {"sim_full", s.sim_full},
                       {"sim_no_pg", s.sim_no_pg},
                       {"fid_full", s.fid_full},
                       {"fid_no_pg", s.fid_no_pg}});
    return {{"seeds", arr}};
}

PersonalizedReport run_personalized(const std::string& out_dir, const ExperimentProfile& profile) {
    Context ctx = setup(out_dir, profile);
    PersonalizedReport report;
    std::vector<PairRecord> pairs = capped_pairs(ctx);

    for (uint64_t seed : profile.seeds) {
        StageOutputs so = train_backbone_and_cg(ctx, seed);
        TrainConfig full = base_train(ctx, seed, "cgpg");
        full.stage = TrainStage::cg_pg;
        full.steps = profile.cgpg_steps;
        full.init_checkpoint = so.cg;
        full.out_dir = seed_dir(ctx, seed);
        std::string full_ckpt = train(full, ctx.manifest).checkpoint_path;
        auto model = load_model_file(full_ckpt);
        fs::path samples = fs::path(seed_dir(ctx, seed)) / "samples";
        fs::create_directories(samples);

        PersonalizedSeedResult r;
        r.seed = seed;
        PairSweepResult d = sweep_pairs(ctx, *model, pairs, true, true, seed, "full", samples.string());
        PairSweepResult b = sweep_pairs(ctx, *model, pairs, false, true, seed, "no_pg", samples.string());
        r.sim_full = d.sim_mean;
        r.fid_full = d.fid;
        r.sim_no_pg = b.sim_mean;
        r.fid_no_pg = b.fid;
        report.seeds.push_back(r);
    }

    std::ostringstream txt;
    txt << "personalized report (full = CG+PG+init, no_pg = CG+init)\n";
    txt << "seed  sim_full  sim_no_pg  fid_full  fid_no_pg\n";
    for (const auto& s : report.seeds) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-6llu %9.3f %9.3f %9.4f %9.4f\n",
                      static_cast<unsigned long long>(s.seed), s.sim_full, s.sim_no_pg, s.fid_full,
                      s.fid_no_pg);
        txt << buf;
    }
    write_report(ctx, report.to_json(), txt.str());
    return report;
}

AblationSeedResult evaluate_ablation_rows(const DatasetManifest& manifest, const FeatureExtractor& extractor,
                                          const std::string& full_checkpoint,
                                          const std::string& rowa_checkpoint, int sample_steps, int max_pairs,
                                          uint64_t seed, std::vector<std::string>* missing) {
    AblationSeedResult out;
    out.seed = seed;
    std::vector<PairRecord> pairs = limit_pairs(manifest, seed, max_pairs);

    auto add_row = [&](const std::string& name, Model<float>& model, bool masked, bool pg, bool init) {
        PairSweepResult r =
            sweep_pairs(manifest, extractor, sample_steps, model, pairs, pg, init, seed, name, "");
        AblationRow row;
        row.name = name;
        row.cg_masked = masked;
        row.use_pg = pg;
        row.reference_init = init;
        row.sim_mean = r.sim_mean;
        row.fid = r.fid;
        out.rows.push_back(row);
    };

    if (!rowa_checkpoint.empty()) {
        auto rowa_model = load_model_file(rowa_checkpoint);
        add_row("a", *rowa_model, false, rowa_model->config().has_pg, true);
    } else if (missing) {
        missing->push_back("a");
    }
    auto full_model = load_model_file(full_checkpoint);
    require(full_model->config().has_cg, ErrorKind::config, "ablation needs a CG-capable checkpoint");
    bool pg_capable = full_model->config().has_pg;
    add_row("b", *full_model, true, false, true);
    if (pg_capable) {
        add_row("c", *full_model, true, true, false);
        add_row("d", *full_model, true, true, true);
    } else if (missing) {
        missing->push_back("c");
        missing->push_back("d");
    }
    return out;
}

bool experiment_known(const std::string& experiment) {
    return experiment == "category_scale" || experiment == "personalized" || experiment == "ablation";
}

std::string run_experiment(const std::string& experiment, const std::string& out_dir,
                           const ExperimentProfile& profile) {
    require(experiment_known(experiment), ErrorKind::lookup,
            "unknown experiment '" + experiment + "' (known: category_scale, personalized, ablation)");
    if (experiment == "category_scale")
        run_category_scale(out_dir, profile);
    else if (experiment == "personalized")
        run_personalized(out_dir, profile);
    else
        run_ablation(out_dir, profile, true);
    return (fs::path(out_dir) / "report.json").string();
}

}  // namespace bgg
