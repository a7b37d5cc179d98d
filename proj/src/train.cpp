#include "bgg/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace bgg {

std::string stage_name(TrainStage s) {
    switch (s) {
        case TrainStage::backbone: return "backbone";
        case TrainStage::cg_only: return "cg_only";
        default: return "cg_pg";
    }
}

TrainStage stage_from_name(const std::string& name) {
    if (name == "backbone") return TrainStage::backbone;
    if (name == "cg_only") return TrainStage::cg_only;
    if (name == "cg_pg") return TrainStage::cg_pg;
    fail(ErrorKind::config, "unknown training stage: " + name);
}

json TrainConfig::to_json() const {
    json j;
    j["stage"] = stage_name(stage);
    j["batch_size"] = batch_size;
    j["steps"] = steps;
    j["lr"] = lr;
    char seed_hex[32];
    std::snprintf(seed_hex, sizeof seed_hex, "%016llx", static_cast<unsigned long long>(seed));
    j["seed"] = seed_hex;
    if (param_seed) {
        std::snprintf(seed_hex, sizeof seed_hex, "%016llx", static_cast<unsigned long long>(param_seed));
        j["param_seed"] = seed_hex;
    }
    j["perturb"] = {{"dilation_radius", perturb.dilation_radius}, {"sigma_lo", perturb.sigma_lo},
                    {"sigma_hi", perturb.sigma_hi},               {"enable_dilation", perturb.enable_dilation},
                    {"enable_fill", perturb.enable_fill},         {"enable_mixup", perturb.enable_mixup}};
    j["joint_backbone"] = joint_backbone;
    j["shared_prompt"] = shared_prompt;
    j["unmasked_cg"] = unmasked_cg;
    j["freeze_cg"] = freeze_cg;
    j["freeze_identifiers"] = freeze_identifiers;
    j["checkpoint_every"] = checkpoint_every;
    j["log_every"] = log_every;
    j["denoiser"] = {{"image_size", denoiser.image_size},
                     {"codec_factor", denoiser.codec_factor},
                     {"base_channels", denoiser.base_channels},
                     {"channel_mults", denoiser.channel_mults},
                     {"attention_resolutions", denoiser.attention_resolutions},
                     {"prompt_dim", denoiser.prompt_dim},
                     {"num_heads", denoiser.num_heads},
                     {"gn_groups", denoiser.gn_groups}};
    j["schedule"] = {{"train_steps", schedule.train_steps},
                     {"beta_start", schedule.beta_start},
                     {"beta_end", schedule.beta_end}};
    // basenames only: echoes land in files that reruns compare byte for byte
    j["init_checkpoint"] = fs::path(init_checkpoint).filename().string();
    j["resume_checkpoint"] = fs::path(resume_checkpoint).filename().string();
    j["run_name"] = run_name;
    return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    if (j.contains("stage")) c.stage = stage_from_name(j.at("stage").get<std::string>());
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.lr = j.value("lr", c.lr);
    if (j.contains("seed")) {
        if (j.at("seed").is_string())
            c.seed = std::stoull(j.at("seed").get<std::string>(), nullptr, 16);
        else
            c.seed = j.at("seed").get<uint64_t>();
    }
    if (j.contains("param_seed")) {
        if (j.at("param_seed").is_string())
            c.param_seed = std::stoull(j.at("param_seed").get<std::string>(), nullptr, 16);
        else
            c.param_seed = j.at("param_seed").get<uint64_t>();
    }
    if (j.contains("perturb")) {
        const json& p = j.at("perturb");
        c.perturb.dilation_radius = p.value("dilation_radius", c.perturb.dilation_radius);
        c.perturb.sigma_lo = p.value("sigma_lo", c.perturb.sigma_lo);
        c.perturb.sigma_hi = p.value("sigma_hi", c.perturb.sigma_hi);
        c.perturb.enable_dilation = p.value("enable_dilation", c.perturb.enable_dilation);
        c.perturb.enable_fill = p.value("enable_fill", c.perturb.enable_fill);
        c.perturb.enable_mixup = p.value("enable_mixup", c.perturb.enable_mixup);
    }
    c.joint_backbone = j.value("joint_backbone", c.joint_backbone);
    c.shared_prompt = j.value("shared_prompt", c.shared_prompt);
    c.unmasked_cg = j.value("unmasked_cg", c.unmasked_cg);
    c.freeze_cg = j.value("freeze_cg", c.freeze_cg);
    c.freeze_identifiers = j.value("freeze_identifiers", c.freeze_identifiers);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.log_every = j.value("log_every", c.log_every);
    if (j.contains("denoiser")) {
        const json& d = j.at("denoiser");
        c.denoiser.image_size = d.value("image_size", c.denoiser.image_size);
        c.denoiser.codec_factor = d.value("codec_factor", c.denoiser.codec_factor);
        c.denoiser.base_channels = d.value("base_channels", c.denoiser.base_channels);
        if (d.contains("channel_mults")) c.denoiser.channel_mults = d.at("channel_mults").get<std::vector<int>>();
        if (d.contains("attention_resolutions"))
            c.denoiser.attention_resolutions = d.at("attention_resolutions").get<std::vector<int>>();
        c.denoiser.prompt_dim = d.value("prompt_dim", c.denoiser.prompt_dim);
        c.denoiser.num_heads = d.value("num_heads", c.denoiser.num_heads);
        c.denoiser.gn_groups = d.value("gn_groups", c.denoiser.gn_groups);
    }
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        c.schedule.train_steps = s.value("train_steps", c.schedule.train_steps);
        c.schedule.beta_start = s.value("beta_start", c.schedule.beta_start);
        c.schedule.beta_end = s.value("beta_end", c.schedule.beta_end);
    }
    c.init_checkpoint = j.value("init_checkpoint", c.init_checkpoint);
    c.resume_checkpoint = j.value("resume_checkpoint", c.resume_checkpoint);
    c.run_name = j.value("run_name", c.run_name);
    return c;
}

Trainer::Trainer(TrainConfig cfg, const DatasetManifest& manifest)
    : cfg_(std::move(cfg)), manifest_(manifest), root_(cfg_.seed) {
    require(cfg_.steps > 0, ErrorKind::config, "steps must be > 0");
    require(cfg_.batch_size > 0, ErrorKind::config, "batch_size must be > 0");
    cfg_.perturb.validate();
    cfg_.denoiser.image_size = manifest.image_size;

    if (cfg_.stage != TrainStage::backbone && cfg_.init_checkpoint.empty() &&
        cfg_.resume_checkpoint.empty() && !cfg_.joint_backbone)
        fail(ErrorKind::config,
             "stage '" + stage_name(cfg_.stage) +
                 "' requires an earlier-stage checkpoint (--init) or the joint-from-scratch flag");

    build_model();
    if (!cfg_.resume_checkpoint.empty())
        resume_from(cfg_.resume_checkpoint);
    else if (!cfg_.init_checkpoint.empty())
        load_init_params(cfg_.init_checkpoint);
    apply_freezes();

    // Cache training records and their static latents.
    const int f = cfg_.denoiser.codec_factor;
    for (const auto& id : manifest_.split("train")) {
        CachedRecord cr;
        cr.rec = load_record(manifest_, id);
        require(cr.rec.image.h == manifest_.image_size, ErrorKind::shape,
                "record size differs from manifest image_size: " + id);
        cr.z0 = encode_latent(cr.rec.image, f);
        cr.cg_hint = encode_latent(apply_mask(cr.rec.image, cr.rec.mask, 1), f);
        records_.push_back(std::move(cr));
    }
    require(!records_.empty(), ErrorKind::config, "manifest train split is empty");

    if (!cfg_.out_dir.empty()) {
        fs::create_directories(cfg_.out_dir);
        std::ofstream cfg_echo(fs::path(cfg_.out_dir) / (cfg_.run_name + "_config.json"));
        cfg_echo << cfg_.to_json().dump(2) << "\n";
        log_file_ = std::make_unique<std::ofstream>(fs::path(cfg_.out_dir) / (cfg_.run_name + "_log.jsonl"),
                                                    std::ios::app);
    }
}

void Trainer::build_model() {
    ModelConfig mc;
    mc.denoiser = cfg_.denoiser;
    mc.schedule = cfg_.schedule;
    mc.categories = manifest_.category_names();
    mc.has_cg = cfg_.stage != TrainStage::backbone;
    mc.has_pg = cfg_.stage == TrainStage::cg_pg;
    mc.cg_masked_attention = !cfg_.unmasked_cg;
    mc.shared_prompt = cfg_.shared_prompt;
    uint64_t pseed = cfg_.param_seed ? cfg_.param_seed : Rng(cfg_.seed).fork("params").raw_state();
    model_ = std::make_unique<Model<float>>(mc, pseed);
}

void Trainer::load_init_params(const std::string& path) {
    Checkpoint ck = read_checkpoint(path);
    ModelConfig init_cfg = model_config_from_json(ck.header.at("model"));
    require(init_cfg.categories == model_->config().categories, ErrorKind::config,
            "init checkpoint categories do not match the manifest");
    // Warm start whatever matches by name and shape; branch/prompt tensors
    // absent from the earlier stage (or sized for a different prompt mode)
    // keep their fresh initialization.
    int loaded = 0;
    for (Param<float>* p : model_->params().all()) {
        auto it = ck.tensors.find("param/" + p->name);
        if (it == ck.tensors.end() || it->second.shape != p->value.shape) continue;
        p->value = it->second;
        ++loaded;
    }
    require(loaded > 0, ErrorKind::config, "init checkpoint shares no parameters with this model");
}

void Trainer::resume_from(const std::string& path) {
    Checkpoint ck = read_checkpoint(path);
    require(ck.header.value("kind", "") == "train", ErrorKind::config,
            "resume requires a train checkpoint: " + path);
    const json& tr = ck.header.at("train");
    require(stage_from_name(tr.at("stage").get<std::string>()) == cfg_.stage, ErrorKind::config,
            "resume stage does not match config stage");
    for (Param<float>* p : model_->params().all()) {
        const TensorF& t = ck.tensor("param/" + p->name);
        require(t.shape == p->value.shape, ErrorKind::parse, "resume shape mismatch for " + p->name);
        p->value = t;
    }
    step_ = tr.at("step").get<int>();
    adam_t_ = tr.at("adam_t").get<int>();
    for (const auto& [name, t] : ck.tensors) {
        if (name.rfind("opt.m/", 0) == 0) adam_m_[name.substr(6)] = t;
        if (name.rfind("opt.v/", 0) == 0) adam_v_[name.substr(6)] = t;
    }
}

void Trainer::apply_freezes() {
    bool backbone_trainable = cfg_.stage == TrainStage::backbone || cfg_.joint_backbone;
    for (Param<float>* p : model_->params().all()) {
        bool t = false;
        if (p->name.rfind("backbone.", 0) == 0) t = backbone_trainable;
        if (p->name.rfind("cg.", 0) == 0) t = cfg_.stage != TrainStage::backbone && !cfg_.freeze_cg;
        if (p->name.rfind("pg.", 0) == 0) t = cfg_.stage == TrainStage::cg_pg;
        if (p->name.rfind("prompts.", 0) == 0)
            t = cfg_.stage != TrainStage::backbone && !cfg_.freeze_identifiers;
        p->trainable = t;
    }
    trainable_.clear();
    for (Param<float>* p : model_->params().all())
        if (p->trainable) trainable_.push_back(p);
    require(!trainable_.empty(), ErrorKind::config, "no trainable parameters in this stage configuration");
    for (Param<float>* p : trainable_) {
        if (!adam_m_.count(p->name)) adam_m_[p->name] = TensorF(p->value.shape);
        if (!adam_v_.count(p->name)) adam_v_[p->name] = TensorF(p->value.shape);
    }
}

std::vector<int> Trainer::batch_indices(int step) {
    int n = static_cast<int>(records_.size());
    std::vector<int> out;
    int64_t pos = int64_t(step) * cfg_.batch_size;
    for (int i = 0; i < cfg_.batch_size; ++i, ++pos) {
        int epoch = static_cast<int>(pos / n);
        int off = static_cast<int>(pos % n);
        while (epoch >= static_cast<int>(epoch_perms_.size())) {
            std::vector<int> perm(records_.size());
            for (size_t k = 0; k < perm.size(); ++k) perm[k] = static_cast<int>(k);
            Rng r = root_.fork("epoch:" + std::to_string(epoch_perms_.size()));
            shuffle(perm, r);
            epoch_perms_.push_back(std::move(perm));
        }
        out.push_back(epoch_perms_[size_t(epoch)][size_t(off)]);
    }
    return out;
}

float Trainer::step() {
    const int b = cfg_.batch_size;
    const int hs = model_->latent_size();
    const int cz = model_->latent_channels();
    const int T = model_->schedule().T;
    const int f = cfg_.denoiser.codec_factor;

    std::vector<int> batch = batch_indices(step_);
    Rng srng = root_.fork("step:" + std::to_string(step_));

    std::vector<int> ts(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) ts[size_t(i)] = static_cast<int>(srng.uniform_index(static_cast<uint64_t>(T)));

    TensorF eps(Shape{b, hs, hs, cz});
    for (auto& x : eps.v) x = static_cast<float>(srng.normal());

    TensorF z_t(Shape{b, hs, hs, cz});
    TensorF cg_hint(Shape{b, hs, hs, cz});
    std::vector<int> cats(static_cast<size_t>(b));
    std::vector<const Mask*> masks(static_cast<size_t>(b));
    int64_t stride = int64_t(hs) * hs * cz;
    for (int i = 0; i < b; ++i) {
        const CachedRecord& cr = records_[size_t(batch[size_t(i)])];
        cats[size_t(i)] = cr.rec.category_id;
        masks[size_t(i)] = &cr.rec.mask;
        float a = model_->schedule().sqrt_ac[size_t(ts[size_t(i)])];
        float s1 = model_->schedule().sqrt_one_minus_ac[size_t(ts[size_t(i)])];
        for (int64_t j = 0; j < stride; ++j)
            z_t[int64_t(i) * stride + j] = a * cr.z0[j] + s1 * eps[int64_t(i) * stride + j];
        std::copy_n(cr.cg_hint.data(), stride, cg_hint.data() + int64_t(i) * stride);
    }

    // Personality branch input: perturbed backgrounds, partners drawn within
    // the batch (never the same record).
    TensorF pg_hint;
    if (cfg_.stage == TrainStage::cg_pg) {
        pg_hint = TensorF(Shape{b, hs, hs, cz});
        for (int i = 0; i < b; ++i) {
            const CachedRecord& cr = records_[size_t(batch[size_t(i)])];
            int j = (i + 1 + static_cast<int>(srng.uniform_index(static_cast<uint64_t>(b > 1 ? b - 1 : 1)))) % b;
            if (b == 1) j = i;
            int guard = 0;
            while (records_[size_t(batch[size_t(j)])].rec.record_id == cr.rec.record_id && guard++ < b)
                j = (j + 1) % b;
            PerturbResult pr =
                perturb_background(cr.rec, records_[size_t(batch[size_t(j)])].rec.image, cfg_.perturb, srng);
            TensorF z = encode_latent(pr.pg_input, f);
            std::copy_n(z.data(), stride, pg_hint.data() + int64_t(i) * stride);
        }
    }

    GraphF g;
    auto pv = model_->build_prompts(g, cats);
    std::vector<GraphF::Var> cg_res, pg_res;
    std::vector<GraphF::Var>* cg_ptr = nullptr;
    std::vector<GraphF::Var>* pg_ptr = nullptr;
    if (cfg_.stage != TrainStage::backbone) {
        AttnMasks<float> am = model_->build_attn_masks(masks);
        cg_res = model_->build_cg(g, g.input(cg_hint), g.input(z_t), ts, pv, &am);
        cg_ptr = &cg_res;
    }
    if (cfg_.stage == TrainStage::cg_pg) {
        pg_res = model_->build_pg(g, g.input(pg_hint), g.input(z_t), ts);
        pg_ptr = &pg_res;
    }
    auto out = model_->build_predict(g, g.input(z_t), ts, pv, cg_ptr, pg_ptr);
    auto loss = g.mse(out, g.input(eps));
    float loss_val = g.val(loss)[0];

    if (!std::isfinite(loss_val)) {
        write_diagnostic("non-finite loss at step " + std::to_string(step_), batch);
        fail(ErrorKind::runtime, "training aborted: non-finite loss at step " + std::to_string(step_));
    }

    model_->params().zero_grads();
    g.backward(loss);
    adam_update();

    loss_log_.emplace_back(step_, loss_val);
    if (log_file_ && (step_ % std::max(1, cfg_.log_every) == 0 || step_ + 1 == cfg_.steps)) {
        json line = {{"step", step_}, {"loss", loss_val}, {"lr", cfg_.lr}, {"stage", stage_name(cfg_.stage)}};
        (*log_file_) << line.dump() << "\n";
        log_file_->flush();
    }
    ++step_;
    return loss_val;
}

void Trainer::adam_update() {
    const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
    ++adam_t_;
    float c1 = 1.f - std::pow(b1, static_cast<float>(adam_t_));
    float c2 = 1.f - std::pow(b2, static_cast<float>(adam_t_));
    for (Param<float>* p : trainable_) {
        TensorF& m = adam_m_[p->name];
        TensorF& v = adam_v_[p->name];
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            float gr = p->grad[i];
            m[i] = b1 * m[i] + (1.f - b1) * gr;
            v[i] = b2 * v[i] + (1.f - b2) * gr * gr;
            float mh = m[i] / c1;
            float vh = v[i] / c2;
            p->value[i] -= cfg_.lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

void Trainer::save_checkpoint(const std::string& path) const {
    json extra;
    extra["train"] = {{"stage", stage_name(cfg_.stage)},
                      {"step", step_},
                      {"adam_t", adam_t_},
                      {"config_echo", cfg_.to_json()}};
    std::vector<std::pair<std::string, const TensorF*>> opt;
    for (const auto& [name, t] : adam_m_) opt.emplace_back("opt.m/" + name, &t);
    for (const auto& [name, t] : adam_v_) opt.emplace_back("opt.v/" + name, &t);

    json header;
    header["model"] = model_config_to_json(model_->config());
    char seed_hex[32];
    std::snprintf(seed_hex, sizeof seed_hex, "%016llx",
                  static_cast<unsigned long long>(model_->param_seed()));
    header["param_seed"] = seed_hex;
    header["train"] = extra["train"];

    TensorF betas(Shape{model_->schedule().T});
    betas.v = model_->schedule().betas;
    std::vector<std::pair<std::string, const TensorF*>> tensors;
    tensors.emplace_back("schedule.betas", &betas);
    for (Param<float>* p : model_->params().all()) tensors.emplace_back("param/" + p->name, &p->value);
    for (auto& e : opt) tensors.push_back(e);
    write_checkpoint(path, "train", std::move(header), tensors);
}

void Trainer::write_diagnostic(const std::string& reason, const std::vector<int>& batch) {
    if (cfg_.out_dir.empty()) return;
    json diag;
    diag["reason"] = reason;
    diag["step"] = step_;
    diag["records"] = json::array();
    for (int idx : batch) diag["records"].push_back(records_[size_t(idx)].rec.record_id);
    std::ofstream out(fs::path(cfg_.out_dir) / (cfg_.run_name + "_diagnostic.json"));
    out << diag.dump(2) << "\n";
    try {
        save_checkpoint((fs::path(cfg_.out_dir) / (cfg_.run_name + "_diagnostic.ckpt")).string());
    } catch (...) {
    }
}

TrainResult Trainer::run() {
    TrainResult res;
    while (step_ < cfg_.steps) {
        step();
        if (cfg_.checkpoint_every > 0 && !cfg_.out_dir.empty() && step_ % cfg_.checkpoint_every == 0 &&
            step_ < cfg_.steps) {
            save_checkpoint(
                (fs::path(cfg_.out_dir) / (cfg_.run_name + "_step" + std::to_string(step_) + ".ckpt")).string());
        }
    }
    if (!cfg_.out_dir.empty()) {
        res.checkpoint_path = (fs::path(cfg_.out_dir) / (cfg_.run_name + "_final.ckpt")).string();
        save_checkpoint(res.checkpoint_path);
    }
    res.steps_run = step_;
    res.loss_log = loss_log_;
    return res;
}

TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest) {
    Trainer t(cfg, manifest);
    return t.run();
}

}  // namespace bgg
