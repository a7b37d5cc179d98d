#include "bgg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace bgg {

using nlohmann::json;

void write_checkpoint(const std::string& path, const std::string& kind, json header_fields,
                      const std::vector<std::pair<std::string, const TensorF*>>& tensors) {
    json header = std::move(header_fields);
    header["version"] = kCheckpointVersion;
    header["kind"] = kind;
    json dir = json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        json e;
        e["name"] = name;
        e["dtype"] = "f32";
        e["shape"] = t->shape;
        e["offset"] = offset;
        dir.push_back(e);
        offset += static_cast<uint64_t>(t->numel()) * 4;
    }
    header["tensors"] = dir;
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, 8);
    uint32_t hlen = static_cast<uint32_t>(hs.size());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->numel() * 4));
    require(out.good(), ErrorKind::io, "write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    require(in.good() && std::memcmp(magic, kCheckpointMagic, 8) == 0, ErrorKind::parse,
            "not a checkpoint file (bad magic): " + path);
    uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 4);
    require(in.good(), ErrorKind::parse, "truncated checkpoint header: " + path);
    std::string hs(hlen, '\0');
    in.read(hs.data(), hlen);
    require(in.good(), ErrorKind::parse, "truncated checkpoint header: " + path);

    Checkpoint ck;
    try {
        ck.header = json::parse(hs);
    } catch (const std::exception& e) {
        fail(ErrorKind::parse, "checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    require(ck.header.value("version", -1) == kCheckpointVersion, ErrorKind::parse,
            "unsupported checkpoint version in " + path);

    for (const auto& e : ck.header.at("tensors")) {
        std::string name = e.at("name").get<std::string>();
        require(e.at("dtype").get<std::string>() == "f32", ErrorKind::parse,
                "unsupported tensor dtype for " + name);
        Shape shape = e.at("shape").get<Shape>();
        TensorF t(shape);
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
        require(in.good(), ErrorKind::parse, "truncated checkpoint payload at tensor " + name);
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    return ck;
}

json model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["denoiser"] = {{"image_size", cfg.denoiser.image_size},
                     {"codec_factor", cfg.denoiser.codec_factor},
                     {"base_channels", cfg.denoiser.base_channels},
                     {"channel_mults", cfg.denoiser.channel_mults},
                     {"attention_resolutions", cfg.denoiser.attention_resolutions},
                     {"prompt_dim", cfg.denoiser.prompt_dim},
                     {"num_heads", cfg.denoiser.num_heads},
                     {"gn_groups", cfg.denoiser.gn_groups}};
    j["schedule"] = {{"train_steps", cfg.schedule.train_steps},
                     {"beta_start", cfg.schedule.beta_start},
                     {"beta_end", cfg.schedule.beta_end}};
    j["categories"] = cfg.categories;
    j["has_cg"] = cfg.has_cg;
    j["has_pg"] = cfg.has_pg;
    j["cg_masked_attention"] = cfg.cg_masked_attention;
    j["shared_prompt"] = cfg.shared_prompt;
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    try {
        const json& d = j.at("denoiser");
        cfg.denoiser.image_size = d.at("image_size").get<int>();
        cfg.denoiser.codec_factor = d.at("codec_factor").get<int>();
        cfg.denoiser.base_channels = d.at("base_channels").get<int>();
        cfg.denoiser.channel_mults = d.at("channel_mults").get<std::vector<int>>();
        cfg.denoiser.attention_resolutions = d.at("attention_resolutions").get<std::vector<int>>();
        cfg.denoiser.prompt_dim = d.at("prompt_dim").get<int>();
        cfg.denoiser.num_heads = d.at("num_heads").get<int>();
        cfg.denoiser.gn_groups = d.at("gn_groups").get<int>();
        const json& s = j.at("schedule");
        cfg.schedule.train_steps = s.at("train_steps").get<int>();
        cfg.schedule.beta_start = s.at("beta_start").get<double>();
        cfg.schedule.beta_end = s.at("beta_end").get<double>();
        cfg.categories = j.at("categories").get<std::vector<std::string>>();
        cfg.has_cg = j.at("has_cg").get<bool>();
        cfg.has_pg = j.at("has_pg").get<bool>();
        cfg.cg_masked_attention = j.at("cg_masked_attention").get<bool>();
        cfg.shared_prompt = j.at("shared_prompt").get<bool>();
    } catch (const std::exception& e) {
        fail(ErrorKind::parse, std::string("malformed model config in checkpoint: ") + e.what());
    }
    return cfg;
}

void save_model(const std::string& path, Model<float>& model, const std::string& kind, const json& extra,
                const std::vector<std::pair<std::string, const TensorF*>>& extra_tensors) {
    json header;
    header["model"] = model_config_to_json(model.config());
    char seed_hex[32];
    std::snprintf(seed_hex, sizeof seed_hex, "%016llx",
                  static_cast<unsigned long long>(model.param_seed()));
    header["param_seed"] = seed_hex;
    if (!extra.is_null() && !extra.empty()) header["extra"] = extra;

    TensorF betas(Shape{model.schedule().T});
    betas.v = model.schedule().betas;

    std::vector<std::pair<std::string, const TensorF*>> tensors;
    tensors.emplace_back("schedule.betas", &betas);
    for (Param<float>* p : model.params().all()) tensors.emplace_back("param/" + p->name, &p->value);
    for (const auto& [n, t] : extra_tensors) tensors.emplace_back(n, t);
    write_checkpoint(path, kind, std::move(header), tensors);
}

std::unique_ptr<Model<float>> load_model(const Checkpoint& ck) {
    ModelConfig cfg = model_config_from_json(ck.header.at("model"));
    uint64_t seed = 0;
    if (ck.header.contains("param_seed"))
        seed = std::stoull(ck.header.at("param_seed").get<std::string>(), nullptr, 16);
    auto model = std::make_unique<Model<float>>(cfg, seed);
    for (Param<float>* p : model->params().all()) {
        const TensorF& t = ck.tensor("param/" + p->name);
        require(t.shape == p->value.shape, ErrorKind::parse,
                "checkpoint tensor shape mismatch for " + p->name);
        p->value = t;
    }
    // Schedule constants: betas round-trip exactly (stored as f32).
    const TensorF& betas = ck.tensor("schedule.betas");
    require(betas.numel() == model->schedule().T, ErrorKind::parse, "schedule length mismatch in checkpoint");
    for (int t = 0; t < model->schedule().T; ++t)
        require(betas[t] == model->schedule().betas[size_t(t)], ErrorKind::parse,
                "schedule constants in checkpoint do not match config");
    return model;
}

std::unique_ptr<Model<float>> load_model_file(const std::string& path, Checkpoint* out) {
    Checkpoint ck = read_checkpoint(path);
    std::string kind = ck.header.value("kind", "");
    require(kind == "model" || kind == "train", ErrorKind::parse,
            "checkpoint kind '" + kind + "' does not hold a model: " + path);
    auto model = load_model(ck);
    if (out) *out = std::move(ck);
    return model;
}

uint64_t param_checksum(const Param<float>& p) {
    uint64_t h = 0xcbf29ce484222325ULL;
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
    for (size_t i = 0; i < p.value.v.size() * 4; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t registry_checksum(ParamRegistry<float>& reg, const std::string& prefix) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (Param<float>* p : reg.all()) {
        if (p->name.rfind(prefix, 0) != 0) continue;
        uint64_t ph = param_checksum(*p);
        for (int i = 0; i < 8; ++i) {
            h ^= (ph >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace bgg
