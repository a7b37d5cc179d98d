#include "bgg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>

#include "bgg/png_io.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace bgg {

namespace {

std::string two_digits(int v) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d", v);
    return buf;
}

std::string four_digits(int v) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%04d", v);
    return buf;
}

struct FamilyStyle {
    std::string family;
    int category_id;
    int brand;
    float hue_center;
    std::string texture;
    std::string shape;
};

const char* kTextures[] = {"gradient", "stripes", "blobs"};
const char* kShapes[] = {"ellipse", "rectangle", "diamond"};

void paint_gradient(Image& img, float hue, float sat, float v_lo, float v_hi, Rng& rng) {
    double ang = rng.uniform(0.0, 6.283185307179586);
    float dx = static_cast<float>(std::cos(ang)), dy = static_cast<float>(std::sin(ang));
    float lo = -0.5f * (std::abs(dx) * img.w + std::abs(dy) * img.h);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            float proj = (x - img.w / 2.f) * dx + (y - img.h / 2.f) * dy;
            float t = std::clamp((proj - lo) / (-2.f * lo), 0.f, 1.f);
            float r, g, b;
            hsv_to_rgb(hue, sat, v_lo + (v_hi - v_lo) * t, r, g, b);
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
}

void paint_stripes(Image& img, float hue, float sat, float v_lo, float v_hi, Rng& rng) {
    double ang = rng.uniform(0.0, 3.14159265358979);
    float period = static_cast<float>(rng.uniform(0.35, 0.7)) * img.w;
    float phase = static_cast<float>(rng.uniform(0.0, period));
    float dx = static_cast<float>(std::cos(ang)), dy = static_cast<float>(std::sin(ang));
    float r1, g1, b1, r2, g2, b2;
    hsv_to_rgb(hue, sat, v_lo, r1, g1, b1);
    hsv_to_rgb(hue, sat, v_hi, r2, g2, b2);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            float proj = x * dx + y * dy + phase + 4.f * (img.w + img.h);
            bool a = static_cast<int>(proj / (period * 0.5f)) % 2 == 0;
            img.at(y, x, 0) = a ? r1 : r2;
            img.at(y, x, 1) = a ? g1 : g2;
            img.at(y, x, 2) = a ? b1 : b2;
        }
}

void paint_blobs(Image& img, float hue, float sat, float v_lo, float v_hi, Rng& rng) {
    float r0, g0, b0;
    hsv_to_rgb(hue, sat, (v_lo + v_hi) * 0.5f, r0, g0, b0);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            img.at(y, x, 0) = r0;
            img.at(y, x, 1) = g0;
            img.at(y, x, 2) = b0;
        }
    int count = 2 + static_cast<int>(rng.uniform_index(2));
    for (int i = 0; i < count; ++i) {
        float cx = static_cast<float>(rng.uniform(0.0, img.w));
        float cy = static_cast<float>(rng.uniform(0.0, img.h));
        float rad = static_cast<float>(rng.uniform(img.w * 0.25, img.w * 0.45));
        float vv = static_cast<float>(rng.uniform(v_lo, v_hi));
        float rr, gg, bb;
        hsv_to_rgb(hue, sat, vv, rr, gg, bb);
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                float d2 = (x + 0.5f - cx) * (x + 0.5f - cx) + (y + 0.5f - cy) * (y + 0.5f - cy);
                if (d2 <= rad * rad) {
                    img.at(y, x, 0) = rr;
                    img.at(y, x, 1) = gg;
                    img.at(y, x, 2) = bb;
                }
            }
    }
}

Mask make_product_mask(const std::string& shape, int size, Rng& rng) {
    double frac = rng.uniform(0.05, 0.40);
    double area = frac * size * size;
    double rho = rng.uniform(0.6, 1.6);
    double cx = size / 2.0 + rng.uniform(-0.1, 0.1) * size;
    double cy = size / 2.0 + rng.uniform(-0.1, 0.1) * size;
    Mask m(size, size);
    if (shape == std::string("ellipse")) {
        double b = std::sqrt(area / (3.14159265358979 * rho));
        double a = rho * b;
        cx = std::clamp(cx, a + 0.5, size - a - 0.5);
        cy = std::clamp(cy, b + 0.5, size - b - 0.5);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double u = (x + 0.5 - cx) / a, v = (y + 0.5 - cy) / b;
                if (u * u + v * v <= 1.0) m.at(y, x) = 1;
            }
    } else if (shape == std::string("rectangle")) {
        double w = std::sqrt(area * rho), h = area / w;
        cx = std::clamp(cx, w / 2 + 0.5, size - w / 2 - 0.5);
        cy = std::clamp(cy, h / 2 + 0.5, size - h / 2 - 0.5);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if (std::abs(x + 0.5 - cx) <= w / 2 && std::abs(y + 0.5 - cy) <= h / 2) m.at(y, x) = 1;
    } else {  // diamond
        double b = std::sqrt(area / (2.0 * rho));
        double a = rho * b;
        cx = std::clamp(cx, a + 0.5, size - a - 0.5);
        cy = std::clamp(cy, b + 0.5, size - b - 0.5);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                if (std::abs(x + 0.5 - cx) / a + std::abs(y + 0.5 - cy) / b <= 1.0) m.at(y, x) = 1;
    }
    if (m.count_ones() == 0) m.at(size / 2, size / 2) = 1;
    return m;
}

}  // namespace

const RecordInfo& DatasetManifest::find_record(const std::string& record_id) const {
    for (const auto& r : records)
        if (r.record_id == record_id) return r;
    fail(ErrorKind::lookup, "unknown record_id: " + record_id);
}

const std::vector<std::string>& DatasetManifest::split(const std::string& name) const {
    auto it = splits.find(name);
    require(it != splits.end(), ErrorKind::lookup, "manifest has no split named '" + name + "'");
    return it->second;
}

std::vector<std::string> DatasetManifest::category_names() const {
    std::vector<std::string> out;
    for (const auto& c : categories) out.push_back(c.name);
    return out;
}

DatasetManifest synthesize_corpus(const SynthConfig& config, const std::string& out_dir) {
    require(config.num_categories >= 2, ErrorKind::config, "synthesize_corpus: need >= 2 categories");
    require(config.records_per_category >= 4, ErrorKind::config,
            "synthesize_corpus: need >= 4 records per category");
    require(config.image_size >= 16 && (config.image_size & (config.image_size - 1)) == 0, ErrorKind::config,
            "synthesize_corpus: image_size must be a power of two >= 16");
    require(config.brands_per_category >= 1, ErrorKind::config, "synthesize_corpus: brands must be >= 1");
    require(config.train_fraction > 0 && config.bg1k_fraction >= 0 &&
                config.train_fraction + config.bg1k_fraction < 1.0,
            ErrorKind::config, "synthesize_corpus: bad split fractions");

    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");

    Rng root(config.seed);
    int k = config.num_categories;
    DatasetManifest m;
    m.version = 1;
    m.root_dir = out_dir;
    m.image_size = config.image_size;

    std::vector<FamilyStyle> families;
    for (int c = 0; c < k; ++c) {
        m.categories.push_back({c, "cat" + two_digits(c)});
        for (int b = 0; b < config.brands_per_category; ++b) {
            FamilyStyle fsy;
            fsy.family = "c" + two_digits(c) + "_b" + std::to_string(b);
            fsy.category_id = c;
            fsy.brand = b;
            float spread = config.brands_per_category > 1
                               ? (static_cast<float>(b) / (config.brands_per_category - 1) - 0.5f)
                               : 0.f;
            fsy.hue_center = (c + 0.5f) / k + spread * 0.5f / k;
            fsy.texture = kTextures[c % 3];
            fsy.shape = kShapes[c % 3];
            families.push_back(fsy);
        }
    }

    std::vector<std::string> train_ids, bg1k_ids, pair_ids;
    for (int c = 0; c < k; ++c) {
        int n = config.records_per_category;
        int n_train = static_cast<int>(n * config.train_fraction);
        int n_bg1k = static_cast<int>(n * config.bg1k_fraction);
        for (int i = 0; i < n; ++i) {
            int brand = i % config.brands_per_category;
            const FamilyStyle& fsy = families[size_t(c) * config.brands_per_category + size_t(brand)];
            std::string rid = "c" + two_digits(c) + "_b" + std::to_string(brand) + "_r" + four_digits(i);
            Rng rec = root.fork("record:" + rid);

            float hue = fsy.hue_center + static_cast<float>(rec.uniform(-0.08, 0.08)) / k;
            float sat = static_cast<float>(rec.uniform(0.7, 0.95));
            float v_lo = static_cast<float>(rec.uniform(0.4, 0.55));
            float v_hi = static_cast<float>(rec.uniform(0.75, 0.95));

            Image img(config.image_size, config.image_size, 3);
            if (fsy.texture == std::string("gradient"))
                paint_gradient(img, hue, sat, v_lo, v_hi, rec);
            else if (fsy.texture == std::string("stripes"))
                paint_stripes(img, hue, sat, v_lo, v_hi, rec);
            else
                paint_blobs(img, hue, sat, v_lo, v_hi, rec);

            Mask mask = make_product_mask(fsy.shape, config.image_size, rec);
            float pr, pg, pb;
            hsv_to_rgb(hue + 0.5f, 0.35f, static_cast<float>(rec.uniform(0.3, 0.95)), pr, pg, pb);
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x)
                    if (mask.at(y, x)) {
                        img.at(y, x, 0) = pr;
                        img.at(y, x, 1) = pg;
                        img.at(y, x, 2) = pb;
                    }

            RecordInfo info;
            info.record_id = rid;
            info.image_path = "images/" + rid + ".png";
            info.mask_path = "masks/" + rid + ".png";
            info.category_id = c;
            info.style_family = fsy.family;
            info.hue = hue;
            write_png_rgb8((fs::path(out_dir) / info.image_path).string(), img);
            write_png_mask1((fs::path(out_dir) / info.mask_path).string(), mask);
            m.records.push_back(info);

            if (i < n_train)
                train_ids.push_back(rid);
            else if (i < n_train + n_bg1k)
                bg1k_ids.push_back(rid);
            else
                pair_ids.push_back(rid);
        }
    }
    m.splits["train"] = train_ids;
    m.splits["eval_bg1k"] = bg1k_ids;
    m.splits["eval_pairs"] = pair_ids;

    std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
    write_manifest(m, manifest_path);
    return load_manifest(manifest_path);
}

void write_manifest(const DatasetManifest& m, const std::string& manifest_path) {
    ordered_json j;
    j["version"] = m.version;
    j["image_size"] = m.image_size;
    j["categories"] = ordered_json::array();
    for (const auto& c : m.categories) j["categories"].push_back({{"id", c.id}, {"name", c.name}});
    j["records"] = ordered_json::array();
    for (const auto& r : m.records)
        j["records"].push_back({{"record_id", r.record_id},
                                {"image_path", r.image_path},
                                {"mask_path", r.mask_path},
                                {"category_id", r.category_id},
                                {"style_family", r.style_family},
                                {"hue", r.hue}});
    j["splits"] = ordered_json::object();
    for (const auto& [name, ids] : m.splits) j["splits"][name] = ids;

    std::ofstream out(manifest_path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot write manifest: " + manifest_path);
    out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open manifest: " + manifest_path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail(ErrorKind::parse, "manifest is not valid JSON: " + manifest_path + " (" + e.what() + ")");
    }

    DatasetManifest m;
    m.root_dir = fs::path(manifest_path).parent_path().string();
    if (m.root_dir.empty()) m.root_dir = ".";
    try {
        m.version = j.at("version").get<int>();
        require(m.version == 1, ErrorKind::parse, "unsupported manifest version");
        m.image_size = j.at("image_size").get<int>();
        for (const auto& c : j.at("categories"))
            m.categories.push_back({c.at("id").get<int>(), c.at("name").get<std::string>()});
        for (const auto& r : j.at("records")) {
            RecordInfo info;
            info.record_id = r.at("record_id").get<std::string>();
            info.image_path = r.at("image_path").get<std::string>();
            info.mask_path = r.at("mask_path").get<std::string>();
            info.category_id = r.at("category_id").get<int>();
            info.style_family = r.value("style_family", std::string());
            info.hue = r.value("hue", 0.f);
            m.records.push_back(info);
        }
        if (j.contains("splits"))
            for (auto it = j.at("splits").begin(); it != j.at("splits").end(); ++it)
                m.splits[it.key()] = it.value().get<std::vector<std::string>>();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(ErrorKind::parse, std::string("malformed manifest: ") + e.what());
    }

    for (size_t i = 0; i < m.categories.size(); ++i)
        require(m.categories[i].id == static_cast<int>(i), ErrorKind::parse,
                "category ids must be contiguous from 0");
    std::set<std::string> seen;
    for (const auto& r : m.records) {
        require(seen.insert(r.record_id).second, ErrorKind::parse, "duplicate record_id: " + r.record_id);
        require(r.category_id >= 0 && r.category_id < m.num_categories(), ErrorKind::parse,
                "record " + r.record_id + " references unregistered category " + std::to_string(r.category_id));
        for (const std::string& p : {r.image_path, r.mask_path})
            require(fs::exists(fs::path(m.root_dir) / p), ErrorKind::parse,
                    "record " + r.record_id + " references missing file: " + p);
    }
    for (const auto& [name, ids] : m.splits)
        for (const auto& id : ids)
            require(seen.count(id), ErrorKind::parse,
                    "split '" + name + "' references unknown record_id: " + id);
    return m;
}

AdRecord load_record(const DatasetManifest& m, const RecordInfo& info) {
    AdRecord rec;
    rec.record_id = info.record_id;
    rec.category_id = info.category_id;
    rec.image = read_png_rgb8((fs::path(m.root_dir) / info.image_path).string());
    rec.mask = read_png_mask((fs::path(m.root_dir) / info.mask_path).string());
    require(rec.mask.same_shape(rec.image), ErrorKind::shape,
            "record " + info.record_id + ": image/mask dimensions differ");
    return rec;
}

AdRecord load_record(const DatasetManifest& m, const std::string& record_id) {
    return load_record(m, m.find_record(record_id));
}

ValidationReport validate_record(const Image& image, const Image& raw_mask, int category_id,
                                 int num_categories, const std::string& record_id) {
    ValidationReport rep;
    rep.record_id = record_id;
    if (raw_mask.h != image.h || raw_mask.w != image.w)
        rep.violations.push_back("mask dimensions do not match image");
    int64_t ones = 0;
    int64_t pixels = int64_t(raw_mask.h) * raw_mask.w;
    bool binary = true;
    for (int y = 0; y < raw_mask.h; ++y)
        for (int x = 0; x < raw_mask.w; ++x) {
            float v = raw_mask.at(y, x, 0);
            if (v != 0.f && v != 1.f) binary = false;
            ones += (v == 1.f);
        }
    if (!binary) rep.violations.push_back("non-binary mask");
    if (binary && pixels > 0) {
        double frac = static_cast<double>(ones) / static_cast<double>(pixels);
        if (ones == 0 || frac >= 0.8) rep.violations.push_back("degenerate product area");
    }
    if (category_id < 0 || category_id >= num_categories)
        rep.violations.push_back("unregistered category id " + std::to_string(category_id));
    return rep;
}

ValidationReport validate_record(const AdRecord& rec, int num_categories) {
    Image raw(rec.mask.h, rec.mask.w, 1);
    for (size_t i = 0; i < rec.mask.v.size(); ++i) raw.v[i] = static_cast<float>(rec.mask.v[i]);
    return validate_record(rec.image, raw, rec.category_id, num_categories, rec.record_id);
}

ValidationReport validate_record_files(const DatasetManifest& m, const std::string& record_id) {
    const RecordInfo& info = m.find_record(record_id);
    Image img = read_png_rgb8((fs::path(m.root_dir) / info.image_path).string());
    // Read the mask leniently (any grayscale content) so binarity violations
    // are reported rather than thrown.
    Image raw = read_png_rgb8((fs::path(m.root_dir) / info.mask_path).string());
    Image gray(raw.h, raw.w, 1);
    for (int y = 0; y < raw.h; ++y)
        for (int x = 0; x < raw.w; ++x) gray.at(y, x, 0) = raw.at(y, x, 0);
    return validate_record(img, gray, info.category_id, m.num_categories(), record_id);
}

PairSet build_pairs(const DatasetManifest& m, uint64_t seed) {
    PairSet out;
    std::map<std::string, std::vector<std::string>> by_family;
    for (const auto& id : m.split("eval_pairs")) {
        const RecordInfo& info = m.find_record(id);
        std::string fam =
            info.style_family.empty() ? ("cat:" + std::to_string(info.category_id)) : info.style_family;
        by_family[fam].push_back(id);
    }
    Rng root(seed);
    for (auto& [fam, ids] : by_family) {
        if (ids.size() < 2) {
            out.warnings.push_back("style family '" + fam + "' has fewer than 2 records; skipped");
            continue;
        }
        Rng r = root.fork("family:" + fam);
        shuffle(ids, r);
        for (size_t i = 0; i + 1 < ids.size(); i += 2) out.pairs.push_back({ids[i], ids[i + 1]});
    }
    return out;
}

}  // namespace bgg
