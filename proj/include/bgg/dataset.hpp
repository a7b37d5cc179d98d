#pragma once
// Corpus schema and synthesis. Records are (image, binary product mask,
// category); the manifest is a versioned JSON file with named splits and the
// per-record style parameters the metric oracles check against. Synthesis is
// fully deterministic in (config, seed), with per-record derived streams.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bgg/image.hpp"
#include "bgg/rng.hpp"

namespace bgg {

struct AdRecord {
    Image image;
    Mask mask;
    int category_id = 0;
    std::string record_id;
};

struct RecordInfo {
    std::string record_id;
    std::string image_path;  // relative to manifest directory
    std::string mask_path;
    int category_id = 0;
    std::string style_family;  // category + brand sub-style
    float hue = 0.f;           // style parameter recorded for oracle checks
};

struct CategoryInfo {
    int id = 0;
    std::string name;
};

struct DatasetManifest {
    int version = 1;
    std::string root_dir;  // directory containing the manifest file
    int image_size = 0;
    std::vector<CategoryInfo> categories;
    std::vector<RecordInfo> records;
    std::map<std::string, std::vector<std::string>> splits;  // train / eval_bg1k / eval_pairs

    const RecordInfo& find_record(const std::string& record_id) const;
    const std::vector<std::string>& split(const std::string& name) const;
    int num_categories() const { return static_cast<int>(categories.size()); }
    std::vector<std::string> category_names() const;
};

struct SynthConfig {
    int num_categories = 3;
    int records_per_category = 200;
    int image_size = 32;
    uint64_t seed = 0;
    int brands_per_category = 2;
    double train_fraction = 0.7;
    double bg1k_fraction = 0.15;  // remainder goes to eval_pairs
};

// Writes images/, masks/ and manifest.json under out_dir; returns the loaded
// manifest. Byte-identical across runs with equal (config, seed).
DatasetManifest synthesize_corpus(const SynthConfig& config, const std::string& out_dir);

DatasetManifest load_manifest(const std::string& manifest_path);
void write_manifest(const DatasetManifest& m, const std::string& manifest_path);

AdRecord load_record(const DatasetManifest& m, const RecordInfo& info);
AdRecord load_record(const DatasetManifest& m, const std::string& record_id);

struct ValidationReport {
    std::string record_id;
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Content checks never throw; they are reported as violations. raw_mask is the
// grayscale mask image before binarization so non-binary data is detectable.
ValidationReport validate_record(const Image& image, const Image& raw_mask, int category_id,
                                 int num_categories, const std::string& record_id = "");
ValidationReport validate_record(const AdRecord& rec, int num_categories);
// Reads the record's files from disk (I/O failures throw).
ValidationReport validate_record_files(const DatasetManifest& m, const std::string& record_id);

struct PairRecord {
    std::string product_record_id;
    std::string reference_record_id;
};

struct PairSet {
    std::vector<PairRecord> pairs;
    std::vector<std::string> warnings;  // skipped singleton families
};

// Disjoint same-style-family pairs over the eval_pairs split; floor(n/2) pairs
// per family, deterministic in seed.
PairSet build_pairs(const DatasetManifest& m, uint64_t seed);

}  // namespace bgg
