#pragma once
// One-command experiment pipelines: corpus synthesis, staged training of the
// needed model variants, generation sweeps and metric reports. Everything is
// deterministic in the profile seed and free of absolute paths/timestamps, so
// a rerun into a fresh directory reproduces the output tree byte for byte.

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "bgg/dataset.hpp"
#include "bgg/eval.hpp"
#include "bgg/train.hpp"

namespace bgg {

struct ExperimentProfile {
    std::string name = "desk";
    SynthConfig corpus;
    DenoiserConfig denoiser;
    ScheduleConfig schedule;
    ExtractorConfig extractor;
    PerturbParams perturb;
    // The category stage trains backbone + CG jointly from scratch (the
    // backbone is not pretrained at desk scale); later stages start from it.
    int cg_steps = 2200;     // cg_only, joint-from-scratch
    int shared_steps = 600;  // shared-prompt ablation branch stage
    int cgpg_steps = 700;    // cg_pg stage on top of the cg checkpoint
    int rowa_steps = 2900;   // unmasked-branch variant (parity with cg+cgpg)
    int batch_size = 16;
    float lr = 4e-4f;
    int sample_steps = 30;
    bool blend_sweeps = true;  // per_step_blend during evaluation sweeps
    int eval_products = 45;    // held-out products for the category sweep
    int max_pairs = 36;        // cap on product/reference pairs per sweep
    std::vector<uint64_t> seeds = {1, 2, 3};

    // Reference desk-scale preset (canonical CI profile at acceptance scale).
    static ExperimentProfile desk(uint64_t base_seed = 0);
    // Small smoke preset used for end-to-end determinism checks.
    static ExperimentProfile ci(uint64_t base_seed = 0);

    nlohmann::json to_json() const;
};

struct CategorySeedResult {
    uint64_t seed = 0;
    double gen_accuracy = 0;    // held-out extractor vs requested category
    double ratio_cg = 0;        // cluster compactness of CG generations
    double ratio_shared = 0;    // same for the shared-prompt ablation
    float loss_first = 0;       // smoothed first/last training loss (cg stage)
    float loss_last = 0;
};

struct CategoryScaleReport {
    std::vector<CategorySeedResult> seeds;
    nlohmann::json to_json() const;
};

struct AblationRow {
    std::string name;  // "a".."d"
    bool cg_masked = true;
    bool use_pg = true;
    bool reference_init = true;
    double sim_mean = 0;
    double fid = 0;
};

struct CopyPasteSection {
    double identical_with = 0;  // trained WITH full perturbation
    double identical_without = 0;
    double sim_with = 0;
    double sim_without = 0;
};

struct AblationSeedResult {
    uint64_t seed = 0;
    std::vector<AblationRow> rows;  // a, b, c, d
};

struct AblationReport {
    std::vector<AblationSeedResult> seeds;
    std::optional<CopyPasteSection> copy_paste;
    nlohmann::json to_json() const;
};

struct PersonalizedSeedResult {
    uint64_t seed = 0;
    double sim_full = 0;  // PG + reference init (row d)
    double sim_no_pg = 0;  // row b
    double fid_full = 0;
    double fid_no_pg = 0;
};

struct PersonalizedReport {
    std::vector<PersonalizedSeedResult> seeds;
    nlohmann::json to_json() const;
};

CategoryScaleReport run_category_scale(const std::string& out_dir, const ExperimentProfile& profile);
AblationReport run_ablation(const std::string& out_dir, const ExperimentProfile& profile,
                            bool with_copy_paste = true);
PersonalizedReport run_personalized(const std::string& out_dir, const ExperimentProfile& profile);

// Metric-only ablation over existing checkpoints (rows b/c/d share the full
// checkpoint; row a uses the unmasked-branch variant). Missing variants are
// recorded in `missing` and the report stays partial.
AblationSeedResult evaluate_ablation_rows(const DatasetManifest& manifest, const FeatureExtractor& extractor,
                                          const std::string& full_checkpoint,
                                          const std::string& rowa_checkpoint, int sample_steps, int max_pairs,
                                          uint64_t seed, std::vector<std::string>* missing = nullptr);

// CLI `reproduce` registry: {category_scale, personalized, ablation}.
// Returns the path to the written report.
std::string run_experiment(const std::string& experiment, const std::string& out_dir,
                           const ExperimentProfile& profile);

bool experiment_known(const std::string& experiment);

}  // namespace bgg
