#pragma once
// Staged training: backbone pretraining, category-wise branch training, and
// joint branch training with self-supervised background perturbation.
// Deterministic end to end: data order, timesteps, noise, mixup partners and
// sigmas all derive from (seed, step), so interrupted runs resume bit-exactly.

#include <fstream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bgg/checkpoint.hpp"
#include "bgg/dataset.hpp"
#include "bgg/model.hpp"
#include "bgg/perturb.hpp"

namespace bgg {

enum class TrainStage { backbone, cg_only, cg_pg };

std::string stage_name(TrainStage s);
TrainStage stage_from_name(const std::string& name);

struct TrainConfig {
    TrainStage stage = TrainStage::backbone;
    int batch_size = 16;
    int steps = 1000;
    float lr = 1e-4f;
    uint64_t seed = 0;
    uint64_t param_seed = 0;  // 0 = derive from seed; set to decouple init from data order
    PerturbParams perturb;
    bool joint_backbone = false;   // unfreeze (or create) the backbone in branch stages
    bool shared_prompt = false;    // no-identifier ablation
    bool unmasked_cg = false;      // branch with plain attention (ablation row a)
    bool freeze_cg = false;
    bool freeze_identifiers = false;
    int checkpoint_every = 0;  // 0 = final only
    int log_every = 25;
    DenoiserConfig denoiser;
    ScheduleConfig schedule;
    std::string init_checkpoint;    // warm-start parameters
    std::string resume_checkpoint;  // resume full training state
    std::string out_dir;
    std::string run_name = "train";

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainResult {
    std::string checkpoint_path;
    int steps_run = 0;
    std::vector<std::pair<int, float>> loss_log;  // every step: (step, loss)
};

class Trainer {
public:
    Trainer(TrainConfig cfg, const DatasetManifest& manifest);

    float step();  // one optimization step, returns the loss
    TrainResult run();

    Model<float>& model() { return *model_; }
    int current_step() const { return step_; }
    void save_checkpoint(const std::string& path) const;

private:
    struct CachedRecord {
        AdRecord rec;
        TensorF z0;           // encode(I)
        TensorF cg_hint;      // encode(I * M)
    };

    TrainConfig cfg_;
    const DatasetManifest& manifest_;
    std::unique_ptr<Model<float>> model_;
    std::vector<CachedRecord> records_;
    std::vector<std::vector<int>> epoch_perms_;
    Rng root_;
    int step_ = 0;
    int adam_t_ = 0;
    std::map<std::string, TensorF> adam_m_, adam_v_;
    std::vector<Param<float>*> trainable_;
    std::vector<std::pair<int, float>> loss_log_;
    std::unique_ptr<std::ofstream> log_file_;

    void build_model();
    void load_init_params(const std::string& path);
    void resume_from(const std::string& path);
    void apply_freezes();
    std::vector<int> batch_indices(int step);
    void adam_update();
    void write_diagnostic(const std::string& reason, const std::vector<int>& batch);
};

TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest);

}  // namespace bgg
