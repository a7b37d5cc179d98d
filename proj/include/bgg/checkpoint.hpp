#pragma once
// Single-file checkpoint archive: magic + versioned JSON header + raw
// little-endian float32 tensor payload. Stores model parameters, schedule
// constants, the identifier table (a named parameter), optimizer state for
// training checkpoints, and an arbitrary config echo.

#include <json.hpp>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "bgg/model.hpp"

namespace bgg {

inline constexpr char kCheckpointMagic[8] = {'B', 'G', 'G', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    nlohmann::json header;
    std::map<std::string, TensorF> tensors;

    const TensorF& tensor(const std::string& name) const {
        auto it = tensors.find(name);
        require(it != tensors.end(), ErrorKind::parse, "checkpoint missing tensor: " + name);
        return it->second;
    }
};

void write_checkpoint(const std::string& path, const std::string& kind, nlohmann::json header_fields,
                      const std::vector<std::pair<std::string, const TensorF*>>& tensors);
Checkpoint read_checkpoint(const std::string& path);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Saves every registry parameter plus the schedule constants.
void save_model(const std::string& path, Model<float>& model, const std::string& kind = "model",
                const nlohmann::json& extra = nlohmann::json::object(),
                const std::vector<std::pair<std::string, const TensorF*>>& extra_tensors = {});

// Strict load: reconstructs the model from the stored config and requires
// every parameter tensor to be present with a matching shape.
std::unique_ptr<Model<float>> load_model(const Checkpoint& ck);
std::unique_ptr<Model<float>> load_model_file(const std::string& path, Checkpoint* out = nullptr);

// Byte-level FNV-1a over a parameter tensor; used by freeze-contract checks.
uint64_t param_checksum(const Param<float>& p);
uint64_t registry_checksum(ParamRegistry<float>& reg, const std::string& prefix);

}  // namespace bgg
