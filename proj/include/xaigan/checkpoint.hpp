#pragma once

#include <string>
#include <vector>

#include "xaigan/nn.hpp"
#include "xaigan/train.hpp"

namespace xaigan::harness {

// Binary format: magic "XAIC", u32 LE version, u32 LE parameter count, then
// per parameter: u32 LE name length, name bytes, u32 LE rank, u32 LE dims,
// raw f32 LE values. Model hyperparameters and optimizer state travel as
// ordinary named entries, so a checkpoint is self-contained.
inline constexpr uint32_t kCheckpointVersion = 1;

void checkpoint_save(const std::vector<nn::NamedParam>& params, const std::string& path);
std::vector<nn::NamedParam> checkpoint_load(const std::string& path);

// Full training state: model parameters, topology meta entries, Adam state.
void save_trainer_checkpoint(const train::Trainer& trainer, const std::string& path);

// Model parameters plus topology meta entries, no optimizer state.
void save_models(const train::ModelSet& models, const train::TrainConfig& topology,
                 const std::string& path);

struct LoadedModels {
    train::ModelSet models;
    train::TrainConfig topology;  // only the model-topology fields are meaningful
};

// Rebuilds the model set from the meta entries and fills parameters by name.
LoadedModels load_models(const std::string& path);

// Resume path: overwrites the trainer's model parameters and optimizer state.
// The trainer's topology must match the checkpoint.
void restore_trainer(train::Trainer& trainer, const std::string& path);

}  // namespace xaigan::harness
