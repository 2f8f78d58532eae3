#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "model.hpp"
#include "optim.hpp"

namespace mswa {

// On-disk model snapshot. Layout: the magic line "MSWA1\n", a little-endian
// uint64 header length, a JSON header (sorted keys, so identical state
// serializes to identical bytes), then raw little-endian float32 blobs in
// header order: every parameter, then per parameter the optimizer m and v
// moments when present.
struct Checkpoint {
  ModelConfig config;
  uint64_t seed = 0;
  std::vector<std::pair<std::string, std::vector<float>>> params;

  bool has_optimizer = false;
  int64_t opt_step = 0;
  std::vector<std::vector<float>> opt_m, opt_v;  // parallel to params

  bool has_trainer = false;
  int64_t train_step = 0;
  uint64_t data_rng_state = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Captures the model parameters (and optionally optimizer moments) as f32.
Checkpoint snapshot(const Model& model);
void snapshot_optimizer(Checkpoint& ck, const AdamW& opt);

// Rebuilds a model from a checkpoint: same config and seed, parameters
// overwritten with the stored values.
Model model_from_checkpoint(const Checkpoint& ck);
// Overwrites an existing model's parameters; names and sizes must match.
void restore_params(Model& model, const Checkpoint& ck);
// Restores moments into an optimizer already attached to the same model.
void restore_optimizer(AdamW& opt, const Checkpoint& ck);

}  // namespace mswa
