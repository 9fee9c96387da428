#pragma once

#include <string>

#include "d24fad/train.hpp"

namespace d24fad {

inline constexpr int kCheckpointVersion = 1;

// Checkpoint = the full training state: both specs, the effective config,
// epoch/step counters, the loss trace so far, and parameter values plus Adam
// moments for student and learn-to-weight. Saving then loading reproduces
// training bit-for-bit.
std::string checkpoint_filename(int epoch);  // student_ep{epoch}.ckpt
std::string save_checkpoint(const TrainState& state, const std::string& dir);
void save_checkpoint_to(const TrainState& state, const std::string& path);

// StateError on missing tensors, shape mismatches, corrupt files, or a
// version this build cannot read.
TrainState load_checkpoint(const std::string& path);

inline TrainState resume(const std::string& checkpoint_path) { return load_checkpoint(checkpoint_path); }

}  // namespace d24fad
