#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "d24fad/episodes.hpp"
#include "d24fad/l2w.hpp"
#include "d24fad/student.hpp"

namespace d24fad {

struct TrainConfig {
    int epochs = 70;
    int batch_size = 64;
    AdamConfig adam;              // lr 5e-3, beta1 0.5, beta2 0.999
    uint64_t seed = 0;
    LossConfig loss;
    int support_k = 4;
    bool use_ssd = true;          // --no-ssd trains on the teacher-student term alone
    bool mixed_task_batches = false;
    int lr_horizon_epochs = 70;   // cosine decay horizon, independent of `epochs`

    void validate() const;
};

// cosine decay pinned to absolute epoch so interrupted and uninterrupted
// runs see identical rates
double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct TrainState {
    TrainConfig cfg;
    TeacherSpec teacher_spec;
    Student student;
    L2WParams l2w;
    int epoch_done = 0;
    int64_t step = 0;
    std::vector<double> loss_trace;
};

TrainState init_train_state(const TrainConfig& cfg, const Teacher& teacher, uint64_t student_seed);

struct TrainResult {
    std::string checkpoint_path;
    std::string manifest_path;
    nlohmann::json manifest;
};

// Episodic optimization of the combined objective. Continues from
// state.epoch_done+1 up to cfg.epochs; writes the final checkpoint and the
// run manifest under out_dir.
TrainResult train(TrainState& state, const std::vector<TaskManifest>& train_tasks,
                  const Teacher& teacher, const std::string& out_dir);

// Teacher pyramids are constant across a run; memoize them per image path.
class TeacherFeatureCache {
public:
    explicit TeacherFeatureCache(const Teacher& teacher, size_t max_entries = 4096)
        : teacher_(teacher), max_entries_(max_entries) {}

    const std::vector<Tensor>& levels(const std::string& path);

private:
    const Teacher& teacher_;
    size_t max_entries_;
    std::map<std::string, std::vector<Tensor>> cache_;
};

}  // namespace d24fad
