#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "d24fad/errors.hpp"

namespace d24fad {

struct TaskManifest {
    std::string task_id;
    std::vector<std::string> normal_train;
    std::vector<std::string> normal_test;
    std::vector<std::string> abnormal_test;
    std::string modality;

    void validate() const;  // pairwise disjointness
};

enum class EpisodeRole { train, infer };

struct Episode {
    std::string query;
    std::vector<std::string> support;
    std::string task_id;
    EpisodeRole role = EpisodeRole::train;
};

// train tasks exclude held_out entirely; the held-out task is returned second
std::pair<std::vector<TaskManifest>, TaskManifest> build_leave_one_out(
    const std::vector<TaskManifest>& manifests, const std::string& held_out);

// The per-task fixed training support list: the first K entries of the
// split-seed shuffle of the task's normals. Constant across every episode of
// the task within a run.
std::vector<std::string> fixed_train_supports(uint64_t seed, const TaskManifest& task, int k);

// Query drawn uniformly from the non-support normals; fully determined by
// (seed, task, draw_index).
Episode sample_train_episode(uint64_t seed, const TaskManifest& task, int k, uint64_t draw_index);

enum class SupportMode { fixed, random };
std::string to_string(SupportMode m);
SupportMode support_mode_from(const std::string& s);

// Inference supports come from the task's normal test pool and are excluded
// from that trial's scored queries. Fixed mode ignores trial_seed.
std::vector<std::string> select_infer_support(const TaskManifest& task, int k, SupportMode mode,
                                              uint64_t trial_seed);

// Expects root/train/normal, root/test/normal, root/test/abnormal with
// .ppm/.pgm images; path lists are sorted so repeated loads are identical.
TaskManifest load_folder_dataset(const std::string& root);

void write_manifest_cache(const TaskManifest& manifest, const std::string& root);

// every path of the held-out task must be absent from all train manifests
void verify_no_leakage(const std::vector<TaskManifest>& train_tasks, const TaskManifest& test_task);

}  // namespace d24fad
