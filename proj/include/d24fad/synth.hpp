#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "d24fad/episodes.hpp"
#include "d24fad/tensor.hpp"

namespace d24fad::synth {

enum class PatternFamily { blobs, stripes, rings, checker };
enum class AnomalyOp { patch_swap, intensity_spot, shape_insert };

std::string to_string(PatternFamily f);
PatternFamily family_from(const std::string& s);
std::string to_string(AnomalyOp op);
AnomalyOp anomaly_op_from(const std::string& s);

// Each task renders one fixed structural pattern (parameters drawn once from
// the task seed) with per-image smooth intensity perturbations, so images of
// a task are spatially aligned the way registered scans are. Abnormals are a
// fresh normal draw plus one localized edit covering 1-10% of the image.
struct SynthTaskSpec {
    std::string task_id;
    PatternFamily family = PatternFamily::blobs;
    AnomalyOp anomaly = AnomalyOp::patch_swap;
    int image_size = 32;
    int train_normal = 24;
    int test_normal = 12;
    int test_abnormal = 12;
    double noise_level = 0.04;
    uint64_t seed = 1;

    void validate() const;
};

struct AnomalyRecord {
    std::string file;
    int x = 0, y = 0, w = 0, h = 0;
    std::string op;
    double changed_frac = 0.0;  // fraction of image pixels altered
};

// deterministic per (spec, image_index); grayscale (1,S,S) in [0,1]
Tensor render_normal(const SynthTaskSpec& spec, uint64_t image_index);
Tensor apply_anomaly(const SynthTaskSpec& spec, const Tensor& base, uint64_t image_index,
                     AnomalyRecord* record);

// Writes out_root/<task_id>/{train/normal,test/normal,test/abnormal}/img_NNNN.pgm
// plus ground_truth.jsonl, task_meta.json and the manifest cache. Byte-identical
// across reruns with the same spec.
TaskManifest generate_task(const SynthTaskSpec& spec, const std::string& out_root);

// The four-family benchmark used by the CLI and the acceptance run.
std::vector<SynthTaskSpec> default_benchmark(uint64_t seed, int image_size, int train_normal,
                                             int test_normal, int test_abnormal, double noise_level);

// mean pairwise Pearson correlation between the task-mean images of two specs
double family_correlation(const SynthTaskSpec& a, const SynthTaskSpec& b);

}  // namespace d24fad::synth
