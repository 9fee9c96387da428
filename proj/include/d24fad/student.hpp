#pragma once

#include <string>
#include <vector>

#include "d24fad/backbone.hpp"
#include "d24fad/params.hpp"

namespace d24fad {

struct StudentSpec {
    std::vector<std::string> layer_ids;   // same list as the paired teacher
    std::vector<int> channel_plan;        // per-level output channels, shallowest first
    int upsample_factor = 2;
    uint64_t seed = 0;
    std::string block_kind = "basic";     // "basic" | "bottleneck"
};

// Cached student-side pyramids for the K support images of one task.
struct SupportFeatureBank {
    std::vector<FeaturePyramid> pyramids;
    std::vector<std::string> support_ids;
    std::string task_id;

    int k() const { return static_cast<int>(pyramids.size()); }
};

// Learnable decoder reconstructing the teacher's pyramid from its deepest
// tapped feature: one residual stage per level, nearest ×2 upsampling and a
// 1×1 channel-reduction conv between stages.
class Student {
public:
    Student() = default;

    static StudentSpec spec_for(const Teacher& teacher, uint64_t seed);
    static Student build(const StudentSpec& spec);

    const StudentSpec& spec() const { return spec_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    // deepest teacher feature (C_L,H_L,W_L) -> student pyramid, shallowest first
    FeaturePyramid forward(const Bound& bound, const ad::Var& deepest_teacher_feature) const;

private:
    StudentSpec spec_;
    ParamSet params_;
};

inline FeaturePyramid student_forward(const Student& s, const Bound& b, const ad::Var& deepest) {
    return s.forward(b, deepest);
}

// extract_pyramid -> student_forward for each of the K support images.
SupportFeatureBank support_forward(const Student& student, const Bound& bound, const Teacher& teacher,
                                   const std::vector<Tensor>& preprocessed_supports,
                                   const std::vector<std::string>& support_ids,
                                   const std::string& task_id = {});

// Same, but from already-extracted deepest teacher features (the training
// loop caches teacher pyramids; support features themselves are recomputed
// under the current student parameters every step).
SupportFeatureBank bank_from_deepest(const Student& student, const Bound& bound,
                                     const std::vector<Tensor>& deepest_features,
                                     const std::vector<std::string>& support_ids,
                                     const std::string& task_id = {});

}  // namespace d24fad
