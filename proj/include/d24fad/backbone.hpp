#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "d24fad/autodiff.hpp"
#include "d24fad/params.hpp"
#include "d24fad/tensor.hpp"

namespace d24fad {

enum class PyramidSource { teacher, student };

// Ordered multi-scale feature maps, one entry per tapped stage, shallowest
// first. Levels are graph nodes so the same type serves frozen teacher
// output (constants) and differentiable student output.
struct FeaturePyramid {
    std::vector<ad::Var> levels;
    std::vector<std::string> layer_ids;
    PyramidSource source = PyramidSource::teacher;

    size_t size() const { return levels.size(); }
    const Tensor& level_value(size_t i) const { return levels[i]->value; }

    // non-empty, one id per level, spatial extent non-increasing with depth
    void validate() const;
};

void check_shape_duality(const FeaturePyramid& teacher_pyr, const FeaturePyramid& student_pyr);

enum class WeightsSource { imagenet_pretrained, random_frozen, file_path };
std::string to_string(WeightsSource s);
WeightsSource weights_source_from(const std::string& s);

struct TeacherSpec {
    std::string backbone_name = "wide_resnet50_2";
    std::vector<std::string> layer_ids = {"layer1", "layer2", "layer3"};
    WeightsSource weights_source = WeightsSource::imagenet_pretrained;
    int input_size = 128;
    uint64_t seed = 0;          // random_frozen initialization
    std::string weights_path;   // file_path source
};

struct BackboneInfo {
    std::string name;
    std::vector<std::string> stages;   // depth order
    std::vector<int> stage_channels;
    bool bottleneck = false;
    std::array<double, 3> norm_mean{};
    std::array<double, 3> norm_std{};
};

const std::vector<BackboneInfo>& registered_backbones();
const BackboneInfo& find_backbone(const std::string& name);  // ConfigError if unknown

// Directory searched for pretrained weight files (<backbone>.tnz).
// D24FAD_WEIGHTS_DIR overrides the default.
std::string weights_cache_dir();

// tapped (C,H,W) shapes by stride arithmetic alone — no weights needed
std::vector<std::vector<int>> teacher_level_shapes(const TeacherSpec& spec);

// Frozen multi-scale feature extractor. Parameters are never exposed as
// trainable leaves; forward passes build no tape. Safe for concurrent use
// after construction.
class Teacher {
public:
    static Teacher load(const TeacherSpec& spec);

    const TeacherSpec& spec() const { return spec_; }
    const BackboneInfo& info() const { return *info_; }
    const ParamSet& params() const { return params_; }
    uint64_t checksum() const { return params_.checksum(); }

    // single preprocessed (3,S,S) input -> tapped pyramid
    FeaturePyramid forward(const Tensor& preprocessed) const;
    std::vector<FeaturePyramid> extract_pyramid(const std::vector<Tensor>& batch) const;

    // per tapped level (C,H,W) at the configured input size
    std::vector<std::vector<int>> level_shapes() const;
    const std::vector<int>& tapped_channels() const { return tapped_channels_; }
    const std::vector<std::string>& tapped_ids() const { return tapped_ids_; }

    Tensor preprocess_image(const Tensor& image01) const;
    Tensor preprocess_file(const std::string& path) const;

private:
    Teacher() = default;

    TeacherSpec spec_;
    const BackboneInfo* info_ = nullptr;
    ParamSet params_;
    std::vector<std::string> tapped_ids_;      // canonical depth order
    std::vector<int> tapped_channels_;
    std::vector<int> tap_stage_index_;         // indices into info_->stages
};

inline Teacher load_teacher(const TeacherSpec& spec) { return Teacher::load(spec); }

}  // namespace d24fad
