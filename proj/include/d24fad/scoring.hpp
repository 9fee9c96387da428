#pragma once

#include <map>
#include <string>
#include <vector>

#include "d24fad/checkpoint.hpp"

namespace d24fad {

struct AnomalyMap {
    Tensor map;                     // (H0,W0), non-negative
    double image_score = 0.0;       // arithmetic mean of map
    std::vector<Tensor> per_level;  // retained per-level maps before upsampling
};

struct ScoreOutput {
    AnomalyMap anomaly;
    SupportWeights weights;  // the per-level support weights used
};

// Read-only scoring facade over a trained checkpoint: per level, weight the
// support student features by the learned query-conditioned weights (uniform
// 1/K when the checkpoint was trained without learn-to-weight), take
// 1 - cosine against the query per location, upsample every level map
// bilinearly to the input resolution and average across levels. The image
// score is the mean of the aggregated map. Support banks are cached per
// support set.
class Scorer {
public:
    Scorer(const Teacher& teacher, TrainState checkpoint_state);

    ScoreOutput score(const std::vector<std::string>& support_paths, const std::string& query_path);
    ScoreOutput score_images(const std::vector<Tensor>& supports01, const Tensor& query01,
                             const std::vector<std::string>& support_ids);

    // spatially average-pooled deepest student feature (C_L)
    std::vector<double> embed(const Tensor& image01);
    std::vector<double> embed_file(const std::string& path);

    const Teacher& teacher() const { return teacher_; }
    const TrainState& state() const { return state_; }

    void clear_cache() { bank_cache_.clear(); }

private:
    const SupportFeatureBank& bank_for(const std::vector<std::string>& support_paths);
    ScoreOutput score_with_bank(const SupportFeatureBank& bank, const Tensor& query01);

    const Teacher& teacher_;
    TrainState state_;
    Bound frozen_;
    std::map<std::string, SupportFeatureBank> bank_cache_;
};

// Convenience one-shot form.
ScoreOutput score_query(const Teacher& teacher, const TrainState& checkpoint_state,
                        const std::vector<std::string>& support_paths, const std::string& query_path);

// Writes the min-max normalized overlay to `path` and a copy of the query to
// `<stem>_query.<ext>`, both at the query's own dimensions.
void export_heatmap(const AnomalyMap& map, const Tensor& query01, const std::string& path);

}  // namespace d24fad
