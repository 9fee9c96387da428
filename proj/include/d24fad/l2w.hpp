#pragma once

#include <string>
#include <vector>

#include "d24fad/losses.hpp"

namespace d24fad {

// Per-level support weights: each entry is a length-K probability vector
// conditioned on the query.
struct SupportWeights {
    std::vector<std::vector<double>> per_level;
    std::vector<std::string> support_ids;

    size_t levels() const { return per_level.size(); }
    void validate(double tol = 1e-6) const;
};

// Query-conditioned weighting of support features. A 1×1 projection per
// pyramid level (and, depending on the variant, a second projection and a
// learnable score vector) is learned jointly with the student.
class L2WParams {
public:
    L2WParams() = default;

    // level_shapes: (C,H,W) per level at the configured input size
    static L2WParams build(L2WVariant variant, const std::vector<std::vector<int>>& level_shapes,
                           uint64_t seed);

    L2WVariant variant() const { return variant_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    size_t levels() const { return channels_.size(); }

    // per level, K weight nodes (softmax outputs); gradients flow into the
    // projections, the score vector, and both feature sides
    std::vector<std::vector<ad::Var>> weight_vars(const Bound& bound, const FeaturePyramid& query_pyr,
                                                  const SupportFeatureBank& bank) const;

private:
    L2WVariant variant_ = L2WVariant::scaled_dot;
    std::vector<int> channels_;
    ParamSet params_;
};

SupportWeights compute_weights(const L2WParams& params, const FeaturePyramid& query_pyr,
                               const SupportFeatureBank& bank);

// Weighted self-distillation: per level, 1 - cosine between the weighted
// support combination and the query, averaged over locations, summed over
// levels (no 1/K factor — the weighted sum replaces the mean).
ad::Var ssd_l2w_loss(const L2WParams& params, const Bound& bound, const FeaturePyramid& query_pyr,
                     const SupportFeatureBank& bank, double eps = 1e-8);

// Line-delimited records, one object per level:
// {episode_id, level_index, support_ids, weights}
void export_weights(const SupportWeights& weights, const std::string& episode_id,
                    const std::string& path, bool append = false);

struct WeightRecord {
    std::string episode_id;
    int level_index = 0;
    std::vector<std::string> support_ids;
    std::vector<double> weights;
};
std::vector<WeightRecord> parse_weight_records(const std::string& path);

}  // namespace d24fad
