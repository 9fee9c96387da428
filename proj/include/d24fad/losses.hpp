#pragma once

#include <span>
#include <string>

#include "d24fad/backbone.hpp"
#include "d24fad/student.hpp"

namespace d24fad {

enum class L2WVariant { scaled_dot, gaussian, embedded_gaussian, concatenation };
std::string to_string(L2WVariant v);
L2WVariant l2w_variant_from(const std::string& s);

struct LossConfig {
    double lambda_weight = 0.1;           // balance between the two distillation terms
    bool use_l2w = true;
    L2WVariant l2w_variant = L2WVariant::scaled_dot;
    double epsilon = 1e-8;                // norm-product stabilizer
    bool stop_grad_support = false;       // ablation: detach support features in the self-distillation term

    void validate() const;
};

// sim(a,b) = a.b / (|a||b| + eps); symmetric, in [-1,1], invariant to
// positive rescaling of either argument.
double cosine_sim(std::span<const double> a, std::span<const double> b, double eps = 1e-8);

// per-location channel cosine over a pair of (C,H,W) maps -> (H,W)
ad::Var cosine_map(const ad::Var& a, const ad::Var& b, double eps);

// mean over (h,w) of 1 - cosine for one level pair -> scalar
ad::Var level_dissim(const ad::Var& a, const ad::Var& b, double eps);

// mean over locations of (1 - cosine), summed over pyramid levels.
// The first pyramid is detached: no gradient reaches the teacher.
ad::Var tsd_loss(const FeaturePyramid& teacher_pyr, const FeaturePyramid& student_pyr, double eps = 1e-8);

// Eq-2 style self-distillation: mean over the K supports of the per-level
// location-mean dissimilarity against the query.
ad::Var ssd_loss(const SupportFeatureBank& bank, const FeaturePyramid& query_pyr, double eps = 1e-8,
                 bool stop_grad_support = false);

// combined objective: lambda * tsd + ssd_term
double total_loss(const LossConfig& cfg, double tsd, double ssd_term);
ad::Var total_loss(const LossConfig& cfg, const ad::Var& tsd, const ad::Var& ssd_term);

}  // namespace d24fad
