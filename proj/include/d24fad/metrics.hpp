#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "d24fad/episodes.hpp"
#include "d24fad/scoring.hpp"

namespace d24fad {

// label: 0 = normal, 1 = abnormal
using ScoredLabel = std::pair<double, int>;

// AUROC as an exact rational: numerator counted in half units (2 per
// abnormal>normal pair, 1 per tie) over denominator 2*P*N.
std::pair<uint64_t, uint64_t> auroc_exact(const std::vector<ScoredLabel>& scores);
double auroc(const std::vector<ScoredLabel>& scores);

struct TrialResult {
    uint64_t seed = 0;
    double auroc = 0.0;
    std::string score_csv;  // relative path of this trial's score table
};

struct EvalReport {
    std::string task_id;
    int k = 0;
    SupportMode mode = SupportMode::fixed;
    std::vector<TrialResult> trials;
    double mean_auroc = 0.0;
    double std_auroc = 0.0;  // population std over trials

    nlohmann::json to_json() const;
};

// Per trial: select supports, score every remaining test image, compute
// AUROC. Score CSVs land under out_dir/reports; the trial-0 score
// distribution export lands next to them. `workers` parallelizes query
// scoring; results are assembled by index so output is identical at any
// worker count.
EvalReport run_eval(Scorer& scorer, const TaskManifest& task, int k, SupportMode mode, int n_trials,
                    uint64_t seed_base, const std::string& out_dir, int workers = 1);

void write_scores_csv(const std::vector<std::pair<std::string, ScoredLabel>>& rows,
                      const std::string& path);

// (score,label) data rows followed by per-class summary rows with
// min/q1/median/q3/max/iqr (linear-interpolation quantiles).
void export_score_distribution(const std::vector<ScoredLabel>& scores, const std::string& path);

// one row per image: path, label, then the pooled deepest student feature
void export_embeddings(Scorer& scorer, const std::vector<std::pair<std::string, int>>& images,
                       const std::string& path);

// linear-interpolation order statistic, p in [0,1]
double quantile(std::vector<double> values, double p);

}  // namespace d24fad
