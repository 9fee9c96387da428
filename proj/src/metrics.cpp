#include "d24fad/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

namespace d24fad {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::pair<uint64_t, uint64_t> auroc_exact(const std::vector<ScoredLabel>& scores) {
    uint64_t pos = 0, neg = 0;
    for (const auto& [s, label] : scores) {
        if (!std::isfinite(s)) throw NumericError("auroc: non-finite score");
        (label ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0)
        throw UndefinedMetricError("auroc undefined: need at least one normal and one abnormal score");

    std::vector<ScoredLabel> sorted = scores;
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredLabel& a, const ScoredLabel& b) { return a.first < b.first; });

    // walk tie groups in ascending score order
    uint64_t num2 = 0, normals_below = 0;
    size_t i = 0;
    while (i < sorted.size()) {
        size_t j = i;
        uint64_t group_pos = 0, group_neg = 0;
        while (j < sorted.size() && sorted[j].first == sorted[i].first) {
            (sorted[j].second ? group_pos : group_neg) += 1;
            ++j;
        }
        num2 += 2 * group_pos * normals_below;  // abnormal strictly above earlier normals
        num2 += group_pos * group_neg;          // ties count half
        normals_below += group_neg;
        i = j;
    }
    return {num2, 2 * pos * neg};
}

double auroc(const std::vector<ScoredLabel>& scores) {
    const auto [num, den] = auroc_exact(scores);
    return static_cast<double>(num) / static_cast<double>(den);
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw PreconditionError("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const size_t lo = static_cast<size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

json EvalReport::to_json() const {
    json trials_j = json::array();
    for (const auto& t : trials)
        trials_j.push_back({{"seed", t.seed}, {"auroc", t.auroc}, {"score_csv", t.score_csv}});
    return json{{"task_id", task_id}, {"k", k},
                {"support_mode", to_string(mode)}, {"trials", trials_j},
                {"mean_auroc", mean_auroc},        {"std_auroc", std_auroc}};
}

void write_scores_csv(const std::vector<std::pair<std::string, ScoredLabel>>& rows,
                      const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write score table: " + path);
    out << "query_path,score,label\n";
    out.precision(17);
    for (const auto& [p, sl] : rows)
        out << p << "," << sl.first << "," << (sl.second ? "abnormal" : "normal") << "\n";
    if (!out) throw IoError("short write: " + path);
}

EvalReport run_eval(Scorer& scorer, const TaskManifest& task, int k, SupportMode mode, int n_trials,
                    uint64_t seed_base, const std::string& out_dir, int workers) {
    if (n_trials < 1) throw PreconditionError("need at least one trial");
    if (task.normal_test.empty() || task.abnormal_test.empty())
        throw DataError("task " + task.task_id + " needs both normal and abnormal test images");
    fs::create_directories(fs::path(out_dir) / "reports");

    EvalReport report;
    report.task_id = task.task_id;
    report.k = k;
    report.mode = mode;

    for (int t = 0; t < n_trials; ++t) {
        const uint64_t trial_seed = seed_base + static_cast<uint64_t>(t);
        const std::vector<std::string> supports = select_infer_support(task, k, mode, trial_seed);
        const std::set<std::string> support_set(supports.begin(), supports.end());

        std::vector<std::pair<std::string, int>> queries;
        for (const auto& p : task.normal_test)
            if (!support_set.count(p)) queries.emplace_back(p, 0);
        for (const auto& p : task.abnormal_test) queries.emplace_back(p, 1);

        std::vector<std::pair<std::string, ScoredLabel>> rows(queries.size());
        const int n_workers = std::max(1, workers);
        if (n_workers == 1) {
            for (size_t i = 0; i < queries.size(); ++i) {
                const double s = scorer.score(supports, queries[i].first).anomaly.image_score;
                rows[i] = {queries[i].first, {s, queries[i].second}};
            }
        } else {
            scorer.score(supports, queries.front().first);  // warm the bank cache single-threaded
            std::atomic<size_t> next{0};
            auto work = [&]() {
                for (size_t i = next.fetch_add(1); i < queries.size(); i = next.fetch_add(1)) {
                    const double s = scorer.score(supports, queries[i].first).anomaly.image_score;
                    rows[i] = {queries[i].first, {s, queries[i].second}};
                }
            };
            std::vector<std::thread> pool;
            for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
            for (auto& th : pool) th.join();
        }

        std::vector<ScoredLabel> scored;
        scored.reserve(rows.size());
        for (const auto& r : rows) scored.push_back(r.second);

        TrialResult trial;
        trial.seed = trial_seed;
        trial.auroc = auroc(scored);
        trial.score_csv = "reports/scores_trial" + std::to_string(t) + ".csv";
        write_scores_csv(rows, (fs::path(out_dir) / trial.score_csv).string());
        if (t == 0)
            export_score_distribution(scored,
                                      (fs::path(out_dir) / "reports" / "score_distribution.csv").string());
        report.trials.push_back(std::move(trial));
    }

    double mean = 0.0;
    for (const auto& t : report.trials) mean += t.auroc;
    mean /= static_cast<double>(report.trials.size());
    double var = 0.0;
    for (const auto& t : report.trials) var += (t.auroc - mean) * (t.auroc - mean);
    var /= static_cast<double>(report.trials.size());
    report.mean_auroc = mean;
    report.std_auroc = std::sqrt(var);
    return report;
}

void export_score_distribution(const std::vector<ScoredLabel>& scores, const std::string& path) {
    if (scores.empty()) throw PreconditionError("score distribution export needs at least one score");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write score distribution: " + path);
    out.precision(17);
    out << "score,label\n";
    for (const auto& [s, label] : scores) out << s << "," << (label ? "abnormal" : "normal") << "\n";

    out << "class,count,min,q1,median,q3,max,iqr\n";
    for (int label = 0; label < 2; ++label) {
        std::vector<double> vals;
        for (const auto& [s, l] : scores)
            if (l == label) vals.push_back(s);
        if (vals.empty()) continue;
        std::sort(vals.begin(), vals.end());
        const double q1 = quantile(vals, 0.25), q2 = quantile(vals, 0.5), q3 = quantile(vals, 0.75);
        out << (label ? "abnormal" : "normal") << "," << vals.size() << "," << vals.front() << "," << q1
            << "," << q2 << "," << q3 << "," << vals.back() << "," << (q3 - q1) << "\n";
    }
    if (!out) throw IoError("short write: " + path);
}

void export_embeddings(Scorer& scorer, const std::vector<std::pair<std::string, int>>& images,
                       const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write embeddings: " + path);
    out.precision(17);
    for (const auto& [p, label] : images) {
        const std::vector<double> v = scorer.embed_file(p);
        out << p << "," << (label ? "abnormal" : "normal");
        for (double x : v) out << "," << x;
        out << "\n";
    }
    if (!out) throw IoError("short write: " + path);
}

}  // namespace d24fad
