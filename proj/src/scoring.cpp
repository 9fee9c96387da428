#include "d24fad/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "d24fad/image.hpp"
#include "d24fad/kernels.hpp"

namespace d24fad {

Scorer::Scorer(const Teacher& teacher, TrainState checkpoint_state)
    : teacher_(teacher), state_(std::move(checkpoint_state)) {
    if (state_.epoch_done < 1)
        throw StateError("checkpoint has no completed training epochs; refusing to score");
    if (teacher_.spec().backbone_name != state_.teacher_spec.backbone_name ||
        teacher_.spec().input_size != state_.teacher_spec.input_size)
        throw StateError("teacher does not match the checkpoint's teacher spec");
    frozen_ = bind(static_cast<const ParamSet&>(state_.student.params()));
    Bound lb = bind(static_cast<const ParamSet&>(state_.l2w.params()));
    frozen_.vars.insert(lb.vars.begin(), lb.vars.end());
}

const SupportFeatureBank& Scorer::bank_for(const std::vector<std::string>& support_paths) {
    if (support_paths.empty()) throw PreconditionError("support set must be non-empty");
    std::string key;
    for (const auto& p : support_paths) key += p + "\n";
    auto it = bank_cache_.find(key);
    if (it != bank_cache_.end()) return it->second;

    std::vector<Tensor> preprocessed;
    preprocessed.reserve(support_paths.size());
    for (const auto& p : support_paths) preprocessed.push_back(teacher_.preprocess_file(p));
    SupportFeatureBank bank =
        support_forward(state_.student, frozen_, teacher_, preprocessed, support_paths);
    return bank_cache_.emplace(std::move(key), std::move(bank)).first->second;
}

ScoreOutput Scorer::score(const std::vector<std::string>& support_paths, const std::string& query_path) {
    const SupportFeatureBank& bank = bank_for(support_paths);
    return score_with_bank(bank, img::read_image(query_path));
}

ScoreOutput Scorer::score_images(const std::vector<Tensor>& supports01, const Tensor& query01,
                                 const std::vector<std::string>& support_ids) {
    if (supports01.empty()) throw PreconditionError("support set must be non-empty");
    std::vector<Tensor> preprocessed;
    preprocessed.reserve(supports01.size());
    for (const auto& s : supports01) preprocessed.push_back(teacher_.preprocess_image(s));
    SupportFeatureBank bank =
        support_forward(state_.student, frozen_, teacher_, preprocessed, support_ids);
    return score_with_bank(bank, query01);
}

ScoreOutput Scorer::score_with_bank(const SupportFeatureBank& bank, const Tensor& query01) {
    const Tensor query = teacher_.preprocess_image(query01);
    FeaturePyramid tq = teacher_.forward(query);
    FeaturePyramid zq = state_.student.forward(frozen_, ad::constant(tq.levels.back()->value));
    check_shape_duality(tq, zq);

    ScoreOutput out;
    const bool use_l2w = state_.cfg.loss.use_l2w && state_.l2w.params().size() > 0;
    if (use_l2w) {
        out.weights = compute_weights(state_.l2w, zq, bank);
    } else {
        out.weights.support_ids = bank.support_ids;
        const double u = 1.0 / static_cast<double>(bank.k());
        for (size_t i = 0; i < zq.size(); ++i)
            out.weights.per_level.emplace_back(static_cast<size_t>(bank.k()), u);
    }

    const int res = teacher_.spec().input_size;
    Tensor aggregate({res, res});
    const double eps = state_.cfg.loss.epsilon;
    for (size_t i = 0; i < zq.size(); ++i) {
        // weighted support reference for this level
        const Tensor& q = zq.levels[i]->value;
        Tensor weighted(q.shape());
        for (size_t k = 0; k < bank.pyramids.size(); ++k) {
            const Tensor& s = bank.pyramids[k].levels[i]->value;
            const double w = out.weights.per_level[i][k];
            for (int64_t j = 0; j < weighted.numel(); ++j) weighted[j] += w * s[j];
        }
        const int h = q.dim(1), wd = q.dim(2), c = q.dim(0);
        Tensor level_map({1, h, wd});
        const int64_t hw = static_cast<int64_t>(h) * wd;
        for (int64_t loc = 0; loc < hw; ++loc) {
            double num = 0.0, qa = 0.0, qb = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                const double a = weighted[ch * hw + loc];
                const double b = q[ch * hw + loc];
                num += a * b;
                qa += a * a;
                qb += b * b;
            }
            level_map[loc] = 1.0 - num / (std::sqrt(qa) * std::sqrt(qb) + eps);
        }
        out.anomaly.per_level.push_back(level_map);
        Tensor up = kernels::resize_bilinear(level_map, res, res);
        for (int64_t j = 0; j < aggregate.numel(); ++j) aggregate[j] += up[j] / static_cast<double>(zq.size());
    }

    double mean = 0.0;
    for (int64_t j = 0; j < aggregate.numel(); ++j) mean += aggregate[j];
    mean /= static_cast<double>(aggregate.numel());
    if (!std::isfinite(mean)) throw NumericError("anomaly score is not finite");
    out.anomaly.map = std::move(aggregate);
    out.anomaly.image_score = mean;
    return out;
}

std::vector<double> Scorer::embed(const Tensor& image01) {
    const Tensor pre = teacher_.preprocess_image(image01);
    FeaturePyramid tp = teacher_.forward(pre);
    FeaturePyramid zp = state_.student.forward(frozen_, ad::constant(tp.levels.back()->value));
    const Tensor& deep = zp.levels.back()->value;
    const int c = deep.dim(0);
    const int64_t hw = static_cast<int64_t>(deep.dim(1)) * deep.dim(2);
    std::vector<double> pooled(static_cast<size_t>(c), 0.0);
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int64_t j = 0; j < hw; ++j) s += deep[ch * hw + j];
        pooled[static_cast<size_t>(ch)] = s / static_cast<double>(hw);
    }
    return pooled;
}

std::vector<double> Scorer::embed_file(const std::string& path) { return embed(img::read_image(path)); }

ScoreOutput score_query(const Teacher& teacher, const TrainState& checkpoint_state,
                        const std::vector<std::string>& support_paths, const std::string& query_path) {
    Scorer scorer(teacher, checkpoint_state);
    return scorer.score(support_paths, query_path);
}

namespace {

void jet_color(double v, double& r, double& g, double& b) {
    v = std::max(0.0, std::min(1.0, v));
    r = std::max(0.0, std::min(1.0, 1.5 - std::abs(4.0 * v - 3.0)));
    g = std::max(0.0, std::min(1.0, 1.5 - std::abs(4.0 * v - 2.0)));
    b = std::max(0.0, std::min(1.0, 1.5 - std::abs(4.0 * v - 1.0)));
}

}  // namespace

void export_heatmap(const AnomalyMap& map, const Tensor& query01, const std::string& path) {
    for (int64_t i = 0; i < map.map.numel(); ++i)
        if (!std::isfinite(map.map[i])) throw NumericError("anomaly map contains non-finite values");
    const int h = query01.dim(1), w = query01.dim(2);

    double lo = map.map[0], hi = map.map[0];
    for (int64_t i = 0; i < map.map.numel(); ++i) {
        lo = std::min(lo, map.map[i]);
        hi = std::max(hi, map.map[i]);
    }
    Tensor norm({1, map.map.dim(0), map.map.dim(1)});
    for (int64_t i = 0; i < map.map.numel(); ++i)
        norm[i] = hi > lo ? (map.map[i] - lo) / (hi - lo) : 0.0;
    Tensor up = kernels::resize_bilinear(norm, h, w);

    Tensor overlay({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gray = 0.0;
            for (int c = 0; c < query01.dim(0); ++c) gray += query01.at(c, y, x);
            gray /= query01.dim(0);
            double r, g, b;
            jet_color(up.at(0, y, x), r, g, b);
            overlay.at(0, y, x) = 0.5 * gray + 0.5 * r;
            overlay.at(1, y, x) = 0.5 * gray + 0.5 * g;
            overlay.at(2, y, x) = 0.5 * gray + 0.5 * b;
        }
    img::write_png(path, overlay);

    Tensor query_rgb({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                query_rgb.at(c, y, x) = query01.at(query01.dim(0) == 3 ? c : 0, y, x);
    std::filesystem::path p(path);
    const std::string query_path =
        (p.parent_path() / (p.stem().string() + "_query" + p.extension().string())).string();
    img::write_png(query_path, query_rgb);
}

}  // namespace d24fad
