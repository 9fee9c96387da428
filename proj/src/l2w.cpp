#include "d24fad/l2w.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "d24fad/rng.hpp"

namespace d24fad {

using json = nlohmann::json;

void SupportWeights::validate(double tol) const {
    for (const auto& w : per_level) {
        if (w.empty()) throw ShapeError("support weight vector is empty");
        double s = 0.0;
        for (double v : w) {
            if (!(v >= 0.0)) throw NumericError("support weight is negative or NaN");
            s += v;
        }
        if (std::abs(s - 1.0) > tol)
            throw NumericError("support weights do not sum to 1 (got " + std::to_string(s) + ")");
    }
}

namespace {

// Logit magnitudes are clamped before exponentiation in the gaussian
// variants; the printed e^{q s^T} overflows on unnormalized features.
constexpr double kLogitClamp = 30.0;

void near_identity_init(Tensor& w, GaussianStream& g) {
    const int c = w.dim(0);
    for (int o = 0; o < c; ++o)
        for (int i = 0; i < c; ++i)
            w[static_cast<int64_t>(o) * c + i] = (o == i ? 1.0 : 0.0) + 0.02 * g.next();
}

}  // namespace

L2WParams L2WParams::build(L2WVariant variant, const std::vector<std::vector<int>>& level_shapes,
                           uint64_t seed) {
    L2WParams p;
    p.variant_ = variant;
    GaussianStream g(mix_keys(seed, "l2w_init"));
    for (size_t i = 0; i < level_shapes.size(); ++i) {
        const auto& sh = level_shapes[i];
        if (sh.size() != 3) throw ShapeError("l2w level shape must be (C,H,W)");
        const int c = sh[0];
        p.channels_.push_back(c);
        const std::string lvl = std::to_string(i + 1);
        const bool needs_phi = variant != L2WVariant::gaussian;
        const bool needs_theta =
            variant == L2WVariant::embedded_gaussian || variant == L2WVariant::concatenation;
        if (needs_phi) {
            Tensor w({c, c, 1, 1});
            near_identity_init(w, g);
            p.params_.add("l2w.phi" + lvl + ".w", std::move(w));
        }
        if (needs_theta) {
            Tensor w({c, c, 1, 1});
            near_identity_init(w, g);
            p.params_.add("l2w.theta" + lvl + ".w", std::move(w));
        }
        if (variant == L2WVariant::concatenation) {
            const int64_t n = static_cast<int64_t>(c) * sh[1] * sh[2];
            const double sc = 1.0 / std::sqrt(static_cast<double>(n));
            Tensor wq({static_cast<int>(n)}), ws({static_cast<int>(n)});
            for (int64_t j = 0; j < n; ++j) wq[j] = g.next() * sc;
            for (int64_t j = 0; j < n; ++j) ws[j] = g.next() * sc;
            p.params_.add("l2w.wq" + lvl, std::move(wq));
            p.params_.add("l2w.ws" + lvl, std::move(ws));
        }
    }
    return p;
}

std::vector<std::vector<ad::Var>> L2WParams::weight_vars(const Bound& bound,
                                                         const FeaturePyramid& query_pyr,
                                                         const SupportFeatureBank& bank) const {
    const int k_n = bank.k();
    if (k_n < 1) throw PreconditionError("learn-to-weight needs at least one support");
    if (query_pyr.size() != channels_.size())
        throw ShapeError("query pyramid level count does not match l2w configuration");
    for (const auto& sp : bank.pyramids) check_shape_duality(sp, query_pyr);

    std::vector<std::vector<ad::Var>> out;
    out.reserve(channels_.size());
    for (size_t i = 0; i < channels_.size(); ++i) {
        const std::string lvl = std::to_string(i + 1);
        const ad::Var& q = query_pyr.levels[i];
        const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(channels_[i]));

        auto phi = [&](const ad::Var& x) {
            return ad::conv2d(x, bound.at("l2w.phi" + lvl + ".w"), ad::Var(), 1, 0);
        };
        auto theta = [&](const ad::Var& x) {
            return ad::conv2d(x, bound.at("l2w.theta" + lvl + ".w"), ad::Var(), 1, 0);
        };

        std::vector<ad::Var> logits;
        logits.reserve(static_cast<size_t>(k_n));
        switch (variant_) {
            case L2WVariant::scaled_dot:
                for (int k = 0; k < k_n; ++k)
                    logits.push_back(ad::scale(ad::dot(q, phi(bank.pyramids[static_cast<size_t>(k)].levels[i])),
                                               inv_sqrt_c));
                break;
            case L2WVariant::gaussian:
                for (int k = 0; k < k_n; ++k)
                    logits.push_back(ad::exp_(ad::clamp(
                        ad::scale(ad::dot(q, bank.pyramids[static_cast<size_t>(k)].levels[i]), inv_sqrt_c),
                        -kLogitClamp, kLogitClamp)));
                break;
            case L2WVariant::embedded_gaussian: {
                ad::Var tq = theta(q);
                for (int k = 0; k < k_n; ++k)
                    logits.push_back(ad::exp_(ad::clamp(
                        ad::scale(ad::dot(tq, phi(bank.pyramids[static_cast<size_t>(k)].levels[i])), inv_sqrt_c),
                        -kLogitClamp, kLogitClamp)));
                break;
            }
            case L2WVariant::concatenation: {
                ad::Var query_part = ad::dot(bound.at("l2w.wq" + lvl), theta(q));
                for (int k = 0; k < k_n; ++k) {
                    ad::Var support_part =
                        ad::dot(bound.at("l2w.ws" + lvl), phi(bank.pyramids[static_cast<size_t>(k)].levels[i]));
                    logits.push_back(ad::relu(ad::add(query_part, support_part)));
                }
                break;
            }
        }
        for (const auto& l : logits)
            if (!std::isfinite(ad::scalar_of(l)))
                throw NumericError("learn-to-weight logit diverged at level " + lvl);

        ad::Var weights = ad::softmax1d(ad::stack_scalars(logits));
        std::vector<ad::Var> per_k;
        per_k.reserve(static_cast<size_t>(k_n));
        for (int k = 0; k < k_n; ++k) per_k.push_back(ad::pick(weights, k));
        out.push_back(std::move(per_k));
    }
    return out;
}

SupportWeights compute_weights(const L2WParams& params, const FeaturePyramid& query_pyr,
                               const SupportFeatureBank& bank) {
    Bound bound = bind(params.params());
    auto wv = params.weight_vars(bound, query_pyr, bank);
    SupportWeights sw;
    sw.support_ids = bank.support_ids;
    for (const auto& level : wv) {
        std::vector<double> row;
        row.reserve(level.size());
        for (const auto& v : level) row.push_back(ad::scalar_of(v));
        sw.per_level.push_back(std::move(row));
    }
    sw.validate();
    return sw;
}

ad::Var ssd_l2w_loss(const L2WParams& params, const Bound& bound, const FeaturePyramid& query_pyr,
                     const SupportFeatureBank& bank, double eps) {
    auto wv = params.weight_vars(bound, query_pyr, bank);
    ad::Var total;
    for (size_t i = 0; i < query_pyr.size(); ++i) {
        ad::Var weighted;
        for (size_t k = 0; k < bank.pyramids.size(); ++k) {
            ad::Var term = ad::smul(wv[i][k], bank.pyramids[k].levels[i]);
            weighted = weighted ? ad::add(weighted, term) : term;
        }
        ad::Var term = level_dissim(weighted, query_pyr.levels[i], eps);
        total = total ? ad::add(total, term) : term;
    }
    return total;
}

void export_weights(const SupportWeights& weights, const std::string& episode_id,
                    const std::string& path, bool append) {
    weights.validate();
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw IoError("cannot write weight records: " + path);
    for (size_t i = 0; i < weights.per_level.size(); ++i) {
        json rec;
        rec["episode_id"] = episode_id;
        rec["level_index"] = static_cast<int>(i);
        rec["support_ids"] = weights.support_ids;
        rec["weights"] = weights.per_level[i];
        out << rec.dump() << "\n";
    }
    if (!out) throw IoError("short write: " + path);
}

std::vector<WeightRecord> parse_weight_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read weight records: " + path);
    std::vector<WeightRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded()) throw IoError("malformed weight record in " + path);
        WeightRecord r;
        r.episode_id = rec.at("episode_id").get<std::string>();
        r.level_index = rec.at("level_index").get<int>();
        r.support_ids = rec.at("support_ids").get<std::vector<std::string>>();
        r.weights = rec.at("weights").get<std::vector<double>>();
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace d24fad
