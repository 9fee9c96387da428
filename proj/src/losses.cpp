#include "d24fad/losses.hpp"

#include <cmath>

namespace d24fad {

std::string to_string(L2WVariant v) {
    switch (v) {
        case L2WVariant::scaled_dot: return "scaled_dot";
        case L2WVariant::gaussian: return "gaussian";
        case L2WVariant::embedded_gaussian: return "embedded_gaussian";
        case L2WVariant::concatenation: return "concatenation";
    }
    return "?";
}

L2WVariant l2w_variant_from(const std::string& s) {
    if (s == "scaled_dot") return L2WVariant::scaled_dot;
    if (s == "gaussian") return L2WVariant::gaussian;
    if (s == "embedded_gaussian") return L2WVariant::embedded_gaussian;
    if (s == "concatenation") return L2WVariant::concatenation;
    throw ConfigError("unknown l2w variant: " + s);
}

void LossConfig::validate() const {
    if (!std::isfinite(lambda_weight) || lambda_weight < 0.0)
        throw ConfigError("lambda_weight must be finite and non-negative");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

double cosine_sim(std::span<const double> a, std::span<const double> b, double eps) {
    if (a.size() != b.size()) throw ShapeError("cosine_sim: vector lengths differ");
    double num = 0.0, qa = 0.0, qb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += a[i] * b[i];
        qa += a[i] * a[i];
        qb += b[i] * b[i];
    }
    return num / (std::sqrt(qa) * std::sqrt(qb) + eps);
}

ad::Var cosine_map(const ad::Var& a, const ad::Var& b, double eps) {
    require_same_shape(a->value, b->value, "cosine_map");
    ad::Var num = ad::sum_channels(ad::mul(a, b));
    ad::Var na = ad::sqrt_(ad::sum_channels(ad::mul(a, a)));
    ad::Var nb = ad::sqrt_(ad::sum_channels(ad::mul(b, b)));
    ad::Var denom = ad::add_scalar(ad::mul(na, nb), eps);
    return ad::div(num, denom);
}

ad::Var level_dissim(const ad::Var& a, const ad::Var& b, double eps) {
    const int h = a->value.dim(1), w = a->value.dim(2);
    ad::Var one_minus = ad::add_scalar(ad::neg(cosine_map(a, b, eps)), 1.0);
    return ad::scale(ad::sum_all(one_minus), 1.0 / (static_cast<double>(h) * w));
}

ad::Var tsd_loss(const FeaturePyramid& teacher_pyr, const FeaturePyramid& student_pyr, double eps) {
    check_shape_duality(teacher_pyr, student_pyr);
    ad::Var total;
    for (size_t i = 0; i < teacher_pyr.size(); ++i) {
        ad::Var term = level_dissim(ad::detach(teacher_pyr.levels[i]), student_pyr.levels[i], eps);
        total = total ? ad::add(total, term) : term;
    }
    return total;
}

ad::Var ssd_loss(const SupportFeatureBank& bank, const FeaturePyramid& query_pyr, double eps,
                 bool stop_grad_support) {
    if (bank.pyramids.empty()) throw PreconditionError("ssd_loss: support bank is empty");
    ad::Var total;
    for (const auto& sp : bank.pyramids) {
        check_shape_duality(sp, query_pyr);
        for (size_t i = 0; i < query_pyr.size(); ++i) {
            ad::Var s = stop_grad_support ? ad::detach(sp.levels[i]) : sp.levels[i];
            ad::Var term = level_dissim(s, query_pyr.levels[i], eps);
            total = total ? ad::add(total, term) : term;
        }
    }
    return ad::scale(total, 1.0 / static_cast<double>(bank.k()));
}

double total_loss(const LossConfig& cfg, double tsd, double ssd_term) {
    cfg.validate();
    if (!std::isfinite(tsd)) throw NumericError("total_loss: tsd term is not finite");
    if (!std::isfinite(ssd_term)) throw NumericError("total_loss: ssd term is not finite");
    return cfg.lambda_weight * tsd + ssd_term;
}

ad::Var total_loss(const LossConfig& cfg, const ad::Var& tsd, const ad::Var& ssd_term) {
    cfg.validate();
    if (!std::isfinite(ad::scalar_of(tsd))) throw NumericError("total_loss: tsd term is not finite");
    if (!std::isfinite(ad::scalar_of(ssd_term))) throw NumericError("total_loss: ssd term is not finite");
    return ad::add(ad::scale(tsd, cfg.lambda_weight), ssd_term);
}

}  // namespace d24fad
