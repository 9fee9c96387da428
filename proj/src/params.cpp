#include "d24fad/params.hpp"

#include <cmath>

#include "d24fad/rng.hpp"

namespace d24fad {

Tensor& ParamSet::add(const std::string& name, Tensor init) {
    if (has(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = items_.size();
    ParamTensor pt;
    pt.name = name;
    pt.adam_m = Tensor(init.shape());
    pt.adam_v = Tensor(init.shape());
    pt.value = std::move(init);
    items_.push_back(std::move(pt));
    return items_.back().value;
}

Tensor& ParamSet::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return items_[it->second].value;
}

const Tensor& ParamSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return items_[it->second].value;
}

int64_t ParamSet::total_elems() const {
    int64_t n = 0;
    for (const auto& p : items_) n += p.value.numel();
    return n;
}

uint64_t ParamSet::checksum() const {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& p : items_) {
        h = fnv1a(p.name.data(), p.name.size(), h);
        h = fnv1a(p.value.data(), static_cast<size_t>(p.value.numel()) * sizeof(double), h);
    }
    return h;
}

const ad::Var& Bound::at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ConfigError("unbound parameter: " + name);
    return it->second;
}

Bound bind(ParamSet& params, bool trainable) {
    Bound b;
    for (auto& p : params.items())
        b.vars.emplace(p.name, trainable ? ad::leaf(p.value) : ad::constant(p.value));
    return b;
}

Bound bind(const ParamSet& params) {
    Bound b;
    for (const auto& p : params.items()) b.vars.emplace(p.name, ad::constant(p.value));
    return b;
}

void adam_step(ParamSet& params, const Bound& bound, const AdamConfig& cfg, int64_t step) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (auto& p : params.items()) {
        const ad::Var& v = bound.at(p.name);
        if (v->grad.numel() != p.value.numel()) continue;  // no gradient reached this tensor
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            const double g = v->grad[i];
            p.adam_m[i] = cfg.beta1 * p.adam_m[i] + (1.0 - cfg.beta1) * g;
            p.adam_v[i] = cfg.beta2 * p.adam_v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = p.adam_m[i] / bc1;
            const double vhat = p.adam_v[i] / bc2;
            p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

std::string checksum_hex(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

}  // namespace d24fad
