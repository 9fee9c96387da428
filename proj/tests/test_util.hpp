#pragma once

#include <functional>
#include <random>
#include <vector>

#include "d24fad/backbone.hpp"
#include "d24fad/student.hpp"
#include "oracles.hpp"

namespace testutil {

using namespace d24fad;

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(-scale, scale);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = u(rng);
    return t;
}

// small random pyramid: `levels` levels with doubling spatial size upward
inline std::vector<Tensor> random_pyramid_values(std::mt19937_64& rng, int levels = 3, int base_c = 3,
                                                 int base_hw = 2, double offset = 0.0) {
    std::vector<Tensor> vals;
    for (int i = levels - 1; i >= 0; --i) {
        const int hw = base_hw << (levels - 1 - i);
        Tensor t = random_tensor({base_c + i, hw, hw}, rng);
        for (int64_t j = 0; j < t.numel(); ++j) t[j] += offset;
        vals.push_back(std::move(t));
    }
    std::reverse(vals.begin(), vals.end());  // shallowest (largest) first
    return vals;
}

inline FeaturePyramid pyramid_of(const std::vector<Tensor>& values, PyramidSource source,
                                 bool trainable) {
    FeaturePyramid p;
    p.source = source;
    for (size_t i = 0; i < values.size(); ++i) {
        p.levels.push_back(trainable ? ad::leaf(values[i]) : ad::constant(values[i]));
        p.layer_ids.push_back("layer" + std::to_string(i + 1));
    }
    return p;
}

inline oracles::Level to_level(const Tensor& t) {
    oracles::Level l;
    l.c = t.dim(0);
    l.h = t.dim(1);
    l.w = t.dim(2);
    l.data = t.vec();
    return l;
}

inline std::vector<oracles::Level> to_levels(const std::vector<Tensor>& ts) {
    std::vector<oracles::Level> out;
    for (const auto& t : ts) out.push_back(to_level(t));
    return out;
}

inline std::vector<oracles::Level> to_levels(const FeaturePyramid& p) {
    std::vector<oracles::Level> out;
    for (const auto& v : p.levels) out.push_back(to_level(v->value));
    return out;
}

// central finite difference of f around t[i]
inline double central_diff(Tensor& t, int64_t i, double step, const std::function<double()>& f) {
    const double saved = t[i];
    t[i] = saved + step;
    const double up = f();
    t[i] = saved - step;
    const double down = f();
    t[i] = saved;
    return (up - down) / (2.0 * step);
}

inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-12});
    return std::abs(a - b) / denom;
}

}  // namespace testutil
