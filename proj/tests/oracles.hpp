#pragma once

// Independent reference implementations used to pin expected values. These
// are deliberately written as plain scalar loops straight from the loss
// definitions, sharing no code with the library's vectorized/graph paths.

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracles {

// one level = flat (C,H,W) buffer
struct Level {
    int c = 0, h = 0, w = 0;
    std::vector<double> data;

    double at(int ch, int y, int x) const {
        return data[static_cast<size_t>((ch * h + y) * w + x)];
    }
};

inline double cosine_at(const Level& a, const Level& b, int y, int x, double eps) {
    double num = 0.0, qa = 0.0, qb = 0.0;
    for (int ch = 0; ch < a.c; ++ch) {
        num += a.at(ch, y, x) * b.at(ch, y, x);
        qa += a.at(ch, y, x) * a.at(ch, y, x);
        qb += b.at(ch, y, x) * b.at(ch, y, x);
    }
    return num / (std::sqrt(qa) * std::sqrt(qb) + eps);
}

// sum_i mean_{h,w} (1 - cos) over level pairs
inline double tsd(const std::vector<Level>& teacher, const std::vector<Level>& student, double eps) {
    double total = 0.0;
    for (size_t i = 0; i < teacher.size(); ++i) {
        double level_sum = 0.0;
        for (int y = 0; y < teacher[i].h; ++y)
            for (int x = 0; x < teacher[i].w; ++x)
                level_sum += 1.0 - cosine_at(teacher[i], student[i], y, x, eps);
        total += level_sum / (static_cast<double>(teacher[i].h) * teacher[i].w);
    }
    return total;
}

// (1/K) sum_k sum_i mean_{h,w} (1 - cos)
inline double ssd(const std::vector<std::vector<Level>>& supports, const std::vector<Level>& query,
                  double eps) {
    double total = 0.0;
    for (const auto& sp : supports) total += tsd(sp, query, eps);
    return total / static_cast<double>(supports.size());
}

// Eq-4 weights with an explicit projection matrix per level (phi[c_out][c_in]
// applied as a 1x1 conv); pass the identity to disable the projection.
inline std::vector<double> l2w_weights_level(const std::vector<Level>& support_level,
                                             const Level& query,
                                             const std::vector<std::vector<double>>& phi) {
    const int K = static_cast<int>(support_level.size());
    std::vector<double> logits(static_cast<size_t>(K), 0.0);
    for (int k = 0; k < K; ++k) {
        double dot = 0.0;
        for (int y = 0; y < query.h; ++y)
            for (int x = 0; x < query.w; ++x)
                for (int co = 0; co < query.c; ++co) {
                    double projected = 0.0;
                    for (int ci = 0; ci < query.c; ++ci)
                        projected += phi[static_cast<size_t>(co)][static_cast<size_t>(ci)] *
                                     support_level[static_cast<size_t>(k)].at(ci, y, x);
                    dot += query.at(co, y, x) * projected;
                }
        logits[static_cast<size_t>(k)] = dot / std::sqrt(static_cast<double>(query.c));
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    std::vector<double> out(logits.size());
    for (size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - mx);
        z += out[k];
    }
    for (auto& v : out) v /= z;
    return out;
}

// Eq-5: weighted support combination per level, then per-location 1 - cos
inline double ssd_l2w(const std::vector<std::vector<Level>>& supports, const std::vector<Level>& query,
                      const std::vector<std::vector<double>>& weights_per_level, double eps) {
    double total = 0.0;
    for (size_t i = 0; i < query.size(); ++i) {
        Level combined = query[i];
        for (auto& v : combined.data) v = 0.0;
        for (size_t k = 0; k < supports.size(); ++k)
            for (size_t j = 0; j < combined.data.size(); ++j)
                combined.data[j] += weights_per_level[i][k] * supports[k][i].data[j];
        double level_sum = 0.0;
        for (int y = 0; y < query[i].h; ++y)
            for (int x = 0; x < query[i].w; ++x)
                level_sum += 1.0 - cosine_at(combined, query[i], y, x, eps);
        total += level_sum / (static_cast<double>(query[i].h) * query[i].w);
    }
    return total;
}

// O(n^2) pairwise AUROC counting: numerator in half units, denominator 2*P*N
inline std::pair<uint64_t, uint64_t> auroc_pairwise(const std::vector<std::pair<double, int>>& scores) {
    uint64_t num2 = 0, pos = 0, neg = 0;
    for (const auto& [sa, la] : scores) {
        if (la == 0) continue;
        ++pos;
        for (const auto& [sb, lb] : scores) {
            if (lb == 1) continue;
            if (sa > sb)
                num2 += 2;
            else if (sa == sb)
                num2 += 1;
        }
    }
    for (const auto& [s, l] : scores)
        if (l == 0) ++neg;
    return {num2, 2 * pos * neg};
}

// naive direct convolution for checking the GEMM path
inline std::vector<double> conv2d_naive(const std::vector<double>& x, int ci, int h, int w,
                                        const std::vector<double>& kern, int co, int kh, int kw,
                                        const std::vector<double>& bias, int stride, int pad, int& ho,
                                        int& wo) {
    ho = (h + 2 * pad - kh) / stride + 1;
    wo = (w + 2 * pad - kw) / stride + 1;
    std::vector<double> out(static_cast<size_t>(co) * ho * wo, 0.0);
    for (int oc = 0; oc < co; ++oc)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = bias.empty() ? 0.0 : bias[static_cast<size_t>(oc)];
                for (int ic = 0; ic < ci; ++ic)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy * stride + ky - pad;
                            const int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += x[static_cast<size_t>((ic * h + iy) * w + ix)] *
                                   kern[static_cast<size_t>(((oc * ci + ic) * kh + ky) * kw + kx)];
                        }
                out[static_cast<size_t>((oc * ho + oy) * wo + ox)] = acc;
            }
    return out;
}

}  // namespace oracles
