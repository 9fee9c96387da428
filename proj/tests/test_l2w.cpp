#include <doctest.h>

#include <filesystem>
#include <random>

#include "d24fad/l2w.hpp"
#include "test_util.hpp"

using namespace d24fad;
using namespace testutil;

namespace {

SupportFeatureBank bank_of(const std::vector<std::vector<Tensor>>& supports, bool trainable = false) {
    SupportFeatureBank b;
    for (size_t k = 0; k < supports.size(); ++k) {
        b.pyramids.push_back(pyramid_of(supports[k], PyramidSource::student, trainable));
        b.support_ids.push_back("s" + std::to_string(k));
    }
    return b;
}

std::vector<std::vector<int>> shapes_of(const std::vector<Tensor>& vals) {
    std::vector<std::vector<int>> out;
    for (const auto& t : vals) out.push_back(t.shape());
    return out;
}

// force every projection to the exact identity so the scalar oracle applies
void set_identity_projections(L2WParams& p) {
    for (auto& pt : p.params().items()) {
        if (pt.name.find(".w") == std::string::npos || pt.value.ndim() != 4) continue;
        const int c = pt.value.dim(0);
        for (int o = 0; o < c; ++o)
            for (int i = 0; i < c; ++i) pt.value[static_cast<int64_t>(o) * c + i] = o == i ? 1.0 : 0.0;
    }
}

}  // namespace

TEST_CASE("identical supports get exactly uniform weights; K=1 degenerates") {
    std::mt19937_64 rng(41);
    auto qv = random_pyramid_values(rng);
    auto sv = random_pyramid_values(rng);
    for (auto variant : {L2WVariant::scaled_dot, L2WVariant::gaussian, L2WVariant::embedded_gaussian,
                         L2WVariant::concatenation}) {
        L2WParams p = L2WParams::build(variant, shapes_of(qv), 3);
        FeaturePyramid q = pyramid_of(qv, PyramidSource::student, false);

        SupportWeights w2 = compute_weights(p, q, bank_of({sv, sv}));
        for (const auto& level : w2.per_level) {
            CHECK(level[0] == level[1]);  // bitwise equal logits -> bitwise equal weights
            CHECK(level[0] + level[1] == doctest::Approx(1.0).epsilon(1e-12));
        }

        SupportWeights w1 = compute_weights(p, q, bank_of({sv}));
        for (const auto& level : w1.per_level) CHECK(level[0] == 1.0);
    }
}

TEST_CASE("scaled_dot with identity projection matches the scalar oracle to 1e-10") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 25; ++trial) {
        auto qv = random_pyramid_values(rng);
        std::vector<std::vector<Tensor>> sv = {random_pyramid_values(rng), random_pyramid_values(rng),
                                               random_pyramid_values(rng)};
        L2WParams p = L2WParams::build(L2WVariant::scaled_dot, shapes_of(qv), 4);
        set_identity_projections(p);
        SupportWeights got =
            compute_weights(p, pyramid_of(qv, PyramidSource::student, false), bank_of(sv));

        for (size_t i = 0; i < qv.size(); ++i) {
            const int c = qv[i].dim(0);
            std::vector<std::vector<double>> identity(static_cast<size_t>(c),
                                                      std::vector<double>(static_cast<size_t>(c), 0.0));
            for (int j = 0; j < c; ++j) identity[static_cast<size_t>(j)][static_cast<size_t>(j)] = 1.0;
            std::vector<oracles::Level> support_level;
            for (const auto& s : sv) support_level.push_back(to_level(s[i]));
            auto want = oracles::l2w_weights_level(support_level, to_level(qv[i]), identity);
            for (size_t k = 0; k < want.size(); ++k) CHECK(std::abs(got.per_level[i][k] - want[k]) < 1e-10);
        }
    }
}

TEST_CASE("ssd_l2w: identical supports give zero loss; K=1 equals unweighted ssd") {
    std::mt19937_64 rng(43);
    auto qv = random_pyramid_values(rng);
    FeaturePyramid q = pyramid_of(qv, PyramidSource::student, false);

    L2WParams p = L2WParams::build(L2WVariant::scaled_dot, shapes_of(qv), 5);
    Bound b = bind(p.params());
    CHECK(ad::scalar_of(ssd_l2w_loss(p, b, q, bank_of({qv, qv}))) == doctest::Approx(0.0).epsilon(1e-8));

    auto sv = random_pyramid_values(rng);
    const double weighted = ad::scalar_of(ssd_l2w_loss(p, b, q, bank_of({sv})));
    const double plain = ad::scalar_of(ssd_loss(bank_of({sv}), q));
    CHECK(std::abs(weighted - plain) < 1e-8);
}

TEST_CASE("ssd_l2w matches the explicit weighted-sum oracle to 1e-10") {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 25; ++trial) {
        auto qv = random_pyramid_values(rng);
        std::vector<std::vector<Tensor>> sv = {random_pyramid_values(rng), random_pyramid_values(rng)};
        L2WParams p = L2WParams::build(L2WVariant::scaled_dot, shapes_of(qv), 6);
        set_identity_projections(p);
        FeaturePyramid q = pyramid_of(qv, PyramidSource::student, false);
        SupportFeatureBank bank = bank_of(sv);

        const double got = ad::scalar_of(ssd_l2w_loss(p, bind(p.params()), q, bank));

        std::vector<std::vector<double>> weights;
        std::vector<std::vector<oracles::Level>> supports_by_k;
        for (const auto& s : sv) supports_by_k.push_back(to_levels(s));
        for (size_t i = 0; i < qv.size(); ++i) {
            const int c = qv[i].dim(0);
            std::vector<std::vector<double>> identity(static_cast<size_t>(c),
                                                      std::vector<double>(static_cast<size_t>(c), 0.0));
            for (int j = 0; j < c; ++j) identity[static_cast<size_t>(j)][static_cast<size_t>(j)] = 1.0;
            std::vector<oracles::Level> support_level;
            for (const auto& s : sv) support_level.push_back(to_level(s[i]));
            weights.push_back(oracles::l2w_weights_level(support_level, to_level(qv[i]), identity));
        }
        const double want = oracles::ssd_l2w(supports_by_k, to_levels(qv), weights, 1e-8);
        CHECK(std::abs(got - want) < 1e-10);
    }
}

TEST_CASE("weights normalize and permutation acts equivariantly") {
    std::mt19937_64 rng(45);
    for (auto variant : {L2WVariant::scaled_dot, L2WVariant::gaussian, L2WVariant::embedded_gaussian,
                         L2WVariant::concatenation}) {
        auto qv = random_pyramid_values(rng);
        std::vector<std::vector<Tensor>> sv = {random_pyramid_values(rng), random_pyramid_values(rng),
                                               random_pyramid_values(rng), random_pyramid_values(rng)};
        L2WParams p = L2WParams::build(variant, shapes_of(qv), 7);
        FeaturePyramid q = pyramid_of(qv, PyramidSource::student, false);

        SupportWeights w = compute_weights(p, q, bank_of(sv));
        w.validate(1e-6);

        const std::vector<size_t> perm = {2, 0, 3, 1};
        std::vector<std::vector<Tensor>> sv_perm;
        for (size_t k : perm) sv_perm.push_back(sv[k]);
        SupportWeights wp = compute_weights(p, q, bank_of(sv_perm));
        for (size_t i = 0; i < w.per_level.size(); ++i)
            for (size_t k = 0; k < perm.size(); ++k)
                CHECK(std::abs(wp.per_level[i][k] - w.per_level[i][perm[k]]) < 1e-12);

        Bound b = bind(p.params());
        const double loss = ad::scalar_of(ssd_l2w_loss(p, b, q, bank_of(sv)));
        const double loss_perm = ad::scalar_of(ssd_l2w_loss(p, b, q, bank_of(sv_perm)));
        CHECK(std::abs(loss - loss_perm) < 1e-8);
    }
}

TEST_CASE("scaled_dot and embedded_gaussian rank supports identically with identity projections") {
    std::mt19937_64 rng(46);
    int checked = 0;
    for (int trial = 0; trial < 30; ++trial) {
        // small features keep the exponentiated logits well-separated
        auto qv = random_pyramid_values(rng, 2, 3, 2);
        for (auto& t : qv)
            for (int64_t i = 0; i < t.numel(); ++i) t[i] *= 0.3;
        std::vector<std::vector<Tensor>> sv;
        for (int k = 0; k < 3; ++k) {
            auto s = random_pyramid_values(rng, 2, 3, 2);
            for (auto& t : s)
                for (int64_t i = 0; i < t.numel(); ++i) t[i] *= 0.3;
            sv.push_back(std::move(s));
        }
        L2WParams pd = L2WParams::build(L2WVariant::scaled_dot, shapes_of(qv), 8);
        L2WParams pg = L2WParams::build(L2WVariant::embedded_gaussian, shapes_of(qv), 8);
        set_identity_projections(pd);
        set_identity_projections(pg);
        FeaturePyramid q = pyramid_of(qv, PyramidSource::student, false);
        SupportWeights wd = compute_weights(pd, q, bank_of(sv));
        SupportWeights wg = compute_weights(pg, q, bank_of(sv));

        for (size_t i = 0; i < wd.per_level.size(); ++i) {
            // require separated weights before comparing the ordering
            bool distinct = true;
            for (size_t a = 0; a < wd.per_level[i].size(); ++a)
                for (size_t b2 = a + 1; b2 < wd.per_level[i].size(); ++b2)
                    distinct = distinct && std::abs(wd.per_level[i][a] - wd.per_level[i][b2]) > 1e-6;
            if (!distinct) continue;
            auto argsort = [](const std::vector<double>& v) {
                std::vector<size_t> idx(v.size());
                for (size_t j = 0; j < v.size(); ++j) idx[j] = j;
                std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b2) { return v[a] < v[b2]; });
                return idx;
            };
            CHECK(argsort(wd.per_level[i]) == argsort(wg.per_level[i]));
            ++checked;
        }
    }
    CHECK(checked > 20);
}

TEST_CASE("gradients flow through projections and both feature sides") {
    std::mt19937_64 rng(47);
    auto qv = random_pyramid_values(rng, 2, 3, 2);
    std::vector<std::vector<Tensor>> sv = {random_pyramid_values(rng, 2, 3, 2),
                                           random_pyramid_values(rng, 2, 3, 2)};
    for (auto variant : {L2WVariant::scaled_dot, L2WVariant::embedded_gaussian, L2WVariant::concatenation}) {
        L2WParams p = L2WParams::build(variant, shapes_of(qv), 9);
        Bound b = bind(p.params(), true);
        FeaturePyramid q = pyramid_of(qv, PyramidSource::student, true);
        SupportFeatureBank bank = bank_of(sv, true);
        ad::backward(ssd_l2w_loss(p, b, q, bank));
        for (const auto& [name, v] : b.vars) {
            INFO(name);
            CHECK(v->grad.numel() > 0);
        }
        CHECK(q.levels[0]->grad.numel() > 0);
        CHECK(bank.pyramids[0].levels[0]->grad.numel() > 0);
    }
}

TEST_CASE("l2w gradients match finite differences at 1e-4") {
    std::mt19937_64 rng(48);
    auto qv = random_pyramid_values(rng, 2, 3, 2);
    std::vector<std::vector<Tensor>> sv = {random_pyramid_values(rng, 2, 3, 2),
                                           random_pyramid_values(rng, 2, 3, 2),
                                           random_pyramid_values(rng, 2, 3, 2)};

    L2WParams p = L2WParams::build(L2WVariant::scaled_dot, shapes_of(qv), 10);
    Bound bound = bind(p.params(), true);
    FeaturePyramid q = pyramid_of(qv, PyramidSource::student, true);
    SupportFeatureBank bank = bank_of(sv, true);
    ad::backward(ssd_l2w_loss(p, bound, q, bank));

    auto loss_now = [&]() {
        return ad::scalar_of(ssd_l2w_loss(p, bind(p.params()),
                                          pyramid_of(qv, PyramidSource::student, false), bank_of(sv)));
    };

    std::mt19937_64 pick(49);
    // projection parameters
    for (int probe = 0; probe < 20; ++probe) {
        auto& items = p.params().items();
        auto& pt = items[pick() % items.size()];
        const int64_t idx = static_cast<int64_t>(pick() % static_cast<uint64_t>(pt.value.numel()));
        const double fd = central_diff(pt.value, idx, 1e-5, loss_now);
        CHECK(rel_err(fd, bound.at(pt.name)->grad[idx]) < 1e-4);
    }
    // query features
    for (int probe = 0; probe < 20; ++probe) {
        const size_t lvl = pick() % qv.size();
        const int64_t idx = static_cast<int64_t>(pick() % static_cast<uint64_t>(qv[lvl].numel()));
        const double fd = central_diff(qv[lvl], idx, 1e-5, loss_now);
        CHECK(rel_err(fd, q.levels[lvl]->grad[idx]) < 1e-4);
    }
    // support features
    for (int probe = 0; probe < 20; ++probe) {
        const size_t k = pick() % sv.size();
        const size_t lvl = pick() % sv[k].size();
        const int64_t idx = static_cast<int64_t>(pick() % static_cast<uint64_t>(sv[k][lvl].numel()));
        const double fd = central_diff(sv[k][lvl], idx, 1e-5, loss_now);
        CHECK(rel_err(fd, bank.pyramids[k].levels[lvl]->grad[idx]) < 1e-4);
    }
}

TEST_CASE("a support equal to the query outweighs independent noise") {
    // scaled_dot with identity projection, 200 seeded draws
    int wins = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        std::mt19937_64 rng(1000 + static_cast<uint64_t>(t));
        auto qv = random_pyramid_values(rng, 2, 3, 2);
        auto noise = random_pyramid_values(rng, 2, 3, 2);
        L2WParams p = L2WParams::build(L2WVariant::scaled_dot, shapes_of(qv), 11);
        set_identity_projections(p);
        SupportWeights w =
            compute_weights(p, pyramid_of(qv, PyramidSource::student, false), bank_of({qv, noise}));
        bool all_levels = true;
        for (const auto& level : w.per_level) all_levels = all_levels && level[0] > level[1];
        wins += all_levels ? 1 : 0;
    }
    CHECK(wins >= static_cast<int>(0.95 * trials));
}

TEST_CASE("weight export round-trips and has one record per level") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "d24fad_l2w";
    fs::create_directories(dir);
    SupportWeights w;
    w.per_level = {{0.5, 0.5}, {0.25, 0.75}, {0.125, 0.875}};
    w.support_ids = {"img_a.pgm", "img_b.pgm"};
    const std::string path = (dir / "weights.jsonl").string();
    export_weights(w, "episode_7", path);

    auto records = parse_weight_records(path);
    REQUIRE(records.size() == 3);
    for (size_t i = 0; i < records.size(); ++i) {
        CHECK(records[i].episode_id == "episode_7");
        CHECK(records[i].level_index == static_cast<int>(i));
        CHECK(records[i].support_ids == w.support_ids);
        REQUIRE(records[i].weights.size() == 2);
        for (size_t k = 0; k < 2; ++k)
            CHECK(std::abs(records[i].weights[k] - w.per_level[i][k]) < 1e-9);
    }
    CHECK_THROWS_AS(export_weights(w, "x", (dir / "no_such_dir" / "w.jsonl").string()), IoError);
}
