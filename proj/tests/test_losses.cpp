#include <doctest.h>

#include <random>

#include "d24fad/losses.hpp"
#include "test_util.hpp"

using namespace d24fad;
using namespace testutil;

TEST_CASE("cosine_sim basic geometry") {
    const double a1[] = {1.0, 0.0}, b1[] = {1.0, 0.0};
    CHECK(cosine_sim(a1, b1) == doctest::Approx(1.0).epsilon(1e-6));
    const double b2[] = {0.0, 1.0};
    CHECK(cosine_sim(a1, b2) == doctest::Approx(0.0).epsilon(1e-12));
    const double b3[] = {-2.0, 0.0};
    CHECK(cosine_sim(a1, b3) == doctest::Approx(-1.0).epsilon(1e-6));
    // symmetry and positive-scale invariance
    const double a4[] = {0.3, -1.2, 0.5}, b4[] = {2.0, 0.1, -0.4};
    const double s1 = cosine_sim(a4, b4);
    CHECK(cosine_sim(b4, a4) == doctest::Approx(s1).epsilon(1e-14));
    const double a4s[] = {3 * 0.3, 3 * -1.2, 3 * 0.5};
    CHECK(cosine_sim(a4s, b4) == doctest::Approx(s1).epsilon(1e-6));
    // zero vector is stabilized, not a crash
    const double z[] = {0.0, 0.0};
    CHECK(std::abs(cosine_sim(z, b1)) < 1e-6);
}

TEST_CASE("tsd identity and orthogonal cases") {
    std::mt19937_64 rng(21);
    auto values = random_pyramid_values(rng);
    FeaturePyramid teacher = pyramid_of(values, PyramidSource::teacher, false);
    FeaturePyramid student = pyramid_of(values, PyramidSource::student, false);
    CHECK(ad::scalar_of(tsd_loss(teacher, student)) == doctest::Approx(0.0).epsilon(1e-6));

    FeaturePyramid t1 = pyramid_of({Tensor({2, 1, 1}, {1.0, 0.0})}, PyramidSource::teacher, false);
    FeaturePyramid s1 = pyramid_of({Tensor({2, 1, 1}, {0.0, 1.0})}, PyramidSource::student, false);
    CHECK(ad::scalar_of(tsd_loss(t1, s1)) == doctest::Approx(1.0).epsilon(1e-6));

    FeaturePyramid bad = pyramid_of({Tensor({3, 1, 1})}, PyramidSource::student, false);
    CHECK_THROWS_AS(tsd_loss(t1, bad), ShapeError);
}

TEST_CASE("tsd matches the scalar-loop oracle to 1e-10") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        auto tvals = random_pyramid_values(rng);
        auto svals = random_pyramid_values(rng);
        FeaturePyramid teacher = pyramid_of(tvals, PyramidSource::teacher, false);
        FeaturePyramid student = pyramid_of(svals, PyramidSource::student, false);
        const double got = ad::scalar_of(tsd_loss(teacher, student));
        const double want = oracles::tsd(to_levels(tvals), to_levels(svals), 1e-8);
        CHECK(std::abs(got - want) < 1e-10);
    }
}

TEST_CASE("ssd identity, half-orthogonal and oracle agreement") {
    std::mt19937_64 rng(23);
    auto qvals = random_pyramid_values(rng);
    FeaturePyramid query = pyramid_of(qvals, PyramidSource::student, false);

    SupportFeatureBank same;
    same.pyramids = {pyramid_of(qvals, PyramidSource::student, false),
                     pyramid_of(qvals, PyramidSource::student, false)};
    same.support_ids = {"a", "b"};
    CHECK(ad::scalar_of(ssd_loss(same, query)) == doctest::Approx(0.0).epsilon(1e-6));

    // K=2 on a single 1x1 level: one support equal, one orthogonal -> 0.5
    FeaturePyramid q1 = pyramid_of({Tensor({2, 1, 1}, {1.0, 0.0})}, PyramidSource::student, false);
    SupportFeatureBank mixed;
    mixed.pyramids = {pyramid_of({Tensor({2, 1, 1}, {1.0, 0.0})}, PyramidSource::student, false),
                      pyramid_of({Tensor({2, 1, 1}, {0.0, 1.0})}, PyramidSource::student, false)};
    mixed.support_ids = {"same", "orth"};
    CHECK(ad::scalar_of(ssd_loss(mixed, q1)) == doctest::Approx(0.5).epsilon(1e-6));

    SupportFeatureBank empty;
    CHECK_THROWS_AS(ssd_loss(empty, q1), PreconditionError);

    for (int trial = 0; trial < 50; ++trial) {
        auto qv = random_pyramid_values(rng);
        std::vector<std::vector<oracles::Level>> slv;
        SupportFeatureBank bank;
        for (int k = 0; k < 3; ++k) {
            auto sv = random_pyramid_values(rng);
            slv.push_back(to_levels(sv));
            bank.pyramids.push_back(pyramid_of(sv, PyramidSource::student, false));
            bank.support_ids.push_back("s" + std::to_string(k));
        }
        const double got = ad::scalar_of(ssd_loss(bank, pyramid_of(qv, PyramidSource::student, false)));
        const double want = oracles::ssd(slv, to_levels(qv), 1e-8);
        CHECK(std::abs(got - want) < 1e-10);
    }
}

TEST_CASE("total_loss combinations") {
    LossConfig cfg;
    cfg.lambda_weight = 0.1;
    CHECK(total_loss(cfg, 2.0, 1.0) == doctest::Approx(1.2).epsilon(1e-12));
    cfg.lambda_weight = 0.0;
    CHECK(total_loss(cfg, 5.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    cfg.lambda_weight = 1.0;
    CHECK(total_loss(cfg, 0.0, 0.0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(total_loss(cfg, std::nan(""), 1.0), NumericError);
    cfg.lambda_weight = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("loss range bounds hold on random pyramids") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        auto tv = random_pyramid_values(rng);
        auto sv = random_pyramid_values(rng);
        const double l = static_cast<double>(tv.size());
        const double tsd = ad::scalar_of(
            tsd_loss(pyramid_of(tv, PyramidSource::teacher, false), pyramid_of(sv, PyramidSource::student, false)));
        CHECK(tsd >= 0.0);
        CHECK(tsd <= 2.0 * l + 1e-9);
    }
}

TEST_CASE("per-location scale invariance of the similarity contribution") {
    std::mt19937_64 rng(32);
    auto tv = random_pyramid_values(rng, 1, 4, 3);  // one level, 4 channels, 3x3
    auto sv = random_pyramid_values(rng, 1, 4, 3);
    const double before = ad::scalar_of(tsd_loss(pyramid_of(tv, PyramidSource::teacher, false),
                                                 pyramid_of(sv, PyramidSource::student, false)));
    // scale the full channel vector at one location by 7
    Tensor scaled = sv[0];
    const int h = scaled.dim(1), w = scaled.dim(2);
    for (int c = 0; c < scaled.dim(0); ++c) scaled.at(c, 1, 2) *= 7.0;
    const double after = ad::scalar_of(tsd_loss(pyramid_of(tv, PyramidSource::teacher, false),
                                                pyramid_of({scaled}, PyramidSource::student, false)));
    (void)h;
    (void)w;
    CHECK(std::abs(before - after) < 1e-6);
}

TEST_CASE("tsd sends no gradient to the teacher; ssd reaches both sides") {
    std::mt19937_64 rng(33);
    auto tv = random_pyramid_values(rng);
    auto sv = random_pyramid_values(rng);
    FeaturePyramid teacher = pyramid_of(tv, PyramidSource::teacher, true);   // deliberately trainable
    FeaturePyramid student = pyramid_of(sv, PyramidSource::student, true);
    ad::backward(tsd_loss(teacher, student));
    for (const auto& lv : teacher.levels) CHECK(lv->grad.numel() == 0);  // never touched
    bool any_student = false;
    for (const auto& lv : student.levels)
        for (int64_t i = 0; lv->grad.numel() && i < lv->grad.numel(); ++i)
            any_student = any_student || lv->grad[i] != 0.0;
    CHECK(any_student);

    auto qv = random_pyramid_values(rng);
    FeaturePyramid query = pyramid_of(qv, PyramidSource::student, true);
    SupportFeatureBank bank;
    bank.pyramids.push_back(pyramid_of(sv, PyramidSource::student, true));
    bank.support_ids = {"s0"};
    ad::backward(ssd_loss(bank, query));
    CHECK(bank.pyramids[0].levels[0]->grad.numel() > 0);
    CHECK(query.levels[0]->grad.numel() > 0);

    // stop_grad_support flag detaches the support side
    FeaturePyramid query2 = pyramid_of(qv, PyramidSource::student, true);
    SupportFeatureBank bank2;
    bank2.pyramids.push_back(pyramid_of(sv, PyramidSource::student, true));
    bank2.support_ids = {"s0"};
    ad::backward(ssd_loss(bank2, query2, 1e-8, true));
    CHECK(bank2.pyramids[0].levels[0]->grad.numel() == 0);
    CHECK(query2.levels[0]->grad.numel() > 0);
}

TEST_CASE("loss gradients match finite differences at 1e-4") {
    std::mt19937_64 rng(34);
    auto tv = random_pyramid_values(rng, 2, 3, 2);
    auto sv = random_pyramid_values(rng, 2, 3, 2);

    FeaturePyramid student = pyramid_of(sv, PyramidSource::student, true);
    ad::backward(tsd_loss(pyramid_of(tv, PyramidSource::teacher, false), student));

    std::mt19937_64 pick(35);
    for (int probe = 0; probe < 20; ++probe) {
        const size_t lvl = pick() % sv.size();
        Tensor mutable_level = sv[lvl];
        const int64_t idx = static_cast<int64_t>(pick() % static_cast<uint64_t>(mutable_level.numel()));
        const double fd = central_diff(mutable_level, idx, 1e-5, [&]() {
            std::vector<Tensor> probe_vals = sv;
            probe_vals[lvl] = mutable_level;
            return ad::scalar_of(tsd_loss(pyramid_of(tv, PyramidSource::teacher, false),
                                          pyramid_of(probe_vals, PyramidSource::student, false)));
        });
        CHECK(rel_err(fd, student.levels[lvl]->grad[idx]) < 1e-4);
    }
}
