#include <doctest.h>

#include <filesystem>
#include <random>

#include "d24fad/backbone.hpp"
#include "d24fad/serialize.hpp"
#include "d24fad/student.hpp"
#include "test_util.hpp"

using namespace d24fad;
using namespace testutil;

namespace {

TeacherSpec tiny_spec(uint64_t seed = 7) {
    TeacherSpec s;
    s.backbone_name = "tiny";
    s.layer_ids = {"layer1", "layer2", "layer3"};
    s.weights_source = WeightsSource::random_frozen;
    s.input_size = 32;
    s.seed = seed;
    return s;
}

Tensor random_input(std::mt19937_64& rng, int size) {
    Tensor t = random_tensor({3, size, size}, rng, 0.5);
    return t;
}

}  // namespace

TEST_CASE("random_frozen teacher is deterministic per seed") {
    Teacher a = Teacher::load(tiny_spec(7));
    Teacher b = Teacher::load(tiny_spec(7));
    CHECK(a.checksum() == b.checksum());
    Teacher c = Teacher::load(tiny_spec(8));
    CHECK(a.checksum() != c.checksum());
}

TEST_CASE("unknown backbone and bad layer ids are configuration errors") {
    TeacherSpec s = tiny_spec();
    s.backbone_name = "foo";
    CHECK_THROWS_AS(Teacher::load(s), ConfigError);
    s = tiny_spec();
    s.layer_ids = {"layer1", "layer9"};
    CHECK_THROWS_AS(Teacher::load(s), ConfigError);
    s = tiny_spec();
    s.layer_ids = {};
    CHECK_THROWS_AS(Teacher::load(s), ConfigError);
}

TEST_CASE("tiny pyramid shapes follow the stride plan") {
    Teacher t = Teacher::load(tiny_spec());
    const auto shapes = t.level_shapes();
    REQUIRE(shapes.size() == 3);
    CHECK(shapes[0] == std::vector<int>{8, 16, 16});
    CHECK(shapes[1] == std::vector<int>{16, 8, 8});
    CHECK(shapes[2] == std::vector<int>{32, 4, 4});

    std::mt19937_64 rng(51);
    FeaturePyramid p = t.forward(random_input(rng, 32));
    for (size_t i = 0; i < 3; ++i) CHECK(p.level_value(i).shape() == shapes[i]);
}

TEST_CASE("reference backbone at 128 gives the documented stage shapes") {
    TeacherSpec s;
    s.backbone_name = "wide_resnet50_2";
    s.layer_ids = {"layer1", "layer2", "layer3"};
    s.weights_source = WeightsSource::random_frozen;
    s.input_size = 128;
    s.seed = 7;
    Teacher t = Teacher::load(s);
    const auto shapes = t.level_shapes();
    REQUIRE(shapes.size() == 3);
    CHECK(shapes[0] == std::vector<int>{256, 32, 32});
    CHECK(shapes[1] == std::vector<int>{512, 16, 16});
    CHECK(shapes[2] == std::vector<int>{1024, 8, 8});

    // verify by forward pass, batch of 2
    std::mt19937_64 rng(52);
    std::vector<Tensor> batch = {random_input(rng, 128), random_input(rng, 128)};
    auto pyramids = t.extract_pyramid(batch);
    REQUIRE(pyramids.size() == 2);
    for (const auto& p : pyramids)
        for (size_t i = 0; i < 3; ++i) CHECK(p.level_value(i).shape() == shapes[i]);
}

TEST_CASE("extract_pyramid determinism, sensitivity and shape errors") {
    Teacher t = Teacher::load(tiny_spec());
    std::mt19937_64 rng(53);
    Tensor x = random_input(rng, 32);

    auto p1 = t.extract_pyramid({x, x});
    for (size_t i = 0; i < 3; ++i) {
        const Tensor& a = p1[0].level_value(i);
        const Tensor& b = p1[1].level_value(i);
        for (int64_t j = 0; j < a.numel(); ++j) CHECK(a[j] == b[j]);
    }

    // zero vs nonzero input must differ at every level
    Tensor zero({3, 32, 32});
    Tensor nonzero = Tensor::full({3, 32, 32}, 0.8);
    auto pz = t.forward(zero);
    auto pn = t.forward(nonzero);
    for (size_t i = 0; i < 3; ++i) {
        double diff = 0.0;
        for (int64_t j = 0; j < pz.level_value(i).numel(); ++j)
            diff += std::abs(pz.level_value(i)[j] - pn.level_value(i)[j]);
        CHECK(diff > 1e-6);
    }

    CHECK_THROWS_AS(t.forward(Tensor({3, 16, 16})), ShapeError);
}

TEST_CASE("file_path weights round-trip bit-identically; missing file is an I/O error") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "d24fad_weights";
    fs::create_directories(dir);

    Teacher t = Teacher::load(tiny_spec(9));
    std::map<std::string, Tensor> blobs;
    for (const auto& p : t.params().items()) blobs[p.name] = p.value;
    const std::string path = (dir / "tiny_copy.tnz").string();
    write_tensor_file(path, blobs, "{}");

    TeacherSpec file_spec = tiny_spec(9);
    file_spec.weights_source = WeightsSource::file_path;
    file_spec.weights_path = path;
    Teacher t2 = Teacher::load(file_spec);
    CHECK(t2.checksum() == t.checksum());

    file_spec.weights_path = (dir / "nope.tnz").string();
    CHECK_THROWS_AS(Teacher::load(file_spec), IoError);

    // env-var cache dir drives imagenet_pretrained lookups
    TeacherSpec pre = tiny_spec(9);
    pre.weights_source = WeightsSource::imagenet_pretrained;
    setenv("D24FAD_WEIGHTS_DIR", dir.string().c_str(), 1);
    CHECK_THROWS_WITH_AS(Teacher::load(pre),
                         doctest::Contains((dir / "tiny.tnz").string().c_str()), IoError);
    fs::copy_file(path, dir / "tiny.tnz", fs::copy_options::overwrite_existing);
    Teacher t3 = Teacher::load(pre);
    CHECK(t3.checksum() == t.checksum());
    unsetenv("D24FAD_WEIGHTS_DIR");
}

TEST_CASE("student reconstructs the teacher pyramid shapes from the deepest level") {
    Teacher t = Teacher::load(tiny_spec());
    Student s = Student::build(Student::spec_for(t, 1));
    std::mt19937_64 rng(54);
    Tensor x = random_input(rng, 32);
    FeaturePyramid tp = t.forward(x);
    Bound b = bind(s.params());
    FeaturePyramid sp = s.forward(b, ad::constant(tp.levels.back()->value));
    CHECK(sp.source == PyramidSource::student);
    check_shape_duality(tp, sp);

    // repeated evaluation is bit-identical
    FeaturePyramid sp2 = s.forward(b, ad::constant(tp.levels.back()->value));
    for (size_t i = 0; i < sp.size(); ++i)
        for (int64_t j = 0; j < sp.level_value(i).numel(); ++j)
            CHECK(sp.level_value(i)[j] == sp2.level_value(i)[j]);

    CHECK_THROWS_AS(s.forward(b, ad::constant(Tensor({16, 4, 4}))), ShapeError);
}

TEST_CASE("bottleneck student mirrors the reference backbone") {
    TeacherSpec spec;
    spec.backbone_name = "wide_resnet50_2";
    spec.weights_source = WeightsSource::random_frozen;
    spec.input_size = 64;  // smaller run for speed; strides unchanged
    spec.seed = 3;
    Teacher t = Teacher::load(spec);
    Student s = Student::build(Student::spec_for(t, 1));
    CHECK(s.spec().block_kind == "bottleneck");
    std::mt19937_64 rng(55);
    FeaturePyramid tp = t.forward(random_input(rng, 64));
    FeaturePyramid sp = s.forward(bind(s.params()), ad::constant(tp.levels.back()->value));
    check_shape_duality(tp, sp);
}

TEST_CASE("perturbing any single student parameter changes the output") {
    Teacher t = Teacher::load(tiny_spec());
    Student s = Student::build(Student::spec_for(t, 2));
    std::mt19937_64 rng(56);
    FeaturePyramid tp = t.forward(random_input(rng, 32));
    const Tensor deepest = tp.levels.back()->value;

    auto flat_output = [&]() {
        FeaturePyramid sp = s.forward(bind(s.params()), ad::constant(deepest));
        std::vector<double> out;
        for (const auto& lv : sp.levels)
            out.insert(out.end(), lv->value.vec().begin(), lv->value.vec().end());
        return out;
    };
    const std::vector<double> base = flat_output();

    std::mt19937_64 pick(57);
    for (int probe = 0; probe < 12; ++probe) {
        auto& items = s.params().items();
        auto& pt = items[pick() % items.size()];
        const int64_t idx = static_cast<int64_t>(pick() % static_cast<uint64_t>(pt.value.numel()));
        const double saved = pt.value[idx];
        pt.value[idx] = saved + 0.05;
        const std::vector<double> changed = flat_output();
        pt.value[idx] = saved;
        double diff = 0.0;
        for (size_t i = 0; i < base.size(); ++i) diff += std::abs(base[i] - changed[i]);
        INFO(pt.name, "[", idx, "]");
        CHECK(diff > 0.0);
    }
}

TEST_CASE("student backprop matches finite differences on 10 sampled parameters") {
    Teacher t = Teacher::load(tiny_spec());
    Student s = Student::build(Student::spec_for(t, 3));
    std::mt19937_64 rng(58);
    FeaturePyramid tp = t.forward(random_input(rng, 32));
    const Tensor deepest = tp.levels.back()->value;

    // fixed random projection of the pyramid as the scalar objective
    std::vector<Tensor> proj;
    {
        Bound b0 = bind(s.params());
        FeaturePyramid sp = s.forward(b0, ad::constant(deepest));
        for (const auto& lv : sp.levels) proj.push_back(random_tensor(lv->value.shape(), rng));
    }
    auto objective_value = [&]() {
        FeaturePyramid sp = s.forward(bind(s.params()), ad::constant(deepest));
        double acc = 0.0;
        for (size_t i = 0; i < sp.size(); ++i)
            for (int64_t j = 0; j < proj[i].numel(); ++j) acc += proj[i][j] * sp.level_value(i)[j];
        return acc;
    };

    Bound bound = bind(s.params(), true);
    {
        FeaturePyramid sp = s.forward(bound, ad::constant(deepest));
        ad::Var loss;
        for (size_t i = 0; i < sp.size(); ++i) {
            ad::Var term = ad::dot(sp.levels[i], ad::constant(proj[i]));
            loss = loss ? ad::add(loss, term) : term;
        }
        ad::backward(loss);
    }

    std::mt19937_64 pick(59);
    for (int probe = 0; probe < 10; ++probe) {
        auto& items = s.params().items();
        auto& pt = items[pick() % items.size()];
        const int64_t idx = static_cast<int64_t>(pick() % static_cast<uint64_t>(pt.value.numel()));
        const double fd = central_diff(pt.value, idx, 1e-5, objective_value);
        INFO(pt.name, "[", idx, "]");
        CHECK(rel_err(fd, bound.at(pt.name)->grad[idx]) < 1e-4);
    }
}

TEST_CASE("support_forward builds K aligned pyramids and caches transparently") {
    Teacher t = Teacher::load(tiny_spec());
    Student s = Student::build(Student::spec_for(t, 4));
    std::mt19937_64 rng(60);
    Bound b = bind(s.params());

    std::vector<Tensor> supports;
    for (int k = 0; k < 4; ++k) supports.push_back(random_input(rng, 32));
    SupportFeatureBank bank = support_forward(s, b, t, supports, {"a", "b", "c", "d"});
    CHECK(bank.k() == 4);
    const auto shapes = t.level_shapes();
    for (const auto& p : bank.pyramids)
        for (size_t i = 0; i < shapes.size(); ++i) CHECK(p.level_value(i).shape() == shapes[i]);

    // identical support images -> identical bank entries
    SupportFeatureBank twin = support_forward(s, b, t, {supports[0], supports[0]}, {"x", "y"});
    for (size_t i = 0; i < shapes.size(); ++i)
        for (int64_t j = 0; j < twin.pyramids[0].level_value(i).numel(); ++j)
            CHECK(twin.pyramids[0].level_value(i)[j] == twin.pyramids[1].level_value(i)[j]);

    CHECK_THROWS_AS(support_forward(s, b, t, {}, {}), PreconditionError);
}
