#include "d24fad/student.hpp"

#include <cmath>

#include "d24fad/rng.hpp"

namespace d24fad {

namespace {

void add_conv(ParamSet& p, const std::string& name, int cout, int cin, int k) {
    p.add(name + ".w", Tensor({cout, cin, k, k}));
    p.add(name + ".b", Tensor({cout}));
}

void add_block(ParamSet& p, const std::string& prefix, int c, bool bottleneck) {
    if (bottleneck) {
        add_conv(p, prefix + ".conv1", c / 4, c, 1);
        add_conv(p, prefix + ".conv2", c / 4, c / 4, 3);
        add_conv(p, prefix + ".conv3", c, c / 4, 1);
    } else {
        add_conv(p, prefix + ".conv1", c, c, 3);
        add_conv(p, prefix + ".conv2", c, c, 3);
    }
}

using ad::Var;

Var conv(const Bound& P, const Var& x, const std::string& name, int stride, int pad) {
    return ad::conv2d(x, P.at(name + ".w"), P.at(name + ".b"), stride, pad);
}

Var block_fwd(const Bound& P, const Var& x, const std::string& prefix, bool bottleneck) {
    Var h;
    if (bottleneck) {
        h = ad::relu(conv(P, x, prefix + ".conv1", 1, 0));
        h = ad::relu(conv(P, h, prefix + ".conv2", 1, 1));
        h = conv(P, h, prefix + ".conv3", 1, 0);
    } else {
        h = ad::relu(conv(P, x, prefix + ".conv1", 1, 1));
        h = conv(P, h, prefix + ".conv2", 1, 1);
    }
    return ad::relu(ad::add(h, x));
}

}  // namespace

StudentSpec Student::spec_for(const Teacher& teacher, uint64_t seed) {
    StudentSpec s;
    s.layer_ids = teacher.tapped_ids();
    s.channel_plan = teacher.tapped_channels();
    s.upsample_factor = 2;
    s.seed = seed;
    s.block_kind = teacher.info().bottleneck ? "bottleneck" : "basic";
    return s;
}

Student Student::build(const StudentSpec& spec) {
    if (spec.channel_plan.empty()) throw ConfigError("student channel_plan must be non-empty");
    if (spec.layer_ids.size() != spec.channel_plan.size())
        throw ConfigError("student layer_ids/channel_plan size mismatch");
    if (spec.upsample_factor < 2) throw ConfigError("upsample_factor must be >= 2");
    const bool bottleneck = spec.block_kind == "bottleneck";
    if (!bottleneck && spec.block_kind != "basic")
        throw ConfigError("unknown student block_kind: " + spec.block_kind);
    for (int c : spec.channel_plan) {
        if (c < 1) throw ConfigError("channel_plan entries must be positive");
        if (bottleneck && c % 4 != 0) throw ConfigError("bottleneck blocks need channels divisible by 4");
    }

    Student st;
    st.spec_ = spec;
    const int levels = static_cast<int>(spec.channel_plan.size());
    add_block(st.params_, "dec.stage" + std::to_string(levels), spec.channel_plan.back(), bottleneck);
    for (int i = levels - 1; i >= 1; --i) {
        add_conv(st.params_, "dec.up" + std::to_string(i), spec.channel_plan[static_cast<size_t>(i - 1)],
                 spec.channel_plan[static_cast<size_t>(i)], 1);
        add_block(st.params_, "dec.stage" + std::to_string(i), spec.channel_plan[static_cast<size_t>(i - 1)],
                  bottleneck);
    }

    // fan-in-scaled init; block output convs damped so stages start near the
    // identity mapping of their skip path
    GaussianStream g(mix_keys(spec.seed, "student_init"));
    for (auto& pt : st.params_.items()) {
        Tensor& t = pt.value;
        if (t.ndim() != 4) continue;  // biases stay zero
        const double fan_in = static_cast<double>(t.dim(1)) * t.dim(2) * t.dim(3);
        double scale = std::sqrt(2.0 / fan_in);
        const bool is_block_out = pt.name.find(bottleneck ? ".conv3.w" : ".conv2.w") != std::string::npos;
        if (is_block_out) scale *= 0.25;
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = g.next() * scale;
    }
    return st;
}

FeaturePyramid Student::forward(const Bound& bound, const ad::Var& deepest) const {
    const Tensor& in = deepest->value;
    const int levels = static_cast<int>(spec_.channel_plan.size());
    if (in.ndim() != 3 || in.dim(0) != spec_.channel_plan.back())
        throw ShapeError("student input must have " + std::to_string(spec_.channel_plan.back()) +
                         " channels, got " + in.shape_str());

    const bool bottleneck = spec_.block_kind == "bottleneck";
    std::vector<ad::Var> out(static_cast<size_t>(levels));
    Var h = block_fwd(bound, deepest, "dec.stage" + std::to_string(levels), bottleneck);
    out[static_cast<size_t>(levels - 1)] = h;
    for (int i = levels - 1; i >= 1; --i) {
        h = ad::upsample_nearest(h, spec_.upsample_factor);
        h = conv(bound, h, "dec.up" + std::to_string(i), 1, 0);
        h = block_fwd(bound, h, "dec.stage" + std::to_string(i), bottleneck);
        out[static_cast<size_t>(i - 1)] = h;
    }

    FeaturePyramid pyr;
    pyr.levels = std::move(out);
    pyr.layer_ids = spec_.layer_ids;
    pyr.source = PyramidSource::student;
    pyr.validate();
    return pyr;
}

SupportFeatureBank support_forward(const Student& student, const Bound& bound, const Teacher& teacher,
                                   const std::vector<Tensor>& preprocessed_supports,
                                   const std::vector<std::string>& support_ids,
                                   const std::string& task_id) {
    if (preprocessed_supports.empty()) throw PreconditionError("support set must be non-empty");
    std::vector<Tensor> deepest;
    deepest.reserve(preprocessed_supports.size());
    for (const auto& s : preprocessed_supports) {
        FeaturePyramid tp = teacher.forward(s);
        deepest.push_back(tp.levels.back()->value);
    }
    return bank_from_deepest(student, bound, deepest, support_ids, task_id);
}

SupportFeatureBank bank_from_deepest(const Student& student, const Bound& bound,
                                     const std::vector<Tensor>& deepest_features,
                                     const std::vector<std::string>& support_ids,
                                     const std::string& task_id) {
    if (deepest_features.empty()) throw PreconditionError("support set must be non-empty");
    SupportFeatureBank bank;
    bank.task_id = task_id;
    bank.support_ids = support_ids;
    if (bank.support_ids.size() != deepest_features.size()) {
        bank.support_ids.clear();
        for (size_t i = 0; i < deepest_features.size(); ++i)
            bank.support_ids.push_back("support_" + std::to_string(i));
    }
    for (const auto& d : deepest_features)
        bank.pyramids.push_back(student.forward(bound, ad::constant(d)));
    return bank;
}

}  // namespace d24fad
