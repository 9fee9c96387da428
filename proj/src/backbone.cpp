#include "d24fad/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>

#include "d24fad/image.hpp"
#include "d24fad/rng.hpp"
#include "d24fad/serialize.hpp"

namespace d24fad {

void FeaturePyramid::validate() const {
    if (levels.empty()) throw ShapeError("pyramid has no levels");
    if (levels.size() != layer_ids.size()) throw ShapeError("pyramid layer_ids/levels mismatch");
    int prev_h = 1 << 30, prev_w = 1 << 30;
    for (const auto& lv : levels) {
        const Tensor& t = lv->value;
        if (t.ndim() != 3 || t.dim(0) < 1 || t.dim(1) < 1 || t.dim(2) < 1)
            throw ShapeError("pyramid level must be (C,H,W) with positive dims, got " + t.shape_str());
        if (t.dim(1) > prev_h || t.dim(2) > prev_w)
            throw ShapeError("pyramid spatial size must be non-increasing with depth");
        prev_h = t.dim(1);
        prev_w = t.dim(2);
    }
}

void check_shape_duality(const FeaturePyramid& teacher_pyr, const FeaturePyramid& student_pyr) {
    if (teacher_pyr.size() != student_pyr.size())
        throw ShapeError("teacher/student pyramid level counts differ");
    for (size_t i = 0; i < teacher_pyr.size(); ++i)
        require_same_shape(teacher_pyr.level_value(i), student_pyr.level_value(i), "pyramid level");
}

std::string to_string(WeightsSource s) {
    switch (s) {
        case WeightsSource::imagenet_pretrained: return "imagenet_pretrained";
        case WeightsSource::random_frozen: return "random_frozen";
        case WeightsSource::file_path: return "file_path";
    }
    return "?";
}

WeightsSource weights_source_from(const std::string& s) {
    if (s == "imagenet_pretrained") return WeightsSource::imagenet_pretrained;
    if (s == "random_frozen") return WeightsSource::random_frozen;
    if (s == "file_path") return WeightsSource::file_path;
    throw ConfigError("unknown weights_source: " + s);
}

const std::vector<BackboneInfo>& registered_backbones() {
    static const std::vector<BackboneInfo> kRegistry = {
        BackboneInfo{"wide_resnet50_2",
                     {"layer1", "layer2", "layer3"},
                     {256, 512, 1024},
                     true,
                     {0.485, 0.456, 0.406},
                     {0.229, 0.224, 0.225}},
        BackboneInfo{"tiny",
                     {"layer1", "layer2", "layer3"},
                     {8, 16, 32},
                     false,
                     {0.5, 0.5, 0.5},
                     {0.5, 0.5, 0.5}},
    };
    return kRegistry;
}

const BackboneInfo& find_backbone(const std::string& name) {
    for (const auto& b : registered_backbones())
        if (b.name == name) return b;
    throw ConfigError("unknown backbone name \"" + name + "\"");
}

std::string weights_cache_dir() {
    if (const char* env = std::getenv("D24FAD_WEIGHTS_DIR"); env && *env) return env;
    if (const char* home = std::getenv("HOME"); home && *home)
        return std::string(home) + "/.cache/d24fad";
    return "./d24fad_weights";
}

namespace {

struct BlockDef {
    std::string prefix;
    int cin = 0, cmid = 0, cout = 0, stride = 1;
    bool down = false;
};

struct StageDef {
    std::string id;
    std::vector<BlockDef> blocks;
};

struct ArchDef {
    bool bottleneck = false;
    int stem_out = 0, stem_k = 0, stem_stride = 0, stem_pad = 0;
    bool stem_pool = false;  // 3x3/2 max pool after the stem conv
    std::vector<StageDef> stages;
};

ArchDef make_arch(const BackboneInfo& info) {
    ArchDef a;
    a.bottleneck = info.bottleneck;
    if (info.name == "wide_resnet50_2") {
        a.stem_out = 64;
        a.stem_k = 7;
        a.stem_stride = 2;
        a.stem_pad = 3;
        a.stem_pool = true;
        const int block_counts[3] = {3, 4, 6};
        const int mids[3] = {128, 256, 512};
        int cin = 64;
        for (int s = 0; s < 3; ++s) {
            StageDef st;
            st.id = info.stages[static_cast<size_t>(s)];
            const int cout = info.stage_channels[static_cast<size_t>(s)];
            for (int j = 0; j < block_counts[s]; ++j) {
                BlockDef b;
                b.prefix = st.id + ".b" + std::to_string(j);
                b.cin = j == 0 ? cin : cout;
                b.cmid = mids[s];
                b.cout = cout;
                b.stride = (j == 0 && s > 0) ? 2 : 1;
                b.down = j == 0;  // channel change on every first block
                st.blocks.push_back(b);
            }
            a.stages.push_back(std::move(st));
            cin = cout;
        }
    } else if (info.name == "tiny") {
        a.stem_out = 8;
        a.stem_k = 3;
        a.stem_stride = 2;
        a.stem_pad = 1;
        a.stem_pool = false;
        int cin = 8;
        for (int s = 0; s < 3; ++s) {
            StageDef st;
            st.id = info.stages[static_cast<size_t>(s)];
            const int cout = info.stage_channels[static_cast<size_t>(s)];
            BlockDef b;
            b.prefix = st.id + ".b0";
            b.cin = cin;
            b.cout = cout;
            b.stride = s == 0 ? 1 : 2;
            b.down = b.cin != b.cout || b.stride != 1;
            st.blocks.push_back(b);
            a.stages.push_back(std::move(st));
            cin = cout;
        }
    } else {
        throw ConfigError("no architecture definition for backbone " + info.name);
    }
    return a;
}

void add_conv(ParamSet& p, const std::string& name, int cout, int cin, int k, bool bias) {
    p.add(name + ".w", Tensor({cout, cin, k, k}));
    if (bias) p.add(name + ".b", Tensor({cout}));
}

void add_bn(ParamSet& p, const std::string& name, int c) {
    p.add(name + ".s", Tensor({c}));
    p.add(name + ".t", Tensor({c}));
}

void build_params(ParamSet& p, const ArchDef& a) {
    const bool bn = a.bottleneck;  // wide uses folded batch-norm, tiny uses conv bias
    add_conv(p, "stem.conv", a.stem_out, 3, a.stem_k, !bn);
    if (bn) add_bn(p, "stem.bn", a.stem_out);
    for (const auto& st : a.stages) {
        for (const auto& b : st.blocks) {
            if (a.bottleneck) {
                add_conv(p, b.prefix + ".conv1", b.cmid, b.cin, 1, false);
                add_bn(p, b.prefix + ".bn1", b.cmid);
                add_conv(p, b.prefix + ".conv2", b.cmid, b.cmid, 3, false);
                add_bn(p, b.prefix + ".bn2", b.cmid);
                add_conv(p, b.prefix + ".conv3", b.cout, b.cmid, 1, false);
                add_bn(p, b.prefix + ".bn3", b.cout);
                if (b.down) {
                    add_conv(p, b.prefix + ".down", b.cout, b.cin, 1, false);
                    add_bn(p, b.prefix + ".downbn", b.cout);
                }
            } else {
                add_conv(p, b.prefix + ".conv1", b.cout, b.cin, 3, true);
                add_conv(p, b.prefix + ".conv2", b.cout, b.cout, 3, true);
                if (b.down) add_conv(p, b.prefix + ".down", b.cout, b.cin, 1, true);
            }
        }
    }
}

void init_random_frozen(ParamSet& p, uint64_t seed) {
    GaussianStream g(mix_keys(seed, "teacher_init"));
    for (auto& pt : p.items()) {
        Tensor& t = pt.value;
        const bool is_conv_w = pt.name.size() > 2 && pt.name.rfind(".w") == pt.name.size() - 2;
        if (is_conv_w && t.ndim() == 4) {
            const double fan_in = static_cast<double>(t.dim(1)) * t.dim(2) * t.dim(3);
            const double stdev = std::sqrt(2.0 / fan_in);
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = g.next() * stdev;
        } else if (pt.name.rfind(".s") == pt.name.size() - 2) {
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = 1.0;  // folded BN scale
        } else {
            // biases and folded BN shifts start at zero
        }
    }
}

void fill_from_file(ParamSet& p, const std::string& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw IoError("missing weight file: " + path);
    TensorFile tf = read_tensor_file(path);
    for (auto& pt : p.items()) {
        auto it = tf.tensors.find(pt.name);
        if (it == tf.tensors.end())
            throw StateError("weight file " + path + " lacks tensor " + pt.name);
        if (it->second.shape() != pt.value.shape())
            throw StateError("weight file " + path + " tensor " + pt.name + " has shape " +
                             it->second.shape_str() + ", expected " + pt.value.shape_str());
        pt.value = it->second;
    }
}

using ad::Var;

Var conv(const Bound& P, const Var& x, const std::string& name, int stride, int pad, bool bias) {
    return ad::conv2d(x, P.at(name + ".w"), bias ? P.at(name + ".b") : Var(), stride, pad);
}

Var bn(const Bound& P, const Var& x, const std::string& name) {
    return ad::channel_affine(x, P.at(name + ".s"), P.at(name + ".t"));
}

Var bottleneck_fwd(const Bound& P, const Var& x, const BlockDef& b) {
    Var h = ad::relu(bn(P, conv(P, x, b.prefix + ".conv1", 1, 0, false), b.prefix + ".bn1"));
    h = ad::relu(bn(P, conv(P, h, b.prefix + ".conv2", b.stride, 1, false), b.prefix + ".bn2"));
    h = bn(P, conv(P, h, b.prefix + ".conv3", 1, 0, false), b.prefix + ".bn3");
    Var sc = b.down ? bn(P, conv(P, x, b.prefix + ".down", b.stride, 0, false), b.prefix + ".downbn") : x;
    return ad::relu(ad::add(h, sc));
}

Var basic_fwd(const Bound& P, const Var& x, const BlockDef& b) {
    Var h = ad::relu(conv(P, x, b.prefix + ".conv1", b.stride, 1, true));
    h = conv(P, h, b.prefix + ".conv2", 1, 1, true);
    Var sc = b.down ? conv(P, x, b.prefix + ".down", b.stride, 0, true) : x;
    return ad::relu(ad::add(h, sc));
}

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

std::vector<int> resolve_taps(const BackboneInfo& info, const std::vector<std::string>& layer_ids) {
    if (layer_ids.empty()) throw ConfigError("teacher layer_ids must be non-empty");
    std::set<std::string> seen;
    for (const auto& id : layer_ids) {
        if (std::find(info.stages.begin(), info.stages.end(), id) == info.stages.end())
            throw ConfigError("layer id \"" + id + "\" does not name a stage of " + info.name);
        if (!seen.insert(id).second) throw ConfigError("duplicate layer id \"" + id + "\"");
    }
    std::vector<int> taps;
    for (size_t s = 0; s < info.stages.size(); ++s)
        if (seen.count(info.stages[s])) taps.push_back(static_cast<int>(s));
    return taps;
}

}  // namespace

std::vector<std::vector<int>> teacher_level_shapes(const TeacherSpec& spec) {
    const BackboneInfo& info = find_backbone(spec.backbone_name);
    const std::vector<int> taps = resolve_taps(info, spec.layer_ids);
    const ArchDef arch = make_arch(info);
    int s = conv_out(spec.input_size, arch.stem_k, arch.stem_stride, arch.stem_pad);
    if (arch.stem_pool) s = conv_out(s, 3, 2, 1);
    std::vector<std::vector<int>> shapes;
    for (size_t i = 0; i < arch.stages.size(); ++i) {
        for (const auto& b : arch.stages[i].blocks)
            if (b.stride != 1) s = conv_out(s, 3, b.stride, 1);
        if (std::find(taps.begin(), taps.end(), static_cast<int>(i)) != taps.end())
            shapes.push_back({info.stage_channels[i], s, s});
    }
    return shapes;
}

Teacher Teacher::load(const TeacherSpec& spec) {
    Teacher t;
    t.spec_ = spec;
    t.info_ = &find_backbone(spec.backbone_name);

    // canonical depth order, regardless of how the spec listed them
    for (int s : resolve_taps(*t.info_, spec.layer_ids)) {
        t.tapped_ids_.push_back(t.info_->stages[static_cast<size_t>(s)]);
        t.tapped_channels_.push_back(t.info_->stage_channels[static_cast<size_t>(s)]);
        t.tap_stage_index_.push_back(s);
    }
    if (spec.input_size < 8) throw ConfigError("input_size too small: " + std::to_string(spec.input_size));

    ArchDef arch = make_arch(*t.info_);
    build_params(t.params_, arch);
    switch (spec.weights_source) {
        case WeightsSource::random_frozen:
            init_random_frozen(t.params_, spec.seed);
            break;
        case WeightsSource::imagenet_pretrained:
            fill_from_file(t.params_, weights_cache_dir() + "/" + spec.backbone_name + ".tnz");
            break;
        case WeightsSource::file_path:
            if (spec.weights_path.empty()) throw ConfigError("weights_source=file_path requires weights_path");
            fill_from_file(t.params_, spec.weights_path);
            break;
    }
    return t;
}

FeaturePyramid Teacher::forward(const Tensor& preprocessed) const {
    if (preprocessed.ndim() != 3 || preprocessed.dim(0) != 3 || preprocessed.dim(1) != spec_.input_size ||
        preprocessed.dim(2) != spec_.input_size)
        throw ShapeError("teacher input must be (3," + std::to_string(spec_.input_size) + "," +
                         std::to_string(spec_.input_size) + "), got " + preprocessed.shape_str());

    const ArchDef arch = make_arch(*info_);
    const Bound P = bind(params_);  // frozen constants; no tape is built
    Var h = ad::constant(preprocessed);
    if (arch.bottleneck) {
        h = ad::relu(bn(P, conv(P, h, "stem.conv", arch.stem_stride, arch.stem_pad, false), "stem.bn"));
        if (arch.stem_pool) h = ad::maxpool2d(h, 3, 2, 1);
    } else {
        h = ad::relu(conv(P, h, "stem.conv", arch.stem_stride, arch.stem_pad, true));
    }

    FeaturePyramid pyr;
    pyr.source = PyramidSource::teacher;
    const int deepest = tap_stage_index_.back();
    for (int s = 0; s <= deepest; ++s) {
        const StageDef& st = arch.stages[static_cast<size_t>(s)];
        for (const auto& b : st.blocks) h = arch.bottleneck ? bottleneck_fwd(P, h, b) : basic_fwd(P, h, b);
        if (std::find(tap_stage_index_.begin(), tap_stage_index_.end(), s) != tap_stage_index_.end()) {
            pyr.levels.push_back(h);
            pyr.layer_ids.push_back(st.id);
        }
    }
    pyr.validate();
    return pyr;
}

std::vector<FeaturePyramid> Teacher::extract_pyramid(const std::vector<Tensor>& batch) const {
    std::vector<FeaturePyramid> out;
    out.reserve(batch.size());
    for (const auto& item : batch) out.push_back(forward(item));
    return out;
}

std::vector<std::vector<int>> Teacher::level_shapes() const { return teacher_level_shapes(spec_); }

Tensor Teacher::preprocess_image(const Tensor& image01) const {
    return img::preprocess(image01, spec_.input_size, info_->norm_mean, info_->norm_std);
}

Tensor Teacher::preprocess_file(const std::string& path) const {
    return preprocess_image(img::read_image(path));
}

}  // namespace d24fad
