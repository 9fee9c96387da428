#include "d24fad/checkpoint.hpp"

#include <filesystem>

#include "d24fad/config.hpp"
#include "d24fad/serialize.hpp"

namespace d24fad {

using json = nlohmann::json;

std::string checkpoint_filename(int epoch) {
    return "student_ep" + std::to_string(epoch) + ".ckpt";
}

namespace {

void pack_params(std::map<std::string, Tensor>& out, const ParamSet& params, const std::string& group) {
    for (const auto& p : params.items()) {
        out.emplace(group + "/" + p.name + ":value", p.value);
        out.emplace(group + "/" + p.name + ":m", p.adam_m);
        out.emplace(group + "/" + p.name + ":v", p.adam_v);
    }
}

void unpack_params(const std::map<std::string, Tensor>& in, ParamSet& params, const std::string& group,
                   const std::string& path) {
    for (auto& p : params.items()) {
        for (const char* suffix : {":value", ":m", ":v"}) {
            const std::string key = group + "/" + p.name + suffix;
            auto it = in.find(key);
            if (it == in.end()) throw StateError("checkpoint " + path + " lacks tensor " + key);
            if (it->second.shape() != p.value.shape())
                throw StateError("checkpoint " + path + " tensor " + key + " has shape " +
                                 it->second.shape_str() + ", expected " + p.value.shape_str());
            if (suffix == std::string(":value"))
                p.value = it->second;
            else if (suffix == std::string(":m"))
                p.adam_m = it->second;
            else
                p.adam_v = it->second;
        }
    }
}

}  // namespace

void save_checkpoint_to(const TrainState& state, const std::string& path) {
    json meta;
    meta["kind"] = "d24fad_checkpoint";
    meta["version"] = kCheckpointVersion;
    meta["teacher_spec"] = to_json(state.teacher_spec);
    meta["student_spec"] = to_json(state.student.spec());
    meta["train_config"] = to_json(state.cfg);
    meta["epoch"] = state.epoch_done;
    meta["step"] = state.step;
    meta["loss_trace"] = state.loss_trace;

    std::map<std::string, Tensor> tensors;
    pack_params(tensors, state.student.params(), "student");
    pack_params(tensors, state.l2w.params(), "l2w");
    write_tensor_file(path, tensors, meta.dump());
}

std::string save_checkpoint(const TrainState& state, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::string path =
        (std::filesystem::path(dir) / checkpoint_filename(state.epoch_done)).string();
    save_checkpoint_to(state, path);
    return path;
}

TrainState load_checkpoint(const std::string& path) {
    if (!std::filesystem::exists(path)) throw StateError("checkpoint not found: " + path);
    TensorFile tf = read_tensor_file(path);
    json meta = json::parse(tf.meta_json, nullptr, false);
    if (meta.is_discarded() || !meta.is_object() || meta.value("kind", "") != "d24fad_checkpoint")
        throw StateError("not a d24fad checkpoint: " + path);
    const int version = meta.value("version", -1);
    if (version != kCheckpointVersion)
        throw StateError("incompatible checkpoint version " + std::to_string(version) + " (expected " +
                         std::to_string(kCheckpointVersion) + "): " + path);

    TrainState st;
    st.teacher_spec = teacher_spec_from_json(meta.at("teacher_spec"), "checkpoint.teacher_spec");
    StudentSpec sspec = student_spec_from_json(meta.at("student_spec"), "checkpoint.student_spec");
    st.cfg = train_config_from_json(meta.at("train_config"), "checkpoint.train_config");
    st.epoch_done = meta.at("epoch").get<int>();
    st.step = meta.at("step").get<int64_t>();
    st.loss_trace = meta.at("loss_trace").get<std::vector<double>>();

    st.student = Student::build(sspec);
    st.l2w = L2WParams::build(st.cfg.loss.l2w_variant, teacher_level_shapes(st.teacher_spec), sspec.seed);
    unpack_params(tf.tensors, st.student.params(), "student", path);
    unpack_params(tf.tensors, st.l2w.params(), "l2w", path);
    return st;
}

}  // namespace d24fad
