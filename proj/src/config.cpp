#include "d24fad/config.hpp"

#include <fstream>

namespace d24fad {

using json = nlohmann::json;

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& key_path) {
    if (!j.is_object()) throw ConfigError("expected an object at " + key_path);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError("unknown configuration key: " + key_path + "." + it.key());
    }
}

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json to_json(const TeacherSpec& s) {
    return json{{"backbone", s.backbone_name},
                {"layer_ids", s.layer_ids},
                {"weights_source", to_string(s.weights_source)},
                {"input_size", s.input_size},
                {"seed", s.seed},
                {"weights_path", s.weights_path}};
}

TeacherSpec teacher_spec_from_json(const json& j, const std::string& key_path) {
    reject_unknown_keys(j, {"backbone", "layer_ids", "weights_source", "input_size", "seed", "weights_path"},
                        key_path);
    TeacherSpec s;
    maybe(j, "backbone", s.backbone_name);
    maybe(j, "layer_ids", s.layer_ids);
    if (j.contains("weights_source")) s.weights_source = weights_source_from(j.at("weights_source"));
    maybe(j, "input_size", s.input_size);
    maybe(j, "seed", s.seed);
    maybe(j, "weights_path", s.weights_path);
    return s;
}

json to_json(const StudentSpec& s) {
    return json{{"layer_ids", s.layer_ids},
                {"channel_plan", s.channel_plan},
                {"upsample_factor", s.upsample_factor},
                {"seed", s.seed},
                {"block_kind", s.block_kind}};
}

StudentSpec student_spec_from_json(const json& j, const std::string& key_path) {
    reject_unknown_keys(j, {"layer_ids", "channel_plan", "upsample_factor", "seed", "block_kind"}, key_path);
    StudentSpec s;
    maybe(j, "layer_ids", s.layer_ids);
    maybe(j, "channel_plan", s.channel_plan);
    maybe(j, "upsample_factor", s.upsample_factor);
    maybe(j, "seed", s.seed);
    maybe(j, "block_kind", s.block_kind);
    return s;
}

json to_json(const LossConfig& c) {
    return json{{"lambda", c.lambda_weight},
                {"use_l2w", c.use_l2w},
                {"l2w_variant", to_string(c.l2w_variant)},
                {"epsilon", c.epsilon},
                {"stop_grad_support", c.stop_grad_support}};
}

LossConfig loss_config_from_json(const json& j, const std::string& key_path) {
    reject_unknown_keys(j, {"lambda", "use_l2w", "l2w_variant", "epsilon", "stop_grad_support"}, key_path);
    LossConfig c;
    maybe(j, "lambda", c.lambda_weight);
    maybe(j, "use_l2w", c.use_l2w);
    if (j.contains("l2w_variant")) c.l2w_variant = l2w_variant_from(j.at("l2w_variant"));
    maybe(j, "epsilon", c.epsilon);
    maybe(j, "stop_grad_support", c.stop_grad_support);
    return c;
}

json to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"lr", c.adam.lr},
                {"beta1", c.adam.beta1},
                {"beta2", c.adam.beta2},
                {"adam_eps", c.adam.eps},
                {"seed", c.seed},
                {"loss", to_json(c.loss)},
                {"k", c.support_k},
                {"use_ssd", c.use_ssd},
                {"mixed_task_batches", c.mixed_task_batches},
                {"lr_horizon_epochs", c.lr_horizon_epochs}};
}

TrainConfig train_config_from_json(const json& j, const std::string& key_path) {
    reject_unknown_keys(j,
                        {"epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps", "seed", "loss", "k",
                         "use_ssd", "mixed_task_batches", "lr_horizon_epochs"},
                        key_path);
    TrainConfig c;
    maybe(j, "epochs", c.epochs);
    maybe(j, "batch_size", c.batch_size);
    maybe(j, "lr", c.adam.lr);
    maybe(j, "beta1", c.adam.beta1);
    maybe(j, "beta2", c.adam.beta2);
    maybe(j, "adam_eps", c.adam.eps);
    maybe(j, "seed", c.seed);
    if (j.contains("loss")) c.loss = loss_config_from_json(j.at("loss"), key_path + ".loss");
    maybe(j, "k", c.support_k);
    maybe(j, "use_ssd", c.use_ssd);
    maybe(j, "mixed_task_batches", c.mixed_task_batches);
    maybe(j, "lr_horizon_epochs", c.lr_horizon_epochs);
    return c;
}

void apply_config_json(AppConfig& cfg, const json& j) {
    reject_unknown_keys(j, {"teacher", "student_seed", "train", "data", "eval", "synth"}, "config");
    if (j.contains("teacher")) cfg.teacher = teacher_spec_from_json(j.at("teacher"), "config.teacher");
    maybe(j, "student_seed", cfg.student_seed);
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"), "config.train");
    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown_keys(d, {"root", "holdout"}, "config.data");
        maybe(d, "root", cfg.data.root);
        maybe(d, "holdout", cfg.data.holdout);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        reject_unknown_keys(e, {"k", "support_mode", "trials", "seed_base", "workers"}, "config.eval");
        maybe(e, "k", cfg.eval.k);
        if (e.contains("support_mode")) cfg.eval.mode = support_mode_from(e.at("support_mode"));
        maybe(e, "trials", cfg.eval.trials);
        maybe(e, "seed_base", cfg.eval.seed_base);
        maybe(e, "workers", cfg.eval.workers);
    }
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        reject_unknown_keys(
            s, {"seed", "image_size", "train_normal", "test_normal", "test_abnormal", "noise_level", "families"},
            "config.synth");
        maybe(s, "seed", cfg.synth.seed);
        maybe(s, "image_size", cfg.synth.image_size);
        maybe(s, "train_normal", cfg.synth.train_normal);
        maybe(s, "test_normal", cfg.synth.test_normal);
        maybe(s, "test_abnormal", cfg.synth.test_abnormal);
        maybe(s, "noise_level", cfg.synth.noise_level);
        maybe(s, "families", cfg.synth.families);
    }
}

AppConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    AppConfig cfg;
    apply_config_json(cfg, j);
    return cfg;
}

json config_echo(const AppConfig& cfg) {
    return json{{"teacher", to_json(cfg.teacher)},
                {"student_seed", cfg.student_seed},
                {"train", to_json(cfg.train)},
                {"data", {{"root", cfg.data.root}, {"holdout", cfg.data.holdout}}},
                {"eval",
                 {{"k", cfg.eval.k},
                  {"support_mode", to_string(cfg.eval.mode)},
                  {"trials", cfg.eval.trials},
                  {"seed_base", cfg.eval.seed_base},
                  {"workers", cfg.eval.workers}}},
                {"synth",
                 {{"seed", cfg.synth.seed},
                  {"image_size", cfg.synth.image_size},
                  {"train_normal", cfg.synth.train_normal},
                  {"test_normal", cfg.synth.test_normal},
                  {"test_abnormal", cfg.synth.test_abnormal},
                  {"noise_level", cfg.synth.noise_level},
                  {"families", cfg.synth.families}}}};
}

}  // namespace d24fad
