#pragma once

#include <nlohmann/json.hpp>

#include "d24fad/train.hpp"

namespace d24fad {

// JSON codecs for the persisted structs (checkpoint metadata, run manifests,
// CLI config files). Readers reject unknown keys with the offending path.

nlohmann::json to_json(const TeacherSpec& s);
TeacherSpec teacher_spec_from_json(const nlohmann::json& j, const std::string& key_path);

nlohmann::json to_json(const StudentSpec& s);
StudentSpec student_spec_from_json(const nlohmann::json& j, const std::string& key_path);

nlohmann::json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j, const std::string& key_path);

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& key_path);

void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                         const std::string& key_path);

// Effective CLI configuration; every field can come from a config file and
// be overridden by a flag.
struct AppConfig {
    TeacherSpec teacher;
    uint64_t student_seed = 1;
    TrainConfig train;

    struct Data {
        std::string root;
        std::string holdout;
    } data;

    struct Eval {
        int k = 4;
        SupportMode mode = SupportMode::fixed;
        int trials = 5;
        uint64_t seed_base = 0;
        int workers = 1;
    } eval;

    struct Synth {
        uint64_t seed = 1;
        int image_size = 32;
        int train_normal = 24;
        int test_normal = 12;
        int test_abnormal = 12;
        double noise_level = 0.04;
        std::vector<std::string> families;  // empty = all four
    } synth;
};

void apply_config_json(AppConfig& cfg, const nlohmann::json& j);
AppConfig load_config_file(const std::string& path);  // defaults + file
nlohmann::json config_echo(const AppConfig& cfg);

}  // namespace d24fad
