#include "d24fad/episodes.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "d24fad/image.hpp"
#include "d24fad/rng.hpp"
#include "d24fad/serialize.hpp"

namespace d24fad {

namespace fs = std::filesystem;
using json = nlohmann::json;

void TaskManifest::validate() const {
    if (task_id.empty()) throw DataError("task manifest has empty task_id");
    std::set<std::string> seen;
    auto check = [&](const std::vector<std::string>& paths, const char* which) {
        for (const auto& p : paths)
            if (!seen.insert(p).second)
                throw DataError("task " + task_id + ": path appears in more than one split (" + which +
                                "): " + p);
    };
    check(normal_train, "normal_train");
    check(normal_test, "normal_test");
    check(abnormal_test, "abnormal_test");
}

std::pair<std::vector<TaskManifest>, TaskManifest> build_leave_one_out(
    const std::vector<TaskManifest>& manifests, const std::string& held_out) {
    if (manifests.size() < 2)
        throw ConfigError("leave-one-out needs at least 2 tasks, got " + std::to_string(manifests.size()));
    std::vector<TaskManifest> train;
    const TaskManifest* test = nullptr;
    for (const auto& m : manifests) {
        if (m.task_id == held_out)
            test = &m;
        else
            train.push_back(m);
    }
    if (!test) throw ConfigError("held-out task \"" + held_out + "\" not found among manifests");
    return {std::move(train), *test};
}

namespace {

std::vector<std::string> sorted_copy(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, uint64_t key) {
    std::mt19937_64 rng(key);
    for (size_t i = v.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

std::vector<std::string> fixed_train_supports(uint64_t seed, const TaskManifest& task, int k) {
    if (k < 1) throw PreconditionError("support count K must be >= 1");
    if (static_cast<int>(task.normal_train.size()) < k + 1)
        throw DataError("task " + task.task_id + " has " + std::to_string(task.normal_train.size()) +
                        " training normals; needs at least K+1 = " + std::to_string(k + 1));
    auto pool = sorted_copy(task.normal_train);
    seeded_shuffle(pool, mix_keys(seed, "train_supports", hash_str(task.task_id)));
    pool.resize(static_cast<size_t>(k));
    return pool;
}

Episode sample_train_episode(uint64_t seed, const TaskManifest& task, int k, uint64_t draw_index) {
    Episode ep;
    ep.task_id = task.task_id;
    ep.role = EpisodeRole::train;
    ep.support = fixed_train_supports(seed, task, k);

    std::set<std::string> support_set(ep.support.begin(), ep.support.end());
    std::vector<std::string> pool;
    for (const auto& p : sorted_copy(task.normal_train))
        if (!support_set.count(p)) pool.push_back(p);
    std::mt19937_64 rng(mix_keys(seed, "train_query", mix_keys(hash_str(task.task_id), draw_index)));
    ep.query = pool[static_cast<size_t>(rng() % pool.size())];
    return ep;
}

std::string to_string(SupportMode m) { return m == SupportMode::fixed ? "fixed" : "random"; }

SupportMode support_mode_from(const std::string& s) {
    if (s == "fixed") return SupportMode::fixed;
    if (s == "random") return SupportMode::random;
    throw ConfigError("unknown support mode: " + s);
}

std::vector<std::string> select_infer_support(const TaskManifest& task, int k, SupportMode mode,
                                              uint64_t trial_seed) {
    if (k < 1) throw PreconditionError("support count K must be >= 1");
    if (static_cast<int>(task.normal_test.size()) < k + 1)
        throw DataError("task " + task.task_id + " has " + std::to_string(task.normal_test.size()) +
                        " test normals; needs at least K+1 = " + std::to_string(k + 1) +
                        " to reserve supports and still score normal queries");
    auto pool = sorted_copy(task.normal_test);
    const uint64_t key = mode == SupportMode::fixed
                             ? mix_keys(hash_str(task.task_id), "infer_supports_fixed")
                             : mix_keys(hash_str(task.task_id), "infer_supports_random", trial_seed);
    seeded_shuffle(pool, key);
    pool.resize(static_cast<size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
}

namespace {

std::vector<std::string> list_images(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string p = e.path().string();
        if (img::has_image_ext(p)) out.push_back(std::move(p));
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TaskManifest load_folder_dataset(const std::string& root) {
    const fs::path base(root);
    const fs::path expected[3] = {base / "train" / "normal", base / "test" / "normal",
                                  base / "test" / "abnormal"};
    std::string missing;
    for (const auto& d : expected)
        if (!fs::is_directory(d)) missing += (missing.empty() ? "" : ", ") + d.string();
    if (!missing.empty())
        throw ConfigError("dataset layout error under " + root +
                          ": missing " + missing +
                          " (expected train/normal, test/normal, test/abnormal)");

    TaskManifest m;
    m.task_id = base.filename().string().empty() ? base.parent_path().filename().string()
                                                 : base.filename().string();
    m.normal_train = list_images(expected[0]);
    m.normal_test = list_images(expected[1]);
    m.abnormal_test = list_images(expected[2]);
    m.modality = "unknown";

    const fs::path meta = base / "task_meta.json";
    if (fs::exists(meta)) {
        std::ifstream in(meta);
        json j = json::parse(in, nullptr, false);
        if (!j.is_discarded()) {
            if (j.contains("task_id")) m.task_id = j["task_id"].get<std::string>();
            if (j.contains("modality")) m.modality = j["modality"].get<std::string>();
        }
    }
    m.validate();
    return m;
}

void write_manifest_cache(const TaskManifest& manifest, const std::string& root) {
    auto relativize = [&](const std::vector<std::string>& paths) {
        std::vector<std::string> out;
        out.reserve(paths.size());
        for (const auto& p : paths) {
            std::error_code ec;
            const fs::path rel = fs::relative(p, root, ec);
            out.push_back(ec || rel.empty() ? p : rel.string());
        }
        return out;
    };
    json j;
    j["task_id"] = manifest.task_id;
    j["modality"] = manifest.modality;
    j["counts"] = {{"normal_train", manifest.normal_train.size()},
                   {"normal_test", manifest.normal_test.size()},
                   {"abnormal_test", manifest.abnormal_test.size()}};
    j["normal_train"] = relativize(manifest.normal_train);
    j["normal_test"] = relativize(manifest.normal_test);
    j["abnormal_test"] = relativize(manifest.abnormal_test);
    write_text_atomic((fs::path(root) / "manifest.json").string(), j.dump(2) + "\n");
}

void verify_no_leakage(const std::vector<TaskManifest>& train_tasks, const TaskManifest& test_task) {
    std::set<std::string> held;
    for (const auto& p : test_task.normal_train) held.insert(p);
    for (const auto& p : test_task.normal_test) held.insert(p);
    for (const auto& p : test_task.abnormal_test) held.insert(p);
    for (const auto& t : train_tasks) {
        if (t.task_id == test_task.task_id)
            throw DataError("held-out task " + test_task.task_id + " present among training tasks");
        for (const auto* lists : {&t.normal_train, &t.normal_test, &t.abnormal_test})
            for (const auto& p : *lists)
                if (held.count(p))
                    throw DataError("leakage: path " + p + " appears in train task " + t.task_id +
                                    " and in held-out task " + test_task.task_id);
    }
}

}  // namespace d24fad
