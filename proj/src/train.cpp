#include "d24fad/train.hpp"

#include <chrono>
#include <set>
#include <cmath>
#include <filesystem>

#include "d24fad/checkpoint.hpp"
#include "d24fad/config.hpp"
#include "d24fad/rng.hpp"
#include "d24fad/serialize.hpp"

namespace d24fad {

using json = nlohmann::json;
namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (support_k < 1) throw ConfigError("K must be >= 1");
    if (!(adam.lr > 0.0) || !std::isfinite(adam.lr)) throw ConfigError("learning rate must be positive");
    if (lr_horizon_epochs < 1) throw ConfigError("lr_horizon_epochs must be >= 1");
    loss.validate();
    if (!use_ssd && loss.lambda_weight == 0.0)
        throw ConfigError("objective is empty: ssd disabled and lambda = 0");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    const double h = static_cast<double>(cfg.lr_horizon_epochs);
    const double t = std::min(static_cast<double>(epoch - 1), h);
    return cfg.adam.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t / h));
}

TrainState init_train_state(const TrainConfig& cfg, const Teacher& teacher, uint64_t student_seed) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    st.teacher_spec = teacher.spec();
    st.student = Student::build(Student::spec_for(teacher, student_seed));
    st.l2w = L2WParams::build(cfg.loss.l2w_variant, teacher.level_shapes(), student_seed);
    return st;
}

const std::vector<Tensor>& TeacherFeatureCache::levels(const std::string& path) {
    auto it = cache_.find(path);
    if (it != cache_.end()) return it->second;
    if (cache_.size() >= max_entries_) cache_.clear();
    FeaturePyramid pyr = teacher_.forward(teacher_.preprocess_file(path));
    std::vector<Tensor> values;
    values.reserve(pyr.size());
    for (const auto& lv : pyr.levels) values.push_back(lv->value);
    return cache_.emplace(path, std::move(values)).first->second;
}

namespace {

FeaturePyramid pyramid_from_values(const std::vector<Tensor>& values,
                                   const std::vector<std::string>& ids, PyramidSource source) {
    FeaturePyramid pyr;
    pyr.source = source;
    pyr.layer_ids = ids;
    for (const auto& t : values) pyr.levels.push_back(ad::constant(t));
    return pyr;
}

struct PlannedEpisode {
    size_t task_index;
    std::string query;
};

Bound bind_trainable_all(TrainState& st) {
    Bound all = bind(st.student.params(), true);
    Bound lb = bind(st.l2w.params(), true);
    all.vars.insert(lb.vars.begin(), lb.vars.end());
    return all;
}

}  // namespace

TrainResult train(TrainState& st, const std::vector<TaskManifest>& train_tasks, const Teacher& teacher,
                  const std::string& out_dir) {
    st.cfg.validate();
    if (train_tasks.empty()) throw ConfigError("no training tasks given");
    const auto start_time = std::chrono::system_clock::now();

    std::vector<TaskManifest> tasks = train_tasks;
    std::sort(tasks.begin(), tasks.end(),
              [](const TaskManifest& a, const TaskManifest& b) { return a.task_id < b.task_id; });

    const uint64_t teacher_checksum_before = teacher.checksum();
    const LossConfig& lc = st.cfg.loss;
    TeacherFeatureCache cache(teacher);

    // fixed supports and query pools, chosen once per run from the split seed
    std::vector<std::vector<std::string>> supports(tasks.size());
    std::vector<std::vector<std::string>> pools(tasks.size());
    for (size_t t = 0; t < tasks.size(); ++t) {
        supports[t] = fixed_train_supports(st.cfg.seed, tasks[t], st.cfg.support_k);
        std::set<std::string> sup(supports[t].begin(), supports[t].end());
        std::vector<std::string> pool = tasks[t].normal_train;
        std::sort(pool.begin(), pool.end());
        for (const auto& p : pool)
            if (!sup.count(p)) pools[t].push_back(p);
    }

    for (int epoch = st.epoch_done + 1; epoch <= st.cfg.epochs; ++epoch) {
        // deterministic episode plan for this epoch
        std::vector<PlannedEpisode> plan;
        for (size_t t = 0; t < tasks.size(); ++t) {
            std::vector<std::string> order = pools[t];
            std::mt19937_64 rng(mix_keys(st.cfg.seed, "epoch_order",
                                         mix_keys(hash_str(tasks[t].task_id), static_cast<uint64_t>(epoch))));
            for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
            for (auto& q : order) plan.push_back({t, std::move(q)});
        }
        std::vector<std::vector<PlannedEpisode>> batches;
        if (st.cfg.mixed_task_batches) {
            std::mt19937_64 rng(mix_keys(st.cfg.seed, "epoch_mix", static_cast<uint64_t>(epoch)));
            for (size_t i = plan.size(); i > 1; --i) std::swap(plan[i - 1], plan[rng() % i]);
            for (size_t i = 0; i < plan.size(); i += static_cast<size_t>(st.cfg.batch_size))
                batches.emplace_back(plan.begin() + static_cast<ptrdiff_t>(i),
                                     plan.begin() + static_cast<ptrdiff_t>(
                                                        std::min(plan.size(), i + static_cast<size_t>(st.cfg.batch_size))));
        } else {
            // batches never cross a task boundary: one support bank per batch
            size_t i = 0;
            while (i < plan.size()) {
                size_t j = i;
                while (j < plan.size() && plan[j].task_index == plan[i].task_index &&
                       j - i < static_cast<size_t>(st.cfg.batch_size))
                    ++j;
                batches.emplace_back(plan.begin() + static_cast<ptrdiff_t>(i),
                                     plan.begin() + static_cast<ptrdiff_t>(j));
                i = j;
            }
        }

        AdamConfig adam = st.cfg.adam;
        adam.lr = lr_at_epoch(st.cfg, epoch);

        double epoch_loss_sum = 0.0;
        int64_t epoch_episodes = 0;
        for (const auto& batch : batches) {
            Bound bound = bind_trainable_all(st);

            // support banks for the tasks present in this batch, recomputed
            // under the current student parameters
            std::map<size_t, SupportFeatureBank> banks;
            if (st.cfg.use_ssd) {
                for (const auto& ep : batch) {
                    if (banks.count(ep.task_index)) continue;
                    std::vector<Tensor> deepest;
                    for (const auto& sp : supports[ep.task_index])
                        deepest.push_back(cache.levels(sp).back());
                    banks.emplace(ep.task_index,
                                  bank_from_deepest(st.student, bound, deepest, supports[ep.task_index],
                                                    tasks[ep.task_index].task_id));
                }
            }

            ad::Var batch_total;
            for (const auto& ep : batch) {
                const std::vector<Tensor>& tlv = cache.levels(ep.query);
                FeaturePyramid tq = pyramid_from_values(tlv, teacher.tapped_ids(), PyramidSource::teacher);
                FeaturePyramid zq = st.student.forward(bound, ad::constant(tlv.back()));
                check_shape_duality(tq, zq);

                const std::string episode_id = tasks[ep.task_index].task_id + ":" + ep.query;
                ad::Var episode_loss;
                ad::Var l_tsd = tsd_loss(tq, zq, lc.epsilon);
                if (!std::isfinite(ad::scalar_of(l_tsd)))
                    throw NumericError("tsd term diverged at epoch " + std::to_string(epoch) +
                                       ", episode " + episode_id);
                if (st.cfg.use_ssd) {
                    const SupportFeatureBank& bank = banks.at(ep.task_index);
                    ad::Var l_ssd = lc.use_l2w
                                        ? ssd_l2w_loss(st.l2w, bound, zq, bank, lc.epsilon)
                                        : ssd_loss(bank, zq, lc.epsilon, lc.stop_grad_support);
                    if (!std::isfinite(ad::scalar_of(l_ssd)))
                        throw NumericError(std::string(lc.use_l2w ? "ssd_l2w" : "ssd") +
                                           " term diverged at epoch " + std::to_string(epoch) +
                                           ", episode " + episode_id);
                    episode_loss = total_loss(lc, l_tsd, l_ssd);
                } else {
                    episode_loss = ad::scale(l_tsd, lc.lambda_weight);
                }
                batch_total = batch_total ? ad::add(batch_total, episode_loss) : episode_loss;
            }

            ad::Var batch_loss = ad::scale(batch_total, 1.0 / static_cast<double>(batch.size()));
            ad::backward(batch_loss);
            ++st.step;
            adam_step(st.student.params(), bound, adam, st.step);
            adam_step(st.l2w.params(), bound, adam, st.step);

            epoch_loss_sum += ad::scalar_of(batch_loss) * static_cast<double>(batch.size());
            epoch_episodes += static_cast<int64_t>(batch.size());
        }
        st.loss_trace.push_back(epoch_loss_sum / static_cast<double>(epoch_episodes));
        st.epoch_done = epoch;
    }

    if (teacher.checksum() != teacher_checksum_before)
        throw StateError("teacher parameters changed during training");

    fs::create_directories(fs::path(out_dir) / "checkpoints");
    TrainResult result;
    result.checkpoint_path = save_checkpoint(st, (fs::path(out_dir) / "checkpoints").string());

    json manifest;
    manifest["schema_version"] = 1;
    manifest["config"] = to_json(st.cfg);
    manifest["teacher_spec"] = to_json(st.teacher_spec);
    manifest["student_spec"] = to_json(st.student.spec());
    json split;
    split["train_tasks"] = json::array();
    split["fixed_supports"] = json::object();
    for (size_t t = 0; t < tasks.size(); ++t) {
        split["train_tasks"].push_back(tasks[t].task_id);
        split["fixed_supports"][tasks[t].task_id] = supports[t];
    }
    manifest["split"] = split;
    manifest["teacher_checksum"] = checksum_hex(teacher_checksum_before);
    manifest["loss_trace"] = st.loss_trace;
    manifest["final_checkpoint"] = {{"path", result.checkpoint_path},
                                    {"checksum", checksum_hex(file_checksum(result.checkpoint_path))}};
    const std::string canonical = manifest.dump();
    manifest["content_checksum"] = checksum_hex(fnv1a(canonical.data(), canonical.size()));

    const auto end_time = std::chrono::system_clock::now();
    manifest["wallclock"] = {
        {"started_unix_ms",
         std::chrono::duration_cast<std::chrono::milliseconds>(start_time.time_since_epoch()).count()},
        {"finished_unix_ms",
         std::chrono::duration_cast<std::chrono::milliseconds>(end_time.time_since_epoch()).count()},
        {"seconds", std::chrono::duration<double>(end_time - start_time).count()}};

    result.manifest = manifest;
    result.manifest_path = (fs::path(out_dir) / "run_manifest.json").string();
    write_text_atomic(result.manifest_path, manifest.dump(2) + "\n");
    return result;
}

}  // namespace d24fad
