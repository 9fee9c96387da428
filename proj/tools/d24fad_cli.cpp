// d24fad — few-shot anomaly detection via dual distillation.
// Subcommands: synth (benchmark generation), train, eval, score.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>

#include "d24fad/checkpoint.hpp"
#include "d24fad/config.hpp"
#include "d24fad/image.hpp"
#include "d24fad/metrics.hpp"
#include "d24fad/scoring.hpp"
#include "d24fad/serialize.hpp"
#include "d24fad/synth.hpp"

namespace fs = std::filesystem;
using namespace d24fad;

namespace {

std::vector<TaskManifest> load_all_tasks(const std::string& root) {
    if (!fs::is_directory(root)) throw ConfigError("dataset root is not a directory: " + root);
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    std::vector<TaskManifest> tasks;
    for (const auto& d : dirs) tasks.push_back(load_folder_dataset(d));
    if (tasks.empty()) throw ConfigError("no task directories found under " + root);
    return tasks;
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "./run";
};

AppConfig effective_config(const CommonArgs& common) {
    if (!common.config_path.empty()) return load_config_file(common.config_path);
    return AppConfig{};
}

int cmd_synth(AppConfig cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::vector<synth::SynthTaskSpec> specs =
        synth::default_benchmark(cfg.synth.seed, cfg.synth.image_size, cfg.synth.train_normal,
                                 cfg.synth.test_normal, cfg.synth.test_abnormal, cfg.synth.noise_level);
    if (!cfg.synth.families.empty()) {
        std::vector<synth::SynthTaskSpec> keep;
        for (const auto& name : cfg.synth.families) {
            synth::PatternFamily f = synth::family_from(name);
            for (const auto& s : specs)
                if (s.family == f) keep.push_back(s);
        }
        specs = std::move(keep);
    }
    for (const auto& s : specs) {
        TaskManifest m = synth::generate_task(s, out_dir);
        std::cout << m.task_id << ": " << m.normal_train.size() << " train normal, "
                  << m.normal_test.size() << " test normal, " << m.abnormal_test.size()
                  << " test abnormal\n";
    }
    return 0;
}

int cmd_train(AppConfig cfg, const std::string& out_dir, const std::string& resume_path) {
    if (cfg.data.root.empty()) throw ConfigError("--data is required");
    if (cfg.data.holdout.empty()) throw ConfigError("--holdout is required");
    auto tasks = load_all_tasks(cfg.data.root);
    auto [train_tasks, test_task] = build_leave_one_out(tasks, cfg.data.holdout);
    verify_no_leakage(train_tasks, test_task);

    Teacher teacher = Teacher::load(cfg.teacher);
    TrainState state;
    if (!resume_path.empty()) {
        state = resume(resume_path);
        state.cfg.epochs = cfg.train.epochs;  // continue to the requested total
    } else {
        state = init_train_state(cfg.train, teacher, cfg.student_seed);
    }
    TrainResult result = train(state, train_tasks, teacher, out_dir);
    std::cout << "checkpoint: " << result.checkpoint_path << "\n"
              << "manifest: " << result.manifest_path << "\n"
              << "final epoch-mean loss: " << state.loss_trace.back() << "\n";
    return 0;
}

int cmd_eval(AppConfig cfg, const std::string& out_dir, const std::string& checkpoint_path,
             bool dump_weights, bool dump_embeddings) {
    if (cfg.data.root.empty()) throw ConfigError("--data is required");
    if (cfg.data.holdout.empty()) throw ConfigError("--holdout is required");
    if (checkpoint_path.empty()) throw ConfigError("--checkpoint is required");
    auto tasks = load_all_tasks(cfg.data.root);
    auto [train_tasks, test_task] = build_leave_one_out(tasks, cfg.data.holdout);
    verify_no_leakage(train_tasks, test_task);

    TrainState state = resume(checkpoint_path);
    Teacher teacher = Teacher::load(state.teacher_spec);
    Scorer scorer(teacher, std::move(state));

    fs::create_directories(fs::path(out_dir) / "reports");
    EvalReport report = run_eval(scorer, test_task, cfg.eval.k, cfg.eval.mode, cfg.eval.trials,
                                 cfg.eval.seed_base, out_dir, cfg.eval.workers);
    const std::string report_path = (fs::path(out_dir) / "reports" / "eval_report.json").string();
    write_text_atomic(report_path, report.to_json().dump(2) + "\n");

    if (dump_weights) {
        const auto supports =
            select_infer_support(test_task, cfg.eval.k, cfg.eval.mode, cfg.eval.seed_base);
        const std::string weights_path = (fs::path(out_dir) / "exports" / "support_weights.jsonl").string();
        fs::create_directories(fs::path(out_dir) / "exports");
        bool first = true;
        std::set<std::string> support_set(supports.begin(), supports.end());
        for (const auto& q : test_task.normal_test) {
            if (support_set.count(q)) continue;
            ScoreOutput so = scorer.score(supports, q);
            export_weights(so.weights, q, weights_path, !first);
            first = false;
        }
        for (const auto& q : test_task.abnormal_test) {
            ScoreOutput so = scorer.score(supports, q);
            export_weights(so.weights, q, weights_path, !first);
            first = false;
        }
        std::cout << "support weights: " << weights_path << "\n";
    }
    if (dump_embeddings) {
        std::vector<std::pair<std::string, int>> images;
        for (const auto& p : test_task.normal_test) images.emplace_back(p, 0);
        for (const auto& p : test_task.abnormal_test) images.emplace_back(p, 1);
        const std::string emb_path = (fs::path(out_dir) / "exports" / "embeddings.csv").string();
        fs::create_directories(fs::path(out_dir) / "exports");
        export_embeddings(scorer, images, emb_path);
        std::cout << "embeddings: " << emb_path << "\n";
    }

    std::cout << "task " << report.task_id << " K=" << report.k << " mode=" << to_string(report.mode)
              << " trials=" << report.trials.size() << "\n";
    std::cout.precision(6);
    std::cout << "mean AUROC " << report.mean_auroc << " +/- " << report.std_auroc << "\n"
              << "report: " << report_path << "\n";
    return 0;
}

int cmd_score(AppConfig cfg, const std::string& checkpoint_path, const std::string& support_dir,
              const std::string& query_path, const std::string& heatmap_path,
              const std::string& score_reduce) {
    if (checkpoint_path.empty()) throw ConfigError("--checkpoint is required");
    if (support_dir.empty()) throw ConfigError("--support-dir is required");
    if (query_path.empty()) throw ConfigError("--query is required");
    if (score_reduce != "mean" && score_reduce != "max")
        throw ConfigError("--score-reduce must be mean or max");

    std::vector<std::string> supports;
    for (const auto& e : fs::directory_iterator(support_dir))
        if (e.is_regular_file() && img::has_image_ext(e.path().string()))
            supports.push_back(e.path().string());
    std::sort(supports.begin(), supports.end());
    if (static_cast<int>(supports.size()) > cfg.eval.k)
        supports.resize(static_cast<size_t>(cfg.eval.k));
    if (supports.empty()) throw DataError("no support images found under " + support_dir);

    TrainState state = resume(checkpoint_path);
    Teacher teacher = Teacher::load(state.teacher_spec);
    Scorer scorer(teacher, std::move(state));
    ScoreOutput so = scorer.score(supports, query_path);

    double printed = so.anomaly.image_score;
    if (score_reduce == "max") {
        printed = so.anomaly.map[0];
        for (int64_t i = 0; i < so.anomaly.map.numel(); ++i) printed = std::max(printed, so.anomaly.map[i]);
    }
    std::cout.precision(17);
    std::cout << printed << "\n";

    if (!heatmap_path.empty()) export_heatmap(so.anomaly, img::read_image(query_path), heatmap_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-distillation few-shot anomaly detection"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string resume_path, checkpoint_path, support_dir, query_path, heatmap_path;
    std::string score_reduce = "mean";
    std::string support_mode, l2w_variant_name, families_csv;
    bool no_tsd = false, no_ssd = false, no_l2w = false, dump_weights = false, dump_embeddings = false;

    // flag holders: only values the user actually passed override the config file
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON config file");
        sub->add_option("--out", common.out_dir, "output directory")->capture_default_str();
    };

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate the synthetic multi-task benchmark");
    add_common(synth_cmd);
    uint64_t synth_seed = 1;
    int synth_size = 32, synth_train = 24, synth_test_normal = 12, synth_test_abnormal = 12;
    double synth_noise = 0.04;
    synth_cmd->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
    synth_cmd->add_option("--size", synth_size, "image size (pixels, square)")->capture_default_str();
    synth_cmd->add_option("--train-normal", synth_train, "normal training images per task")
        ->capture_default_str();
    synth_cmd->add_option("--test-normal", synth_test_normal, "normal test images per task")
        ->capture_default_str();
    synth_cmd->add_option("--test-abnormal", synth_test_abnormal, "abnormal test images per task")
        ->capture_default_str();
    synth_cmd->add_option("--noise", synth_noise, "per-image noise level")->capture_default_str();
    synth_cmd->add_option("--families", families_csv, "comma-separated subset of blobs,stripes,rings,checker");

    CLI::App* train_cmd = app.add_subcommand("train", "leave-one-out episodic training");
    add_common(train_cmd);
    std::string data_root, holdout, backbone, weights_source, weights_path;
    int k = 0, epochs = 0, batch_size = 0, input_size = 0;
    double lambda = -1.0, lr = 0.0;
    uint64_t seed = UINT64_MAX, teacher_seed = UINT64_MAX, student_seed = UINT64_MAX;
    train_cmd->add_option("--data", data_root, "dataset root (one task directory per task)");
    train_cmd->add_option("--holdout", holdout, "held-out task id");
    train_cmd->add_option("--k", k, "support count K");
    train_cmd->add_option("--epochs", epochs, "training epochs");
    train_cmd->add_option("--batch-size", batch_size, "episodes per optimizer step");
    train_cmd->add_option("--lambda", lambda, "teacher-student term weight");
    train_cmd->add_option("--lr", lr, "base learning rate");
    train_cmd->add_option("--seed", seed, "run seed");
    train_cmd->add_option("--backbone", backbone, "teacher backbone (wide_resnet50_2 | tiny)");
    train_cmd->add_option("--input-size", input_size, "teacher input size");
    train_cmd->add_option("--weights-source", weights_source,
                          "imagenet_pretrained | random_frozen | file_path");
    train_cmd->add_option("--weights-path", weights_path, "weight file for --weights-source file_path");
    train_cmd->add_option("--teacher-seed", teacher_seed, "random_frozen teacher seed");
    train_cmd->add_option("--student-seed", student_seed, "student/l2w init seed");
    train_cmd->add_option("--l2w-variant", l2w_variant_name,
                          "scaled_dot | gaussian | embedded_gaussian | concatenation");
    train_cmd->add_flag("--no-tsd", no_tsd, "drop the teacher-student term (lambda = 0)");
    train_cmd->add_flag("--no-ssd", no_ssd, "train on the teacher-student term only");
    train_cmd->add_flag("--no-l2w", no_l2w, "uniform support weighting instead of learn-to-weight");
    train_cmd->add_option("--resume", resume_path, "checkpoint to continue from");

    CLI::App* eval_cmd = app.add_subcommand("eval", "multi-trial evaluation on the held-out task");
    add_common(eval_cmd);
    int trials = 0, workers = 0;
    uint64_t eval_seed = UINT64_MAX;
    eval_cmd->add_option("--data", data_root, "dataset root");
    eval_cmd->add_option("--holdout", holdout, "held-out task id");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint");
    eval_cmd->add_option("--k", k, "support count K");
    eval_cmd->add_option("--support-mode", support_mode, "fixed | random");
    eval_cmd->add_option("--trials", trials, "number of trials");
    eval_cmd->add_option("--seed", eval_seed, "base trial seed");
    eval_cmd->add_option("--workers", workers, "parallel scoring threads");
    eval_cmd->add_flag("--export-weights", dump_weights, "dump per-query support weights (JSONL)");
    eval_cmd->add_flag("--export-embeddings", dump_embeddings, "dump pooled student embeddings (CSV)");

    CLI::App* score_cmd = app.add_subcommand("score", "score one query against a support folder");
    add_common(score_cmd);
    score_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint");
    score_cmd->add_option("--support-dir", support_dir, "folder of normal reference images");
    score_cmd->add_option("--k", k, "use the first K images of the support folder");
    score_cmd->add_option("--query", query_path, "image to score");
    score_cmd->add_option("--heatmap", heatmap_path, "write an anomaly heatmap PNG here");
    score_cmd->add_option("--score-reduce", score_reduce, "mean | max (printed scalar only)")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        AppConfig cfg = effective_config(common);

        // flags override the config file
        if (!data_root.empty()) cfg.data.root = data_root;
        if (!holdout.empty()) cfg.data.holdout = holdout;
        if (k > 0) {
            cfg.train.support_k = k;
            cfg.eval.k = k;
        }
        if (epochs > 0) cfg.train.epochs = epochs;
        if (batch_size > 0) cfg.train.batch_size = batch_size;
        if (lambda >= 0.0) cfg.train.loss.lambda_weight = lambda;
        if (lr > 0.0) cfg.train.adam.lr = lr;
        if (seed != UINT64_MAX) cfg.train.seed = seed;
        if (!backbone.empty()) cfg.teacher.backbone_name = backbone;
        if (input_size > 0) cfg.teacher.input_size = input_size;
        if (!weights_source.empty()) cfg.teacher.weights_source = weights_source_from(weights_source);
        if (!weights_path.empty()) cfg.teacher.weights_path = weights_path;
        if (teacher_seed != UINT64_MAX) cfg.teacher.seed = teacher_seed;
        if (student_seed != UINT64_MAX) cfg.student_seed = student_seed;
        if (!l2w_variant_name.empty()) cfg.train.loss.l2w_variant = l2w_variant_from(l2w_variant_name);
        if (no_tsd) cfg.train.loss.lambda_weight = 0.0;
        if (no_ssd) cfg.train.use_ssd = false;
        if (no_l2w) cfg.train.loss.use_l2w = false;
        if (!support_mode.empty()) cfg.eval.mode = support_mode_from(support_mode);
        if (trials > 0) cfg.eval.trials = trials;
        if (eval_seed != UINT64_MAX) cfg.eval.seed_base = eval_seed;
        if (workers > 0) cfg.eval.workers = workers;
        if (!families_csv.empty()) {
            cfg.synth.families.clear();
            std::string cur;
            for (char c : families_csv + ",") {
                if (c == ',') {
                    if (!cur.empty()) cfg.synth.families.push_back(cur);
                    cur.clear();
                } else {
                    cur += c;
                }
            }
        }
        if (synth_cmd->parsed()) {
            cfg.synth.seed = synth_seed;
            cfg.synth.image_size = synth_size;
            cfg.synth.train_normal = synth_train;
            cfg.synth.test_normal = synth_test_normal;
            cfg.synth.test_abnormal = synth_test_abnormal;
            cfg.synth.noise_level = synth_noise;
            return cmd_synth(std::move(cfg), common.out_dir);
        }
        if (train_cmd->parsed()) return cmd_train(std::move(cfg), common.out_dir, resume_path);
        if (eval_cmd->parsed())
            return cmd_eval(std::move(cfg), common.out_dir, checkpoint_path, dump_weights, dump_embeddings);
        if (score_cmd->parsed())
            return cmd_score(std::move(cfg), checkpoint_path, support_dir, query_path, heatmap_path,
                             score_reduce);
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
