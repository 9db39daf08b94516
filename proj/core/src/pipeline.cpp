#include "dist/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "dist/io_util.hpp"
#include "dist/sampling.hpp"

namespace dist {

namespace fs = std::filesystem;

namespace {

// Timestamped run log; the one place where wall-clock time may appear, so
// that every other artifact stays byte-identical across reruns.
class RunLog {
public:
    RunLog(const fs::path& run_dir, const std::string& level) : level_(level) {
        fs::create_directories(run_dir);
        out_.open(run_dir / "run.log", std::ios::app);
    }

    void info(const std::string& msg) { write("info", msg); }
    void warn(const std::string& msg) { write("warn", msg); }

private:
    void write(const char* tag, const std::string& msg) {
        const auto now = std::chrono::system_clock::now();
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(
                              now.time_since_epoch())
                              .count();
        if (out_) out_ << "[" << secs << "] [" << tag << "] " << msg << "\n" << std::flush;
        if (level_ != "quiet") std::cerr << "[" << tag << "] " << msg << "\n";
    }

    std::ofstream out_;
    std::string level_;
};

fs::path seed_dir(const ExperimentConfig& config, uint64_t seed) {
    return fs::path(config.run.out_dir) / ("seed_" + std::to_string(seed));
}

void write_split_record(const ClipSet& data, const fs::path& run_dir) {
    nlohmann::ordered_json j;
    auto summary = clipset_summary(data);
    nlohmann::ordered_json counts;
    for (const auto& [split, n] : summary.per_split) counts[split] = n;
    j["counts"] = counts;
    auto& splits = j["splits"] = nlohmann::ordered_json::array();
    for (const auto& clip : data.clips()) {
        splits.push_back({{"id", clip.id()}, {"split", to_string(clip.split())}});
    }
    write_file_atomic(run_dir / "data" / "splits.json", j.dump(2) + "\n");
}

nlohmann::ordered_json eval_json(const EvalResult& r) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    j["test_count"] = r.total;
    j["confusion"] = r.confusion;
    return j;
}

nlohmann::ordered_json audit_json(const AuditCounts& a) {
    nlohmann::ordered_json j;
    j["correct_retained"] = a.correct_retained;
    j["incorrect_retained"] = a.incorrect_retained;
    j["correct_discarded"] = a.correct_discarded;
    j["incorrect_discarded"] = a.incorrect_discarded;
    j["retained_precision"] = a.retained_precision();
    return j;
}

// Small grouped bar chart (correct vs incorrect retained per stage) as PPM.
void write_audit_plot(const fs::path& path, const std::vector<std::pair<std::string, AuditCounts>>& audits) {
    const int bar_w = 28, gap = 10, height = 120;
    const int group_w = 2 * bar_w + 3 * gap;
    const int width = std::max(1, group_w * static_cast<int>(audits.size()));
    long max_count = 1;
    for (const auto& [name, a] : audits) {
        max_count = std::max({max_count, a.correct_retained, a.incorrect_retained});
    }
    std::vector<unsigned char> img(static_cast<size_t>(width) * height * 3, 255);
    auto fill = [&](int x0, int x1, int h, unsigned char r, unsigned char g, unsigned char b) {
        for (int y = height - h; y < height; ++y) {
            for (int x = x0; x < x1; ++x) {
                unsigned char* px = &img[(static_cast<size_t>(y) * width + x) * 3];
                px[0] = r; px[1] = g; px[2] = b;
            }
        }
    };
    for (size_t i = 0; i < audits.size(); ++i) {
        const auto& a = audits[i].second;
        const int base = static_cast<int>(i) * group_w + gap;
        const int hc = static_cast<int>(height * a.correct_retained / static_cast<double>(max_count));
        const int hi = static_cast<int>(height * a.incorrect_retained / static_cast<double>(max_count));
        fill(base, base + bar_w, hc, 90, 170, 90);
        fill(base + bar_w + gap, base + 2 * bar_w + gap, hi, 200, 90, 90);
    }
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.data()), img.size());
    write_file_atomic(path, out);
}

std::vector<LabeledExample> labeled_examples(const ClipSet& data) {
    std::vector<LabeledExample> out;
    for (const Clip& clip : data.clips()) {
        if (clip.split() == Split::labeled) out.push_back({&clip, clip.label()});
    }
    return out;
}

}  // namespace

std::vector<LabeledExample> build_mixed_set(const ClipSet& data,
                                            const std::vector<PseudoLabelRecord>& retained) {
    std::vector<LabeledExample> mixed = labeled_examples(data);
    for (const auto& r : retained) {
        mixed.push_back({&data.require(r.clip_id), r.argmax_class});
    }
    return mixed;
}

ClipSet prepare_data(const ExperimentConfig& config, uint64_t seed) {
    if (!config.data.dataset_path.empty()) {
        ClipSet set = load_clipset(config.data.dataset_path);
        if (set.num_classes() != config.data.num_classes) {
            throw std::invalid_argument("dataset at " + config.data.dataset_path + " has " +
                                        std::to_string(set.num_classes()) +
                                        " classes, config expects " +
                                        std::to_string(config.data.num_classes));
        }
        return set;
    }
    ClipSet set = generate_synthetic_dataset(config.generator_params(hash_seed(seed, "data")));
    set.assign_splits(config.data.labeled_fraction, config.data.test_fraction,
                      hash_seed(seed, "split"));
    return set;
}

TeacherArtifacts train_teacher(const ExperimentConfig& config, const ClipSet& data,
                               const fs::path& run_dir, uint64_t seed) {
    const auto labeled = labeled_examples(data);
    if (labeled.empty()) throw std::invalid_argument("train_teacher: no labeled clips");
    TrainResult result =
        train(config.model_spec(hash_seed(seed, "teacher-init")), labeled, config.schedule(),
              config.sampling_params(), config.augment_params(), hash_seed(seed, "teacher-train"),
              /*save_checkpoints=*/true, run_dir / "checkpoints", "teacher");
    return {std::move(result.model), *result.checkpoints, std::move(result.epoch_loss)};
}

StageArtifacts run_stage1(const ExperimentConfig& config, const ClipSet& data,
                          const TeacherArtifacts& teacher, const fs::path& run_dir,
                          uint64_t seed, bool invariance_filter, const std::string& arm) {
    RunLog log(run_dir, config.run.log_level);
    const SamplingParams sampling = config.sampling_params();

    const Model ckpt1 = Model::load(teacher.checkpoints.paths[0]);
    const Model ckpt2 = Model::load(teacher.checkpoints.paths[1]);
    std::vector<PseudoLabelRecord> records =
        score_unlabeled_set(ckpt1, ckpt2, teacher.model, data, sampling);

    std::vector<PseudoLabelRecord> selected = select_top_half(records);
    if (!records.empty() && selected.empty()) {
        log.warn("stage1 (" + arm + "): degenerate selection, all reliability scores tied");
    }

    std::vector<PseudoLabelRecord> retained;
    std::vector<InvarianceVerdict> verdicts;
    if (invariance_filter) {
        retained = filter_records(teacher.model, selected, data, sampling,
                                  config.augment_params(), hash_seed(seed, "stage1-filter"),
                                  &verdicts);
    } else {
        for (auto& r : selected) r.retained = true;
        retained = selected;
    }

    // Fold the final flags of the eligible subset back into the full record list.
    {
        std::map<std::string, const PseudoLabelRecord*> by_id;
        for (const auto& r : selected) by_id[r.clip_id] = &r;
        for (auto& r : records) {
            auto it = by_id.find(r.clip_id);
            if (it != by_id.end()) r = *it->second;
        }
    }

    const std::string prefix = arm == "dist" ? "" : arm + "_";
    StageArtifacts artifacts{1,
                             arm,
                             std::move(records),
                             static_cast<long>(retained.size()),
                             0,
                             Model(config.model_spec(0)),
                             run_dir / "manifests" / (prefix + "stage1.tsv"),
                             run_dir / "checkpoints" / (prefix + "student_stage1.bin")};
    write_manifest(artifacts.manifest_path, artifacts.records);
    if (invariance_filter) {
        write_verdicts(run_dir / "manifests" / (prefix + "stage1_verdicts.tsv"), verdicts);
    }

    if (retained.empty() && !artifacts.records.empty()) {
        log.warn("stage1 (" + arm + "): empty retained set, training supervised-only student");
    }
    const auto mixed = build_mixed_set(data, retained);
    artifacts.mixed_size = static_cast<long>(mixed.size());
    log.info("stage1 (" + arm + "): retained " + std::to_string(retained.size()) + "/" +
             std::to_string(artifacts.records.size()) + " pseudo-labels, mixed size " +
             std::to_string(mixed.size()));

    TrainResult student = train(config.model_spec(hash_seed(seed, arm + "-student1-init")),
                                mixed, config.schedule(), sampling, config.augment_params(),
                                hash_seed(seed, arm + "-student1-train"));
    artifacts.student = std::move(student.model);
    artifacts.student.save(artifacts.student_path);
    return artifacts;
}

StageArtifacts run_stage2(const ExperimentConfig& config, const ClipSet& data,
                          const Model& promoted_teacher, const fs::path& run_dir,
                          uint64_t seed, bool invariance_filter, const std::string& arm) {
    RunLog log(run_dir, config.run.log_level);
    const SamplingParams sampling = config.sampling_params();

    // All pseudo-labels this time; no reliability selection in stage 2.
    std::vector<PseudoLabelRecord> records;
    for (const Clip& clip : data.clips()) {
        if (clip.split() != Split::unlabeled) continue;
        const int pred = promoted_teacher.predict_class(uniform_sample(clip, sampling));
        records.push_back({clip.id(), pred, 0.0, false, false, 2});
    }

    std::vector<PseudoLabelRecord> retained;
    std::vector<InvarianceVerdict> verdicts;
    if (invariance_filter) {
        retained = filter_records(promoted_teacher, records, data, sampling,
                                  config.augment_params(), hash_seed(seed, "stage2-filter"),
                                  &verdicts);
    } else {
        for (auto& r : records) r.retained = true;
        retained = records;
    }

    const std::string prefix = arm == "dist" ? "" : arm + "_";
    StageArtifacts artifacts{2,
                             arm,
                             std::move(records),
                             static_cast<long>(retained.size()),
                             0,
                             Model(config.model_spec(0)),
                             run_dir / "manifests" / (prefix + "stage2.tsv"),
                             run_dir / "checkpoints" / (prefix + "student_stage2.bin")};
    write_manifest(artifacts.manifest_path, artifacts.records);
    if (invariance_filter) {
        write_verdicts(run_dir / "manifests" / (prefix + "stage2_verdicts.tsv"), verdicts);
    }

    if (retained.empty() && !artifacts.records.empty()) {
        log.warn("stage2 (" + arm + "): empty retained set, training supervised-only student");
    }
    const auto mixed = build_mixed_set(data, retained);
    artifacts.mixed_size = static_cast<long>(mixed.size());
    log.info("stage2 (" + arm + "): retained " + std::to_string(retained.size()) + "/" +
             std::to_string(artifacts.records.size()) + " pseudo-labels, mixed size " +
             std::to_string(mixed.size()));

    TrainResult student = train(config.model_spec(hash_seed(seed, arm + "-student2-init")),
                                mixed, config.schedule(), sampling, config.augment_params(),
                                hash_seed(seed, arm + "-student2-train"), false, {}, "student",
                                config.ssl.stage2_warm_start ? &promoted_teacher : nullptr);
    artifacts.student = std::move(student.model);
    artifacts.student.save(artifacts.student_path);
    return artifacts;
}

namespace {

// Audit block for one stage: quadrants of all scored records plus the
// precision of the teacher's raw pseudo-labels on the pre-filter eligible set.
nlohmann::ordered_json stage_audit_json(const StageArtifacts& stage, const ClipSet& data) {
    AuditCounts counts = pseudo_label_audit(stage.records, data);

    std::vector<PseudoLabelRecord> eligible;
    if (stage.stage == 1) {
        eligible = select_top_half(stage.records);
    } else {
        eligible = stage.records;
    }
    long correct = 0;
    for (const auto& r : eligible) {
        if (r.argmax_class == data.oracle_label_for_audit(r.clip_id)) ++correct;
    }
    nlohmann::ordered_json j = audit_json(counts);
    j["pre_filter_count"] = static_cast<long>(eligible.size());
    j["pre_filter_precision"] =
        eligible.empty() ? 0.0 : static_cast<double>(correct) / eligible.size();
    j["retained_count"] = stage.retained_count;
    j["mixed_size"] = stage.mixed_size;
    return j;
}

}  // namespace

nlohmann::ordered_json run_dist(const ExperimentConfig& config) {
    config.validate();
    const fs::path out_dir(config.run.out_dir);
    fs::create_directories(out_dir);
    write_file_atomic(out_dir / "config.snapshot", serialize_config(config));

    std::ostringstream hash_hex;
    hash_hex << std::hex << config_hash(config);

    nlohmann::ordered_json report;
    report["schema_version"] = 1;
    report["config_hash"] = hash_hex.str();
    report["seeds"] = config.run.seeds;
    auto& per_seed = report["per_seed"] = nlohmann::ordered_json::array();

    std::map<std::string, std::vector<double>> accuracies;

    for (uint64_t seed : config.run.seeds) {
        const fs::path run_dir = seed_dir(config, seed);
        fs::create_directories(run_dir);
        RunLog log(run_dir, config.run.log_level);
        log.info("seed " + std::to_string(seed) + ": preparing data");

        ClipSet data = prepare_data(config, seed);
        write_split_record(data, run_dir);

        TeacherArtifacts teacher = train_teacher(config, data, run_dir, seed);

        StageArtifacts dist1 = run_stage1(config, data, teacher, run_dir, seed, true, "dist");
        StageArtifacts dist2 =
            run_stage2(config, data, dist1.student, run_dir, seed, true, "dist");

        std::vector<StageArtifacts> st_stages;
        if (config.ssl.ablation) {
            StageArtifacts st1 = run_stage1(config, data, teacher, run_dir, seed, false, "st");
            StageArtifacts st2 = run_stage2(config, data, st1.student, run_dir, seed, false, "st");
            st_stages.push_back(std::move(st1));
            st_stages.push_back(std::move(st2));
        }

        // All pseudo-labeling and training is done; any oracle access so far
        // would be a supervision leak.
        const long stage_accesses = data.audit_access_count();

        const SamplingParams sampling = config.sampling_params();
        nlohmann::ordered_json seed_json;
        seed_json["seed"] = seed;
        auto summary = clipset_summary(data);
        nlohmann::ordered_json counts;
        for (const auto& [split, n] : summary.per_split) counts[split] = n;
        seed_json["counts"] = counts;
        seed_json["oracle_accesses_during_stages"] = stage_accesses;
        seed_json["teacher_final_loss"] = teacher.epoch_loss.back();

        auto& models = seed_json["models"] = nlohmann::ordered_json::object();
        auto add_model = [&](const std::string& name, const Model& m) {
            EvalResult r = evaluate(m, data, sampling);
            models[name] = eval_json(r);
            accuracies[name].push_back(r.accuracy);
        };
        add_model("supervised", teacher.model);
        add_model("dist_stage1", dist1.student);
        add_model("dist_stage2", dist2.student);
        if (config.ssl.ablation) {
            add_model("st_stage1", st_stages[0].student);
            add_model("st_stage2", st_stages[1].student);
        }

        auto& audits = seed_json["audits"] = nlohmann::ordered_json::object();
        audits["dist_stage1"] = stage_audit_json(dist1, data);
        audits["dist_stage2"] = stage_audit_json(dist2, data);
        std::vector<std::pair<std::string, AuditCounts>> plot_audits = {
            {"dist_stage1", pseudo_label_audit(dist1.records, data)},
            {"dist_stage2", pseudo_label_audit(dist2.records, data)}};
        if (config.ssl.ablation) {
            audits["st_stage1"] = stage_audit_json(st_stages[0], data);
            audits["st_stage2"] = stage_audit_json(st_stages[1], data);
            plot_audits.push_back({"st_stage1", pseudo_label_audit(st_stages[0].records, data)});
            plot_audits.push_back({"st_stage2", pseudo_label_audit(st_stages[1].records, data)});
        }
        fs::create_directories(run_dir / "plots");
        write_audit_plot(run_dir / "plots" / "pseudo_label_audit.ppm", plot_audits);

        per_seed.push_back(std::move(seed_json));
    }

    auto& mean = report["mean_accuracy"] = nlohmann::ordered_json::object();
    for (const auto& [name, accs] : accuracies) {
        double sum = 0.0;
        for (double a : accs) sum += a;
        mean[name] = sum / accs.size();
    }
    auto& improvement = report["average_improvement_vs_supervised"] =
        nlohmann::ordered_json::object();
    for (const auto& [name, accs] : accuracies) {
        if (name == "supervised") continue;
        double sum = 0.0;
        for (size_t i = 0; i < accs.size(); ++i) sum += accs[i] - accuracies["supervised"][i];
        improvement[name] = sum / accs.size();
    }

    write_file_atomic(out_dir / "report.json", report.dump(2) + "\n");
    return report;
}

nlohmann::ordered_json run_supervised(const ExperimentConfig& config) {
    config.validate();
    const fs::path out_dir(config.run.out_dir);
    fs::create_directories(out_dir);
    write_file_atomic(out_dir / "config.snapshot", serialize_config(config));

    nlohmann::ordered_json report;
    report["schema_version"] = 1;
    report["seeds"] = config.run.seeds;
    auto& per_seed = report["per_seed"] = nlohmann::ordered_json::array();
    double acc_sum = 0.0;
    for (uint64_t seed : config.run.seeds) {
        const fs::path run_dir = seed_dir(config, seed);
        ClipSet data = prepare_data(config, seed);
        write_split_record(data, run_dir);
        TeacherArtifacts teacher = train_teacher(config, data, run_dir, seed);
        EvalResult r = evaluate(teacher.model, data, config.sampling_params());
        nlohmann::ordered_json j;
        j["seed"] = seed;
        j["supervised"] = eval_json(r);
        per_seed.push_back(std::move(j));
        acc_sum += r.accuracy;
    }
    report["mean_accuracy"] = acc_sum / config.run.seeds.size();
    write_file_atomic(out_dir / "report.json", report.dump(2) + "\n");
    return report;
}

}  // namespace dist
