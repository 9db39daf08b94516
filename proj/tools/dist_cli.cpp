// Command-line front end for the self-training toolkit. One subcommand per
// pipeline entry point; every failure exits nonzero with a single
// "error: ..." line on stderr.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dist/clipset.hpp"
#include "dist/config.hpp"
#include "dist/io_util.hpp"
#include "dist/metrics.hpp"
#include "dist/model.hpp"
#include "dist/pipeline.hpp"
#include "dist/reliability.hpp"
#include "dist/sampling.hpp"
#include "dist/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace dist;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_dir;  // --out flag; DIST_OUT_DIR env is lower precedence
};

void add_global_opts(CLI::App* cmd, GlobalOpts& g) {
    cmd->add_option("--config", g.config_path, "Experiment config file");
    cmd->add_option("--seed", g.seed, "Single seed, overriding the config seed list");
    cmd->add_option("--out", g.out_dir, "Output directory (overrides DIST_OUT_DIR and config)");
}

// Precedence for the output directory: --out flag > DIST_OUT_DIR > config.
ExperimentConfig resolve_config(const GlobalOpts& g) {
    ExperimentConfig cfg;
    if (!g.config_path.empty()) {
        if (!fs::exists(g.config_path)) {
            throw std::invalid_argument("config file not found: " + g.config_path);
        }
        cfg = load_config_file(g.config_path);
    }
    if (const char* env = std::getenv("DIST_OUT_DIR"); env && *env) cfg.run.out_dir = env;
    if (!g.out_dir.empty()) cfg.run.out_dir = g.out_dir;
    if (g.seed) cfg.run.seeds = {*g.seed};
    cfg.validate();
    return cfg;
}

fs::path seed_dir(const ExperimentConfig& cfg, uint64_t seed) {
    return fs::path(cfg.run.out_dir) / ("seed_" + std::to_string(seed));
}

int cmd_gen_data(const GlobalOpts& g) {
    ExperimentConfig cfg = resolve_config(g);
    const uint64_t seed = cfg.run.seeds.front();
    ClipSet set = prepare_data(cfg, seed);
    const fs::path dir = fs::path(cfg.run.out_dir) / "dataset";
    save_clipset(set, dir);
    std::cout << "wrote " << dir.string() << "\n" << clipset_summary(set).to_text();
    return 0;
}

int cmd_run(const GlobalOpts& g) {
    ExperimentConfig cfg = resolve_config(g);
    nlohmann::ordered_json report = run_dist(cfg);
    std::cout << report.at("mean_accuracy").dump(2) << "\n"
              << "report: " << (fs::path(cfg.run.out_dir) / "report.json").string() << "\n";
    return 0;
}

int cmd_supervised(const GlobalOpts& g) {
    ExperimentConfig cfg = resolve_config(g);
    nlohmann::ordered_json report = run_supervised(cfg);
    std::cout << "mean_accuracy: " << report.at("mean_accuracy").dump() << "\n"
              << "report: " << (fs::path(cfg.run.out_dir) / "report.json").string() << "\n";
    return 0;
}

int cmd_stage1(const GlobalOpts& g) {
    ExperimentConfig cfg = resolve_config(g);
    for (uint64_t seed : cfg.run.seeds) {
        const fs::path run_dir = seed_dir(cfg, seed);
        ClipSet data = prepare_data(cfg, seed);
        TeacherArtifacts teacher = train_teacher(cfg, data, run_dir, seed);
        StageArtifacts s1 = run_stage1(cfg, data, teacher, run_dir, seed);
        std::cout << "seed " << seed << ": retained " << s1.retained_count << "/"
                  << s1.records.size() << ", student " << s1.student_path.string() << "\n";
    }
    return 0;
}

int cmd_stage2(const GlobalOpts& g) {
    ExperimentConfig cfg = resolve_config(g);
    for (uint64_t seed : cfg.run.seeds) {
        const fs::path run_dir = seed_dir(cfg, seed);
        const fs::path stage1_student = run_dir / "checkpoints" / "student_stage1.bin";
        if (!fs::exists(stage1_student)) {
            throw std::runtime_error("stage1 artifacts missing: " + stage1_student.string());
        }
        ClipSet data = prepare_data(cfg, seed);
        Model promoted = Model::load(stage1_student);
        StageArtifacts s2 = run_stage2(cfg, data, promoted, run_dir, seed);
        std::cout << "seed " << seed << ": retained " << s2.retained_count << "/"
                  << s2.records.size() << ", student " << s2.student_path.string() << "\n";
    }
    return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& model_path) {
    ExperimentConfig cfg = resolve_config(g);
    Model model = Model::load(model_path);
    const uint64_t seed = cfg.run.seeds.front();
    ClipSet data = prepare_data(cfg, seed);
    EvalResult r = evaluate(model, data, cfg.sampling_params());
    nlohmann::ordered_json j;
    j["model"] = model_path;
    j["seed"] = seed;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    j["test_count"] = r.total;
    j["confusion"] = r.confusion;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_audit(const GlobalOpts& g, const std::string& manifest_path) {
    ExperimentConfig cfg = resolve_config(g);
    if (!fs::exists(manifest_path)) {
        throw std::invalid_argument("manifest not found: " + manifest_path);
    }
    std::vector<PseudoLabelRecord> records = read_manifest(manifest_path);
    const uint64_t seed = cfg.run.seeds.front();
    ClipSet data = prepare_data(cfg, seed);
    AuditCounts a = pseudo_label_audit(records, data);
    nlohmann::ordered_json j;
    j["manifest"] = manifest_path;
    j["records"] = records.size();
    j["correct_retained"] = a.correct_retained;
    j["incorrect_retained"] = a.incorrect_retained;
    j["correct_discarded"] = a.correct_discarded;
    j["incorrect_discarded"] = a.incorrect_discarded;
    j["retained_precision"] = a.retained_precision();
    std::cout << j.dump(2) << "\n";
    return 0;
}

// Bands are given as comma-separated duration:class pairs, e.g. "3:0,3:1,3:2".
std::vector<PhaseBand> parse_bands(const std::string& text) {
    std::vector<PhaseBand> bands;
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos) {
            throw std::invalid_argument("bad band '" + tok + "', expected duration:class");
        }
        PhaseBand b;
        b.duration_s = std::stod(tok.substr(0, colon));
        b.class_idx = std::stoi(tok.substr(colon + 1));
        bands.push_back(b);
    }
    if (bands.empty()) throw std::invalid_argument("empty band list");
    return bands;
}

int cmd_timeline(const GlobalOpts& g, const std::string& model_path, const std::string& bands_text,
                 double fps) {
    ExperimentConfig cfg = resolve_config(g);
    Model model = Model::load(model_path);
    const uint64_t seed = cfg.run.seeds.front();
    const std::vector<PhaseBand> bands = parse_bands(bands_text);
    FrameArray seq = generate_phase_sequence(bands, fps, cfg.data.frame_size,
                                             cfg.data.difficulty, hash_seed(seed, "timeline"),
                                             cfg.data.num_classes);
    const double stride = cfg.ssl.window_s - cfg.ssl.overlap_s;
    PhaseTimeline tl = timeline_predict(model, seq, fps, cfg.sampling_params(), cfg.ssl.window_s,
                                        stride, cfg.ssl.flush_last_window);

    const fs::path out(cfg.run.out_dir);
    fs::create_directories(out);
    write_timeline_table(out / "timeline.tsv", tl);
    write_timeline_ppm(out / "timeline.ppm", tl, cfg.data.num_classes);
    for (const auto& w : tl.windows) {
        std::cout << w.start_s << "\t" << w.end_s << "\t" << w.class_idx << "\n";
    }
    std::cout << "wrote " << (out / "timeline.tsv").string() << " and "
              << (out / "timeline.ppm").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised self-training toolkit for synthetic clip classification"};
    app.require_subcommand(1);

    GlobalOpts g_gen, g_run, g_sup, g_s1, g_s2, g_eval, g_audit, g_tl;
    std::string eval_model, audit_manifest, tl_model, tl_bands = "3:0,3:1,3:2";
    double tl_fps = 4.0;

    auto* gen = app.add_subcommand("gen-data", "Generate and persist a synthetic clip set");
    add_global_opts(gen, g_gen);

    auto* run = app.add_subcommand("run", "Full two-stage self-training pipeline per seed");
    add_global_opts(run, g_run);

    auto* sup = app.add_subcommand("supervised", "Supervised baseline only");
    add_global_opts(sup, g_sup);

    auto* s1 = app.add_subcommand("stage1", "Teacher training plus stage-1 student");
    add_global_opts(s1, g_s1);

    auto* s2 = app.add_subcommand("stage2", "Stage-2 student, resuming from stage-1 artifacts");
    add_global_opts(s2, g_s2);

    auto* ev = app.add_subcommand("eval", "Evaluate a saved model on the test split");
    add_global_opts(ev, g_eval);
    ev->add_option("--model", eval_model, "Model checkpoint file")->required();

    auto* audit = app.add_subcommand("audit", "Pseudo-label audit of a manifest against oracle labels");
    add_global_opts(audit, g_audit);
    audit->add_option("--manifest", audit_manifest, "Manifest TSV file")->required();

    auto* tl = app.add_subcommand("timeline", "Sliding-window inference over a phase sequence");
    add_global_opts(tl, g_tl);
    tl->add_option("--model", tl_model, "Model checkpoint file")->required();
    tl->add_option("--bands", tl_bands, "Phase bands as duration:class,... (default 3:0,3:1,3:2)");
    tl->add_option("--fps", tl_fps, "Frames per second of the generated sequence");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(g_gen);
        if (run->parsed()) return cmd_run(g_run);
        if (sup->parsed()) return cmd_supervised(g_sup);
        if (s1->parsed()) return cmd_stage1(g_s1);
        if (s2->parsed()) return cmd_stage2(g_s2);
        if (ev->parsed()) return cmd_eval(g_eval, eval_model);
        if (audit->parsed()) return cmd_audit(g_audit, audit_manifest);
        if (tl->parsed()) return cmd_timeline(g_tl, tl_model, tl_bands, tl_fps);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}
