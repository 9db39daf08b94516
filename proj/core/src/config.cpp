#include "dist/config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dist/io_util.hpp"

namespace dist {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void config_error(const std::string& key, const std::string& reason) {
    throw std::invalid_argument("config: key '" + key + "': " + reason);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (...) {
        config_error(key, "expected integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (...) {
        config_error(key, "expected number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    config_error(key, "expected boolean, got '" + v + "'");
}

std::vector<uint64_t> parse_seed_list(const std::string& key, const std::string& v) {
    std::vector<uint64_t> seeds;
    std::istringstream in(v);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) config_error(key, "empty list element");
        try {
            size_t pos = 0;
            seeds.push_back(std::stoull(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument("trailing");
        } catch (...) {
            config_error(key, "expected integer list, got '" + tok + "'");
        }
    }
    if (seeds.empty()) config_error(key, "empty seed list");
    return seeds;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (data.num_classes < 2) config_error("data.num_classes", "must be >= 2");
    if (data.num_clips < data.num_classes) config_error("data.num_clips", "must be >= num_classes");
    if (data.frames_per_clip < 1) config_error("data.frames_per_clip", "must be >= 1");
    if (data.frame_size < ModelSpec::kGrid)
        config_error("data.frame_size", "must be >= " + std::to_string(ModelSpec::kGrid));
    if (data.difficulty < 0.0 || data.difficulty > 1.0)
        config_error("data.difficulty", "must lie in [0,1]");
    if (data.labeled_fraction <= 0.0 || data.labeled_fraction >= 1.0)
        config_error("data.labeled_fraction", "must lie in (0,1)");
    if (data.test_fraction <= 0.0 || data.test_fraction >= 1.0)
        config_error("data.test_fraction", "must lie in (0,1)");
    if (data.labeled_fraction + data.test_fraction >= 1.0)
        config_error("data.labeled_fraction", "labeled_fraction + test_fraction must be < 1");
    if (model.conv_channels < 1) config_error("model.conv_channels", "must be >= 1");
    schedule().validate();
    if (ssl.target_frames < 1) config_error("ssl.target_frames", "must be >= 1");
    augment_params().validate();
    if (ssl.window_s <= 0.0) config_error("ssl.window_s", "must be positive");
    if (ssl.overlap_s < 0.0 || ssl.overlap_s >= ssl.window_s)
        config_error("ssl.overlap_s", "must lie in [0, window_s)");
    if (run.seeds.empty()) config_error("run.seeds", "must not be empty");
    if (run.log_level != "info" && run.log_level != "debug" && run.log_level != "quiet")
        config_error("run.log_level", "must be one of info, debug, quiet");
}

GeneratorParams ExperimentConfig::generator_params(uint64_t seed) const {
    return {data.num_clips, data.num_classes, data.frames_per_clip,
            data.frame_size, data.difficulty, seed};
}

ModelSpec ExperimentConfig::model_spec(uint64_t init_seed) const {
    ModelSpec spec;
    spec.arch = model.arch;
    spec.num_classes = data.num_classes;
    spec.target_frames = ssl.target_frames;
    spec.frame_size = data.frame_size;
    spec.conv_channels = model.conv_channels;
    spec.init_seed = init_seed;
    return spec;
}

TrainSchedule ExperimentConfig::schedule() const {
    return {train.epochs, train.batch_size, train.base_lr,
            train.lr_gamma, train.lr_step_every, train.momentum};
}

SamplingParams ExperimentConfig::sampling_params() const { return {ssl.target_frames}; }

AugmentParams ExperimentConfig::augment_params() const {
    return {ssl.max_rotation_deg, ssl.brightness_jitter, ssl.contrast_jitter,
            ssl.saturation_jitter, ssl.blur_kernel, ssl.blur_sigma_lo, ssl.blur_sigma_hi};
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;

    using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"data.num_clips", [](auto& c, auto& k, auto& v) { c.data.num_clips = parse_int(k, v); }},
        {"data.num_classes", [](auto& c, auto& k, auto& v) { c.data.num_classes = parse_int(k, v); }},
        {"data.frames_per_clip", [](auto& c, auto& k, auto& v) { c.data.frames_per_clip = parse_int(k, v); }},
        {"data.frame_size", [](auto& c, auto& k, auto& v) { c.data.frame_size = parse_int(k, v); }},
        {"data.difficulty", [](auto& c, auto& k, auto& v) { c.data.difficulty = parse_double(k, v); }},
        {"data.labeled_fraction", [](auto& c, auto& k, auto& v) { c.data.labeled_fraction = parse_double(k, v); }},
        {"data.test_fraction", [](auto& c, auto& k, auto& v) { c.data.test_fraction = parse_double(k, v); }},
        {"data.dataset_path", [](auto& c, auto&, auto& v) { c.data.dataset_path = v; }},
        {"model.arch", [](auto& c, auto&, auto& v) { c.model.arch = v; }},
        {"model.conv_channels", [](auto& c, auto& k, auto& v) { c.model.conv_channels = parse_int(k, v); }},
        {"train.epochs", [](auto& c, auto& k, auto& v) { c.train.epochs = parse_int(k, v); }},
        {"train.batch_size", [](auto& c, auto& k, auto& v) { c.train.batch_size = parse_int(k, v); }},
        {"train.base_lr", [](auto& c, auto& k, auto& v) { c.train.base_lr = parse_double(k, v); }},
        {"train.lr_gamma", [](auto& c, auto& k, auto& v) { c.train.lr_gamma = parse_double(k, v); }},
        {"train.lr_step_every", [](auto& c, auto& k, auto& v) { c.train.lr_step_every = parse_int(k, v); }},
        {"train.momentum", [](auto& c, auto& k, auto& v) { c.train.momentum = parse_double(k, v); }},
        {"ssl.target_frames", [](auto& c, auto& k, auto& v) { c.ssl.target_frames = parse_int(k, v); }},
        {"ssl.max_rotation_deg", [](auto& c, auto& k, auto& v) { c.ssl.max_rotation_deg = parse_double(k, v); }},
        {"ssl.brightness_jitter", [](auto& c, auto& k, auto& v) { c.ssl.brightness_jitter = parse_double(k, v); }},
        {"ssl.contrast_jitter", [](auto& c, auto& k, auto& v) { c.ssl.contrast_jitter = parse_double(k, v); }},
        {"ssl.saturation_jitter", [](auto& c, auto& k, auto& v) { c.ssl.saturation_jitter = parse_double(k, v); }},
        {"ssl.blur_kernel", [](auto& c, auto& k, auto& v) { c.ssl.blur_kernel = parse_int(k, v); }},
        {"ssl.blur_sigma_lo", [](auto& c, auto& k, auto& v) { c.ssl.blur_sigma_lo = parse_double(k, v); }},
        {"ssl.blur_sigma_hi", [](auto& c, auto& k, auto& v) { c.ssl.blur_sigma_hi = parse_double(k, v); }},
        {"ssl.ablation", [](auto& c, auto& k, auto& v) { c.ssl.ablation = parse_bool(k, v); }},
        {"ssl.flush_last_window", [](auto& c, auto& k, auto& v) { c.ssl.flush_last_window = parse_bool(k, v); }},
        {"ssl.stage2_warm_start", [](auto& c, auto& k, auto& v) { c.ssl.stage2_warm_start = parse_bool(k, v); }},
        {"ssl.window_s", [](auto& c, auto& k, auto& v) { c.ssl.window_s = parse_double(k, v); }},
        {"ssl.overlap_s", [](auto& c, auto& k, auto& v) { c.ssl.overlap_s = parse_double(k, v); }},
        {"run.out_dir", [](auto& c, auto&, auto& v) { c.run.out_dir = v; }},
        {"run.seeds", [](auto& c, auto& k, auto& v) { c.run.seeds = parse_seed_list(k, v); }},
        {"run.log_level", [](auto& c, auto&, auto& v) { c.run.log_level = v; }},
    };
    static const std::vector<std::string> sections = {"data", "model", "train", "ssl", "run"};

    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::invalid_argument("config: malformed section header at line " +
                                            std::to_string(line_no));
            }
            section = trim(line.substr(1, line.size() - 2));
            if (std::find(sections.begin(), sections.end(), section) == sections.end()) {
                throw std::invalid_argument("config: unknown section '" + section + "'");
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: expected 'key = value' at line " +
                                        std::to_string(line_no));
        }
        if (section.empty()) {
            throw std::invalid_argument("config: key outside any section at line " +
                                        std::to_string(line_no));
        }
        const std::string key = section + "." + trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) config_error(key, "unknown key");
        it->second(cfg, key, value);
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
    return parse_config(read_text_file(path));
}

std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "[data]\n"
        << "num_clips = " << c.data.num_clips << "\n"
        << "num_classes = " << c.data.num_classes << "\n"
        << "frames_per_clip = " << c.data.frames_per_clip << "\n"
        << "frame_size = " << c.data.frame_size << "\n"
        << "difficulty = " << c.data.difficulty << "\n"
        << "labeled_fraction = " << c.data.labeled_fraction << "\n"
        << "test_fraction = " << c.data.test_fraction << "\n";
    if (!c.data.dataset_path.empty()) out << "dataset_path = " << c.data.dataset_path << "\n";
    out << "\n[model]\n"
        << "arch = " << c.model.arch << "\n"
        << "conv_channels = " << c.model.conv_channels << "\n"
        << "\n[train]\n"
        << "epochs = " << c.train.epochs << "\n"
        << "batch_size = " << c.train.batch_size << "\n"
        << "base_lr = " << c.train.base_lr << "\n"
        << "lr_gamma = " << c.train.lr_gamma << "\n"
        << "lr_step_every = " << c.train.lr_step_every << "\n"
        << "momentum = " << c.train.momentum << "\n"
        << "\n[ssl]\n"
        << "target_frames = " << c.ssl.target_frames << "\n"
        << "max_rotation_deg = " << c.ssl.max_rotation_deg << "\n"
        << "brightness_jitter = " << c.ssl.brightness_jitter << "\n"
        << "contrast_jitter = " << c.ssl.contrast_jitter << "\n"
        << "saturation_jitter = " << c.ssl.saturation_jitter << "\n"
        << "blur_kernel = " << c.ssl.blur_kernel << "\n"
        << "blur_sigma_lo = " << c.ssl.blur_sigma_lo << "\n"
        << "blur_sigma_hi = " << c.ssl.blur_sigma_hi << "\n"
        << "ablation = " << (c.ssl.ablation ? "true" : "false") << "\n"
        << "flush_last_window = " << (c.ssl.flush_last_window ? "true" : "false") << "\n"
        << "stage2_warm_start = " << (c.ssl.stage2_warm_start ? "true" : "false") << "\n"
        << "window_s = " << c.ssl.window_s << "\n"
        << "overlap_s = " << c.ssl.overlap_s << "\n"
        << "\n[run]\n"
        << "out_dir = " << c.run.out_dir << "\n"
        << "seeds = ";
    for (size_t i = 0; i < c.run.seeds.size(); ++i) {
        if (i) out << ", ";
        out << c.run.seeds[i];
    }
    out << "\n"
        << "log_level = " << c.run.log_level << "\n";
    return out.str();
}

uint64_t config_hash(const ExperimentConfig& config) {
    return hash_seed(0x9d15ULL, serialize_config(config));
}

}  // namespace dist
