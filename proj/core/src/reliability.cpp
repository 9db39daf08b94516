#include "dist/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "dist/io_util.hpp"

namespace dist {

namespace {

void check_prob_vector(const std::vector<double>& z, const char* name) {
    if (z.empty()) throw std::invalid_argument(std::string("reliability: empty vector ") + name);
    double sum = 0.0;
    for (double v : z) {
        if (v < 0.0 || !std::isfinite(v)) {
            throw std::invalid_argument(std::string("reliability: negative or non-finite entry in ") + name);
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument(std::string("reliability: ") + name +
                                    " not normalized (sum=" + std::to_string(sum) + ")");
    }
}

}  // namespace

void CheckpointPredictions::validate() const {
    check_prob_vector(z1, "z1");
    check_prob_vector(z2, "z2");
    check_prob_vector(zf, "zf");
    if (z1.size() != zf.size() || z2.size() != zf.size()) {
        throw std::invalid_argument("reliability: checkpoint vectors have unequal lengths");
    }
}

ScoreResult reliability_score(const CheckpointPredictions& preds) {
    preds.validate();
    const int c = argmax(preds.zf);
    const double a = preds.z1[c];
    const double b = preds.z2[c];
    // Elementwise (z * e_c) / (z + e_c) summed over classes, with 0/0 := 0,
    // collapses to the argmax entry of each earlier checkpoint.
    const double r = (a / (a + 1.0) + 2.0 * b / (b + 1.0)) / 3.0;
    return {c, r};
}

std::vector<PseudoLabelRecord> score_unlabeled_set(const Model& ckpt1, const Model& ckpt2,
                                                   const Model& ckpt_final,
                                                   const ClipSet& clips,
                                                   const SamplingParams& sampling) {
    for (const Model* m : {&ckpt1, &ckpt2, &ckpt_final}) {
        if (m->spec().num_classes != clips.num_classes()) {
            throw std::invalid_argument("score_unlabeled_set: checkpoint has " +
                                        std::to_string(m->spec().num_classes) +
                                        " classes, clip set has " +
                                        std::to_string(clips.num_classes()));
        }
    }

    std::vector<PseudoLabelRecord> records;
    for (const Clip& clip : clips.clips()) {
        if (clip.split() != Split::unlabeled) continue;
        const FrameArray seq = uniform_sample(clip, sampling);
        CheckpointPredictions preds{ckpt1.predict_probs(seq), ckpt2.predict_probs(seq),
                                    ckpt_final.predict_probs(seq)};
        const ScoreResult score = reliability_score(preds);
        records.push_back({clip.id(), score.argmax_class, score.reliability,
                           /*invariant=*/false, /*retained=*/false, /*stage=*/1});
    }
    return records;
}

double median_score(const std::vector<PseudoLabelRecord>& records) {
    if (records.empty()) throw std::invalid_argument("median of empty record list");
    std::vector<double> scores;
    scores.reserve(records.size());
    for (const auto& r : records) scores.push_back(r.reliability);
    std::sort(scores.begin(), scores.end());
    const size_t n = scores.size();
    if (n % 2 == 1) return scores[n / 2];
    return 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
}

std::vector<PseudoLabelRecord> select_top_half(const std::vector<PseudoLabelRecord>& records) {
    if (records.empty()) return {};
    const double median = median_score(records);
    std::vector<PseudoLabelRecord> kept;
    for (const auto& r : records) {
        if (r.reliability > median) kept.push_back(r);
    }
    return kept;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<PseudoLabelRecord>& records) {
    std::string out = "clip_id\targmax_class\treliability\tinvariant\tretained\tstage\n";
    char line[256];
    for (const auto& r : records) {
        std::snprintf(line, sizeof(line), "%s\t%d\t%.6f\t%d\t%d\t%d\n", r.clip_id.c_str(),
                      r.argmax_class, r.reliability, r.invariant ? 1 : 0, r.retained ? 1 : 0,
                      r.stage);
        out += line;
    }
    write_file_atomic(path, out);
}

std::vector<PseudoLabelRecord> read_manifest(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty manifest: " + path.string());
    std::vector<PseudoLabelRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        PseudoLabelRecord r;
        int inv = 0, ret = 0;
        if (!(ls >> r.clip_id >> r.argmax_class >> r.reliability >> inv >> ret >> r.stage)) {
            throw std::runtime_error("malformed manifest line: " + line);
        }
        r.invariant = inv != 0;
        r.retained = ret != 0;
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace dist
