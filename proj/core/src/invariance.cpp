#include "dist/invariance.hpp"

#include <cstdio>
#include <stdexcept>

#include "dist/io_util.hpp"

namespace dist {

std::vector<PseudoLabelRecord> filter_records(const Model& model,
                                              std::vector<PseudoLabelRecord>& records,
                                              const ClipSet& clips,
                                              const SamplingParams& sampling,
                                              const AugmentParams& aug, uint64_t seed,
                                              std::vector<InvarianceVerdict>* verdicts) {
    if (model.spec().num_classes != clips.num_classes()) {
        throw std::invalid_argument("filter_records: model/clip set class count mismatch");
    }

    std::vector<PseudoLabelRecord> retained;
    for (auto& record : records) {
        const Clip* clip = clips.find(record.clip_id);
        if (!clip) {
            throw std::invalid_argument("filter_records: unknown clip id '" + record.clip_id + "'");
        }

        const int pred_uniform = model.predict_class(uniform_sample(*clip, sampling));
        const uint64_t clip_seed = hash_seed(seed, "invariance:" + record.clip_id);
        const FrameArray counterpart = strong_augment(
            random_stratified_sample(*clip, sampling, clip_seed), aug,
            hash_seed(clip_seed, "aug"));
        const int pred_augmented = model.predict_class(counterpart);

        record.invariant = dual_invariance_keep(pred_uniform, pred_augmented);
        record.retained = record.invariant;
        record.argmax_class = pred_uniform;  // the kept label is the uniform prediction
        if (verdicts) {
            verdicts->push_back({record.clip_id, pred_uniform, pred_augmented, record.invariant});
        }
        if (record.retained) retained.push_back(record);
    }
    return retained;
}

void write_verdicts(const std::filesystem::path& path,
                    const std::vector<InvarianceVerdict>& verdicts) {
    std::string out = "clip_id\tpred_uniform\tpred_augmented\tkeep\n";
    char line[192];
    for (const auto& v : verdicts) {
        std::snprintf(line, sizeof(line), "%s\t%d\t%d\t%d\n", v.clip_id.c_str(), v.pred_uniform,
                      v.pred_augmented, v.keep ? 1 : 0);
        out += line;
    }
    write_file_atomic(path, out);
}

}  // namespace dist
