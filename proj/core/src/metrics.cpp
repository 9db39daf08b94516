#include "dist/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dist/io_util.hpp"

namespace dist {

EvalResult evaluate(const Model& model, const ClipSet& test, const SamplingParams& sampling) {
    const int classes = test.num_classes();
    if (model.spec().num_classes != classes) {
        throw std::invalid_argument("evaluate: model/clip set class count mismatch");
    }

    EvalResult result;
    result.confusion.assign(classes, std::vector<long>(classes, 0));
    for (const Clip& clip : test.clips()) {
        if (clip.split() != Split::test) continue;
        const int pred = model.predict_class(uniform_sample(clip, sampling));
        const int truth = test.oracle_label_for_audit(clip.id());
        result.confusion[truth][pred] += 1;
        result.total += 1;
    }
    if (result.total == 0) throw std::invalid_argument("evaluate: empty test split");

    long diag = 0;
    for (int c = 0; c < classes; ++c) diag += result.confusion[c][c];
    result.accuracy = static_cast<double>(diag) / result.total;
    result.macro_f1 = macro_f1_from_confusion(result.confusion);
    return result;
}

double macro_f1_from_confusion(const std::vector<std::vector<long>>& confusion) {
    const int classes = static_cast<int>(confusion.size());
    double f1_sum = 0.0;
    for (int c = 0; c < classes; ++c) {
        long tp = confusion[c][c];
        long row = 0, col = 0;
        for (int j = 0; j < classes; ++j) {
            row += confusion[c][j];
            col += confusion[j][c];
        }
        // F1 = 2tp / (row + col); zero when the class never appears.
        f1_sum += (row + col) > 0 ? 2.0 * tp / static_cast<double>(row + col) : 0.0;
    }
    return classes > 0 ? f1_sum / classes : 0.0;
}

double AuditCounts::retained_precision() const {
    const long retained = correct_retained + incorrect_retained;
    return retained > 0 ? static_cast<double>(correct_retained) / retained : 0.0;
}

AuditCounts pseudo_label_audit(const std::vector<PseudoLabelRecord>& records,
                               const ClipSet& oracle) {
    AuditCounts counts;
    for (const auto& r : records) {
        const bool correct = r.argmax_class == oracle.oracle_label_for_audit(r.clip_id);
        if (r.retained) {
            (correct ? counts.correct_retained : counts.incorrect_retained) += 1;
        } else {
            (correct ? counts.correct_discarded : counts.incorrect_discarded) += 1;
        }
    }
    return counts;
}

std::vector<double> timeline_window_starts(double duration_s, double window_s, double stride_s,
                                           bool flush_last) {
    if (window_s <= 0.0 || stride_s <= 0.0) {
        throw std::invalid_argument("timeline: window and stride must be positive");
    }
    if (duration_s + 1e-9 < window_s) {
        throw std::invalid_argument("timeline: sequence shorter than one window");
    }
    std::vector<double> starts;
    for (double s = 0.0; s + window_s <= duration_s + 1e-9; s += stride_s) {
        starts.push_back(s);
    }
    if (flush_last && !starts.empty()) {
        const double covered = starts.back() + window_s;
        if (covered + 1e-9 < duration_s) starts.push_back(duration_s - window_s);
    }
    return starts;
}

PhaseTimeline timeline_predict(const Model& model, const FrameArray& sequence, double fps,
                               const SamplingParams& sampling, double window_s,
                               double stride_s, bool flush_last) {
    if (fps <= 0.0) throw std::invalid_argument("timeline: fps must be positive");
    const double duration = sequence.frames / fps;
    PhaseTimeline timeline;
    timeline.window_s = window_s;
    timeline.stride_s = stride_s;

    for (double start : timeline_window_starts(duration, window_s, stride_s, flush_last)) {
        const int f0 = static_cast<int>(std::lround(start * fps));
        int f1 = static_cast<int>(std::lround((start + window_s) * fps));
        f1 = std::min(f1, sequence.frames);

        FrameArray window(f1 - f0, sequence.height, sequence.width);
        std::copy_n(sequence.data.begin() + static_cast<size_t>(f0) * sequence.frame_stride(),
                    window.data.size(), window.data.begin());
        const int pred = model.predict_class(uniform_sample(window, sampling));
        timeline.windows.push_back({start, start + window_s, pred});
    }
    return timeline;
}

void write_timeline_table(const std::filesystem::path& path, const PhaseTimeline& timeline) {
    std::string out = "start_s\tend_s\tclass\n";
    char line[96];
    for (const auto& w : timeline.windows) {
        std::snprintf(line, sizeof(line), "%.3f\t%.3f\t%d\n", w.start_s, w.end_s, w.class_idx);
        out += line;
    }
    write_file_atomic(path, out);
}

void write_timeline_ppm(const std::filesystem::path& path, const PhaseTimeline& timeline,
                        int num_classes) {
    if (timeline.windows.empty()) throw std::invalid_argument("timeline plot: no windows");
    const int band_w = 24;
    const int height = 48;
    const int width = band_w * static_cast<int>(timeline.windows.size());

    // Fixed palette, cycled for higher class counts.
    static const unsigned char palette[][3] = {
        {230, 180, 60}, {120, 90, 200}, {70, 120, 220}, {150, 150, 150},
        {90, 180, 90},  {210, 90, 90},  {80, 190, 190}, {200, 140, 190},
    };
    const int palette_n = sizeof(palette) / sizeof(palette[0]);
    (void)num_classes;

    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.reserve(out.size() + static_cast<size_t>(width) * height * 3);
    for (int y = 0; y < height; ++y) {
        for (size_t w = 0; w < timeline.windows.size(); ++w) {
            const unsigned char* rgb = palette[timeline.windows[w].class_idx % palette_n];
            for (int x = 0; x < band_w; ++x) {
                out.push_back(static_cast<char>(rgb[0]));
                out.push_back(static_cast<char>(rgb[1]));
                out.push_back(static_cast<char>(rgb[2]));
            }
        }
    }
    write_file_atomic(path, out);
}

}  // namespace dist
