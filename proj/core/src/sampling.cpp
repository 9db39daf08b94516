#include "dist/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "dist/io_util.hpp"

namespace dist {

void AugmentParams::validate() const {
    if (blur_kernel < 1 || blur_kernel % 2 == 0)
        throw std::invalid_argument("blur_kernel must be odd and >= 1");
    if (blur_sigma_lo > blur_sigma_hi)
        throw std::invalid_argument("blur sigma range must satisfy lo <= hi");
    if (blur_sigma_lo <= 0.0)
        throw std::invalid_argument("blur sigma must be positive");
    if (brightness_jitter < 0.0 || contrast_jitter < 0.0 || saturation_jitter < 0.0)
        throw std::invalid_argument("jitter amounts must be >= 0");
    if (max_rotation_deg < 0.0)
        throw std::invalid_argument("max_rotation_deg must be >= 0");
}

std::vector<int> uniform_sample_indices(int num_frames, int target_frames) {
    if (num_frames < 1) throw std::invalid_argument("uniform_sample: empty clip");
    if (target_frames < 1) throw std::invalid_argument("uniform_sample: target_frames must be >= 1");
    std::vector<int> idx(target_frames);
    if (target_frames == 1) {
        idx[0] = 0;
        return idx;
    }
    for (int i = 0; i < target_frames; ++i) {
        idx[i] = static_cast<int>(static_cast<long>(i) * (num_frames - 1) / (target_frames - 1));
    }
    return idx;
}

std::vector<int> stratified_sample_indices(int num_frames, int target_frames, uint64_t seed) {
    if (num_frames < 1) throw std::invalid_argument("stratified_sample: empty clip");
    if (target_frames < 1)
        throw std::invalid_argument("stratified_sample: target_frames must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<int> idx(target_frames);
    const long l = num_frames;
    const long t = target_frames;
    for (long i = 0; i < t; ++i) {
        long lo = i * l / t;
        long hi = (i + 1) * l / t;
        if (hi <= lo) hi = lo + 1;  // short clips: strata of width one, repeated
        hi = std::min(hi, l);
        lo = std::min(lo, l - 1);
        std::uniform_int_distribution<long> pick(lo, hi - 1);
        idx[i] = static_cast<int>(pick(rng));
    }
    return idx;
}

namespace {

FrameArray gather_frames(const FrameArray& src, const std::vector<int>& indices) {
    FrameArray out(static_cast<int>(indices.size()), src.height, src.width);
    for (size_t i = 0; i < indices.size(); ++i) {
        const size_t stride = src.frame_stride();
        std::copy_n(src.data.begin() + indices[i] * stride, stride,
                    out.data.begin() + i * stride);
    }
    return out;
}

void rotate_frame(const float* in, float* out, int h, int w, double angle_rad) {
    const double cx = 0.5 * (w - 1);
    const double cy = 0.5 * (h - 1);
    const double c = std::cos(-angle_rad);
    const double s = std::sin(-angle_rad);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            const double sx = cx + c * dx - s * dy;
            const double sy = cy + s * dx + c * dy;
            double v = 0.0;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            if (x0 >= -1 && x0 < w && y0 >= -1 && y0 < h) {
                const double fx = sx - x0;
                const double fy = sy - y0;
                auto px = [&](int yy, int xx) -> double {
                    if (xx < 0 || xx >= w || yy < 0 || yy >= h) return 0.0;
                    return in[yy * w + xx];
                };
                v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                    fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
            }
            out[y * w + x] = static_cast<float>(v);
        }
    }
}

// Separable Gaussian; the kernel is renormalized over the in-bounds support
// so constant frames stay constant at the borders.
void blur_frame(float* buf, float* scratch, int h, int w, int kernel, double sigma) {
    const int r = kernel / 2;
    if (r == 0) return;
    std::vector<double> weights(2 * r + 1);
    for (int d = -r; d <= r; ++d) {
        weights[d + r] = std::exp(-0.5 * d * d / (sigma * sigma));
    }
    // horizontal
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (int d = -r; d <= r; ++d) {
                const int xx = x + d;
                if (xx < 0 || xx >= w) continue;
                acc += weights[d + r] * buf[y * w + xx];
                wsum += weights[d + r];
            }
            scratch[y * w + x] = static_cast<float>(acc / wsum);
        }
    }
    // vertical
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, wsum = 0.0;
            for (int d = -r; d <= r; ++d) {
                const int yy = y + d;
                if (yy < 0 || yy >= h) continue;
                acc += weights[d + r] * scratch[yy * w + x];
                wsum += weights[d + r];
            }
            buf[y * w + x] = static_cast<float>(acc / wsum);
        }
    }
}

}  // namespace

FrameArray uniform_sample(const FrameArray& frames, const SamplingParams& params) {
    if (frames.empty()) throw std::invalid_argument("uniform_sample: empty clip");
    return gather_frames(frames, uniform_sample_indices(frames.frames, params.target_frames));
}

FrameArray uniform_sample(const Clip& clip, const SamplingParams& params) {
    return uniform_sample(clip.frames(), params);
}

FrameArray random_stratified_sample(const Clip& clip, const SamplingParams& params,
                                    uint64_t seed) {
    if (clip.frames().empty())
        throw std::invalid_argument("random_stratified_sample: empty clip");
    return gather_frames(clip.frames(),
                         stratified_sample_indices(clip.frames().frames,
                                                   params.target_frames, seed));
}

FrameArray strong_augment(const FrameArray& seq, const AugmentParams& params, uint64_t seed) {
    if (seq.empty()) throw std::invalid_argument("strong_augment: empty sequence");
    params.validate();

    // One draw per clip, in a fixed order, applied to every frame.
    std::mt19937_64 rng(hash_seed(seed, "augment"));
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const double angle = params.max_rotation_deg * uni(rng) * M_PI / 180.0;
    const double brightness = 1.0 + params.brightness_jitter * uni(rng);
    const double contrast = 1.0 + params.contrast_jitter * uni(rng);
    [[maybe_unused]] const double saturation = 1.0 + params.saturation_jitter * uni(rng);
    std::uniform_real_distribution<double> sigma_dist(params.blur_sigma_lo, params.blur_sigma_hi);
    const double sigma = sigma_dist(rng);

    const int h = seq.height;
    const int w = seq.width;
    FrameArray out(seq.frames, h, w);
    std::vector<float> scratch(static_cast<size_t>(h) * w);

    for (int t = 0; t < seq.frames; ++t) {
        const float* in = seq.data.data() + t * seq.frame_stride();
        float* dst = out.data.data() + t * out.frame_stride();
        if (angle != 0.0) {
            rotate_frame(in, dst, h, w, angle);
        } else {
            std::copy_n(in, seq.frame_stride(), dst);
        }

        double mean = 0.0;
        for (size_t i = 0; i < out.frame_stride(); ++i) mean += dst[i];
        mean /= static_cast<double>(out.frame_stride());
        for (size_t i = 0; i < out.frame_stride(); ++i) {
            const double bright = dst[i] * brightness;
            dst[i] = static_cast<float>((bright - mean * brightness) * contrast +
                                        mean * brightness);
        }

        blur_frame(dst, scratch.data(), h, w, params.blur_kernel, sigma);

        for (size_t i = 0; i < out.frame_stride(); ++i) {
            dst[i] = std::clamp(dst[i], 0.0f, 1.0f);
        }
    }
    return out;
}

}  // namespace dist
