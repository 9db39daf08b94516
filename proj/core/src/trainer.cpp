#include "dist/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "dist/io_util.hpp"

namespace dist {

void TrainSchedule::validate() const {
    if (epochs < 3) throw std::invalid_argument("schedule: epochs must be >= 3");
    if (batch_size < 1) throw std::invalid_argument("schedule: batch_size must be >= 1");
    if (base_lr <= 0.0) throw std::invalid_argument("schedule: base_lr must be positive");
    if (lr_gamma <= 0.0) throw std::invalid_argument("schedule: lr_gamma must be positive");
    if (lr_step_every < 1) throw std::invalid_argument("schedule: lr_step_every must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("schedule: momentum must lie in [0,1)");
}

double lr_at_epoch(const TrainSchedule& schedule, int epoch) {
    if (epoch < 0 || epoch >= schedule.epochs) {
        throw std::invalid_argument("lr_at_epoch: epoch " + std::to_string(epoch) +
                                    " outside [0," + std::to_string(schedule.epochs) + ")");
    }
    return schedule.base_lr * std::pow(schedule.lr_gamma, epoch / schedule.lr_step_every);
}

std::array<int, 3> checkpoint_epochs(int n) {
    if (n < 3) throw std::invalid_argument("checkpoint_epochs: n must be >= 3");
    return {(n + 2) / 3, (2 * n + 2) / 3, n};
}

namespace {

struct MomentumBuffer {
    std::vector<float> conv_w, conv_b, head_w, head_b;

    explicit MomentumBuffer(const Model& m)
        : conv_w(m.conv_w.size(), 0.0f),
          conv_b(m.conv_b.size(), 0.0f),
          head_w(m.head_w.size(), 0.0f),
          head_b(m.head_b.size(), 0.0f) {}
};

void apply_update(std::vector<float>& param, std::vector<float>& vel,
                  const std::vector<float>& grad, double lr, double momentum,
                  double batch_scale) {
    for (size_t i = 0; i < param.size(); ++i) {
        vel[i] = static_cast<float>(momentum * vel[i] - lr * grad[i] * batch_scale);
        param[i] += vel[i];
    }
}

}  // namespace

TrainResult train(const ModelSpec& spec, const std::vector<LabeledExample>& data,
                  const TrainSchedule& schedule, const SamplingParams& sampling,
                  const AugmentParams& aug, uint64_t seed, bool save_checkpoints,
                  const std::filesystem::path& checkpoint_dir,
                  const std::string& checkpoint_prefix, const Model* warm_start) {
    schedule.validate();
    aug.validate();
    if (data.empty()) throw std::invalid_argument("train: empty training set");
    for (const auto& ex : data) {
        if (!ex.clip) throw std::invalid_argument("train: null clip in training set");
        if (ex.label < 0 || ex.label >= spec.num_classes) {
            throw std::invalid_argument("train: label " + std::to_string(ex.label) +
                                        " out of range for clip " + ex.clip->id());
        }
    }

    TrainResult result{warm_start ? *warm_start : Model(spec), {}, std::nullopt};
    Model& model = result.model;
    MomentumBuffer vel(model);

    std::vector<float> g_conv_w(model.conv_w.size()), g_conv_b(model.conv_b.size()),
        g_head_w(model.head_w.size()), g_head_b(model.head_b.size());

    std::array<int, 3> ckpt_epochs = checkpoint_epochs(schedule.epochs);
    CheckpointSet ckpts;
    ckpts.epochs = ckpt_epochs;

    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        const double lr = lr_at_epoch(schedule, epoch);
        std::mt19937_64 shuffle_rng(hash_seed(seed, "epoch-order:" + std::to_string(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += schedule.batch_size) {
            const size_t end = std::min(order.size(), start + schedule.batch_size);
            std::fill(g_conv_w.begin(), g_conv_w.end(), 0.0f);
            std::fill(g_conv_b.begin(), g_conv_b.end(), 0.0f);
            std::fill(g_head_w.begin(), g_head_w.end(), 0.0f);
            std::fill(g_head_b.begin(), g_head_b.end(), 0.0f);

            for (size_t i = start; i < end; ++i) {
                const LabeledExample& ex = data[order[i]];
                const uint64_t clip_seed = hash_seed(
                    seed, "train:" + std::to_string(epoch) + ":" + ex.clip->id());
                FrameArray seq = strong_augment(
                    random_stratified_sample(*ex.clip, sampling, clip_seed), aug,
                    hash_seed(clip_seed, "aug"));
                loss_sum += model.forward_backward(seq, ex.label, g_conv_w, g_conv_b,
                                                   g_head_w, g_head_b);
            }

            const double scale = 1.0 / static_cast<double>(end - start);
            apply_update(model.conv_w, vel.conv_w, g_conv_w, lr, schedule.momentum, scale);
            apply_update(model.conv_b, vel.conv_b, g_conv_b, lr, schedule.momentum, scale);
            apply_update(model.head_w, vel.head_w, g_head_w, lr, schedule.momentum, scale);
            apply_update(model.head_b, vel.head_b, g_head_b, lr, schedule.momentum, scale);
        }

        const double epoch_loss = loss_sum / static_cast<double>(data.size());
        if (!std::isfinite(epoch_loss)) {
            throw std::runtime_error("train: non-finite loss at epoch " +
                                     std::to_string(epoch + 1) + " (lr=" + std::to_string(lr) + ")");
        }
        result.epoch_loss.push_back(epoch_loss);

        if (save_checkpoints) {
            for (int c = 0; c < 3; ++c) {
                if (ckpt_epochs[c] == epoch + 1) {
                    std::filesystem::create_directories(checkpoint_dir);
                    ckpts.paths[c] = checkpoint_dir / (checkpoint_prefix + "_e" +
                                                       std::to_string(epoch + 1) + ".bin");
                    model.save(ckpts.paths[c]);
                }
            }
        }
    }

    if (save_checkpoints) result.checkpoints = ckpts;
    return result;
}

}  // namespace dist
