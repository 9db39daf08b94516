#include "dist/clipset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dist/io_util.hpp"
#include "json.hpp"

namespace dist {

namespace {

// Generator shape constants. Blob travel and size are relative to the frame;
// noise and direction jitter scale with difficulty.
constexpr double kBlobAmplitude = 0.9;
constexpr double kBlobSigmaFrac = 1.0 / 8.0;     // of frame size
constexpr double kTravelFrac = 0.55;             // of frame size
constexpr double kNoiseScale = 2.5;              // pixel noise sigma = scale * difficulty
constexpr double kAngleJitterRad = 0.9;          // max jitter = this * difficulty
constexpr double kSpeedJitterFrac = 0.5;         // of travel, scaled by difficulty
constexpr double kPositionJitterFrac = 0.10;     // of frame size, always on
// A second blob moving in a random direction, amplitude scaled by difficulty,
// makes some clips genuinely ambiguous between two motions.
constexpr double kDistractorAmp = 1.25;
constexpr double kDistractorSigmaFrac = 1.4;     // of the main blob sigma

void add_blob_frame(FrameArray& arr, int t, double cx, double cy, double sigma, double amp) {
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < arr.height; ++y) {
        for (int x = 0; x < arr.width; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            arr.at(t, y, x) += static_cast<float>(amp * std::exp(-(dx * dx + dy * dy) * inv2s2));
        }
    }
}

void add_noise_and_clamp(FrameArray& arr, int t, double noise_sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    const size_t base = static_cast<size_t>(t) * arr.frame_stride();
    for (size_t i = 0; i < arr.frame_stride(); ++i) {
        double v = arr.data[base + i];
        if (noise_sigma > 0.0) v += noise(rng);
        arr.data[base + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
}

// Renders one traversal of the class blob across `frames` frames.
void render_traversal(FrameArray& arr, int first_frame, int frames, int cls, int num_classes,
                      double difficulty, std::mt19937_64& rng) {
    const int size = arr.width;
    const double sigma = kBlobSigmaFrac * size;
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    const double base_angle = 2.0 * M_PI * cls / num_classes;
    const double angle = base_angle + difficulty * kAngleJitterRad * uni(rng);
    const double dirx = std::cos(angle);
    const double diry = std::sin(angle);

    double travel = kTravelFrac * size * (1.0 + difficulty * kSpeedJitterFrac * uni(rng));
    const double perp = kPositionJitterFrac * size * uni(rng);
    const double along = 0.5 * kPositionJitterFrac * size * uni(rng);

    const double cx0 = 0.5 * (size - 1) - diry * perp + dirx * (along - travel / 2.0);
    const double cy0 = 0.5 * (size - 1) + dirx * perp + diry * (along - travel / 2.0);

    // Distractor: a smaller blob moving along a random *class* direction, so
    // strong distractors read as a competing class. Its amplitude varies per
    // clip, so only a fraction of clips carry two comparable motions.
    std::uniform_real_distribution<double> uni01(0.0, 1.0);
    const int d_cls = static_cast<int>(uni01(rng) * num_classes) % num_classes;
    const double d_angle =
        2.0 * M_PI * d_cls / num_classes + 0.5 * difficulty * kAngleJitterRad * uni(rng);
    const double d_dirx = std::cos(d_angle);
    const double d_diry = std::sin(d_angle);
    const double d_amp =
        kBlobAmplitude * kDistractorAmp * std::min(1.0, 3.0 * difficulty) * uni01(rng);
    // The distractor flickers, visible every other frame (like a specular
    // glint), with a random phase per clip.
    const int d_phase = uni01(rng) < 0.5 ? 0 : 1;
    const double d_sigma = kDistractorSigmaFrac * sigma;
    const double d_travel = kTravelFrac * size;
    const double d_perp = 2.0 * kPositionJitterFrac * size * uni(rng);
    const double d_cx0 = 0.5 * (size - 1) - d_diry * d_perp - d_dirx * d_travel / 2.0;
    const double d_cy0 = 0.5 * (size - 1) + d_dirx * d_perp - d_diry * d_travel / 2.0;

    const double noise_sigma = kNoiseScale * difficulty;
    for (int t = 0; t < frames; ++t) {
        const double frac = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.5;
        const int f = first_frame + t;
        const size_t base = static_cast<size_t>(f) * arr.frame_stride();
        std::fill_n(arr.data.begin() + static_cast<std::ptrdiff_t>(base), arr.frame_stride(), 0.0f);
        add_blob_frame(arr, f, cx0 + dirx * travel * frac, cy0 + diry * travel * frac, sigma,
                       kBlobAmplitude);
        if (d_amp > 0.0 && (t + d_phase) % 2 == 0) {
            add_blob_frame(arr, f, d_cx0 + d_dirx * d_travel * frac,
                           d_cy0 + d_diry * d_travel * frac, d_sigma, d_amp);
        }
        add_noise_and_clamp(arr, f, noise_sigma, rng);
    }
}

[[noreturn]] void param_error(const std::string& field, const std::string& reason) {
    throw std::invalid_argument("invalid parameter '" + field + "': " + reason);
}

}  // namespace

std::string to_string(Split s) {
    switch (s) {
        case Split::unassigned: return "unassigned";
        case Split::labeled: return "labeled";
        case Split::unlabeled: return "unlabeled";
        case Split::test: return "test";
    }
    return "unassigned";
}

Split split_from_string(const std::string& s) {
    if (s == "labeled") return Split::labeled;
    if (s == "unlabeled") return Split::unlabeled;
    if (s == "test") return Split::test;
    if (s == "unassigned") return Split::unassigned;
    throw std::invalid_argument("unknown split name: " + s);
}

int Clip::label() const {
    if (split_ != Split::labeled) {
        throw std::logic_error("label() called on non-labeled clip '" + id_ +
                               "' (split=" + to_string(split_) + ")");
    }
    return oracle_label_;
}

ClipSet::ClipSet(std::vector<Clip> clips, int num_classes, uint64_t generator_seed,
                 double difficulty)
    : clips_(std::move(clips)),
      num_classes_(num_classes),
      generator_seed_(generator_seed),
      difficulty_(difficulty) {
    for (size_t i = 0; i < clips_.size(); ++i) {
        auto [it, inserted] = index_.emplace(clips_[i].id(), i);
        if (!inserted) {
            throw std::invalid_argument("duplicate clip id: " + clips_[i].id());
        }
        if (clips_[i].oracle_label_ < 0 || clips_[i].oracle_label_ >= num_classes_) {
            throw std::invalid_argument("oracle label out of range for clip " + clips_[i].id());
        }
    }
}

ClipSet::ClipSet(ClipSet&& other) noexcept
    : clips_(std::move(other.clips_)),
      num_classes_(other.num_classes_),
      generator_seed_(other.generator_seed_),
      difficulty_(other.difficulty_),
      index_(std::move(other.index_)),
      audit_accesses_(other.audit_accesses_.load()) {}

ClipSet& ClipSet::operator=(ClipSet&& other) noexcept {
    clips_ = std::move(other.clips_);
    num_classes_ = other.num_classes_;
    generator_seed_ = other.generator_seed_;
    difficulty_ = other.difficulty_;
    index_ = std::move(other.index_);
    audit_accesses_.store(other.audit_accesses_.load());
    return *this;
}

const Clip* ClipSet::find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &clips_[it->second];
}

const Clip& ClipSet::require(const std::string& id) const {
    const Clip* c = find(id);
    if (!c) throw std::invalid_argument("unknown clip id: " + id);
    return *c;
}

int ClipSet::oracle_label_for_audit(const std::string& id) const {
    const Clip& c = require(id);
    audit_accesses_.fetch_add(1);
    return c.oracle_label_;
}

void ClipSet::assign_splits(double labeled_fraction, double test_fraction, uint64_t seed) {
    if (labeled_fraction <= 0.0 || labeled_fraction >= 1.0)
        param_error("labeled_fraction", "must lie in (0,1)");
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        param_error("test_fraction", "must lie in (0,1)");
    if (labeled_fraction + test_fraction >= 1.0)
        param_error("labeled_fraction", "labeled_fraction + test_fraction must be < 1");

    const long n = static_cast<long>(clips_.size());
    std::vector<size_t> order(clips_.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(hash_seed(seed, "split"));
    std::shuffle(order.begin(), order.end(), rng);

    const long n_test = std::lround(test_fraction * n);
    const long n_rest = n - n_test;
    const long n_labeled = std::lround(labeled_fraction * n_rest);
    if (n_labeled < num_classes_) {
        throw std::invalid_argument(
            "class coverage: labeled_fraction too small, labeled count " +
            std::to_string(n_labeled) + " < " + std::to_string(num_classes_) + " classes");
    }

    for (auto& c : clips_) c.split_ = Split::unassigned;
    for (long i = 0; i < n_test; ++i) clips_[order[i]].split_ = Split::test;

    // Stratify the non-test remainder by class so the labeled subset covers
    // every class; per-class quotas by largest remainder.
    std::vector<std::vector<size_t>> by_class(num_classes_);
    for (long i = n_test; i < n; ++i) {
        const Clip& c = clips_[order[i]];
        by_class[c.oracle_label_].push_back(order[i]);
    }
    for (int cls = 0; cls < num_classes_; ++cls) {
        if (by_class[cls].empty()) {
            throw std::invalid_argument("class coverage: class " + std::to_string(cls) +
                                        " absent from the non-test pool");
        }
    }

    std::vector<long> quota(num_classes_, 0);
    std::vector<std::pair<double, int>> remainders;
    long assigned = 0;
    for (int cls = 0; cls < num_classes_; ++cls) {
        const double exact =
            static_cast<double>(n_labeled) * by_class[cls].size() / static_cast<double>(n_rest);
        quota[cls] = static_cast<long>(exact);
        assigned += quota[cls];
        remainders.push_back({exact - quota[cls], cls});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (long i = 0; assigned < n_labeled; ++i) {
        quota[remainders[i % num_classes_].second] += 1;
        ++assigned;
    }
    // Every class gets at least one labeled clip; borrow from the largest quota.
    for (int cls = 0; cls < num_classes_; ++cls) {
        if (quota[cls] == 0) {
            int donor = static_cast<int>(std::max_element(quota.begin(), quota.end()) - quota.begin());
            if (quota[donor] <= 1) {
                throw std::invalid_argument("class coverage: cannot assign one labeled clip per class");
            }
            quota[donor] -= 1;
            quota[cls] += 1;
        }
    }
    for (int cls = 0; cls < num_classes_; ++cls) {
        if (quota[cls] > static_cast<long>(by_class[cls].size())) {
            throw std::invalid_argument("class coverage: class " + std::to_string(cls) +
                                        " has too few clips for its labeled quota");
        }
    }

    for (int cls = 0; cls < num_classes_; ++cls) {
        for (size_t i = 0; i < by_class[cls].size(); ++i) {
            clips_[by_class[cls][i]].split_ =
                static_cast<long>(i) < quota[cls] ? Split::labeled : Split::unlabeled;
        }
    }
}

ClipSet generate_synthetic_dataset(const GeneratorParams& p) {
    if (p.num_classes < 2) param_error("num_classes", "must be >= 2");
    if (p.num_clips < p.num_classes) param_error("num_clips", "must be >= num_classes");
    if (p.frames_per_clip < 1) param_error("frames_per_clip", "must be >= 1");
    if (p.frame_size < 1) param_error("frame_size", "must be >= 1");
    if (p.difficulty < 0.0 || p.difficulty > 1.0) param_error("difficulty", "must lie in [0,1]");

    std::vector<Clip> clips;
    clips.reserve(p.num_clips);
    for (int i = 0; i < p.num_clips; ++i) {
        const int cls = i % p.num_classes;  // balanced within one clip per class
        std::mt19937_64 rng(hash_seed(p.seed, "clip:" + std::to_string(i)));
        FrameArray frames(p.frames_per_clip, p.frame_size, p.frame_size);
        render_traversal(frames, 0, p.frames_per_clip, cls, p.num_classes, p.difficulty, rng);

        std::ostringstream id;
        id << "clip_" << std::setw(6) << std::setfill('0') << i;
        clips.emplace_back(id.str(), std::move(frames), cls);
    }
    return ClipSet(std::move(clips), p.num_classes, p.seed, p.difficulty);
}

FrameArray generate_phase_sequence(const std::vector<PhaseBand>& bands, double fps,
                                   int frame_size, double difficulty, uint64_t seed,
                                   int num_classes) {
    if (bands.empty()) throw std::invalid_argument("phase sequence needs at least one band");
    if (fps <= 0.0) param_error("fps", "must be positive");
    for (const auto& b : bands) {
        if (b.class_idx < 0 || (num_classes > 0 && b.class_idx >= num_classes))
            param_error("class_idx", "outside [0, num_classes)");
    }

    std::vector<int> band_frames;
    int total = 0;
    for (const auto& b : bands) {
        int f = static_cast<int>(std::lround(b.duration_s * fps));
        if (f < 1) param_error("duration_s", "band shorter than one frame");
        band_frames.push_back(f);
        total += f;
    }

    FrameArray seq(total, frame_size, frame_size);
    int offset = 0;
    for (size_t b = 0; b < bands.size(); ++b) {
        std::mt19937_64 rng(hash_seed(seed, "band:" + std::to_string(b)));
        int layout_classes = num_classes;
        if (layout_classes == 0) {
            for (const auto& bb : bands) layout_classes = std::max(layout_classes, bb.class_idx + 1);
            layout_classes = std::max(layout_classes, 2);
        }
        render_traversal(seq, offset, band_frames[b], bands[b].class_idx, layout_classes,
                         difficulty, rng);
        offset += band_frames[b];
    }
    return seq;
}

ClipSetSummary clipset_summary(const ClipSet& set) {
    ClipSetSummary s;
    s.total = static_cast<long>(set.clips().size());
    for (size_t i = 0; i < set.clips().size(); ++i) {
        const Clip& c = set.clips()[i];
        const std::string split = to_string(c.split());
        s.per_split[split] += 1;
        const int cls = set.oracle_raw(i);
        s.per_class[cls] += 1;
        s.per_split_class[split][cls] += 1;
    }
    return s;
}

std::string ClipSetSummary::to_text() const {
    std::ostringstream out;
    out << "total clips: " << total << "\n";
    for (const auto& [split, n] : per_split) {
        out << "  " << split << ": " << n;
        auto it = per_split_class.find(split);
        if (it != per_split_class.end()) {
            out << " (";
            bool first = true;
            for (const auto& [cls, cn] : it->second) {
                if (!first) out << ", ";
                out << "class " << cls << ": " << cn;
                first = false;
            }
            out << ")";
        }
        out << "\n";
    }
    return out.str();
}

void save_frame_array(const FrameArray& arr, const std::filesystem::path& file) {
    std::string buf;
    buf.reserve(12 + arr.data.size() * 4);
    const int32_t dims[3] = {arr.frames, arr.height, arr.width};
    buf.append(reinterpret_cast<const char*>(dims), sizeof(dims));
    buf.append(reinterpret_cast<const char*>(arr.data.data()), arr.data.size() * sizeof(float));
    write_file_atomic(file, buf);
}

FrameArray load_frame_array(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open frame array: " + file.string());
    int32_t dims[3];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in || dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
        throw std::runtime_error("malformed frame array header: " + file.string());
    }
    FrameArray arr(dims[0], dims[1], dims[2]);
    in.read(reinterpret_cast<char*>(arr.data.data()),
            static_cast<std::streamsize>(arr.data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated frame array: " + file.string());
    return arr;
}

void save_clipset(const ClipSet& set, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "clips");

    nlohmann::ordered_json meta;
    meta["num_classes"] = set.num_classes();
    meta["generator_seed"] = set.generator_seed();
    meta["difficulty"] = set.difficulty();
    auto& arr = meta["clips"] = nlohmann::ordered_json::array();
    for (size_t i = 0; i < set.clips().size(); ++i) {
        const Clip& c = set.clips()[i];
        nlohmann::ordered_json j;
        j["id"] = c.id();
        j["oracle_label"] = set.oracle_raw(i);
        j["split"] = to_string(c.split());
        j["file"] = "clips/" + c.id() + ".bin";
        arr.push_back(j);
        save_frame_array(c.frames(), dir / "clips" / (c.id() + ".bin"));
    }
    write_file_atomic(dir / "metadata.json", meta.dump(2) + "\n");
}

ClipSet load_clipset(const std::filesystem::path& dir) {
    auto meta = nlohmann::json::parse(read_text_file(dir / "metadata.json"));
    std::vector<Clip> clips;
    std::vector<Split> splits;
    for (const auto& j : meta.at("clips")) {
        FrameArray frames = load_frame_array(dir / j.at("file").get<std::string>());
        clips.emplace_back(j.at("id").get<std::string>(), std::move(frames),
                           j.at("oracle_label").get<int>());
        splits.push_back(split_from_string(j.at("split").get<std::string>()));
    }
    ClipSet set(std::move(clips), meta.at("num_classes").get<int>(),
                meta.at("generator_seed").get<uint64_t>(), meta.at("difficulty").get<double>());
    for (size_t i = 0; i < splits.size(); ++i) set.set_split(i, splits[i]);
    return set;
}

}  // namespace dist
