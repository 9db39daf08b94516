#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "dist/clipset.hpp"
#include "dist/invariance.hpp"
#include "dist/model.hpp"
#include "dist/reliability.hpp"
#include "dist/sampling.hpp"
#include "dist/trainer.hpp"
#include "doctest.h"

using namespace dist;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    ClipSet data;
    Model model;
    SamplingParams sampling{8};
    AugmentParams aug;

    static Fixture make(bool trained) {
        GeneratorParams gp;
        gp.num_clips = 40;
        gp.num_classes = 4;
        gp.frames_per_clip = 16;
        gp.frame_size = 16;
        gp.difficulty = 0.4;
        gp.seed = 21;
        ClipSet set = generate_synthetic_dataset(gp);
        set.assign_splits(0.3, 0.2, 2);

        ModelSpec spec;
        spec.num_classes = 4;
        spec.target_frames = 8;
        spec.frame_size = 16;
        spec.init_seed = 3;
        if (!trained) return {std::move(set), Model(spec)};

        std::vector<LabeledExample> examples;
        for (const auto& c : set.clips())
            if (c.split() == Split::labeled) examples.push_back({&c, c.label()});
        TrainSchedule sched;
        sched.epochs = 4;
        TrainResult r = train(spec, examples, sched, SamplingParams{8}, AugmentParams{}, 5);
        return {std::move(set), std::move(r.model)};
    }
};

std::vector<PseudoLabelRecord> score(const Fixture& f) {
    return score_unlabeled_set(f.model, f.model, f.model, f.data, f.sampling);
}

}  // namespace

TEST_SUITE("invariance") {

TEST_CASE("keep decision is argmax equality") {
    CHECK(dual_invariance_keep(2, 2));
    CHECK_FALSE(dual_invariance_keep(2, 1));
    CHECK(dual_invariance_keep(0, 0));
}

TEST_CASE("a constant model keeps every record with the uniform prediction") {
    Fixture f = Fixture::make(false);  // zero head: always predicts class 0
    auto recs = score(f);
    REQUIRE_FALSE(recs.empty());
    std::vector<InvarianceVerdict> verdicts;
    auto kept = filter_records(f.model, recs, f.data, f.sampling, f.aug, 7, &verdicts);
    CHECK(kept.size() == recs.size());
    REQUIRE(verdicts.size() == recs.size());
    for (const auto& v : verdicts) {
        CHECK(v.keep);
        CHECK(v.pred_uniform == v.pred_augmented);
    }
    for (const auto& r : recs) {
        CHECK(r.invariant);
        CHECK(r.retained);
        CHECK(r.argmax_class == 0);
    }
}

TEST_CASE("filtering is deterministic and idempotent") {
    Fixture f = Fixture::make(true);
    auto recs1 = score(f);
    auto recs2 = recs1;
    auto kept1 = filter_records(f.model, recs1, f.data, f.sampling, f.aug, 11);
    auto kept2 = filter_records(f.model, recs2, f.data, f.sampling, f.aug, 11);
    REQUIRE(kept1.size() == kept2.size());
    for (size_t i = 0; i < kept1.size(); ++i) CHECK(kept1[i].clip_id == kept2[i].clip_id);

    // survivors re-pass with the same seed
    auto again = kept1;
    auto kept3 = filter_records(f.model, again, f.data, f.sampling, f.aug, 11);
    REQUIRE(kept3.size() == kept1.size());
    for (size_t i = 0; i < kept1.size(); ++i) {
        CHECK(kept3[i].clip_id == kept1[i].clip_id);
        CHECK(kept3[i].argmax_class == kept1[i].argmax_class);
    }
}

TEST_CASE("output is a subset of the input and flags are consistent") {
    Fixture f = Fixture::make(true);
    auto recs = score(f);
    auto kept = filter_records(f.model, recs, f.data, f.sampling, f.aug, 13);
    CHECK(kept.size() <= recs.size());
    std::set<std::string> in_ids;
    for (const auto& r : recs) in_ids.insert(r.clip_id);
    for (const auto& r : kept) {
        CHECK(in_ids.count(r.clip_id) == 1);
        CHECK(r.invariant);
        CHECK(r.retained);
    }
    long retained_in_place = 0;
    for (const auto& r : recs) {
        CHECK(r.retained == r.invariant);  // retained iff invariant here
        if (r.retained) ++retained_in_place;
    }
    CHECK(retained_in_place == static_cast<long>(kept.size()));
}

TEST_CASE("retained labels equal the model's uniform-sample prediction") {
    Fixture f = Fixture::make(true);
    auto recs = score(f);
    auto kept = filter_records(f.model, recs, f.data, f.sampling, f.aug, 17);
    REQUIRE_FALSE(kept.empty());
    for (const auto& r : kept) {
        const Clip& clip = f.data.require(r.clip_id);
        CHECK(r.argmax_class == f.model.predict_class(uniform_sample(clip, f.sampling)));
    }
}

TEST_CASE("verdicts do not depend on record order") {
    Fixture f = Fixture::make(true);
    auto recs = score(f);
    auto reversed = recs;
    std::reverse(reversed.begin(), reversed.end());
    auto kept_fwd = filter_records(f.model, recs, f.data, f.sampling, f.aug, 19);
    auto kept_rev = filter_records(f.model, reversed, f.data, f.sampling, f.aug, 19);
    std::set<std::string> a, b;
    for (const auto& r : kept_fwd) a.insert(r.clip_id);
    for (const auto& r : kept_rev) b.insert(r.clip_id);
    CHECK(a == b);
}

TEST_CASE("a missing clip id is reported by name") {
    Fixture f = Fixture::make(false);
    std::vector<PseudoLabelRecord> recs(1);
    recs[0].clip_id = "no_such_clip";
    recs[0].argmax_class = 0;
    CHECK_THROWS_WITH_AS(filter_records(f.model, recs, f.data, f.sampling, f.aug, 1),
                         doctest::Contains("no_such_clip"), std::exception);
}

TEST_CASE("verdict sidecar is written with both predictions") {
    Fixture f = Fixture::make(true);
    auto recs = score(f);
    std::vector<InvarianceVerdict> verdicts;
    filter_records(f.model, recs, f.data, f.sampling, f.aug, 23, &verdicts);
    const fs::path file = fs::temp_directory_path() / "dist_test_verdicts.tsv";
    write_verdicts(file, verdicts);
    std::ifstream in(file);
    std::string header;
    std::getline(in, header);
    CHECK(header.find("pred_uniform") != std::string::npos);
    CHECK(header.find("pred_augmented") != std::string::npos);
    size_t lines = 0;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) ++lines;
    CHECK(lines == verdicts.size());
    fs::remove(file);
}

}  // TEST_SUITE
