#include <string>

#include "dist/config.hpp"
#include "doctest.h"

using namespace dist;

TEST_SUITE("config") {

TEST_CASE("empty input yields the default configuration") {
    ExperimentConfig cfg = parse_config("");
    CHECK(cfg.data.num_clips == 2000);
    CHECK(cfg.data.num_classes == 4);
    CHECK(cfg.data.frames_per_clip == 16);
    CHECK(cfg.data.frame_size == 32);
    CHECK(cfg.data.difficulty == doctest::Approx(0.3));
    CHECK(cfg.data.labeled_fraction == doctest::Approx(1.0 / 16.0));
    CHECK(cfg.train.epochs == 12);
    CHECK(cfg.train.base_lr == doctest::Approx(0.005));
    CHECK(cfg.ssl.target_frames == 8);
    CHECK_FALSE(cfg.ssl.ablation);
    CHECK(cfg.run.seeds == std::vector<uint64_t>{1, 2, 3});
}

TEST_CASE("parse then serialize round-trips") {
    ExperimentConfig cfg;
    cfg.data.num_clips = 321;
    cfg.data.difficulty = 0.17;
    cfg.data.labeled_fraction = 0.125;
    cfg.data.dataset_path = "data/cached";
    cfg.train.epochs = 7;
    cfg.train.base_lr = 0.0123;
    cfg.ssl.target_frames = 6;
    cfg.ssl.ablation = true;
    cfg.ssl.stage2_warm_start = true;
    cfg.run.out_dir = "runs/custom";
    cfg.run.seeds = {4, 5, 99};
    cfg.run.log_level = "debug";

    const std::string text = serialize_config(cfg);
    ExperimentConfig back = parse_config(text);
    CHECK(serialize_config(back) == text);
    CHECK(back.data.num_clips == 321);
    CHECK(back.data.dataset_path == "data/cached");
    CHECK(back.ssl.ablation);
    CHECK(back.ssl.stage2_warm_start);
    CHECK(back.run.seeds == std::vector<uint64_t>{4, 5, 99});
    CHECK(back.run.log_level == "debug");
}

TEST_CASE("comments, blank lines and whitespace are tolerated") {
    ExperimentConfig cfg = parse_config(
        "# experiment\n"
        "\n"
        "[data]\n"
        "  num_clips = 100   # inline comment\n"
        "\n"
        "[train]\n"
        "epochs=6\n");
    CHECK(cfg.data.num_clips == 100);
    CHECK(cfg.train.epochs == 6);
}

TEST_CASE("unknown keys and sections are errors that name the offender") {
    CHECK_THROWS_WITH_AS(parse_config("[data]\nnum_clip = 5\n"),
                         doctest::Contains("data.num_clip"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config("[datum]\nnum_clips = 5\n"),
                         doctest::Contains("datum"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("num_clips = 5\n"), std::invalid_argument);  // no section
    CHECK_THROWS_AS(parse_config("[data]\nnum_clips\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("[data]\nnum_clips = five\n"), std::invalid_argument);
}

TEST_CASE("invariant violations are rejected on parse") {
    CHECK_THROWS_WITH_AS(parse_config("[data]\nlabeled_fraction = 0\n"),
                         doctest::Contains("labeled_fraction"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config("[ssl]\ntarget_frames = 0\n"),
                         doctest::Contains("target_frames"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("[data]\nlabeled_fraction = 0.6\ntest_fraction = 0.5\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_config("[train]\nepochs = 2\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("[run]\nlog_level = loud\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("[run]\nseeds = 1, x\n"), std::invalid_argument);
}

TEST_CASE("config hash is stable and sensitive") {
    ExperimentConfig a, b;
    CHECK(config_hash(a) == config_hash(b));
    b.data.difficulty = 0.31;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.run.seeds = {1, 2, 3, 4};
    CHECK(config_hash(a) != config_hash(b));
}

}  // TEST_SUITE
