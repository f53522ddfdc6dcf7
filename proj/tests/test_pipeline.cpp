#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <memory>

#include "msfuse/pipeline.hpp"
#include "test_support.hpp"

using namespace msfuse;
namespace fs = std::filesystem;

TEST_CASE("pipeline is deterministic with the mock client") {
    const auto root = testsupport::unique_temp_dir("pipe");
    const auto fx = testsupport::make_golden_fixture(root);
    const PipelineConfig cfg;

    PipelineOptions opts;
    opts.client = std::make_shared<MockChatClient>(42);
    const auto out1 = (fs::path(root) / "fused1.json").string();
    const auto out2 = (fs::path(root) / "fused2.json").string();
    const auto m1 = run_pipeline(fx.rgb_json, fx.thermal_json, root, cfg, out1, opts);
    const auto m2 = run_pipeline(fx.rgb_json, fx.thermal_json, root, cfg, out2, opts);

    REQUIRE(testsupport::read_file(out1) == testsupport::read_file(out2));
    REQUIRE(m1.image_count == 5);
    REQUIRE(m1.pair_count == fx.expected_pairs);
    REQUIRE(m1.pair_count == m2.pair_count);
    REQUIRE(m1.fallback_count == 0);
    fs::remove_all(root);
}

TEST_CASE("pipeline call accounting is 2P describes and 2P completes") {
    const auto root = testsupport::unique_temp_dir("pipe");
    const auto fx = testsupport::make_golden_fixture(root);
    PipelineOptions opts;
    opts.client = std::make_shared<MockChatClient>(1);
    const auto out = (fs::path(root) / "fused.json").string();
    const auto manifest = run_pipeline(fx.rgb_json, fx.thermal_json, root, PipelineConfig{},
                                       out, opts);
    const auto P = manifest.pair_count;
    REQUIRE(manifest.describe_calls == 2 * P);
    REQUIRE(manifest.complete_calls == 2 * P);
    fs::remove_all(root);
}

TEST_CASE("warm cache rerun issues zero client calls") {
    const auto root = testsupport::unique_temp_dir("pipe");
    const auto fx = testsupport::make_golden_fixture(root);
    PipelineOptions opts;
    opts.client = std::make_shared<MockChatClient>(7);
    opts.cache_dir = (fs::path(root) / "cache").string();

    const auto out1 = (fs::path(root) / "fused1.json").string();
    const auto cold = run_pipeline(fx.rgb_json, fx.thermal_json, root, PipelineConfig{},
                                   out1, opts);
    REQUIRE(cold.cache_misses == cold.describe_calls + cold.complete_calls);
    REQUIRE(cold.cache_hits == 0);

    const auto out2 = (fs::path(root) / "fused2.json").string();
    const auto warm = run_pipeline(fx.rgb_json, fx.thermal_json, root, PipelineConfig{},
                                   out2, opts);
    REQUIRE(warm.describe_calls == 0);
    REQUIRE(warm.complete_calls == 0);
    REQUIRE(warm.cache_misses == 0);
    REQUIRE(warm.cache_hits == cold.cache_misses);
    REQUIRE(testsupport::read_file(out1) == testsupport::read_file(out2));
    fs::remove_all(root);
}

TEST_CASE("a parse failure downgrades exactly that pair to vision-only") {
    const auto root = testsupport::unique_temp_dir("pipe");
    const auto fx = testsupport::make_golden_fixture(root);
    const PipelineConfig cfg;

    // First pass with a clean mock to find the description text of one pair.
    PipelineOptions clean_opts;
    clean_opts.client = std::make_shared<MockChatClient>(5);
    std::vector<ImageLanguageResult> clean_lang;
    const auto clean_out = (fs::path(root) / "clean.json").string();
    run_pipeline(fx.rgb_json, fx.thermal_json, root, cfg, clean_out, clean_opts, &clean_lang);
    REQUIRE_FALSE(clean_lang.empty());
    REQUIRE(clean_lang[0].rgb_descriptions.size() >= 2);
    const std::string marker = clean_lang[0].rgb_descriptions[1].text;

    // Second pass garbles every completion whose context embeds that text.
    PipelineOptions sabotage_opts;
    sabotage_opts.client = std::make_shared<testsupport::SabotagingChatClient>(
        std::make_shared<MockChatClient>(5), marker);
    std::vector<ImageLanguageResult> lang;
    const auto out = (fs::path(root) / "fused.json").string();
    const auto manifest =
        run_pipeline(fx.rgb_json, fx.thermal_json, root, cfg, out, sabotage_opts, &lang);

    REQUIRE(manifest.fallback_count == 1);
    REQUIRE(manifest.pair_count == fx.expected_pairs);

    const auto fused = load_fused(out);
    int flagged = 0;
    for (const auto& d : fused) {
        if (d.trace.language_fallback) {
            ++flagged;
            REQUIRE(d.score == d.trace.s_f_v);
            REQUIRE(d.box == d.trace.b_f_v);
        }
    }
    REQUIRE(flagged == 1);
    REQUIRE_FALSE(lang[0].lang[1].has_value());
    REQUIRE(lang[0].lang[0].has_value());
    fs::remove_all(root);
}

TEST_CASE("ablation reuses the language branch across the strategy grid") {
    const auto root = testsupport::unique_temp_dir("pipe");
    const auto fx = testsupport::make_golden_fixture(root);

    auto mock = std::make_shared<MockChatClient>(3);
    auto counting = std::make_shared<CountingChatClient>(mock);
    PipelineOptions opts;
    opts.client = counting;
    std::vector<ImageLanguageResult> lang;
    const auto out = (fs::path(root) / "fused.json").string();
    run_pipeline(fx.rgb_json, fx.thermal_json, root, PipelineConfig{}, out, opts, &lang);
    const auto calls_before = counting->total_calls();

    const auto gt = load_ground_truth(fx.gt_json);
    const auto score_rows = run_ablation(lang, score_strategy_grid(), gt.entries, gt.images);
    const auto box_rows = run_ablation(lang, box_strategy_grid(), gt.entries, gt.images);

    REQUIRE(counting->total_calls() == calls_before);  // no re-runs
    REQUIRE(score_rows.size() == 4);
    REQUIRE(box_rows.size() == 8);
    for (const auto& row : score_rows) {
        REQUIRE(std::isfinite(row.report.ap_all));
        REQUIRE(std::isfinite(row.report.mr_all));
    }
    for (const auto& row : box_rows) {
        REQUIRE(std::isfinite(row.report.ap_all));
        REQUIRE(std::isfinite(row.report.mr_all));
        REQUIRE(row.report.mr_day.has_value());
        REQUIRE(row.report.mr_night.has_value());
    }
    fs::remove_all(root);
}

TEST_CASE("run manifest records digests, config, and timings") {
    const auto root = testsupport::unique_temp_dir("pipe");
    const auto fx = testsupport::make_golden_fixture(root);
    PipelineOptions opts;
    opts.client = std::make_shared<MockChatClient>(0);
    const auto out = (fs::path(root) / "fused.json").string();
    const auto manifest = run_pipeline(fx.rgb_json, fx.thermal_json, root, PipelineConfig{},
                                       out, opts);
    const auto j = manifest.to_json();
    REQUIRE(j.at("input_digests").size() == 2);
    for (const auto& [path, digest] : j.at("input_digests").items())
        REQUIRE(digest.get<std::string>().size() == 64);
    REQUIRE(j.at("config").contains("fusion"));
    REQUIRE(j.at("stage_millis").contains("fuse"));
    REQUIRE(j.at("tool_version") == kToolVersion);
    fs::remove_all(root);
}

TEST_CASE("max_inflight > 1 produces identical output") {
    const auto root = testsupport::unique_temp_dir("pipe");
    const auto fx = testsupport::make_golden_fixture(root);
    PipelineOptions serial, parallel;
    serial.client = std::make_shared<MockChatClient>(11);
    parallel.client = std::make_shared<MockChatClient>(11);
    parallel.max_inflight = 4;
    const auto out1 = (fs::path(root) / "serial.json").string();
    const auto out2 = (fs::path(root) / "parallel.json").string();
    run_pipeline(fx.rgb_json, fx.thermal_json, root, PipelineConfig{}, out1, serial);
    run_pipeline(fx.rgb_json, fx.thermal_json, root, PipelineConfig{}, out2, parallel);
    REQUIRE(testsupport::read_file(out1) == testsupport::read_file(out2));
    fs::remove_all(root);
}
