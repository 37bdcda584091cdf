#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "looptune/pipeline.hpp"

using namespace looptune;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir()
    {
        std::string tmpl = (fs::temp_directory_path() / "looptune_test_XXXXXX").string();
        path = mkdtemp(tmpl.data());
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

Json small_config_json()
{
    return Json::parse(R"({
        "problems": [[96, 80, 64], [40, 128, 48]],
        "search_space": {"level1": [64, 128], "level2": [16, 32], "orders": ["ijk", "kij"]},
        "ranker": {"epochs": 5},
        "ladders": {"ui": [1, 2, 4], "uj": [16, 32], "uk": [1, 2]},
        "rl": {"episodes": 20, "steps": 8},
        "top_fraction": 0.25,
        "seed": 9
    })");
}

ErrorCode config_code(const Json& j)
{
    try {
        PipelineConfig::from_json(j);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidArgument;
}

} // namespace

TEST_CASE("hash and seed helpers")
{
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(hex64(0xaf63dc4c8601ec8cULL) == "af63dc4c8601ec8c");
    CHECK(hex64(1) == "0000000000000001");
    CHECK(stage_seed(1, "ranker") == stage_seed(1, "ranker"));
    CHECK(stage_seed(1, "ranker") != stage_seed(2, "ranker"));
    CHECK(stage_seed(1, "ranker") != stage_seed(1, "tune/32x32x32"));
}

TEST_CASE("exit codes")
{
    CHECK(exit_code_for(ErrorCode::ConfigError) == 2);
    CHECK(exit_code_for(ErrorCode::MiscompileError) == 4);
    CHECK(exit_code_for(ErrorCode::CodegenBug) == 4);
    CHECK(exit_code_for(ErrorCode::ToolchainError) == 3);
    CHECK(exit_code_for(ErrorCode::NoFeasibleKernel) == 3);
}

TEST_CASE("config parsing and validation")
{
    const auto c = PipelineConfig::from_json(small_config_json());
    CHECK(c.problems.size() == 2);
    CHECK(c.space.level1[2] == std::vector<std::int64_t>{64, 128});
    CHECK(c.ranker.epochs == 5);
    CHECK(c.ranker.theta == 0.7);
    CHECK(c.rl.episodes == 20);
    CHECK(c.seed == 9);

    const auto again = PipelineConfig::from_json(c.to_json());
    CHECK(again.to_json().dump() == c.to_json().dump());

    auto with = [](const char* pointer, Json value) {
        Json j = small_config_json();
        j[Json::json_pointer(pointer)] = std::move(value);
        return j;
    };
    CHECK(config_code(with("/bogus", 1)) == ErrorCode::ConfigError);
    CHECK(config_code(with("/ranker/seed", 3)) == ErrorCode::ConfigError);
    CHECK(config_code(with("/rl/learning_rat", 0.1)) == ErrorCode::ConfigError);
    CHECK(config_code(with("/backend", "gpu")) == ErrorCode::ConfigError);
    CHECK(config_code(with("/top_fraction", 0.0)) == ErrorCode::ConfigError);
    CHECK(config_code(with("/top_fraction", "half")) == ErrorCode::ConfigError);
    CHECK(config_code(with("/problems", Json::array())) == ErrorCode::ConfigError);
    CHECK(config_code(with("/problems/0", Json::array({1, 2}))) == ErrorCode::ConfigError);
    CHECK(config_code(with("/problems/0", Json::array({0, 2, 2}))) == ErrorCode::ConfigError);
    CHECK(config_code(with("/search_space/orders", Json::array({"iik"}))) == ErrorCode::ConfigError);
    CHECK(config_code(with("/ladders/uj", Json::array({24}))) == ErrorCode::ConfigError);
    CHECK(config_code(with("/ranker/theta", 0.4)) == ErrorCode::ConfigError);
    CHECK(config_code(with("/cache/levels", Json::array())) == ErrorCode::ConfigError);
    Json no_problems = small_config_json();
    no_problems.erase("problems");
    CHECK(config_code(no_problems) == ErrorCode::ConfigError);
}

TEST_CASE("bundled benchmark config lists the suite")
{
    const auto c = PipelineConfig::load(fs::path(LOOPTUNE_SOURCE_DIR) / "configs" / "table1.json");
    CHECK(c.problems == PipelineConfig::benchmark_suite());
    CHECK(c.problems.size() == 10);
    CHECK(c.problems[4] == Problem{1024, 16, 500000});
    CHECK(c.backend == "analytic");
    CHECK(c.top_fraction == 0.1);
}

TEST_CASE("analysis report of GEMM")
{
    const auto r = analysis_report(gemm_nest(4, 4, 4), CacheHierarchy::cascade_lake(), true);
    const Json* d2 = nullptr;
    for (const auto& d : r["dependences"])
        if (d["name"] == "d2")
            d2 = &d;
    REQUIRE(d2);
    CHECK((*d2)["array"] == "A");
    CHECK((*d2)["ws_min"] == 11);
    CHECK((*d2)["ws_max"] == 21);
    CHECK((*d2)["symbolic"]["ws_min"] == "2K+3");
    CHECK((*d2)["symbolic"]["ws_max"] == "NK+N+1");

    const auto flat = analysis_report(gemm_nest(4, 4, 1), CacheHierarchy::cascade_lake(), false);
    int empty = 0;
    for (const auto& d : flat["dependences"]) {
        CHECK_FALSE(d.contains("symbolic"));
        if (d["empty"].get<bool>()) {
            ++empty;
            CHECK(d["carrying_loop"] == "k");
            CHECK(d.contains("note"));
        }
    }
    CHECK(empty == 4);
}

TEST_CASE("variant tables")
{
    const auto c = PipelineConfig::from_json(small_config_json());
    const auto t = build_variant_table(c.problems[0], c);
    const auto s = build_variant_table_serial(c.problems[0], c);
    CHECK(t.to_json().dump() == s.to_json().dump());
    CHECK(t.descriptors.size() > 8);
    CHECK(t.descriptors.size() <= 2 * 8 * 8);
    CHECK(t.features[0].size() == 8);

    const auto back = VariantTable::from_json(t.to_json());
    CHECK(back.descriptors == t.descriptors);
    CHECK(back.features == t.features);
    CHECK(back.performance == t.performance);

    const auto samples = grouped_samples({t, build_variant_table(c.problems[1], c)});
    CHECK(samples.front().group == 0);
    CHECK(samples.back().group == 1);
    CHECK(samples[3].performance == t.performance[3]);
}

TEST_CASE("pipeline writes every declared artifact and nothing else")
{
    TempDir dir;
    auto c = PipelineConfig::from_json(small_config_json());
    c.out = dir.path / "run";
    const Json report = run_pipeline(c);

    std::set<std::string> declared;
    for (const auto& e : report["manifest"]) {
        declared.insert(e["path"].get<std::string>());
        if (e.contains("fnv1a"))
            CHECK(e["fnv1a"] == hex64(fnv1a(slurp(c.out / e["path"].get<std::string>()))));
    }
    std::set<std::string> on_disk;
    for (const auto& f : fs::recursive_directory_iterator(c.out))
        if (f.is_regular_file())
            on_disk.insert(fs::relative(f.path(), c.out).generic_string());
    CHECK(declared == on_disk);
    CHECK(on_disk.count("report.json"));
    CHECK(on_disk.count("ranker/model.json"));
    CHECK(on_disk.count("kernels/reference.c"));

    CHECK(report["results"].size() == 2);
    for (const auto& r : report["results"]) {
        CHECK(r["verified"] == true);
        CHECK(r["candidates"].get<std::size_t>() == (r["variants"].get<std::size_t>() + 3) / 4);
        CHECK(on_disk.count(r["kernel_source"].get<std::string>()));
        CHECK(r["speedup"].get<double>() > 1.0);
    }
    CHECK(report["provenance"]["config_hash"] == hex64(fnv1a(slurp(c.out / "config.json"))));
    CHECK(report["provenance"]["stage_seeds"]["ranker"] == stage_seed(9, "ranker"));
    CHECK(report["provenance"]["ranker"]["trained"] == true);
}

TEST_CASE("pipeline reports are byte-identical across runs and output directories")
{
    TempDir dir;
    auto c = PipelineConfig::from_json(small_config_json());
    c.out = dir.path / "a";
    run_pipeline(c);
    c.out = dir.path / "b";
    run_pipeline(c);
    CHECK(slurp(dir.path / "a" / "report.json") == slurp(dir.path / "b" / "report.json"));

    c.seed = 10;
    c.out = dir.path / "c";
    run_pipeline(c);
    CHECK(slurp(dir.path / "a" / "report.json") != slurp(dir.path / "c" / "report.json"));
}

TEST_CASE("one variant with top fraction 1 reduces to tuning that variant")
{
    TempDir dir;
    Json j = small_config_json();
    j["problems"] = Json::array({Json::array({64, 48, 32})});
    j["search_space"] = Json{{"level1", {64}}, {"level2", {64}}, {"orders", {"ijk"}}};
    j["top_fraction"] = 1.0;
    auto c = PipelineConfig::from_json(j);
    c.out = dir.path;
    const Json report = run_pipeline(c);
    REQUIRE(report["results"].size() == 1);
    CHECK(report["provenance"]["ranker"]["trained"] == false);
    const auto& r = report["results"][0];
    CHECK(r["variants"] == 1);
    CHECK(r["tile"] == Json::array({64, 48, 32}));

    AnalyticEvaluator evaluator(c.costs);
    RLConfig rc = c.rl;
    rc.seed = stage_seed(c.seed, "tune/64x48x32");
    const TuneResult direct = tune(Problem{64, 48, 32}, evaluator, c.ladders, rc);
    CHECK(r["kernel"] == direct.best.id());
    CHECK(r["performance"] == direct.best_performance);
    CHECK(slurp(dir.path / "rl" / "64x48x32.jsonl") == direct.log_jsonl());
}

TEST_CASE("stage failures are tagged")
{
    TempDir dir;
    Json j = small_config_json();
    j["backend"] = "native";
    j["native"] = Json{{"compiler", "false"}};
    auto c = PipelineConfig::from_json(j);
    c.out = dir.path;
    try {
        run_pipeline(c);
        FAIL("pipeline should fail");
    } catch (const StageError& e) {
        CHECK(e.stage() == "tune");
        CHECK(e.code() == ErrorCode::NoFeasibleKernel);
        CHECK(exit_code_for(e.code()) == 3);
    }
}
