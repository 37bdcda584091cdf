#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "looptune/error.hpp"
#include "looptune/evaluator.hpp"
#include "looptune/ranker.hpp"
#include "looptune/rl.hpp"
#include "looptune/variants.hpp"

namespace looptune {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Seed of a named stage, derived from the run seed.
std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage);

struct PipelineConfig {
    std::vector<Problem> problems;
    CacheHierarchy cache = CacheHierarchy::cascade_lake();
    SearchSpace space = SearchSpace::defaults();
    RankerConfig ranker;
    Ladders ladders;
    RLConfig rl;
    AnalyticCosts costs;
    TileModel tile_model;
    NativeOptions native;
    std::string backend = "analytic";
    double top_fraction = 0.10;
    std::filesystem::path out = "looptune-out";
    std::uint64_t seed = 1;
    int workers = 0;
    /// Verification runs on the kernel's tile clamped to this many rows/columns.
    std::int64_t verify_limit = 48;

    /// Rejects unknown keys, wrong types and out-of-range values with ConfigError.
    static PipelineConfig from_json(const Json& j);
    static PipelineConfig load(const std::filesystem::path& path);
    /// Everything that affects results; the output directory is left out.
    Json to_json() const;
    void validate() const;

    /// The ten GEMM sizes of the bundled benchmark suite.
    static std::vector<Problem> benchmark_suite();
};

/// A failure inside one pipeline stage.
class StageError : public Error {
public:
    StageError(std::string stage, ErrorCode code, const std::string& what)
        : Error(code, stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Process exit code for a failure: 2 config, 4 correctness, 3 anything else.
int exit_code_for(ErrorCode code) noexcept;

/// Writes files below a root directory and remembers each one.
class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path root);

    void write(const std::string& relative, const std::string& content);
    /// Relative path, size and content hash of every file written so far.
    Json manifest() const;
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    Json entries_ = Json::array();
};

/// Dependences of a nest with their working sets. `symbolic` adds the
/// closed forms in the nest parameters where they exist.
Json analysis_report(const LoopNest& nest, const CacheHierarchy& cache, bool symbolic);

/// Variant ids, features and modeled performance for one problem.
struct VariantTable {
    Problem problem;
    std::vector<VariantDescriptor> descriptors;
    std::vector<std::vector<double>> features;
    std::vector<double> performance;

    Json to_json() const;
    static VariantTable from_json(const Json& j);
};

VariantTable build_variant_table(const Problem& p, const PipelineConfig& config);

/// Serial featurization, same result as build_variant_table.
VariantTable build_variant_table_serial(const Problem& p, const PipelineConfig& config);

/// Pools tables into grouped samples, one group per table.
std::vector<GroupedSample> grouped_samples(const std::vector<VariantTable>& tables);

/// Flops per modeled cycle of the scalar reference kernel.
double analytic_scalar_performance(const Problem& p, const AnalyticCosts& costs);

/// Runs every stage and writes the artifacts and report.json under config.out.
/// Returns the report. Stage failures surface as StageError.
Json run_pipeline(const PipelineConfig& config, std::ostream* progress = nullptr);

} // namespace looptune
