#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "looptune/codegen.hpp"
#include "looptune/reuse.hpp"
#include "looptune/serialize.hpp"
#include "looptune/variants.hpp"

namespace looptune {

struct Problem {
    std::int64_t M = 1, N = 1, K = 1;

    double flops() const { return 2.0 * static_cast<double>(M) * static_cast<double>(N) * static_cast<double>(K); }
    friend auto operator<=>(const Problem&, const Problem&) = default;
};

struct EvaluationResult {
    /// GFLOP/s for native runs; flops per modeled cycle for the analytic backend.
    double performance = 0.0;
    bool correctness_checked = false;
    double seconds = 0.0;
    std::string backend;
    OpCensus census;
    std::vector<double> samples;
};

/// Unit costs of the analytic backend, in cycles.
struct AnalyticCosts {
    double fma = 1.0;
    double load = 1.0;
    double broadcast = 1.0;
    double store = 1.0;
    double scalar_mac = 8.0;
    double spill = 20.0;
    /// Bookkeeping per iteration of the vector k loop.
    double loop_overhead = 2.0;
    /// Registers the allocator can use; each one a spec needs beyond this
    /// costs `spill` per vector k iteration.
    int registers = kVectorRegisters;

    void validate() const;
    Json to_json() const;
    static AnalyticCosts from_json(const Json& j);
};

/// Pure function of its inputs; rejects specs over the architectural budget.
EvaluationResult evaluate_analytic(const KernelSpec& spec, const Problem& p, const AnalyticCosts& costs = {});

struct NativeOptions {
    std::string compiler = "cc";
    std::vector<std::string> flags{"-O3", "-march=native"};
    int repetitions = 100;
    /// Median of group means; false reports the plain mean.
    bool median_of_means = true;
    int groups = 10;
    /// Artifacts go here when set, else into a fresh temporary directory
    /// that is removed afterwards.
    std::filesystem::path work_dir;
    /// Time the scalar reference instead of the generated kernel.
    bool time_reference = false;
};

/// True when the host reports avx512f and the compiler builds a probe.
bool native_available(const NativeOptions& options = {});

/// Compiles the harness, requires "CHECK: ok" and times the kernel. Strides
/// are padded to 16 elements so the kernel uses aligned accesses.
EvaluationResult evaluate_native(const KernelSpec& spec, const Problem& p, const NativeOptions& options = {});

/// Emulated kernel against the interpreter on seeded random inputs; throws
/// CodegenBug on any difference.
EvaluationResult evaluate_interpreted(const KernelSpec& spec, const Problem& p, std::uint64_t seed = 1);

/// Median of the means of `groups` consecutive chunks.
double median_of_means(const std::vector<double>& samples, int groups);

class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual EvaluationResult evaluate(const KernelSpec& spec, const Problem& p) = 0;
    virtual std::string backend() const = 0;
};

class AnalyticEvaluator final : public Evaluator {
public:
    explicit AnalyticEvaluator(AnalyticCosts costs = {}) : costs_(costs) { costs_.validate(); }
    EvaluationResult evaluate(const KernelSpec& spec, const Problem& p) override
    {
        return evaluate_analytic(spec, p, costs_);
    }
    std::string backend() const override { return "analytic"; }

private:
    AnalyticCosts costs_;
};

class NativeEvaluator final : public Evaluator {
public:
    explicit NativeEvaluator(NativeOptions options = {}) : options_(std::move(options)) {}
    EvaluationResult evaluate(const KernelSpec& spec, const Problem& p) override;
    std::string backend() const override { return "native"; }

private:
    NativeOptions options_;
};

/// Thread-safe cache in front of another evaluator, keyed by (spec, problem).
class MemoizingEvaluator final : public Evaluator {
public:
    explicit MemoizingEvaluator(Evaluator& inner) : inner_(inner) {}
    EvaluationResult evaluate(const KernelSpec& spec, const Problem& p) override;
    std::string backend() const override { return inner_.backend(); }
    std::size_t hits() const;
    std::size_t misses() const;

private:
    Evaluator& inner_;
    mutable std::mutex mutex_;
    std::map<std::pair<KernelSpec, Problem>, EvaluationResult> cache_;
    std::size_t hits_ = 0, misses_ = 0;
};

std::unique_ptr<Evaluator> make_evaluator(const std::string& backend, const AnalyticCosts& costs,
                                          const NativeOptions& native);

/// Modeled machine for ranking tiled variants without running them.
struct TileModel {
    double flops_per_cycle = 32.0;
    /// Cycles per element moved into the level-2 and level-1 tiles.
    double memory_cost = 1.0;
    double l2_cost = 0.25;
    /// Cycles per innermost tile visit.
    double tile_overhead = 40.0;
};

/// Modeled flops per cycle of a tiled GEMM variant; deterministic.
double analytic_variant_performance(const VariantDescriptor& d, const Problem& p, const CacheHierarchy& cache,
                                    const TileModel& model = {});

} // namespace looptune
