#include "looptune/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "looptune/error.hpp"

namespace looptune {

void AnalyticCosts::validate() const
{
    for (double c : {fma, load, broadcast, store, scalar_mac, spill, loop_overhead})
        if (!(c > 0.0))
            fail(ErrorCode::ConfigError, "analytic unit costs must be positive");
    if (registers < 1)
        fail(ErrorCode::ConfigError, "analytic register count must be positive");
}

Json AnalyticCosts::to_json() const
{
    return Json{{"fma", fma},
                {"load", load},
                {"broadcast", broadcast},
                {"store", store},
                {"scalar_mac", scalar_mac},
                {"spill", spill},
                {"loop_overhead", loop_overhead},
                {"registers", registers}};
}

AnalyticCosts AnalyticCosts::from_json(const Json& j)
{
    AnalyticCosts c;
    c.fma = j.value("fma", c.fma);
    c.load = j.value("load", c.load);
    c.broadcast = j.value("broadcast", c.broadcast);
    c.store = j.value("store", c.store);
    c.scalar_mac = j.value("scalar_mac", c.scalar_mac);
    c.spill = j.value("spill", c.spill);
    c.loop_overhead = j.value("loop_overhead", c.loop_overhead);
    c.registers = j.value("registers", c.registers);
    c.validate();
    return c;
}

EvaluationResult evaluate_analytic(const KernelSpec& spec, const Problem& p, const AnalyticCosts& costs)
{
    const int need = check_register_budget(spec);
    const OpCensus c = census(build_vector_kernel(spec), p.M, p.N, p.K);
    const std::int64_t nc = spec.uj / kVectorLanes;
    const double k_iterations = static_cast<double>(c.fmas / (spec.ui * spec.uk * nc));
    double cost = costs.fma * c.fmas + costs.load * (c.c_loads + c.b_loads) + costs.broadcast * c.broadcasts +
                  costs.store * c.stores + costs.scalar_mac * c.scalar_macs + costs.loop_overhead * k_iterations;
    cost += costs.spill * std::max(0, need - costs.registers) * k_iterations;
    EvaluationResult r;
    r.performance = p.flops() / cost;
    r.seconds = cost;
    r.backend = "analytic";
    r.census = c;
    return r;
}

double median_of_means(const std::vector<double>& samples, int groups)
{
    if (samples.empty())
        fail(ErrorCode::InvalidArgument, "no timing samples");
    const std::size_t g = std::clamp<std::size_t>(groups, 1, samples.size());
    std::vector<double> means;
    for (std::size_t b = 0; b < g; ++b) {
        const std::size_t lo = b * samples.size() / g, hi = (b + 1) * samples.size() / g;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i)
            s += samples[i];
        means.push_back(s / static_cast<double>(hi - lo));
    }
    std::sort(means.begin(), means.end());
    const std::size_t m = means.size();
    return m % 2 ? means[m / 2] : 0.5 * (means[m / 2 - 1] + means[m / 2]);
}

namespace {

std::mutex& native_mutex()
{
    static std::mutex m;
    return m;
}

std::string quote(const std::string& s)
{
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    return out + "'";
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Fresh directory removed on scope exit unless the caller supplied one.
class WorkDir {
public:
    explicit WorkDir(const std::filesystem::path& requested)
    {
        if (!requested.empty()) {
            std::filesystem::create_directories(requested);
            path_ = requested;
            return;
        }
        std::string tmpl = (std::filesystem::temp_directory_path() / "looptune-XXXXXX").string();
        if (!mkdtemp(tmpl.data()))
            fail(ErrorCode::ToolchainError, "cannot create a temporary directory");
        path_ = tmpl;
        owned_ = true;
    }
    ~WorkDir()
    {
        if (owned_) {
            std::error_code ec;
            std::filesystem::remove_all(path_, ec);
        }
    }
    WorkDir(const WorkDir&) = delete;
    WorkDir& operator=(const WorkDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    bool owned_ = false;
};

std::string compile_command(const NativeOptions& o, const std::filesystem::path& src,
                            const std::filesystem::path& exe, const std::filesystem::path& log)
{
    std::string cmd = quote(o.compiler);
    for (const auto& f : o.flags)
        cmd += " " + quote(f);
    cmd += " " + quote(src.string()) + " -o " + quote(exe.string()) + " -lm > " + quote(log.string()) + " 2>&1";
    return cmd;
}

std::int64_t round_up(std::int64_t x, std::int64_t m) { return (x + m - 1) / m * m; }

} // namespace

bool native_available(const NativeOptions& options)
{
#if defined(__x86_64__) || defined(__i386__)
    if (!__builtin_cpu_supports("avx512f"))
        return false;
#else
    return false;
#endif
    std::lock_guard<std::mutex> lock(native_mutex());
    try {
        WorkDir dir({});
        const auto src = dir.path() / "probe.c";
        std::ofstream(src) << "#include <immintrin.h>\nint main(void)\n{\n  __m512 v = _mm512_set1_ps(1.0f);\n"
                              "  float out[16];\n  _mm512_storeu_ps(out, v);\n  return out[3] == 1.0f ? 0 : 1;\n}\n";
        const auto exe = dir.path() / "probe";
        if (std::system(compile_command(options, src, exe, dir.path() / "probe.log").c_str()) != 0)
            return false;
        return std::system(quote(exe.string()).c_str()) == 0;
    } catch (const std::exception&) {
        return false;
    }
}

EvaluationResult evaluate_native(const KernelSpec& spec, const Problem& p, const NativeOptions& options)
{
    if (options.repetitions < 1)
        fail(ErrorCode::InvalidArgument, "repetitions must be positive");
    check_register_budget(spec);
    const KernelSpec padded = spec.with_strides(p.K, round_up(p.N, kVectorLanes), round_up(p.N, kVectorLanes));
    HarnessOptions h;
    h.M = p.M;
    h.N = p.N;
    h.K = p.K;
    h.repetitions = options.repetitions;
    h.time_reference = options.time_reference;

    std::lock_guard<std::mutex> lock(native_mutex());
    WorkDir dir(options.work_dir);
    const std::string stem = "kernel_" + spec.id() + "_" + std::to_string(p.M) + "x" + std::to_string(p.N) + "x" +
                             std::to_string(p.K) + (options.time_reference ? "_ref" : "");
    const auto src = dir.path() / (stem + ".c");
    const auto exe = dir.path() / stem;
    const auto log = dir.path() / (stem + ".log");
    const auto out = dir.path() / (stem + ".out");
    {
        std::ofstream f(src);
        f << emit_harness(padded, h);
        if (!f)
            fail(ErrorCode::ToolchainError, "cannot write " + src.string());
    }
    if (std::system(compile_command(options, src, exe, log).c_str()) != 0)
        fail(ErrorCode::ToolchainError, "compiling " + src.filename().string() + " failed:\n" + slurp(log));
    const std::string run = quote(exe.string()) + " " + std::to_string(options.repetitions) + " > " +
                            quote(out.string()) + " 2>&1";
    const int status = std::system(run.c_str());

    EvaluationResult r;
    r.backend = "native";
    std::istringstream lines(slurp(out));
    bool checked = false;
    double reported = 0.0;
    for (std::string line; std::getline(lines, line);) {
        if (line.rfind("CHECK: ok", 0) == 0)
            checked = true;
        else if (line.rfind("CHECK: mismatch", 0) == 0)
            fail(ErrorCode::MiscompileError, "kernel " + spec.id() + " disagrees with the scalar reference: " + line);
        else if (line.rfind("TIME: ", 0) == 0)
            r.samples.push_back(std::stod(line.substr(6)));
        else if (line.rfind("GFLOPS: ", 0) == 0)
            reported = std::stod(line.substr(8));
    }
    if (!checked || status != 0 || r.samples.empty())
        fail(ErrorCode::ToolchainError, "harness for " + spec.id() + " did not complete (status " +
                                            std::to_string(status) + ")");
    r.correctness_checked = true;
    if (options.median_of_means) {
        r.seconds = median_of_means(r.samples, options.groups);
        r.performance = p.flops() / r.seconds / 1e9;
    } else {
        double sum = 0.0;
        for (double s : r.samples)
            sum += s;
        r.seconds = sum / static_cast<double>(r.samples.size());
        r.performance = reported;
    }
    if (!(r.performance > 0.0) || !std::isfinite(r.performance))
        fail(ErrorCode::ToolchainError, "harness for " + spec.id() + " reported no usable timing");
    r.census = census(build_vector_kernel(padded), p.M, p.N, p.K);
    return r;
}

EvaluationResult evaluate_interpreted(const KernelSpec& spec, const Problem& p, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    Buffers in;
    for (auto [name, n] : {std::pair{"A", p.M * p.K}, std::pair{"B", p.K * p.N}, std::pair{"C", p.M * p.N}}) {
        auto& v = in[name];
        v.resize(static_cast<std::size_t>(n));
        for (auto& x : v)
            x = dist(rng);
    }
    verify_emulated(spec, p.M, p.N, p.K, in);
    EvaluationResult r;
    r.backend = "interpreted";
    r.correctness_checked = true;
    r.census = census(build_vector_kernel(spec), p.M, p.N, p.K);
    return r;
}

EvaluationResult NativeEvaluator::evaluate(const KernelSpec& spec, const Problem& p)
{
    return evaluate_native(spec, p, options_);
}

EvaluationResult MemoizingEvaluator::evaluate(const KernelSpec& spec, const Problem& p)
{
    const auto key = std::make_pair(spec, p);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            ++hits_;
            return it->second;
        }
    }
    EvaluationResult r = inner_.evaluate(spec, p);
    std::lock_guard<std::mutex> lock(mutex_);
    ++misses_;
    return cache_.emplace(key, std::move(r)).first->second;
}

std::size_t MemoizingEvaluator::hits() const
{
    std::lock_guard<std::mutex> lock(mutex_);
    return hits_;
}

std::size_t MemoizingEvaluator::misses() const
{
    std::lock_guard<std::mutex> lock(mutex_);
    return misses_;
}

std::unique_ptr<Evaluator> make_evaluator(const std::string& backend, const AnalyticCosts& costs,
                                          const NativeOptions& native)
{
    if (backend == "analytic")
        return std::make_unique<AnalyticEvaluator>(costs);
    if (backend == "native")
        return std::make_unique<NativeEvaluator>(native);
    fail(ErrorCode::ConfigError, "unknown evaluator backend '" + backend + "'");
}

namespace {

/// Elements moved into tiles of size `t` over an `e` box. When a tile's three
/// blocks fit in `capacity` elements, blocks not indexed by the innermost tile
/// loop stay resident across it; otherwise the tile streams one operand per
/// multiply-accumulate on top of its blocks.
double tile_traffic(const std::array<double, 3>& e, const std::array<double, 3>& t, const LoopOrder& order,
                    double capacity)
{
    std::array<double, 3> n{};
    for (int d = 0; d < 3; ++d)
        n[d] = std::ceil(e[d] / t[d]);
    const double footprint = t[0] * t[2] + t[2] * t[1] + 2.0 * t[0] * t[1];
    const bool fits = footprint <= capacity;
    const int z = order[2];
    // Array dimensions: A (i,k), B (k,j), C (i,j); C moves in and out.
    const std::array<std::array<int, 2>, 3> dims{{{0, 2}, {2, 1}, {0, 1}}};
    const std::array<double, 3> weight{1.0, 1.0, 2.0};
    double traffic = 0.0;
    for (int a = 0; a < 3; ++a) {
        const int d0 = dims[a][0], d1 = dims[a][1];
        const int other = 3 - d0 - d1;
        double loads = e[d0] * e[d1] * n[other];
        if (fits && other == z)
            loads /= n[z];
        traffic += weight[a] * loads;
    }
    if (!fits)
        traffic += e[0] * e[1] * e[2];
    return traffic;
}

} // namespace

double analytic_variant_performance(const VariantDescriptor& raw, const Problem& p, const CacheHierarchy& cache,
                                    const TileModel& m)
{
    cache.validate();
    const std::array<std::int64_t, 3> extents{p.M, p.N, p.K};
    const VariantDescriptor d = normalize(raw, extents);
    std::array<double, 3> e{}, t1{}, t2{};
    for (int x = 0; x < 3; ++x) {
        e[x] = static_cast<double>(extents[x]);
        t1[x] = static_cast<double>(d.level1[x]);
        t2[x] = static_cast<double>(d.level2[x]);
    }
    const double elem = static_cast<double>(cache.element_size);
    const double l1 = static_cast<double>(cache.levels.front().capacity_bytes) / elem;
    const double l2 = static_cast<double>(cache.levels[std::min<std::size_t>(1, cache.levels.size() - 1)]
                                              .capacity_bytes) / elem;

    const double outer = tile_traffic(e, t1, d.order, l2);
    const double tiles1 = std::ceil(e[0] / t1[0]) * std::ceil(e[1] / t1[1]) * std::ceil(e[2] / t1[2]);
    const double inner = tile_traffic(t1, t2, d.order, l1) * tiles1;
    const double visits =
        tiles1 * std::ceil(t1[0] / t2[0]) * std::ceil(t1[1] / t2[1]) * std::ceil(t1[2] / t2[2]);
    const double vector_efficiency = std::min(1.0, t2[1] / kVectorLanes);
    const double cycles = p.flops() / (m.flops_per_cycle * vector_efficiency) + m.memory_cost * outer +
                          m.l2_cost * inner + m.tile_overhead * visits;
    return p.flops() / cycles;
}

} // namespace looptune
