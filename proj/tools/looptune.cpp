#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "looptune/pipeline.hpp"

using namespace looptune;

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<std::string> out;
    std::optional<double> top_fraction;
};

PipelineConfig resolve(const GlobalOptions& g, bool need_problems)
{
    PipelineConfig c;
    if (!g.config.empty()) {
        c = PipelineConfig::load(g.config);
    } else if (need_problems) {
        fail(ErrorCode::ConfigError, "--config is required");
    } else {
        c.problems = PipelineConfig::benchmark_suite();
    }
    if (g.seed)
        c.seed = *g.seed;
    if (g.backend)
        c.backend = *g.backend;
    if (g.out)
        c.out = *g.out;
    if (g.top_fraction)
        c.top_fraction = *g.top_fraction;
    c.validate();
    return c;
}

Problem parse_problem(const std::string& text)
{
    Problem p;
    char c1 = 0, c2 = 0;
    std::istringstream in(text);
    if (!(in >> p.M >> c1 >> p.N >> c2 >> p.K) || c1 != ',' || c2 != ',' || in.peek() != EOF || p.M < 1 || p.N < 1 ||
        p.K < 1)
        fail(ErrorCode::ConfigError, "sizes must look like M,N,K with positive values, got '" + text + "'");
    return p;
}

Json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorCode::ConfigError, "cannot read " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, path + ": " + e.what());
    }
}

/// Writes to the file when a path is given, else to stdout.
void emit(const std::optional<std::string>& path, const std::string& text)
{
    if (!path) {
        std::cout << text;
        return;
    }
    std::ofstream f(*path, std::ios::binary);
    f << text;
    if (!f)
        fail(ErrorCode::InvalidArgument, "cannot write " + *path);
}

std::vector<VariantTable> read_tables(const std::string& path)
{
    const Json j = read_json(path);
    std::vector<VariantTable> tables;
    if (j.contains("tables"))
        for (const auto& t : j.at("tables"))
            tables.push_back(VariantTable::from_json(t));
    else
        tables.push_back(VariantTable::from_json(j));
    return tables;
}

int cmd_analyze(const std::string& gemm, const std::string& nest_file, const std::string& order, bool symbolic,
                const GlobalOptions& g)
{
    const PipelineConfig c = resolve(g, false);
    std::optional<LoopNest> nest;
    if (!nest_file.empty()) {
        try {
            nest = loopnest_from_json(read_json(nest_file));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::ConfigError, nest_file + ": " + e.what());
        }
    } else {
        const Problem p = parse_problem(gemm);
        nest = gemm_nest(p.M, p.N, p.K);
        const LoopOrder o = parse_order(order);
        const std::array<std::size_t, 3> perm{static_cast<std::size_t>(o[0]), static_cast<std::size_t>(o[1]),
                                              static_cast<std::size_t>(o[2])};
        nest = permute_loops(*nest, perm);
    }
    emit(g.out, analysis_report(*nest, c.cache, symbolic).dump(2) + "\n");
    return 0;
}

int cmd_variants(const std::string& gemm, const GlobalOptions& g)
{
    PipelineConfig c = resolve(g, false);
    if (!gemm.empty())
        c.problems = {parse_problem(gemm)};
    Json tables = Json::array();
    for (const auto& p : c.problems)
        tables.push_back(build_variant_table(p, c).to_json());
    emit(g.out, Json{{"tables", tables}}.dump(1) + "\n");
    return 0;
}

int cmd_train_ranker(const std::string& measurements, const GlobalOptions& g)
{
    const PipelineConfig c = resolve(g, false);
    const auto tables = read_tables(measurements);
    std::size_t total = 0;
    for (const auto& t : tables)
        total += t.descriptors.size();
    if (total < 2)
        fail(ErrorCode::InvalidArgument, "train-ranker needs at least 2 variants, got " + std::to_string(total));
    RankerConfig rc = c.ranker;
    rc.seed = stage_seed(c.seed, "ranker");
    const auto result = train_ranker(grouped_samples(tables), rc);
    const std::string model = result.ranker.to_json().dump() + "\n";
    const std::string path = g.out.value_or("ranker.json");
    emit(path, model);
    std::cout << Json{{"model", path},
                      {"train_samples", result.train_indices.size()},
                      {"eval_samples", result.eval_indices.size()},
                      {"train_pairs", result.report.train_pairs},
                      {"eval_pairs", result.eval_pairs},
                      {"train_accuracy", result.train_accuracy},
                      {"eval_accuracy", result.eval_accuracy}}
                     .dump(2)
              << "\n";
    return 0;
}

int cmd_rank(const std::string& model, const std::string& variants, const GlobalOptions& g)
{
    const PipelineConfig c = resolve(g, false);
    Ranker ranker;
    try {
        ranker = Ranker::from_json(read_json(model));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, model + ": " + e.what());
    }
    Json out = Json::array();
    for (const auto& t : read_tables(variants)) {
        std::vector<std::string> ids;
        for (const auto& d : t.descriptors)
            ids.push_back(d.id());
        const auto result = tournament_rank(ranker, ids, t.features, c.workers);
        Json top = Json::array();
        for (const auto& e : select_top(result.ranking, c.top_fraction))
            top.push_back(Json{{"id", e.id}, {"wins", e.wins}});
        out.push_back(Json{{"problem", Json::array({t.problem.M, t.problem.N, t.problem.K})},
                           {"comparisons", result.comparisons},
                           {"top", top}});
    }
    emit(std::nullopt, out.dump(2) + "\n");
    return 0;
}

int cmd_tune(const std::string& gemm, const GlobalOptions& g)
{
    const PipelineConfig c = resolve(g, false);
    const Problem p = parse_problem(gemm);
    RLConfig rc = c.rl;
    rc.seed = c.seed;
    auto evaluator = make_evaluator(c.backend, c.costs, c.native);
    MemoizingEvaluator memo(*evaluator);
    const TuneResult r = tune(p, memo, c.ladders, rc);
    Json summary{{"problem", Json::array({p.M, p.N, p.K})},
                 {"backend", c.backend},
                 {"seed", rc.seed},
                 {"best", r.best.id()},
                 {"performance", r.best_performance},
                 {"states_evaluated", r.evaluated.size()},
                 {"steps", r.log.size()}};
    if (g.out) {
        ArtifactWriter w(*g.out);
        w.write("tune_log.jsonl", r.log_jsonl());
        w.write("policy.json", r.policy.dump() + "\n");
        summary["artifacts"] = w.manifest();
    }
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_codegen(const std::string& spec_text, bool scalar, const std::string& harness, int repetitions,
                const GlobalOptions& g)
{
    if (scalar) {
        emit(g.out, emit_scalar_kernel());
        return 0;
    }
    KernelSpec spec = parse_kernel_spec(spec_text);
    check_register_budget(spec);
    if (harness.empty()) {
        emit(g.out, emit_vector_kernel(spec));
        return 0;
    }
    const Problem p = parse_problem(harness);
    auto round16 = [](std::int64_t n) { return (n + kVectorLanes - 1) / kVectorLanes * kVectorLanes; };
    spec = spec.with_strides(p.K, round16(p.N), round16(p.N));
    HarnessOptions h;
    h.M = p.M;
    h.N = p.N;
    h.K = p.K;
    h.repetitions = repetitions;
    emit(g.out, emit_harness(spec, h));
    return 0;
}

int cmd_bench(const std::string& spec_text, const std::string& gemm, int repetitions, const GlobalOptions& g)
{
    const PipelineConfig c = resolve(g, false);
    const KernelSpec spec = parse_kernel_spec(spec_text);
    const Problem p = parse_problem(gemm);
    NativeOptions n = c.native;
    n.repetitions = repetitions;
    if (!native_available(n))
        fail(ErrorCode::ToolchainError, "native measurement needs an AVX-512 host and a working '" + n.compiler + "'");
    const auto kernel = evaluate_native(spec, p, n);
    n.time_reference = true;
    const auto reference = evaluate_native(spec, p, n);
    std::cout << Json{{"problem", Json::array({p.M, p.N, p.K})},
                      {"kernel", spec.id()},
                      {"kernel_gflops", kernel.performance},
                      {"reference_gflops", reference.performance},
                      {"speedup", kernel.performance / reference.performance},
                      {"verified", kernel.correctness_checked}}
                     .dump(2)
              << "\n";
    return 0;
}

int cmd_pipeline(const GlobalOptions& g)
{
    const PipelineConfig c = resolve(g, true);
    const Json report = run_pipeline(c, &std::cerr);
    std::cerr << "report: " << (c.out / "report.json").string() << " (geomean speedup "
              << report.at("geomean_speedup").get<double>() << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Autotuning toolkit for GEMM loop nests"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config, "Pipeline configuration (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed for all stochastic stages");
    app.add_option("--backend", g.backend, "Kernel evaluator")->check(CLI::IsMember({"analytic", "native"}));
    app.add_option("--out", g.out, "Output file or directory");
    app.add_option("--top-fraction", g.top_fraction, "Fraction of ranked variants passed on to tuning")
        ->check(CLI::Range(0.0, 1.0));
    app.fallthrough();

    std::function<int()> action;

    auto* analyze = app.add_subcommand("analyze", "Dependences and working sets of a loop nest");
    std::string gemm = "4,4,4", nest_file, order = "ijk";
    bool no_symbolic = false;
    analyze->add_option("--gemm", gemm, "GEMM sizes M,N,K")->capture_default_str();
    analyze->add_option("--nest", nest_file, "Loop nest JSON instead of a GEMM")->check(CLI::ExistingFile);
    analyze->add_option("--order", order, "Loop order of the GEMM")->capture_default_str();
    analyze->add_flag("--no-symbolic", no_symbolic, "Skip the closed forms");
    analyze->callback([&] { action = [&] { return cmd_analyze(gemm, nest_file, order, !no_symbolic, g); }; });

    auto* variants = app.add_subcommand("variants", "Tiled variants with features and modeled performance");
    std::string variants_gemm;
    variants->add_option("--gemm", variants_gemm, "Single GEMM M,N,K instead of the configured problems");
    variants->callback([&] { action = [&] { return cmd_variants(variants_gemm, g); }; });

    auto* train = app.add_subcommand("train-ranker", "Train the pairwise ranker on variant measurements");
    std::string measurements;
    train->add_option("measurements", measurements, "Output of 'variants'")->required()->check(CLI::ExistingFile);
    train->callback([&] { action = [&] { return cmd_train_ranker(measurements, g); }; });

    auto* rank = app.add_subcommand("rank", "Tournament ranking of variants");
    std::string model, rank_input;
    rank->add_option("--model", model, "Ranker model file")->required()->check(CLI::ExistingFile);
    rank->add_option("variants", rank_input, "Output of 'variants'")->required()->check(CLI::ExistingFile);
    rank->callback([&] { action = [&] { return cmd_rank(model, rank_input, g); }; });

    auto* tune_cmd = app.add_subcommand("tune", "Search kernel unroll factors with the RL tuner");
    std::string tune_gemm = "128,128,128";
    tune_cmd->add_option("--gemm", tune_gemm, "Problem M,N,K")->capture_default_str();
    tune_cmd->callback([&] { action = [&] { return cmd_tune(tune_gemm, g); }; });

    auto* codegen = app.add_subcommand("codegen", "Emit a kernel as C with AVX-512 intrinsics");
    std::string spec = "2x32x2", harness;
    bool scalar = false;
    int codegen_reps = 100;
    codegen->add_option("--spec", spec, "Unroll factors ui x uj x uk")->capture_default_str();
    codegen->add_flag("--scalar", scalar, "Emit the scalar reference instead");
    codegen->add_option("--harness", harness, "Emit a timing harness for M,N,K");
    codegen->add_option("--repetitions", codegen_reps, "Harness default repetitions")->capture_default_str();
    codegen->callback([&] { action = [&] { return cmd_codegen(spec, scalar, harness, codegen_reps, g); }; });

    auto* bench = app.add_subcommand("bench", "Compile, verify and time a kernel against the scalar reference");
    std::string bench_spec = "4x32x2", bench_gemm = "128,128,128";
    int bench_reps = 100;
    bench->add_option("--spec", bench_spec, "Unroll factors ui x uj x uk")->capture_default_str();
    bench->add_option("--gemm", bench_gemm, "Problem M,N,K")->capture_default_str();
    bench->add_option("--repetitions", bench_reps, "Timed runs")->capture_default_str()->check(CLI::PositiveNumber);
    bench->callback([&] { action = [&] { return cmd_bench(bench_spec, bench_gemm, bench_reps, g); }; });

    auto* pipeline = app.add_subcommand("pipeline", "Run every stage and write a report");
    pipeline->callback([&] { action = [&] { return cmd_pipeline(g); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        return action();
    } catch (const StageError& e) {
        std::cerr << "looptune: stage " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const Error& e) {
        std::cerr << "looptune: " << to_string(e.code()) << ": " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "looptune: " << e.what() << "\n";
        return 3;
    }
}
