#include "looptune/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "looptune/symbolic.hpp"

namespace looptune {

std::uint64_t fnv1a(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v)
{
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4)
        s[i] = digits[v & 0xf];
    return s;
}

std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage)
{
    // splitmix64 finalizer over the mixed input
    std::uint64_t z = seed ^ fnv1a(stage);
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

int exit_code_for(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::ConfigError: return 2;
    case ErrorCode::MiscompileError:
    case ErrorCode::CodegenBug: return 4;
    default: return 3;
    }
}

namespace {

[[noreturn]] void config_error(const std::string& what) { fail(ErrorCode::ConfigError, "config: " + what); }

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object())
        config_error(where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            config_error("unknown key '" + key + "' in " + where);
}

std::set<std::string> keys_of(const Json& j, std::initializer_list<std::string> drop = {})
{
    std::set<std::string> out;
    for (const auto& [key, value] : j.items())
        out.insert(key);
    for (const auto& d : drop)
        out.erase(d);
    return out;
}

std::string problem_tag(const Problem& p)
{
    return std::to_string(p.M) + "x" + std::to_string(p.N) + "x" + std::to_string(p.K);
}

Json problem_json(const Problem& p) { return Json::array({p.M, p.N, p.K}); }

Problem problem_from_json(const Json& j)
{
    if (!j.is_array() || j.size() != 3)
        config_error("a problem is a list [M, N, K]");
    Problem p{j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>()};
    if (p.M < 1 || p.N < 1 || p.K < 1)
        config_error("problem sizes must be positive");
    return p;
}

Json cache_json(const CacheHierarchy& c)
{
    Json levels = Json::array();
    for (const auto& l : c.levels)
        levels.push_back(Json{{"name", l.name}, {"capacity_bytes", l.capacity_bytes}});
    return Json{{"element_size", c.element_size}, {"levels", levels}};
}

CacheHierarchy cache_from_json(const Json& j)
{
    check_keys(j, {"element_size", "levels"}, "cache");
    CacheHierarchy c;
    c.element_size = j.value("element_size", c.element_size);
    if (j.contains("levels")) {
        c.levels.clear();
        for (const auto& l : j.at("levels")) {
            check_keys(l, {"name", "capacity_bytes"}, "cache level");
            c.levels.push_back({l.at("name").get<std::string>(), l.at("capacity_bytes").get<std::int64_t>()});
        }
    }
    c.validate();
    return c;
}

Json tiles_json(const std::array<std::vector<std::int64_t>, 3>& t)
{
    if (t[0] == t[1] && t[1] == t[2])
        return Json(t[0]);
    return Json::array({t[0], t[1], t[2]});
}

std::array<std::vector<std::int64_t>, 3> tiles_from_json(const Json& j, const std::string& where)
{
    if (!j.is_array() || j.empty())
        config_error(where + " must be a non-empty list");
    std::array<std::vector<std::int64_t>, 3> t;
    if (j[0].is_array()) {
        if (j.size() != 3)
            config_error(where + " needs one list per dimension");
        for (int d = 0; d < 3; ++d)
            t[d] = j[d].get<std::vector<std::int64_t>>();
    } else {
        for (int d = 0; d < 3; ++d)
            t[d] = j.get<std::vector<std::int64_t>>();
    }
    return t;
}

Json space_json(const SearchSpace& s)
{
    Json orders = Json::array();
    for (const auto& o : s.orders)
        orders.push_back(order_name(o));
    return Json{{"level1", tiles_json(s.level1)}, {"level2", tiles_json(s.level2)}, {"orders", orders}};
}

SearchSpace space_from_json(const Json& j)
{
    check_keys(j, {"level1", "level2", "orders"}, "search_space");
    SearchSpace s = SearchSpace::defaults();
    if (j.contains("level1"))
        s.level1 = tiles_from_json(j.at("level1"), "search_space.level1");
    if (j.contains("level2"))
        s.level2 = tiles_from_json(j.at("level2"), "search_space.level2");
    if (j.contains("orders")) {
        s.orders.clear();
        for (const auto& o : j.at("orders"))
            s.orders.push_back(parse_order(o.get<std::string>()));
    }
    s.validate();
    return s;
}

Json tile_model_json(const TileModel& m)
{
    return Json{{"flops_per_cycle", m.flops_per_cycle},
                {"memory_cost", m.memory_cost},
                {"l2_cost", m.l2_cost},
                {"tile_overhead", m.tile_overhead}};
}

TileModel tile_model_from_json(const Json& j)
{
    check_keys(j, keys_of(tile_model_json({})), "tile_model");
    TileModel m;
    m.flops_per_cycle = j.value("flops_per_cycle", m.flops_per_cycle);
    m.memory_cost = j.value("memory_cost", m.memory_cost);
    m.l2_cost = j.value("l2_cost", m.l2_cost);
    m.tile_overhead = j.value("tile_overhead", m.tile_overhead);
    if (!(m.flops_per_cycle > 0.0) || !(m.memory_cost >= 0.0) || !(m.l2_cost >= 0.0) || !(m.tile_overhead >= 0.0))
        config_error("tile_model values must be non-negative with positive flops_per_cycle");
    return m;
}

Json native_json(const NativeOptions& n)
{
    return Json{{"compiler", n.compiler},
                {"flags", n.flags},
                {"repetitions", n.repetitions},
                {"median_of_means", n.median_of_means},
                {"groups", n.groups}};
}

NativeOptions native_from_json(const Json& j)
{
    check_keys(j, keys_of(native_json({})), "native");
    NativeOptions n;
    n.compiler = j.value("compiler", n.compiler);
    n.flags = j.value("flags", n.flags);
    n.repetitions = j.value("repetitions", n.repetitions);
    n.median_of_means = j.value("median_of_means", n.median_of_means);
    n.groups = j.value("groups", n.groups);
    if (n.compiler.empty() || n.repetitions < 1 || n.groups < 1)
        config_error("native needs a compiler and positive repetitions and groups");
    return n;
}

Json without(Json j, const std::string& key)
{
    j.erase(key);
    return j;
}

const std::set<std::string> kTopLevelKeys{"problems", "cache",   "search_space", "ranker",       "ladders",
                                          "rl",       "analytic_costs", "tile_model", "native", "backend",
                                          "top_fraction", "out", "seed", "workers", "verify_limit"};

} // namespace

std::vector<Problem> PipelineConfig::benchmark_suite()
{
    return {{128, 2048, 4096},  {320, 3072, 4096},  {1632, 36548, 1024}, {2048, 4096, 32}, {1024, 16, 500000},
            {35, 8457, 2560},   {31999, 1024, 84},  {84, 1024, 4096},    {2048, 1, 128},   {256, 256, 2048}};
}

void PipelineConfig::validate() const
{
    if (problems.empty())
        config_error("problems must not be empty");
    for (const auto& p : problems)
        if (p.M < 1 || p.N < 1 || p.K < 1)
            config_error("problem sizes must be positive");
    if (backend != "analytic" && backend != "native")
        config_error("backend must be 'analytic' or 'native'");
    if (!(top_fraction > 0.0 && top_fraction <= 1.0))
        config_error("top_fraction must lie in (0, 1]");
    if (workers < 0)
        config_error("workers must be non-negative");
    if (verify_limit < 1)
        config_error("verify_limit must be positive");
    try {
        cache.validate();
        space.validate();
        ranker.validate();
        ladders.validate();
        rl.validate();
        costs.validate();
    } catch (const Error& e) {
        config_error(e.what());
    }
}

PipelineConfig PipelineConfig::from_json(const Json& j)
{
    PipelineConfig c;
    try {
        check_keys(j, kTopLevelKeys, "top level");
        if (!j.contains("problems"))
            config_error("missing key 'problems'");
        const Json& ps = j.at("problems");
        if (!ps.is_array())
            config_error("problems must be a list");
        for (const auto& p : ps)
            c.problems.push_back(problem_from_json(p));
        if (j.contains("cache"))
            c.cache = cache_from_json(j.at("cache"));
        if (j.contains("search_space"))
            c.space = space_from_json(j.at("search_space"));
        if (j.contains("ranker")) {
            check_keys(j.at("ranker"), keys_of(RankerConfig{}.to_json(), {"seed"}), "ranker");
            c.ranker = RankerConfig::from_json(j.at("ranker"));
        }
        if (j.contains("ladders")) {
            check_keys(j.at("ladders"), keys_of(Ladders{}.to_json()), "ladders");
            c.ladders = Ladders::from_json(j.at("ladders"));
        }
        if (j.contains("rl")) {
            check_keys(j.at("rl"), keys_of(RLConfig{}.to_json(), {"seed"}), "rl");
            c.rl = RLConfig::from_json(j.at("rl"));
        }
        if (j.contains("analytic_costs")) {
            check_keys(j.at("analytic_costs"), keys_of(AnalyticCosts{}.to_json()), "analytic_costs");
            c.costs = AnalyticCosts::from_json(j.at("analytic_costs"));
        }
        if (j.contains("tile_model"))
            c.tile_model = tile_model_from_json(j.at("tile_model"));
        if (j.contains("native"))
            c.native = native_from_json(j.at("native"));
        c.backend = j.value("backend", c.backend);
        c.top_fraction = j.value("top_fraction", c.top_fraction);
        c.out = j.value("out", c.out.string());
        c.seed = j.value("seed", c.seed);
        c.workers = j.value("workers", c.workers);
        c.verify_limit = j.value("verify_limit", c.verify_limit);
    } catch (const nlohmann::json::exception& e) {
        config_error(e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigError)
            throw;
        config_error(e.what());
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        config_error("cannot read " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        config_error(path.string() + ": " + e.what());
    }
    return from_json(j);
}

Json PipelineConfig::to_json() const
{
    Json ps = Json::array();
    for (const auto& p : problems)
        ps.push_back(problem_json(p));
    return Json{{"problems", ps},
                {"cache", cache_json(cache)},
                {"search_space", space_json(space)},
                {"ranker", without(ranker.to_json(), "seed")},
                {"ladders", ladders.to_json()},
                {"rl", without(rl.to_json(), "seed")},
                {"analytic_costs", costs.to_json()},
                {"tile_model", tile_model_json(tile_model)},
                {"native", native_json(native)},
                {"backend", backend},
                {"top_fraction", top_fraction},
                {"seed", seed},
                {"workers", workers},
                {"verify_limit", verify_limit}};
}

ArtifactWriter::ArtifactWriter(std::filesystem::path root) : root_(std::move(root))
{
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec)
        fail(ErrorCode::InvalidArgument, "cannot create " + root_.string() + ": " + ec.message());
}

void ArtifactWriter::write(const std::string& relative, const std::string& content)
{
    const auto path = root_ / relative;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    f << content;
    if (!f)
        fail(ErrorCode::InvalidArgument, "cannot write " + path.string());
    entries_.push_back(Json{{"path", relative}, {"bytes", content.size()}, {"fnv1a", hex64(fnv1a(content))}});
}

Json ArtifactWriter::manifest() const { return entries_; }

Json analysis_report(const LoopNest& nest, const CacheHierarchy& cache, bool symbolic)
{
    Json params = Json::object();
    for (const auto& p : nest.parameters())
        params[p.name] = p.value;
    Json deps = Json::array();
    std::vector<WorkingSetRecord> records;
    // one name per reuse relation; the kinds of one array share it
    std::vector<std::string> relations;
    for (const auto& dep : compute_dependences(nest)) {
        auto it = std::find(relations.begin(), relations.end(), dep.description);
        if (it == relations.end())
            it = relations.insert(relations.end(), dep.description);
        Json d{{"name", "d" + std::to_string(it - relations.begin() + 1)},
               {"array", dep.array},
               {"kind", to_string(dep.kind)},
               {"carrying_loop", nest.loops()[dep.carrying_loop].iterator},
               {"relation", dep.description}};
        auto ws = working_set(nest, dep);
        if (!ws) {
            d["empty"] = true;
            d["note"] = "no dependent instances: the carrying loop has a single iteration";
            deps.push_back(d);
            continue;
        }
        d["empty"] = false;
        d["ws_min"] = ws->ws_min;
        d["ws_max"] = ws->ws_max;
        const std::size_t level = fastest_level(ws->ws_max, cache);
        d["fits"] = level < cache.levels.size() ? cache.levels[level].name : std::string("memory");
        if (symbolic) {
            Json sym = Json::object();
            if (auto lo = symbolic_working_set(nest, dep, WorkingSetBound::Min))
                sym["ws_min"] = lo->to_string();
            if (auto hi = symbolic_working_set(nest, dep, WorkingSetBound::Max))
                sym["ws_max"] = hi->to_string();
            d["symbolic"] = sym;
        }
        deps.push_back(d);
        records.push_back(*ws);
    }
    const WorkingSetProfile profile = classify(records, cache);
    return Json{{"parameters", params},
                {"dependences", deps},
                {"profile", Json{{"max_slots", profile.max_slots}, {"min_slots", profile.min_slots}}}};
}

namespace {

VariantDescriptor parse_descriptor(const std::string& id)
{
    VariantDescriptor d;
    std::istringstream in(id);
    std::string order, l1, l2;
    if (!std::getline(in, order, '/') || !std::getline(in, l1, '/') || !std::getline(in, l2))
        fail(ErrorCode::InvalidArgument, "malformed variant id '" + id + "'");
    d.order = parse_order(order);
    auto triple = [&](const std::string& s, std::array<std::int64_t, 3>& t) {
        char x1 = 0, x2 = 0;
        std::istringstream ts(s);
        if (!(ts >> t[0] >> x1 >> t[1] >> x2 >> t[2]) || x1 != 'x' || x2 != 'x')
            fail(ErrorCode::InvalidArgument, "malformed variant id '" + id + "'");
    };
    triple(l1, d.level1);
    triple(l2, d.level2);
    d.validate();
    return d;
}

VariantTable finish_table(const Problem& p, const PipelineConfig& config, std::vector<VariantDescriptor> descriptors,
                          const std::vector<WorkingSetProfile>& profiles)
{
    VariantTable t;
    t.problem = p;
    t.descriptors = std::move(descriptors);
    for (std::size_t v = 0; v < t.descriptors.size(); ++v) {
        t.features.push_back(profiles[v].features());
        t.performance.push_back(analytic_variant_performance(t.descriptors[v], p, config.cache, config.tile_model));
    }
    return t;
}

std::vector<VariantDescriptor> descriptors_of(const LoopNest& gemm, const SearchSpace& space)
{
    std::vector<VariantDescriptor> out;
    for (const auto& v : generate_variants(gemm, space))
        out.push_back(v.descriptor);
    return out;
}

} // namespace

Json VariantTable::to_json() const
{
    Json vs = Json::array();
    for (std::size_t v = 0; v < descriptors.size(); ++v)
        vs.push_back(Json{{"id", descriptors[v].id()}, {"features", features[v]}, {"performance", performance[v]}});
    return Json{{"problem", problem_json(problem)}, {"variants", vs}};
}

VariantTable VariantTable::from_json(const Json& j)
{
    VariantTable t;
    try {
        t.problem = problem_from_json(j.at("problem"));
        for (const auto& v : j.at("variants")) {
            t.descriptors.push_back(parse_descriptor(v.at("id").get<std::string>()));
            t.features.push_back(v.at("features").get<std::vector<double>>());
            t.performance.push_back(v.value("performance", 0.0));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("variant table: ") + e.what());
    }
    return t;
}

VariantTable build_variant_table(const Problem& p, const PipelineConfig& config)
{
    const LoopNest gemm = gemm_nest(p.M, p.N, p.K);
    auto descriptors = descriptors_of(gemm, config.space);
    const auto profiles = featurize_all(gemm, descriptors, config.cache, config.workers);
    return finish_table(p, config, std::move(descriptors), profiles);
}

VariantTable build_variant_table_serial(const Problem& p, const PipelineConfig& config)
{
    const LoopNest gemm = gemm_nest(p.M, p.N, p.K);
    auto descriptors = descriptors_of(gemm, config.space);
    const auto profiles = featurize_all_serial(gemm, descriptors, config.cache);
    return finish_table(p, config, std::move(descriptors), profiles);
}

std::vector<GroupedSample> grouped_samples(const std::vector<VariantTable>& tables)
{
    std::vector<GroupedSample> out;
    for (std::size_t g = 0; g < tables.size(); ++g)
        for (std::size_t v = 0; v < tables[g].descriptors.size(); ++v)
            out.push_back({tables[g].features[v], tables[g].performance[v], g});
    return out;
}

double analytic_scalar_performance(const Problem& p, const AnalyticCosts& costs)
{
    const double macs = static_cast<double>(p.M) * static_cast<double>(p.N) * static_cast<double>(p.K);
    return p.flops() / (costs.scalar_mac * macs);
}

namespace {

class Stage {
public:
    Stage(std::string name, std::ostream* progress) : name_(std::move(name))
    {
        if (progress)
            *progress << "[" << name_ << "]\n" << std::flush;
    }

    template <class F>
    auto run(F&& f) -> decltype(f())
    {
        try {
            return f();
        } catch (const StageError&) {
            throw;
        } catch (const Error& e) {
            throw StageError(name_, e.code(), e.what());
        } catch (const std::exception& e) {
            throw StageError(name_, ErrorCode::InvalidArgument, e.what());
        }
    }

private:
    std::string name_;
};

bool has_pairs(const std::vector<VariantTable>& tables)
{
    for (const auto& t : tables)
        for (std::size_t a = 0; a < t.performance.size(); ++a)
            for (std::size_t b = a + 1; b < t.performance.size(); ++b)
                if (t.performance[a] != t.performance[b])
                    return true;
    return false;
}

Problem tile_problem(const VariantDescriptor& d) { return Problem{d.level2[0], d.level2[1], d.level2[2]}; }

struct TuneOutcome {
    KernelSpec spec;
    double performance = 0.0;
    bool checked = false;
    std::uint64_t seed = 0;
};

} // namespace

Json run_pipeline(const PipelineConfig& config, std::ostream* progress)
{
    config.validate();
    ArtifactWriter out(config.out);
    const Json config_json = config.to_json();
    const std::string config_text = config_json.dump(2) + "\n";
    out.write("config.json", config_text);
    Json stage_seeds = Json::object();

    std::vector<VariantTable> tables;
    Stage("variants", progress).run([&] {
        for (const auto& p : config.problems) {
            tables.push_back(build_variant_table(p, config));
            out.write("variants/" + problem_tag(p) + ".json", tables.back().to_json().dump(1) + "\n");
            if (progress)
                *progress << "  " << problem_tag(p) << ": " << tables.back().descriptors.size() << " variants\n";
        }
    });

    std::optional<Ranker> ranker;
    Json ranker_info = Json{{"trained", false}};
    Stage("ranker", progress).run([&] {
        if (!has_pairs(tables))
            return;
        RankerConfig rc = config.ranker;
        rc.seed = stage_seed(config.seed, "ranker");
        stage_seeds["ranker"] = rc.seed;
        auto trained = train_ranker(grouped_samples(tables), rc);
        const std::string model = trained.ranker.to_json().dump() + "\n";
        out.write("ranker/model.json", model);
        Json training{{"train_samples", trained.train_indices.size()},
                      {"eval_samples", trained.eval_indices.size()},
                      {"train_pairs", trained.report.train_pairs},
                      {"eval_pairs", trained.eval_pairs},
                      {"train_accuracy", trained.train_accuracy},
                      {"eval_accuracy", trained.eval_accuracy},
                      {"loss_history", trained.report.loss_history}};
        out.write("ranker/training.json", training.dump(1) + "\n");
        ranker_info = Json{{"trained", true},
                           {"model_hash", hex64(fnv1a(model))},
                           {"eval_accuracy", trained.eval_accuracy},
                           {"eval_pairs", trained.eval_pairs}};
        ranker = std::move(trained.ranker);
        if (progress)
            *progress << "  held-out pairwise accuracy " << ranker_info["eval_accuracy"].get<double>() << "\n";
    });

    std::vector<std::vector<RankedEntry>> tops;
    Stage("rank", progress).run([&] {
        for (const auto& t : tables) {
            std::vector<std::string> ids;
            for (const auto& d : t.descriptors)
                ids.push_back(d.id());
            TournamentResult result;
            if (ranker)
                result = tournament_rank(*ranker, ids, t.features, config.workers);
            else
                result = tournament_rank(ids, [](std::size_t, std::size_t) { return Outcome::Draw; }, config.workers);
            tops.push_back(select_top(result.ranking, config.top_fraction));
            Json ranking = Json::array();
            for (const auto& e : result.ranking)
                ranking.push_back(Json{{"id", e.id}, {"wins", e.wins}});
            out.write("ranking/" + problem_tag(t.problem) + ".json",
                      Json{{"problem", problem_json(t.problem)},
                           {"comparisons", result.comparisons},
                           {"top", tops.back().size()},
                           {"ranking", ranking}}
                              .dump(1) +
                          "\n");
        }
    });

    auto backend = make_evaluator(config.backend, config.costs, config.native);
    MemoizingEvaluator evaluator(*backend);
    std::map<Problem, TuneOutcome> tuned;
    Stage("tune", progress).run([&] {
        for (const auto& top : tops)
            for (const auto& e : top) {
                const Problem tile = tile_problem(parse_descriptor(e.id));
                if (tuned.count(tile))
                    continue;
                RLConfig rc = config.rl;
                const std::string name = "tune/" + problem_tag(tile);
                rc.seed = stage_seed(config.seed, name);
                stage_seeds[name] = rc.seed;
                TuneResult r = tune(tile, evaluator, config.ladders, rc);
                out.write("rl/" + problem_tag(tile) + ".jsonl", r.log_jsonl());
                out.write("rl/" + problem_tag(tile) + "_policy.json", r.policy.dump() + "\n");
                tuned[tile] = TuneOutcome{r.best, r.best_performance, config.backend == "native", rc.seed};
                if (progress)
                    *progress << "  tile " << problem_tag(tile) << ": " << r.best.id() << "\n";
            }
    });

    Stage("verify", progress).run([&] {
        for (auto& [tile, t] : tuned) {
            const Problem clamped{std::min(tile.M, config.verify_limit), std::min(tile.N, config.verify_limit),
                                  std::min(tile.K, config.verify_limit)};
            const Problem ragged{2 * t.spec.ui + 1, t.spec.uj + 5, 2 * t.spec.uk + 1};
            evaluate_interpreted(t.spec, clamped, t.seed);
            evaluate_interpreted(t.spec, ragged, t.seed);
            t.checked = true;
        }
    });

    std::map<Problem, double> baselines;
    Stage("baseline", progress).run([&] {
        for (const auto& [tile, t] : tuned) {
            if (config.backend == "native") {
                NativeOptions n = config.native;
                n.time_reference = true;
                baselines[tile] = evaluate_native(t.spec, tile, n).performance;
            } else {
                baselines[tile] = analytic_scalar_performance(tile, config.costs);
            }
        }
    });

    Json results = Json::array();
    double log_speedup = 0.0;
    Stage("codegen", progress).run([&] {
        std::set<KernelSpec> emitted;
        out.write("kernels/reference.c", emit_scalar_kernel());
        for (std::size_t p = 0; p < tables.size(); ++p) {
            const auto& t = tables[p];
            std::size_t chosen = 0;
            double best = -1.0;
            for (std::size_t r = 0; r < tops[p].size(); ++r) {
                const auto& o = tuned.at(tile_problem(parse_descriptor(tops[p][r].id)));
                if (o.performance > best) {
                    best = o.performance;
                    chosen = r;
                }
            }
            const RankedEntry& entry = tops[p][chosen];
            const VariantDescriptor d = parse_descriptor(entry.id);
            const Problem tile = tile_problem(d);
            const TuneOutcome& o = tuned.at(tile);
            if (!o.checked)
                fail(ErrorCode::CodegenBug, "kernel " + o.spec.id() + " was not verified");
            if (emitted.insert(o.spec).second)
                out.write("kernels/" + o.spec.id() + ".c", emit_vector_kernel(o.spec));
            const double speedup = o.performance / baselines.at(tile);
            log_speedup += std::log(speedup);
            results.push_back(Json{{"problem", problem_json(t.problem)},
                                   {"variants", t.descriptors.size()},
                                   {"candidates", tops[p].size()},
                                   {"variant", entry.id},
                                   {"variant_rank", chosen},
                                   {"variant_wins", entry.wins},
                                   {"modeled_variant_performance", t.performance[entry.index]},
                                   {"tile", problem_json(tile)},
                                   {"kernel", o.spec.id()},
                                   {"kernel_source", "kernels/" + o.spec.id() + ".c"},
                                   {"performance", o.performance},
                                   {"baseline_performance", baselines.at(tile)},
                                   {"speedup", speedup},
                                   {"verified", o.checked}});
        }
    });

    Json manifest = out.manifest();
    manifest.push_back(Json{{"path", "report.json"}});
    Json report{{"tool", "looptune"},
                {"report_version", 1},
                {"provenance",
                 Json{{"config_hash", hex64(fnv1a(config_text))},
                      {"seed", config.seed},
                      {"backend", config.backend},
                      {"performance_unit", config.backend == "native" ? "GFLOP/s" : "flops per modeled cycle"},
                      {"stage_seeds", stage_seeds},
                      {"ranker", ranker_info}}},
                {"results", results},
                {"geomean_speedup", std::exp(log_speedup / static_cast<double>(results.size()))},
                {"manifest", manifest}};
    Stage("report", progress).run([&] {
        const auto path = config.out / "report.json";
        std::ofstream f(path, std::ios::binary);
        f << report.dump(2) << "\n";
        if (!f)
            fail(ErrorCode::InvalidArgument, "cannot write " + path.string());
    });
    return report;
}

} // namespace looptune
