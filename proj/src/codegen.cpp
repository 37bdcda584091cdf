#include "looptune/codegen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "looptune/error.hpp"

namespace looptune {

bool KernelSpec::aligned() const
{
    return b_stride > 0 && c_stride > 0 && b_stride % kVectorLanes == 0 && c_stride % kVectorLanes == 0;
}

std::string KernelSpec::id() const
{
    return std::to_string(ui) + "x" + std::to_string(uj) + "x" + std::to_string(uk);
}

KernelSpec KernelSpec::with_strides(std::int64_t a, std::int64_t b, std::int64_t c) const
{
    KernelSpec s = *this;
    s.a_stride = a;
    s.b_stride = b;
    s.c_stride = c;
    return s;
}

KernelSpec parse_kernel_spec(const std::string& text)
{
    KernelSpec spec;
    char x1 = 0, x2 = 0;
    std::istringstream in(text);
    if (!(in >> spec.ui >> x1 >> spec.uj >> x2 >> spec.uk) || x1 != 'x' || x2 != 'x' || in.peek() != EOF)
        fail(ErrorCode::InvalidArgument, "kernel spec must look like 2x32x2, got '" + text + "'");
    if (spec.ui < 1 || spec.uk < 1 || spec.uj < 1)
        fail(ErrorCode::InvalidArgument, "kernel unroll factors must be positive");
    return spec;
}

int required_registers(const KernelSpec& spec)
{
    const int nc = spec.uj / kVectorLanes;
    return spec.ui * nc + spec.uk * nc + spec.ui * spec.uk;
}

int check_register_budget(const KernelSpec& spec, int total)
{
    if (spec.ui < 1 || spec.uk < 1)
        fail(ErrorCode::UnsupportedSpec, "unroll factors must be positive in " + spec.id());
    if (spec.uj < kVectorLanes || spec.uj % kVectorLanes != 0)
        fail(ErrorCode::UnsupportedSpec, "u_j must be a positive multiple of 16, got " + std::to_string(spec.uj));
    const int need = required_registers(spec);
    if (need > total)
        fail(ErrorCode::RegisterPressure, "spec " + spec.id() + " needs " + std::to_string(need) +
                                              " vector registers, " + std::to_string(total) + " available");
    return need;
}

std::int64_t Region::volume() const
{
    auto len = [](std::int64_t a, std::int64_t b) { return std::max<std::int64_t>(0, b - a); };
    return len(i0, i1) * len(j0, j1) * len(k0, k1);
}

bool Region::contains(std::int64_t i, std::int64_t j, std::int64_t k) const
{
    return i >= i0 && i < i1 && j >= j0 && j < j1 && k >= k0 && k < k1;
}

std::vector<Region> residue_plan(std::int64_t M, std::int64_t N, std::int64_t K, const KernelSpec& spec)
{
    if (M < 0 || N < 0 || K < 0 || spec.ui < 1 || spec.uj < 1 || spec.uk < 1)
        fail(ErrorCode::InvalidArgument, "residue_plan needs non-negative sizes and positive factors");
    const std::int64_t Mf = M / spec.ui * spec.ui;
    const std::int64_t Nf = N / spec.uj * spec.uj;
    const std::int64_t Kf = K / spec.uk * spec.uk;
    return {
        {"full", 0, Mf, 0, Nf, 0, Kf},
        {"k-residue", 0, Mf, 0, Nf, Kf, K},
        {"n-residue", 0, Mf, Nf, N, 0, K},
        {"m-residue", Mf, M, 0, N, 0, K},
    };
}

namespace {

std::string reg(const char* base, int index)
{
    return index == 0 ? std::string(base) : std::string(base) + std::to_string(index);
}

Stmt loop(std::string var, Bound lower, Bound upper, int step, std::vector<Stmt> body)
{
    Stmt s;
    s.kind = StmtKind::Loop;
    s.var = std::move(var);
    s.lower = std::move(lower);
    s.upper = std::move(upper);
    s.step = step;
    s.body = std::move(body);
    return s;
}

Stmt comment(std::string text)
{
    Stmt s;
    s.kind = StmtKind::Comment;
    s.text = std::move(text);
    return s;
}

Stmt scalar_mac(const std::string& i, const std::string& j, const std::string& k)
{
    Stmt s;
    s.kind = StmtKind::ScalarMac;
    s.c = {'C', {i, 0}, {j, 0}};
    s.x = {'A', {i, 0}, {k, 0}};
    s.y = {'B', {k, 0}, {j, 0}};
    return s;
}

/// ii/jj/kk triple nest over the given bounds with one scalar MAC.
Stmt scalar_nest(Bound i0, Bound i1, Bound j0, Bound j1, Bound k0, Bound k1)
{
    return loop("ii", std::move(i0), std::move(i1), 1,
                {loop("jj", std::move(j0), std::move(j1), 1,
                      {loop("kk", std::move(k0), std::move(k1), 1, {scalar_mac("ii", "jj", "kk")})})});
}

} // namespace

KernelProgram build_vector_kernel(const KernelSpec& spec)
{
    check_register_budget(spec);
    const int ui = spec.ui, uk = spec.uk, nc = spec.uj / kVectorLanes;
    const bool aligned = spec.aligned();

    KernelProgram p;
    p.spec = spec;
    p.vector = true;
    for (int r = 0; r < ui * nc; ++r)
        p.registers.push_back(reg("vecC", r));
    for (int r = 0; r < ui * uk; ++r)
        p.registers.push_back(reg("vecA", r));
    for (int r = 0; r < uk * nc; ++r)
        p.registers.push_back(reg("vecB", r));

    auto c_access = [](int ii, int jv) { return Access{'C', {"i", ii}, {"j", kVectorLanes * jv}}; };

    std::vector<Stmt> kbody;
    auto broadcast = [&](int index) {
        Stmt s;
        s.kind = StmtKind::VecBroadcast;
        s.dst = reg("vecA", index);
        s.x = {'A', {"i", index / uk}, {"k", index % uk}};
        kbody.push_back(s);
    };
    broadcast(0);
    for (int kk = 0; kk < uk; ++kk)
        for (int jv = 0; jv < nc; ++jv) {
            Stmt s;
            s.kind = StmtKind::VecLoad;
            s.dst = reg("vecB", kk * nc + jv);
            s.x = {'B', {"k", kk}, {"j", kVectorLanes * jv}};
            s.aligned = aligned;
            kbody.push_back(s);
        }
    for (int index = 1; index < ui * uk; ++index)
        broadcast(index);
    for (int kk = 0; kk < uk; ++kk)
        for (int ii = 0; ii < ui; ++ii)
            for (int jv = 0; jv < nc; ++jv) {
                Stmt s;
                s.kind = StmtKind::VecFma;
                s.dst = reg("vecC", ii * nc + jv);
                s.a = reg("vecA", ii * uk + kk);
                s.b = reg("vecB", kk * nc + jv);
                kbody.push_back(s);
            }

    std::vector<Stmt> jbody;
    for (int ii = 0; ii < ui; ++ii)
        for (int jv = 0; jv < nc; ++jv) {
            Stmt s;
            s.kind = StmtKind::VecLoad;
            s.dst = reg("vecC", ii * nc + jv);
            s.x = c_access(ii, jv);
            s.aligned = aligned;
            jbody.push_back(s);
        }
    jbody.push_back(loop("k", {"", 0}, {"K_full", 0}, uk, std::move(kbody)));
    for (int ii = 0; ii < ui; ++ii)
        for (int jv = 0; jv < nc; ++jv) {
            Stmt s;
            s.kind = StmtKind::VecStore;
            s.a = reg("vecC", ii * nc + jv);
            s.c = c_access(ii, jv);
            s.aligned = aligned;
            jbody.push_back(s);
        }
    if (uk > 1) {
        jbody.push_back(comment("k residue"));
        jbody.push_back(scalar_nest({"i", 0}, {"i", ui}, {"j", 0}, {"j", spec.uj}, {"K_full", 0}, {"K", 0}));
    }

    std::vector<Stmt> ibody;
    ibody.push_back(loop("j", {"", 0}, {"N_full", 0}, spec.uj, std::move(jbody)));
    ibody.push_back(comment("n residue"));
    ibody.push_back(scalar_nest({"i", 0}, {"i", ui}, {"N_full", 0}, {"N", 0}, {"", 0}, {"K", 0}));

    p.body.push_back(loop("i", {"", 0}, {"M_full", 0}, ui, std::move(ibody)));
    if (ui > 1) {
        p.body.push_back(comment("m residue"));
        p.body.push_back(scalar_nest({"M_full", 0}, {"M", 0}, {"", 0}, {"N", 0}, {"", 0}, {"K", 0}));
    }
    return p;
}

KernelProgram build_scalar_kernel()
{
    KernelProgram p;
    p.vector = false;
    p.spec = KernelSpec{1, 1, 1};
    p.body.push_back(loop("i", {"", 0}, {"M", 0}, 1,
                          {loop("j", {"", 0}, {"N", 0}, 1,
                                {loop("k", {"", 0}, {"K", 0}, 1, {scalar_mac("i", "j", "k")})})}));
    return p;
}

namespace {

std::string bound_text(const Bound& b)
{
    if (b.symbol.empty())
        return std::to_string(b.offset);
    if (b.offset == 0)
        return b.symbol;
    return b.symbol + " + " + std::to_string(b.offset);
}

std::string term_text(const Bound& b)
{
    if (b.offset == 0)
        return b.symbol;
    return "(" + b.symbol + "+" + std::to_string(b.offset) + ")";
}

std::string access_text(const Access& a)
{
    return std::string(1, a.array) + "[" + term_text(a.row) + "*" + std::string(1, a.array) + "Stride+" +
           term_text(a.col) + "]";
}

void collect_vars(const std::vector<Stmt>& body, std::vector<std::string>& vars)
{
    for (const auto& s : body)
        if (s.kind == StmtKind::Loop) {
            if (std::find(vars.begin(), vars.end(), s.var) == vars.end())
                vars.push_back(s.var);
            collect_vars(s.body, vars);
        }
}

void print_body(std::ostringstream& os, const std::vector<Stmt>& body, int depth)
{
    const std::string pad(2 * depth, ' ');
    for (const auto& s : body) {
        switch (s.kind) {
        case StmtKind::Loop:
            os << pad << "for (" << s.var << " = " << bound_text(s.lower) << "; " << s.var << " < "
               << bound_text(s.upper) << "; " << s.var << " += " << s.step << ") {\n";
            print_body(os, s.body, depth + 1);
            os << pad << "}\n";
            break;
        case StmtKind::VecLoad:
            os << pad << s.dst << " = " << (s.aligned ? "_mm512_load_ps" : "_mm512_loadu_ps") << "(&"
               << access_text(s.x) << ");\n";
            break;
        case StmtKind::VecBroadcast:
            os << pad << s.dst << " = _mm512_set1_ps(" << access_text(s.x) << ");\n";
            break;
        case StmtKind::VecFma:
            os << pad << s.dst << " = _mm512_fmadd_ps(" << s.a << ", " << s.b << ", " << s.dst << ");\n";
            break;
        case StmtKind::VecStore:
            os << pad << (s.aligned ? "_mm512_store_ps" : "_mm512_storeu_ps") << "(&" << access_text(s.c) << ", "
               << s.a << ");\n";
            break;
        case StmtKind::ScalarMac:
            os << pad << access_text(s.c) << " += " << access_text(s.x) << " * " << access_text(s.y) << ";\n";
            break;
        case StmtKind::Comment:
            os << pad << "/* " << s.text << " */\n";
            break;
        }
    }
}

} // namespace

std::string print_kernel(const KernelProgram& program, const std::string& name)
{
    std::ostringstream os;
    os << "void " << name << "(long M, long N, long K, const float* A, long AStride,\n"
       << "    const float* B, long BStride, float* C, long CStride)\n{\n";
    std::vector<std::string> vars;
    collect_vars(program.body, vars);
    os << "  long";
    for (std::size_t v = 0; v < vars.size(); ++v)
        os << (v ? ", " : " ") << vars[v];
    os << ";\n";
    if (program.vector) {
        os << "  __m512";
        for (std::size_t r = 0; r < program.registers.size(); ++r)
            os << (r ? ", " : " ") << program.registers[r];
        os << ";\n";
        const auto& s = program.spec;
        os << "  long M_full = (M / " << s.ui << ") * " << s.ui << ";\n";
        os << "  long N_full = (N / " << s.uj << ") * " << s.uj << ";\n";
        os << "  long K_full = (K / " << s.uk << ") * " << s.uk << ";\n";
    }
    print_body(os, program.body, 1);
    os << "}\n";
    return os.str();
}

std::string emit_vector_kernel(const KernelSpec& spec) { return print_kernel(build_vector_kernel(spec)); }

std::string emit_scalar_kernel() { return print_kernel(build_scalar_kernel(), "looptune_reference"); }

namespace {

void collect_registers(const std::vector<Stmt>& body, std::set<std::string>& out)
{
    for (const auto& s : body) {
        for (const auto* r : {&s.dst, &s.a, &s.b})
            if (!r->empty())
                out.insert(*r);
        collect_registers(s.body, out);
    }
}

/// Variable slots shared by the census and the emulator.
enum Slot { sM, sN, sK, sMf, sNf, sKf, si, sj, sk, sii, sjj, skk, sZero, kSlots };

int slot_of(const std::string& name)
{
    static const std::map<std::string, int> slots{
        {"M", sM},   {"N", sN},   {"K", sK},   {"M_full", sMf}, {"N_full", sNf}, {"K_full", sKf}, {"i", si},
        {"j", sj},   {"k", sk},   {"ii", sii}, {"jj", sjj},     {"kk", skk},     {"", sZero}};
    auto it = slots.find(name);
    if (it == slots.end())
        fail(ErrorCode::CodegenBug, "unknown kernel symbol '" + name + "'");
    return it->second;
}

using Env = std::array<std::int64_t, kSlots>;

Env initial_env(const KernelProgram& p, std::int64_t M, std::int64_t N, std::int64_t K)
{
    Env env{};
    env[sM] = M;
    env[sN] = N;
    env[sK] = K;
    env[sMf] = p.vector ? M / p.spec.ui * p.spec.ui : M;
    env[sNf] = p.vector ? N / p.spec.uj * p.spec.uj : N;
    env[sKf] = p.vector ? K / p.spec.uk * p.spec.uk : K;
    return env;
}

std::int64_t eval(const Bound& b, const Env& env) { return env[slot_of(b.symbol)] + b.offset; }

void count_static(const std::vector<Stmt>& body, Env& env, std::int64_t mult, OpCensus& c)
{
    for (const auto& s : body) {
        switch (s.kind) {
        case StmtKind::Loop: {
            const std::int64_t lo = eval(s.lower, env), hi = eval(s.upper, env);
            const std::int64_t trips = hi > lo ? (hi - lo + s.step - 1) / s.step : 0;
            env[slot_of(s.var)] = lo;
            count_static(s.body, env, mult * trips, c);
            break;
        }
        case StmtKind::VecLoad:
            (s.x.array == 'C' ? c.c_loads : c.b_loads) += mult;
            break;
        case StmtKind::VecBroadcast: c.broadcasts += mult; break;
        case StmtKind::VecFma: c.fmas += mult; break;
        case StmtKind::VecStore: c.stores += mult; break;
        case StmtKind::ScalarMac: c.scalar_macs += mult; break;
        case StmtKind::Comment: break;
        }
    }
}

struct CAccess {
    int array; // 0 = A, 1 = B, 2 = C
    int row_slot, col_slot;
    std::int64_t row_off, col_off;
};

struct CStmt {
    StmtKind kind;
    int var = 0, lo_slot = 0, hi_slot = 0;
    std::int64_t lo_off = 0, hi_off = 0;
    int step = 1;
    std::vector<CStmt> body;
    int dst = -1, a = -1, b = -1;
    CAccess c{}, x{}, y{};
    bool aligned = false;
};

int array_index(char a) { return a == 'A' ? 0 : a == 'B' ? 1 : 2; }

CAccess compile_access(const Access& a)
{
    return {array_index(a.array), slot_of(a.row.symbol), slot_of(a.col.symbol), a.row.offset, a.col.offset};
}

std::vector<CStmt> compile(const std::vector<Stmt>& body, const std::map<std::string, int>& regs)
{
    auto reg_of = [&](const std::string& r) {
        if (r.empty())
            return -1;
        auto it = regs.find(r);
        if (it == regs.end())
            fail(ErrorCode::CodegenBug, "undeclared vector register " + r);
        return it->second;
    };
    std::vector<CStmt> out;
    for (const auto& s : body) {
        CStmt c;
        c.kind = s.kind;
        if (s.kind == StmtKind::Comment)
            continue;
        if (s.kind == StmtKind::Loop) {
            c.var = slot_of(s.var);
            c.lo_slot = slot_of(s.lower.symbol);
            c.lo_off = s.lower.offset;
            c.hi_slot = slot_of(s.upper.symbol);
            c.hi_off = s.upper.offset;
            c.step = s.step;
            c.body = compile(s.body, regs);
        } else {
            c.dst = reg_of(s.dst);
            c.a = reg_of(s.a);
            c.b = reg_of(s.b);
            c.c = compile_access(s.c);
            c.x = compile_access(s.x);
            c.y = compile_access(s.y);
            c.aligned = s.aligned;
        }
        out.push_back(std::move(c));
    }
    return out;
}

using Lanes = std::array<float, kVectorLanes>;

struct Machine {
    Env env{};
    std::vector<Lanes> regs;
    std::array<float*, 3> base{};
    std::array<std::int64_t, 3> stride{}, rows{}, cols{};
    OpCensus counts;

    float* address(const CAccess& a, int width, bool aligned)
    {
        const std::int64_t r = env[a.row_slot] + a.row_off;
        const std::int64_t c = env[a.col_slot] + a.col_off;
        if (r < 0 || r >= rows[a.array] || c < 0 || c + width > cols[a.array])
            fail(ErrorCode::CodegenBug, std::string("kernel access out of bounds on ") + "ABC"[a.array] + "[" +
                                            std::to_string(r) + "][" + std::to_string(c) + "]");
        const std::int64_t off = r * stride[a.array] + c;
        if (aligned && off % kVectorLanes != 0)
            fail(ErrorCode::CodegenBug, std::string("misaligned vector access on ") + "ABC"[a.array]);
        return base[a.array] + off;
    }

    void run(const std::vector<CStmt>& body)
    {
        for (const auto& s : body) {
            switch (s.kind) {
            case StmtKind::Loop: {
                const std::int64_t hi = env[s.hi_slot] + s.hi_off;
                for (env[s.var] = env[s.lo_slot] + s.lo_off; env[s.var] < hi; env[s.var] += s.step)
                    run(s.body);
                break;
            }
            case StmtKind::VecLoad: {
                const float* p = address(s.x, kVectorLanes, s.aligned);
                std::copy(p, p + kVectorLanes, regs[s.dst].begin());
                (s.x.array == 2 ? counts.c_loads : counts.b_loads) += 1;
                break;
            }
            case StmtKind::VecBroadcast:
                regs[s.dst].fill(*address(s.x, 1, false));
                ++counts.broadcasts;
                break;
            case StmtKind::VecFma: {
                auto& d = regs[s.dst];
                const auto& a = regs[s.a];
                const auto& b = regs[s.b];
                for (int l = 0; l < kVectorLanes; ++l)
                    d[l] = std::fma(a[l], b[l], d[l]);
                ++counts.fmas;
                break;
            }
            case StmtKind::VecStore: {
                float* p = address(s.c, kVectorLanes, s.aligned);
                std::copy(regs[s.a].begin(), regs[s.a].end(), p);
                ++counts.stores;
                break;
            }
            case StmtKind::ScalarMac: {
                float& c = *address(s.c, 1, false);
                c = std::fma(*address(s.x, 1, false), *address(s.y, 1, false), c);
                ++counts.scalar_macs;
                break;
            }
            case StmtKind::Comment: break;
            }
        }
    }
};

} // namespace

std::set<std::string> vector_temporaries(const KernelProgram& program)
{
    std::set<std::string> out;
    collect_registers(program.body, out);
    return out;
}

OpCensus census(const KernelProgram& program, std::int64_t M, std::int64_t N, std::int64_t K)
{
    Env env = initial_env(program, M, N, K);
    OpCensus c;
    count_static(program.body, env, 1, c);
    return c;
}

OpCensus emulate(const KernelProgram& program, std::int64_t M, std::int64_t N, std::int64_t K, const float* A,
                 std::int64_t a_stride, const float* B, std::int64_t b_stride, float* C, std::int64_t c_stride)
{
    if (a_stride < K || b_stride < N || c_stride < N)
        fail(ErrorCode::InvalidArgument, "row strides smaller than the matrix widths");
    std::map<std::string, int> regs;
    for (const auto& r : program.registers)
        regs.emplace(r, static_cast<int>(regs.size()));
    Machine m;
    m.env = initial_env(program, M, N, K);
    m.regs.assign(regs.size(), Lanes{});
    // The emulator only reads through A and B.
    m.base = {const_cast<float*>(A), const_cast<float*>(B), C};
    m.stride = {a_stride, b_stride, c_stride};
    m.rows = {M, K, M};
    m.cols = {K, N, N};
    m.run(compile(program.body, regs));
    return m.counts;
}

void verify_emulated(const KernelSpec& spec, std::int64_t M, std::int64_t N, std::int64_t K, const Buffers& inputs)
{
    auto nest = gemm_nest(M, N, K);
    Buffers expected = inputs;
    interpret(nest, expected);
    std::vector<float> got = inputs.at("C");
    emulate(build_vector_kernel(spec), M, N, K, inputs.at("A").data(), K, inputs.at("B").data(), N, got.data(), N);
    const auto& want = expected.at("C");
    for (std::size_t e = 0; e < want.size(); ++e)
        if (std::memcmp(&got[e], &want[e], sizeof(float)) != 0) {
            std::ostringstream os;
            os << "emulated kernel " << spec.id() << " differs from the interpreter at C[" << e / N << "]["
               << e % N << "]: " << got[e] << " vs " << want[e];
            fail(ErrorCode::CodegenBug, os.str());
        }
}

std::string emit_harness(const KernelSpec& spec, const HarnessOptions& o)
{
    const std::int64_t as = spec.a_stride > 0 ? spec.a_stride : o.K;
    const std::int64_t bs = spec.b_stride > 0 ? spec.b_stride : o.N;
    const std::int64_t cs = spec.c_stride > 0 ? spec.c_stride : o.N;
    if (o.M < 1 || o.N < 1 || o.K < 1 || as < o.K || bs < o.N || cs < o.N || o.repetitions < 1)
        fail(ErrorCode::InvalidArgument, "harness sizes, strides or repetitions are invalid");

    std::ostringstream os;
    os << "#include <immintrin.h>\n#include <math.h>\n#include <stdio.h>\n#include <stdlib.h>\n"
       << "#include <string.h>\n#include <time.h>\n\n";
    os << print_kernel(build_vector_kernel(spec)) << "\n" << emit_scalar_kernel() << "\n";
    os << "static unsigned long long state = " << o.seed << "ULL;\n\n"
       << "static float next_value(void)\n{\n"
       << "  state = state * 6364136223846793005ULL + 1442695040888963407ULL;\n"
       << "  return (float)((long)((state >> 33) % 9) - 4);\n}\n\n"
       << "static float* matrix(long rows, long stride)\n{\n"
       << "  size_t bytes = ((size_t)(rows * stride) * sizeof(float) + 63) / 64 * 64;\n"
       << "  float* p = aligned_alloc(64, bytes);\n"
       << "  if (!p) {\n    fprintf(stderr, \"allocation failed\\n\");\n    exit(2);\n  }\n"
       << "  memset(p, 0, bytes);\n  return p;\n}\n\n"
       << "static double now(void)\n{\n  struct timespec t;\n  clock_gettime(CLOCK_MONOTONIC, &t);\n"
       << "  return t.tv_sec + 1e-9 * t.tv_nsec;\n}\n\n";
    os << "int main(int argc, char** argv)\n{\n"
       << "  const long M = " << o.M << ", N = " << o.N << ", K = " << o.K << ";\n"
       << "  const long AS = " << as << ", BS = " << bs << ", CS = " << cs << ";\n"
       << "  int reps = argc > 1 ? atoi(argv[1]) : " << o.repetitions << ";\n"
       << "  float* A = matrix(M, AS);\n  float* B = matrix(K, BS);\n"
       << "  float* C = matrix(M, CS);\n  float* R = matrix(M, CS);\n"
       << "  for (long r = 0; r < M; ++r)\n    for (long c = 0; c < K; ++c)\n      A[r * AS + c] = next_value();\n"
       << "  for (long r = 0; r < K; ++r)\n    for (long c = 0; c < N; ++c)\n      B[r * BS + c] = next_value();\n"
       << "  looptune_kernel(M, N, K, A, AS, B, BS, C, CS);\n"
       << "  looptune_reference(M, N, K, A, AS, B, BS, R, CS);\n"
       << "  double worst = 0.0;\n  long worst_at = -1;\n"
       << "  for (long r = 0; r < M; ++r)\n    for (long c = 0; c < N; ++c) {\n"
       << "      double ref = R[r * CS + c];\n"
       << "      double err = fabs(C[r * CS + c] - ref) / (fabs(ref) > 1.0 ? fabs(ref) : 1.0);\n"
       << "      if (err > worst) {\n        worst = err;\n        worst_at = r * N + c;\n      }\n    }\n"
       << "  if (worst > 1e-4) {\n    printf(\"CHECK: mismatch %ld %.6e\\n\", worst_at, worst);\n    return 4;\n  }\n"
       << "  printf(\"CHECK: ok %.6e\\n\", worst);\n"
       << "  double total = 0.0;\n"
       << "  for (int rep = 0; rep < reps; ++rep) {\n"
       << "    memset(C, 0, (size_t)(M * CS) * sizeof(float));\n"
       << "    double t0 = now();\n";
    if (o.time_reference)
        os << "    looptune_reference(M, N, K, A, AS, B, BS, C, CS);\n";
    else
        os << "    looptune_kernel(M, N, K, A, AS, B, BS, C, CS);\n";
    os << "    double dt = now() - t0;\n"
       << "    total += dt;\n"
       << "    printf(\"TIME: %.9e\\n\", dt);\n  }\n"
       << "  double sum = 0.0;\n  for (long e = 0; e < M * CS; ++e)\n    sum += C[e];\n"
       << "  printf(\"CHECKSUM: %.17g\\n\", sum);\n"
       << "  printf(\"GFLOPS: %.6f\\n\", 2.0 * M * N * K / (total / reps) / 1e9);\n"
       << "  free(A);\n  free(B);\n  free(C);\n  free(R);\n  return 0;\n}\n";
    return os.str();
}

} // namespace looptune
