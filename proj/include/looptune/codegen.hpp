#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "looptune/interpreter.hpp"

namespace looptune {

inline constexpr int kVectorLanes = 16;
inline constexpr int kVectorRegisters = 32;

/// Unroll factors of the i, j and k loops plus the row strides (in elements)
/// the kernel will be used with. A stride of 0 means "unknown", which selects
/// unaligned vector loads.
struct KernelSpec {
    int ui = 1;
    int uj = 16;
    int uk = 1;
    std::int64_t a_stride = 0;
    std::int64_t b_stride = 0;
    std::int64_t c_stride = 0;

    /// B and C rows start on 64-byte boundaries (A is only broadcast).
    bool aligned() const;
    std::string id() const;
    KernelSpec with_strides(std::int64_t a, std::int64_t b, std::int64_t c) const;

    friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
    friend auto operator<=>(const KernelSpec&, const KernelSpec&) = default;
};

/// Inverse of KernelSpec::id() ("2x32x2"); strides are left unknown.
KernelSpec parse_kernel_spec(const std::string& text);

/// ui*(uj/16) accumulators + uk*(uj/16) B vectors + ui*uk A broadcasts.
int required_registers(const KernelSpec& spec);

/// Returns the required count; throws UnsupportedSpec when uj is not a
/// positive multiple of 16 and RegisterPressure when the count exceeds `total`.
int check_register_budget(const KernelSpec& spec, int total = kVectorRegisters);

/// Half-open box of the (i, j, k) iteration space.
struct Region {
    std::string name;
    std::int64_t i0, i1, j0, j1, k0, k1;

    std::int64_t volume() const;
    bool contains(std::int64_t i, std::int64_t j, std::int64_t k) const;
};

/// Full vector region followed by the k, n and m residues (scalar).
std::vector<Region> residue_plan(std::int64_t M, std::int64_t N, std::int64_t K, const KernelSpec& spec);

/// symbol + offset, where symbol is a size, a full bound or a loop variable.
struct Bound {
    std::string symbol;
    std::int64_t offset = 0;
};

/// array[row * Stride + col].
struct Access {
    char array = 'C';
    Bound row;
    Bound col;
};

enum class StmtKind { Loop, VecLoad, VecBroadcast, VecFma, VecStore, ScalarMac, Comment };

struct Stmt {
    StmtKind kind = StmtKind::Comment;
    // Loop
    std::string var;
    Bound lower, upper;
    int step = 1;
    std::vector<Stmt> body;
    // Vector ops: dst = op(...); fma computes dst = a*b + dst.
    std::string dst, a, b;
    // Memory operands; ScalarMac uses all three.
    Access c, x, y;
    bool aligned = false;
    std::string text;
};

/// A generated kernel before printing: full-bound declarations, the vector
/// nest and its scalar residues.
struct KernelProgram {
    KernelSpec spec;
    bool vector = true;
    std::vector<std::string> registers;
    std::vector<Stmt> body;
};

KernelProgram build_vector_kernel(const KernelSpec& spec);
KernelProgram build_scalar_kernel();

/// C function text `void <name>(long M, long N, long K, const float* A, long
/// AStride, const float* B, long BStride, float* C, long CStride)`.
std::string print_kernel(const KernelProgram& program, const std::string& name = "looptune_kernel");

std::string emit_vector_kernel(const KernelSpec& spec);
std::string emit_scalar_kernel();

/// Distinct vector temporaries referenced by the program.
std::set<std::string> vector_temporaries(const KernelProgram& program);

struct OpCensus {
    std::int64_t c_loads = 0;
    std::int64_t b_loads = 0;
    std::int64_t broadcasts = 0;
    std::int64_t fmas = 0;
    std::int64_t stores = 0;
    std::int64_t scalar_macs = 0;

    std::int64_t vector_ops() const { return c_loads + b_loads + broadcasts + fmas + stores; }
    friend bool operator==(const OpCensus&, const OpCensus&) = default;
};

/// Static count: each statement times the trip counts of its enclosing loops.
OpCensus census(const KernelProgram& program, std::int64_t M, std::int64_t N, std::int64_t K);

/// Lane-by-lane execution with fmaf semantics. Aligned accesses whose offset
/// is not a multiple of 16 raise CodegenBug. Returns the executed op counts.
OpCensus emulate(const KernelProgram& program, std::int64_t M, std::int64_t N, std::int64_t K,
                 const float* A, std::int64_t a_stride, const float* B, std::int64_t b_stride, float* C,
                 std::int64_t c_stride);

/// Runs the emulated kernel and the interpreter on the same GEMM inputs and
/// requires bitwise equality; throws CodegenBug naming the first difference.
void verify_emulated(const KernelSpec& spec, std::int64_t M, std::int64_t N, std::int64_t K, const Buffers& inputs);

struct HarnessOptions {
    std::int64_t M = 0, N = 0, K = 0;
    int repetitions = 100;
    /// "kernel" times the generated kernel, "reference" the scalar one.
    bool time_reference = false;
    std::uint64_t seed = 1;
};

/// Standalone C program: generated kernel, scalar reference, and a main()
/// that checks the kernel against the reference ("CHECK: ok <err>" or
/// "CHECK: mismatch <index> <err>"), then prints one "TIME: <seconds>" line
/// per repetition and "GFLOPS: <mean>".
std::string emit_harness(const KernelSpec& spec, const HarnessOptions& options);

} // namespace looptune
