// Independent reference computations used only by tests.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

/// Row-major C[M][N] += A[M][K] * B[K][N], k innermost, fused multiply-add.
inline void naive_gemm(int M, int N, int K, const std::vector<float>& A, const std::vector<float>& B,
                       std::vector<float>& C)
{
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j)
            for (int k = 0; k < K; ++k)
                C[i * N + j] = std::fma(A[i * K + k], B[k * N + j], C[i * N + j]);
}

inline std::vector<float> random_matrix(std::size_t n, std::uint64_t seed, bool integers = false)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> real(-1.0f, 1.0f);
    std::uniform_int_distribution<int> ints(-4, 4);
    std::vector<float> v(n);
    for (auto& x : v)
        x = integers ? static_cast<float>(ints(rng)) : real(rng);
    return v;
}

inline double max_relative_error(const std::vector<float>& a, const std::vector<float>& b)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double denom = std::max({1.0, std::fabs(double(a[i])), std::fabs(double(b[i]))});
        worst = std::max(worst, std::fabs(double(a[i]) - double(b[i])) / denom);
    }
    return worst;
}

} // namespace oracle
