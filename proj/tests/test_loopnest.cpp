#include <doctest.h>

#include <algorithm>
#include <array>

#include "looptune/interpreter.hpp"
#include "looptune/serialize.hpp"
#include "oracles.hpp"

using namespace looptune;

TEST_CASE("gemm_nest builds the canonical nest")
{
    auto nest = gemm_nest(4, 4, 4);
    CHECK(nest.depth() == 3);
    CHECK(is_gemm_form(nest));
    CHECK(count_iterations(nest) == 64);

    auto gnmt = gemm_nest(128, 2048, 4096);
    CHECK(*gnmt.parameter("M") == 128);
    CHECK(*gnmt.parameter("N") == 2048);
    CHECK(*gnmt.parameter("K") == 4096);

    CHECK_THROWS_AS(gemm_nest(0, 4, 4), Error);
    try {
        gemm_nest(4, -1, 4);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidArgument);
    }
}

TEST_CASE("interpret on the single-iteration nest")
{
    auto nest = gemm_nest(1, 1, 1);
    auto buf = make_buffers(nest);
    buf["A"][0] = 3.0f;
    buf["B"][0] = 5.0f;
    buf["C"][0] = 2.0f;
    interpret(nest, buf);
    CHECK(buf["C"][0] == 17.0f);
}

TEST_CASE("interpret: identity times B is B")
{
    auto nest = gemm_nest(2, 2, 2);
    auto buf = make_buffers(nest);
    buf["A"] = {1, 0, 0, 1};
    buf["B"] = {1.5f, -2.0f, 7.0f, 0.25f};
    interpret(nest, buf);
    CHECK(buf["C"] == buf["B"]);
}

TEST_CASE("interpret: all ones")
{
    auto nest = gemm_nest(3, 3, 3);
    auto buf = make_buffers(nest);
    std::fill(buf["A"].begin(), buf["A"].end(), 1.0f);
    std::fill(buf["B"].begin(), buf["B"].end(), 1.0f);
    interpret(nest, buf);
    for (float c : buf["C"])
        CHECK(c == 3.0f);
}

TEST_CASE("interpret matches the naive oracle exactly")
{
    auto run = [](int M, int N, int K, std::uint64_t seed) {
        auto nest = gemm_nest(M, N, K);
        auto buf = make_buffers(nest);
        buf["A"] = oracle::random_matrix(M * K, seed);
        buf["B"] = oracle::random_matrix(K * N, seed + 1);
        buf["C"] = oracle::random_matrix(M * N, seed + 2);
        auto C = buf["C"];
        oracle::naive_gemm(M, N, K, buf["A"], buf["B"], C);
        interpret(nest, buf);
        return buf["C"] == C;
    };
    CHECK(run(5, 6, 7, 42));
    for (int M = 1; M <= 8; ++M)
        for (int N = 1; N <= 8; ++N)
            for (int K = 1; K <= 8; ++K)
                REQUIRE(run(M, N, K, M * 100 + N * 10 + K));
}

TEST_CASE("enumerate_iterations is lexicographic and complete")
{
    auto two = enumerate_iterations(gemm_nest(2, 1, 1));
    CHECK(two == std::vector<Iteration>{{0, 0, 0}, {1, 0, 0}});
    auto four = enumerate_iterations(gemm_nest(2, 2, 1));
    CHECK(four == std::vector<Iteration>{{0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 0}});
    auto all = enumerate_iterations(gemm_nest(3, 3, 3));
    REQUIRE(all.size() == 27);
    CHECK(all.front() == Iteration{0, 0, 0});
    CHECK(all.back() == Iteration{2, 2, 2});
    CHECK(std::is_sorted(all.begin(), all.end()));
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());

    CHECK(enumerate_iterations(gemm_nest(5, 3, 2)).size() == 30);
    CHECK_THROWS_AS(enumerate_iterations(gemm_nest(10, 10, 10), 999), Error);
    try {
        count_iterations(gemm_nest(10, 10, 10), 999);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EnumerationTooLarge);
    }
}

TEST_CASE("loop interchange preserves the result within reassociation tolerance")
{
    const int M = 6, N = 5, K = 7;
    auto nest = gemm_nest(M, N, K);
    auto base = make_buffers(nest);
    base["A"] = oracle::random_matrix(M * K, 1);
    base["B"] = oracle::random_matrix(K * N, 2);
    auto reference = base;
    interpret(nest, reference);

    std::array<std::size_t, 3> order{0, 1, 2};
    int count = 0;
    do {
        auto permuted = permute_loops(nest, order);
        CHECK(is_gemm_form(permuted));
        auto buf = base;
        interpret(permuted, buf);
        CHECK(oracle::max_relative_error(buf["C"], reference["C"]) <= 1e-5);
        ++count;
    } while (std::next_permutation(order.begin(), order.end()));
    CHECK(count == 6);
}

TEST_CASE("malformed nests are rejected")
{
    auto v = [](const char* n) { return AffineExpr::var(n); };
    std::vector<ArrayDecl> arrays{{"C", {v("M")}}, {"A", {v("M")}}};
    std::vector<ArrayRef> refs{{"C", AccessKind::ReadWrite, {v("i")}},
                               {"A", AccessKind::Read, {v("i")}}};
    // Bound referencing an inner iterator.
    CHECK_THROWS_AS(LoopNest({{"i", 0, {v("j")}, 1}, {"j", 0, {v("M")}, 1}}, arrays, refs, {{"M", 4}}),
                    Error);
    // Unbound parameter.
    CHECK_THROWS_AS(LoopNest({{"i", 0, {v("Q")}, 1}}, arrays, refs, {{"M", 4}}), Error);
    // Subscript count mismatch.
    std::vector<ArrayRef> bad{{"C", AccessKind::ReadWrite, {v("i"), v("i")}},
                              {"A", AccessKind::Read, {v("i")}}};
    CHECK_THROWS_AS(LoopNest({{"i", 0, {v("M")}, 1}}, arrays, bad, {{"M", 4}}), Error);
    // Zero step.
    CHECK_THROWS_AS(LoopNest({{"i", 0, {v("M")}, 0}}, arrays, refs, {{"M", 4}}), Error);
    // Valid 1-D accumulation.
    LoopNest ok({{"i", 0, {v("M")}, 1}}, arrays, refs, {{"M", 4}});
    auto buf = make_buffers(ok);
    buf["A"] = {1, 2, 3, 4};
    interpret(ok, buf);
    CHECK(buf["C"] == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("out-of-bounds subscripts surface as analysis bugs")
{
    auto v = [](const char* n) { return AffineExpr::var(n); };
    LoopNest nest({{"i", 0, {v("M") + AffineExpr(1)}, 1}}, {{"C", {v("M")}}, {"A", {v("M")}}},
                  {{"C", AccessKind::ReadWrite, {v("i")}}, {"A", AccessKind::Read, {v("i")}}},
                  {{"M", 3}});
    auto buf = make_buffers(nest);
    try {
        interpret(nest, buf);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AnalysisBug);
    }
}

TEST_CASE("affine expressions parse and print")
{
    auto e = AffineExpr::parse("2*K + 3");
    CHECK(e.coeff("K") == 2);
    CHECK(e.constant() == 3);
    CHECK(e.to_string() == "2*K + 3");
    CHECK(AffineExpr::parse("it1 + 32").unit_variable() == "it1");
    CHECK(AffineExpr::parse("-j + 4 - 4").to_string() == "-j");
    CHECK(AffineExpr::parse("0").to_string() == "0");
    CHECK_THROWS_AS(AffineExpr::parse("2 * * K"), Error);
    CHECK_THROWS_AS(AffineExpr::parse("i j"), Error);
}

TEST_CASE("loop nest JSON round trip")
{
    auto nest = permute_loops(gemm_nest(3, 5, 7), std::array<std::size_t, 3>{2, 0, 1});
    auto j = to_json(nest);
    auto back = loopnest_from_json(Json::parse(j.dump()));
    CHECK(to_json(back) == j);
    CHECK(enumerate_iterations(back) == enumerate_iterations(nest));
    CHECK_THROWS_AS(loopnest_from_json(Json::parse(R"({"loops": 3})")), Error);
}
