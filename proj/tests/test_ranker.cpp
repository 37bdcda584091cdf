#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "looptune/ranker.hpp"

using namespace looptune;

namespace {

// Single dense layer 2F -> 2 whose logits are fixed constants, so softmax
// outputs can be set exactly.
ComparatorModel constant_model(double p1, double theta)
{
    nn::Matrix w = nn::Matrix::Zero(2, 2);
    nn::Matrix b(1, 2);
    b << std::log(p1), std::log(1.0 - p1);
    nn::Network net;
    net.add(std::make_unique<nn::Dense>(w, b));
    return ComparatorModel(std::move(net), 1, theta);
}

// 200 random 8-slot profiles; performance is minus the two L1 slots.
std::vector<GroupedSample> synthetic(std::uint64_t seed)
{
    nn::Rng rng(seed);
    std::vector<GroupedSample> out;
    for (int v = 0; v < 200; ++v) {
        GroupedSample s;
        for (int f = 0; f < 8; ++f)
            s.features.push_back(static_cast<double>(nn::uniform_index(rng, 100000)));
        s.performance = -(s.features[0] + s.features[4]);
        out.push_back(s);
    }
    return out;
}

} // namespace

TEST_CASE("min-max scaler")
{
    std::vector<std::vector<double>> rows{{10, 5}, {20, 5}, {30, 5}};
    auto s = FeatureScaler::fit(rows);
    CHECK(s.transform(rows[0]) == std::vector<double>{0.0, 0.0});
    CHECK(s.transform(rows[1]) == std::vector<double>{0.5, 0.0});
    CHECK(s.transform(rows[2]) == std::vector<double>{1.0, 0.0});
    CHECK(s.transform(std::vector<double>{40, 5})[0] == 1.5);
    CHECK_THROWS_AS(FeatureScaler::fit(std::vector<std::vector<double>>{{1.0}}), Error);
    CHECK_THROWS_AS(s.transform(std::vector<double>{1.0}), Error);
    auto back = FeatureScaler::from_json(s.to_json());
    CHECK(back.min == s.min);
    CHECK(back.max == s.max);
}

TEST_CASE("threshold decisions")
{
    CHECK(decide(0.9, 0.1, 0.7) == Outcome::Win1);
    CHECK(decide(0.6, 0.4, 0.7) == Outcome::Draw);
    CHECK(decide(0.25, 0.75, 0.7) == Outcome::Win2);
    CHECK(decide(0.7, 0.3, 0.7) == Outcome::Draw);

    std::vector<double> f{0.0};
    CHECK(constant_model(0.9, 0.7).compare(f, f) == Outcome::Win1);
    CHECK(constant_model(0.6, 0.7).compare(f, f) == Outcome::Draw);
    CHECK(constant_model(0.25, 0.7).compare(f, f) == Outcome::Win2);
    auto p = constant_model(0.6, 0.7).probabilities(f, f);
    CHECK(p[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(constant_model(0.6, 0.7).compare(std::vector<double>{0, 0}, f), Error);
    CHECK_THROWS_AS(constant_model(0.6, 0.5), Error);
}

TEST_CASE("tournament over a perfect comparator")
{
    std::vector<std::string> ids{"b", "d", "a", "c"};
    std::vector<int> strength{2, 0, 3, 1};
    std::atomic<int> calls{0};
    PairComparator perfect = [&](std::size_t i, std::size_t j) {
        ++calls;
        return strength[i] > strength[j] ? Outcome::Win1 : Outcome::Win2;
    };
    auto r = tournament_rank(ids, perfect, 4);
    CHECK(calls == 6);
    std::vector<std::string> order;
    std::vector<int> wins;
    for (const auto& e : r.ranking) {
        order.push_back(e.id);
        wins.push_back(e.wins);
    }
    CHECK(order == std::vector<std::string>{"a", "b", "c", "d"});
    CHECK(wins == std::vector<int>{3, 2, 1, 0});
}

TEST_CASE("tournament: draws, comparison count, permutation, parallel equals serial")
{
    std::vector<std::string> ids{"v3", "v1", "v2"};
    auto draws = tournament_rank(ids, [](std::size_t, std::size_t) { return Outcome::Draw; }, 2);
    CHECK(draws.ranking[0].id == "v1");
    CHECK(draws.ranking[1].id == "v2");
    CHECK(draws.ranking[2].id == "v3");
    for (const auto& e : draws.ranking)
        CHECK(e.wins == 0);

    std::vector<std::string> ten;
    for (int i = 0; i < 10; ++i)
        ten.push_back("x" + std::to_string(i));
    auto cmp = [](std::size_t i, std::size_t j) {
        return (i * 7 + j * 3) % 5 == 0 ? Outcome::Draw : ((i ^ j) & 1 ? Outcome::Win1 : Outcome::Win2);
    };
    auto par = tournament_rank(ten, cmp, 4);
    auto ser = tournament_rank_serial(ten, cmp);
    CHECK(par.comparisons == 45);
    REQUIRE(par.ranking.size() == ser.ranking.size());
    std::vector<std::size_t> seen;
    for (std::size_t k = 0; k < par.ranking.size(); ++k) {
        CHECK(par.ranking[k].id == ser.ranking[k].id);
        CHECK(par.ranking[k].wins == ser.ranking[k].wins);
        seen.push_back(par.ranking[k].index);
    }
    std::sort(seen.begin(), seen.end());
    std::vector<std::size_t> all(10);
    std::iota(all.begin(), all.end(), 0);
    CHECK(seen == all);
    CHECK_THROWS_AS(tournament_rank_serial({}, cmp), Error);
}

TEST_CASE("select_top")
{
    std::vector<RankedEntry> r;
    for (int i = 0; i < 40; ++i)
        r.push_back({static_cast<std::size_t>(i), std::to_string(i), 40 - i});
    CHECK(select_top(r, 0.10).size() == 4);
    CHECK(select_top(r, 1.0).size() == 40);
    CHECK(select_top(std::span(r).first(1), 0.05).size() == 1);
    CHECK(select_top(r, 0.10).front().wins == 40);
    CHECK_THROWS_AS(select_top(r, 0.0), Error);
}

TEST_CASE("training memorizes a single repeated pair")
{
    RankerConfig cfg;
    cfg.hidden = {8, 8};
    cfg.epochs = 300;
    cfg.learning_rate = 0.05;
    nn::Rng rng(7);
    ComparatorModel m(3, cfg, rng);
    std::vector<TrainingPair> pairs(4, TrainingPair{{0.1, 0.9, 0.3}, {0.8, 0.2, 0.5}, 2});
    auto rep = train(m, pairs, cfg, rng);
    CHECK(rep.loss_history.back() < rep.loss_history.front());
    CHECK(pair_loss(m, pairs) < 0.01);
    CHECK(m.compare(pairs[0].a, pairs[0].b) == Outcome::Win2);
    CHECK(m.compare(pairs[0].b, pairs[0].a) == Outcome::Win1);
}

TEST_CASE("synthetic monotone dataset is learned")
{
    auto samples = synthetic(2024);
    RankerConfig cfg;
    cfg.seed = 17;
    cfg.epochs = 50;
    auto result = train_ranker(samples, cfg);
    CHECK(result.train_indices.size() == 140);
    CHECK(result.eval_indices.size() == 60);
    CHECK(result.eval_pairs == 60 * 59 / 2);
    CHECK(result.report.loss_history.back() < result.report.loss_history.front());
    CHECK(result.eval_accuracy >= 0.90);

    // Anti-symmetry on held-out pairs.
    std::size_t consistent = 0, decided = 0;
    const auto& rk = result.ranker;
    for (std::size_t x = 0; x < result.eval_indices.size(); ++x)
        for (std::size_t y = x + 1; y < result.eval_indices.size(); ++y) {
            const auto& a = samples[result.eval_indices[x]].features;
            const auto& b = samples[result.eval_indices[y]].features;
            auto ab = rk.compare(a, b), ba = rk.compare(b, a);
            ++decided;
            consistent += (ab == Outcome::Win1 && ba == Outcome::Win2) ||
                          (ab == Outcome::Win2 && ba == Outcome::Win1) ||
                          (ab == Outcome::Draw && ba == Outcome::Draw);
        }
    CHECK(static_cast<double>(consistent) / decided >= 0.90);

    // Persisted model reproduces decisions exactly.
    auto back = Ranker::from_json(Json::parse(rk.to_json().dump()));
    for (std::size_t x = 0; x + 1 < 30; ++x) {
        const auto& a = samples[x].features;
        const auto& b = samples[x + 1].features;
        CHECK(back.compare(a, b) == rk.compare(a, b));
    }

    // Same seed, same model.
    auto again = train_ranker(samples, cfg);
    CHECK(again.report.loss_history == result.report.loss_history);
}

TEST_CASE("ranker input validation")
{
    RankerConfig cfg;
    std::vector<GroupedSample> one{{{1.0, 2.0}, 1.0, 0}};
    CHECK_THROWS_AS(train_ranker(one, cfg), Error);
    cfg.theta = 0.5;
    CHECK_THROWS_AS(cfg.validate(), Error);
    auto j = RankerConfig{}.to_json();
    CHECK(RankerConfig::from_json(j).to_json() == j);
}

TEST_CASE("pairs form only inside a group")
{
    std::vector<std::vector<double>> f{{1}, {2}, {3}, {4}};
    std::vector<double> perf{1, 2, 2, 0};
    std::vector<std::size_t> members{0, 1, 2};
    auto p = make_pairs(f, perf, members);
    CHECK(p.size() == 2); // (1,2) tie is skipped
    CHECK(p[0].faster == 2);
}
