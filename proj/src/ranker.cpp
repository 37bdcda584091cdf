#include "looptune/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "looptune/error.hpp"
#include "looptune/parallel.hpp"

namespace looptune {

FeatureScaler FeatureScaler::fit(std::span<const std::vector<double>> rows)
{
    if (rows.size() < 2)
        fail(ErrorCode::InvalidArgument, "scaler needs at least two profiles");
    FeatureScaler s;
    s.min = rows.front();
    s.max = rows.front();
    for (const auto& r : rows) {
        if (r.size() != s.min.size())
            fail(ErrorCode::InvalidArgument, "feature rows have different lengths");
        for (std::size_t c = 0; c < r.size(); ++c) {
            s.min[c] = std::min(s.min[c], r[c]);
            s.max[c] = std::max(s.max[c], r[c]);
        }
    }
    return s;
}

std::vector<double> FeatureScaler::transform(std::span<const double> x) const
{
    if (x.size() != min.size())
        fail(ErrorCode::InvalidArgument, "feature dimension " + std::to_string(x.size()) +
                                             " does not match scaler dimension " + std::to_string(min.size()));
    std::vector<double> y(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) {
        const double range = max[c] - min[c];
        y[c] = range > 0.0 ? (x[c] - min[c]) / range : 0.0;
    }
    return y;
}

Json FeatureScaler::to_json() const { return Json{{"min", min}, {"max", max}}; }

FeatureScaler FeatureScaler::from_json(const Json& j)
{
    FeatureScaler s;
    s.min = j.at("min").get<std::vector<double>>();
    s.max = j.at("max").get<std::vector<double>>();
    if (s.min.size() != s.max.size())
        fail(ErrorCode::InvalidArgument, "scaler min/max lengths differ");
    for (std::size_t c = 0; c < s.min.size(); ++c)
        if (s.max[c] < s.min[c])
            fail(ErrorCode::InvalidArgument, "scaler max below min");
    return s;
}

const char* to_string(Outcome o) noexcept
{
    switch (o) {
    case Outcome::Win1: return "win1";
    case Outcome::Win2: return "win2";
    case Outcome::Draw: return "draw";
    }
    return "?";
}

Outcome decide(double p1, double p2, double theta)
{
    if (p1 > theta)
        return Outcome::Win1;
    if (p2 > theta)
        return Outcome::Win2;
    return Outcome::Draw;
}

void RankerConfig::validate() const
{
    auto bad = [](const std::string& m) { fail(ErrorCode::ConfigError, "ranker: " + m); };
    if (!(theta > 0.5 && theta <= 1.0))
        bad("theta must lie in (0.5, 1]");
    if (!(learning_rate > 0.0))
        bad("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
        bad("momentum must lie in [0, 1)");
    if (epochs < 1 || batch_size < 1)
        bad("epochs and batch_size must be positive");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
        bad("train_fraction must lie in (0, 1]");
    if (max_pairs < 1)
        bad("max_pairs must be positive");
    for (int h : hidden)
        if (h < 1)
            bad("hidden widths must be positive");
}

Json RankerConfig::to_json() const
{
    return Json{{"hidden", hidden},
                {"learning_rate", learning_rate},
                {"momentum", momentum},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"theta", theta},
                {"train_fraction", train_fraction},
                {"max_pairs", max_pairs},
                {"seed", seed}};
}

RankerConfig RankerConfig::from_json(const Json& j)
{
    RankerConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.theta = j.value("theta", c.theta);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.max_pairs = j.value("max_pairs", c.max_pairs);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

ComparatorModel::ComparatorModel(std::size_t feature_dim, const RankerConfig& config, nn::Rng& rng)
    : net_(nn::mlp(static_cast<int>(2 * feature_dim), config.hidden, 2, rng)),
      feature_dim_(feature_dim),
      theta_(config.theta)
{
    if (feature_dim == 0)
        fail(ErrorCode::InvalidArgument, "comparator needs a non-empty feature vector");
}

ComparatorModel::ComparatorModel(nn::Network net, std::size_t feature_dim, double theta)
    : net_(std::move(net)), feature_dim_(feature_dim), theta_(theta)
{
    if (net_.input_dim() != static_cast<int>(2 * feature_dim) || net_.output_dim() != 2)
        fail(ErrorCode::InvalidArgument, "comparator network shape does not match the feature dimension");
    if (!(theta > 0.5 && theta <= 1.0))
        fail(ErrorCode::InvalidArgument, "theta must lie in (0.5, 1]");
}

std::array<double, 2> ComparatorModel::probabilities(std::span<const double> a, std::span<const double> b) const
{
    if (a.size() != feature_dim_ || b.size() != feature_dim_)
        fail(ErrorCode::InvalidArgument, "comparator expects " + std::to_string(feature_dim_) +
                                             " features per variant");
    nn::Matrix x(1, 2 * feature_dim_);
    for (std::size_t c = 0; c < feature_dim_; ++c) {
        x(0, c) = a[c];
        x(0, feature_dim_ + c) = b[c];
    }
    nn::Matrix p = nn::softmax_rows(net_.infer(x));
    return {p(0, 0), p(0, 1)};
}

Outcome ComparatorModel::compare(std::span<const double> a, std::span<const double> b) const
{
    auto p = probabilities(a, b);
    return decide(p[0], p[1], theta_);
}

nn::Matrix ComparatorModel::pack(std::span<const TrainingPair> pairs, bool swapped) const
{
    const auto F = feature_dim_;
    nn::Matrix x(pairs.size(), 2 * F);
    for (std::size_t r = 0; r < pairs.size(); ++r) {
        const auto& first = swapped ? pairs[r].b : pairs[r].a;
        const auto& second = swapped ? pairs[r].a : pairs[r].b;
        if (first.size() != F || second.size() != F)
            fail(ErrorCode::InvalidArgument, "training pair has the wrong feature dimension");
        for (std::size_t c = 0; c < F; ++c) {
            x(r, c) = first[c];
            x(r, F + c) = second[c];
        }
    }
    return x;
}

namespace {

/// Both orientations stacked: rows [0, n) as given, rows [n, 2n) swapped.
void augmented(const ComparatorModel& model, std::span<const TrainingPair> pairs, nn::Matrix& x,
               std::vector<int>& labels)
{
    const auto n = static_cast<Eigen::Index>(pairs.size());
    x.resize(2 * n, 2 * model.feature_dim());
    x.topRows(n) = model.pack(pairs, false);
    x.bottomRows(n) = model.pack(pairs, true);
    labels.resize(2 * pairs.size());
    for (std::size_t r = 0; r < pairs.size(); ++r) {
        if (pairs[r].faster != 1 && pairs[r].faster != 2)
            fail(ErrorCode::InvalidArgument, "pair label must be 1 or 2");
        labels[r] = pairs[r].faster - 1;
        labels[pairs.size() + r] = 2 - pairs[r].faster;
    }
}

} // namespace

TrainingReport train(ComparatorModel& model, std::span<const TrainingPair> pairs, const RankerConfig& config,
                     nn::Rng& rng)
{
    config.validate();
    if (pairs.empty())
        fail(ErrorCode::InvalidArgument, "ranker training needs at least one pair");

    std::vector<TrainingPair> used(pairs.begin(), pairs.end());
    if (used.size() > config.max_pairs) {
        nn::shuffle(used, rng);
        used.resize(config.max_pairs);
    }

    nn::Matrix x;
    std::vector<int> labels;
    augmented(model, used, x, labels);

    std::vector<Eigen::Index> order(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        order[r] = r;

    nn::Sgd sgd(config.learning_rate, config.momentum);
    auto& net = model.network();
    TrainingReport report;
    report.train_pairs = used.size();
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        nn::shuffle(order, rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            nn::Matrix xb(end - start, x.cols());
            std::vector<int> yb(end - start);
            for (std::size_t r = start; r < end; ++r) {
                xb.row(r - start) = x.row(order[r]);
                yb[r - start] = labels[order[r]];
            }
            net.zero_grad();
            nn::Matrix grad;
            const double loss = nn::softmax_cross_entropy(net.forward(xb, nn::Mode::Train, rng), yb, &grad);
            if (!std::isfinite(loss))
                fail(ErrorCode::TrainingDiverged, "ranker loss became non-finite in epoch " + std::to_string(epoch));
            net.backward(grad);
            sgd.step(net);
            total += loss * static_cast<double>(end - start);
        }
        report.loss_history.push_back(total / static_cast<double>(order.size()));
    }
    return report;
}

double pair_loss(const ComparatorModel& model, std::span<const TrainingPair> pairs)
{
    nn::Matrix x;
    std::vector<int> labels;
    augmented(model, pairs, x, labels);
    return nn::softmax_cross_entropy(model.network().infer(x), labels, nullptr);
}

double pairwise_accuracy(const ComparatorModel& model, std::span<const TrainingPair> pairs)
{
    if (pairs.empty())
        return 0.0;
    nn::Matrix logits = model.network().infer(model.pack(pairs, false));
    std::size_t correct = 0;
    for (std::size_t r = 0; r < pairs.size(); ++r) {
        const int predicted = logits(r, 0) > logits(r, 1) ? 1 : 2;
        correct += predicted == pairs[r].faster;
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

std::vector<TrainingPair> make_pairs(std::span<const std::vector<double>> features,
                                     std::span<const double> performance, std::span<const std::size_t> members)
{
    std::vector<TrainingPair> out;
    for (std::size_t x = 0; x < members.size(); ++x)
        for (std::size_t y = x + 1; y < members.size(); ++y) {
            const auto a = members[x], b = members[y];
            if (performance[a] == performance[b])
                continue;
            out.push_back({features[a], features[b], performance[a] > performance[b] ? 1 : 2});
        }
    return out;
}

Outcome Ranker::compare(std::span<const double> a, std::span<const double> b) const
{
    return model.compare(scaler.transform(a), scaler.transform(b));
}

Json Ranker::to_json() const
{
    return Json{{"format", "looptune-ranker"},
                {"version", 1},
                {"feature_dim", model.feature_dim()},
                {"theta", model.theta()},
                {"scaler", scaler.to_json()},
                {"network", model.network().to_json()}};
}

Ranker Ranker::from_json(const Json& j)
{
    if (j.value("format", std::string()) != "looptune-ranker" || j.value("version", 0) != 1)
        fail(ErrorCode::InvalidArgument, "not a version-1 ranker model");
    Ranker r;
    r.scaler = FeatureScaler::from_json(j.at("scaler"));
    const auto dim = j.at("feature_dim").get<std::size_t>();
    if (r.scaler.dim() != dim)
        fail(ErrorCode::InvalidArgument, "scaler dimension does not match the model");
    r.model = ComparatorModel(nn::Network::from_json(j.at("network")), dim, j.at("theta").get<double>());
    return r;
}

RankerTrainingResult train_ranker(std::span<const GroupedSample> samples, const RankerConfig& config)
{
    config.validate();
    if (samples.size() < 2)
        fail(ErrorCode::InvalidArgument, "ranker training needs at least two variants");

    nn::Rng rng(config.seed);
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t s = 0; s < samples.size(); ++s)
        groups[samples[s].group].push_back(s);

    RankerTrainingResult result;
    std::vector<std::vector<std::size_t>> train_groups, eval_groups;
    for (auto& [g, members] : groups) {
        nn::shuffle(members, rng);
        auto n_train = static_cast<std::size_t>(std::ceil(config.train_fraction * members.size() - 1e-9));
        n_train = std::clamp<std::size_t>(n_train, 1, members.size());
        std::vector<std::size_t> tr(members.begin(), members.begin() + n_train);
        std::vector<std::size_t> ev(members.begin() + n_train, members.end());
        std::sort(tr.begin(), tr.end());
        std::sort(ev.begin(), ev.end());
        result.train_indices.insert(result.train_indices.end(), tr.begin(), tr.end());
        result.eval_indices.insert(result.eval_indices.end(), ev.begin(), ev.end());
        train_groups.push_back(std::move(tr));
        eval_groups.push_back(std::move(ev));
    }
    std::sort(result.train_indices.begin(), result.train_indices.end());
    std::sort(result.eval_indices.begin(), result.eval_indices.end());

    std::vector<std::vector<double>> raw;
    for (auto s : result.train_indices)
        raw.push_back(samples[s].features);
    if (raw.size() < 2)
        fail(ErrorCode::InvalidArgument, "ranker training split holds fewer than two variants");
    result.ranker.scaler = FeatureScaler::fit(raw);

    std::vector<std::vector<double>> scaled(samples.size());
    std::vector<double> perf(samples.size());
    for (std::size_t s = 0; s < samples.size(); ++s) {
        scaled[s] = result.ranker.scaler.transform(samples[s].features);
        perf[s] = samples[s].performance;
    }
    std::vector<TrainingPair> train_pairs, eval_pairs;
    for (std::size_t g = 0; g < train_groups.size(); ++g) {
        auto tp = make_pairs(scaled, perf, train_groups[g]);
        auto ep = make_pairs(scaled, perf, eval_groups[g]);
        train_pairs.insert(train_pairs.end(), tp.begin(), tp.end());
        eval_pairs.insert(eval_pairs.end(), ep.begin(), ep.end());
    }
    if (train_pairs.empty())
        fail(ErrorCode::InvalidArgument, "no training pairs with distinct performance");

    result.ranker.model = ComparatorModel(result.ranker.scaler.dim(), config, rng);
    result.report = train(result.ranker.model, train_pairs, config, rng);
    result.train_accuracy = pairwise_accuracy(result.ranker.model, train_pairs);
    result.eval_accuracy = pairwise_accuracy(result.ranker.model, eval_pairs);
    result.eval_pairs = eval_pairs.size();
    return result;
}

namespace {

TournamentResult tally(std::span<const std::string> ids, const std::vector<Outcome>& outcomes)
{
    const std::size_t n = ids.size();
    TournamentResult r;
    r.comparisons = outcomes.size();
    std::vector<int> wins(n, 0);
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j, ++p) {
            if (outcomes[p] == Outcome::Win1)
                ++wins[i];
            else if (outcomes[p] == Outcome::Win2)
                ++wins[j];
        }
    for (std::size_t i = 0; i < n; ++i)
        r.ranking.push_back({i, ids[i], wins[i]});
    std::stable_sort(r.ranking.begin(), r.ranking.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.wins != b.wins)
            return a.wins > b.wins;
        return a.id < b.id;
    });
    return r;
}

} // namespace

TournamentResult tournament_rank(std::span<const std::string> ids, const PairComparator& compare, int workers)
{
    if (ids.empty())
        fail(ErrorCode::InvalidArgument, "tournament needs at least one variant");
    const std::size_t n = ids.size();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            pairs.emplace_back(i, j);
    std::vector<Outcome> outcomes(pairs.size());
    parallel_for(0, static_cast<std::int64_t>(pairs.size()), workers,
                 [&](std::int64_t p) { outcomes[p] = compare(pairs[p].first, pairs[p].second); });
    return tally(ids, outcomes);
}

TournamentResult tournament_rank_serial(std::span<const std::string> ids, const PairComparator& compare)
{
    if (ids.empty())
        fail(ErrorCode::InvalidArgument, "tournament needs at least one variant");
    std::vector<Outcome> outcomes;
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = i + 1; j < ids.size(); ++j)
            outcomes.push_back(compare(i, j));
    return tally(ids, outcomes);
}

TournamentResult tournament_rank(const Ranker& ranker, std::span<const std::string> ids,
                                 std::span<const std::vector<double>> features, int workers)
{
    if (ids.size() != features.size())
        fail(ErrorCode::InvalidArgument, "tournament ids and features differ in length");
    std::vector<std::vector<double>> scaled;
    for (const auto& f : features)
        scaled.push_back(ranker.scaler.transform(f));
    return tournament_rank(
        ids, [&](std::size_t i, std::size_t j) { return ranker.model.compare(scaled[i], scaled[j]); }, workers);
}

std::vector<RankedEntry> select_top(std::span<const RankedEntry> ranked, double fraction)
{
    if (!(fraction > 0.0 && fraction <= 1.0))
        fail(ErrorCode::InvalidArgument, "top fraction must lie in (0, 1]");
    auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ranked.size()) - 1e-9));
    k = std::min(k, ranked.size());
    return {ranked.begin(), ranked.begin() + k};
}

} // namespace looptune
