#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "looptune/nn.hpp"
#include "looptune/serialize.hpp"

namespace looptune {

/// Min-max scaling fitted on training features. Constant columns map to 0;
/// values outside the fitted range are not clipped.
struct FeatureScaler {
    std::vector<double> min;
    std::vector<double> max;

    static FeatureScaler fit(std::span<const std::vector<double>> rows);
    std::vector<double> transform(std::span<const double> x) const;
    std::size_t dim() const { return min.size(); }

    Json to_json() const;
    static FeatureScaler from_json(const Json& j);
};

enum class Outcome { Win1, Win2, Draw };

const char* to_string(Outcome o) noexcept;

/// Win1 iff p1 > theta, Win2 iff p2 > theta, Draw otherwise.
Outcome decide(double p1, double p2, double theta);

struct RankerConfig {
    std::vector<int> hidden{64, 32};
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int epochs = 200;
    int batch_size = 32;
    double theta = 0.7;
    double train_fraction = 0.7;
    /// Training pairs are subsampled to at most this many (before augmentation).
    std::size_t max_pairs = 20000;
    std::uint64_t seed = 1;

    void validate() const;
    Json to_json() const;
    static RankerConfig from_json(const Json& j);
};

/// faster = 1 when `a` is faster, 2 when `b` is.
struct TrainingPair {
    std::vector<double> a;
    std::vector<double> b;
    int faster = 1;
};

/// Feed-forward comparator over concatenated [a, b] features with a two-way
/// softmax output. Features must already be scaled.
class ComparatorModel {
public:
    ComparatorModel() = default;
    ComparatorModel(std::size_t feature_dim, const RankerConfig& config, nn::Rng& rng);
    ComparatorModel(nn::Network net, std::size_t feature_dim, double theta);

    std::array<double, 2> probabilities(std::span<const double> a, std::span<const double> b) const;
    Outcome compare(std::span<const double> a, std::span<const double> b) const;

    nn::Matrix pack(std::span<const TrainingPair> pairs, bool swapped) const;

    std::size_t feature_dim() const { return feature_dim_; }
    double theta() const { return theta_; }
    nn::Network& network() { return net_; }
    const nn::Network& network() const { return net_; }

private:
    nn::Network net_;
    std::size_t feature_dim_ = 0;
    double theta_ = 0.7;
};

struct TrainingReport {
    std::vector<double> loss_history;
    std::size_t train_pairs = 0;
};

/// Each pair is also presented swapped with the flipped label.
TrainingReport train(ComparatorModel& model, std::span<const TrainingPair> pairs, const RankerConfig& config,
                     nn::Rng& rng);

/// Mean softmax cross-entropy of the model on the pairs (augmented both ways).
double pair_loss(const ComparatorModel& model, std::span<const TrainingPair> pairs);

/// Fraction of pairs whose larger output names the faster variant.
double pairwise_accuracy(const ComparatorModel& model, std::span<const TrainingPair> pairs);

/// Every pair (a, b) with a < b inside the same group and distinct performance.
std::vector<TrainingPair> make_pairs(std::span<const std::vector<double>> features,
                                     std::span<const double> performance,
                                     std::span<const std::size_t> members);

/// Scaler + comparator, persisted together.
struct Ranker {
    FeatureScaler scaler;
    ComparatorModel model;

    Outcome compare(std::span<const double> a, std::span<const double> b) const;

    Json to_json() const;
    static Ranker from_json(const Json& j);
};

struct GroupedSample {
    std::vector<double> features;
    double performance = 0.0;
    std::size_t group = 0;
};

struct RankerTrainingResult {
    Ranker ranker;
    TrainingReport report;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> eval_indices;
    double train_accuracy = 0.0;
    double eval_accuracy = 0.0;
    std::size_t eval_pairs = 0;
};

/// Splits samples 70/30 per group, fits the scaler on the training part,
/// forms within-group pairs and trains the comparator.
RankerTrainingResult train_ranker(std::span<const GroupedSample> samples, const RankerConfig& config);

struct RankedEntry {
    std::size_t index = 0;
    std::string id;
    int wins = 0;
};

struct TournamentResult {
    std::vector<RankedEntry> ranking;
    std::size_t comparisons = 0;
};

using PairComparator = std::function<Outcome(std::size_t, std::size_t)>;

/// Round robin over unordered pairs (i < j, compared as (i, j)); sorted by
/// descending wins, ties by id.
TournamentResult tournament_rank(std::span<const std::string> ids, const PairComparator& compare, int workers);
TournamentResult tournament_rank_serial(std::span<const std::string> ids, const PairComparator& compare);

/// Scales the profiles with the ranker's scaler and plays the tournament.
TournamentResult tournament_rank(const Ranker& ranker, std::span<const std::string> ids,
                                 std::span<const std::vector<double>> features, int workers);

/// The first ceil(fraction * n) entries.
std::vector<RankedEntry> select_top(std::span<const RankedEntry> ranked, double fraction);

} // namespace looptune
