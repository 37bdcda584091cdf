#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "looptune/evaluator.hpp"
#include "looptune/nn.hpp"

namespace looptune {

enum class Action { IncI, DecI, IncJ, DecJ, IncK, DecK, Stop };

inline constexpr int kActionCount = 7;

const char* to_string(Action a) noexcept;

/// Candidate unroll factors per loop, ascending.
struct Ladders {
    std::vector<int> ui{1, 2, 4, 8};
    std::vector<int> uj{16, 32, 48, 64};
    std::vector<int> uk{1, 2, 4, 8};

    void validate() const;
    std::size_t states() const { return ui.size() * uj.size() * uk.size(); }
    Json to_json() const;
    static Ladders from_json(const Json& j);
};

/// Rung indices into the ladders.
struct RLState {
    std::array<int, 3> rung{0, 0, 0};
    friend auto operator<=>(const RLState&, const RLState&) = default;
};

KernelSpec spec_of(const RLState& s, const Ladders& ladders);

/// One rung up or down; clamped at the ladder ends. Stop leaves the state as is.
RLState apply(const RLState& s, Action a, const Ladders& ladders);

struct RLConfig {
    double epsilon0 = 1.0;
    double decay = 0.97;
    double epsilon_min = 0.05;
    double gamma = 0.9;
    int episodes = 200;
    int steps = 16;
    std::size_t replay_capacity = 2048;
    int batch_size = 32;
    std::vector<int> hidden{32, 32};
    double dropout = 0.25;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    /// TD errors beyond this magnitude contribute a constant gradient.
    double huber_delta = 1.0;
    std::uint64_t seed = 1;

    void validate() const;
    Json to_json() const;
    static RLConfig from_json(const Json& j);
};

/// max(epsilon_min, epsilon0 * decay^episode).
double epsilon_at(const RLConfig& config, int episode);

/// Two blocks of Dense, ReLU, BatchNorm, Dropout, then a 7-way linear head.
nn::Network policy_network(int inputs, const std::vector<int>& hidden, double dropout, nn::Rng& rng);

/// Concatenated one-hot rung encoding.
nn::Matrix encode_states(const std::vector<RLState>& states, const Ladders& ladders);

struct Transition {
    RLState state;
    Action action;
    double reward;
    RLState next;
    bool terminal;
};

/// Q-learning agent with the policy network as action-value function.
class QAgent {
public:
    QAgent(const Ladders& ladders, const RLConfig& config, nn::Rng& rng);

    std::array<double, kActionCount> q_values(const RLState& s) const;
    Action greedy(const RLState& s) const;
    /// Random action with probability epsilon, else greedy.
    Action act(const RLState& s, double epsilon, nn::Rng& rng) const;
    /// One SGD step on the batch towards r + gamma * max Q_target(next).
    double learn(const std::vector<Transition>& batch, nn::Rng& rng);
    /// Copies the online network into the target network.
    void sync_target();

    nn::Network& network() { return net_; }
    const nn::Network& network() const { return net_; }

private:
    Ladders ladders_;
    RLConfig config_;
    nn::Network net_;
    nn::Network target_;
    nn::Sgd sgd_;
};

struct LogEntry {
    int episode = 0;
    int step = 0;
    KernelSpec state;
    Action action = Action::Stop;
    double reward = 0.0;
    double performance = 0.0;
    KernelSpec next;
    double epsilon = 0.0;

    Json to_json() const;
};

struct TuneResult {
    KernelSpec best;
    double best_performance = 0.0;
    std::vector<LogEntry> log;
    std::vector<double> epsilons;
    std::map<KernelSpec, std::optional<double>> evaluated;
    Json policy;

    /// One JSON object per line.
    std::string log_jsonl() const;
};

/// Best feasible state seen over all episodes. Infeasible states (evaluator
/// rejects them for register pressure, spec shape or toolchain reasons) earn
/// reward -1 and are never entered. Throws NoFeasibleKernel when the start
/// state is infeasible.
TuneResult tune(const Problem& problem, Evaluator& evaluator, const Ladders& ladders, const RLConfig& config);

} // namespace looptune
