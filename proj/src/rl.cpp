#include "looptune/rl.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "looptune/error.hpp"

namespace looptune {

const char* to_string(Action a) noexcept
{
    switch (a) {
    case Action::IncI: return "inc_i";
    case Action::DecI: return "dec_i";
    case Action::IncJ: return "inc_j";
    case Action::DecJ: return "dec_j";
    case Action::IncK: return "inc_k";
    case Action::DecK: return "dec_k";
    case Action::Stop: return "stop";
    }
    return "?";
}

void Ladders::validate() const
{
    auto check = [](const std::vector<int>& l, const char* name) {
        if (l.empty())
            fail(ErrorCode::ConfigError, std::string("ladder ") + name + " is empty");
        for (std::size_t r = 0; r < l.size(); ++r) {
            if (l[r] < 1 || (r > 0 && l[r] <= l[r - 1]))
                fail(ErrorCode::ConfigError, std::string("ladder ") + name + " must be positive and ascending");
        }
    };
    check(ui, "ui");
    check(uj, "uj");
    check(uk, "uk");
    for (int v : uj)
        if (v % kVectorLanes != 0)
            fail(ErrorCode::ConfigError, "ladder uj must hold multiples of 16");
}

Json Ladders::to_json() const { return Json{{"ui", ui}, {"uj", uj}, {"uk", uk}}; }

Ladders Ladders::from_json(const Json& j)
{
    Ladders l;
    l.ui = j.value("ui", l.ui);
    l.uj = j.value("uj", l.uj);
    l.uk = j.value("uk", l.uk);
    l.validate();
    return l;
}

KernelSpec spec_of(const RLState& s, const Ladders& ladders)
{
    return KernelSpec{ladders.ui.at(s.rung[0]), ladders.uj.at(s.rung[1]), ladders.uk.at(s.rung[2])};
}

RLState apply(const RLState& s, Action a, const Ladders& ladders)
{
    if (a == Action::Stop)
        return s;
    const int loop = static_cast<int>(a) / 2;
    const int delta = static_cast<int>(a) % 2 == 0 ? 1 : -1;
    const std::array<std::size_t, 3> sizes{ladders.ui.size(), ladders.uj.size(), ladders.uk.size()};
    RLState n = s;
    n.rung[loop] = std::clamp(s.rung[loop] + delta, 0, static_cast<int>(sizes[loop]) - 1);
    return n;
}

void RLConfig::validate() const
{
    auto bad = [](const std::string& m) { fail(ErrorCode::ConfigError, "rl: " + m); };
    if (!(epsilon0 >= 0.0 && epsilon0 <= 1.0) || !(epsilon_min >= 0.0 && epsilon_min <= 1.0))
        bad("epsilon values must lie in [0, 1]");
    if (!(decay > 0.0 && decay < 1.0))
        bad("decay must lie in (0, 1)");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        bad("gamma must lie in [0, 1]");
    if (episodes < 0 || steps < 1 || batch_size < 2 || replay_capacity < static_cast<std::size_t>(batch_size))
        bad("episodes, steps, batch size or replay capacity out of range");
    if (!(dropout >= 0.0 && dropout < 1.0))
        bad("dropout must lie in [0, 1)");
    if (!(learning_rate > 0.0) || !(momentum >= 0.0 && momentum < 1.0))
        bad("learning rate or momentum out of range");
    if (!(huber_delta > 0.0))
        bad("huber_delta must be positive");
    if (hidden.size() != 2 || hidden[0] < 1 || hidden[1] < 1)
        bad("hidden must list two positive widths");
}

Json RLConfig::to_json() const
{
    return Json{{"epsilon0", epsilon0},
                {"decay", decay},
                {"epsilon_min", epsilon_min},
                {"gamma", gamma},
                {"episodes", episodes},
                {"steps", steps},
                {"replay_capacity", replay_capacity},
                {"batch_size", batch_size},
                {"hidden", hidden},
                {"dropout", dropout},
                {"learning_rate", learning_rate},
                {"momentum", momentum},
                {"huber_delta", huber_delta},
                {"seed", seed}};
}

RLConfig RLConfig::from_json(const Json& j)
{
    RLConfig c;
    c.epsilon0 = j.value("epsilon0", c.epsilon0);
    c.decay = j.value("decay", c.decay);
    c.epsilon_min = j.value("epsilon_min", c.epsilon_min);
    c.gamma = j.value("gamma", c.gamma);
    c.episodes = j.value("episodes", c.episodes);
    c.steps = j.value("steps", c.steps);
    c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.hidden = j.value("hidden", c.hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.huber_delta = j.value("huber_delta", c.huber_delta);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

double epsilon_at(const RLConfig& config, int episode)
{
    return std::max(config.epsilon_min, config.epsilon0 * std::pow(config.decay, episode));
}

nn::Network policy_network(int inputs, const std::vector<int>& hidden, double dropout, nn::Rng& rng)
{
    nn::Network net;
    int width = inputs;
    for (int h : hidden) {
        net.add(std::make_unique<nn::Dense>(width, h, rng));
        net.add(std::make_unique<nn::ReLU>());
        net.add(std::make_unique<nn::BatchNorm>(h));
        net.add(std::make_unique<nn::Dropout>(dropout));
        width = h;
    }
    net.add(std::make_unique<nn::Dense>(width, kActionCount, rng));
    return net;
}

nn::Matrix encode_states(const std::vector<RLState>& states, const Ladders& ladders)
{
    const int a = static_cast<int>(ladders.ui.size());
    const int b = static_cast<int>(ladders.uj.size());
    const int c = static_cast<int>(ladders.uk.size());
    nn::Matrix x = nn::Matrix::Zero(static_cast<Eigen::Index>(states.size()), a + b + c);
    for (std::size_t r = 0; r < states.size(); ++r) {
        const auto& s = states[r].rung;
        x(r, s[0]) = 1.0;
        x(r, a + s[1]) = 1.0;
        x(r, a + b + s[2]) = 1.0;
    }
    return x;
}

QAgent::QAgent(const Ladders& ladders, const RLConfig& config, nn::Rng& rng)
    : ladders_(ladders),
      config_(config),
      net_(policy_network(static_cast<int>(ladders.ui.size() + ladders.uj.size() + ladders.uk.size()),
                          config.hidden, config.dropout, rng)),
      target_(net_),
      sgd_(config.learning_rate, config.momentum)
{
}

void QAgent::sync_target() { target_ = net_; }

std::array<double, kActionCount> QAgent::q_values(const RLState& s) const
{
    nn::Matrix q = net_.infer(encode_states({s}, ladders_));
    std::array<double, kActionCount> out{};
    for (int a = 0; a < kActionCount; ++a)
        out[a] = q(0, a);
    return out;
}

Action QAgent::greedy(const RLState& s) const
{
    auto q = q_values(s);
    return static_cast<Action>(std::max_element(q.begin(), q.end()) - q.begin());
}

Action QAgent::act(const RLState& s, double epsilon, nn::Rng& rng) const
{
    if (nn::uniform01(rng) < epsilon)
        return static_cast<Action>(nn::uniform_index(rng, kActionCount));
    return greedy(s);
}

double QAgent::learn(const std::vector<Transition>& batch, nn::Rng& rng)
{
    std::vector<RLState> states, nexts;
    std::vector<int> actions;
    for (const auto& t : batch) {
        states.push_back(t.state);
        nexts.push_back(t.next);
        actions.push_back(static_cast<int>(t.action));
    }
    nn::Matrix q_next = target_.infer(encode_states(nexts, ladders_));
    std::vector<double> targets;
    for (std::size_t r = 0; r < batch.size(); ++r)
        targets.push_back(batch[r].reward + (batch[r].terminal ? 0.0 : config_.gamma * q_next.row(r).maxCoeff()));
    net_.zero_grad();
    nn::Matrix grad;
    const double loss = nn::selected_huber(net_.forward(encode_states(states, ladders_), nn::Mode::Train, rng), actions,
                                           targets, config_.huber_delta, &grad);
    if (!std::isfinite(loss))
        fail(ErrorCode::TrainingDiverged, "policy network loss became non-finite");
    net_.backward(grad);
    sgd_.step(net_);
    return loss;
}

Json LogEntry::to_json() const
{
    auto triple = [](const KernelSpec& s) { return Json::array({s.ui, s.uj, s.uk}); };
    return Json{{"episode", episode},       {"step", step},
                {"state", triple(state)},   {"action", looptune::to_string(action)},
                {"reward", reward},         {"perf", performance},
                {"next", triple(next)},     {"epsilon", epsilon}};
}

std::string TuneResult::log_jsonl() const
{
    std::string out;
    for (const auto& e : log)
        out += e.to_json().dump() + "\n";
    return out;
}

namespace {

bool infeasible_code(ErrorCode c)
{
    return c == ErrorCode::RegisterPressure || c == ErrorCode::UnsupportedSpec || c == ErrorCode::ToolchainError;
}

} // namespace

TuneResult tune(const Problem& problem, Evaluator& evaluator, const Ladders& ladders, const RLConfig& config)
{
    ladders.validate();
    config.validate();
    nn::Rng rng(config.seed);
    TuneResult result;

    auto performance = [&](const RLState& s) -> std::optional<double> {
        const KernelSpec spec = spec_of(s, ladders);
        auto it = result.evaluated.find(spec);
        if (it != result.evaluated.end())
            return it->second;
        std::optional<double> p;
        try {
            p = evaluator.evaluate(spec, problem).performance;
        } catch (const Error& e) {
            if (!infeasible_code(e.code()))
                throw;
        }
        result.evaluated.emplace(spec, p);
        return p;
    };

    const RLState start{};
    const auto p0 = performance(start);
    if (!p0)
        fail(ErrorCode::NoFeasibleKernel, "starting kernel " + spec_of(start, ladders).id() + " is infeasible");
    result.best = spec_of(start, ladders);
    result.best_performance = *p0;

    QAgent agent(ladders, config, rng);
    if (ladders.states() > 1) {
        std::vector<Transition> replay;
        std::size_t cursor = 0;
        for (int episode = 0; episode < config.episodes; ++episode) {
            const double eps = epsilon_at(config, episode);
            result.epsilons.push_back(eps);
            agent.sync_target();
            RLState s = start;
            double current = *p0;
            for (int step = 0; step < config.steps; ++step) {
                const Action a = agent.act(s, eps, rng);
                Transition t{s, a, 0.0, s, a == Action::Stop};
                if (a != Action::Stop) {
                    const RLState candidate = apply(s, a, ladders);
                    if (candidate != s) {
                        if (auto p = performance(candidate)) {
                            t.reward = (*p - current) / current;
                            t.next = candidate;
                            current = *p;
                            if (*p > result.best_performance) {
                                result.best_performance = *p;
                                result.best = spec_of(candidate, ladders);
                            }
                        } else {
                            t.reward = -1.0;
                        }
                    }
                }
                result.log.push_back({episode, step, spec_of(s, ladders), a, t.reward, current,
                                      spec_of(t.next, ladders), eps});
                if (replay.size() < config.replay_capacity)
                    replay.push_back(t);
                else
                    replay[cursor] = t;
                cursor = (cursor + 1) % config.replay_capacity;
                if (replay.size() >= static_cast<std::size_t>(config.batch_size)) {
                    std::vector<Transition> batch;
                    for (int b = 0; b < config.batch_size; ++b)
                        batch.push_back(replay[nn::uniform_index(rng, replay.size())]);
                    agent.learn(batch, rng);
                }
                s = t.next;
                if (t.terminal)
                    break;
            }
        }
    }
    result.policy = agent.network().to_json();
    return result;
}

} // namespace looptune
