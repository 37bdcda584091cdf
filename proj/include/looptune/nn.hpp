#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "looptune/serialize.hpp"

namespace looptune::nn {

/// Rows are samples, columns are features.
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform index in [0, n) by rejection; identical on every platform.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

template <class T>
void shuffle(std::vector<T>& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

enum class Mode { Train, Infer };

struct Parameter {
    std::string name;
    Matrix* value;
    Matrix* grad;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual std::unique_ptr<Layer> clone() const = 0;
    virtual std::string kind() const = 0;

    /// Pure inference; safe to call concurrently.
    virtual Matrix infer(const Matrix& x) const = 0;
    /// Caches what backward() needs.
    virtual Matrix forward(const Matrix& x, Mode mode, Rng& rng) = 0;
    /// Accumulates parameter gradients and returns dL/dx.
    virtual Matrix backward(const Matrix& dy) = 0;

    virtual std::vector<Parameter> parameters() { return {}; }
    virtual Json to_json() const;
    virtual void load(const Json&) {}
};

class Dense final : public Layer {
public:
    Dense(int in, int out, Rng& rng);
    Dense(Matrix weight, Matrix bias);

    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
    std::string kind() const override { return "dense"; }
    Matrix infer(const Matrix& x) const override;
    Matrix forward(const Matrix& x, Mode mode, Rng& rng) override;
    Matrix backward(const Matrix& dy) override;
    std::vector<Parameter> parameters() override;
    Json to_json() const override;
    void load(const Json& j) override;

    int inputs() const { return static_cast<int>(weight_.cols()); }
    int outputs() const { return static_cast<int>(weight_.rows()); }

private:
    Matrix weight_; // out x in
    Matrix bias_;   // 1 x out
    Matrix grad_weight_, grad_bias_;
    Matrix input_;
};

class ReLU final : public Layer {
public:
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
    std::string kind() const override { return "relu"; }
    Matrix infer(const Matrix& x) const override;
    Matrix forward(const Matrix& x, Mode mode, Rng& rng) override;
    Matrix backward(const Matrix& dy) override;

private:
    Matrix input_;
};

/// Per-feature normalization. Training mode uses batch statistics (when the
/// batch has more than one row) and updates the running averages.
class BatchNorm final : public Layer {
public:
    explicit BatchNorm(int features, double momentum = 0.1, double epsilon = 1e-5);

    std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }
    std::string kind() const override { return "batchnorm"; }
    Matrix infer(const Matrix& x) const override;
    Matrix forward(const Matrix& x, Mode mode, Rng& rng) override;
    Matrix backward(const Matrix& dy) override;
    std::vector<Parameter> parameters() override;
    Json to_json() const override;
    void load(const Json& j) override;

private:
    Matrix gamma_, beta_, running_mean_, running_var_;
    Matrix grad_gamma_, grad_beta_;
    double momentum_, epsilon_;
    Matrix x_hat_, inv_std_;
    bool batch_stats_ = false;
};

/// Inverted dropout: kept units are scaled by 1/(1-rate) during training.
class Dropout final : public Layer {
public:
    explicit Dropout(double rate);

    std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }
    std::string kind() const override { return "dropout"; }
    Matrix infer(const Matrix& x) const override { return x; }
    Matrix forward(const Matrix& x, Mode mode, Rng& rng) override;
    Matrix backward(const Matrix& dy) override;
    Json to_json() const override;

    double rate() const { return rate_; }

private:
    double rate_;
    Matrix mask_;
};

class Network {
public:
    Network() = default;
    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    Network& add(std::unique_ptr<Layer> layer);

    Matrix infer(const Matrix& x) const;
    Matrix forward(const Matrix& x, Mode mode, Rng& rng);
    void backward(const Matrix& dy);
    void zero_grad();

    std::vector<Parameter> parameters();
    const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
    int input_dim() const;
    int output_dim() const;

    Json to_json() const;
    static Network from_json(const Json& j);

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// Mini-batch SGD with classical momentum.
class Sgd {
public:
    Sgd(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}
    void step(Network& net);

private:
    double lr_, momentum_;
    std::vector<Matrix> velocity_;
};

Matrix softmax_rows(const Matrix& logits);

/// Mean cross-entropy of softmax(logits) against class labels; writes dL/dlogits.
double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* grad);

/// Mean of 0.5 (q[row, action] - target)^2 over rows; writes dL/dq.
double selected_mse(const Matrix& q, const std::vector<int>& actions, const std::vector<double>& targets,
                    Matrix* grad);

/// Huber loss on the selected entries: quadratic for |d| <= delta, linear beyond.
double selected_huber(const Matrix& q, const std::vector<int>& actions, const std::vector<double>& targets,
                      double delta, Matrix* grad);

/// Dense(+ReLU) stack ending in a linear Dense layer.
Network mlp(int inputs, const std::vector<int>& hidden, int outputs, Rng& rng);

} // namespace looptune::nn
