#include "looptune/nn.hpp"

#include <cmath>

#include "looptune/error.hpp"

namespace looptune::nn {

namespace {

Json matrix_to_json(const Matrix& m)
{
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols, const char* what)
{
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        fail(ErrorCode::InvalidArgument, std::string("bad shape for ") + what);
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[r];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            fail(ErrorCode::InvalidArgument, std::string("bad shape for ") + what);
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = row[c].get<double>();
    }
    return m;
}

} // namespace

std::uint64_t uniform_index(Rng& rng, std::uint64_t n)
{
    if (n == 0)
        fail(ErrorCode::InvalidArgument, "uniform_index over an empty range");
    const std::uint64_t limit = Rng::max() - Rng::max() % n;
    for (;;) {
        std::uint64_t x = rng();
        if (x < limit)
            return x % n;
    }
}

Json Layer::to_json() const { return Json{{"type", kind()}}; }

Dense::Dense(int in, int out, Rng& rng) : weight_(out, in), bias_(Matrix::Zero(1, out))
{
    const double a = std::sqrt(6.0 / (in + out));
    for (Eigen::Index r = 0; r < weight_.rows(); ++r)
        for (Eigen::Index c = 0; c < weight_.cols(); ++c)
            weight_(r, c) = (2.0 * uniform01(rng) - 1.0) * a;
    grad_weight_ = Matrix::Zero(out, in);
    grad_bias_ = Matrix::Zero(1, out);
}

Dense::Dense(Matrix weight, Matrix bias) : weight_(std::move(weight)), bias_(std::move(bias))
{
    if (bias_.rows() != 1 || bias_.cols() != weight_.rows())
        fail(ErrorCode::InvalidArgument, "dense bias does not match weight rows");
    grad_weight_ = Matrix::Zero(weight_.rows(), weight_.cols());
    grad_bias_ = Matrix::Zero(1, bias_.cols());
}

Matrix Dense::infer(const Matrix& x) const
{
    if (x.cols() != weight_.cols())
        fail(ErrorCode::InvalidArgument, "dense layer expects " + std::to_string(weight_.cols()) +
                                             " inputs, got " + std::to_string(x.cols()));
    Matrix y = x * weight_.transpose();
    y.rowwise() += bias_.row(0);
    return y;
}

Matrix Dense::forward(const Matrix& x, Mode, Rng&)
{
    input_ = x;
    return infer(x);
}

Matrix Dense::backward(const Matrix& dy)
{
    grad_weight_ += dy.transpose() * input_;
    grad_bias_ += dy.colwise().sum();
    return dy * weight_;
}

std::vector<Parameter> Dense::parameters()
{
    return {{"weight", &weight_, &grad_weight_}, {"bias", &bias_, &grad_bias_}};
}

Json Dense::to_json() const
{
    return Json{{"type", kind()},
                {"inputs", weight_.cols()},
                {"outputs", weight_.rows()},
                {"weight", matrix_to_json(weight_)},
                {"bias", matrix_to_json(bias_)}};
}

void Dense::load(const Json& j)
{
    weight_ = matrix_from_json(j.at("weight"), weight_.rows(), weight_.cols(), "dense weight");
    bias_ = matrix_from_json(j.at("bias"), 1, bias_.cols(), "dense bias");
}

Matrix ReLU::infer(const Matrix& x) const { return x.cwiseMax(0.0); }

Matrix ReLU::forward(const Matrix& x, Mode, Rng&)
{
    input_ = x;
    return infer(x);
}

Matrix ReLU::backward(const Matrix& dy)
{
    return (input_.array() > 0.0).select(dy, 0.0);
}

BatchNorm::BatchNorm(int features, double momentum, double epsilon)
    : gamma_(Matrix::Ones(1, features)),
      beta_(Matrix::Zero(1, features)),
      running_mean_(Matrix::Zero(1, features)),
      running_var_(Matrix::Ones(1, features)),
      grad_gamma_(Matrix::Zero(1, features)),
      grad_beta_(Matrix::Zero(1, features)),
      momentum_(momentum),
      epsilon_(epsilon)
{
}

Matrix BatchNorm::infer(const Matrix& x) const
{
    if (x.cols() != gamma_.cols())
        fail(ErrorCode::InvalidArgument, "batchnorm width mismatch");
    Matrix inv = (running_var_.array() + epsilon_).rsqrt().matrix();
    Matrix y = (x.rowwise() - running_mean_.row(0)).array().rowwise() * (inv.array() * gamma_.array()).row(0);
    y.rowwise() += beta_.row(0);
    return y;
}

Matrix BatchNorm::forward(const Matrix& x, Mode mode, Rng&)
{
    if (x.cols() != gamma_.cols())
        fail(ErrorCode::InvalidArgument, "batchnorm width mismatch");
    batch_stats_ = mode == Mode::Train && x.rows() > 1;
    Matrix mean, var;
    if (batch_stats_) {
        mean = x.colwise().mean();
        Matrix centered = x.rowwise() - mean.row(0);
        var = centered.array().square().colwise().mean().matrix();
        const double n = static_cast<double>(x.rows());
        running_mean_ = (1.0 - momentum_) * running_mean_ + momentum_ * mean;
        running_var_ = (1.0 - momentum_) * running_var_ + momentum_ * var * (n / (n - 1.0));
    } else {
        mean = running_mean_;
        var = running_var_;
    }
    inv_std_ = (var.array() + epsilon_).rsqrt().matrix();
    x_hat_ = (x.rowwise() - mean.row(0)).array().rowwise() * inv_std_.array().row(0);
    Matrix y = x_hat_.array().rowwise() * gamma_.array().row(0);
    y.rowwise() += beta_.row(0);
    return y;
}

Matrix BatchNorm::backward(const Matrix& dy)
{
    grad_gamma_ += (dy.array() * x_hat_.array()).colwise().sum().matrix();
    grad_beta_ += dy.colwise().sum();
    Matrix dx_hat = dy.array().rowwise() * gamma_.array().row(0);
    if (!batch_stats_)
        return dx_hat.array().rowwise() * inv_std_.array().row(0);
    const double n = static_cast<double>(dy.rows());
    Matrix sum_dx = dx_hat.colwise().sum();
    Matrix sum_dx_xhat = (dx_hat.array() * x_hat_.array()).colwise().sum().matrix();
    Matrix dx = (n * dx_hat.array()).matrix();
    dx.rowwise() -= sum_dx.row(0);
    dx -= (x_hat_.array().rowwise() * sum_dx_xhat.array().row(0)).matrix();
    return (dx.array().rowwise() * (inv_std_.array() / n).row(0)).matrix();
}

std::vector<Parameter> BatchNorm::parameters()
{
    return {{"gamma", &gamma_, &grad_gamma_}, {"beta", &beta_, &grad_beta_}};
}

Json BatchNorm::to_json() const
{
    return Json{{"type", kind()},
                {"features", gamma_.cols()},
                {"momentum", momentum_},
                {"epsilon", epsilon_},
                {"gamma", matrix_to_json(gamma_)},
                {"beta", matrix_to_json(beta_)},
                {"running_mean", matrix_to_json(running_mean_)},
                {"running_var", matrix_to_json(running_var_)}};
}

void BatchNorm::load(const Json& j)
{
    const auto n = gamma_.cols();
    gamma_ = matrix_from_json(j.at("gamma"), 1, n, "batchnorm gamma");
    beta_ = matrix_from_json(j.at("beta"), 1, n, "batchnorm beta");
    running_mean_ = matrix_from_json(j.at("running_mean"), 1, n, "batchnorm mean");
    running_var_ = matrix_from_json(j.at("running_var"), 1, n, "batchnorm variance");
}

Dropout::Dropout(double rate) : rate_(rate)
{
    if (!(rate >= 0.0 && rate < 1.0))
        fail(ErrorCode::InvalidArgument, "dropout rate must lie in [0, 1)");
}

Matrix Dropout::forward(const Matrix& x, Mode mode, Rng& rng)
{
    if (mode == Mode::Infer || rate_ == 0.0) {
        mask_ = Matrix::Ones(x.rows(), x.cols());
        return x;
    }
    const double keep = 1.0 - rate_;
    mask_.resize(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            mask_(r, c) = uniform01(rng) < keep ? 1.0 / keep : 0.0;
    return x.cwiseProduct(mask_);
}

Matrix Dropout::backward(const Matrix& dy) { return dy.cwiseProduct(mask_); }

Json Dropout::to_json() const { return Json{{"type", kind()}, {"rate", rate_}}; }

Network::Network(const Network& other)
{
    for (const auto& l : other.layers_)
        layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other)
{
    if (this != &other) {
        Network copy(other);
        layers_ = std::move(copy.layers_);
    }
    return *this;
}

Network& Network::add(std::unique_ptr<Layer> layer)
{
    layers_.push_back(std::move(layer));
    return *this;
}

Matrix Network::infer(const Matrix& x) const
{
    Matrix h = x;
    for (const auto& l : layers_)
        h = l->infer(h);
    return h;
}

Matrix Network::forward(const Matrix& x, Mode mode, Rng& rng)
{
    Matrix h = x;
    for (auto& l : layers_)
        h = l->forward(h, mode, rng);
    return h;
}

void Network::backward(const Matrix& dy)
{
    Matrix g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
        g = (*it)->backward(g);
}

void Network::zero_grad()
{
    for (auto& p : parameters())
        p.grad->setZero();
}

std::vector<Parameter> Network::parameters()
{
    std::vector<Parameter> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (auto p : layers_[i]->parameters()) {
            p.name = std::to_string(i) + "." + p.name;
            out.push_back(p);
        }
    return out;
}

int Network::input_dim() const
{
    for (const auto& l : layers_)
        if (auto* d = dynamic_cast<const Dense*>(l.get()))
            return d->inputs();
    return 0;
}

int Network::output_dim() const
{
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
        if (auto* d = dynamic_cast<const Dense*>(it->get()))
            return d->outputs();
    return 0;
}

Json Network::to_json() const
{
    Json layers = Json::array();
    for (const auto& l : layers_)
        layers.push_back(l->to_json());
    return Json{{"layers", std::move(layers)}};
}

Network Network::from_json(const Json& j)
{
    Network net;
    Rng unused(0);
    for (const auto& lj : j.at("layers")) {
        const auto type = lj.at("type").get<std::string>();
        std::unique_ptr<Layer> layer;
        if (type == "dense")
            layer = std::make_unique<Dense>(lj.at("inputs").get<int>(), lj.at("outputs").get<int>(), unused);
        else if (type == "relu")
            layer = std::make_unique<ReLU>();
        else if (type == "batchnorm")
            layer = std::make_unique<BatchNorm>(lj.at("features").get<int>(), lj.at("momentum").get<double>(),
                                                lj.at("epsilon").get<double>());
        else if (type == "dropout")
            layer = std::make_unique<Dropout>(lj.at("rate").get<double>());
        else
            fail(ErrorCode::InvalidArgument, "unknown layer type '" + type + "'");
        layer->load(lj);
        net.add(std::move(layer));
    }
    return net;
}

void Sgd::step(Network& net)
{
    auto params = net.parameters();
    if (velocity_.size() != params.size()) {
        velocity_.clear();
        for (const auto& p : params)
            velocity_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity_[i] = momentum_ * velocity_[i] - lr_ * *params[i].grad;
        *params[i].value += velocity_[i];
    }
}

Matrix softmax_rows(const Matrix& logits)
{
    Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
    p = p.array().exp().matrix();
    p.array().colwise() /= p.rowwise().sum().array();
    return p;
}

double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* grad)
{
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
        fail(ErrorCode::InvalidArgument, "label count differs from batch size");
    const double n = static_cast<double>(logits.rows());
    Matrix p = softmax_rows(logits);
    double loss = 0.0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
        loss += lse - logits(r, labels[r]);
    }
    if (grad) {
        *grad = p;
        for (Eigen::Index r = 0; r < logits.rows(); ++r)
            (*grad)(r, labels[r]) -= 1.0;
        *grad /= n;
    }
    return loss / n;
}

double selected_mse(const Matrix& q, const std::vector<int>& actions, const std::vector<double>& targets,
                    Matrix* grad)
{
    if (static_cast<Eigen::Index>(actions.size()) != q.rows() || actions.size() != targets.size())
        fail(ErrorCode::InvalidArgument, "action/target count differs from batch size");
    const double n = static_cast<double>(q.rows());
    double loss = 0.0;
    if (grad)
        *grad = Matrix::Zero(q.rows(), q.cols());
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
        const double d = q(r, actions[r]) - targets[r];
        loss += 0.5 * d * d;
        if (grad)
            (*grad)(r, actions[r]) = d / n;
    }
    return loss / n;
}

double selected_huber(const Matrix& q, const std::vector<int>& actions, const std::vector<double>& targets,
                      double delta, Matrix* grad)
{
    if (static_cast<Eigen::Index>(actions.size()) != q.rows() || actions.size() != targets.size())
        fail(ErrorCode::InvalidArgument, "action/target count differs from batch size");
    if (!(delta > 0.0))
        fail(ErrorCode::InvalidArgument, "huber delta must be positive");
    const double n = static_cast<double>(q.rows());
    double loss = 0.0;
    if (grad)
        *grad = Matrix::Zero(q.rows(), q.cols());
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
        const double d = q(r, actions[r]) - targets[r];
        const double a = std::abs(d);
        loss += a <= delta ? 0.5 * d * d : delta * (a - 0.5 * delta);
        if (grad)
            (*grad)(r, actions[r]) = std::clamp(d, -delta, delta) / n;
    }
    return loss / n;
}

Network mlp(int inputs, const std::vector<int>& hidden, int outputs, Rng& rng)
{
    Network net;
    int width = inputs;
    for (int h : hidden) {
        net.add(std::make_unique<Dense>(width, h, rng));
        net.add(std::make_unique<ReLU>());
        width = h;
    }
    net.add(std::make_unique<Dense>(width, outputs, rng));
    return net;
}

} // namespace looptune::nn
