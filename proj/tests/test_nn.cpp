#include <doctest.h>

#include <cmath>

#include "looptune/nn.hpp"

using namespace looptune;
using namespace looptune::nn;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0)
{
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = (2.0 * uniform01(rng) - 1.0) * scale;
    return m;
}

// Central differences over every parameter and compares with backward().
// The loss is recomputed from scratch for each perturbation.
template <class Loss>
double worst_gradient_error(Network& net, Loss loss)
{
    Matrix dout;
    net.zero_grad();
    loss(net, &dout);
    net.backward(dout);
    double worst = 0.0;
    const double h = 1e-6;
    for (auto& p : net.parameters()) {
        Matrix analytic = *p.grad;
        for (Eigen::Index r = 0; r < p.value->rows(); ++r)
            for (Eigen::Index c = 0; c < p.value->cols(); ++c) {
                const double saved = (*p.value)(r, c);
                (*p.value)(r, c) = saved + h;
                const double up = loss(net, nullptr);
                (*p.value)(r, c) = saved - h;
                const double down = loss(net, nullptr);
                (*p.value)(r, c) = saved;
                const double numeric = (up - down) / (2 * h);
                const double a = analytic(r, c);
                const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
                worst = std::max(worst, std::abs(a - numeric) / scale);
            }
    }
    return worst;
}

} // namespace

TEST_CASE("softmax rows sum to one")
{
    Rng rng(3);
    Matrix p = softmax_rows(random_matrix(50, 7, rng, 30.0));
    for (Eigen::Index r = 0; r < p.rows(); ++r)
        CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("cross-entropy gradient of an MLP matches finite differences")
{
    Rng rng(5);
    Network net = mlp(6, {5, 4}, 2, rng);
    Matrix x = random_matrix(9, 6, rng);
    std::vector<int> y{0, 1, 1, 0, 0, 1, 0, 1, 1};
    Rng unused(0);
    double err = worst_gradient_error(net, [&](Network& n, Matrix* g) {
        return softmax_cross_entropy(n.forward(x, Mode::Train, unused), y, g);
    });
    CHECK(err < 1e-4);
}

TEST_CASE("batch-norm gradients in training and inference mode")
{
    Rng rng(8);
    Network net;
    net.add(std::make_unique<Dense>(5, 6, rng))
        .add(std::make_unique<ReLU>())
        .add(std::make_unique<BatchNorm>(6))
        .add(std::make_unique<Dropout>(0.0))
        .add(std::make_unique<Dense>(6, 3, rng));
    Matrix x = random_matrix(12, 5, rng);
    std::vector<int> actions{0, 1, 2, 0, 1, 2, 0, 1, 2, 2, 1, 0};
    std::vector<double> targets;
    for (int r = 0; r < 12; ++r)
        targets.push_back(0.3 * r - 1.0);
    for (Mode mode : {Mode::Train, Mode::Infer}) {
        Network copy = net;
        Rng unused(0);
        double err = worst_gradient_error(copy, [&](Network& n, Matrix* g) {
            return selected_mse(n.forward(x, mode, unused), actions, targets, g);
        });
        CHECK(err < 1e-4);
    }
}

TEST_CASE("huber loss is quadratic inside delta and linear outside")
{
    Matrix q(2, 2);
    q << 0.5, 0.0, 0.0, 4.0;
    Matrix g;
    const double loss = selected_huber(q, {0, 1}, {0.0, 1.0}, 1.0, &g);
    CHECK(loss == doctest::Approx((0.125 + 2.5) / 2.0));
    CHECK(g(0, 0) == doctest::Approx(0.25));
    CHECK(g(1, 1) == doctest::Approx(0.5));
    CHECK(g(0, 1) == 0.0);

    Rng rng(3);
    Network net = mlp(4, {5}, 3, rng);
    Matrix x = random_matrix(6, 4, rng);
    std::vector<int> actions{0, 1, 2, 0, 1, 2};
    std::vector<double> targets{-2.0, 0.1, 3.0, 0.0, -0.2, 1.5};
    Rng unused(0);
    double err = worst_gradient_error(net, [&](Network& n, Matrix* grad) {
        return selected_huber(n.forward(x, Mode::Train, unused), actions, targets, 0.5, grad);
    });
    CHECK(err < 1e-4);
    CHECK_THROWS_AS(selected_huber(q, {0, 1}, {0.0, 1.0}, 0.0, nullptr), Error);
}

TEST_CASE("dropout is inactive at inference and scales kept units in training")
{
    Rng rng(1);
    Dropout d(0.25);
    Matrix x = Matrix::Ones(200, 50);
    CHECK(d.infer(x) == x);
    Matrix y = d.forward(x, Mode::Train, rng);
    const double kept = (y.array() > 0).cast<double>().mean();
    CHECK(kept == doctest::Approx(0.75).epsilon(0.02));
    CHECK(y.maxCoeff() == doctest::Approx(1.0 / 0.75));
    CHECK_THROWS_AS(Dropout(1.0), Error);
}

TEST_CASE("network JSON round trip preserves inference exactly")
{
    Rng rng(12);
    Network net;
    net.add(std::make_unique<Dense>(4, 8, rng))
        .add(std::make_unique<ReLU>())
        .add(std::make_unique<BatchNorm>(8))
        .add(std::make_unique<Dropout>(0.25))
        .add(std::make_unique<Dense>(8, 7, rng));
    Matrix x = random_matrix(16, 4, rng);
    net.forward(x, Mode::Train, rng);
    Network back = Network::from_json(Json::parse(net.to_json().dump()));
    CHECK(back.infer(x) == net.infer(x));
    CHECK(back.input_dim() == 4);
    CHECK(back.output_dim() == 7);
}

TEST_CASE("sgd reduces the loss on a separable problem")
{
    Rng rng(4);
    Network net = mlp(2, {8}, 2, rng);
    Matrix x = random_matrix(64, 2, rng);
    std::vector<int> y;
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        y.push_back(x(r, 0) + x(r, 1) > 0 ? 1 : 0);
    Sgd sgd(0.1, 0.9);
    const double first = softmax_cross_entropy(net.infer(x), y, nullptr);
    for (int it = 0; it < 300; ++it) {
        net.zero_grad();
        Matrix g;
        softmax_cross_entropy(net.forward(x, Mode::Train, rng), y, &g);
        net.backward(g);
        sgd.step(net);
    }
    CHECK(softmax_cross_entropy(net.infer(x), y, nullptr) < 0.5 * first);
}

TEST_CASE("portable uniform helpers")
{
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        double u = uniform01(rng);
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        REQUIRE(uniform_index(rng, 7) < 7);
    }
    std::vector<int> v{1, 2, 3, 4, 5};
    shuffle(v, rng);
    std::sort(v.begin(), v.end());
    CHECK(v == std::vector<int>{1, 2, 3, 4, 5});
}
