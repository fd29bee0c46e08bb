#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dap/nn.hpp"
#include "dap/verify.hpp"

using namespace dap;
using nn::Act;
using nn::LayerSpec;
using nn::Network;
using nn::Tensor;

TEST_CASE("dense: identity weights reproduce the input") {
    Network net({LayerSpec::dense(3)}, {3}, 7);
    std::vector<Tensor> params = net.parameter_tensors();
    REQUIRE(params.size() == 2);
    // Weights [in, units] row-major; set to I, bias to zero.
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) params[0].data[3 * i + j] = (i == j) ? 1.0 : 0.0;
    std::fill(params[1].data.begin(), params[1].data.end(), 0.0);
    net.set_parameters(params);

    Tensor x({2, 3}, {1.0, -2.0, 0.5, 4.0, 0.0, -1.0});
    Tensor y = net.forward(x);
    CHECK(y.shape == x.shape);
    CHECK(y.data == x.data);
}

TEST_CASE("activation: swish(0) = 0 and derivative identity") {
    Network net({LayerSpec::activation(Act::Swish)}, {1}, 1);
    Tensor zero({1, 1}, {0.0});
    CHECK(net.forward(zero).data[0] == 0.0);

    // d/dx [x sigmoid(x)] = sigmoid(x) + x sigmoid(x)(1 - sigmoid(x)).
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 100; ++i) {
        const double x = u(rng);
        Tensor xt({1, 1}, {x});
        Network::Trace trace;
        net.forward(xt, trace);
        Tensor dy({1, 1}, {1.0});
        const double got = net.backward(dy, trace).data[0];
        const double s = 1.0 / (1.0 + std::exp(-x));
        const double want = s + x * s * (1.0 - s);
        CHECK(std::abs(got - want) <= 1e-8);
    }
}

TEST_CASE("conv1d: same padding, all-ones kernel") {
    Network net({LayerSpec::conv1d(1, 3)}, {3, 1}, 11);
    std::vector<Tensor> params = net.parameter_tensors();
    std::fill(params[0].data.begin(), params[0].data.end(), 1.0);  // weights [k, ch, f]
    std::fill(params[1].data.begin(), params[1].data.end(), 0.0);  // bias
    net.set_parameters(params);

    Tensor x({1, 3, 1}, {1.0, 2.0, 3.0});
    Tensor y = net.forward(x);
    REQUIRE(y.data.size() == 3);
    CHECK(y.data[0] == doctest::Approx(3.0));
    CHECK(y.data[1] == doctest::Approx(6.0));
    CHECK(y.data[2] == doctest::Approx(5.0));
}

TEST_CASE("backward: zero residual gives zero gradients; dx matches input shape") {
    Network net({LayerSpec::dense(4), LayerSpec::activation(Act::Swish), LayerSpec::dense(2)},
                {3}, 19);
    Tensor x({2, 3}, {0.3, -0.2, 0.9, -1.1, 0.4, 0.05});
    Network::Trace trace;
    Tensor y = net.forward(x, trace);
    auto [loss, grad] = nn::mse_loss(y, y);
    CHECK(loss == 0.0);
    net.zero_grads();
    Tensor dx = net.backward(grad, trace);
    CHECK(dx.shape == x.shape);
    for (nn::Param* p : net.params())
        for (double g : p->grad.data) CHECK(g == 0.0);
}

TEST_CASE("backward: finite-difference agreement on a small dense net") {
    Network net({LayerSpec::dense(5), LayerSpec::activation(Act::Swish), LayerSpec::dense(1)},
                {2}, 23);
    Tensor x({3, 2}, {0.1, 0.7, -0.4, 0.2, 0.9, -0.8});
    Tensor target({3, 1}, {0.5, -0.25, 1.0});
    CHECK(verify::max_grad_rel_error(net, x, target) <= 1e-6);
}

TEST_CASE("maxpool backward: gradient routed to argmax, ties to first index") {
    Network net({LayerSpec::maxpool1d(2)}, {4, 1}, 29);
    Tensor x({1, 4, 1}, {2.0, 2.0, -1.0, 3.0});  // first window ties at index 0
    Network::Trace trace;
    Tensor y = net.forward(x, trace);
    REQUIRE(y.data.size() == 2);
    CHECK(y.data[0] == 2.0);
    CHECK(y.data[1] == 3.0);
    Tensor dy({1, 2, 1}, {10.0, 20.0});
    Tensor dx = net.backward(dy, trace);
    CHECK(dx.data == std::vector<double>({10.0, 0.0, 0.0, 20.0}));
}

TEST_CASE("mse_loss: pinned values and naive-loop oracle") {
    Tensor a({1, 2}, {1.0, 0.0});
    Tensor b({1, 2}, {0.0, 0.0});
    CHECK(nn::mse_loss(a, a).first == 0.0);
    CHECK(nn::mse_loss(a, b).first == doctest::Approx(1.0).epsilon(1e-14));

    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const int bsz = 4, n = 7;
    Tensor pred({bsz, n}, std::vector<double>(bsz * n));
    Tensor tgt({bsz, n}, std::vector<double>(bsz * n));
    for (auto& v : pred.data) v = u(rng);
    for (auto& v : tgt.data) v = u(rng);
    auto [loss, grad] = nn::mse_loss(pred, tgt);
    double naive = 0.0;
    for (int i = 0; i < bsz * n; ++i) {
        const double d = pred.data[i] - tgt.data[i];
        naive += d * d;
        CHECK(std::abs(grad.data[i] - 2.0 * d / bsz) <= 1e-12);
    }
    naive /= bsz;
    CHECK(std::abs(loss - naive) <= 1e-12);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    nn::Param p;
    p.value = Tensor({2}, {1.5, -0.5});
    p.grad = Tensor({2}, {0.0, 0.0});
    nn::Adam opt({&p});
    opt.step(0.1);
    CHECK(p.value.data == std::vector<double>({1.5, -0.5}));
}

TEST_CASE("adam: quadratic convergence and first-step magnitude") {
    nn::Param p;
    p.value = Tensor({1}, {1.0});
    p.grad = Tensor({1}, {0.0});
    nn::Adam opt({&p});
    for (int i = 0; i < 200; ++i) {
        p.grad.data[0] = 2.0 * p.value.data[0];  // grad of w^2
        opt.step(0.1);
    }
    CHECK(std::abs(p.value.data[0]) < 1e-3);

    nn::Param q;
    q.value = Tensor({1}, {3.0});
    q.grad = Tensor({1}, {-7.5});
    nn::Adam fresh({&q});
    fresh.step(0.05);
    // Bias-corrected first step is lr * sign(grad) up to the eps_hat fudge.
    CHECK(q.value.data[0] == doctest::Approx(3.05).epsilon(1e-6));
}

TEST_CASE("train_loop: one-sample overfit reaches tiny loss") {
    Network net({LayerSpec::dense(8), LayerSpec::activation(Act::Swish), LayerSpec::dense(2)},
                {2}, 37);
    Tensor x({1, 2}, {0.2, -0.6});
    Tensor y({1, 2}, {0.9, 0.1});
    nn::TrainConfig cfg;
    cfg.epochs = 2000;
    cfg.batch_size = 1;
    cfg.initial_lr = 1e-2;
    cfg.min_lr = 1e-4;
    cfg.lr_patience = 200;
    cfg.seed = 5;
    nn::TrainResult res = nn::train_supervised(net, x, y, cfg);
    CHECK(res.best_loss < 1e-6);
}

TEST_CASE("train_loop: plateau halving floored at min_lr") {
    nn::Param p;
    p.value = Tensor({1}, {1.0});
    p.grad = Tensor({1}, {0.0});
    nn::TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 1;
    cfg.initial_lr = 8e-3;
    cfg.lr_patience = 10;
    cfg.min_lr = 2e-3;
    cfg.seed = 1;
    auto step = [](const std::vector<int>&) { return 1.0; };  // constant plateau
    nn::TrainResult res = nn::train_loop(1, step, {&p}, cfg);
    REQUIRE(static_cast<int>(res.lr_history.size()) == 50);
    CHECK(res.lr_history.front() == 8e-3);
    // Halves after each patience window, then clamps at min_lr.
    CHECK(res.lr_history[11] == 4e-3);
    CHECK(res.lr_history[22] == 2e-3);
    CHECK(res.lr_history.back() == 2e-3);
    for (double lr : res.lr_history) CHECK(lr >= 2e-3);
}

TEST_CASE("train_loop: same seed gives bitwise-identical loss history") {
    auto run = [] {
        Network net({LayerSpec::dense(6), LayerSpec::activation(Act::Swish),
                     LayerSpec::dense(1)},
                    {3}, 41);
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Tensor x({16, 3}, std::vector<double>(48));
        Tensor y({16, 1}, std::vector<double>(16));
        for (auto& v : x.data) v = u(rng);
        for (auto& v : y.data) v = u(rng);
        nn::TrainConfig cfg;
        cfg.epochs = 30;
        cfg.batch_size = 4;
        cfg.initial_lr = 1e-3;
        cfg.seed = 77;
        return nn::train_supervised(net, x, y, cfg).loss_history;
    };
    CHECK(run() == run());
}

TEST_CASE("network: same seed gives identical initial parameters") {
    const std::vector<LayerSpec> specs = {LayerSpec::conv1d(2, 3), LayerSpec::flatten(),
                                          LayerSpec::dense(3)};
    Network a(specs, {8, 1}, 101);
    Network b(specs, {8, 1}, 101);
    Network c(specs, {8, 1}, 102);
    const auto pa = a.parameter_tensors(), pb = b.parameter_tensors(),
               pc = c.parameter_tensors();
    REQUIRE(pa.size() == pb.size());
    bool all_equal_ab = true, all_equal_ac = true;
    for (size_t i = 0; i < pa.size(); ++i) {
        all_equal_ab = all_equal_ab && pa[i].data == pb[i].data;
        all_equal_ac = all_equal_ac && pa[i].data == pc[i].data;
    }
    CHECK(all_equal_ab);
    CHECK(!all_equal_ac);
}

TEST_CASE("network: shape algebra through a CAE-like stack") {
    Network net({LayerSpec::conv1d(4, 3), LayerSpec::activation(Act::Swish),
                 LayerSpec::maxpool1d(2), LayerSpec::conv1d(2, 3),
                 LayerSpec::maxpool1d(2), LayerSpec::flatten(), LayerSpec::dense(3)},
                {16, 1}, 55);
    CHECK(net.output_shape() == std::vector<int>({3}));
    Tensor x = Tensor::zeros({5, 16, 1});
    Network::Trace trace;
    Tensor y = net.forward(x, trace);
    CHECK(y.shape == std::vector<int>({5, 3}));
    Tensor dy = Tensor::zeros({5, 3});
    net.zero_grads();
    Tensor dx = net.backward(dy, trace);
    CHECK(dx.shape == x.shape);
}

TEST_CASE("network: forward-call counter") {
    Network net({LayerSpec::dense(1)}, {1}, 3);
    net.reset_forward_calls();
    Tensor x({1, 1}, {0.5});
    net.forward(x);
    net.forward(x);
    CHECK(net.forward_calls() == 2);
    net.reset_forward_calls();
    CHECK(net.forward_calls() == 0);
}
