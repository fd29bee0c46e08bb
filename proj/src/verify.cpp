#include "dap/verify.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>

#include "dap/fom.hpp"
#include "dap/kdmd.hpp"

namespace dap::verify {

namespace {

constexpr double kFdStep = 1e-6;

double rel_err(double analytic, double fd) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-8});
    return std::abs(analytic - fd) / denom;
}

nn::Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
    nn::Tensor t = nn::Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = scale * (2.0 * nn::uniform01(rng) - 1.0);
    return t;
}

/// Central finite difference of loss() with respect to every entry of the
/// given parameter tensors, compared against their accumulated gradients.
template <typename LossFn>
double fd_check_params(const std::vector<nn::Param*>& params, const LossFn& loss) {
    double worst = 0.0;
    for (nn::Param* p : params) {
        for (size_t k = 0; k < p->value.data.size(); ++k) {
            const double saved = p->value.data[k];
            const double h = kFdStep * std::max(1.0, std::abs(saved));
            p->value.data[k] = saved + h;
            const double lp = loss();
            p->value.data[k] = saved - h;
            const double lm = loss();
            p->value.data[k] = saved;
            worst = std::max(worst, rel_err(p->grad.data[k], (lp - lm) / (2.0 * h)));
        }
    }
    return worst;
}

Mat random_matrix(int rows, int cols, std::mt19937_64& rng) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = 2.0 * nn::uniform01(rng) - 1.0;
    return m;
}

std::vector<Complex> sorted_eigs(std::vector<Complex> v) {
    std::sort(v.begin(), v.end(), [](const Complex& a, const Complex& b) {
        if (std::abs(std::abs(a) - std::abs(b)) > 1e-14) return std::abs(a) > std::abs(b);
        if (std::abs(a.real() - b.real()) > 1e-14) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return v;
}

/// Greedy bipartite matching distance between two eigenvalue multisets.
double eig_set_distance(std::vector<Complex> a, std::vector<Complex> b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    std::vector<bool> used(b.size(), false);
    for (const Complex& x : a) {
        double best = std::numeric_limits<double>::infinity();
        size_t best_j = 0;
        for (size_t j = 0; j < b.size(); ++j) {
            if (used[j]) continue;
            const double d = std::abs(x - b[j]);
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
        used[best_j] = true;
        worst = std::max(worst, best);
    }
    return worst;
}

std::vector<Complex> dense_eigs(const Mat& a) {
    Eigen::EigenSolver<Mat> solver(a);
    std::vector<Complex> out(static_cast<size_t>(a.rows()));
    for (Eigen::Index i = 0; i < a.rows(); ++i) out[static_cast<size_t>(i)] = solver.eigenvalues()(i);
    return out;
}

OracleResult layer_gradient_oracle(const std::string& name,
                                   const std::vector<nn::LayerSpec>& specs,
                                   const std::vector<int>& input_shape, std::mt19937_64& rng) {
    OracleResult r;
    r.name = "gradient/" + name;
    r.tolerance = 1e-6;
    r.worst = std::numeric_limits<double>::infinity();
    // Central differences are invalid when a maxpool window has a near-tie
    // (the argmax flips under the probe step), so draw a few independent
    // configurations and keep the best run; a wrong gradient fails them all.
    for (int trial = 0; trial < 5 && r.worst > r.tolerance; ++trial) {
        nn::Network net(specs, input_shape, rng());
        std::vector<int> x_shape = input_shape;
        x_shape.insert(x_shape.begin(), 3);  // batch of 3
        nn::Tensor x = random_tensor(x_shape, rng);
        std::vector<int> t_shape = net.output_shape();
        t_shape.insert(t_shape.begin(), 3);
        nn::Tensor target = random_tensor(t_shape, rng);
        r.worst = std::min(r.worst, max_grad_rel_error(net, x, target));
    }
    r.passed = r.worst <= r.tolerance;
    return r;
}

}  // namespace

double max_grad_rel_error(nn::Network& net, const nn::Tensor& x, const nn::Tensor& target) {
    nn::Network::Trace trace;
    net.zero_grads();
    nn::Tensor y = net.forward(x, trace);
    auto [loss0, grad] = nn::mse_loss(y, target);
    (void)loss0;
    nn::Tensor dx = net.backward(grad, trace);

    auto loss = [&]() { return nn::mse_loss(net.forward(x), target).first; };
    double worst = fd_check_params(net.params(), loss);

    // Input gradient check.
    nn::Tensor x_pert = x;
    for (size_t k = 0; k < x_pert.data.size(); ++k) {
        const double saved = x_pert.data[k];
        const double h = kFdStep * std::max(1.0, std::abs(saved));
        x_pert.data[k] = saved + h;
        const double lp = nn::mse_loss(net.forward(x_pert), target).first;
        x_pert.data[k] = saved - h;
        const double lm = nn::mse_loss(net.forward(x_pert), target).first;
        x_pert.data[k] = saved;
        worst = std::max(worst, rel_err(dx.data[k], (lp - lm) / (2.0 * h)));
    }
    return worst;
}

double max_joint_grad_rel_error(nn::Network& encoder, nn::Network& decoder, nn::Network& ffnn,
                                const nn::Tensor& states, const nn::Tensor& queries,
                                double alpha) {
    auto loss = [&]() {
        nn::Tensor z = encoder.forward(states);
        const double cae = nn::mse_loss(decoder.forward(z), states).first;
        const double lat = nn::mse_loss(ffnn.forward(queries), z).first;
        return cae + alpha * lat;
    };

    encoder.zero_grads();
    decoder.zero_grads();
    ffnn.zero_grads();
    nn::Network::Trace enc_trace, dec_trace, ffnn_trace;
    nn::Tensor z = encoder.forward(states, enc_trace);
    nn::Tensor xr = decoder.forward(z, dec_trace);
    nn::Tensor zf = ffnn.forward(queries, ffnn_trace);
    auto [cae_loss, cae_grad] = nn::mse_loss(xr, states);
    auto [ffnn_loss, ffnn_grad] = nn::mse_loss(zf, z);
    (void)cae_loss;
    (void)ffnn_loss;
    nn::Tensor dz = decoder.backward(cae_grad, dec_trace);
    for (double& g : ffnn_grad.data) g *= alpha;
    ffnn.backward(ffnn_grad, ffnn_trace);
    for (size_t i = 0; i < dz.data.size(); ++i) dz.data[i] -= ffnn_grad.data[i];
    encoder.backward(dz, enc_trace);

    std::vector<nn::Param*> params = encoder.params();
    for (nn::Param* p : decoder.params()) params.push_back(p);
    for (nn::Param* p : ffnn.params()) params.push_back(p);
    return fd_check_params(params, loss);
}

std::vector<OracleResult> gradient_oracles(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<OracleResult> results;
    using LS = nn::LayerSpec;

    results.push_back(layer_gradient_oracle("dense", {LS::dense(5)}, {7}, rng));
    results.push_back(layer_gradient_oracle(
        "conv1d", {LS::reshape({12, 2}), LS::conv1d(3, 3), LS::flatten()}, {24}, rng));
    results.push_back(layer_gradient_oracle(
        "conv1d_stride2", {LS::reshape({12, 1}), LS::conv1d(2, 3, 2), LS::flatten()}, {12}, rng));
    results.push_back(layer_gradient_oracle(
        "maxpool1d", {LS::reshape({10, 2}), LS::maxpool1d(2), LS::flatten()}, {20}, rng));
    results.push_back(layer_gradient_oracle(
        "upsample1d", {LS::reshape({5, 2}), LS::upsample1d(2), LS::flatten()}, {10}, rng));
    results.push_back(
        layer_gradient_oracle("swish", {LS::dense(6), LS::activation(nn::Act::Swish)}, {4}, rng));
    results.push_back(layer_gradient_oracle(
        "flatten_reshape", {LS::reshape({3, 2}), LS::flatten(), LS::dense(4)}, {6}, rng));
    results.push_back(layer_gradient_oracle(
        "stacked_cae_path",
        {LS::reshape({8, 1}), LS::conv1d(3, 3), LS::activation(nn::Act::Swish), LS::maxpool1d(2),
         LS::flatten(), LS::dense(4), LS::activation(nn::Act::Swish), LS::dense(2)},
        {8}, rng));

    {
        OracleResult r;
        r.name = "gradient/combined_loss";
        r.tolerance = 1e-6;
        r.worst = std::numeric_limits<double>::infinity();
        for (int trial = 0; trial < 5 && r.worst > r.tolerance; ++trial) {
            nn::Network encoder(
                {LS::reshape({8, 1}), LS::conv1d(3, 3), LS::activation(nn::Act::Swish),
                 LS::maxpool1d(2), LS::flatten(), LS::dense(4), LS::activation(nn::Act::Swish),
                 LS::dense(2)},
                {8}, rng());
            nn::Network decoder({LS::dense(4), LS::activation(nn::Act::Swish), LS::reshape({4, 1}),
                                 LS::conv1d(2, 3), LS::activation(nn::Act::Swish),
                                 LS::upsample1d(2), LS::conv1d(1, 3), LS::flatten()},
                                {2}, rng());
            nn::Network ffnn({LS::dense(6), LS::activation(nn::Act::Swish), LS::dense(2)}, {2},
                             rng());
            nn::Tensor states = random_tensor({3, 8}, rng);
            nn::Tensor queries = random_tensor({3, 2}, rng);
            r.worst = std::min(
                r.worst, max_joint_grad_rel_error(encoder, decoder, ffnn, states, queries, 0.1));
        }
        r.passed = r.worst <= r.tolerance;
        results.push_back(r);
    }
    return results;
}

OracleResult kdmd_linear_oracle(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    OracleResult r;
    r.name = "kdmd/linear_exactness";
    r.tolerance = 1e-6;
    for (int instance = 0; instance < 20; ++instance) {
        const int dim = 2 + static_cast<int>(rng() % 3);  // 2..4
        Mat a = random_matrix(dim, dim, rng);
        double rho = 0.0;
        for (const Complex& l : dense_eigs(a)) rho = std::max(rho, std::abs(l));
        a *= (0.80 + 0.18 * nn::uniform01(rng)) / std::max(rho, 1e-12);

        fom::LinearSystemSpec sys;
        sys.a = a;
        sys.z0 = random_matrix(dim, 1, rng);
        sys.steps = 49 + 20;  // 50 training samples + extrapolation reference
        Mat full = fom::linear_simulate(sys);

        kdmd::LatentTrajectory traj;
        traj.states = full.topRows(50);
        traj.dt = 1.0;
        kdmd::KoopmanModel model = kdmd::fit(traj, kdmd::KernelSpec::linear());

        std::vector<Complex> fitted(model.lambda.data(), model.lambda.data() + model.lambda.size());
        const double eig_err = eig_set_distance(sorted_eigs(fitted), sorted_eigs(dense_eigs(a)));
        r.worst = std::max(r.worst, eig_err);

        const Vec z_last = traj.states.row(49).transpose();
        Mat pred = kdmd::rollout(model, z_last, 20);
        const Mat truth = full.bottomRows(20);
        const double scale = std::max(truth.cwiseAbs().maxCoeff(), 1e-12);
        r.worst = std::max(r.worst, (pred - truth).cwiseAbs().maxCoeff() / scale);
    }
    r.passed = r.worst <= r.tolerance;
    return r;
}

OracleResult kernel_consistency_oracle(std::uint64_t seed, bool inject_kernel_bug) {
    std::mt19937_64 rng(seed);
    OracleResult r;
    r.name = "kdmd/kernel_vs_explicit_edmd";
    r.tolerance = 1e-8;
    const double sqrt2 = std::sqrt(2.0);
    auto features = [&](double x1, double x2) {
        return Eigen::Matrix<double, 6, 1>{1.0,      sqrt2 * x1, sqrt2 * x2,
                                           x1 * x1, sqrt2 * x1 * x2, x2 * x2};
    };

    for (int instance = 0; instance < 10; ++instance) {
        const int samples = 25;  // m = 24 snapshot pairs
        Mat traj_states = random_matrix(samples, 2, rng);

        // Explicit EDMD over the monomial dictionary of (1 + x.y)^2.
        const int m = samples - 1;
        Mat psi0(m, 6), psi1(m, 6);
        for (int i = 0; i < m; ++i) {
            psi0.row(i) = features(traj_states(i, 0), traj_states(i, 1)).transpose();
            psi1.row(i) = features(traj_states(i + 1, 0), traj_states(i + 1, 1)).transpose();
        }
        const Mat k_edmd = psi0.completeOrthogonalDecomposition().solve(psi1);

        kdmd::LatentTrajectory traj;
        traj.states = traj_states;
        traj.dt = 1.0;
        kdmd::KernelSpec kernel = kdmd::KernelSpec::polynomial(2, 1.0);
        // Fault-injection fixture. Note a perturbed offset would NOT be
        // detectable here: it only rescales the feature dictionary, a
        // diagonal similarity transform that preserves the spectrum. A
        // degree change alters the feature space itself.
        if (inject_kernel_bug) kernel.poly_degree = 3;
        kdmd::KoopmanModel model = kdmd::fit(traj, kernel);

        std::vector<Complex> kdmd_eigs(model.lambda.data(),
                                       model.lambda.data() + model.lambda.size());
        std::vector<Complex> edmd_eigs;
        for (const Complex& l : dense_eigs(k_edmd))
            if (std::abs(l) > 1e-10) edmd_eigs.push_back(l);
        r.worst = std::max(
            r.worst, eig_set_distance(sorted_eigs(kdmd_eigs), sorted_eigs(edmd_eigs)));
    }
    r.passed = r.worst <= r.tolerance;
    if (inject_kernel_bug) r.detail = "kernel bug injected";
    return r;
}

std::vector<OracleResult> run_all(std::uint64_t seed, bool inject_kernel_bug) {
    std::vector<OracleResult> results = gradient_oracles(seed);
    results.push_back(kdmd_linear_oracle(seed + 1));
    results.push_back(kernel_consistency_oracle(seed + 2, inject_kernel_bug));
    return results;
}

}  // namespace dap::verify
