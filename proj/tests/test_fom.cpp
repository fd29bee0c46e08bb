#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "dap/fom.hpp"
#include "fhn_reference.hpp"

using namespace dap;

namespace {

fom::FhnConfig small_cfg() {
    fom::FhnConfig cfg;
    cfg.grid_points_per_field = 64;
    cfg.t_train_end = 1.0;
    cfg.t_end = 2.0;
    cfg.epsilon_train = {0.02};
    cfg.epsilon_test = {0.03};
    return cfg;
}

}  // namespace

TEST_CASE("input_current: pinned values") {
    CHECK(fom::input_current(0.0) == 0.0);
    CHECK(fom::input_current(0.2) == doctest::Approx(400.0 * std::exp(-3.0)).epsilon(1e-12));
    CHECK(fom::input_current(1.0) == doctest::Approx(50000.0 * std::exp(-15.0)).epsilon(1e-12));
}

TEST_CASE("fhn_simulate: zero initial condition and finite output") {
    fom::FhnConfig cfg = small_cfg();
    Mat traj = fom::fhn_simulate(cfg, 0.02);
    CHECK(traj.rows() == cfg.output_steps() + 1);
    CHECK(traj.cols() == cfg.state_dim());
    CHECK(traj.row(0).norm() == 0.0);
    CHECK(traj.allFinite());
    CHECK(traj.cwiseAbs().maxCoeff() > 1e-6);  // the stimulus actually excites the medium
}

TEST_CASE("fhn_simulate: zero-input degenerate fixed point") {
    fom::FhnConfig cfg = small_cfg();
    cfg.forcing_scale = 0.0;
    cfg.c = 0.0;
    Mat traj = fom::fhn_simulate(cfg, 0.02);
    CHECK(traj.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("fhn_simulate: deterministic") {
    fom::FhnConfig cfg = small_cfg();
    Mat a = fom::fhn_simulate(cfg, 0.025);
    Mat b = fom::fhn_simulate(cfg, 0.025);
    CHECK(a == b);
}

TEST_CASE("fhn_simulate: first-order self-convergence under step halving") {
    fom::FhnConfig cfg = small_cfg();
    cfg.t_end = 2.0;
    const double eps = 0.03;
    cfg.substeps_per_output = 10;
    Mat c1 = fom::fhn_simulate(cfg, eps);
    cfg.substeps_per_output = 20;
    Mat c2 = fom::fhn_simulate(cfg, eps);
    cfg.substeps_per_output = 40;
    Mat c4 = fom::fhn_simulate(cfg, eps);
    cfg.substeps_per_output = 80;
    Mat c8 = fom::fhn_simulate(cfg, eps);
    const double e1 = (c1 - c2).cwiseAbs().maxCoeff();
    const double e2 = (c2 - c4).cwiseAbs().maxCoeff();
    const double e3 = (c4 - c8).cwiseAbs().maxCoeff();
    CHECK(e1 / e2 >= 1.7);
    CHECK(e1 / e2 <= 2.3);
    CHECK(e2 / e3 >= 1.7);
    CHECK(e2 / e3 <= 2.3);
}

TEST_CASE("fhn_simulate: agrees with a fully implicit Newton reference") {
    fom::FhnConfig cfg;
    cfg.grid_points_per_field = 128;
    cfg.t_train_end = 12.0;
    cfg.t_end = 20.0;
    cfg.epsilon_train = {0.03};
    cfg.epsilon_test = {0.03};
    const double eps = 0.03;
    Mat imex = fom::fhn_simulate(cfg, eps);
    Mat reference = testref::implicit_fhn(cfg, eps, 4);
    const Eigen::Index last = imex.rows() - 1;
    const double scale = reference.row(last).cwiseAbs().maxCoeff();
    const double diff = (imex.row(last) - reference.row(last)).cwiseAbs().maxCoeff();
    CHECK(diff / scale <= 0.01);
    // Probe value v(x=0) at t = T.
    CHECK(imex(last, 0) == doctest::Approx(reference(last, 0)).epsilon(0.01));
}

TEST_CASE("assemble_snapshots: grid sizes match the configured horizon") {
    fom::FhnConfig cfg;
    cfg.grid_points_per_field = 16;
    cfg.epsilon_train = {0.02};
    cfg.epsilon_test = {0.03};
    fom::SnapshotSet set = fom::assemble_snapshots(cfg, {0.02});
    CHECK(set.times.size() == 2001);
    CHECK(cfg.training_steps() + 1 == 1201);
    CHECK(set.states.size() == 1);
    CHECK(set.parameters.size() == 1);
    CHECK(set.dt() == doctest::Approx(0.01).epsilon(1e-12));
    for (size_t j = 1; j < set.times.size(); ++j)
        CHECK(std::abs(set.times[j] - set.times[j - 1] - 0.01) <= 1e-12);
}

TEST_CASE("assemble_snapshots: [0,T0] slice equals a direct simulation to T0") {
    fom::FhnConfig cfg = small_cfg();
    fom::SnapshotSet set = fom::assemble_snapshots(cfg, {0.02, 0.04});
    fom::FhnConfig cut = cfg;
    cut.t_end = cfg.t_train_end;
    cut.t_train_end = cfg.t_train_end / 2;
    Mat direct = fom::fhn_simulate(cut, 0.04);
    CHECK(set.states[1].topRows(direct.rows()) == direct);
}

TEST_CASE("assemble_snapshots: multi-threaded result matches single-threaded") {
    fom::FhnConfig cfg = small_cfg();
    fom::SnapshotSet a = fom::assemble_snapshots(cfg, {0.02, 0.03, 0.04}, 1);
    fom::SnapshotSet b = fom::assemble_snapshots(cfg, {0.02, 0.03, 0.04}, 3);
    for (size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i] == b.states[i]);
}

TEST_CASE("linear_simulate: identity and scalar geometric") {
    fom::LinearSystemSpec spec;
    spec.a = Mat::Identity(2, 2);
    spec.z0 = Vec::Ones(2);
    spec.steps = 5;
    Mat traj = fom::linear_simulate(spec);
    for (int j = 0; j <= 5; ++j) CHECK((traj.row(j).transpose() - spec.z0).norm() == 0.0);

    spec.a = Mat::Constant(1, 1, 0.5);
    spec.z0 = Vec::Ones(1);
    traj = fom::linear_simulate(spec);
    for (int j = 0; j <= 5; ++j) CHECK(traj(j, 0) == doctest::Approx(std::pow(0.5, j)).epsilon(1e-14));
}

TEST_CASE("linear_simulate: spectral closed form oracle") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat a(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a(i, j) = u(rng);
    Eigen::EigenSolver<Mat> es(a);
    a *= 0.9 / es.eigenvalues().cwiseAbs().maxCoeff();

    fom::LinearSystemSpec spec;
    spec.a = a;
    spec.z0 = Vec::Ones(3);
    spec.steps = 10;
    Mat traj = fom::linear_simulate(spec);

    Eigen::EigenSolver<Mat> es2(a);
    CMat w = es2.eigenvectors();
    CVec lam = es2.eigenvalues();
    CVec coeff = w.partialPivLu().solve(spec.z0.cast<Complex>());
    CVec z10 = w * (lam.array().pow(10) * coeff.array()).matrix();
    CHECK((traj.row(10).transpose() - z10.real()).norm() <= 1e-10);
}

TEST_CASE("config validation") {
    fom::FhnConfig cfg = small_cfg();
    cfg.t_train_end = 3.0;  // T0 > T
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_cfg();
    cfg.grid_points_per_field = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_cfg();
    cfg.epsilon_train = {-0.1};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
