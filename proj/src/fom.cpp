#include "dap/fom.hpp"

#include <cmath>
#include <future>
#include <vector>

namespace dap::fom {

namespace {

long round_to_steps(double span, double dt) {
    const double ratio = span / dt;
    const long n = std::lround(ratio);
    if (std::abs(ratio - static_cast<double>(n)) > 1e-9)
        throw ConfigError("time span is not an integer multiple of dt_output");
    return n;
}

/// Tridiagonal solve (Thomas). sub[i] multiplies x[i-1] in row i,
/// sup[i] multiplies x[i+1]. Overwrites rhs with the solution.
void solve_tridiagonal(const Vec& sub, const Vec& diag, const Vec& sup, Vec& rhs,
                       Vec& scratch) {
    const Eigen::Index n = diag.size();
    scratch(0) = sup(0) / diag(0);
    rhs(0) /= diag(0);
    for (Eigen::Index i = 1; i < n; ++i) {
        const double denom = diag(i) - sub(i) * scratch(i - 1);
        scratch(i) = sup(i) / denom;
        rhs(i) = (rhs(i) - sub(i) * rhs(i - 1)) / denom;
    }
    for (Eigen::Index i = n - 2; i >= 0; --i) rhs(i) -= scratch(i) * rhs(i + 1);
}

double cubic_reaction(double v) { return v * (v - 0.1) * (1.0 - v); }

}  // namespace

void FhnConfig::validate() const {
    if (grid_points_per_field < 8) throw ConfigError("grid_points_per_field must be >= 8");
    if (!(dt_output > 0.0)) throw ConfigError("dt_output must be positive");
    if (!(t_train_end > 0.0 && t_train_end < t_end))
        throw ConfigError("require 0 < T0 < T");
    if (substeps_per_output < 1) throw ConfigError("substeps_per_output must be >= 1");
    if (!(domain_length > 0.0)) throw ConfigError("domain_length must be positive");
    for (double e : epsilon_train)
        if (!(e > 0.0)) throw ConfigError("training epsilon values must be positive");
    for (double e : epsilon_test)
        if (!(e > 0.0)) throw ConfigError("test epsilon values must be positive");
    (void)output_steps();
    (void)training_steps();
}

int FhnConfig::output_steps() const {
    return static_cast<int>(round_to_steps(t_end, dt_output));
}

int FhnConfig::training_steps() const {
    return static_cast<int>(round_to_steps(t_train_end, dt_output));
}

double SnapshotSet::dt() const {
    if (times.size() < 2) throw GridMismatchError("snapshot set needs at least two times");
    return times[1] - times[0];
}

void SnapshotSet::validate() const {
    if (parameters.size() != states.size())
        throw GridMismatchError("parameter/state count mismatch");
    const double step = dt();
    for (size_t j = 1; j < times.size(); ++j) {
        if (std::abs(times[j] - times[j - 1] - step) > 1e-12 * std::max(1.0, std::abs(times[j])))
            throw GridMismatchError("time grid is not uniform");
    }
    for (const Mat& traj : states) {
        if (traj.rows() != static_cast<Eigen::Index>(times.size()))
            throw GridMismatchError("trajectory length does not match time grid");
        if (!traj.allFinite()) throw InstabilityError("snapshot set contains non-finite values");
    }
}

double input_current(double t) { return 50000.0 * t * t * t * std::exp(-15.0 * t); }

Mat fhn_simulate(const FhnConfig& cfg, double epsilon) {
    cfg.validate();
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");

    const int nx = cfg.grid_points_per_field;
    const double dx = cfg.domain_length / (nx - 1);
    const int n_out = cfg.output_steps();
    const double dtau = cfg.dt_output / cfg.substeps_per_output;

    // Implicit operator I - dtau * eps * D2 with Neumann ghost nodes:
    // left ghost v_{-1} = v_1 + 2 dx i_o(t), right ghost v_{nx} = v_{nx-2}.
    const double a = dtau * epsilon / (dx * dx);
    Vec diag = Vec::Constant(nx, 1.0 + 2.0 * a);
    Vec sub = Vec::Constant(nx, -a);
    Vec sup = Vec::Constant(nx, -a);
    sup(0) = -2.0 * a;
    sub(nx - 1) = -2.0 * a;

    Vec v = Vec::Zero(nx), w = Vec::Zero(nx);
    Vec rhs(nx), scratch(nx), wn(nx);
    Mat out(n_out + 1, 2 * nx);
    out.row(0).setZero();

    for (int k = 0; k < n_out; ++k) {
        for (int s = 0; s < cfg.substeps_per_output; ++s) {
            const double t_next =
                (static_cast<double>(k) * cfg.substeps_per_output + s + 1) * dtau;
            for (int i = 0; i < nx; ++i)
                rhs(i) = v(i) + dtau * (cubic_reaction(v(i)) - w(i) + cfg.c) / epsilon;
            rhs(0) += dtau * epsilon * 2.0 * cfg.forcing_scale * input_current(t_next) / dx;
            solve_tridiagonal(sub, diag, sup, rhs, scratch);
            wn = w + dtau * (cfg.b * v - cfg.gamma * w + Vec::Constant(nx, cfg.c));
            v.swap(rhs);
            w.swap(wn);
        }
        out.row(k + 1).head(nx) = v.transpose();
        out.row(k + 1).tail(nx) = w.transpose();
        if (!out.row(k + 1).allFinite())
            throw InstabilityError("fhn_simulate: non-finite state at t = " +
                                   std::to_string((k + 1) * cfg.dt_output));
    }
    return out;
}

SnapshotSet assemble_snapshots(const FhnConfig& cfg, const std::vector<double>& parameters,
                               int threads) {
    cfg.validate();
    if (parameters.empty()) throw ConfigError("assemble_snapshots: no parameters given");

    SnapshotSet set;
    set.field_layout = "fhn:v,w";
    const int n_out = cfg.output_steps();
    set.times.resize(static_cast<size_t>(n_out) + 1);
    for (int j = 0; j <= n_out; ++j) set.times[static_cast<size_t>(j)] = j * cfg.dt_output;

    set.parameters.reserve(parameters.size());
    for (double eps : parameters) set.parameters.push_back({eps});

    set.states.resize(parameters.size());
    if (threads > 1 && parameters.size() > 1) {
        std::vector<std::future<Mat>> jobs;
        jobs.reserve(parameters.size());
        for (double eps : parameters)
            jobs.push_back(std::async(std::launch::async,
                                      [&cfg, eps] { return fhn_simulate(cfg, eps); }));
        for (size_t i = 0; i < jobs.size(); ++i) set.states[i] = jobs[i].get();
    } else {
        for (size_t i = 0; i < parameters.size(); ++i)
            set.states[i] = fhn_simulate(cfg, parameters[i]);
    }
    set.validate();
    return set;
}

Mat linear_simulate(const LinearSystemSpec& spec) {
    if (spec.a.rows() != spec.a.cols()) throw NonSquareError("linear_simulate: A not square");
    if (spec.z0.size() != spec.a.rows())
        throw DimensionMismatchError("linear_simulate: z0 size mismatch");
    Mat out(spec.steps + 1, spec.z0.size());
    Vec z = spec.z0;
    out.row(0) = z.transpose();
    for (int j = 1; j <= spec.steps; ++j) {
        z = spec.a * z;
        out.row(j) = z.transpose();
    }
    return out;
}

}  // namespace dap::fom
