#pragma once

#include <optional>
#include <utility>

#include "dap/common.hpp"

namespace dap::kdmd {

struct KernelSpec {
    enum class Kind { Gaussian, Polynomial, Linear };

    Kind kind = Kind::Gaussian;
    // Gaussian: k(x,y) = exp(-gamma ||x-y||^2). A "shape parameter" s in the
    // RBF convention exp(-(s||x-y||)^2) corresponds to gamma = s^2.
    double gaussian_gamma = 100.0;
    // Polynomial: k(x,y) = (offset + x.y)^degree.
    int poly_degree = 2;
    double poly_offset = 1.0;

    void validate() const;
    static KernelSpec gaussian(double gamma);
    static KernelSpec polynomial(int degree, double offset);
    static KernelSpec linear();
};

struct LatentTrajectory {
    Mat states;          // [time x n], row j = z(t_start + j dt)
    double dt = 0.0;
    double t_start = 0.0;

    void validate() const;
};

/// Fitted kernel-DMD artifacts. Immutable after fit().
struct KoopmanModel {
    Mat z0;          // reference states, [m x n] (rows z_0 .. z_{m-1})
    KernelSpec kernel;
    Mat basis;       // L_r Sigma_r^{-1}, [m x r]
    Vec sigma;       // r singular values, strictly positive descending
    CMat w_hat;      // right eigenvectors of K_hat, [r x r]
    CMat xi;         // left eigenvectors (rows), xi * w_hat = I
    CVec lambda;     // Koopman eigenvalues
    CMat modes;      // Koopman modes, [n x r]
    CMat phi_map;    // basis * w_hat, [m x r]; phi(z) = kernel_row(z) * phi_map
    double fit_residual = 0.0;  // Frobenius residual of the rank-r least-squares fit
    double train_scale = 0.0;   // max |z| over training data, for divergence checks
    double dt = 0.0;

    int rank() const { return static_cast<int>(sigma.size()); }
    int dim() const { return static_cast<int>(z0.cols()); }
};

enum class RolloutMode { Recursive, Spectral };

double kernel_eval(const KernelSpec& kernel, const Vec& x, const Vec& y);

/// Gram matrices G00_ij = k(z_{i-1}, z_{j-1}) and G10_ij = k(z_i, z_{j-1}),
/// i, j = 1..m with m = #samples - 1.
std::pair<Mat, Mat> gram_matrices(const LatentTrajectory& traj, const KernelSpec& kernel);

KoopmanModel fit(const LatentTrajectory& traj, const KernelSpec& kernel,
                 std::optional<int> rank_cap = std::nullopt);

/// Koopman eigenfunction values [phi_1(z) .. phi_r(z)].
CVec eigenfunction_row(const KoopmanModel& model, const Vec& z);

/// One-step prediction Re(sum_l lambda_l v_l phi_l(z)) plus the discarded
/// imaginary magnitude (infinity norm) for diagnostics.
std::pair<Vec, double> predict_next(const KoopmanModel& model, const Vec& z);

/// Multi-step extrapolation, [steps x n]; row k-1 approximates F^k(z_init).
Mat rollout(const KoopmanModel& model, const Vec& z_init, int steps,
            RolloutMode mode = RolloutMode::Recursive);

}  // namespace dap::kdmd
