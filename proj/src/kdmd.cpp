#include "dap/kdmd.hpp"

#include <cmath>
#include <string>

#include "dap/linalg.hpp"

namespace dap::kdmd {

void KernelSpec::validate() const {
    switch (kind) {
        case Kind::Gaussian:
            if (!(gaussian_gamma > 0.0)) throw ConfigError("gaussian_gamma must be positive");
            break;
        case Kind::Polynomial:
            if (poly_degree < 1) throw ConfigError("poly_degree must be >= 1");
            if (poly_offset < 0.0) throw ConfigError("poly_offset must be >= 0");
            break;
        case Kind::Linear:
            break;
    }
}

KernelSpec KernelSpec::gaussian(double gamma) {
    KernelSpec k;
    k.kind = Kind::Gaussian;
    k.gaussian_gamma = gamma;
    k.validate();
    return k;
}

KernelSpec KernelSpec::polynomial(int degree, double offset) {
    KernelSpec k;
    k.kind = Kind::Polynomial;
    k.poly_degree = degree;
    k.poly_offset = offset;
    k.validate();
    return k;
}

KernelSpec KernelSpec::linear() {
    KernelSpec k;
    k.kind = Kind::Linear;
    return k;
}

void LatentTrajectory::validate() const {
    if (states.cols() < 1) throw TooFewSamplesError("latent trajectory has no state dimension");
    if (states.rows() < 3)
        throw TooFewSamplesError("latent trajectory needs at least 3 time samples");
    if (!(dt > 0.0)) throw ConfigError("latent trajectory dt must be positive");
    if (!states.allFinite()) throw ConfigError("latent trajectory has non-finite entries");
}

double kernel_eval(const KernelSpec& kernel, const Vec& x, const Vec& y) {
    if (x.size() != y.size())
        throw DimensionMismatchError("kernel_eval: dim(x) != dim(y)");
    switch (kernel.kind) {
        case KernelSpec::Kind::Gaussian:
            return std::exp(-kernel.gaussian_gamma * (x - y).squaredNorm());
        case KernelSpec::Kind::Polynomial:
            return std::pow(kernel.poly_offset + x.dot(y), kernel.poly_degree);
        case KernelSpec::Kind::Linear:
            return x.dot(y);
    }
    throw ConfigError("kernel_eval: unknown kernel kind");
}

namespace {

/// Kernel row [k(z, z_0) .. k(z, z_{m-1})] against the reference states.
Vec kernel_row(const KernelSpec& kernel, const Mat& z0, const Vec& z) {
    const Eigen::Index m = z0.rows();
    Vec row(m);
    switch (kernel.kind) {
        case KernelSpec::Kind::Gaussian: {
            for (Eigen::Index j = 0; j < m; ++j)
                row(j) = std::exp(-kernel.gaussian_gamma *
                                  (z.transpose() - z0.row(j)).squaredNorm());
            break;
        }
        case KernelSpec::Kind::Polynomial: {
            Vec dots = z0 * z;
            for (Eigen::Index j = 0; j < m; ++j)
                row(j) = std::pow(kernel.poly_offset + dots(j), kernel.poly_degree);
            break;
        }
        case KernelSpec::Kind::Linear:
            row = z0 * z;
            break;
    }
    return row;
}

}  // namespace

std::pair<Mat, Mat> gram_matrices(const LatentTrajectory& traj, const KernelSpec& kernel) {
    traj.validate();
    kernel.validate();
    const Eigen::Index m = traj.states.rows() - 1;
    Mat g00(m, m), g10(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const Vec zj = traj.states.row(j).transpose();
        for (Eigen::Index i = j; i < m; ++i) {
            const double k = kernel_eval(kernel, traj.states.row(i).transpose(), zj);
            g00(i, j) = k;
            g00(j, i) = k;
        }
        for (Eigen::Index i = 0; i < m; ++i)
            g10(i, j) = kernel_eval(kernel, traj.states.row(i + 1).transpose(), zj);
    }
    return {std::move(g00), std::move(g10)};
}

KoopmanModel fit(const LatentTrajectory& traj, const KernelSpec& kernel,
                 std::optional<int> rank_cap) {
    auto [g00, g10] = gram_matrices(traj, kernel);
    const Eigen::Index m = g00.rows();
    const Eigen::Index n = traj.states.cols();

    linalg::SymEig gram_eig = linalg::sym_eig(g00);
    Vec sq = gram_eig.eigenvalues.cwiseMax(0.0);  // roundoff negatives clamped

    const double lead = sq(0);
    if (!(lead > 0.0))
        throw RankZeroError("kdmd::fit: Gram matrix is numerically zero");
    Eigen::Index r = 0;
    while (r < m && sq(r) > 1e-10 * lead) ++r;
    if (rank_cap && *rank_cap >= 1 && static_cast<Eigen::Index>(*rank_cap) < r)
        r = *rank_cap;
    if (r == 0) throw RankZeroError("kdmd::fit: no Gram eigenvalues above tolerance");

    KoopmanModel model;
    model.kernel = kernel;
    model.dt = traj.dt;
    model.z0 = traj.states.topRows(m);
    model.train_scale = traj.states.cwiseAbs().maxCoeff();

    // The tolerance rule can keep noise directions that make K_hat nearly
    // defective; if the eigenvector basis is numerically singular, drop the
    // weakest Gram direction and refit at the reduced rank.
    for (;;) {
        model.sigma = sq.head(r).cwiseSqrt();
        model.basis =
            gram_eig.eigenvectors.leftCols(r) * model.sigma.cwiseInverse().asDiagonal();

        // K_hat = (Sigma_r^{-1} L_r^T) (Psi_1 Psi_0^T) (L_r Sigma_r^{-1})
        Mat k_hat = model.basis.transpose() * g10 * model.basis;

        linalg::GenEig spec = linalg::gen_eig(k_hat);
        try {
            model.xi = linalg::left_eigvecs(spec.eigenvectors);
        } catch (const SingularEigenbasisError&) {
            if (r <= 1) throw;
            --r;
            continue;
        }
        model.lambda = spec.eigenvalues;
        model.w_hat = spec.eigenvectors;
        model.phi_map = model.basis * model.w_hat;
        break;
    }

    // v_l = (xi_l Sigma_r^{-1} L_r^T Z0')^T, assembled as columns of [n x r]
    model.modes = (model.xi * model.basis.transpose() * model.z0).transpose();

    // Least-squares residual of regressing the shifted states on the rank-r
    // eigenfunction features; KDMD's own prediction cannot beat this.
    CMat phi0 = g00 * model.phi_map;  // [m x r]
    Mat z1 = traj.states.bottomRows(m);
    CMat coeff = phi0.completeOrthogonalDecomposition().solve(z1.cast<Complex>());
    model.fit_residual = (phi0 * coeff - z1.cast<Complex>()).norm();

    return model;
}

CVec eigenfunction_row(const KoopmanModel& model, const Vec& z) {
    if (z.size() != model.z0.cols())
        throw DimensionMismatchError("eigenfunction_row: latent dimension mismatch");
    return model.phi_map.transpose() * kernel_row(model.kernel, model.z0, z);
}

std::pair<Vec, double> predict_next(const KoopmanModel& model, const Vec& z) {
    CVec phi = eigenfunction_row(model, z);
    CVec next = model.modes * model.lambda.cwiseProduct(phi);
    return {next.real(), next.imag().cwiseAbs().maxCoeff()};
}

Mat rollout(const KoopmanModel& model, const Vec& z_init, int steps, RolloutMode mode) {
    if (steps < 1) throw ConfigError("rollout: steps must be >= 1");
    if (z_init.size() != model.z0.cols())
        throw DimensionMismatchError("rollout: latent dimension mismatch");

    const double limit = 1e6 * std::max(model.train_scale, 1e-300);
    Mat out(steps, z_init.size());

    if (mode == RolloutMode::Recursive) {
        Vec z = z_init;
        for (int k = 0; k < steps; ++k) {
            z = predict_next(model, z).first;
            if (!z.allFinite() || z.cwiseAbs().maxCoeff() > limit)
                throw DivergenceError("rollout diverged at step " + std::to_string(k + 1));
            out.row(k) = z.transpose();
        }
    } else {
        CVec coeff = eigenfunction_row(model, z_init);
        for (int k = 0; k < steps; ++k) {
            coeff = coeff.cwiseProduct(model.lambda);
            Vec z = (model.modes * coeff).real();
            if (!z.allFinite() || z.cwiseAbs().maxCoeff() > limit)
                throw DivergenceError("rollout diverged at step " + std::to_string(k + 1));
            out.row(k) = z.transpose();
        }
    }
    return out;
}

}  // namespace dap::kdmd
