#include "dap/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Jacobi>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace dap::linalg {

namespace {

constexpr int kMaxJacobiSweeps = 100;

double off_diagonal_norm(const Mat& s) {
    double sum = 0.0;
    for (Eigen::Index q = 0; q < s.cols(); ++q)
        for (Eigen::Index p = 0; p < q; ++p) sum += s(p, q) * s(p, q);
    return std::sqrt(2.0 * sum);
}

}  // namespace

SymEig sym_eig(const Mat& a) {
    if (a.rows() != a.cols()) throw NonSquareError("sym_eig: matrix is not square");
    const Eigen::Index n = a.rows();
    const double amax = a.cwiseAbs().maxCoeff();
    const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * std::max(amax, 1e-300))
        throw NotSymmetricError("sym_eig: asymmetry " + std::to_string(asym));

    Mat s = 0.5 * (a + a.transpose());
    Mat v = Mat::Identity(n, n);
    const double fnorm = std::max(s.norm(), 1e-300);

    bool converged = false;
    for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
        if (off_diagonal_norm(s) <= 1e-15 * fnorm) {
            converged = true;
            break;
        }
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(s(p, q)) <= 1e-18 * fnorm) continue;
                Eigen::JacobiRotation<double> rot;
                rot.makeJacobi(s(p, p), s(p, q), s(q, q));
                s.applyOnTheLeft(p, q, rot.adjoint());
                s.applyOnTheRight(p, q, rot);
                v.applyOnTheRight(p, q, rot);
            }
        }
    }
    if (!converged && off_diagonal_norm(s) > 1e-12 * fnorm)
        throw NoConvergenceError("sym_eig: Jacobi sweep cap exceeded");

    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return s(i, i) > s(j, j); });

    SymEig out;
    out.eigenvalues.resize(n);
    out.eigenvectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.eigenvalues(k) = s(order[static_cast<size_t>(k)], order[static_cast<size_t>(k)]);
        out.eigenvectors.col(k) = v.col(order[static_cast<size_t>(k)]);
    }
    return out;
}

GenEig gen_eig(const Mat& a) {
    if (a.rows() != a.cols()) throw NonSquareError("gen_eig: matrix is not square");
    const Eigen::Index n = a.rows();

    Eigen::EigenSolver<Mat> solver(a, /*computeEigenvectors=*/true);
    if (solver.info() != Eigen::Success)
        throw NoConvergenceError("gen_eig: QR iteration failed to converge");

    CVec lambda = solver.eigenvalues();
    CMat w = solver.eigenvectors();

    // Deterministic order: descending |lambda|, conjugate pairs adjacent
    // (positive imaginary part first).
    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
        const double mi = std::abs(lambda(i)), mj = std::abs(lambda(j));
        if (mi != mj) return mi > mj;
        if (lambda(i).real() != lambda(j).real()) return lambda(i).real() > lambda(j).real();
        return lambda(i).imag() > lambda(j).imag();
    });

    GenEig out;
    out.eigenvalues.resize(n);
    out.eigenvectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.eigenvalues(k) = lambda(order[static_cast<size_t>(k)]);
        CVec col = w.col(order[static_cast<size_t>(k)]);
        out.eigenvectors.col(k) = col / col.norm();
    }

    for (Eigen::Index l = 0; l < n; ++l) {
        const double res =
            (a * out.eigenvectors.col(l) - out.eigenvalues(l) * out.eigenvectors.col(l)).norm();
        if (res > 1e-8 * std::max(a.norm(), 1e-300))
            throw NoConvergenceError("gen_eig: eigenpair residual " + std::to_string(res));
    }
    return out;
}

CMat left_eigvecs(const CMat& w) {
    if (w.rows() != w.cols()) throw NonSquareError("left_eigvecs: matrix is not square");

    Eigen::JacobiSVD<CMat> svd(w);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (!(smin > 0.0) || smax / smin > 1e12)
        throw SingularEigenbasisError("left_eigvecs: eigenvector matrix numerically singular");

    return w.partialPivLu().inverse();
}

}  // namespace dap::linalg
