#pragma once

#include "dap/common.hpp"

namespace dap::linalg {

struct SymEig {
    Vec eigenvalues;   // sorted descending
    Mat eigenvectors;  // orthonormal columns, same order
};

struct GenEig {
    CVec eigenvalues;
    CMat eigenvectors;  // unit-norm columns
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// Input must be square and symmetric to 1e-10 * max|A|.
SymEig sym_eig(const Mat& a);

/// General (nonsymmetric) real eigendecomposition. Eigenvalues of a real
/// matrix come back closed under conjugation, pairs adjacent.
GenEig gen_eig(const Mat& a);

/// Rows xi_l with xi_l * w_l = 1 and xi_l * w_k = 0 for k != l, i.e. W^{-1}.
/// Throws SingularEigenbasisError when cond(W) exceeds 1e12.
CMat left_eigvecs(const CMat& w);

}  // namespace dap::linalg
