#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dap/linalg.hpp"

using namespace dap;

namespace {

Mat random_mat(int n, int m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat a(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) a(i, j) = u(rng);
    return a;
}

}  // namespace

TEST_CASE("sym_eig: identity matrix") {
    auto [vals, vecs] = linalg::sym_eig(Mat::Identity(3, 3));
    for (int i = 0; i < 3; ++i) CHECK(vals(i) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((vecs.transpose() * vecs - Mat::Identity(3, 3)).norm() <= 1e-10);
}

TEST_CASE("sym_eig: analytic 2x2") {
    Mat a(2, 2);
    a << 2, 1, 1, 2;
    auto [vals, vecs] = linalg::sym_eig(a);
    CHECK(vals(0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(vals(1) == doctest::Approx(1.0).epsilon(1e-12));
    // Columns proportional to (1,1)/sqrt(2) and (1,-1)/sqrt(2).
    CHECK(std::abs(vecs(0, 0) * vecs(1, 0)) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(vecs(0, 1) * vecs(1, 1) == doctest::Approx(-0.5).epsilon(1e-10));
}

TEST_CASE("sym_eig: PSD reconstruction oracle") {
    Mat b = random_mat(5, 5, 7);
    Mat a = b * b.transpose();
    auto [vals, vecs] = linalg::sym_eig(a);
    for (int i = 0; i < 5; ++i) CHECK(vals(i) >= -1e-12);
    for (int i = 1; i < 5; ++i) CHECK(vals(i) <= vals(i - 1));
    const Mat rec = vecs * vals.asDiagonal() * vecs.transpose();
    CHECK((a - rec).norm() <= 1e-10 * a.norm());
    CHECK((vecs.transpose() * vecs - Mat::Identity(5, 5)).norm() <= 1e-10);
    CHECK((a * vecs - vecs * vals.asDiagonal()).norm() <= 1e-10 * a.norm());
}

TEST_CASE("sym_eig: rejects non-square and non-symmetric input") {
    CHECK_THROWS_AS(linalg::sym_eig(Mat::Zero(2, 3)), NonSquareError);
    Mat a(2, 2);
    a << 1, 2, 0, 1;
    CHECK_THROWS_AS(linalg::sym_eig(a), NotSymmetricError);
}

TEST_CASE("gen_eig: rotation matrix has +/- i eigenvalues") {
    Mat a(2, 2);
    a << 0, -1, 1, 0;
    auto [vals, vecs] = linalg::gen_eig(a);
    (void)vecs;
    std::vector<double> imags{vals(0).imag(), vals(1).imag()};
    std::sort(imags.begin(), imags.end());
    CHECK(imags[0] == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(imags[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(vals(0).real()) <= 1e-10);
    CHECK(std::abs(vals(1).real()) <= 1e-10);
}

TEST_CASE("gen_eig: diagonal matrix") {
    Mat a = Mat::Zero(2, 2);
    a(0, 0) = 0.9;
    a(1, 1) = 0.5;
    auto [vals, vecs] = linalg::gen_eig(a);
    CHECK(vals(0).real() == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(vals(1).real() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(vecs(0, 0)) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(vecs(1, 1)) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(vecs(1, 0)) <= 1e-10);
    CHECK(std::abs(vecs(0, 1)) <= 1e-10);
}

TEST_CASE("gen_eig: random residuals and conjugate closure") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Mat a = random_mat(6, 6, seed);
        auto [vals, vecs] = linalg::gen_eig(a);
        const CMat ac = a.cast<Complex>();
        for (int l = 0; l < 6; ++l) {
            CHECK((ac * vecs.col(l) - vals(l) * vecs.col(l)).norm() <= 1e-8 * a.norm());
            CHECK(vecs.col(l).norm() == doctest::Approx(1.0).epsilon(1e-10));
        }
        // Eigenvalue multiset closed under conjugation.
        for (int l = 0; l < 6; ++l) {
            double best = 1e300;
            for (int k = 0; k < 6; ++k) best = std::min(best, std::abs(vals(k) - std::conj(vals(l))));
            CHECK(best <= 1e-10);
        }
    }
}

TEST_CASE("left_eigvecs: identity and diagonal") {
    CMat eye = CMat::Identity(3, 3);
    CHECK((linalg::left_eigvecs(eye) - eye).norm() <= 1e-12);
    CMat w = CMat::Zero(2, 2);
    w(0, 0) = 2.0;
    w(1, 1) = 4.0;
    CMat xi = linalg::left_eigvecs(w);
    CHECK(std::abs(xi(0, 0) - 0.5) <= 1e-12);
    CHECK(std::abs(xi(1, 1) - 0.25) <= 1e-12);
}

TEST_CASE("left_eigvecs: biorthogonality on random well-conditioned basis") {
    Mat re = random_mat(5, 5, 11);
    Mat im = random_mat(5, 5, 12);
    CMat w = re.cast<Complex>() + Complex(0, 1) * im.cast<Complex>() +
             5.0 * CMat::Identity(5, 5);  // diagonally dominant: well conditioned
    CMat xi = linalg::left_eigvecs(w);
    CHECK((xi * w - CMat::Identity(5, 5)).norm() <= 1e-8);
    // Row l is biorthogonal to every column k != l.
    for (int l = 0; l < 5; ++l)
        for (int k = 0; k < 5; ++k) {
            const Complex v = (xi.row(l) * w.col(k))(0, 0);
            CHECK(std::abs(v - (l == k ? 1.0 : 0.0)) <= 1e-8);
        }
}

TEST_CASE("left_eigvecs: singular basis rejected") {
    CMat w = CMat::Zero(2, 2);
    w(0, 0) = 1.0;  // rank deficient
    CHECK_THROWS_AS(linalg::left_eigvecs(w), SingularEigenbasisError);
}
