#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace dap {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Complex = std::complex<double>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define DAP_DEFINE_ERROR(Name) \
    struct Name : Error {      \
        using Error::Error;    \
    }

// linalg
DAP_DEFINE_ERROR(NonSquareError);
DAP_DEFINE_ERROR(NotSymmetricError);
DAP_DEFINE_ERROR(NoConvergenceError);
DAP_DEFINE_ERROR(DefectiveError);
DAP_DEFINE_ERROR(SingularEigenbasisError);
// fom
DAP_DEFINE_ERROR(InstabilityError);
// kdmd
DAP_DEFINE_ERROR(DimensionMismatchError);
DAP_DEFINE_ERROR(TooFewSamplesError);
DAP_DEFINE_ERROR(RankZeroError);
DAP_DEFINE_ERROR(DivergenceError);
// nn
DAP_DEFINE_ERROR(ShapeMismatchError);
DAP_DEFINE_ERROR(NonFiniteLossError);
// pipeline / io
DAP_DEFINE_ERROR(GridMismatchError);
DAP_DEFINE_ERROR(ZeroReferenceError);
DAP_DEFINE_ERROR(ConfigError);
DAP_DEFINE_ERROR(IoError);

#undef DAP_DEFINE_ERROR

}  // namespace dap
