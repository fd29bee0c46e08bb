#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dap/common.hpp"
#include "dap/nn.hpp"

namespace dap::verify {

struct OracleResult {
    std::string name;
    bool passed = false;
    double worst = 0.0;      // worst measured residual across instances
    double tolerance = 0.0;  // pinned pass threshold
    std::string detail;
};

/// Worst relative error between analytic and central finite-difference
/// gradients over every parameter of net plus the input, for the MSE loss
/// against target.
double max_grad_rel_error(nn::Network& net, const nn::Tensor& x, const nn::Tensor& target);

/// Same check for the combined loss L_CAE + alpha * L_FFNN over the
/// parameters of all three networks.
double max_joint_grad_rel_error(nn::Network& encoder, nn::Network& decoder, nn::Network& ffnn,
                                const nn::Tensor& states, const nn::Tensor& queries, double alpha);

/// One result per layer kind plus one for the combined loss.
std::vector<OracleResult> gradient_oracles(std::uint64_t seed);

/// 20 random stable linear systems: eigenvalue recovery and 20-step
/// extrapolation through a linear-kernel KDMD fit.
OracleResult kdmd_linear_oracle(std::uint64_t seed);

/// Polynomial-kernel KDMD vs explicit monomial-feature EDMD on 10 random
/// 2-D trajectories. inject_kernel_bug perturbs the kernel used by the KDMD
/// side (test fixture: the oracle must then fail).
OracleResult kernel_consistency_oracle(std::uint64_t seed, bool inject_kernel_bug = false);

std::vector<OracleResult> run_all(std::uint64_t seed = 1234, bool inject_kernel_bug = false);

}  // namespace dap::verify
