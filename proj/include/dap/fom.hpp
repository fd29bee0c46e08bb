#pragma once

#include <string>
#include <vector>

#include "dap/common.hpp"

namespace dap::fom {

/// FitzHugh-Nagumo full-order model settings. The state is the concatenation
/// [v; w] on a uniform grid of grid_points_per_field nodes per field.
struct FhnConfig {
    int grid_points_per_field = 128;  // paper scale: 512
    double domain_length = 1.5;
    double b = 0.5;
    double c = 0.05;
    double gamma = 2.0;
    double dt_output = 0.01;
    double t_train_end = 12.0;  // T0
    double t_end = 20.0;        // T
    int substeps_per_output = 10;
    double forcing_scale = 1.0;  // multiplies the input current i_o(t)
    std::vector<double> epsilon_train;
    std::vector<double> epsilon_test;

    void validate() const;
    int state_dim() const { return 2 * grid_points_per_field; }
    int output_steps() const;    // number of output intervals over [0, T]
    int training_steps() const;  // number of output intervals over [0, T0]
};

struct SnapshotSet {
    std::vector<std::vector<double>> parameters;  // one vector per parameter sample
    std::vector<double> times;                    // uniform grid, t_0 = 0
    std::vector<Mat> states;                      // per parameter: [time x N]
    std::string field_layout;                     // e.g. "fhn:v,w" (first half v, second half w)

    double dt() const;
    void validate() const;
};

/// Synthetic discrete-time linear system z_{k+1} = A z_k, used as a KDMD oracle.
struct LinearSystemSpec {
    Mat a;
    Vec z0;
    int steps = 0;
};

/// Stimulus current i_o(t) = 50000 t^3 exp(-15 t).
double input_current(double t);

/// IMEX-Euler FHN solve; returns one row per output time on [0, T], row 0 = 0.
Mat fhn_simulate(const FhnConfig& cfg, double epsilon);

SnapshotSet assemble_snapshots(const FhnConfig& cfg, const std::vector<double>& parameters,
                               int threads = 1);

/// Rows j = A^j z0, j = 0..steps, by repeated multiplication.
Mat linear_simulate(const LinearSystemSpec& spec);

}  // namespace dap::fom
