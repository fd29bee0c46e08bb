#pragma once

#include <cstdint>
#include <string>

#include "dap/fom.hpp"
#include "dap/kdmd.hpp"
#include "dap/nn.hpp"
#include "dap/pipeline.hpp"

namespace dap::config {

/// Everything one end-to-end run needs. Defaults mirror the FHN experiment;
/// desk_scale() keeps runs within a CPU-time budget, paper_scale() restores
/// the published hyperparameters.
struct RunConfig {
    fom::FhnConfig fom;
    pipeline::CaeSpec cae;
    pipeline::FfnnSpec ffnn;
    kdmd::KernelSpec kernel;
    nn::TrainConfig cae_train;
    nn::TrainConfig ffnn_train;
    nn::TrainConfig joint_train;
    int time_stride = 1;  // training-grid subsampling factor (1 = full dt grid)
    int kdmd_stride = 0;  // latent sampling stride for the KDMD fit (0 = time_stride)
    int rank_cap = 0;     // 0 = tolerance rule only
    kdmd::RolloutMode rollout_mode = kdmd::RolloutMode::Recursive;
    std::uint64_t seed = 42;
    std::string output_dir = "out";

    // Stride actually used when sampling latent trajectories for the KDMD fit.
    int kdmd_sampling_stride() const { return kdmd_stride > 0 ? kdmd_stride : time_stride; }

    void validate() const;

    static RunConfig desk_scale();
    static RunConfig paper_scale();
};

/// Strict JSON round trip; unknown keys are hard errors.
RunConfig parse_config(const std::string& json_text);
std::string render_config(const RunConfig& cfg);

RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);

}  // namespace dap::config
