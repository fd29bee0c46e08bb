#pragma once

#include <string>
#include <vector>

#include "dap/config.hpp"
#include "dap/fom.hpp"
#include "dap/pipeline.hpp"

namespace dap::driver {

struct TrainLogs {
    nn::TrainResult cae_pretrain;
    pipeline::JointTrainResult joint;
};

/// FOM trajectories over the full horizon [0, T] for the training /
/// held-out parameter lists.
fom::SnapshotSet simulate_train(const config::RunConfig& cfg, int threads = 1);
fom::SnapshotSet simulate_test(const config::RunConfig& cfg, int threads = 1);

/// Restriction of a full-horizon snapshot set to [0, T0] on the strided grid.
fom::SnapshotSet training_window(const config::RunConfig& cfg, const fom::SnapshotSet& full);

/// Offline stage: pretrain CAE, encode, KDMD-extrapolate, decode, augment,
/// joint train. train_full must cover [0, T] for cfg.fom.epsilon_train.
pipeline::ModelBundle train_offline(const config::RunConfig& cfg,
                                    const fom::SnapshotSet& train_full,
                                    TrainLogs* logs = nullptr, int threads = 1);

/// Online surrogate evaluated on the reference grid, one trajectory matrix
/// per reference parameter.
std::vector<Mat> predict_trajectories(const pipeline::ModelBundle& bundle,
                                      const fom::SnapshotSet& reference);

/// Deterministic CSV renderings (written verbatim; used for run-to-run
/// comparisons).
std::string render_metrics_csv(const pipeline::Metrics& metrics,
                               const std::vector<double>& test_params);
std::string render_loss_csv(const TrainLogs& logs);

}  // namespace dap::driver
