#pragma once

#include <string>
#include <vector>

#include "dap/common.hpp"
#include "dap/fom.hpp"
#include "dap/kdmd.hpp"
#include "dap/nn.hpp"

namespace dap::pipeline {

/// Affine maps taking (mu, t) into [0,1]^2 plus an optional per-field state
/// transform (identity by default).
struct NormalizationStats {
    double mu_min = 0.0, mu_max = 1.0;
    double t_min = 0.0, t_max = 1.0;
    bool zscore_state = false;
    Vec state_shift;  // per field
    Vec state_scale;  // per field

    void validate() const;
    std::pair<double, double> normalize_input(double mu, double t) const;
    bool in_range(double mu, double t) const;
};

/// CAE architecture knobs; encoder/decoder layer lists are derived from them.
struct CaeSpec {
    std::vector<int> conv_filters{30, 25, 20};  // paper scale: {30, 25, 20, 15, 10}
    int kernel_size = 3;
    int pool_size = 2;
    std::vector<int> dense_units{32, 16};
    int latent_dim = 2;

    void validate(int input_len) const;
    std::vector<nn::LayerSpec> encoder_layers(int input_len) const;
    std::vector<nn::LayerSpec> decoder_layers(int input_len) const;
};

struct FfnnSpec {
    std::vector<int> hidden_units{8, 16, 32, 64, 128};

    std::vector<nn::LayerSpec> layers(int latent_dim) const;
};

/// The deployable surrogate: FFNN-decoder plus everything needed to map a
/// (mu, t) query to a full state.
struct ModelBundle {
    nn::Network encoder;
    nn::Network decoder;
    nn::Network ffnn;
    NormalizationStats norm;
    int latent_dim = 0;
    double dt = 0.0;
    double t_train_end = 0.0;
    double t_end = 0.0;
    std::vector<double> train_params;
    std::string field_layout;
};

struct AugmentedDataset {
    std::vector<double> sample_mu;
    std::vector<double> sample_t;
    std::vector<char> augmented;  // provenance flag per sample
    Mat targets;                  // [samples x N]

    int size() const { return static_cast<int>(sample_mu.size()); }
};

struct FieldMetrics {
    double eps_max = 0.0;
    double eps_mean = 0.0;
    double eps_mean_train = 0.0;   // restricted to t <= T0
    double eps_mean_extrap = 0.0;  // restricted to t > T0
    std::vector<double> eps_mu;    // per test parameter
};

struct Metrics {
    FieldMetrics combined;
    std::vector<std::string> field_names;
    std::vector<FieldMetrics> fields;
};

struct Query {
    double mu = 0.0;
    double t = 0.0;
};

NormalizationStats make_normalization(const std::vector<double>& train_params, double t_end);

/// Trains encoder+decoder on the reconstruction loss; returns the loss history.
nn::TrainResult pretrain_cae(const fom::SnapshotSet& snapshots, nn::Network& encoder,
                             nn::Network& decoder, const nn::TrainConfig& cfg);

std::vector<kdmd::LatentTrajectory> encode_dataset(const nn::Network& encoder,
                                                   const fom::SnapshotSet& snapshots);

/// Independent KDMD fit + rollout per parameter; blocks are [horizon x n].
std::vector<Mat> extrapolate_latent(const std::vector<kdmd::LatentTrajectory>& trajs,
                                    const kdmd::KernelSpec& kernel, int horizon,
                                    kdmd::RolloutMode mode = kdmd::RolloutMode::Recursive,
                                    int rank_cap = 0, int threads = 1);

/// Decoder applied row-wise to a latent block.
Mat decode_block(const nn::Network& decoder, const Mat& latent);

AugmentedDataset augment(const fom::SnapshotSet& snapshots,
                         const std::vector<Mat>& decoded_extrapolations);

struct JointTrainResult {
    nn::TrainResult ffnn_pretrain;
    nn::TrainResult joint;
    std::vector<double> cae_loss_history;   // joint phase, reconstruction term
    std::vector<double> ffnn_loss_history;  // joint phase, latent-matching term
};

/// FFNN pretraining (frozen CAE) followed by joint CAE-FFNN training on the
/// combined loss L_CAE + alpha * L_FFNN.
JointTrainResult train_joint(const AugmentedDataset& aug, nn::Network& encoder,
                             nn::Network& decoder, nn::Network& ffnn,
                             const NormalizationStats& norm, const nn::TrainConfig& ffnn_cfg,
                             const nn::TrainConfig& joint_cfg);

/// One FFNN + one decoder forward per query; pure in (bundle, query).
/// flags[i] is nonzero when query i falls outside the normalization ranges.
std::pair<Mat, std::vector<char>> predict_online(const ModelBundle& bundle,
                                                 const std::vector<Query>& queries);

/// Pointwise relative-error field for one parameter; same shape as the states.
Mat relative_error_field(const Mat& reference, const Mat& predicted);

/// Error indicators over a set of test parameters. predicted[i] must align
/// row-by-row with reference.states[i]. Field splits follow field_layout.
Metrics compute_metrics(const fom::SnapshotSet& reference, const std::vector<Mat>& predicted,
                        double t_train_end);

}  // namespace dap::pipeline
