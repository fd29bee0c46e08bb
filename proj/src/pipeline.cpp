#include "dap/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

namespace dap::pipeline {

namespace {

nn::Tensor states_to_tensor(const Mat& states) {
    nn::Tensor t = nn::Tensor::zeros({static_cast<int>(states.rows()),
                                      static_cast<int>(states.cols())});
    for (Eigen::Index i = 0; i < states.rows(); ++i)
        for (Eigen::Index j = 0; j < states.cols(); ++j)
            t.data[static_cast<size_t>(i * states.cols() + j)] = states(i, j);
    return t;
}

Mat tensor_to_states(const nn::Tensor& t) {
    const int rows = t.batch();
    const auto cols = t.sample_size();
    Mat out(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            out(i, j) = t.data[static_cast<size_t>(i * cols + j)];
    return out;
}

/// Row-wise network application in fixed-size chunks; bounds activation memory.
Mat forward_rows(const nn::Network& net, const Mat& rows, int chunk = 256) {
    const auto out_dim = nn::shape_product(net.output_shape());
    Mat out(rows.rows(), out_dim);
    for (Eigen::Index start = 0; start < rows.rows(); start += chunk) {
        const Eigen::Index count = std::min<Eigen::Index>(chunk, rows.rows() - start);
        nn::Tensor x = states_to_tensor(rows.middleRows(start, count));
        nn::Tensor y = net.forward(x);
        out.middleRows(start, count) = tensor_to_states(y);
    }
    return out;
}

std::vector<std::pair<std::string, std::pair<int, int>>> field_ranges(
    const std::string& layout, int state_dim) {
    // "fhn:v,w" splits the state into equal halves v then w.
    if (layout.rfind("fhn:", 0) == 0) {
        const int half = state_dim / 2;
        return {{"v", {0, half}}, {"w", {half, state_dim - half}}};
    }
    return {};
}

}  // namespace

void NormalizationStats::validate() const {
    if (!(mu_max > mu_min)) throw ConfigError("normalization: degenerate mu range");
    if (!(t_max > t_min)) throw ConfigError("normalization: degenerate t range");
}

std::pair<double, double> NormalizationStats::normalize_input(double mu, double t) const {
    return {(mu - mu_min) / (mu_max - mu_min), (t - t_min) / (t_max - t_min)};
}

bool NormalizationStats::in_range(double mu, double t) const {
    return mu >= mu_min && mu <= mu_max && t >= t_min && t <= t_max;
}

NormalizationStats make_normalization(const std::vector<double>& train_params, double t_end) {
    if (train_params.empty()) throw ConfigError("make_normalization: no training parameters");
    NormalizationStats norm;
    norm.mu_min = *std::min_element(train_params.begin(), train_params.end());
    norm.mu_max = *std::max_element(train_params.begin(), train_params.end());
    norm.t_min = 0.0;
    norm.t_max = t_end;
    norm.validate();
    return norm;
}

void CaeSpec::validate(int input_len) const {
    if (latent_dim < 1) throw ConfigError("cae: latent_dim must be >= 1");
    if (conv_filters.empty()) throw ConfigError("cae: need at least one conv stage");
    if (dense_units.empty()) throw ConfigError("cae: need at least one dense layer");
    int len = input_len;
    for (size_t i = 0; i < conv_filters.size(); ++i) {
        if (conv_filters[i] < 1) throw ConfigError("cae: conv filters must be positive");
        if (len % pool_size != 0)
            throw ConfigError("cae: input length not divisible by pool stack");
        len /= pool_size;
    }
    if (dense_units.back() < latent_dim)
        throw ConfigError("cae: last dense layer narrower than latent space");
    if (dense_units.front() != len)
        throw ConfigError("cae: first dense width must equal the post-conv length " +
                          std::to_string(len) + " for the mirrored decoder");
}

std::vector<nn::LayerSpec> CaeSpec::encoder_layers(int input_len) const {
    validate(input_len);
    std::vector<nn::LayerSpec> layers;
    layers.push_back(nn::LayerSpec::reshape({input_len, 1}));
    for (int f : conv_filters) {
        layers.push_back(nn::LayerSpec::conv1d(f, kernel_size));
        layers.push_back(nn::LayerSpec::activation(nn::Act::Swish));
        layers.push_back(nn::LayerSpec::maxpool1d(pool_size));
    }
    layers.push_back(nn::LayerSpec::flatten());
    for (int u : dense_units) {
        layers.push_back(nn::LayerSpec::dense(u));
        layers.push_back(nn::LayerSpec::activation(nn::Act::Swish));
    }
    layers.push_back(nn::LayerSpec::dense(latent_dim));  // linear output
    return layers;
}

std::vector<nn::LayerSpec> CaeSpec::decoder_layers(int input_len) const {
    validate(input_len);
    int len = input_len;
    for (size_t i = 0; i < conv_filters.size(); ++i) len /= pool_size;

    std::vector<nn::LayerSpec> layers;
    for (auto it = dense_units.rbegin(); it != dense_units.rend(); ++it) {
        layers.push_back(nn::LayerSpec::dense(*it));
        layers.push_back(nn::LayerSpec::activation(nn::Act::Swish));
    }
    layers.push_back(nn::LayerSpec::reshape({len, 1}));
    for (auto it = conv_filters.rbegin(); it != conv_filters.rend(); ++it) {
        layers.push_back(nn::LayerSpec::conv1d(*it, kernel_size));
        layers.push_back(nn::LayerSpec::activation(nn::Act::Swish));
        layers.push_back(nn::LayerSpec::upsample1d(pool_size));
    }
    layers.push_back(nn::LayerSpec::conv1d(1, kernel_size));  // linear output
    layers.push_back(nn::LayerSpec::flatten());
    return layers;
}

std::vector<nn::LayerSpec> FfnnSpec::layers(int latent_dim) const {
    std::vector<nn::LayerSpec> out;
    for (int u : hidden_units) {
        out.push_back(nn::LayerSpec::dense(u));
        out.push_back(nn::LayerSpec::activation(nn::Act::Swish));
    }
    out.push_back(nn::LayerSpec::dense(latent_dim));
    return out;
}

nn::TrainResult pretrain_cae(const fom::SnapshotSet& snapshots, nn::Network& encoder,
                             nn::Network& decoder, const nn::TrainConfig& cfg) {
    snapshots.validate();
    std::vector<nn::Tensor> blocks;
    int total = 0;
    for (const Mat& traj : snapshots.states) total += static_cast<int>(traj.rows());
    const int dim = static_cast<int>(snapshots.states.front().cols());
    nn::Tensor all = nn::Tensor::zeros({total, dim});
    int row = 0;
    for (const Mat& traj : snapshots.states)
        for (Eigen::Index j = 0; j < traj.rows(); ++j, ++row)
            for (int k = 0; k < dim; ++k)
                all.data[static_cast<size_t>(row) * dim + static_cast<size_t>(k)] = traj(j, k);

    std::vector<nn::Param*> params = encoder.params();
    for (nn::Param* p : decoder.params()) params.push_back(p);

    nn::BatchStep step = [&](const std::vector<int>& batch) {
        nn::Tensor x = nn::gather_rows(all, batch);
        nn::Network::Trace enc_trace, dec_trace;
        nn::Tensor z = encoder.forward(x, enc_trace);
        nn::Tensor xr = decoder.forward(z, dec_trace);
        auto [loss, grad] = nn::mse_loss(xr, x);
        nn::Tensor dz = decoder.backward(grad, dec_trace);
        encoder.backward(dz, enc_trace);
        return loss;
    };
    return nn::train_loop(total, step, params, cfg);
}

std::vector<kdmd::LatentTrajectory> encode_dataset(const nn::Network& encoder,
                                                   const fom::SnapshotSet& snapshots) {
    snapshots.validate();
    std::vector<kdmd::LatentTrajectory> out;
    out.reserve(snapshots.states.size());
    for (const Mat& traj : snapshots.states) {
        kdmd::LatentTrajectory lt;
        lt.states = forward_rows(encoder, traj);
        lt.dt = snapshots.dt();
        lt.t_start = snapshots.times.front();
        out.push_back(std::move(lt));
    }
    return out;
}

std::vector<Mat> extrapolate_latent(const std::vector<kdmd::LatentTrajectory>& trajs,
                                    const kdmd::KernelSpec& kernel, int horizon,
                                    kdmd::RolloutMode mode, int rank_cap, int threads) {
    std::vector<Mat> blocks(trajs.size());
    auto run_one = [&](size_t i) {
        if (horizon == 0) {
            blocks[i] = Mat(0, trajs[i].states.cols());
            return;
        }
        std::optional<int> cap = rank_cap > 0 ? std::optional<int>(rank_cap) : std::nullopt;
        try {
            kdmd::KoopmanModel model = kdmd::fit(trajs[i], kernel, cap);
            const Vec z_last = trajs[i].states.row(trajs[i].states.rows() - 1).transpose();
            blocks[i] = kdmd::rollout(model, z_last, horizon, mode);
        } catch (const Error& e) {
            throw Error("kdmd extrapolation failed for parameter index " + std::to_string(i) +
                        ": " + e.what());
        }
    };
    if (threads > 1 && trajs.size() > 1) {
        std::vector<std::future<void>> jobs;
        for (size_t i = 0; i < trajs.size(); ++i)
            jobs.push_back(std::async(std::launch::async, run_one, i));
        for (auto& j : jobs) j.get();
    } else {
        for (size_t i = 0; i < trajs.size(); ++i) run_one(i);
    }
    return blocks;
}

Mat decode_block(const nn::Network& decoder, const Mat& latent) {
    if (latent.rows() == 0) return Mat(0, nn::shape_product(decoder.output_shape()));
    return forward_rows(decoder, latent);
}

AugmentedDataset augment(const fom::SnapshotSet& snapshots,
                         const std::vector<Mat>& decoded_extrapolations) {
    snapshots.validate();
    if (decoded_extrapolations.size() != snapshots.states.size())
        throw GridMismatchError("augment: extrapolation/parameter count mismatch");

    const double dt = snapshots.dt();
    const int n_orig = static_cast<int>(snapshots.times.size());
    const int dim = static_cast<int>(snapshots.states.front().cols());

    int total = 0;
    for (size_t i = 0; i < snapshots.states.size(); ++i) {
        if (decoded_extrapolations[i].rows() > 0 && decoded_extrapolations[i].cols() != dim)
            throw GridMismatchError("augment: extrapolated state dimension mismatch");
        total += n_orig + static_cast<int>(decoded_extrapolations[i].rows());
    }

    AugmentedDataset aug;
    aug.sample_mu.reserve(static_cast<size_t>(total));
    aug.sample_t.reserve(static_cast<size_t>(total));
    aug.augmented.reserve(static_cast<size_t>(total));
    aug.targets.resize(total, dim);

    int row = 0;
    const double t_last = snapshots.times.back();
    for (size_t i = 0; i < snapshots.states.size(); ++i) {
        const double mu = snapshots.parameters[i][0];
        for (int j = 0; j < n_orig; ++j, ++row) {
            aug.sample_mu.push_back(mu);
            aug.sample_t.push_back(snapshots.times[static_cast<size_t>(j)]);
            aug.augmented.push_back(0);
            aug.targets.row(row) = snapshots.states[i].row(j);
        }
        for (Eigen::Index j = 0; j < decoded_extrapolations[i].rows(); ++j, ++row) {
            aug.sample_mu.push_back(mu);
            aug.sample_t.push_back(t_last + static_cast<double>(j + 1) * dt);
            aug.augmented.push_back(1);
            aug.targets.row(row) = decoded_extrapolations[i].row(j);
        }
    }
    return aug;
}

JointTrainResult train_joint(const AugmentedDataset& aug, nn::Network& encoder,
                             nn::Network& decoder, nn::Network& ffnn,
                             const NormalizationStats& norm, const nn::TrainConfig& ffnn_cfg,
                             const nn::TrainConfig& joint_cfg) {
    if (aug.size() == 0) throw ConfigError("train_joint: empty dataset");
    norm.validate();

    const int total = aug.size();
    const int dim = static_cast<int>(aug.targets.cols());
    nn::Tensor states = states_to_tensor(aug.targets);
    nn::Tensor inputs = nn::Tensor::zeros({total, 2});
    for (int i = 0; i < total; ++i) {
        auto [mu_n, t_n] = norm.normalize_input(aug.sample_mu[static_cast<size_t>(i)],
                                                aug.sample_t[static_cast<size_t>(i)]);
        inputs.data[static_cast<size_t>(2 * i)] = mu_n;
        inputs.data[static_cast<size_t>(2 * i + 1)] = t_n;
    }
    (void)dim;

    JointTrainResult result;

    // FFNN pretraining against frozen-encoder latent targets.
    nn::Tensor latent_targets = states_to_tensor(forward_rows(encoder, aug.targets));
    result.ffnn_pretrain = nn::train_supervised(ffnn, inputs, latent_targets, ffnn_cfg);

    // Joint phase: L = L_CAE + alpha * L_FFNN, gradients through all nets.
    const double alpha = joint_cfg.alpha;
    std::vector<double> cae_hist, ffnn_hist;
    double cae_epoch = 0.0, ffnn_epoch = 0.0;
    int epoch_samples = 0;

    std::vector<nn::Param*> params = encoder.params();
    for (nn::Param* p : decoder.params()) params.push_back(p);
    for (nn::Param* p : ffnn.params()) params.push_back(p);

    nn::BatchStep step = [&](const std::vector<int>& batch) {
        const int bsz = static_cast<int>(batch.size());
        nn::Tensor x = nn::gather_rows(states, batch);
        nn::Tensor q = nn::gather_rows(inputs, batch);

        nn::Network::Trace enc_trace, dec_trace, ffnn_trace;
        nn::Tensor z = encoder.forward(x, enc_trace);
        nn::Tensor xr = decoder.forward(z, dec_trace);
        nn::Tensor zf = ffnn.forward(q, ffnn_trace);

        auto [cae_loss, cae_grad] = nn::mse_loss(xr, x);
        auto [ffnn_loss, ffnn_grad] = nn::mse_loss(zf, z);

        nn::Tensor dz = decoder.backward(cae_grad, dec_trace);
        if (alpha != 0.0) {
            nn::Tensor ffnn_grad_scaled = ffnn_grad;
            for (double& g : ffnn_grad_scaled.data) g *= alpha;
            ffnn.backward(ffnn_grad_scaled, ffnn_trace);
            if (!joint_cfg.stop_gradient_ffnn_to_encoder) {
                // d/dz of alpha * ||zf - z||^2 contributes -alpha * grad.
                for (size_t i = 0; i < dz.data.size(); ++i)
                    dz.data[i] -= ffnn_grad_scaled.data[i];
            }
        }
        encoder.backward(dz, enc_trace);

        cae_epoch += cae_loss * bsz;
        ffnn_epoch += ffnn_loss * bsz;
        epoch_samples += bsz;
        if (epoch_samples >= total) {
            cae_hist.push_back(cae_epoch / total);
            ffnn_hist.push_back(ffnn_epoch / total);
            cae_epoch = ffnn_epoch = 0.0;
            epoch_samples = 0;
        }
        return cae_loss + alpha * ffnn_loss;
    };
    result.joint = nn::train_loop(total, step, params, joint_cfg);
    result.cae_loss_history = std::move(cae_hist);
    result.ffnn_loss_history = std::move(ffnn_hist);
    return result;
}

std::pair<Mat, std::vector<char>> predict_online(const ModelBundle& bundle,
                                                 const std::vector<Query>& queries) {
    const auto out_dim = nn::shape_product(bundle.decoder.output_shape());
    Mat out(static_cast<Eigen::Index>(queries.size()), out_dim);
    std::vector<char> flags(queries.size(), 0);
    for (size_t i = 0; i < queries.size(); ++i) {
        const Query& q = queries[i];
        flags[i] = bundle.norm.in_range(q.mu, q.t) ? 0 : 1;
        auto [mu_n, t_n] = bundle.norm.normalize_input(q.mu, q.t);
        nn::Tensor in({1, 2}, {mu_n, t_n});
        nn::Tensor z = bundle.ffnn.forward(in);
        nn::Tensor u = bundle.decoder.forward(z);
        for (Eigen::Index k = 0; k < out_dim; ++k) out(static_cast<Eigen::Index>(i), k) =
            u.data[static_cast<size_t>(k)];
    }
    return {std::move(out), std::move(flags)};
}

Mat relative_error_field(const Mat& reference, const Mat& predicted) {
    if (reference.rows() != predicted.rows() || reference.cols() != predicted.cols())
        throw GridMismatchError("relative_error_field: shape mismatch");
    double denom_sq = 0.0;
    for (Eigen::Index j = 0; j < reference.rows(); ++j)
        denom_sq += reference.row(j).squaredNorm();
    const double denom = std::sqrt(denom_sq);
    if (denom < 1e-300) throw ZeroReferenceError("relative_error_field: zero reference");
    return (reference - predicted).cwiseAbs() / denom;
}

namespace {

FieldMetrics field_metrics(const fom::SnapshotSet& reference, const std::vector<Mat>& predicted,
                           int col0, int ncols, double t_train_end) {
    FieldMetrics fm;
    double sum = 0.0, sum_train = 0.0, sum_extrap = 0.0;
    std::int64_t count = 0, count_train = 0, count_extrap = 0;
    for (size_t i = 0; i < reference.states.size(); ++i) {
        const Mat ref = reference.states[i].middleCols(col0, ncols);
        const Mat pred = predicted[i].middleCols(col0, ncols);
        Mat eps = relative_error_field(ref, pred);
        fm.eps_max = std::max(fm.eps_max, eps.maxCoeff());

        double num_sq = 0.0, den_sq = 0.0;
        for (Eigen::Index j = 0; j < ref.rows(); ++j) {
            const double t = reference.times[static_cast<size_t>(j)];
            const double row_sum = eps.row(j).sum();
            sum += row_sum;
            count += ncols;
            if (t <= t_train_end + 1e-12) {
                sum_train += row_sum;
                count_train += ncols;
            } else {
                sum_extrap += row_sum;
                count_extrap += ncols;
            }
            num_sq += (ref.row(j) - pred.row(j)).squaredNorm();
            den_sq += ref.row(j).squaredNorm();
        }
        fm.eps_mu.push_back(std::sqrt(num_sq / den_sq));
    }
    fm.eps_mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
    fm.eps_mean_train = count_train > 0 ? sum_train / static_cast<double>(count_train) : 0.0;
    fm.eps_mean_extrap = count_extrap > 0 ? sum_extrap / static_cast<double>(count_extrap) : 0.0;
    return fm;
}

}  // namespace

Metrics compute_metrics(const fom::SnapshotSet& reference, const std::vector<Mat>& predicted,
                        double t_train_end) {
    reference.validate();
    if (predicted.size() != reference.states.size())
        throw GridMismatchError("compute_metrics: parameter count mismatch");
    for (size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i].rows() != reference.states[i].rows() ||
            predicted[i].cols() != reference.states[i].cols())
            throw GridMismatchError("compute_metrics: trajectory shape mismatch");

    const int dim = static_cast<int>(reference.states.front().cols());
    Metrics metrics;
    metrics.combined = field_metrics(reference, predicted, 0, dim, t_train_end);
    for (const auto& [name, range] : field_ranges(reference.field_layout, dim)) {
        metrics.field_names.push_back(name);
        metrics.fields.push_back(
            field_metrics(reference, predicted, range.first, range.second, t_train_end));
    }
    return metrics;
}

}  // namespace dap::pipeline
