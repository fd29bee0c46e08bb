#include "dap/driver.hpp"

#include <cstdio>
#include <sstream>

namespace dap::driver {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<double> as_params(const std::vector<std::vector<double>>& nested) {
    std::vector<double> out;
    for (const auto& p : nested) out.push_back(p.front());
    return out;
}

}  // namespace

fom::SnapshotSet simulate_train(const config::RunConfig& cfg, int threads) {
    return fom::assemble_snapshots(cfg.fom, cfg.fom.epsilon_train, threads);
}

fom::SnapshotSet simulate_test(const config::RunConfig& cfg, int threads) {
    return fom::assemble_snapshots(cfg.fom, cfg.fom.epsilon_test, threads);
}

namespace {

fom::SnapshotSet strided_window(const config::RunConfig& cfg, const fom::SnapshotSet& full,
                                int stride) {
    full.validate();
    const int last = cfg.fom.training_steps();
    if (last >= static_cast<int>(full.times.size()))
        throw GridMismatchError("training_window: snapshot set shorter than [0, T0]");

    fom::SnapshotSet window;
    window.parameters = full.parameters;
    window.field_layout = full.field_layout;
    const int rows = last / stride + 1;
    for (int j = 0; j < rows; ++j)
        window.times.push_back(full.times[static_cast<size_t>(j * stride)]);
    for (const Mat& traj : full.states) {
        Mat sub(rows, traj.cols());
        for (int j = 0; j < rows; ++j) sub.row(j) = traj.row(j * stride);
        window.states.push_back(std::move(sub));
    }
    window.validate();
    return window;
}

}  // namespace

fom::SnapshotSet training_window(const config::RunConfig& cfg, const fom::SnapshotSet& full) {
    return strided_window(cfg, full, cfg.time_stride);
}

pipeline::ModelBundle train_offline(const config::RunConfig& cfg,
                                    const fom::SnapshotSet& train_full, TrainLogs* logs,
                                    int threads) {
    cfg.validate();
    fom::SnapshotSet window = training_window(cfg, train_full);
    const int state_dim = cfg.fom.state_dim();

    nn::Network encoder(cfg.cae.encoder_layers(state_dim), {state_dim}, cfg.seed + 10);
    nn::Network decoder(cfg.cae.decoder_layers(state_dim), {cfg.cae.latent_dim}, cfg.seed + 11);
    nn::Network ffnn(cfg.ffnn.layers(cfg.cae.latent_dim), {2}, cfg.seed + 12);

    nn::TrainConfig cae_cfg = cfg.cae_train;
    cae_cfg.seed = cfg.seed;
    nn::TrainResult cae_log = pipeline::pretrain_cae(window, encoder, decoder, cae_cfg);

    // KDMD sees the latent trajectory at a (possibly) finer stride than the
    // training rows: denser sampling improves the extrapolated targets without
    // inflating the joint-training set. The rollout is subsampled back onto the
    // training grid before decoding.
    const int kstride = cfg.kdmd_sampling_stride();
    const fom::SnapshotSet kwindow =
        kstride == cfg.time_stride ? window : strided_window(cfg, train_full, kstride);
    std::vector<kdmd::LatentTrajectory> trajs = pipeline::encode_dataset(encoder, kwindow);
    const int fine_horizon = (cfg.fom.output_steps() - cfg.fom.training_steps()) / kstride;
    std::vector<Mat> latent_blocks = pipeline::extrapolate_latent(
        trajs, cfg.kernel, fine_horizon, cfg.rollout_mode, cfg.rank_cap, threads);

    const int keep_every = cfg.time_stride / kstride;
    std::vector<Mat> decoded;
    decoded.reserve(latent_blocks.size());
    for (const Mat& block : latent_blocks) {
        Mat coarse(block.rows() / keep_every, block.cols());
        for (int j = 0; j < coarse.rows(); ++j)
            coarse.row(j) = block.row((j + 1) * keep_every - 1);
        decoded.push_back(pipeline::decode_block(decoder, coarse));
    }

    pipeline::AugmentedDataset aug = pipeline::augment(window, decoded);
    pipeline::NormalizationStats norm =
        pipeline::make_normalization(cfg.fom.epsilon_train, cfg.fom.t_end);

    nn::TrainConfig ffnn_cfg = cfg.ffnn_train;
    ffnn_cfg.seed = cfg.seed + 1;
    nn::TrainConfig joint_cfg = cfg.joint_train;
    joint_cfg.seed = cfg.seed + 2;
    pipeline::JointTrainResult joint_log =
        pipeline::train_joint(aug, encoder, decoder, ffnn, norm, ffnn_cfg, joint_cfg);

    if (logs) {
        logs->cae_pretrain = std::move(cae_log);
        logs->joint = std::move(joint_log);
    }

    pipeline::ModelBundle bundle;
    bundle.encoder = std::move(encoder);
    bundle.decoder = std::move(decoder);
    bundle.ffnn = std::move(ffnn);
    bundle.norm = norm;
    bundle.latent_dim = cfg.cae.latent_dim;
    bundle.dt = cfg.fom.dt_output;
    bundle.t_train_end = cfg.fom.t_train_end;
    bundle.t_end = cfg.fom.t_end;
    bundle.train_params = cfg.fom.epsilon_train;
    bundle.field_layout = window.field_layout;
    return bundle;
}

std::vector<Mat> predict_trajectories(const pipeline::ModelBundle& bundle,
                                      const fom::SnapshotSet& reference) {
    reference.validate();
    std::vector<Mat> out;
    out.reserve(reference.states.size());
    for (size_t i = 0; i < reference.states.size(); ++i) {
        std::vector<pipeline::Query> queries;
        queries.reserve(reference.times.size());
        for (double t : reference.times)
            queries.push_back({reference.parameters[i][0], t});
        out.push_back(pipeline::predict_online(bundle, queries).first);
    }
    return out;
}

std::string render_metrics_csv(const pipeline::Metrics& metrics,
                               const std::vector<double>& test_params) {
    std::ostringstream out;
    out << "record,field,mu,value\n";
    auto emit_field = [&](const std::string& name, const pipeline::FieldMetrics& fm) {
        out << "eps_max," << name << ",," << fmt(fm.eps_max) << "\n";
        out << "eps_mean," << name << ",," << fmt(fm.eps_mean) << "\n";
        out << "eps_mean_train," << name << ",," << fmt(fm.eps_mean_train) << "\n";
        out << "eps_mean_extrap," << name << ",," << fmt(fm.eps_mean_extrap) << "\n";
        for (size_t i = 0; i < fm.eps_mu.size(); ++i)
            out << "eps_mu," << name << "," << fmt(test_params[i]) << "," << fmt(fm.eps_mu[i])
                << "\n";
    };
    emit_field("combined", metrics.combined);
    for (size_t f = 0; f < metrics.fields.size(); ++f)
        emit_field(metrics.field_names[f], metrics.fields[f]);
    return out.str();
}

std::string render_loss_csv(const TrainLogs& logs) {
    std::ostringstream out;
    out << "phase,epoch,loss,lr\n";
    auto emit = [&](const std::string& phase, const nn::TrainResult& r) {
        for (size_t e = 0; e < r.loss_history.size(); ++e)
            out << phase << "," << (e + 1) << "," << fmt(r.loss_history[e]) << ","
                << fmt(r.lr_history[e]) << "\n";
    };
    emit("cae_pretrain", logs.cae_pretrain);
    emit("ffnn_pretrain", logs.joint.ffnn_pretrain);
    emit("joint", logs.joint.joint);
    return out.str();
}

}  // namespace dap::driver
