#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "dap/common.hpp"

namespace dap::nn {

struct Tensor {
    std::vector<int> shape;    // shape[0] is the batch axis for batched tensors
    std::vector<double> data;  // row-major

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

    static Tensor zeros(std::vector<int> shape);
    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int batch() const { return shape.empty() ? 0 : shape[0]; }
    std::int64_t sample_size() const;
};

std::int64_t shape_product(const std::vector<int>& shape);

enum class Act { Swish, Linear };

struct LayerSpec {
    enum class Kind { Dense, Conv1d, MaxPool1d, Upsample1d, Flatten, Reshape, Activation };

    Kind kind = Kind::Dense;
    int units = 0;                  // dense
    int filters = 0;                // conv1d
    int kernel_size = 3;            // conv1d
    int stride = 1;                 // conv1d ("same" zero padding)
    int pool_size = 2;              // maxpool1d
    int factor = 2;                 // upsample1d
    std::vector<int> target_shape;  // reshape, per-sample
    Act act = Act::Swish;           // activation

    static LayerSpec dense(int units);
    static LayerSpec conv1d(int filters, int kernel_size = 3, int stride = 1);
    static LayerSpec maxpool1d(int pool_size = 2);
    static LayerSpec upsample1d(int factor = 2);
    static LayerSpec flatten();
    static LayerSpec reshape(std::vector<int> target_shape);
    static LayerSpec activation(Act act);
};

struct Param {
    Tensor value;
    Tensor grad;
};

struct LayerCache {
    Tensor x;              // layer input
    std::vector<int> arg;  // maxpool argmax positions
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual LayerSpec spec() const = 0;
    // Allocates parameters for the given per-sample input shape, returns the
    // per-sample output shape.
    virtual std::vector<int> init(const std::vector<int>& in_shape, std::mt19937_64& rng) = 0;
    virtual Tensor forward(const Tensor& x, LayerCache* cache) const = 0;
    // Accumulates parameter gradients and returns dL/dx.
    virtual Tensor backward(const Tensor& dy, const LayerCache& cache) = 0;
    virtual std::vector<Param*> params() = 0;
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec);

class Network {
public:
    Network() = default;
    Network(std::vector<LayerSpec> specs, std::vector<int> input_shape, std::uint64_t seed);
    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    struct Trace {
        std::vector<LayerCache> caches;
    };

    Tensor forward(const Tensor& x) const;
    Tensor forward(const Tensor& x, Trace& trace) const;
    Tensor backward(const Tensor& dy, const Trace& trace);

    void zero_grads();
    std::vector<Param*> params();

    const std::vector<LayerSpec>& specs() const { return specs_; }
    const std::vector<int>& input_shape() const { return input_shape_; }
    const std::vector<int>& output_shape() const { return output_shape_; }
    bool empty() const { return layers_.empty(); }

    // Parameter snapshot in deterministic (layer, tensor) order.
    std::vector<Tensor> parameter_tensors() const;
    void set_parameters(const std::vector<Tensor>& values);

    long forward_calls() const { return forward_calls_; }
    void reset_forward_calls() const { forward_calls_ = 0; }

private:
    void check_input(const Tensor& x) const;
    void rebuild_from(const Network& other);

    std::vector<LayerSpec> specs_;
    std::vector<int> input_shape_;
    std::vector<int> output_shape_;
    std::vector<std::unique_ptr<Layer>> layers_;
    mutable long forward_calls_ = 0;
};

/// loss = (1/B) sum_b ||pred_b - target_b||^2, grad = 2 (pred - target) / B.
std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
};

class Adam {
public:
    explicit Adam(std::vector<Param*> params, AdamConfig cfg = {});
    void step(double lr);
    long steps() const { return t_; }

private:
    std::vector<Param*> params_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
    AdamConfig cfg_;
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    double initial_lr = 1e-3;
    double lr_factor = 0.5;
    int lr_patience = 100;         // epochs without improvement before halving
    double min_lr = 5e-4;
    int early_stop_patience = 0;   // 0 disables early stopping
    double alpha = 0.1;            // combined-loss weight (joint phase)
    std::uint64_t seed = 0;
    bool stop_gradient_ffnn_to_encoder = false;

    void validate() const;
};

struct TrainResult {
    std::vector<double> loss_history;  // mean sample loss per epoch
    std::vector<double> lr_history;
    double best_loss = 0.0;
    int epochs_run = 0;
};

/// Computes the batch loss and leaves parameter gradients accumulated
/// (gradients are zeroed by the loop before each call).
using BatchStep = std::function<double(const std::vector<int>& batch_indices)>;

/// Seeded mini-batch loop: shuffle, Adam updates, plateau LR halving, early
/// stopping. Throws NonFiniteLossError with the epoch index on a bad loss.
TrainResult train_loop(int num_samples, const BatchStep& step, std::vector<Param*> params,
                       const TrainConfig& cfg);

/// Convenience supervised MSE training of a single network.
TrainResult train_supervised(Network& net, const Tensor& inputs, const Tensor& targets,
                             const TrainConfig& cfg);

Tensor gather_rows(const Tensor& batch, const std::vector<int>& indices);

/// Uniform in [0, 1) from the top 53 bits; stable across platforms.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace dap::nn
