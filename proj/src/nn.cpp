#include "dap/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dap::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using MapCRM = Eigen::Map<const RowMat>;

double glorot_limit(std::int64_t fan_in, std::int64_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void fill_glorot(Tensor& t, std::int64_t fan_in, std::int64_t fan_out, std::mt19937_64& rng) {
    const double limit = glorot_limit(fan_in, fan_out);
    for (double& v : t.data) v = (2.0 * uniform01(rng) - 1.0) * limit;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

void require_rank2(const std::vector<int>& in, const char* who) {
    if (in.size() != 2)
        throw ShapeMismatchError(std::string(who) + ": expected (length, channels) input, got " +
                                 shape_str(in));
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(static_cast<size_t>(std::max<std::int64_t>(shape_product(t.shape), 0)), 0.0);
    return t;
}

std::int64_t Tensor::sample_size() const {
    if (shape.empty()) return 0;
    std::int64_t p = 1;
    for (size_t i = 1; i < shape.size(); ++i) p *= shape[i];
    return p;
}

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t p = 1;
    for (int d : shape) p *= d;
    return p;
}

LayerSpec LayerSpec::dense(int units) {
    LayerSpec s;
    s.kind = Kind::Dense;
    s.units = units;
    return s;
}
LayerSpec LayerSpec::conv1d(int filters, int kernel_size, int stride) {
    LayerSpec s;
    s.kind = Kind::Conv1d;
    s.filters = filters;
    s.kernel_size = kernel_size;
    s.stride = stride;
    return s;
}
LayerSpec LayerSpec::maxpool1d(int pool_size) {
    LayerSpec s;
    s.kind = Kind::MaxPool1d;
    s.pool_size = pool_size;
    return s;
}
LayerSpec LayerSpec::upsample1d(int factor) {
    LayerSpec s;
    s.kind = Kind::Upsample1d;
    s.factor = factor;
    return s;
}
LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = Kind::Flatten;
    return s;
}
LayerSpec LayerSpec::reshape(std::vector<int> target_shape) {
    LayerSpec s;
    s.kind = Kind::Reshape;
    s.target_shape = std::move(target_shape);
    return s;
}
LayerSpec LayerSpec::activation(Act act) {
    LayerSpec s;
    s.kind = Kind::Activation;
    s.act = act;
    return s;
}

namespace {

class DenseLayer final : public Layer {
public:
    explicit DenseLayer(const LayerSpec& spec) : spec_(spec) {
        if (spec_.units < 1) throw ConfigError("dense: units must be positive");
    }

    LayerSpec spec() const override { return spec_; }

    std::vector<int> init(const std::vector<int>& in, std::mt19937_64& rng) override {
        if (in.size() != 1)
            throw ShapeMismatchError("dense: expected flat input, got " + shape_str(in));
        in_ = in[0];
        w_.value = Tensor::zeros({in_, spec_.units});
        w_.grad = Tensor::zeros({in_, spec_.units});
        b_.value = Tensor::zeros({spec_.units});
        b_.grad = Tensor::zeros({spec_.units});
        fill_glorot(w_.value, in_, spec_.units, rng);
        return {spec_.units};
    }

    Tensor forward(const Tensor& x, LayerCache* cache) const override {
        const int bsz = x.batch();
        Tensor y = Tensor::zeros({bsz, spec_.units});
        MapCRM xm(x.data.data(), bsz, in_);
        MapCRM wm(w_.value.data.data(), in_, spec_.units);
        MapRM ym(y.data.data(), bsz, spec_.units);
        ym.noalias() = xm * wm;
        ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b_.value.data.data(), spec_.units);
        if (cache) cache->x = x;
        return y;
    }

    Tensor backward(const Tensor& dy, const LayerCache& cache) override {
        const int bsz = dy.batch();
        MapCRM dym(dy.data.data(), bsz, spec_.units);
        MapCRM xm(cache.x.data.data(), bsz, in_);
        MapCRM wm(w_.value.data.data(), in_, spec_.units);
        MapRM dwm(w_.grad.data.data(), in_, spec_.units);
        dwm.noalias() += xm.transpose() * dym;
        Eigen::Map<Eigen::RowVectorXd>(b_.grad.data.data(), spec_.units) += dym.colwise().sum();
        Tensor dx = Tensor::zeros({bsz, in_});
        MapRM(dx.data.data(), bsz, in_).noalias() = dym * wm.transpose();
        return dx;
    }

    std::vector<Param*> params() override { return {&w_, &b_}; }

private:
    LayerSpec spec_;
    int in_ = 0;
    Param w_, b_;
};

class Conv1dLayer final : public Layer {
public:
    explicit Conv1dLayer(const LayerSpec& spec) : spec_(spec) {
        if (spec_.filters < 1 || spec_.kernel_size < 1 || spec_.stride < 1)
            throw ConfigError("conv1d: sizes must be positive");
    }

    LayerSpec spec() const override { return spec_; }

    std::vector<int> init(const std::vector<int>& in, std::mt19937_64& rng) override {
        require_rank2(in, "conv1d");
        len_ = in[0];
        ch_ = in[1];
        out_len_ = (len_ + spec_.stride - 1) / spec_.stride;  // "same" padding
        const int pad_total =
            std::max((out_len_ - 1) * spec_.stride + spec_.kernel_size - len_, 0);
        pad_left_ = pad_total / 2;
        // Weights [kernel, in_ch, filters], matching im2col column order.
        w_.value = Tensor::zeros({spec_.kernel_size, ch_, spec_.filters});
        w_.grad = Tensor::zeros({spec_.kernel_size, ch_, spec_.filters});
        b_.value = Tensor::zeros({spec_.filters});
        b_.grad = Tensor::zeros({spec_.filters});
        fill_glorot(w_.value, static_cast<std::int64_t>(spec_.kernel_size) * ch_,
                    static_cast<std::int64_t>(spec_.kernel_size) * spec_.filters, rng);
        return {out_len_, spec_.filters};
    }

    Tensor forward(const Tensor& x, LayerCache* cache) const override {
        const int bsz = x.batch();
        const int cols = spec_.kernel_size * ch_;
        Tensor y = Tensor::zeros({bsz, out_len_, spec_.filters});
        MapCRM wm(w_.value.data.data(), cols, spec_.filters);
        Eigen::Map<const Eigen::RowVectorXd> bias(b_.value.data.data(), spec_.filters);
        const std::int64_t rows = static_cast<std::int64_t>(bsz) * out_len_;
        static thread_local std::vector<double> scratch;
        scratch.resize(static_cast<size_t>(rows * cols));
        MapRM patches(scratch.data(), rows, cols);
        for (int b = 0; b < bsz; ++b)
            im2col(x, b, patches.data() + static_cast<std::int64_t>(b) * out_len_ * cols);
        MapRM ym(y.data.data(), rows, spec_.filters);
        ym.noalias() = patches * wm;
        ym.rowwise() += bias;
        if (cache) cache->x = x;
        return y;
    }

    Tensor backward(const Tensor& dy, const LayerCache& cache) override {
        const int bsz = dy.batch();
        const int cols = spec_.kernel_size * ch_;
        MapCRM wm(w_.value.data.data(), cols, spec_.filters);
        MapRM dwm(w_.grad.data.data(), cols, spec_.filters);
        Eigen::Map<Eigen::RowVectorXd> dbias(b_.grad.data.data(), spec_.filters);
        Tensor dx = Tensor::zeros({bsz, len_, ch_});
        const std::int64_t rows = static_cast<std::int64_t>(bsz) * out_len_;
        MapCRM dym(dy.data.data(), rows, spec_.filters);
        static thread_local std::vector<double> scratch_fwd, scratch_bwd;
        scratch_fwd.resize(static_cast<size_t>(rows * cols));
        scratch_bwd.resize(static_cast<size_t>(rows * cols));
        MapRM patches(scratch_fwd.data(), rows, cols);
        for (int b = 0; b < bsz; ++b)
            im2col(cache.x, b, patches.data() + static_cast<std::int64_t>(b) * out_len_ * cols);
        dwm.noalias() += patches.transpose() * dym;
        dbias += dym.colwise().sum();
        MapRM dpatches(scratch_bwd.data(), rows, cols);
        dpatches.noalias() = dym * wm.transpose();
        for (int b = 0; b < bsz; ++b)
            col2im(dpatches.data() + static_cast<std::int64_t>(b) * out_len_ * cols, b, dx);
        return dx;
    }

    std::vector<Param*> params() override { return {&w_, &b_}; }

private:
    void im2col(const Tensor& x, int b, double* patches) const {
        const double* base = x.data.data() + static_cast<std::int64_t>(b) * len_ * ch_;
        for (int o = 0; o < out_len_; ++o) {
            for (int k = 0; k < spec_.kernel_size; ++k) {
                const int src = o * spec_.stride - pad_left_ + k;
                double* dst = patches + (static_cast<std::int64_t>(o) * spec_.kernel_size + k) * ch_;
                if (src < 0 || src >= len_) {
                    std::fill(dst, dst + ch_, 0.0);
                } else {
                    const double* row = base + static_cast<std::int64_t>(src) * ch_;
                    std::copy(row, row + ch_, dst);
                }
            }
        }
    }

    void col2im(const double* dpatches, int b, Tensor& dx) const {
        double* base = dx.data.data() + static_cast<std::int64_t>(b) * len_ * ch_;
        for (int o = 0; o < out_len_; ++o) {
            for (int k = 0; k < spec_.kernel_size; ++k) {
                const int src = o * spec_.stride - pad_left_ + k;
                if (src < 0 || src >= len_) continue;
                const double* g =
                    dpatches + (static_cast<std::int64_t>(o) * spec_.kernel_size + k) * ch_;
                double* row = base + static_cast<std::int64_t>(src) * ch_;
                for (int c = 0; c < ch_; ++c) row[c] += g[c];
            }
        }
    }

    LayerSpec spec_;
    int len_ = 0, ch_ = 0, out_len_ = 0, pad_left_ = 0;
    Param w_, b_;
};

class MaxPool1dLayer final : public Layer {
public:
    explicit MaxPool1dLayer(const LayerSpec& spec) : spec_(spec) {
        if (spec_.pool_size < 1) throw ConfigError("maxpool1d: pool size must be positive");
    }

    LayerSpec spec() const override { return spec_; }

    std::vector<int> init(const std::vector<int>& in, std::mt19937_64&) override {
        require_rank2(in, "maxpool1d");
        len_ = in[0];
        ch_ = in[1];
        out_len_ = len_ / spec_.pool_size;
        if (out_len_ < 1) throw ShapeMismatchError("maxpool1d: input shorter than pool size");
        return {out_len_, ch_};
    }

    Tensor forward(const Tensor& x, LayerCache* cache) const override {
        const int bsz = x.batch();
        Tensor y = Tensor::zeros({bsz, out_len_, ch_});
        std::vector<int> arg(static_cast<size_t>(bsz) * out_len_ * ch_);
        for (int b = 0; b < bsz; ++b) {
            const double* xs = x.data.data() + static_cast<std::int64_t>(b) * len_ * ch_;
            double* ys = y.data.data() + static_cast<std::int64_t>(b) * out_len_ * ch_;
            int* as = arg.data() + static_cast<std::int64_t>(b) * out_len_ * ch_;
            for (int o = 0; o < out_len_; ++o) {
                for (int c = 0; c < ch_; ++c) {
                    int best = o * spec_.pool_size;
                    double val = xs[static_cast<std::int64_t>(best) * ch_ + c];
                    for (int k = 1; k < spec_.pool_size; ++k) {
                        const int l = o * spec_.pool_size + k;
                        const double cand = xs[static_cast<std::int64_t>(l) * ch_ + c];
                        if (cand > val) {  // ties keep the lowest index
                            val = cand;
                            best = l;
                        }
                    }
                    ys[static_cast<std::int64_t>(o) * ch_ + c] = val;
                    as[static_cast<std::int64_t>(o) * ch_ + c] = best;
                }
            }
        }
        if (cache) {
            cache->x.shape = x.shape;  // only the shape is needed
            cache->x.data.clear();
            cache->arg = std::move(arg);
        }
        return y;
    }

    Tensor backward(const Tensor& dy, const LayerCache& cache) override {
        const int bsz = dy.batch();
        Tensor dx = Tensor::zeros({bsz, len_, ch_});
        for (int b = 0; b < bsz; ++b) {
            const double* gs = dy.data.data() + static_cast<std::int64_t>(b) * out_len_ * ch_;
            const int* as = cache.arg.data() + static_cast<std::int64_t>(b) * out_len_ * ch_;
            double* ds = dx.data.data() + static_cast<std::int64_t>(b) * len_ * ch_;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(out_len_) * ch_; ++i)
                ds[static_cast<std::int64_t>(as[i]) * ch_ + (i % ch_)] += gs[i];
        }
        return dx;
    }

    std::vector<Param*> params() override { return {}; }

private:
    LayerSpec spec_;
    int len_ = 0, ch_ = 0, out_len_ = 0;
};

class Upsample1dLayer final : public Layer {
public:
    explicit Upsample1dLayer(const LayerSpec& spec) : spec_(spec) {
        if (spec_.factor < 1) throw ConfigError("upsample1d: factor must be positive");
    }

    LayerSpec spec() const override { return spec_; }

    std::vector<int> init(const std::vector<int>& in, std::mt19937_64&) override {
        require_rank2(in, "upsample1d");
        len_ = in[0];
        ch_ = in[1];
        return {len_ * spec_.factor, ch_};
    }

    Tensor forward(const Tensor& x, LayerCache* cache) const override {
        const int bsz = x.batch();
        const int out_len = len_ * spec_.factor;
        Tensor y = Tensor::zeros({bsz, out_len, ch_});
        for (int b = 0; b < bsz; ++b) {
            const double* xs = x.data.data() + static_cast<std::int64_t>(b) * len_ * ch_;
            double* ys = y.data.data() + static_cast<std::int64_t>(b) * out_len * ch_;
            for (int l = 0; l < len_; ++l)
                for (int k = 0; k < spec_.factor; ++k)
                    std::copy(xs + static_cast<std::int64_t>(l) * ch_,
                              xs + static_cast<std::int64_t>(l + 1) * ch_,
                              ys + (static_cast<std::int64_t>(l) * spec_.factor + k) * ch_);
        }
        if (cache) {
            cache->x.shape = x.shape;
            cache->x.data.clear();
        }
        return y;
    }

    Tensor backward(const Tensor& dy, const LayerCache&) override {
        const int bsz = dy.batch();
        const int out_len = len_ * spec_.factor;
        Tensor dx = Tensor::zeros({bsz, len_, ch_});
        for (int b = 0; b < bsz; ++b) {
            const double* gs = dy.data.data() + static_cast<std::int64_t>(b) * out_len * ch_;
            double* ds = dx.data.data() + static_cast<std::int64_t>(b) * len_ * ch_;
            for (int l = 0; l < len_; ++l)
                for (int k = 0; k < spec_.factor; ++k)
                    for (int c = 0; c < ch_; ++c)
                        ds[static_cast<std::int64_t>(l) * ch_ + c] +=
                            gs[(static_cast<std::int64_t>(l) * spec_.factor + k) * ch_ + c];
        }
        return dx;
    }

    std::vector<Param*> params() override { return {}; }

private:
    LayerSpec spec_;
    int len_ = 0, ch_ = 0;
};

class ReshapeLayer final : public Layer {
public:
    // Flatten is reshape to {-1}.
    explicit ReshapeLayer(const LayerSpec& spec) : spec_(spec) {}

    LayerSpec spec() const override { return spec_; }

    std::vector<int> init(const std::vector<int>& in, std::mt19937_64&) override {
        in_shape_ = in;
        const std::int64_t n = shape_product(in);
        if (spec_.kind == LayerSpec::Kind::Flatten) {
            out_shape_ = {static_cast<int>(n)};
        } else {
            out_shape_ = spec_.target_shape;
            if (shape_product(out_shape_) != n)
                throw ShapeMismatchError("reshape: element count mismatch " + shape_str(in) +
                                         " -> " + shape_str(out_shape_));
        }
        return out_shape_;
    }

    Tensor forward(const Tensor& x, LayerCache* cache) const override {
        Tensor y = x;
        y.shape = out_shape_;
        y.shape.insert(y.shape.begin(), x.batch());
        if (cache) {
            cache->x.shape = x.shape;
            cache->x.data.clear();
        }
        return y;
    }

    Tensor backward(const Tensor& dy, const LayerCache& cache) override {
        Tensor dx = dy;
        dx.shape = cache.x.shape;
        return dx;
    }

    std::vector<Param*> params() override { return {}; }

private:
    LayerSpec spec_;
    std::vector<int> in_shape_, out_shape_;
};

class ActivationLayer final : public Layer {
public:
    explicit ActivationLayer(const LayerSpec& spec) : spec_(spec) {}

    LayerSpec spec() const override { return spec_; }

    std::vector<int> init(const std::vector<int>& in, std::mt19937_64&) override { return in; }

    Tensor forward(const Tensor& x, LayerCache* cache) const override {
        Tensor y = x;
        if (spec_.act == Act::Swish) {
            Eigen::Map<Eigen::ArrayXd> ym(y.data.data(), static_cast<Eigen::Index>(y.data.size()));
            ym = ym / (1.0 + (-ym).exp());
        }
        if (cache) cache->x = x;
        return y;
    }

    Tensor backward(const Tensor& dy, const LayerCache& cache) override {
        Tensor dx = dy;
        if (spec_.act == Act::Swish) {
            Eigen::Map<Eigen::ArrayXd> g(dx.data.data(), static_cast<Eigen::Index>(dx.data.size()));
            Eigen::Map<const Eigen::ArrayXd> xm(cache.x.data.data(),
                                                static_cast<Eigen::Index>(cache.x.data.size()));
            // swish'(x) = s + x s (1 - s) with s = sigmoid(x)
            Eigen::ArrayXd s = 1.0 / (1.0 + (-xm).exp());
            g *= s + xm * s * (1.0 - s);
        }
        return dx;
    }

    std::vector<Param*> params() override { return {}; }

private:
    LayerSpec spec_;
};

}  // namespace

std::unique_ptr<Layer> make_layer(const LayerSpec& spec) {
    switch (spec.kind) {
        case LayerSpec::Kind::Dense:
            return std::make_unique<DenseLayer>(spec);
        case LayerSpec::Kind::Conv1d:
            return std::make_unique<Conv1dLayer>(spec);
        case LayerSpec::Kind::MaxPool1d:
            return std::make_unique<MaxPool1dLayer>(spec);
        case LayerSpec::Kind::Upsample1d:
            return std::make_unique<Upsample1dLayer>(spec);
        case LayerSpec::Kind::Flatten:
        case LayerSpec::Kind::Reshape:
            return std::make_unique<ReshapeLayer>(spec);
        case LayerSpec::Kind::Activation:
            return std::make_unique<ActivationLayer>(spec);
    }
    throw ConfigError("make_layer: unknown layer kind");
}

Network::Network(std::vector<LayerSpec> specs, std::vector<int> input_shape, std::uint64_t seed)
    : specs_(std::move(specs)), input_shape_(std::move(input_shape)) {
    std::mt19937_64 rng(seed);
    std::vector<int> shape = input_shape_;
    layers_.reserve(specs_.size());
    for (const LayerSpec& spec : specs_) {
        layers_.push_back(make_layer(spec));
        shape = layers_.back()->init(shape, rng);
    }
    output_shape_ = shape;
}

Network::Network(const Network& other) { rebuild_from(other); }

Network& Network::operator=(const Network& other) {
    if (this != &other) rebuild_from(other);
    return *this;
}

void Network::rebuild_from(const Network& other) {
    specs_ = other.specs_;
    input_shape_ = other.input_shape_;
    output_shape_ = other.output_shape_;
    forward_calls_ = 0;
    layers_.clear();
    std::mt19937_64 rng(0);
    std::vector<int> shape = input_shape_;
    for (const LayerSpec& spec : specs_) {
        layers_.push_back(make_layer(spec));
        shape = layers_.back()->init(shape, rng);
    }
    set_parameters(other.parameter_tensors());
}

void Network::check_input(const Tensor& x) const {
    if (x.shape.size() != input_shape_.size() + 1 ||
        !std::equal(input_shape_.begin(), input_shape_.end(), x.shape.begin() + 1))
        throw ShapeMismatchError("network input shape mismatch");
}

Tensor Network::forward(const Tensor& x) const {
    check_input(x);
    ++forward_calls_;
    Tensor y = x;
    for (const auto& layer : layers_) y = layer->forward(y, nullptr);
    return y;
}

Tensor Network::forward(const Tensor& x, Trace& trace) const {
    check_input(x);
    ++forward_calls_;
    trace.caches.assign(layers_.size(), LayerCache{});
    Tensor y = x;
    for (size_t i = 0; i < layers_.size(); ++i) y = layers_[i]->forward(y, &trace.caches[i]);
    return y;
}

Tensor Network::backward(const Tensor& dy, const Trace& trace) {
    if (trace.caches.size() != layers_.size())
        throw ShapeMismatchError("network backward called without a matching forward trace");
    Tensor g = dy;
    for (size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, trace.caches[i]);
    return g;
}

void Network::zero_grads() {
    for (Param* p : params()) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

std::vector<Param*> Network::params() {
    std::vector<Param*> out;
    for (const auto& layer : layers_)
        for (Param* p : layer->params()) out.push_back(p);
    return out;
}

std::vector<Tensor> Network::parameter_tensors() const {
    std::vector<Tensor> out;
    for (const auto& layer : layers_)
        for (Param* p : const_cast<Layer&>(*layer).params()) out.push_back(p->value);
    return out;
}

void Network::set_parameters(const std::vector<Tensor>& values) {
    std::vector<Param*> ps = params();
    if (ps.size() != values.size())
        throw ShapeMismatchError("set_parameters: parameter count mismatch");
    for (size_t i = 0; i < ps.size(); ++i) {
        if (ps[i]->value.shape != values[i].shape)
            throw ShapeMismatchError("set_parameters: parameter shape mismatch");
        ps[i]->value = values[i];
    }
}

std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape != target.shape)
        throw ShapeMismatchError("mse_loss: shape mismatch");
    const int bsz = std::max(pred.batch(), 1);
    Tensor grad = pred;
    double loss = 0.0;
    for (size_t i = 0; i < grad.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        loss += d * d;
        grad.data[i] = 2.0 * d / bsz;
    }
    return {loss / bsz, std::move(grad)};
}

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Param* p : params_) {
        m_.emplace_back(p->value.data.size(), 0.0);
        v_.emplace_back(p->value.data.size(), 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        double* w = params_[i]->value.data.data();
        const double* g = params_[i]->grad.data.data();
        double* m = m_[i].data();
        double* v = v_[i].data();
        const size_t n = m_[i].size();
        for (size_t j = 0; j < n; ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps_hat);
        }
    }
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw ConfigError("lr_factor must be in (0,1)");
    if (!(min_lr <= initial_lr)) throw ConfigError("min_lr must not exceed initial_lr");
    if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be positive");
    if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
}

TrainResult train_loop(int num_samples, const BatchStep& step, std::vector<Param*> params,
                       const TrainConfig& cfg) {
    cfg.validate();
    if (num_samples < 1) throw ConfigError("train_loop: empty dataset");

    Adam adam(params);
    std::mt19937_64 rng(cfg.seed);
    std::vector<int> order(static_cast<size_t>(num_samples));
    for (int i = 0; i < num_samples; ++i) order[static_cast<size_t>(i)] = i;

    TrainResult result;
    double lr = cfg.initial_lr;
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    int since_lr_drop = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with an explicit modulo draw, reproducible across stdlibs.
        for (int i = num_samples - 1; i > 0; --i) {
            const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }

        double epoch_loss = 0.0;
        for (int start = 0; start < num_samples; start += cfg.batch_size) {
            const int count = std::min(cfg.batch_size, num_samples - start);
            std::vector<int> batch(order.begin() + start, order.begin() + start + count);
            for (Param* p : params) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
            const double loss = step(batch);
            if (!std::isfinite(loss))
                throw NonFiniteLossError("non-finite loss at epoch " + std::to_string(epoch));
            epoch_loss += loss * count;
            adam.step(lr);
        }
        epoch_loss /= num_samples;
        result.loss_history.push_back(epoch_loss);
        result.lr_history.push_back(lr);

        if (epoch_loss < best) {
            best = epoch_loss;
            since_best = 0;
            since_lr_drop = 0;
        } else {
            ++since_best;
            ++since_lr_drop;
        }
        if (cfg.lr_patience > 0 && since_lr_drop >= cfg.lr_patience && lr > cfg.min_lr) {
            lr = std::max(lr * cfg.lr_factor, cfg.min_lr);
            since_lr_drop = 0;
        }
        if (cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience) {
            result.epochs_run = epoch + 1;
            result.best_loss = best;
            return result;
        }
    }
    result.epochs_run = cfg.epochs;
    result.best_loss = best;
    return result;
}

TrainResult train_supervised(Network& net, const Tensor& inputs, const Tensor& targets,
                             const TrainConfig& cfg) {
    if (inputs.batch() != targets.batch())
        throw ShapeMismatchError("train_supervised: input/target batch mismatch");
    BatchStep step = [&](const std::vector<int>& batch) {
        Tensor x = gather_rows(inputs, batch);
        Tensor t = gather_rows(targets, batch);
        Network::Trace trace;
        Tensor y = net.forward(x, trace);
        auto [loss, grad] = mse_loss(y, t);
        net.backward(grad, trace);
        return loss;
    };
    return train_loop(inputs.batch(), step, net.params(), cfg);
}

Tensor gather_rows(const Tensor& batch, const std::vector<int>& indices) {
    const std::int64_t ss = batch.sample_size();
    Tensor out;
    out.shape = batch.shape;
    out.shape[0] = static_cast<int>(indices.size());
    out.data.resize(indices.size() * static_cast<size_t>(ss));
    for (size_t i = 0; i < indices.size(); ++i)
        std::copy(batch.data.begin() + indices[i] * ss, batch.data.begin() + (indices[i] + 1) * ss,
                  out.data.begin() + static_cast<std::int64_t>(i) * ss);
    return out;
}

}  // namespace dap::nn
