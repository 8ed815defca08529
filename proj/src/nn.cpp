#include "ncens/nn.hpp"

#include <algorithm>
#include <cmath>

#include "ncens/errors.hpp"
#include "ncens/rng.hpp"

namespace ncens {

namespace {

constexpr double kLogClamp = 1e-12;

double activate(double z, Activation act) {
    switch (act) {
        case Activation::Relu: return z > 0.0 ? z : 0.0;
        case Activation::Tanh: return std::tanh(z);
    }
    return 0.0;
}

// derivative expressed in terms of the pre-activation z
double activate_deriv(double z, Activation act) {
    switch (act) {
        case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
    }
    return 0.0;
}

}  // namespace

void SgdConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

MomentumState MomentumState::zeros_like(const NetworkParams& params) {
    MomentumState st;
    for (const auto& w : params.weights) st.weights.emplace_back(w.rows, w.cols);
    for (const auto& b : params.biases) st.biases.emplace_back(b.size(), 0.0);
    return st;
}

NetworkParams init_params(const std::vector<std::size_t>& layer_sizes,
                          Activation activation, std::uint64_t seed) {
    if (layer_sizes.size() < 2)
        throw ConfigError("layer_sizes needs at least input and output layers");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw ConfigError("layer sizes must be >= 1");

    NetworkParams params;
    params.layer_sizes = layer_sizes;
    params.activation = activation;
    Xoshiro256pp rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t fan_in = layer_sizes[l];
        const std::size_t fan_out = layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(fan_out, fan_in);
        for (auto& x : w.data) x = rng.uniform(-bound, bound);
        params.weights.push_back(std::move(w));
        params.biases.emplace_back(fan_out, 0.0);
    }
    return params;
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw NumericError("softmax of empty vector");
    for (double z : logits)
        if (!std::isfinite(z)) throw NumericError("softmax input must be finite");

    const double zmax = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - zmax);
        sum += out[k];
    }
    for (auto& p : out) p /= sum;
    return out;
}

double cross_entropy(std::span<const double> probs, std::size_t label) {
    if (label >= probs.size()) throw IndexError("cross_entropy label out of range");
    return -std::log(std::max(probs[label], kLogClamp));
}

ForwardCache forward(const NetworkParams& params, const Matrix& batch) {
    if (batch.cols != params.input_dim())
        throw ShapeError("forward: batch has " + std::to_string(batch.cols) +
                         " features, network expects " + std::to_string(params.input_dim()));

    ForwardCache cache;
    cache.acts.reserve(params.layer_count());
    cache.pre_acts.reserve(params.layer_count());
    cache.acts.push_back(batch);

    const std::size_t B = batch.rows;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        const Matrix& w = params.weights[l];
        const auto& b = params.biases[l];
        const Matrix& in = cache.acts.back();
        Matrix z(B, w.rows);
        for (std::size_t i = 0; i < B; ++i) {
            for (std::size_t j = 0; j < w.rows; ++j) {
                double acc = b[j];
                for (std::size_t k = 0; k < w.cols; ++k) acc += w(j, k) * in(i, k);
                z(i, j) = acc;
            }
        }
        cache.pre_acts.push_back(z);
        if (l + 1 < params.layer_count()) {
            Matrix a(B, w.rows);
            for (std::size_t i = 0; i < z.data.size(); ++i)
                a.data[i] = activate(z.data[i], params.activation);
            cache.acts.push_back(std::move(a));
        } else {
            cache.probs = Matrix(B, w.rows);
            for (std::size_t i = 0; i < B; ++i) {
                auto p = softmax(z.row(i));
                std::copy(p.begin(), p.end(), cache.probs.row(i).begin());
            }
        }
    }
    return cache;
}

Gradients backward(const NetworkParams& params, const ForwardCache& cache,
                   std::span<const std::size_t> labels,
                   const Matrix* extra_prob_grad) {
    const Matrix& probs = cache.probs;
    const std::size_t B = probs.rows;
    const std::size_t K = probs.cols;
    if (labels.size() != B) throw ShapeError("backward: labels length != batch rows");
    if (extra_prob_grad && !extra_prob_grad->same_shape(probs))
        throw ShapeError("backward: extra_prob_grad shape mismatch");
    for (std::size_t label : labels)
        if (label >= K) throw IndexError("backward: label out of range");

    // Output delta: softmax-CE term plus the softmax Jacobian applied to the
    // additive probability gradient.
    Matrix delta(B, K);
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t k = 0; k < K; ++k) delta(i, k) = probs(i, k) * inv_b;
        delta(i, labels[i]) -= inv_b;
        if (extra_prob_grad) {
            double dot = 0.0;
            for (std::size_t k = 0; k < K; ++k) dot += extra_prob_grad->operator()(i, k) * probs(i, k);
            for (std::size_t k = 0; k < K; ++k)
                delta(i, k) += probs(i, k) * (extra_prob_grad->operator()(i, k) - dot);
        }
    }

    Gradients grads;
    grads.weights.resize(params.layer_count());
    grads.biases.resize(params.layer_count());
    for (std::size_t li = params.layer_count(); li-- > 0;) {
        const Matrix& in = cache.acts[li];
        const Matrix& w = params.weights[li];
        Matrix gw(w.rows, w.cols);
        std::vector<double> gb(w.rows, 0.0);
        for (std::size_t i = 0; i < B; ++i) {
            for (std::size_t j = 0; j < w.rows; ++j) {
                const double d = delta(i, j);
                gb[j] += d;
                for (std::size_t k = 0; k < w.cols; ++k) gw(j, k) += d * in(i, k);
            }
        }
        grads.weights[li] = std::move(gw);
        grads.biases[li] = std::move(gb);

        if (li > 0) {
            Matrix prev(B, w.cols);
            const Matrix& z_prev = cache.pre_acts[li - 1];
            for (std::size_t i = 0; i < B; ++i) {
                for (std::size_t k = 0; k < w.cols; ++k) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < w.rows; ++j) acc += delta(i, j) * w(j, k);
                    prev(i, k) = acc * activate_deriv(z_prev(i, k), params.activation);
                }
            }
            delta = std::move(prev);
        }
    }
    return grads;
}

void sgd_step(NetworkParams& params, const Gradients& grads, MomentumState& state,
              const SgdConfig& cfg) {
    cfg.validate();
    if (grads.weights.size() != params.layer_count())
        throw ShapeError("sgd_step: gradient layer count mismatch");
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        if (!grads.weights[l].same_shape(params.weights[l]))
            throw ShapeError("sgd_step: weight gradient shape mismatch");
        auto& w = params.weights[l].data;
        auto& v = state.weights[l].data;
        const auto& g = grads.weights[l].data;
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = cfg.momentum * v[i] + g[i];
            w[i] -= cfg.learning_rate * v[i];
        }
        auto& b = params.biases[l];
        auto& vb = state.biases[l];
        const auto& gb = grads.biases[l];
        if (gb.size() != b.size()) throw ShapeError("sgd_step: bias gradient shape mismatch");
        for (std::size_t i = 0; i < b.size(); ++i) {
            vb[i] = cfg.momentum * vb[i] + gb[i];
            b[i] -= cfg.learning_rate * vb[i];
        }
    }
}

}  // namespace ncens
