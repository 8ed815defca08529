#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ncens/matrix.hpp"

namespace ncens {

enum class Activation { Relu, Tanh };

// Weights and biases of one dense feed-forward classifier.
// weights[l] has shape layer_sizes[l+1] x layer_sizes[l].
struct NetworkParams {
    std::vector<std::size_t> layer_sizes;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    Activation activation = Activation::Relu;

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t class_count() const { return layer_sizes.back(); }
    std::size_t layer_count() const { return weights.size(); }
};

// Everything backward needs from a forward pass over one minibatch.
// acts[0] is the input batch; pre_acts[l] holds z_l; probs is the softmax
// of the final pre-activation.
struct ForwardCache {
    std::vector<Matrix> acts;
    std::vector<Matrix> pre_acts;
    Matrix probs;
};

struct SgdConfig {
    double learning_rate = 0.1;
    double momentum = 0.0;
    std::size_t epochs = 1;
    std::size_t batch_size = 32;

    void validate() const;
};

// Same shapes as NetworkParams; produced by backward, consumed by sgd_step.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

// Momentum buffers, zero-initialized to match a parameter set.
struct MomentumState {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    static MomentumState zeros_like(const NetworkParams& params);
};

// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
// Identical (layer_sizes, seed) give bit-identical parameters.
NetworkParams init_params(const std::vector<std::size_t>& layer_sizes,
                          Activation activation, std::uint64_t seed);

// Max-subtracted softmax; throws NumericError on non-finite input.
std::vector<double> softmax(std::span<const double> logits);

// -ln(max(probs[label], 1e-12))
double cross_entropy(std::span<const double> probs, std::size_t label);

ForwardCache forward(const NetworkParams& params, const Matrix& batch);

// Gradient of  mean-over-batch CE(probs, labels) + sum_b <extra_prob_grad[b], probs[b]>
// with respect to all parameters. extra_prob_grad may be null; callers fold
// any scaling (e.g. lambda / batch_size) into it before the call.
Gradients backward(const NetworkParams& params, const ForwardCache& cache,
                   std::span<const std::size_t> labels,
                   const Matrix* extra_prob_grad = nullptr);

// Classical momentum: v <- momentum*v + g; theta <- theta - lr*v.
void sgd_step(NetworkParams& params, const Gradients& grads, MomentumState& state,
              const SgdConfig& cfg);

}  // namespace ncens
