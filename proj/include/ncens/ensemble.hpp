#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ncens/data.hpp"
#include "ncens/nn.hpp"

namespace ncens {

struct EnsembleConfig {
    std::size_t member_count = 1;
    double lambda = 0.0;
    SgdConfig sgd;
    std::vector<std::uint64_t> member_seeds;

    void validate() const;
};

struct Ensemble {
    EnsembleConfig config;
    std::vector<NetworkParams> members;

    std::size_t class_count() const { return members.front().class_count(); }
    std::size_t input_dim() const { return members.front().input_dim(); }
};

struct TrainingLogRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> eval_accuracy;
    std::optional<double> eval_ece;
};

using TrainingLog = std::vector<TrainingLogRow>;

// Entrywise mean of member probability matrices.
Matrix ensemble_mean(const std::vector<Matrix>& member_probs);

// div(h_i; h_{1:M}) = (h_i - hbar) . sum_{j != i} (h_j - hbar).
// Equals -|h_i - hbar|^2 by the zero-sum identity; computed by the definition.
double nc_div(std::span<const double> h_i, const std::vector<std::vector<double>>& member_probs,
              std::size_t i);

// Gradient of div in h_i with hbar frozen: sum_{j != i} (h_j - hbar).
std::vector<double> nc_div_grad(const std::vector<std::vector<double>>& member_probs,
                                std::size_t i);

// E_i = cross_entropy(h_i, label) + lambda * div(h_i; h_{1:M})
double member_loss(std::size_t label, std::span<const double> h_i,
                   const std::vector<std::vector<double>>& member_probs, std::size_t i,
                   double lambda);

// One Algorithm-style minibatch step: forward all members, freeze hbar, then
// per member backpropagate the batch-mean composite loss and apply one SGD
// update. Returns the per-member batch-mean E_i as seen before the update.
std::vector<double> train_minibatch(Ensemble& ensemble, std::vector<MomentumState>& states,
                                    const Matrix& batch,
                                    std::span<const std::size_t> labels);

// Full training loop: epochs of seeded-shuffled minibatch sweeps. Epoch e
// shuffles with seed shuffle_seed + e, shared by all members. When eval_set
// is given the log carries per-epoch eval accuracy and ECE (Q=10 bins).
Ensemble train(const Dataset& train_set, const EnsembleConfig& config,
               const std::vector<std::size_t>& layer_sizes, Activation activation,
               const Dataset* eval_set = nullptr, std::uint64_t shuffle_seed = 0,
               TrainingLog* log = nullptr);

// Mean of member forward probabilities.
Matrix predict(const Ensemble& ensemble, const Matrix& batch);

}  // namespace ncens
