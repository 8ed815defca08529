#include "ncens/ensemble.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <set>
#include <thread>

#include "ncens/calibration.hpp"
#include "ncens/errors.hpp"

namespace ncens {

namespace {

std::size_t worker_count(std::size_t jobs) {
    std::size_t cap = 0;  // 0 = auto
    if (const char* env = std::getenv("NC_ENSEMBLE_THREADS")) cap = std::strtoul(env, nullptr, 10);
    if (cap == 0) cap = std::thread::hardware_concurrency();
    if (cap == 0) cap = 1;
    return std::min(cap, jobs);
}

// Runs fn(i) for i in [0, jobs); each job touches only its own slot.
void parallel_members(std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = worker_count(jobs);
    if (workers <= 1) {
        for (std::size_t i = 0; i < jobs; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            for (std::size_t i = w; i < jobs; i += workers) fn(i);
        });
    }
    for (auto& t : threads) t.join();
}

}  // namespace

void EnsembleConfig::validate() const {
    if (member_count < 1) throw ConfigError("member_count must be >= 1");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (member_seeds.size() != member_count)
        throw ConfigError("member_seeds must have one seed per member");
    std::set<std::uint64_t> uniq(member_seeds.begin(), member_seeds.end());
    if (uniq.size() != member_seeds.size())
        throw ConfigError("member_seeds must be pairwise distinct");
    sgd.validate();
}

Matrix ensemble_mean(const std::vector<Matrix>& member_probs) {
    if (member_probs.empty()) throw ShapeError("ensemble_mean: no members");
    for (const auto& m : member_probs)
        if (!m.same_shape(member_probs.front()))
            throw ShapeError("ensemble_mean: member shapes differ");
    Matrix mean(member_probs.front().rows, member_probs.front().cols);
    for (const auto& m : member_probs)
        for (std::size_t i = 0; i < mean.data.size(); ++i) mean.data[i] += m.data[i];
    const double inv_m = 1.0 / static_cast<double>(member_probs.size());
    for (auto& x : mean.data) x *= inv_m;
    return mean;
}

double nc_div(std::span<const double> h_i,
              const std::vector<std::vector<double>>& member_probs, std::size_t i) {
    if (i >= member_probs.size()) throw ShapeError("nc_div: member index out of range");
    const std::size_t K = h_i.size();
    for (const auto& h : member_probs)
        if (h.size() != K) throw ShapeError("nc_div: member vector length mismatch");

    std::vector<double> mean(K, 0.0);
    for (const auto& h : member_probs)
        for (std::size_t k = 0; k < K; ++k) mean[k] += h[k];
    const double inv_m = 1.0 / static_cast<double>(member_probs.size());
    for (auto& x : mean) x *= inv_m;

    double dot = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        double others = 0.0;
        for (std::size_t j = 0; j < member_probs.size(); ++j)
            if (j != i) others += member_probs[j][k] - mean[k];
        dot += (h_i[k] - mean[k]) * others;
    }
    return dot;
}

std::vector<double> nc_div_grad(const std::vector<std::vector<double>>& member_probs,
                                std::size_t i) {
    if (i >= member_probs.size()) throw ShapeError("nc_div_grad: member index out of range");
    const std::size_t K = member_probs.front().size();
    for (const auto& h : member_probs)
        if (h.size() != K) throw ShapeError("nc_div_grad: member vector length mismatch");

    std::vector<double> mean(K, 0.0);
    for (const auto& h : member_probs)
        for (std::size_t k = 0; k < K; ++k) mean[k] += h[k];
    const double inv_m = 1.0 / static_cast<double>(member_probs.size());
    for (auto& x : mean) x *= inv_m;

    std::vector<double> grad(K, 0.0);
    for (std::size_t j = 0; j < member_probs.size(); ++j) {
        if (j == i) continue;
        for (std::size_t k = 0; k < K; ++k) grad[k] += member_probs[j][k] - mean[k];
    }
    return grad;
}

double member_loss(std::size_t label, std::span<const double> h_i,
                   const std::vector<std::vector<double>>& member_probs, std::size_t i,
                   double lambda) {
    return cross_entropy(h_i, label) + lambda * nc_div(h_i, member_probs, i);
}

std::vector<double> train_minibatch(Ensemble& ensemble, std::vector<MomentumState>& states,
                                    const Matrix& batch,
                                    std::span<const std::size_t> labels) {
    const std::size_t M = ensemble.members.size();
    const std::size_t B = batch.rows;
    const double lambda = ensemble.config.lambda;
    if (labels.size() != B) throw ShapeError("train_minibatch: labels length != batch rows");
    if (states.size() != M) throw ShapeError("train_minibatch: momentum state count mismatch");

    // Phase 1: all forwards complete before any update, so every member sees
    // the same frozen hbar.
    std::vector<ForwardCache> caches(M);
    parallel_members(M, [&](std::size_t i) { caches[i] = forward(ensemble.members[i], batch); });

    std::vector<Matrix> probs;
    probs.reserve(M);
    for (const auto& c : caches) probs.push_back(c.probs);
    const Matrix hbar = ensemble_mean(probs);
    const std::size_t K = hbar.cols;

    std::vector<double> losses(M, 0.0);
    parallel_members(M, [&](std::size_t i) {
        const Matrix& p_i = caches[i].probs;

        double loss = 0.0;
        Matrix extra;
        if (lambda != 0.0 && M > 1) extra = Matrix(B, K);
        for (std::size_t b = 0; b < B; ++b) {
            loss += cross_entropy(p_i.row(b), labels[b]);
            if (lambda != 0.0 && M > 1) {
                double div = 0.0;
                for (std::size_t k = 0; k < K; ++k) {
                    double others = 0.0;
                    for (std::size_t j = 0; j < M; ++j)
                        if (j != i) others += probs[j](b, k) - hbar(b, k);
                    extra(b, k) = lambda / static_cast<double>(B) * others;
                    div += (p_i(b, k) - hbar(b, k)) * others;
                }
                loss += lambda * div;
            }
        }
        losses[i] = loss / static_cast<double>(B);

        const Matrix* extra_ptr = (lambda != 0.0 && M > 1) ? &extra : nullptr;
        Gradients grads = backward(ensemble.members[i], caches[i], labels, extra_ptr);
        sgd_step(ensemble.members[i], grads, states[i], ensemble.config.sgd);
    });
    return losses;
}

Ensemble train(const Dataset& train_set, const EnsembleConfig& config,
               const std::vector<std::size_t>& layer_sizes, Activation activation,
               const Dataset* eval_set, std::uint64_t shuffle_seed, TrainingLog* log) {
    config.validate();
    if (layer_sizes.size() < 2) throw ConfigError("layer_sizes needs at least two entries");
    if (layer_sizes.front() != train_set.dim())
        throw ConfigError("layer_sizes input dim " + std::to_string(layer_sizes.front()) +
                          " != dataset dim " + std::to_string(train_set.dim()));
    if (layer_sizes.back() < train_set.class_count)
        throw ConfigError("output layer smaller than dataset class count");
    if (eval_set && eval_set->class_count > layer_sizes.back())
        throw ConfigError("eval set class count exceeds output layer");

    Ensemble ensemble;
    ensemble.config = config;
    for (std::size_t i = 0; i < config.member_count; ++i)
        ensemble.members.push_back(init_params(layer_sizes, activation, config.member_seeds[i]));

    std::vector<MomentumState> states;
    for (const auto& m : ensemble.members) states.push_back(MomentumState::zeros_like(m));

    for (std::size_t epoch = 0; epoch < config.sgd.epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t batch_count = 0;
        const auto slices = minibatches(train_set.size(), config.sgd.batch_size,
                                        shuffle_seed + epoch);
        for (const auto& slice : slices) {
            Matrix batch(slice.size(), train_set.dim());
            std::vector<std::size_t> labels(slice.size());
            for (std::size_t r = 0; r < slice.size(); ++r) {
                const auto src = train_set.features.row(slice[r]);
                std::copy(src.begin(), src.end(), batch.row(r).begin());
                labels[r] = train_set.labels[slice[r]];
            }
            const auto losses = train_minibatch(ensemble, states, batch, labels);
            double mean_loss = 0.0;
            for (double l : losses) mean_loss += l;
            epoch_loss += mean_loss / static_cast<double>(losses.size());
            ++batch_count;
        }

        if (log) {
            TrainingLogRow row;
            row.epoch = epoch;
            row.train_loss = batch_count ? epoch_loss / static_cast<double>(batch_count) : 0.0;
            if (eval_set) {
                const Matrix probs = predict(ensemble, eval_set->features);
                const auto report = evaluate(probs, eval_set->labels, 10,
                                             ensemble.class_count());
                row.eval_accuracy = report.accuracy;
                row.eval_ece = report.ece;
            }
            log->push_back(row);
        }
    }
    return ensemble;
}

Matrix predict(const Ensemble& ensemble, const Matrix& batch) {
    std::vector<Matrix> probs(ensemble.members.size());
    parallel_members(ensemble.members.size(), [&](std::size_t i) {
        probs[i] = forward(ensemble.members[i], batch).probs;
    });
    return ensemble_mean(probs);
}

}  // namespace ncens
