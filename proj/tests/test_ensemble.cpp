#include <cmath>
#include <cstring>

#include <doctest.h>

#include "fd_oracle.hpp"
#include "ncens/data.hpp"
#include "ncens/ensemble.hpp"
#include "ncens/errors.hpp"
#include "ncens/rng.hpp"

using namespace ncens;

namespace {

std::vector<double> random_prob_vector(std::size_t k, Xoshiro256pp& rng) {
    std::vector<double> z(k);
    for (auto& v : z) v = rng.uniform(-3.0, 3.0);
    return softmax(z);
}

std::vector<std::vector<double>> random_prob_ensemble(std::size_t m, std::size_t k,
                                                      Xoshiro256pp& rng) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < m; ++i) out.push_back(random_prob_vector(k, rng));
    return out;
}

bool params_equal(const NetworkParams& a, const NetworkParams& b) {
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        if (std::memcmp(a.weights[l].data.data(), b.weights[l].data.data(),
                        a.weights[l].data.size() * sizeof(double)) != 0)
            return false;
        if (std::memcmp(a.biases[l].data(), b.biases[l].data(),
                        a.biases[l].size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

EnsembleConfig make_config(std::size_t m, double lambda, SgdConfig sgd,
                           std::uint64_t seed_base = 100) {
    EnsembleConfig cfg;
    cfg.member_count = m;
    cfg.lambda = lambda;
    cfg.sgd = sgd;
    for (std::size_t i = 0; i < m; ++i) cfg.member_seeds.push_back(seed_base + i);
    return cfg;
}

}  // namespace

TEST_CASE("ensemble_mean basics") {
    Matrix a(1, 2);
    a(0, 0) = 1.0;
    Matrix b(1, 2);
    b(0, 1) = 1.0;
    const auto mean = ensemble_mean({a, b});
    CHECK(mean(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mean(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

    const auto same = ensemble_mean({a, a, a});
    CHECK(same(0, 0) == 1.0);
    CHECK(same(0, 1) == 0.0);

    CHECK_THROWS_AS(ensemble_mean({a, Matrix(2, 2)}), ShapeError);
}

TEST_CASE("ensemble_mean matches an independent re-summation") {
    Xoshiro256pp rng(1);
    std::vector<Matrix> members;
    for (int i = 0; i < 3; ++i) {
        Matrix m(4, 5);
        for (std::size_t r = 0; r < 4; ++r) {
            const auto p = random_prob_vector(5, rng);
            std::copy(p.begin(), p.end(), m.row(r).begin());
        }
        members.push_back(std::move(m));
    }
    const auto mean = ensemble_mean(members);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t k = 0; k < 5; ++k) {
            double sum = 0.0;
            for (const auto& m : members) sum += m(r, k);
            CHECK(std::abs(mean(r, k) - sum / 3.0) < 1e-15);
        }
    }
}

TEST_CASE("nc_div hand-computed M=2 case") {
    const std::vector<std::vector<double>> members{{0.6, 0.4}, {0.4, 0.6}};
    // h_bar = (0.5, 0.5); div(h_0) = (0.1,-0.1).(-0.1,0.1) = -0.02
    CHECK(nc_div(members[0], members, 0) == doctest::Approx(-0.02).epsilon(1e-12));
    CHECK(nc_div(members[1], members, 1) == doctest::Approx(-0.02).epsilon(1e-12));
}

TEST_CASE("nc_div is zero for identical members") {
    const std::vector<double> h{0.3, 0.3, 0.4};
    const std::vector<std::vector<double>> members{h, h, h};
    CHECK(nc_div(h, members, 1) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("nc_div equals -|h_i - hbar|^2 on random ensembles") {
    Xoshiro256pp rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 2 + rng.below(4);
        const std::size_t k = 2 + rng.below(5);
        const auto members = random_prob_ensemble(m, k, rng);
        std::vector<double> mean(k, 0.0);
        for (const auto& h : members)
            for (std::size_t j = 0; j < k; ++j) mean[j] += h[j] / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                norm2 += (members[i][j] - mean[j]) * (members[i][j] - mean[j]);
            CHECK(std::abs(nc_div(members[i], members, i) + norm2) < 1e-12);
            CHECK(nc_div(members[i], members, i) <= 1e-15);
        }
    }
}

TEST_CASE("nc_div_grad hand case and zero-sum identity") {
    const std::vector<std::vector<double>> members{{0.6, 0.4}, {0.4, 0.6}};
    const auto g0 = nc_div_grad(members, 0);
    CHECK(g0[0] == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(g0[1] == doctest::Approx(0.1).epsilon(1e-12));

    Xoshiro256pp rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 2 + rng.below(6);
        const std::size_t k = 2 + rng.below(8);
        const auto ens = random_prob_ensemble(m, k, rng);
        std::vector<double> total(k, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const auto g = nc_div_grad(ens, i);
            for (std::size_t j = 0; j < k; ++j) total[j] += g[j];
        }
        for (double t : total) CHECK(std::abs(t) < 1e-12);
    }
}

TEST_CASE("nc_div_grad matches finite differences with hbar frozen") {
    Xoshiro256pp rng(4);
    const auto members = random_prob_ensemble(4, 5, rng);
    const std::size_t i = 2;

    // freeze hbar and the others' sum at the base point
    std::vector<double> mean(5, 0.0);
    for (const auto& h : members)
        for (std::size_t k = 0; k < 5; ++k) mean[k] += h[k] / 4.0;
    std::vector<double> frozen_others(5, 0.0);
    for (std::size_t j = 0; j < 4; ++j) {
        if (j == i) continue;
        for (std::size_t k = 0; k < 5; ++k) frozen_others[k] += members[j][k] - mean[k];
    }
    auto frozen_div = [&](const std::vector<double>& h_i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < 5; ++k) dot += (h_i[k] - mean[k]) * frozen_others[k];
        return dot;
    };

    const auto grad = nc_div_grad(members, i);
    const double step = 1e-6;
    for (std::size_t k = 0; k < 5; ++k) {
        auto hi = members[i];
        auto lo = members[i];
        hi[k] += step;
        lo[k] -= step;
        const double fd = (frozen_div(hi) - frozen_div(lo)) / (2.0 * step);
        const double denom = std::max(std::abs(fd), 1e-10);
        CHECK(std::abs(grad[k] - fd) / denom < 1e-6);
    }
}

TEST_CASE("member_loss composes CE and the diversity term") {
    const std::vector<std::vector<double>> members{{0.6, 0.4}, {0.4, 0.6}};

    SUBCASE("lambda 0 reduces to cross entropy") {
        CHECK(member_loss(0, members[0], members, 0, 0.0) ==
              doctest::Approx(cross_entropy(members[0], 0)).epsilon(1e-15));
    }
    SUBCASE("identical members give plain CE for any lambda") {
        const std::vector<double> h{0.7, 0.3};
        const std::vector<std::vector<double>> same{h, h, h};
        CHECK(member_loss(0, h, same, 0, 2.5) ==
              doctest::Approx(cross_entropy(h, 0)).epsilon(1e-14));
    }
    SUBCASE("hand-evaluated M=2 composite") {
        CHECK(member_loss(0, members[0], members, 0, 0.1) ==
              doctest::Approx(-std::log(0.6) + 0.1 * -0.02).epsilon(1e-6));
        CHECK(member_loss(0, members[0], members, 0, 0.1) ==
              doctest::Approx(0.508826).epsilon(1e-5));
    }
}

TEST_CASE("train_minibatch with lambda 0 is bit-identical to independent training") {
    Xoshiro256pp rng(5);
    Matrix batch(8, 3);
    for (auto& x : batch.data) x = rng.gaussian();
    std::vector<std::size_t> labels(8);
    for (auto& l : labels) l = rng.below(4);

    const SgdConfig sgd{0.1, 0.9, 1, 8};
    const std::vector<std::size_t> layers{3, 6, 4};

    Ensemble ens;
    ens.config = make_config(3, 0.0, sgd);
    for (std::size_t i = 0; i < 3; ++i)
        ens.members.push_back(init_params(layers, Activation::Relu, ens.config.member_seeds[i]));
    std::vector<MomentumState> states;
    for (const auto& m : ens.members) states.push_back(MomentumState::zeros_like(m));
    train_minibatch(ens, states, batch, labels);

    for (std::size_t i = 0; i < 3; ++i) {
        auto solo = init_params(layers, Activation::Relu, ens.config.member_seeds[i]);
        auto st = MomentumState::zeros_like(solo);
        const auto grads = backward(solo, forward(solo, batch), labels);
        sgd_step(solo, grads, st, sgd);
        CHECK(params_equal(solo, ens.members[i]));
    }
}

TEST_CASE("M=1 ignores lambda entirely") {
    Xoshiro256pp rng(6);
    Matrix batch(5, 2);
    for (auto& x : batch.data) x = rng.gaussian();
    std::vector<std::size_t> labels{0, 1, 2, 0, 1};
    const SgdConfig sgd{0.05, 0.0, 1, 5};

    auto build = [&](double lambda) {
        Ensemble ens;
        ens.config = make_config(1, lambda, sgd);
        ens.members.push_back(init_params({2, 4, 3}, Activation::Tanh, 100));
        std::vector<MomentumState> states{MomentumState::zeros_like(ens.members[0])};
        train_minibatch(ens, states, batch, labels);
        return ens;
    };
    CHECK(params_equal(build(0.0).members[0], build(0.7).members[0]));
}

TEST_CASE("one small-lr minibatch step decreases mean member loss") {
    Xoshiro256pp rng(7);
    Matrix batch(10, 2);
    for (auto& x : batch.data) x = rng.gaussian();
    std::vector<std::size_t> labels(10);
    for (auto& l : labels) l = rng.below(3);

    Ensemble ens;
    ens.config = make_config(2, 0.1, SgdConfig{1e-3, 0.0, 1, 10});
    for (std::size_t i = 0; i < 2; ++i)
        ens.members.push_back(init_params({2, 5, 3}, Activation::Relu, ens.config.member_seeds[i]));
    std::vector<MomentumState> states;
    for (const auto& m : ens.members) states.push_back(MomentumState::zeros_like(m));

    auto mean_loss = [&] {
        std::vector<Matrix> probs;
        for (const auto& m : ens.members) probs.push_back(forward(m, batch).probs);
        double total = 0.0;
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t b = 0; b < 10; ++b) {
                std::vector<std::vector<double>> row_probs;
                for (const auto& p : probs)
                    row_probs.emplace_back(p.row(b).begin(), p.row(b).end());
                total += member_loss(labels[b], row_probs[i], row_probs, i, 0.1);
            }
        }
        return total / 20.0;
    };

    const double before = mean_loss();
    train_minibatch(ens, states, batch, labels);
    CHECK(mean_loss() < before);
}

TEST_CASE("full composite gradient matches finite differences with hbar frozen") {
    using namespace ncens::testing;
    Xoshiro256pp rng(8);
    const std::size_t M = 3, K = 4, B = 3;
    const double lambda = 0.5;
    std::vector<NetworkParams> members;
    for (std::size_t i = 0; i < M; ++i)
        members.push_back(init_params({3, 5, K}, Activation::Tanh, 300 + i));
    Matrix batch(B, 3);
    for (auto& x : batch.data) x = rng.gaussian();
    const std::vector<std::size_t> labels{1, 3, 0};

    std::vector<Matrix> probs;
    for (const auto& m : members) probs.push_back(forward(m, batch).probs);
    const Matrix hbar = ensemble_mean(probs);

    for (std::size_t i = 0; i < M; ++i) {
        // frozen additive gradient: (lambda/B) * sum_{j!=i}(h_j - hbar) per row
        Matrix extra(B, K);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t k = 0; k < K; ++k) {
                double others = 0.0;
                for (std::size_t j = 0; j < M; ++j)
                    if (j != i) others += probs[j](b, k) - hbar(b, k);
                extra(b, k) = lambda / static_cast<double>(B) * others;
            }

        const auto analytic = backward(members[i], forward(members[i], batch), labels, &extra);
        const auto fd = finite_difference(members[i], [&](const NetworkParams& q) {
            return scalar_loss(q, batch, labels, &extra);
        });
        CHECK(max_relative_error(analytic, fd) < 1e-4);
    }
}

TEST_CASE("train determinism and zero-epoch behavior") {
    BlobSpec spec;
    spec.classes = 3;
    spec.per_class = 30;
    spec.dim = 2;
    spec.seed = 9;
    const Dataset ds = gen_blobs(spec);
    const std::vector<std::size_t> layers{2, 6, 3};

    SUBCASE("identical runs produce bit-identical ensembles and logs") {
        const auto cfg = make_config(2, 0.1, SgdConfig{0.1, 0.0, 3, 16});
        TrainingLog log_a, log_b;
        const auto a = train(ds, cfg, layers, Activation::Relu, &ds, 42, &log_a);
        const auto b = train(ds, cfg, layers, Activation::Relu, &ds, 42, &log_b);
        for (std::size_t i = 0; i < 2; ++i) CHECK(params_equal(a.members[i], b.members[i]));
        REQUIRE(log_a.size() == 3);
        for (std::size_t e = 0; e < 3; ++e) {
            CHECK(log_a[e].train_loss == log_b[e].train_loss);
            CHECK(*log_a[e].eval_ece == *log_b[e].eval_ece);
        }
    }

    SUBCASE("zero epochs returns the initialized members") {
        const auto cfg = make_config(2, 0.0, SgdConfig{0.1, 0.0, 0, 16});
        const auto ens = train(ds, cfg, layers, Activation::Relu);
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(params_equal(ens.members[i],
                               init_params(layers, Activation::Relu, cfg.member_seeds[i])));
    }
}

TEST_CASE("training on separable blobs beats the majority baseline") {
    BlobSpec spec;
    spec.classes = 5;
    spec.per_class = 60;
    spec.dim = 2;
    spec.cluster_std = 0.4;
    spec.center_spread = 3.0;
    spec.seed = 10;
    const Dataset ds = gen_blobs(spec);
    auto [train_set, test_set] = shuffle_split(ds, 0.3, 11);

    const auto cfg = make_config(3, 0.0, SgdConfig{0.1, 0.9, 30, 32});
    const auto ens = train(train_set, cfg, {2, 16, 5}, Activation::Relu, nullptr, 12);
    const Matrix probs = predict(ens, test_set.features);

    std::size_t correct = 0;
    for (std::size_t r = 0; r < probs.rows; ++r) {
        std::size_t argmax = 0;
        for (std::size_t k = 1; k < 5; ++k)
            if (probs(r, k) > probs(r, argmax)) argmax = k;
        if (argmax == test_set.labels[r]) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(probs.rows);
    CHECK(acc >= 0.2 + 0.2);  // majority baseline ~= 1/5 plus 20 points
}

TEST_CASE("predict equals the mean of individual member forwards") {
    Xoshiro256pp rng(13);
    Ensemble ens;
    ens.config = make_config(3, 0.1, SgdConfig{0.1, 0.0, 1, 4});
    for (std::size_t i = 0; i < 3; ++i)
        ens.members.push_back(init_params({2, 4, 3}, Activation::Relu, 500 + i));
    Matrix batch(6, 2);
    for (auto& x : batch.data) x = rng.gaussian();

    const Matrix combined = predict(ens, batch);
    std::vector<Matrix> probs;
    for (const auto& m : ens.members) probs.push_back(forward(m, batch).probs);
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t k = 0; k < 3; ++k) {
            const double mean = (probs[0](r, k) + probs[1](r, k) + probs[2](r, k)) / 3.0;
            CHECK(std::abs(combined(r, k) - mean) < 1e-15);
        }
}

TEST_CASE("member order invariance of predict") {
    Xoshiro256pp rng(14);
    Ensemble ens;
    ens.config = make_config(3, 0.1, SgdConfig{0.1, 0.0, 1, 4});
    for (std::size_t i = 0; i < 3; ++i)
        ens.members.push_back(init_params({2, 4, 3}, Activation::Relu, 600 + i));
    Matrix batch(4, 2);
    for (auto& x : batch.data) x = rng.gaussian();

    Ensemble permuted = ens;
    std::swap(permuted.members[0], permuted.members[2]);
    std::swap(permuted.config.member_seeds[0], permuted.config.member_seeds[2]);

    const Matrix a = predict(ens, batch);
    const Matrix b = predict(permuted, batch);
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) < 1e-15);
}

TEST_CASE("ensemble config validation") {
    EnsembleConfig cfg;
    cfg.member_count = 2;
    cfg.sgd = SgdConfig{0.1, 0.0, 1, 4};
    cfg.member_seeds = {1, 1};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.member_seeds = {1};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.member_seeds = {1, 2};
    cfg.lambda = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.lambda = 0.0;
    CHECK_NOTHROW(cfg.validate());
}
