#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "clidmu/clid.hpp"
#include "oracles.hpp"

using namespace clidmu;
using doctest::Approx;

namespace {

std::vector<Vector> to_rows(const Matrix& m) {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).begin(), m.row(i).end());
    return out;
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) { return m.select_rows(perm); }

}  // namespace

TEST_CASE("embedding graph examples") {
    const auto z = Matrix::from_rows({{1, 0}, {1, 1}, {0, 3}});
    const auto g = embedding_graph(z, 0.5);
    for (std::size_t i = 0; i < 3; ++i) CHECK(g(i, i) == Approx(7.38905609893065).epsilon(1e-14));
    CHECK(g(0, 2) == 1.0);
    CHECK(g(0, 1) == Approx(4.1132503787829275).epsilon(1e-14));
    CHECK(g(1, 0) == g(0, 1));
    CHECK_THROWS_AS(embedding_graph(z, 0.0), NumericError);
    CHECK_THROWS_AS(embedding_graph(z, -1.0), NumericError);
    CHECK_THROWS_AS(embedding_graph(Matrix::from_rows({{1, 2}}), 0.5), NumericError);
}

TEST_CASE("class probability graph examples") {
    const auto g = class_prob_graph(Matrix::from_rows({{1, 0}, {0, 1}, {0.5, 0.5}, {1, 0}}));
    CHECK(g(0, 3) == 1.0);
    CHECK(g(0, 1) == 0.0);
    CHECK(g(0, 2) == Approx(0.70710678118654746).epsilon(1e-15));
    for (std::size_t i = 0; i < 4; ++i) CHECK(g(i, i) == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("graph invariants on random batches") {
    Prng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix z(7, 4), q(7, 3);
        for (double& v : z.values()) v = std::max(0.0, rng.normal());
        for (std::size_t i = 0; i < 7; ++i) {
            auto p = softmax(Vector{rng.normal(), rng.normal(), rng.normal()});
            std::copy(p.begin(), p.end(), q.row(i).begin());
        }
        const auto g = build_graphs(z, q, 0.5);
        for (std::size_t i = 0; i < 7; ++i) {
            double se = 0.0, sq = 0.0;
            for (std::size_t j = 0; j < 7; ++j) {
                CHECK(std::abs(g.ge(i, j) - g.ge(j, i)) <= 1e-12);
                CHECK(std::abs(g.gq(i, j) - g.gq(j, i)) <= 1e-12);
                CHECK(g.ge(i, j) >= std::exp(-2.0) - 1e-12);
                CHECK(g.ge(i, j) <= std::exp(2.0) + 1e-12);
                se += g.ge_hat(i, j);
                sq += g.gq_hat(i, j);
            }
            CHECK(std::abs(se - 1.0) <= 1e-12);
            CHECK(std::abs(sq - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("clid loss examples") {
    CHECK(clid_loss(Matrix(2, 2, 0.5), Matrix(2, 2, 0.5)).value == Approx(std::log(2.0) / 2).epsilon(1e-15));
    CHECK(clid_loss(Matrix(4, 4, 0.25), Matrix(4, 4, 0.25)).value == Approx(std::log(4.0) / 4).epsilon(1e-15));
    CHECK(clid_loss(Matrix(4, 4, 0.25), Matrix(4, 4, 0.25)).batch_size == 4);

    const auto target = Matrix::from_rows({{1, 0}, {0, 1}});
    const auto rounded = Matrix::from_rows({{0.8808, 0.1192}, {0.1192, 0.8808}});
    CHECK(clid_loss(target, rounded).value == Approx(0.063462346786833407).epsilon(1e-14));
    const double e2 = std::exp(2.0);
    const auto exact = row_normalize(Matrix::from_rows({{e2, 1}, {1, e2}}));
    CHECK(clid_loss(target, exact).value == Approx(0.063464005521486191).epsilon(1e-14));

    CHECK(clid_loss(target, Matrix::from_rows({{0, 1}, {0, 1}})).value ==
          Approx(-std::log(1e-12) / 4).epsilon(1e-14));
    CHECK_THROWS_AS(clid_loss(target, Matrix(3, 3, 1.0 / 3)), NumericError);
}

TEST_CASE("cross-entropy is minimized at the target") {
    Prng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix t(5, 5);
        for (double& v : t.values()) v = rng.uniform() + 0.01;
        t = row_normalize(t);
        const double at_target = clid_loss(t, t).value;
        Matrix p = t;
        for (double& v : p.values()) v *= std::exp(0.5 * rng.normal());
        p = row_normalize(p);
        CHECK(clid_loss(t, p).value >= at_target - 1e-15);
    }
}

TEST_CASE("clid of a model agrees with the loop oracle and is label free") {
    Prng rng(29);
    auto m = oracle::random_classifier(4, {6}, 3, rng);
    auto x = oracle::random_matrix(8, 4, rng);
    CHECK(clid_of_model(m, x, 0.5).value == Approx(oracle::naive_clid(m, x, 0.5)).epsilon(1e-13));
    CHECK(clid_of_model(m, x, 0.5).value >= 0.0);
}

TEST_CASE("clid is permutation invariant and scale invariant in the embeddings") {
    Prng rng(31);
    auto m = oracle::random_classifier(3, {5}, 3, rng);
    auto x = oracle::random_matrix(9, 3, rng);
    std::vector<std::size_t> perm(9);
    for (std::size_t i = 0; i < 9; ++i) perm[i] = i;
    rng.shuffle(perm);

    const auto t = classifier_forward(m, x);
    const auto g = build_graphs(t.embeddings(), t.probs, 0.5);
    const auto gp = build_graphs(permute_rows(t.embeddings(), perm), permute_rows(t.probs, perm), 0.5);
    for (std::size_t i = 0; i < 9; ++i) {
        for (std::size_t j = 0; j < 9; ++j) {
            CHECK(std::abs(gp.ge(i, j) - g.ge(perm[i], perm[j])) <= 1e-12);
            CHECK(std::abs(gp.gq(i, j) - g.gq(perm[i], perm[j])) <= 1e-12);
        }
    }
    CHECK(std::abs(clid_loss(gp.gq_hat, gp.ge_hat).value - clid_loss(g.gq_hat, g.ge_hat).value) <= 1e-12);

    Matrix scaled = t.embeddings();
    for (double& v : scaled.values()) v *= 37.5;
    const auto gs = build_graphs(scaled, t.probs, 0.5);
    CHECK(std::abs(clid_loss(gs.gq_hat, gs.ge_hat).value - clid_loss(g.gq_hat, g.ge_hat).value) <= 1e-10);
}

TEST_CASE("clid gradient with the class-probability target held fixed") {
    Prng rng(37);
    for (int trial = 0; trial < 5; ++trial) {
        auto m = oracle::random_classifier(2, {6}, 3, rng);
        auto x = oracle::random_matrix(8, 2, rng);
        const auto g = clid_grad(m, x, 0.5, StopGradient::target_q);
        for (double v : g.block_values("head.weight")) CHECK(v == 0.0);
        for (double v : g.block_values("head.bias")) CHECK(v == 0.0);

        const auto target = oracle::naive_graph(oracle::naive_forward(m, x).q, false, 0.5);
        const auto fd = oracle::central_diff(
            [&](const ParamVector& p) { return oracle::naive_clid(MlpClassifier::from_params(p), x, 0.5, &target); },
            m.to_params());
        CHECK(oracle::max_rel_error(g.values(), fd) <= 1e-5);
    }
}

TEST_CASE("clid gradient with the embedding graph held fixed") {
    Prng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        auto m = oracle::random_classifier(3, {5, 4}, 3, rng);
        auto x = oracle::random_matrix(6, 3, rng);
        const auto g = clid_grad(m, x, 0.5, StopGradient::target_e);
        const auto frozen = oracle::naive_graph(oracle::naive_forward(m, x).z, true, 0.5);
        const auto fd = oracle::central_diff(
            [&](const ParamVector& p) {
                return oracle::naive_clid(MlpClassifier::from_params(p), x, 0.5, nullptr, &frozen);
            },
            m.to_params());
        CHECK(oracle::max_rel_error(g.values(), fd) <= 1e-5);
    }
}

TEST_CASE("clid gradient through both branches") {
    Prng rng(43);
    for (int trial = 0; trial < 5; ++trial) {
        auto m = oracle::random_classifier(4, {6}, 4, rng);
        auto x = oracle::random_matrix(7, 4, rng);
        const double tau = 0.3 + rng.uniform();
        const auto g = clid_grad(m, x, tau, StopGradient::none);
        const auto fd = oracle::central_diff(
            [&](const ParamVector& p) { return oracle::naive_clid(MlpClassifier::from_params(p), x, tau); },
            m.to_params());
        CHECK(oracle::max_rel_error(g.values(), fd) <= 1e-5);

        const auto gq = clid_grad(m, x, tau, StopGradient::target_q);
        const auto ge = clid_grad(m, x, tau, StopGradient::target_e);
        for (std::size_t j = 0; j < g.size(); ++j) {
            CHECK(std::abs(g.values()[j] - gq.values()[j] - ge.values()[j]) <= 1e-12 * (1 + std::abs(g.values()[j])));
        }
    }
}

TEST_CASE("identical embeddings give a zero gradient") {
    auto m = MlpClassifier::zeros(3, {4}, 2);
    Prng rng(47);
    for (double& v : m.head.weight.values()) v = rng.normal();
    const auto g = clid_grad(m, oracle::random_matrix(5, 3, rng), 0.5, StopGradient::target_q);
    for (double v : g.values()) CHECK(v == 0.0);
}

TEST_CASE("stop-gradient names") {
    CHECK(parse_stop_gradient("target-q") == StopGradient::target_q);
    CHECK(parse_stop_gradient("target_e") == StopGradient::target_e);
    CHECK(parse_stop_gradient("none") == StopGradient::none);
    CHECK_FALSE(parse_stop_gradient("both").has_value());
    CHECK(to_string(StopGradient::target_q) == "target-q");
    CHECK_THROWS_AS(clid_grad(MlpClassifier::zeros(2, {2}, 2), Matrix(1, 2), 0.5), NumericError);
}
