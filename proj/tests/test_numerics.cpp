#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "clidmu/numerics.hpp"

using namespace clidmu;
using doctest::Approx;

TEST_CASE("cosine similarity examples") {
    const Vector e1{1, 0}, e2{0, 1}, d{1, 1};
    CHECK(cosine_similarity(e1, e1) == Approx(1.0).epsilon(1e-15));
    CHECK(cosine_similarity(e1, e2) == 0.0);
    CHECK(cosine_similarity(e1, d) == Approx(0.70710678118654746).epsilon(1e-15));
    CHECK(cosine_similarity(Vector{0, 0}, d) == 0.0);
    CHECK_THROWS_AS(cosine_similarity(e1, Vector{1, 2, 3}), NumericError);
}

TEST_CASE("cosine similarity is symmetric and scale invariant") {
    Prng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        Vector u(5), v(5);
        for (auto& x : u) x = rng.normal();
        for (auto& x : v) x = rng.normal();
        const double a = 0.1 + 10 * rng.uniform(), b = 0.1 + 10 * rng.uniform();
        Vector au = u, bv = v;
        for (auto& x : au) x *= a;
        for (auto& x : bv) x *= b;
        const double c = cosine_similarity(u, v);
        CHECK(std::abs(c - cosine_similarity(v, u)) <= 1e-12);
        CHECK(std::abs(c - cosine_similarity(au, bv)) <= 1e-12);
        CHECK(c >= -1.0);
        CHECK(c <= 1.0);
    }
}

TEST_CASE("cosine gradient matches central differences") {
    Prng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Vector u(4), v(4), g(4, 0.0);
        for (auto& x : u) x = rng.normal();
        for (auto& x : v) x = rng.normal();
        cosine_grad_accumulate(u, v, 1.0, g);
        for (std::size_t k = 0; k < u.size(); ++k) {
            Vector up = u, dn = u;
            up[k] += 1e-6;
            dn[k] -= 1e-6;
            const double fd = (cosine_similarity(up, v) - cosine_similarity(dn, v)) / 2e-6;
            CHECK(g[k] == Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("softmax examples and properties") {
    auto p = softmax(Vector{0, 0});
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
    for (double c : {-700.0, 0.0, 3.5, 900.0}) {
        auto q = softmax(Vector{c, c, c});
        for (double x : q) CHECK(x == Approx(1.0 / 3.0).epsilon(1e-15));
    }
    auto r = softmax(Vector{std::log(2.0), 0.0});
    CHECK(r[0] == Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(r[1] == Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(softmax(Vector{}), NumericError);

    Prng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        Vector l(6);
        for (auto& x : l) x = 5 * rng.normal();
        auto s = softmax(l);
        double total = 0.0;
        for (double x : s) {
            CHECK(x > 0.0);
            CHECK(x < 1.0);
            total += x;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }
}

TEST_CASE("row normalization") {
    auto a = row_normalize(Matrix::from_rows({{2, 2}, {1, 3}}));
    CHECK(a == Matrix::from_rows({{0.5, 0.5}, {0.25, 0.75}}));
    const auto id = Matrix::from_rows({{1, 0}, {0, 1}});
    CHECK(row_normalize(id) == id);
    auto b = row_normalize(Matrix::from_rows({{7.389, 1}, {1, 7.389}}));
    CHECK(b(0, 0) == Approx(0.8808).epsilon(1e-4));
    CHECK(b(0, 1) == Approx(0.1192).epsilon(1e-3));
    CHECK(b(1, 0) == Approx(0.1192).epsilon(1e-3));
    CHECK(b(1, 1) == Approx(0.8808).epsilon(1e-4));
    CHECK_THROWS_AS(row_normalize(Matrix::from_rows({{1, -1}})), NumericError);
    CHECK_THROWS_AS(row_normalize(Matrix::from_rows({{0, 0}})), NumericError);

    Prng rng(9);
    Matrix g(6, 7);
    for (auto& x : g.values()) x = rng.uniform() + 1e-3;
    auto n = row_normalize(g);
    for (std::size_t r = 0; r < n.rows(); ++r) {
        double total = 0.0;
        for (double x : n.row(r)) total += x;
        CHECK(std::abs(total - 1.0) <= 1e-12);
        for (std::size_t i = 0; i < g.cols(); ++i) {
            for (std::size_t j = 0; j < g.cols(); ++j) {
                if (g(r, i) < g(r, j)) CHECK(n(r, i) <= n(r, j));
            }
        }
    }
}

TEST_CASE("matrix construction guards") {
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), NumericError);
    CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), NumericError);
    const auto m = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
    const std::vector<std::size_t> idx{2, 0};
    CHECK(m.select_rows(idx) == Matrix::from_rows({{5, 6}, {1, 2}}));
    const std::vector<std::size_t> bad{3};
    CHECK_THROWS_AS(m.select_rows(bad), NumericError);
}

TEST_CASE("prng matches the published SplitMix64 stream") {
    Prng rng(0);
    CHECK(rng.next_u64() == 0xE220A8397B1DCDAFULL);
    CHECK(rng.next_u64() == 0x6E789E6AA1B965F4ULL);
    CHECK(rng.next_u64() == 0x06C45D188009454FULL);
}

TEST_CASE("prng determinism and distribution sanity") {
    Prng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

    Prng fa = Prng(7).fork(1), fb = Prng(7).fork(1), fc = Prng(7).fork(2);
    CHECK(fa.state() == fb.state());
    CHECK(fa.state() != fc.state());

    Prng rng(1);
    const int n = 200000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        ss += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(ss / n - 1.0) < 0.02);

    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_index(7)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
    CHECK_THROWS_AS(rng.uniform_index(0), NumericError);

    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("shuffle is a permutation") {
    Prng rng(8);
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    rng.shuffle(v);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
    CHECK(v != sorted);
}

TEST_CASE("format_double round-trips") {
    Prng rng(4);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.normal() * std::pow(10.0, static_cast<int>(rng.uniform_index(40)) - 20);
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-2.0) == "-2");
    for (double x : {4.9406564584124654e-324, 1.7976931348623157e308, -2.2250738585072014e-308}) {
        double back = 0.0;
        REQUIRE(parse_double(format_double(x), back));
        CHECK(back == x);
    }
}

TEST_CASE("finiteness check") {
    CHECK(all_finite(Vector{1, 2, 3}));
    CHECK_FALSE(all_finite(Vector{1, NAN}));
    CHECK_FALSE(all_finite(Vector{INFINITY}));
}
