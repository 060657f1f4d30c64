#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "clidmu/data.hpp"

using namespace clidmu;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

fs::path scratch_file(const std::string& name) {
    auto dir = fs::temp_directory_path() / "clidmu_test_data";
    fs::create_directories(dir);
    return dir / name;
}

std::vector<std::size_t> class_counts(const Labels& y, std::size_t c) {
    std::vector<std::size_t> counts(c, 0);
    for (auto v : y) ++counts[v];
    return counts;
}

}  // namespace

TEST_CASE("blob generator") {
    SUBCASE("one sample per class when n == c") {
        const auto ds = generate_blobs(5, BlobSpec{4, 3, 4, 2.0});
        CHECK(class_counts(ds.y_clean, 4) == std::vector<std::size_t>{1, 1, 1, 1});
    }
    SUBCASE("balanced classes and untouched noisy labels") {
        const auto ds = generate_blobs(1, BlobSpec{1003, 8, 4, 3.0});
        for (auto c : class_counts(ds.y_clean, 4)) CHECK((c == 250 || c == 251));
        CHECK(ds.y_noisy == ds.y_clean);
        CHECK(ds.noise_rate() == 0.0);
        ds.validate();
    }
    SUBCASE("seed determinism") {
        CHECK(generate_blobs(9, BlobSpec{}) == generate_blobs(9, BlobSpec{}));
        CHECK_FALSE(generate_blobs(9, BlobSpec{}) == generate_blobs(10, BlobSpec{}));
    }
    SUBCASE("cluster means sit class_sep apart") {
        for (std::size_t c : {3, 12}) {
            const auto ds = generate_blobs(2, BlobSpec{24000, 4, c, 5.0});
            Matrix mean(c, 4);
            auto counts = class_counts(ds.y_clean, c);
            for (std::size_t i = 0; i < ds.size(); ++i) {
                for (std::size_t j = 0; j < 4; ++j) mean(ds.y_clean[i], j) += ds.x(i, j) / static_cast<double>(counts[ds.y_clean[i]]);
            }
            double d01 = 0.0;
            for (std::size_t j = 0; j < 4; ++j) d01 += std::pow(mean(0, j) - mean(1, j), 2);
            CHECK(std::sqrt(d01) == Approx(5.0).epsilon(0.05));
        }
    }
    SUBCASE("zero separation makes classes indistinguishable") {
        const auto ds = generate_blobs(3, BlobSpec{8000, 2, 4, 0.0});
        double m0 = 0.0, m1 = 0.0;
        std::size_t n0 = 0, n1 = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.y_clean[i] == 0) m0 += ds.x(i, 0), ++n0;
            if (ds.y_clean[i] == 1) m1 += ds.x(i, 0), ++n1;
        }
        CHECK(std::abs(m0 / n0 - m1 / n1) < 0.1);
    }
    SUBCASE("invalid requests") {
        CHECK_THROWS_AS(generate_blobs(1, BlobSpec{3, 8, 4, 1.0}), DataError);
        CHECK_THROWS_AS(generate_blobs(1, BlobSpec{10, 1, 2, 1.0}), DataError);
        CHECK_THROWS_AS(generate_blobs(1, BlobSpec{10, 2, 2, -1.0}), DataError);
    }
}

TEST_CASE("symmetric noise") {
    const auto clean = generate_blobs(4, BlobSpec{20000, 2, 10, 1.0});
    Prng rng(1);
    CHECK(inject_symmetric(clean, 0.0, rng).y_noisy == clean.y_clean);
    const auto all = inject_symmetric(clean, 1.0, rng);
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all.y_noisy[i] != all.y_clean[i]);
    const auto ds = inject_symmetric(clean, 0.4, rng);
    CHECK(ds.noise_rate() >= 0.39);
    CHECK(ds.noise_rate() <= 0.41);
    CHECK(ds.x == clean.x);
    CHECK(ds.y_clean == clean.y_clean);
    CHECK_THROWS_AS(inject_symmetric(clean, 1.5, rng), DataError);
    CHECK_THROWS_AS(inject_symmetric(clean, -0.1, rng), DataError);
    auto single = generate_blobs(1, BlobSpec{5, 2, 1, 1.0});
    CHECK_THROWS_AS(inject_symmetric(single, 0.2, rng), DataError);
    CHECK_NOTHROW(inject_symmetric(single, 0.0, rng));
}

TEST_CASE("asymmetric noise follows the circular map") {
    const auto clean = generate_blobs(5, BlobSpec{20000, 2, 4, 1.0});
    Prng rng(2);
    CHECK(inject_asymmetric(clean, 0.0, rng).y_noisy == clean.y_clean);
    const auto all = inject_asymmetric(clean, 1.0, rng);
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all.y_noisy[i] == (all.y_clean[i] + 1) % 4);
    const auto ds = inject_asymmetric(clean, 0.4, rng);
    CHECK(ds.noise_rate() >= 0.39);
    CHECK(ds.noise_rate() <= 0.41);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.y_noisy[i] != ds.y_clean[i]) CHECK(ds.y_noisy[i] == (ds.y_clean[i] + 1) % 4);
    }
}

TEST_CASE("truncated normal") {
    CHECK(truncated_normal_mean(0.5, 0.1) == Approx(0.5).epsilon(1e-12));
    CHECK(truncated_normal_mean(0.3, 0.0) == 0.3);
    CHECK(truncated_normal_mean(-1.0, 0.0) == 0.0);
    // Monte-Carlo estimate by plain rejection with an independent stream.
    for (double mean : {0.0, 0.05, 0.4, 0.97}) {
        Prng rng(77);
        double total = 0.0;
        int kept = 0;
        while (kept < 200000) {
            const double v = mean + 0.1 * rng.normal();
            if (v < 0.0 || v > 1.0) continue;
            total += v;
            ++kept;
        }
        CHECK(truncated_normal_mean(mean, 0.1) == Approx(total / kept).epsilon(2e-3));
    }
    Prng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double v = sample_truncated_normal(0.02, 0.1, rng);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("instance-dependent noise") {
    const auto clean = generate_blobs(6, BlobSpec{20000, 8, 5, 2.0});
    Prng rng(4);
    SUBCASE("rate tracks the truncated mean") {
        const auto ds = inject_instance_dependent(clean, 0.4, rng);
        CHECK(std::abs(ds.noise_rate() - truncated_normal_mean(0.4, 0.1)) <= 0.02);
        for (std::size_t i = 0; i < ds.size(); ++i) CHECK(ds.y_noisy[i] < 5);
        CHECK(ds.x == clean.x);
    }
    SUBCASE("zero rate and zero spread leaves labels alone") {
        CHECK(inject_instance_dependent(clean, 0.0, rng, 0.0).y_noisy == clean.y_clean);
    }
    SUBCASE("rate one flips everything") {
        const auto ds = inject_instance_dependent(clean, 1.0, rng, 0.0);
        for (std::size_t i = 0; i < ds.size(); ++i) CHECK(ds.y_noisy[i] != ds.y_clean[i]);
    }
    SUBCASE("flip targets are a function of the features") {
        // Identical, large feature rows make the target softmax one-hot, so every
        // sample of a class lands on the same target.
        LabeledDataset same;
        same.classes = 4;
        same.x = Matrix(200, 3);
        for (std::size_t i = 0; i < 200; ++i) {
            same.x(i, 0) = 300.0, same.x(i, 1) = -200.0, same.x(i, 2) = 100.0;
            same.y_clean.push_back(i % 4);
        }
        same.y_noisy = same.y_clean;
        const auto ds = inject_instance_dependent(same, 1.0, rng, 0.0);
        for (std::size_t i = 4; i < 200; ++i) CHECK(ds.y_noisy[i] == ds.y_noisy[i % 4]);
    }
    SUBCASE("invalid arguments") {
        auto single = generate_blobs(1, BlobSpec{5, 2, 1, 1.0});
        CHECK_THROWS_AS(inject_instance_dependent(single, 0.2, rng), DataError);
        CHECK_THROWS_AS(inject_instance_dependent(clean, 2.0, rng), DataError);
    }
    SUBCASE("noise dispatch is seeded") {
        const NoiseSpec spec{NoiseKind::instance_dependent, 0.3, 12, kDefaultIdnStd};
        CHECK(inject_noise(clean, spec) == inject_noise(clean, spec));
    }
}

TEST_CASE("meta set selection") {
    auto clean = generate_blobs(7, BlobSpec{400, 4, 4, 2.0});
    Prng rng(5);
    const auto noisy = inject_symmetric(clean, 0.4, rng);

    SUBCASE("random covers everything when M == N") {
        const auto m = select_meta_set(noisy, 400, MetaStrategy::random_noisy, rng);
        CHECK(m.size() == 400);
        CHECK(std::set<std::size_t>(m.indices.begin(), m.indices.end()).size() == 400);
    }
    SUBCASE("random draws unique indices") {
        const auto m = select_meta_set(noisy, 100, MetaStrategy::random_noisy, rng);
        CHECK(std::set<std::size_t>(m.indices.begin(), m.indices.end()).size() == 100);
    }
    SUBCASE("balanced over noisy labels") {
        const auto m = select_meta_set(noisy, 4, MetaStrategy::class_balanced_noisy, rng);
        Labels y;
        for (auto i : m.indices) y.push_back(noisy.y_noisy[i]);
        CHECK(class_counts(y, 4) == std::vector<std::size_t>{1, 1, 1, 1});
    }
    SUBCASE("oracle clean is balanced over clean labels") {
        const auto m = select_meta_set(noisy, 100, MetaStrategy::oracle_clean, rng);
        Labels y;
        for (auto i : m.indices) y.push_back(noisy.y_clean[i]);
        CHECK(class_counts(y, 4) == std::vector<std::size_t>{25, 25, 25, 25});
    }
    SUBCASE("remainders are topped up") {
        const auto m = select_meta_set(noisy, 102, MetaStrategy::class_balanced_noisy, rng);
        CHECK(m.size() == 102);
        CHECK(std::set<std::size_t>(m.indices.begin(), m.indices.end()).size() == 102);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(select_meta_set(noisy, 401, MetaStrategy::random_noisy, rng), DataError);
        CHECK_THROWS_AS(select_meta_set(noisy, 0, MetaStrategy::random_noisy, rng), DataError);
        CHECK_THROWS_AS(select_meta_set(noisy, 10, MetaStrategy::pseudo_clean_gmm, rng), DataError);
        auto skewed = clean;
        for (auto& y : skewed.y_noisy) y = 0;
        CHECK_THROWS_AS(select_meta_set(skewed, 8, MetaStrategy::class_balanced_noisy, rng), DataError);
    }
    SUBCASE("pseudo-clean uses the losses") {
        Vector losses(400);
        for (std::size_t i = 0; i < 400; ++i) losses[i] = noisy.y_noisy[i] == noisy.y_clean[i] ? 0.1 : 2.0;
        const auto m = select_meta_set(noisy, 40, MetaStrategy::pseudo_clean_gmm, rng, losses);
        for (auto i : m.indices) CHECK(noisy.y_noisy[i] == noisy.y_clean[i]);
    }
    CHECK(parse_meta_strategy("pseudo-clean") == MetaStrategy::pseudo_clean_gmm);
    CHECK(to_string(MetaStrategy::oracle_clean) == "oracle-clean");
    CHECK_FALSE(parse_meta_strategy("clean").has_value());
}

TEST_CASE("dataset csv") {
    SUBCASE("round trip is lossless") {
        auto ds = generate_blobs(8, BlobSpec{50, 3, 3, 2.0});
        Prng rng(6);
        ds = inject_symmetric(ds, 0.5, rng);
        ds.x(0, 0) = 4.9406564584124654e-324;
        ds.x(1, 2) = -1.7976931348623157e308;
        const auto path = scratch_file("round.csv");
        write_csv(path, ds);
        CHECK(read_csv(path, 3) == ds);
    }
    SUBCASE("hand-written fixture") {
        const auto path = scratch_file("fixture.csv");
        std::ofstream(path) << "x_0,x_1,label_noisy,label_clean\n"
                               "0.5,-1.25,1,0\n"
                               "3,1e-3,0,0\n"
                               "-0.0625,7.5,2,2\n";
        const auto ds = read_csv(path);
        CHECK(ds.x == Matrix::from_rows({{0.5, -1.25}, {3, 1e-3}, {-0.0625, 7.5}}));
        CHECK(ds.y_noisy == Labels{1, 0, 2});
        CHECK(ds.y_clean == Labels{0, 0, 2});
        CHECK(ds.classes == 3);
    }
    SUBCASE("malformed files name the location") {
        const auto path = scratch_file("bad.csv");
        std::ofstream(path) << "x_0,x_1,label_noisy,weight\n0,1,2,1\n";
        CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains("label_clean"), DataError);
        std::ofstream(path) << "x_0,label_noisy,label_clean\n0.5,1,1\nabc,1,1\n";
        CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains(":3: column 1"), DataError);
        std::ofstream(path) << "x_0,label_noisy,label_clean\n0.5,1\n";
        CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains(":2:"), DataError);
        std::ofstream(path) << "x_0,label_noisy,label_clean\n0.5,-1,1\n";
        CHECK_THROWS_AS(read_csv(path), DataError);
        std::ofstream(path) << "x_0,label_noisy,label_clean\n0.5,4,1\n";
        CHECK_THROWS_AS(read_csv(path, 3), DataError);
        CHECK_THROWS_AS(read_csv(scratch_file("missing.csv")), DataError);
    }
}
