#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "clidmu/numerics.hpp"

namespace clidmu {

/// Raised for malformed dataset files and invalid data-generation requests.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Labels = std::vector<std::size_t>;

/// Features with parallel clean and noisy labels. Training code reads y_noisy
/// only; y_clean exists for evaluation.
struct LabeledDataset {
    Matrix x;
    Labels y_clean;
    Labels y_noisy;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return x.rows(); }
    std::size_t dim() const noexcept { return x.cols(); }
    void validate() const;
    LabeledDataset subset(std::span<const std::size_t> indices) const;
    /// Fraction of rows whose noisy label differs from the clean one.
    double noise_rate() const;

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

struct BlobSpec {
    std::size_t n = 1000;
    std::size_t dim = 8;
    std::size_t classes = 4;
    double class_sep = 3.0;
};

/// Balanced Gaussian clusters with unit isotropic covariance. With classes <= dim
/// the means are class_sep/sqrt(2) * e_k (pairwise distance class_sep); otherwise
/// they sit on a circle in the first two axes with adjacent distance class_sep.
LabeledDataset generate_blobs(std::uint64_t seed, const BlobSpec& spec);

enum class NoiseKind { symmetric, asymmetric, instance_dependent };

std::string_view to_string(NoiseKind k);
std::optional<NoiseKind> parse_noise_kind(std::string_view s);

inline constexpr double kDefaultIdnStd = 0.1;

struct NoiseSpec {
    NoiseKind kind = NoiseKind::symmetric;
    double rate = 0.0;
    std::uint64_t seed = 0;
    double idn_std = kDefaultIdnStd;
};

/// Each label flips with probability p to a uniform draw over the other classes.
LabeledDataset inject_symmetric(LabeledDataset ds, double p, Prng& rng);
/// Each label flips with probability p along the circular map j -> (j+1) mod c.
LabeledDataset inject_asymmetric(LabeledDataset ds, double p, Prng& rng);
/// Part-dependent instance noise: per-sample flip rate from N(p, stddev^2)
/// truncated to [0,1], flip targets drawn from a softmax over x^T W_y with the
/// true class excluded. W_y ~ N(0,1)^{d x c} is drawn once per clean class.
LabeledDataset inject_instance_dependent(LabeledDataset ds, double p, Prng& rng,
                                         double stddev = kDefaultIdnStd);
LabeledDataset inject_noise(LabeledDataset ds, const NoiseSpec& spec);

/// Mean of N(mean, stddev^2) truncated to [0, 1] (closed form).
double truncated_normal_mean(double mean, double stddev);
/// Rejection sampler for N(mean, stddev^2) truncated to [0, 1].
double sample_truncated_normal(double mean, double stddev, Prng& rng);

enum class MetaStrategy { random_noisy, class_balanced_noisy, pseudo_clean_gmm, oracle_clean };

std::string_view to_string(MetaStrategy s);
std::optional<MetaStrategy> parse_meta_strategy(std::string_view s);

struct MetaSet {
    std::vector<std::size_t> indices;
    MetaStrategy strategy = MetaStrategy::random_noisy;
    std::size_t size() const noexcept { return indices.size(); }
};

/// Draws M indices from `ds`. pseudo_clean_gmm needs per-sample training losses.
MetaSet select_meta_set(const LabeledDataset& ds, std::size_t m, MetaStrategy strategy, Prng& rng,
                        std::optional<std::span<const double>> losses = std::nullopt);

/// Header: x_0..x_{d-1},label_noisy,label_clean. Floats use 17 significant digits.
void write_csv(const std::filesystem::path& path, const LabeledDataset& ds);
/// `classes` defaults to 1 + the largest label present.
LabeledDataset read_csv(const std::filesystem::path& path, std::optional<std::size_t> classes = std::nullopt);

}  // namespace clidmu
