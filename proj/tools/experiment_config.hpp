#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "clidmu/data.hpp"
#include "clidmu/metaloop.hpp"

namespace clidmu::cli {

/// Bad keys, bad values or inconsistent settings. Maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything one command needs. Flat `key = value` text, `#` starts a comment.
struct ExperimentConfig {
    // dataset: either CSV files or the blob generator
    std::filesystem::path train_csv;
    std::filesystem::path test_csv;
    std::size_t n = 2000;  // generated training rows (total rows for correlate)
    std::size_t test_n = 2000;
    std::size_t dim = 8;
    std::size_t classes = 4;
    double class_sep = 2.5;
    std::uint64_t data_seed = 1;

    NoiseKind noise = NoiseKind::symmetric;
    double noise_rate = 0.4;
    std::uint64_t noise_seed = 2;
    double idn_std = kDefaultIdnStd;

    std::uint64_t meta_seed = 7;  // meta-set draw
    TrainConfig train;

    // correlate
    std::vector<double> rates = {0.0, 0.2, 0.4, 0.6};
    double test_fraction = 0.25;
    bool parallel = true;

    std::filesystem::path out_dir = "out";

    /// Throws ConfigError on an unknown key or an unparsable value.
    void set(const std::string& key, const std::string& value);
    /// Throws ConfigError. Called before any output is written.
    void validate() const;
    /// Every key with its current value, in a stable order.
    std::map<std::string, std::string> echo() const;

    BlobSpec blob_spec(std::size_t rows) const { return BlobSpec{rows, dim, classes, class_sep}; }
    NoiseSpec noise_spec() const { return NoiseSpec{noise, noise_rate, noise_seed, idn_std}; }
};

/// Applies every `key = value` line of `path` to `cfg`.
void load_config_file(const std::filesystem::path& path, ExperimentConfig& cfg);

/// Applies `key=value` strings.
void apply_overrides(const std::vector<std::string>& assignments, ExperimentConfig& cfg);

}  // namespace clidmu::cli
