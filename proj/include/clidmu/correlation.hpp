#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "clidmu/data.hpp"
#include "clidmu/eval.hpp"
#include "clidmu/metaloop.hpp"

namespace clidmu {

inline constexpr double kStrongCorrelation = 0.7;

/// Trains one plain cross-entropy model per noise setting on a shared blob
/// dataset and relates test cross-entropy to test CLID across settings.
struct CorrelationConfig {
    BlobSpec blobs{4000, 8, 4, 2.5};
    double test_fraction = 0.25;
    std::uint64_t data_seed = 1;
    NoiseKind noise = NoiseKind::symmetric;
    std::vector<double> rates = {0.0, 0.2, 0.4, 0.6};
    TrainConfig train;  // meta_objective is forced to none
    bool parallel = true;
};

struct CorrelationRow {
    int epoch = 0;
    std::optional<double> r;     // nullopt when a series has zero variance
    std::vector<double> rpr_ce;   // per setting, reference CE / setting CE
    std::vector<double> rpr_clid;
};

struct CorrelationReport {
    std::vector<std::string> settings;
    std::size_t reference = 0;  // index of the clean (lowest-rate) setting
    std::vector<CorrelationRow> rows;

    /// Fraction of epochs > `after_epoch` whose r is defined and >= rho.
    double fraction_at_least(double rho, int after_epoch) const;
    /// `epoch,r,rpr_ce_<setting>...,rpr_clid_<setting>...`; undefined r is written as "undefined".
    void write_csv(const std::filesystem::path& path) const;
};

struct CorrelationResult {
    CorrelationReport report;
    MetricsLog metrics;
};

/// Throws NumericError when fewer than three settings are given.
CorrelationResult correlation_study(const CorrelationConfig& cfg);

/// Builds the report from per-setting test metrics already logged under the
/// setting names in `settings`.
CorrelationReport correlate_metrics(const MetricsLog& log, const std::vector<std::string>& settings,
                                    std::size_t reference);

}  // namespace clidmu
