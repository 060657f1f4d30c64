#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "clidmu/clid.hpp"
#include "clidmu/networks.hpp"

namespace clidmu {

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Matrix& probs, std::span<const std::size_t> labels);

/// Relative performance ratio P_clean / P_noisy, for any metric.
double rpr(double p_clean, double p_noisy);

/// Pearson correlation. Throws on length < 2 or zero variance in either input.
double pearson(std::span<const double> a, std::span<const double> b);

inline constexpr std::size_t kClidSetCap = 2048;

/// CLID over a whole set as one graph when it has at most `cap` rows, otherwise
/// the mean over consecutive chunks of `cap` rows (a trailing chunk smaller than 2
/// is merged into the previous one).
double clid_on_set(const MlpClassifier& model, const Matrix& x, double tau, std::size_t cap = kClidSetCap);

struct MetricsRow {
    int epoch = 0;
    std::string setting;
    std::string split;  // train | meta | test
    double accuracy = 0.0;
    double ce_loss = 0.0;
    double clid = 0.0;
    std::map<std::string, double> grad_norms;  // train rows only
};

/// Ordered metric rows; CSV layout `epoch,setting,split,accuracy,ce_loss,clid,grad_norm_<block>...`.
class MetricsLog {
public:
    void add(MetricsRow row) { rows_.push_back(std::move(row)); }
    void append(const MetricsLog& other);
    const std::vector<MetricsRow>& rows() const noexcept { return rows_; }

    void write_csv(std::ostream& out) const;
    void write_csv(const std::filesystem::path& path) const;

    /// Rows for one (setting, split), in epoch order.
    std::vector<MetricsRow> select(const std::string& setting, const std::string& split) const;

private:
    std::vector<MetricsRow> rows_;
};

/// Per-epoch mean of per-block gradient norms across actual-train steps.
class GradMagnitudeTrace {
public:
    void record(const ParamVector& grad);
    /// Means since the last close, then resets. Every block seen is reported.
    std::map<std::string, double> close_epoch();

private:
    std::map<std::string, double> sums_;
    std::size_t steps_ = 0;
};

}  // namespace clidmu
