#include "clidmu/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace clidmu {

double accuracy(const Matrix& probs, std::span<const std::size_t> labels) {
    if (probs.rows() == 0) throw NumericError("accuracy: empty input");
    if (labels.size() != probs.rows()) throw NumericError("accuracy: label count mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        auto row = probs.row(i);
        std::size_t best = 0;
        for (std::size_t k = 1; k < row.size(); ++k) {
            if (row[k] > row[best]) best = k;
        }
        correct += best == labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

double rpr(double p_clean, double p_noisy) {
    if (p_noisy == 0.0) throw NumericError("rpr: zero denominator");
    return p_clean / p_noisy;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw NumericError("pearson: length mismatch");
    if (a.size() < 2) throw NumericError("pearson: need at least 2 points");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw NumericError("pearson: zero variance, correlation undefined");
    return std::clamp(sab / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
}

double clid_on_set(const MlpClassifier& model, const Matrix& x, double tau, std::size_t cap) {
    if (x.rows() < 2) throw NumericError("clid_on_set: need at least 2 rows");
    if (cap < 2) throw NumericError("clid_on_set: chunk cap must be at least 2");
    if (x.rows() <= cap) return clid_of_model(model, x, tau).value;

    std::vector<std::pair<std::size_t, std::size_t>> chunks;
    for (std::size_t start = 0; start < x.rows(); start += cap) {
        chunks.emplace_back(start, std::min(start + cap, x.rows()));
    }
    if (chunks.back().second - chunks.back().first < 2) {
        chunks[chunks.size() - 2].second = chunks.back().second;
        chunks.pop_back();
    }
    double total = 0.0;
    for (const auto& [lo, hi] : chunks) {
        std::vector<std::size_t> idx;
        for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
        total += clid_of_model(model, x.select_rows(idx), tau).value;
    }
    return total / static_cast<double>(chunks.size());
}

void MetricsLog::append(const MetricsLog& other) {
    rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end());
}

void MetricsLog::write_csv(std::ostream& out) const {
    std::set<std::string> blocks;
    for (const auto& r : rows_) {
        for (const auto& [name, _] : r.grad_norms) blocks.insert(name);
    }
    out << "epoch,setting,split,accuracy,ce_loss,clid";
    for (const auto& b : blocks) out << ",grad_norm_" << b;
    out << "\n";
    for (const auto& r : rows_) {
        out << r.epoch << "," << r.setting << "," << r.split << "," << format_double(r.accuracy) << ","
            << format_double(r.ce_loss) << "," << format_double(r.clid);
        for (const auto& b : blocks) {
            out << ",";
            if (auto it = r.grad_norms.find(b); it != r.grad_norms.end()) out << format_double(it->second);
        }
        out << "\n";
    }
}

void MetricsLog::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_csv(out);
}

std::vector<MetricsRow> MetricsLog::select(const std::string& setting, const std::string& split) const {
    std::vector<MetricsRow> out;
    for (const auto& r : rows_) {
        if (r.setting == setting && r.split == split) out.push_back(r);
    }
    return out;
}

void GradMagnitudeTrace::record(const ParamVector& grad) {
    for (const auto& [name, norm] : layer_grad_norms(grad)) sums_[name] += norm;
    ++steps_;
}

std::map<std::string, double> GradMagnitudeTrace::close_epoch() {
    std::map<std::string, double> out;
    for (const auto& [name, sum] : sums_) out[name] = steps_ ? sum / static_cast<double>(steps_) : 0.0;
    for (auto& [name, sum] : sums_) sum = 0.0;
    steps_ = 0;
    return out;
}

}  // namespace clidmu
