#include "clidmu/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>

namespace clidmu {

double CorrelationReport::fraction_at_least(double rho, int after_epoch) const {
    std::size_t total = 0, strong = 0;
    for (const auto& row : rows) {
        if (row.epoch <= after_epoch) continue;
        ++total;
        strong += row.r && *row.r >= rho;
    }
    return total ? static_cast<double>(strong) / static_cast<double>(total) : 0.0;
}

void CorrelationReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,r";
    for (const auto& s : settings) out << ",rpr_ce_" << s;
    for (const auto& s : settings) out << ",rpr_clid_" << s;
    out << "\n";
    for (const auto& row : rows) {
        out << row.epoch << "," << (row.r ? format_double(*row.r) : std::string("undefined"));
        for (double v : row.rpr_ce) out << "," << format_double(v);
        for (double v : row.rpr_clid) out << "," << format_double(v);
        out << "\n";
    }
}

CorrelationReport correlate_metrics(const MetricsLog& log, const std::vector<std::string>& settings,
                                    std::size_t reference) {
    if (settings.size() < 3) throw NumericError("correlation: need at least 3 noise settings");
    if (reference >= settings.size()) throw NumericError("correlation: reference setting out of range");
    std::vector<std::vector<MetricsRow>> series;
    for (const auto& s : settings) series.push_back(log.select(s, "test"));
    std::size_t epochs = series.front().size();
    for (const auto& s : series) epochs = std::min(epochs, s.size());

    CorrelationReport rep;
    rep.settings = settings;
    rep.reference = reference;
    for (std::size_t e = 0; e < epochs; ++e) {
        CorrelationRow row;
        row.epoch = series.front()[e].epoch;
        Vector ce, clid;
        for (const auto& s : series) {
            ce.push_back(s[e].ce_loss);
            clid.push_back(s[e].clid);
        }
        try {
            row.r = pearson(ce, clid);
        } catch (const NumericError&) {
            row.r.reset();
        }
        for (std::size_t k = 0; k < settings.size(); ++k) {
            row.rpr_ce.push_back(ce[k] != 0.0 ? rpr(ce[reference], ce[k]) : std::nan(""));
            row.rpr_clid.push_back(clid[k] != 0.0 ? rpr(clid[reference], clid[k]) : std::nan(""));
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

CorrelationResult correlation_study(const CorrelationConfig& cfg) {
    if (cfg.rates.size() < 3) {
        throw NumericError("correlation: need at least 3 noise settings, got " + std::to_string(cfg.rates.size()));
    }
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) throw NumericError("correlation: bad test_fraction");

    const LabeledDataset all = generate_blobs(cfg.data_seed, cfg.blobs);
    const auto n_test = static_cast<std::size_t>(std::round(cfg.test_fraction * static_cast<double>(all.size())));
    if (n_test < 2 || n_test >= all.size()) throw NumericError("correlation: test split too small");
    std::vector<std::size_t> train_idx(all.size() - n_test), test_idx(n_test);
    std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
    std::iota(test_idx.begin(), test_idx.end(), train_idx.size());
    const LabeledDataset clean_train = all.subset(train_idx);
    const LabeledDataset test = all.subset(test_idx);

    std::vector<std::string> names;
    for (double r : cfg.rates) {
        std::string name = "p" + std::to_string(static_cast<int>(std::lround(r * 100)));
        if (std::find(names.begin(), names.end(), name) != names.end()) name += "_" + std::to_string(names.size());
        names.push_back(std::move(name));
    }
    const std::size_t reference =
        static_cast<std::size_t>(std::min_element(cfg.rates.begin(), cfg.rates.end()) - cfg.rates.begin());

    // Every setting shares the data, the noise stream and the model seed; only the rate differs.
    auto run_one = [&](std::size_t k) {
        NoiseSpec noise{cfg.noise, cfg.rates[k], cfg.data_seed ^ 0x5eedULL, kDefaultIdnStd};
        const LabeledDataset noisy = inject_noise(clean_train, noise);
        TrainConfig tc = cfg.train;
        tc.meta_objective = MetaObjective::none;
        tc.meta_strategy = MetaStrategy::random_noisy;
        tc.setting = names[k];
        Prng meta_rng(cfg.data_seed + 17);
        const MetaSet meta = select_meta_set(noisy, std::min(tc.meta_set_size, noisy.size()),
                                             MetaStrategy::random_noisy, meta_rng);
        return run_training(tc, noisy, meta, test).metrics;
    };

    std::vector<MetricsLog> logs(cfg.rates.size());
    if (cfg.parallel) {
        std::vector<std::future<MetricsLog>> jobs;
        for (std::size_t k = 0; k < cfg.rates.size(); ++k) jobs.push_back(std::async(std::launch::async, run_one, k));
        for (std::size_t k = 0; k < jobs.size(); ++k) logs[k] = jobs[k].get();
    } else {
        for (std::size_t k = 0; k < cfg.rates.size(); ++k) logs[k] = run_one(k);
    }
    CorrelationResult out;
    for (const auto& l : logs) out.metrics.append(l);
    out.report = correlate_metrics(out.metrics, names, reference);
    return out;
}

}  // namespace clidmu
