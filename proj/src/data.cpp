#include "clidmu/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "clidmu/pseudo_clean.hpp"

namespace clidmu {

void LabeledDataset::validate() const {
    if (y_clean.size() != x.rows() || y_noisy.size() != x.rows()) {
        throw DataError("dataset: label vectors do not match row count");
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        if (y_clean[i] >= classes || y_noisy[i] >= classes) {
            throw DataError("dataset: label out of range at row " + std::to_string(i));
        }
    }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.x = x.select_rows(indices);
    out.classes = classes;
    for (std::size_t i : indices) {
        out.y_clean.push_back(y_clean[i]);
        out.y_noisy.push_back(y_noisy[i]);
    }
    return out;
}

double LabeledDataset::noise_rate() const {
    if (size() == 0) return 0.0;
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < size(); ++i) flipped += y_clean[i] != y_noisy[i];
    return static_cast<double>(flipped) / static_cast<double>(size());
}

LabeledDataset generate_blobs(std::uint64_t seed, const BlobSpec& spec) {
    if (spec.classes == 0 || spec.n < spec.classes) throw DataError("generate_blobs: need n >= classes >= 1");
    if (spec.dim < 2) throw DataError("generate_blobs: need dim >= 2");
    if (!(spec.class_sep >= 0.0)) throw DataError("generate_blobs: class_sep must be nonnegative");

    Matrix means(spec.classes, spec.dim);
    if (spec.classes <= spec.dim) {
        for (std::size_t k = 0; k < spec.classes; ++k) means(k, k) = spec.class_sep / std::numbers::sqrt2;
    } else {
        const double radius = spec.class_sep / (2.0 * std::sin(std::numbers::pi / static_cast<double>(spec.classes)));
        for (std::size_t k = 0; k < spec.classes; ++k) {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.classes);
            means(k, 0) = radius * std::cos(angle);
            means(k, 1) = radius * std::sin(angle);
        }
    }

    Prng rng(seed);
    Labels labels(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) labels[i] = i % spec.classes;
    rng.shuffle(labels);

    LabeledDataset ds;
    ds.classes = spec.classes;
    ds.x = Matrix(spec.n, spec.dim);
    for (std::size_t i = 0; i < spec.n; ++i) {
        for (std::size_t j = 0; j < spec.dim; ++j) ds.x(i, j) = means(labels[i], j) + rng.normal();
    }
    ds.y_clean = labels;
    ds.y_noisy = std::move(labels);
    return ds;
}

// ----------------------------------------------------------------------- noise

std::string_view to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::symmetric: return "symmetric";
        case NoiseKind::asymmetric: return "asymmetric";
        case NoiseKind::instance_dependent: return "instance";
    }
    return "?";
}

std::optional<NoiseKind> parse_noise_kind(std::string_view s) {
    if (s == "symmetric" || s == "sym") return NoiseKind::symmetric;
    if (s == "asymmetric" || s == "asym") return NoiseKind::asymmetric;
    if (s == "instance" || s == "instance_dependent" || s == "idn") return NoiseKind::instance_dependent;
    return std::nullopt;
}

namespace {

void check_noise_args(const LabeledDataset& ds, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("noise rate must lie in [0, 1]");
    if (p > 0.0 && ds.classes < 2) throw DataError("label noise needs at least 2 classes");
}

}  // namespace

LabeledDataset inject_symmetric(LabeledDataset ds, double p, Prng& rng) {
    check_noise_args(ds, p);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!rng.bernoulli(p)) {
            ds.y_noisy[i] = ds.y_clean[i];
            continue;
        }
        std::size_t other = rng.uniform_index(ds.classes - 1);
        if (other >= ds.y_clean[i]) ++other;
        ds.y_noisy[i] = other;
    }
    return ds;
}

LabeledDataset inject_asymmetric(LabeledDataset ds, double p, Prng& rng) {
    check_noise_args(ds, p);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        ds.y_noisy[i] = rng.bernoulli(p) ? (ds.y_clean[i] + 1) % ds.classes : ds.y_clean[i];
    }
    return ds;
}

double sample_truncated_normal(double mean, double stddev, Prng& rng) {
    if (stddev <= 0.0) return std::clamp(mean, 0.0, 1.0);
    // Acceptance probability is at least ~16% for mean in [0,1] and stddev <= 1;
    // the cap only guards against pathological arguments.
    for (int attempt = 0; attempt < 100000; ++attempt) {
        const double v = rng.normal(mean, stddev);
        if (v >= 0.0 && v <= 1.0) return v;
    }
    throw DataError("truncated normal: rejection sampler did not converge");
}

double truncated_normal_mean(double mean, double stddev) {
    if (stddev <= 0.0) return std::clamp(mean, 0.0, 1.0);
    auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
    auto cdf = [](double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); };
    const double a = (0.0 - mean) / stddev;
    const double b = (1.0 - mean) / stddev;
    return mean + stddev * (pdf(a) - pdf(b)) / (cdf(b) - cdf(a));
}

LabeledDataset inject_instance_dependent(LabeledDataset ds, double p, Prng& rng, double stddev) {
    check_noise_args(ds, p);
    if (ds.classes < 2) throw DataError("instance-dependent noise needs at least 2 classes");
    if (!(stddev >= 0.0)) throw DataError("instance-dependent noise: stddev must be nonnegative");
    const std::size_t d = ds.dim();
    const std::size_t c = ds.classes;
    // One d x c projection per clean class, shared by every sample of that class.
    std::vector<Matrix> w(c, Matrix(d, c));
    for (auto& m : w) {
        for (double& v : m.values()) v = rng.normal();
    }
    Vector scores(c);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double rate = sample_truncated_normal(p, stddev, rng);
        const std::size_t y = ds.y_clean[i];
        std::fill(scores.begin(), scores.end(), 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t k = 0; k < c; ++k) scores[k] += ds.x(i, j) * w[y](j, k);
        }
        ds.y_noisy[i] = y;
        if (!rng.bernoulli(rate)) continue;
        Vector others;
        std::vector<std::size_t> ids;
        for (std::size_t k = 0; k < c; ++k) {
            if (k == y) continue;
            others.push_back(scores[k]);
            ids.push_back(k);
        }
        const Vector probs = softmax(others);
        double u = rng.uniform();
        std::size_t pick = ids.back();
        for (std::size_t k = 0; k < probs.size(); ++k) {
            if (u < probs[k]) {
                pick = ids[k];
                break;
            }
            u -= probs[k];
        }
        ds.y_noisy[i] = pick;
    }
    return ds;
}

LabeledDataset inject_noise(LabeledDataset ds, const NoiseSpec& spec) {
    Prng rng(spec.seed);
    switch (spec.kind) {
        case NoiseKind::symmetric: return inject_symmetric(std::move(ds), spec.rate, rng);
        case NoiseKind::asymmetric: return inject_asymmetric(std::move(ds), spec.rate, rng);
        case NoiseKind::instance_dependent:
            return inject_instance_dependent(std::move(ds), spec.rate, rng, spec.idn_std);
    }
    return ds;
}

// -------------------------------------------------------------------- meta set

std::string_view to_string(MetaStrategy s) {
    switch (s) {
        case MetaStrategy::random_noisy: return "random";
        case MetaStrategy::class_balanced_noisy: return "balanced";
        case MetaStrategy::pseudo_clean_gmm: return "pseudo-clean";
        case MetaStrategy::oracle_clean: return "oracle-clean";
    }
    return "?";
}

std::optional<MetaStrategy> parse_meta_strategy(std::string_view s) {
    if (s == "random" || s == "random_noisy") return MetaStrategy::random_noisy;
    if (s == "balanced" || s == "class_balanced_noisy") return MetaStrategy::class_balanced_noisy;
    if (s == "pseudo-clean" || s == "pseudo_clean_gmm") return MetaStrategy::pseudo_clean_gmm;
    if (s == "oracle-clean" || s == "oracle_clean") return MetaStrategy::oracle_clean;
    return std::nullopt;
}

namespace {

std::vector<std::size_t> balanced_by(const Labels& labels, std::size_t classes, std::size_t m, Prng& rng) {
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    const std::size_t per_class = m / classes;
    std::vector<std::size_t> chosen;
    std::vector<std::size_t> leftovers;
    for (std::size_t k = 0; k < classes; ++k) {
        auto& pool = by_class[k];
        if (pool.size() < per_class) {
            throw DataError("meta set: class " + std::to_string(k) + " has " + std::to_string(pool.size()) +
                            " samples, need " + std::to_string(per_class));
        }
        rng.shuffle(pool);
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_class));
        leftovers.insert(leftovers.end(), pool.begin() + static_cast<std::ptrdiff_t>(per_class), pool.end());
    }
    // m not divisible by c: top up uniformly from what is left.
    rng.shuffle(leftovers);
    for (std::size_t i = 0; chosen.size() < m; ++i) chosen.push_back(leftovers[i]);
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

}  // namespace

MetaSet select_meta_set(const LabeledDataset& ds, std::size_t m, MetaStrategy strategy, Prng& rng,
                        std::optional<std::span<const double>> losses) {
    if (m == 0 || m > ds.size()) {
        throw DataError("meta set: size " + std::to_string(m) + " not in [1, " + std::to_string(ds.size()) + "]");
    }
    MetaSet out;
    out.strategy = strategy;
    switch (strategy) {
        case MetaStrategy::random_noisy: {
            std::vector<std::size_t> all(ds.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            rng.shuffle(all);
            all.resize(m);
            std::sort(all.begin(), all.end());
            out.indices = std::move(all);
            break;
        }
        case MetaStrategy::class_balanced_noisy: out.indices = balanced_by(ds.y_noisy, ds.classes, m, rng); break;
        case MetaStrategy::oracle_clean: out.indices = balanced_by(ds.y_clean, ds.classes, m, rng); break;
        case MetaStrategy::pseudo_clean_gmm:
            if (!losses) throw DataError("meta set: pseudo-clean selection needs per-sample losses");
            out.indices = select_pseudo_clean_gmm(*losses, ds.y_noisy, ds.classes, m);
            break;
    }
    return out;
}

// ------------------------------------------------------------------------- CSV

void write_csv(const std::filesystem::path& path, const LabeledDataset& ds) {
    ds.validate();
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (std::size_t j = 0; j < ds.dim(); ++j) out << "x_" << j << ",";
    out << "label_noisy,label_clean\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) out << format_double(ds.x(i, j)) << ",";
        out << ds.y_noisy[i] << "," << ds.y_clean[i] << "\n";
    }
    if (!out) throw DataError("failed writing " + path.string());
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

std::string where(const std::filesystem::path& path, std::size_t line, std::size_t col) {
    return path.string() + ":" + std::to_string(line) + ": column " + std::to_string(col + 1);
}

}  // namespace

LabeledDataset read_csv(const std::filesystem::path& path, std::optional<std::size_t> classes) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_commas(line);
    if (header.size() < 3) throw DataError(path.string() + ":1: header needs features and both label columns");
    const std::size_t d = header.size() - 2;
    for (std::size_t j = 0; j < d; ++j) {
        if (header[j] != "x_" + std::to_string(j)) {
            throw DataError(where(path, 1, j) + ": expected header 'x_" + std::to_string(j) + "', got '" +
                            std::string(header[j]) + "'");
        }
    }
    if (header[d] != "label_noisy") throw DataError(where(path, 1, d) + ": expected 'label_noisy'");
    if (header[d + 1] != "label_clean") throw DataError(where(path, 1, d + 1) + ": expected 'label_clean'");

    std::vector<double> values;
    LabeledDataset ds;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != d + 2) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(d + 2) +
                            " cells, got " + std::to_string(cells.size()));
        }
        for (std::size_t j = 0; j < d; ++j) {
            double v = 0.0;
            if (!parse_double(cells[j], v)) {
                throw DataError(where(path, line_no, j) + ": not a number: '" + std::string(cells[j]) + "'");
            }
            values.push_back(v);
        }
        for (std::size_t j = d; j < d + 2; ++j) {
            std::size_t v = 0;
            const auto* first = cells[j].data();
            const auto* last = first + cells[j].size();
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || ptr != last || cells[j].empty()) {
                throw DataError(where(path, line_no, j) + ": not a class index: '" + std::string(cells[j]) + "'");
            }
            (j == d ? ds.y_noisy : ds.y_clean).push_back(v);
        }
    }
    const std::size_t n = ds.y_noisy.size();
    ds.x = Matrix(n, d, std::move(values));
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < n; ++i) max_label = std::max({max_label, ds.y_noisy[i], ds.y_clean[i]});
    ds.classes = classes.value_or(n == 0 ? 0 : max_label + 1);
    ds.validate();
    return ds;
}

}  // namespace clidmu
