#include "clidmu/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace clidmu {

SnapshotStore::SnapshotStore(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw NumericError("snapshot store: capacity must be positive");
}

bool SnapshotStore::maybe_insert(Snapshot snap) {
    if (!std::isfinite(snap.score)) throw NumericError("snapshot store: nonfinite score");
    if (entries_.size() < capacity_) {
        entries_.push_back(std::move(snap));
        return true;
    }
    auto worst = entries_.begin();
    for (auto it = entries_.begin(); it != entries_.end(); ++it) {
        if (it->score > worst->score || (it->score == worst->score && it->epoch > worst->epoch)) worst = it;
    }
    if (snap.score < worst->score) {
        *worst = std::move(snap);
        return true;
    }
    return false;
}

Matrix ensemble_predict(const SnapshotStore& store, const Matrix& x) {
    if (store.empty()) throw NumericError("ensemble_predict: empty snapshot store");
    Matrix f;
    for (const auto& snap : store.entries()) {
        const auto model = MlpClassifier::from_params(snap.params);
        const auto trace = classifier_forward(model, x);
        if (f.empty()) {
            f = trace.probs;
        } else {
            if (trace.probs.cols() != f.cols()) throw NumericError("ensemble_predict: class count differs");
            for (std::size_t k = 0; k < f.values().size(); ++k) f.values()[k] += trace.probs.values()[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(store.size());
    for (double& v : f.values()) v *= inv;
    return f;
}

double exponential_loss(const Matrix& f, std::span<const std::size_t> labels) {
    if (labels.size() != f.rows() || labels.empty()) throw NumericError("exponential_loss: label count mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= f.cols()) throw NumericError("exponential_loss: label out of range");
        s += std::exp(-f(i, labels[i]));
    }
    return s / static_cast<double>(labels.size());
}

double per_snapshot_risk(const Snapshot& snap, const Matrix& x, std::span<const std::size_t> labels) {
    const auto model = MlpClassifier::from_params(snap.params);
    return exponential_loss(classifier_forward(model, x).probs, labels);
}

BoundReport exponential_bound(const Matrix& scores) {
    const std::size_t k_count = scores.rows();
    const std::size_t n = scores.cols();
    if (k_count == 0 || n == 0) throw NumericError("exponential_bound: empty scores");
    BoundReport r;
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) mean += scores(k, i);
        r.lhs += std::exp(-mean / static_cast<double>(k_count));
    }
    r.lhs /= static_cast<double>(n);
    double log_rhs = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
        double risk = 0.0;
        for (double s : scores.row(k)) risk += std::exp(-s);
        log_rhs += std::log(risk / static_cast<double>(n));
    }
    r.rhs = std::exp(log_rhs / static_cast<double>(k_count));
    r.holds = r.lhs <= r.rhs + kBoundSlack;
    return r;
}

BoundReport bound_check(const SnapshotStore& store, const Matrix& x, std::span<const std::size_t> labels) {
    if (store.empty()) throw NumericError("bound_check: empty snapshot store");
    if (labels.size() != x.rows()) throw NumericError("bound_check: label count mismatch");
    Matrix scores(store.size(), x.rows());
    for (std::size_t k = 0; k < store.size(); ++k) {
        const auto model = MlpClassifier::from_params(store.entries()[k].params);
        const auto q = classifier_forward(model, x).probs;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            if (labels[i] >= q.cols()) throw NumericError("bound_check: label out of range");
            scores(k, i) = q(i, labels[i]);
        }
    }
    return exponential_bound(scores);
}

// ------------------------------------------------------------------ file I/O

void write_snapshot(const std::filesystem::path& path, const Snapshot& snap) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write snapshot " + path.string());
    out << "clidmu-snapshot 1\n";
    out << "epoch " << snap.epoch << "\n";
    out << "score " << format_double(snap.score) << "\n";
    out << "blocks " << snap.params.blocks().size() << "\n";
    for (const auto& b : snap.params.blocks()) {
        out << "block " << b.name << " " << b.rows << " " << b.cols << "\n";
        auto vals = snap.params.block_values(b.name);
        for (std::size_t i = 0; i < vals.size(); ++i) out << (i ? " " : "") << format_double(vals[i]);
        out << "\n";
    }
    if (!out) throw std::runtime_error("failed writing snapshot " + path.string());
}

namespace {

template <class T>
T expect_field(std::istream& in, const std::string& key, const std::filesystem::path& path) {
    std::string k;
    T v{};
    if (!(in >> k) || k != key || !(in >> v)) {
        throw std::runtime_error(path.string() + ": expected '" + key + "' field");
    }
    return v;
}

}  // namespace

Snapshot read_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open snapshot " + path.string());
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "clidmu-snapshot" || version != 1) {
        throw std::runtime_error(path.string() + ": not a clidmu snapshot (v1)");
    }
    Snapshot snap;
    snap.epoch = expect_field<int>(in, "epoch", path);
    const auto score = expect_field<std::string>(in, "score", path);
    if (!parse_double(score, snap.score)) throw std::runtime_error(path.string() + ": bad score '" + score + "'");
    const auto n_blocks = expect_field<std::size_t>(in, "blocks", path);
    std::vector<ParamBlock> blocks;
    Vector values;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        ParamBlock blk;
        std::string tag;
        if (!(in >> tag >> blk.name >> blk.rows >> blk.cols) || tag != "block") {
            throw std::runtime_error(path.string() + ": malformed block header " + std::to_string(b));
        }
        blk.offset = values.size();
        for (std::size_t i = 0; i < blk.size(); ++i) {
            std::string token;
            double v = 0.0;
            if (!(in >> token)) throw std::runtime_error(path.string() + ": short block '" + blk.name + "'");
            if (!parse_double(token, v)) {
                throw std::runtime_error(path.string() + ": bad value '" + token + "' in block '" + blk.name + "'");
            }
            values.push_back(v);
        }
        blocks.push_back(std::move(blk));
    }
    snap.params = ParamVector(std::move(blocks), std::move(values));
    return snap;
}

SnapshotStore load_snapshot_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".snap") files.push_back(e.path());
    }
    if (files.empty()) throw std::runtime_error("no .snap files in " + dir.string());
    std::sort(files.begin(), files.end());
    SnapshotStore store(files.size());
    for (const auto& f : files) store.maybe_insert(read_snapshot(f));
    return store;
}

}  // namespace clidmu
