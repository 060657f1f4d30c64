#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "clidmu/networks.hpp"

namespace clidmu {

inline constexpr std::size_t kDefaultSnapshots = 5;

struct Snapshot {
    ParamVector params;
    double score = 0.0;  // lower is better
    int epoch = 0;
};

/// Bounded list of the K lowest-scoring snapshots seen so far.
class SnapshotStore {
public:
    explicit SnapshotStore(std::size_t capacity = kDefaultSnapshots);

    /// Appends while below capacity; otherwise replaces the worst entry iff
    /// `snap.score` is strictly smaller. Among equal worst scores the later
    /// epoch is evicted, so earlier epochs win ties. Returns whether it was kept.
    bool maybe_insert(Snapshot snap);

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::vector<Snapshot>& entries() const noexcept { return entries_; }

private:
    std::size_t capacity_;
    std::vector<Snapshot> entries_;
};

/// Mean of the snapshots' softmax outputs.
Matrix ensemble_predict(const SnapshotStore& store, const Matrix& x);

/// (1/n) sum_i exp(-F[i, y_i])
double exponential_loss(const Matrix& f, std::span<const std::size_t> labels);
/// R_k for a single snapshot.
double per_snapshot_risk(const Snapshot& snap, const Matrix& x, std::span<const std::size_t> labels);

struct BoundReport {
    double lhs = 0.0;  // L^exp of the averaged ensemble
    double rhs = 0.0;  // prod_k R_k^(1/K)
    bool holds = false;
};

inline constexpr double kBoundSlack = 1e-12;

/// Evaluates both sides of the ensemble exponential-loss bound from raw
/// true-class scores: row k holds f^k_{y_i}(x_i) for every sample i.
BoundReport exponential_bound(const Matrix& true_class_scores);

BoundReport bound_check(const SnapshotStore& store, const Matrix& x, std::span<const std::size_t> labels);

// Snapshot files: see README "Snapshot file format".
void write_snapshot(const std::filesystem::path& path, const Snapshot& snap);
Snapshot read_snapshot(const std::filesystem::path& path);
/// Loads every *.snap file in `dir` in filename order into an unbounded store.
SnapshotStore load_snapshot_dir(const std::filesystem::path& dir);

}  // namespace clidmu
