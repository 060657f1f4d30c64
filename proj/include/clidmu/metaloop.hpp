#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clidmu/clid.hpp"
#include "clidmu/data.hpp"
#include "clidmu/ensemble.hpp"
#include "clidmu/eval.hpp"
#include "clidmu/networks.hpp"

namespace clidmu {

/// What the meta-model is trained to minimize. `none` disables meta-learning:
/// plain cross-entropy training with unit weights.
enum class MetaObjective { clid, ce, mae, none };

std::string_view to_string(MetaObjective o);
std::optional<MetaObjective> parse_meta_objective(std::string_view s);

struct TrainConfig {
    double alpha = 0.1;                       // classifier learning rate
    double gamma = 10.0;                      // meta learning rate
    double tau = kDefaultTau;
    std::size_t batch_size = 100;             // n
    std::size_t meta_batch_size = 100;        // m
    std::optional<std::size_t> max_iterations;  // T; defaults to epochs * batches per epoch
    std::size_t snapshots = kDefaultSnapshots;  // K
    std::size_t epochs = 30;
    MetaObjective meta_objective = MetaObjective::clid;
    MetaStrategy meta_strategy = MetaStrategy::random_noisy;
    std::size_t meta_set_size = 1000;         // M, used when the loop reselects
    std::size_t warmup_epochs = 0;            // pseudo-clean only
    StopGradient sg = StopGradient::target_q;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden = {64, 32};
    std::size_t meta_width = kDefaultMetaWidth;
    std::size_t clid_eval_cap = kClidSetCap;
    std::string setting = "run";              // tag written to metrics rows

    void validate() const;
};

/// Raised when a step produces a nonfinite value. Carries the last finite parameters.
class TrainingAborted : public NumericError {
public:
    TrainingAborted(const std::string& what, std::size_t iteration, ParamVector last_params)
        : NumericError(what), iteration(iteration), last_params(std::move(last_params)) {}
    std::size_t iteration;
    ParamVector last_params;
};

struct TrainerState {
    MlpClassifier model;  // theta^t
    MetaNet meta;         // psi^t
    std::size_t iteration = 0;
    std::size_t epoch = 0;

    static TrainerState init(const TrainConfig& cfg, std::size_t input_dim, std::size_t classes, Prng& rng);
};

struct Batch {
    Matrix x;
    Labels labels;  // noisy training labels
};

/// Meta batch. `labels` stays empty for the CLID objective, which never reads it.
struct MetaBatch {
    Matrix x;
    Labels labels;
};

struct VirtualOutputs {
    ParamVector theta_hat;
    Vector losses;                    // L_i at theta^t
    Vector weights;                   // Omega(L_i; psi^t)
    std::vector<ParamVector> grads;   // grad L_i at theta^t
    std::size_t iteration = 0;
};

/// theta_hat = theta^t - (alpha/n) sum_i Omega(L_i; psi^t) grad L_i(theta^t). Does not touch the state.
VirtualOutputs virtual_train_step(const TrainerState& state, const TrainConfig& cfg, const Batch& batch);

/// Gradient of the meta loss at `model`. CLID reads only meta.x.
ParamVector meta_loss_gradient(const TrainConfig& cfg, const MlpClassifier& model, const MetaBatch& meta);
/// Value of the meta loss at `model` (mean over the batch for CE and MAE).
double meta_loss_value(const TrainConfig& cfg, const MlpClassifier& model, const MetaBatch& meta);

/// psi^{t+1} = psi^t + (alpha gamma / n) sum_i g_i dOmega(L_i; psi^t)/dpsi with
/// g_i = grad L_i(theta^t) . grad L^meta(theta_hat).
MetaNet meta_train_step(const TrainerState& state, const TrainConfig& cfg, const VirtualOutputs& virt,
                        const MetaBatch& meta);

struct ActualOutputs {
    MlpClassifier model;   // theta^{t+1}
    ParamVector gradient;  // (1/n) sum_i Omega(L_i; psi^{t+1}) grad L_i(theta^t)
    Vector weights;
};

/// Re-weights the losses and per-sample gradients recorded at theta^t with the
/// current (already updated) meta-model and steps from theta^t.
ActualOutputs actual_train_step(const TrainerState& state, const TrainConfig& cfg, const VirtualOutputs& virt);

/// Meta-batch sampler: m uniform draws with replacement from `pool`.
MetaBatch sample_meta_batch(const Matrix& x, const Labels& labels, std::span<const std::size_t> pool,
                            std::size_t m, bool with_labels, Prng& rng);

struct TrainingResult {
    SnapshotStore snapshots;
    MetricsLog metrics;
    TrainerState final_state;
    double best_test_accuracy = 0.0;
    std::size_t iterations = 0;
};

/// Full bilevel loop. Train batches come from a shuffled partition per epoch,
/// meta batches are resampled every iteration. At each epoch end the model is
/// scored on the whole meta set with the configured objective (CLID when the
/// objective is `none`), offered to the snapshot store and logged.
/// Epochs are logged 1-based. The oracle_clean strategy reads y_clean of the meta rows; pseudo_clean_gmm
/// ignores `meta_set` and reselects after warmup at every epoch end.
TrainingResult run_training(const TrainConfig& cfg, const LabeledDataset& train, const MetaSet& meta_set,
                            const LabeledDataset& eval);

}  // namespace clidmu
