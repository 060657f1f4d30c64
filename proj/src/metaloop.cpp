#include "clidmu/metaloop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clidmu/pseudo_clean.hpp"

namespace clidmu {

std::string_view to_string(MetaObjective o) {
    switch (o) {
        case MetaObjective::clid: return "clid";
        case MetaObjective::ce: return "ce";
        case MetaObjective::mae: return "mae";
        case MetaObjective::none: return "none";
    }
    return "?";
}

std::optional<MetaObjective> parse_meta_objective(std::string_view s) {
    if (s == "clid") return MetaObjective::clid;
    if (s == "ce") return MetaObjective::ce;
    if (s == "mae") return MetaObjective::mae;
    if (s == "none" || s == "plain") return MetaObjective::none;
    return std::nullopt;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw NumericError("config: " + msg); };
    if (!(alpha > 0.0) || !std::isfinite(alpha)) fail("alpha must be positive");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) fail("gamma must be positive");
    if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau must be positive");
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (meta_batch_size == 0) fail("meta_batch_size must be >= 1");
    if (meta_objective == MetaObjective::clid && meta_batch_size < 2) fail("CLID needs meta_batch_size >= 2");
    if (snapshots == 0) fail("snapshots must be >= 1");
    if (meta_set_size == 0) fail("meta_set_size must be >= 1");
    if (hidden.empty()) fail("hidden must list at least one layer width");
    for (std::size_t h : hidden) {
        if (h == 0) fail("hidden widths must be positive");
    }
    if (meta_width == 0) fail("meta_width must be >= 1");
    if (clid_eval_cap < 2) fail("clid_eval_cap must be >= 2");
}

TrainerState TrainerState::init(const TrainConfig& cfg, std::size_t input_dim, std::size_t classes, Prng& rng) {
    Prng model_rng = rng.fork(1);
    Prng meta_rng = rng.fork(2);
    TrainerState s;
    s.model = MlpClassifier::init(input_dim, cfg.hidden, classes, model_rng);
    s.meta = MetaNet::init(cfg.meta_width, meta_rng);
    return s;
}

namespace {

void require_finite(const Vector& v, const char* what, const TrainerState& state) {
    if (!all_finite(v)) {
        throw TrainingAborted(std::string("nonfinite ") + what + " at iteration " + std::to_string(state.iteration),
                              state.iteration, state.model.to_params());
    }
}

}  // namespace

VirtualOutputs virtual_train_step(const TrainerState& state, const TrainConfig& cfg, const Batch& batch) {
    const auto trace = classifier_forward(state.model, batch.x);
    VirtualOutputs out;
    out.iteration = state.iteration;
    out.losses = per_sample_ce(trace.probs, batch.labels);
    require_finite(out.losses, "training loss", state);
    out.weights = metanet_forward(state.meta, out.losses);
    out.grads = per_sample_grads(state.model, trace, batch.labels);
    out.theta_hat = state.model.to_params();
    const double step = cfg.alpha / static_cast<double>(out.grads.size());
    for (std::size_t i = 0; i < out.grads.size(); ++i) out.theta_hat.axpy(-step * out.weights[i], out.grads[i]);
    require_finite(out.theta_hat.values(), "virtual parameters", state);
    return out;
}

ParamVector meta_loss_gradient(const TrainConfig& cfg, const MlpClassifier& model, const MetaBatch& meta) {
    switch (cfg.meta_objective) {
        case MetaObjective::clid: return clid_grad(model, meta.x, cfg.tau, cfg.sg);
        case MetaObjective::ce: {
            const auto trace = classifier_forward(model, meta.x);
            const Vector ones(meta.x.rows(), 1.0);
            return backward_weighted_ce(model, trace, meta.labels, ones);
        }
        case MetaObjective::mae: return backward_mean_mae(model, classifier_forward(model, meta.x), meta.labels);
        case MetaObjective::none: break;
    }
    throw NumericError("meta_loss_gradient: objective 'none' has no meta loss");
}

double meta_loss_value(const TrainConfig& cfg, const MlpClassifier& model, const MetaBatch& meta) {
    auto mean = [](const Vector& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
    switch (cfg.meta_objective) {
        case MetaObjective::clid:
        case MetaObjective::none: return clid_of_model(model, meta.x, cfg.tau).value;
        case MetaObjective::ce: return mean(per_sample_ce(classifier_forward(model, meta.x).probs, meta.labels));
        case MetaObjective::mae: return mean(per_sample_mae(classifier_forward(model, meta.x).probs, meta.labels));
    }
    return 0.0;
}

MetaNet meta_train_step(const TrainerState& state, const TrainConfig& cfg, const VirtualOutputs& virt,
                        const MetaBatch& meta) {
    if (virt.iteration != state.iteration) {
        throw NumericError("meta_train_step: virtual outputs belong to iteration " + std::to_string(virt.iteration) +
                           ", state is at " + std::to_string(state.iteration));
    }
    const auto model_hat = MlpClassifier::from_params(virt.theta_hat);
    const ParamVector h = meta_loss_gradient(cfg, model_hat, meta);
    require_finite(h.values(), "meta-loss gradient", state);

    ParamVector psi = state.meta.to_params();
    const double step = cfg.alpha * cfg.gamma / static_cast<double>(virt.grads.size());
    for (std::size_t i = 0; i < virt.grads.size(); ++i) {
        const double g = virt.grads[i].dot(h);
        if (!std::isfinite(g)) {
            throw TrainingAborted("nonfinite g_i at iteration " + std::to_string(state.iteration), state.iteration,
                                  state.model.to_params());
        }
        if (g == 0.0) continue;
        psi.axpy(step * g, metanet_grad(state.meta, virt.losses[i]));
    }
    require_finite(psi.values(), "meta parameters", state);
    MetaNet out = state.meta;
    out.load(psi);
    return out;
}

ActualOutputs actual_train_step(const TrainerState& state, const TrainConfig& cfg, const VirtualOutputs& virt) {
    ActualOutputs out;
    out.weights = metanet_forward(state.meta, virt.losses);
    out.gradient = ParamVector::zeros_like(virt.grads.front());
    const double inv_n = 1.0 / static_cast<double>(virt.grads.size());
    for (std::size_t i = 0; i < virt.grads.size(); ++i) out.gradient.axpy(out.weights[i] * inv_n, virt.grads[i]);
    ParamVector theta = state.model.to_params();
    theta.axpy(-cfg.alpha, out.gradient);
    require_finite(theta.values(), "parameters", state);
    out.model = state.model;
    out.model.load(theta);
    return out;
}

MetaBatch sample_meta_batch(const Matrix& x, const Labels& labels, std::span<const std::size_t> pool, std::size_t m,
                            bool with_labels, Prng& rng) {
    if (pool.empty()) throw NumericError("sample_meta_batch: empty meta set");
    std::vector<std::size_t> idx(m);
    for (auto& i : idx) i = pool[rng.uniform_index(pool.size())];
    MetaBatch mb;
    mb.x = x.select_rows(idx);
    if (with_labels) {
        for (std::size_t i : idx) mb.labels.push_back(labels[i]);
    }
    return mb;
}

// ------------------------------------------------------------------ main loop

namespace {

double mean_of(const Vector& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

MetricsRow evaluate_split(const TrainConfig& cfg, const MlpClassifier& model, const Matrix& x, const Labels& labels,
                          int epoch, const char* split) {
    MetricsRow row;
    row.epoch = epoch;
    row.setting = cfg.setting;
    row.split = split;
    const auto q = classifier_forward(model, x).probs;
    row.accuracy = accuracy(q, labels);
    row.ce_loss = mean_of(per_sample_ce(q, labels));
    row.clid = x.rows() >= 2 ? clid_on_set(model, x, cfg.tau, cfg.clid_eval_cap) : 0.0;
    return row;
}

}  // namespace

TrainingResult run_training(const TrainConfig& cfg, const LabeledDataset& train, const MetaSet& meta_set,
                            const LabeledDataset& eval) {
    cfg.validate();
    train.validate();
    eval.validate();
    if (train.size() == 0) throw NumericError("run_training: empty training set");
    if (eval.size() > 0 && eval.dim() != train.dim()) throw NumericError("run_training: eval feature width differs");

    const bool pseudo = cfg.meta_strategy == MetaStrategy::pseudo_clean_gmm;
    const bool uses_meta = cfg.meta_objective != MetaObjective::none;
    if (!pseudo && meta_set.indices.empty()) throw NumericError("run_training: empty meta set");
    for (std::size_t i : meta_set.indices) {
        if (i >= train.size()) throw NumericError("run_training: meta index out of range");
    }

    Prng root(cfg.seed);
    TrainingResult result{SnapshotStore(cfg.snapshots), {}, TrainerState::init(cfg, train.dim(), train.classes, root),
                          0.0, 0};
    TrainerState& state = result.final_state;
    Prng batch_rng = root.fork(3);
    Prng meta_rng = root.fork(4);

    // The only place clean labels enter training: the oracle ceiling baseline.
    const Labels& meta_labels = cfg.meta_strategy == MetaStrategy::oracle_clean ? train.y_clean : train.y_noisy;
    const bool meta_needs_labels = cfg.meta_objective == MetaObjective::ce || cfg.meta_objective == MetaObjective::mae;

    std::vector<std::size_t> pool = pseudo ? std::vector<std::size_t>{} : meta_set.indices;
    auto reselect = [&] {
        const auto losses = per_sample_ce(classifier_forward(state.model, train.x).probs, train.y_noisy);
        pool = select_pseudo_clean_gmm(losses, train.y_noisy, train.classes, std::min(cfg.meta_set_size, train.size()));
    };
    if (pseudo && cfg.warmup_epochs == 0) reselect();

    const std::size_t n = std::min(cfg.batch_size, train.size());
    const std::size_t per_epoch = (train.size() + n - 1) / n;
    const std::size_t total = cfg.max_iterations.value_or(cfg.epochs * per_epoch);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    GradMagnitudeTrace grad_trace;

    // Any numeric failure mid-run becomes an abort carrying the last committed parameters.
    try {
        for (std::size_t t = 0; t < total; ++t) {
            const std::size_t slot = t % per_epoch;
            if (slot == 0) batch_rng.shuffle(order);
            const std::size_t lo = slot * n;
            const std::size_t hi = std::min(lo + n, train.size());
            const std::span<const std::size_t> idx(order.data() + lo, hi - lo);

            Batch batch{train.x.select_rows(idx), {}};
            for (std::size_t i : idx) batch.labels.push_back(train.y_noisy[i]);

            const bool meta_step = uses_meta && !pool.empty();
            ParamVector applied;
            if (meta_step) {
                const auto virt = virtual_train_step(state, cfg, batch);
                const auto mb =
                    sample_meta_batch(train.x, meta_labels, pool, cfg.meta_batch_size, meta_needs_labels, meta_rng);
                state.meta = meta_train_step(state, cfg, virt, mb);
                auto act = actual_train_step(state, cfg, virt);
                state.model = std::move(act.model);
                applied = std::move(act.gradient);
            } else {
                // Plain cross-entropy step (objective none, or pseudo-clean warmup).
                const auto trace = classifier_forward(state.model, batch.x);
                const Vector ones(batch.x.rows(), 1.0);
                applied = backward_weighted_ce(state.model, trace, batch.labels, ones);
                ParamVector theta = state.model.to_params();
                theta.axpy(-cfg.alpha, applied);
                require_finite(theta.values(), "parameters", state);
                state.model.load(theta);
            }
            grad_trace.record(applied);
            state.iteration = t + 1;

            const bool epoch_end = (t + 1) % per_epoch == 0 || t + 1 == total;
            if (!epoch_end) continue;
            const int epoch = static_cast<int>(state.epoch) + 1;  // completed epochs
            if (pseudo && state.epoch + 1 >= cfg.warmup_epochs) reselect();

            auto train_row = evaluate_split(cfg, state.model, train.x, train.y_noisy, epoch, "train");
            train_row.grad_norms = grad_trace.close_epoch();
            result.metrics.add(std::move(train_row));

            if (!pool.empty()) {
                const Matrix meta_x = train.x.select_rows(pool);
                Labels pool_labels;
                for (std::size_t i : pool) pool_labels.push_back(meta_labels[i]);
                double score = 0.0;
                if (cfg.meta_objective == MetaObjective::clid || cfg.meta_objective == MetaObjective::none) {
                    score = pool.size() >= 2 ? clid_on_set(state.model, meta_x, cfg.tau, cfg.clid_eval_cap) : 0.0;
                } else {
                    score = meta_loss_value(cfg, state.model, MetaBatch{meta_x, pool_labels});
                }
                if (!std::isfinite(score)) {
                    throw TrainingAborted("nonfinite snapshot score at epoch " + std::to_string(epoch), state.iteration,
                                          state.model.to_params());
                }
                result.snapshots.maybe_insert(Snapshot{state.model.to_params(), score, epoch});
                result.metrics.add(evaluate_split(cfg, state.model, meta_x, pool_labels, epoch, "meta"));
            }
            if (eval.size() > 0) {
                auto test_row = evaluate_split(cfg, state.model, eval.x, eval.y_clean, epoch, "test");
                result.best_test_accuracy = std::max(result.best_test_accuracy, test_row.accuracy);
                result.metrics.add(std::move(test_row));
            }
            ++state.epoch;
        }
    } catch (const TrainingAborted&) {
        throw;
    } catch (const NumericError& e) {
        throw TrainingAborted(std::string(e.what()) + " at iteration " + std::to_string(state.iteration),
                              state.iteration, state.model.to_params());
    }
    result.iterations = state.iteration;
    return result;
}

}  // namespace clidmu
