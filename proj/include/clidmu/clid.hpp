#pragma once

#include <optional>
#include <string_view>

#include "clidmu/networks.hpp"
#include "clidmu/numerics.hpp"

namespace clidmu {

inline constexpr double kDefaultTau = 0.5;
inline constexpr double kLogFloor = 1e-12;

/// Which branch of the cross-layer divergence is held constant when differentiating.
enum class StopGradient {
    target_q,  // class-probability graph is the fixed target; only embeddings receive gradient
    target_e,  // embedding graph is fixed; only class probabilities receive gradient
    none,
};

std::string_view to_string(StopGradient sg);
std::optional<StopGradient> parse_stop_gradient(std::string_view s);

struct SimilarityGraphs {
    Matrix ge;
    Matrix gq;
    Matrix ge_hat;
    Matrix gq_hat;
    double tau = kDefaultTau;
};

/// G^e_ij = exp(cos(z_i, z_j) / tau) over all i, j including the diagonal.
Matrix embedding_graph(const Matrix& z, double tau);
/// G^q_ij = cos(q_i, q_j).
Matrix class_prob_graph(const Matrix& q);

SimilarityGraphs build_graphs(const Matrix& z, const Matrix& q, double tau);

struct ClidScore {
    double value = 0.0;
    std::size_t batch_size = 0;
};

/// (1/m^2) sum_ij -Gq_hat_ij log max(Ge_hat_ij, 1e-12)
ClidScore clid_loss(const Matrix& gq_hat, const Matrix& ge_hat);

/// CLID of a model on a feature batch. Takes no labels.
ClidScore clid_of_model(const MlpClassifier& model, const Matrix& x, double tau);

/// Exact parameter gradient of the CLID loss on `x`, with the branch chosen by
/// `sg` held constant. Under target_q the head blocks are exactly zero.
ParamVector clid_grad(const MlpClassifier& model, const Matrix& x, double tau,
                      StopGradient sg = StopGradient::target_q);

}  // namespace clidmu
