#pragma once

#include <span>
#include <vector>

namespace clidmu {

/// Two-component 1-D Gaussian mixture, component 0 has the lower mean.
struct LossMixture {
    double weight[2] = {0.5, 0.5};
    double mean[2] = {0.0, 0.0};
    double var[2] = {1.0, 1.0};
    double log_likelihood = 0.0;
    int iterations = 0;

    /// Posterior probability that `x` belongs to the low-mean component.
    double posterior_low(double x) const;
};

inline constexpr int kGmmMaxIter = 200;
inline constexpr double kGmmTol = 1e-8;

/// EM fit (at most 200 iterations, stops when the log-likelihood moves by less
/// than 1e-8), initialized from the lower and upper loss quartiles. Returns
/// false when the losses have no spread to separate.
bool fit_loss_mixture(std::span<const double> losses, LossMixture& out);

/// Small-loss selection: samples whose low-component posterior is >= 0.5 are
/// candidates; each noisy class contributes its floor(M/c) lowest-loss
/// candidates and any shortfall is filled by the globally lowest remaining
/// losses. A degenerate fit falls back to the M globally lowest losses.
/// Ties break on index. Returns sorted indices.
std::vector<std::size_t> select_pseudo_clean_gmm(std::span<const double> losses,
                                                 std::span<const std::size_t> labels, std::size_t classes,
                                                 std::size_t m);

}  // namespace clidmu
