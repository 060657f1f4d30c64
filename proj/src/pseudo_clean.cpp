#include "clidmu/pseudo_clean.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "clidmu/data.hpp"

namespace clidmu {

namespace {

constexpr double kVarFloor = 1e-12;

double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double LossMixture::posterior_low(double x) const {
    const double l0 = std::log(weight[0]) + log_normal_pdf(x, mean[0], var[0]);
    const double l1 = std::log(weight[1]) + log_normal_pdf(x, mean[1], var[1]);
    const double mx = std::max(l0, l1);
    const double e0 = std::exp(l0 - mx);
    return e0 / (e0 + std::exp(l1 - mx));
}

bool fit_loss_mixture(std::span<const double> losses, LossMixture& out) {
    const std::size_t n = losses.size();
    if (n < 2) return false;
    const auto [mn, mx] = std::minmax_element(losses.begin(), losses.end());
    if (!(*mx > *mn)) return false;

    std::vector<double> v(losses.begin(), losses.end());
    LossMixture g;
    g.mean[0] = quantile(v, 0.25);
    g.mean[1] = quantile(v, 0.75);
    if (!(g.mean[1] > g.mean[0])) {
        g.mean[0] = *mn;
        g.mean[1] = *mx;
    }
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double x : v) var += (x - mu) * (x - mu);
    var = std::max(var / static_cast<double>(n), kVarFloor);
    g.var[0] = g.var[1] = var;

    std::vector<double> resp(n);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < kGmmMaxIter; ++it) {
        // E-step
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double l0 = std::log(g.weight[0]) + log_normal_pdf(v[i], g.mean[0], g.var[0]);
            const double l1 = std::log(g.weight[1]) + log_normal_pdf(v[i], g.mean[1], g.var[1]);
            const double m = std::max(l0, l1);
            const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
            resp[i] = std::exp(l0 - lse);
            ll += lse;
        }
        g.log_likelihood = ll;
        g.iterations = it + 1;
        // M-step
        double n0 = 0.0, s0 = 0.0, s1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            n0 += resp[i];
            s0 += resp[i] * v[i];
            s1 += (1.0 - resp[i]) * v[i];
        }
        const double n1 = static_cast<double>(n) - n0;
        if (n0 <= 0.0 || n1 <= 0.0) return false;
        g.mean[0] = s0 / n0;
        g.mean[1] = s1 / n1;
        double v0 = 0.0, v1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            v0 += resp[i] * (v[i] - g.mean[0]) * (v[i] - g.mean[0]);
            v1 += (1.0 - resp[i]) * (v[i] - g.mean[1]) * (v[i] - g.mean[1]);
        }
        g.var[0] = std::max(v0 / n0, kVarFloor);
        g.var[1] = std::max(v1 / n1, kVarFloor);
        g.weight[0] = n0 / static_cast<double>(n);
        g.weight[1] = n1 / static_cast<double>(n);
        if (std::abs(ll - prev_ll) < kGmmTol) break;
        prev_ll = ll;
    }
    if (g.mean[0] > g.mean[1]) {
        std::swap(g.mean[0], g.mean[1]);
        std::swap(g.var[0], g.var[1]);
        std::swap(g.weight[0], g.weight[1]);
    }
    out = g;
    return true;
}

std::vector<std::size_t> select_pseudo_clean_gmm(std::span<const double> losses, std::span<const std::size_t> labels,
                                                 std::size_t classes, std::size_t m) {
    const std::size_t n = losses.size();
    if (labels.size() != n) throw DataError("pseudo-clean: label count != loss count");
    if (m > n) throw DataError("pseudo-clean: requested more samples than available");
    if (classes == 0) throw DataError("pseudo-clean: zero classes");

    std::vector<std::size_t> by_loss(n);
    std::iota(by_loss.begin(), by_loss.end(), std::size_t{0});
    std::stable_sort(by_loss.begin(), by_loss.end(),
                     [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });

    std::vector<std::size_t> chosen;
    std::vector<bool> taken(n, false);
    LossMixture gmm;
    if (fit_loss_mixture(losses, gmm)) {
        const std::size_t per_class = m / classes;
        std::vector<std::size_t> count(classes, 0);
        for (std::size_t i : by_loss) {
            if (labels[i] >= classes) throw DataError("pseudo-clean: label out of range");
            if (count[labels[i]] >= per_class || gmm.posterior_low(losses[i]) < 0.5) continue;
            ++count[labels[i]];
            taken[i] = true;
            chosen.push_back(i);
        }
    }
    for (std::size_t i : by_loss) {
        if (chosen.size() >= m) break;
        if (!taken[i]) {
            taken[i] = true;
            chosen.push_back(i);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

}  // namespace clidmu
