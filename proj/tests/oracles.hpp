#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's forward or loss code; only the plain containers
// are shared.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "clidmu/networks.hpp"

namespace oracle {

using clidmu::Matrix;
using clidmu::MlpClassifier;
using clidmu::ParamVector;
using clidmu::Vector;

inline constexpr double kStep = 1e-6;

/// Central differences of f around p, one coordinate at a time.
inline Vector central_diff(const std::function<double(const ParamVector&)>& f, const ParamVector& p,
                           double h = kStep) {
    Vector out(p.size());
    ParamVector probe = p;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double orig = probe.values()[j];
        probe.values()[j] = orig + h;
        const double up = f(probe);
        probe.values()[j] = orig - h;
        const double down = f(probe);
        probe.values()[j] = orig;
        out[j] = (up - down) / (2.0 * h);
    }
    return out;
}

/// max|a - b| / max(max|a|, max|b|); zero when both vectors vanish.
inline double max_rel_error(const Vector& a, const Vector& b) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return scale == 0.0 ? 0.0 : diff / scale;
}

inline double cosine(const Vector& a, const Vector& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

struct NaiveOut {
    std::vector<Vector> z;
    std::vector<Vector> q;
};

/// Textbook loop forward pass: h <- relu(W h + b) per extractor layer, then softmax(W z + b).
inline NaiveOut naive_forward(const MlpClassifier& m, const Matrix& x) {
    NaiveOut out;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        Vector h(x.row(i).begin(), x.row(i).end());
        for (const auto& layer : m.extractor) {
            Vector next(layer.weight.rows());
            for (std::size_t o = 0; o < next.size(); ++o) {
                double s = layer.bias[o];
                for (std::size_t k = 0; k < h.size(); ++k) s += layer.weight(o, k) * h[k];
                next[o] = s > 0.0 ? s : 0.0;
            }
            h = std::move(next);
        }
        Vector logits(m.head.weight.rows());
        double mx = -1e300;
        for (std::size_t o = 0; o < logits.size(); ++o) {
            double s = m.head.bias[o];
            for (std::size_t k = 0; k < h.size(); ++k) s += m.head.weight(o, k) * h[k];
            logits[o] = s;
            mx = std::max(mx, s);
        }
        double total = 0.0;
        for (double& l : logits) total += (l = std::exp(l - mx));
        for (double& l : logits) l /= total;
        out.z.push_back(h);
        out.q.push_back(logits);
    }
    return out;
}

/// Row-normalized graphs built straight from the definitions.
inline std::vector<Vector> naive_graph(const std::vector<Vector>& rows, bool exponential, double tau) {
    const std::size_t m = rows.size();
    std::vector<Vector> g(m, Vector(m));
    for (std::size_t i = 0; i < m; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double c = cosine(rows[i], rows[j]);
            g[i][j] = exponential ? std::exp(c / tau) : c;
            total += g[i][j];
        }
        for (double& v : g[i]) v /= total;
    }
    return g;
}

inline double naive_cross_entropy(const std::vector<Vector>& target, const std::vector<Vector>& pred) {
    const double m = static_cast<double>(target.size());
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        for (std::size_t j = 0; j < target.size(); ++j) s -= target[i][j] * std::log(std::max(pred[i][j], 1e-12));
    }
    return s / (m * m);
}

/// CLID of a model. When `frozen_q` is given it replaces the class-probability
/// target; when `frozen_e` is given it replaces the embedding graph.
inline double naive_clid(const MlpClassifier& m, const Matrix& x, double tau,
                         const std::vector<Vector>* frozen_q = nullptr,
                         const std::vector<Vector>* frozen_e = nullptr) {
    const auto f = naive_forward(m, x);
    const auto gq = frozen_q ? *frozen_q : naive_graph(f.q, false, tau);
    const auto ge = frozen_e ? *frozen_e : naive_graph(f.z, true, tau);
    return naive_cross_entropy(gq, ge);
}

inline double naive_mean_ce(const MlpClassifier& m, const Matrix& x, const std::vector<std::size_t>& y) {
    const auto f = naive_forward(m, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s -= std::log(std::max(f.q[i][y[i]], 1e-12));
    return s / static_cast<double>(y.size());
}

inline double naive_mean_mae(const MlpClassifier& m, const Matrix& x, const std::vector<std::size_t>& y) {
    const auto f = naive_forward(m, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t k = 0; k < f.q[i].size(); ++k) s += std::abs(f.q[i][k] - (k == y[i] ? 1.0 : 0.0));
    }
    return s / static_cast<double>(y.size());
}

/// sigmoid(v . relu(w * loss + b) + c)
inline double naive_metanet(const clidmu::MetaNet& meta, double loss) {
    double s = meta.output.bias[0];
    for (std::size_t h = 0; h < meta.hidden.weight.rows(); ++h) {
        const double a = meta.hidden.weight(h, 0) * loss + meta.hidden.bias[h];
        s += meta.output.weight(0, h) * (a > 0.0 ? a : 0.0);
    }
    return 1.0 / (1.0 + std::exp(-s));
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, clidmu::Prng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = scale * rng.normal();
    return m;
}

/// Small random biases keep ReLU units away from the kink where central
/// differences are not meaningful.
inline MlpClassifier random_classifier(std::size_t d, const std::vector<std::size_t>& hidden, std::size_t c,
                                       clidmu::Prng& rng) {
    auto m = MlpClassifier::init(d, hidden, c, rng);
    for (auto& l : m.extractor) {
        for (double& b : l.bias) b = 0.1 * rng.normal();
    }
    for (double& b : m.head.bias) b = 0.1 * rng.normal();
    return m;
}

}  // namespace oracle
