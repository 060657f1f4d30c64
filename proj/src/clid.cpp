#include "clidmu/clid.hpp"

#include <cmath>

namespace clidmu {

std::string_view to_string(StopGradient sg) {
    switch (sg) {
        case StopGradient::target_q: return "target-q";
        case StopGradient::target_e: return "target-e";
        case StopGradient::none: return "none";
    }
    return "?";
}

std::optional<StopGradient> parse_stop_gradient(std::string_view s) {
    if (s == "target-q" || s == "target_q") return StopGradient::target_q;
    if (s == "target-e" || s == "target_e") return StopGradient::target_e;
    if (s == "none") return StopGradient::none;
    return std::nullopt;
}

namespace {

Matrix cosine_matrix(const Matrix& v) {
    const std::size_t m = v.rows();
    Matrix out(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i; j < m; ++j) {
            const double c = cosine_similarity(v.row(i), v.row(j));
            out(i, j) = c;
            out(j, i) = c;
        }
    }
    return out;
}

void check_batch(const Matrix& v, const char* what) {
    if (v.rows() < 2) throw NumericError(std::string(what) + ": need at least 2 samples");
}

// Given dL/dC for a cosine-similarity matrix C over the rows of v, returns dL/dv.
Matrix cosine_matrix_backward(const Matrix& v, const Matrix& grad_c) {
    const std::size_t m = v.rows();
    Matrix out(m, v.cols());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;  // cos(v, v) is constant
            const double g = grad_c(i, j);
            cosine_grad_accumulate(v.row(i), v.row(j), g, out.row(i));
            cosine_grad_accumulate(v.row(j), v.row(i), g, out.row(j));
        }
    }
    return out;
}

}  // namespace

Matrix embedding_graph(const Matrix& z, double tau) {
    if (!(tau > 0.0)) throw NumericError("embedding_graph: tau must be positive");
    check_batch(z, "embedding_graph");
    Matrix g = cosine_matrix(z);
    for (double& x : g.values()) x = std::exp(x / tau);
    return g;
}

Matrix class_prob_graph(const Matrix& q) {
    check_batch(q, "class_prob_graph");
    return cosine_matrix(q);
}

SimilarityGraphs build_graphs(const Matrix& z, const Matrix& q, double tau) {
    if (z.rows() != q.rows()) throw NumericError("build_graphs: batch size mismatch");
    SimilarityGraphs g;
    g.tau = tau;
    g.ge = embedding_graph(z, tau);
    g.gq = class_prob_graph(q);
    g.ge_hat = row_normalize(g.ge);
    g.gq_hat = row_normalize(g.gq);
    return g;
}

ClidScore clid_loss(const Matrix& gq_hat, const Matrix& ge_hat) {
    const std::size_t m = gq_hat.rows();
    if (gq_hat.cols() != m || ge_hat.rows() != m || ge_hat.cols() != m) {
        throw NumericError("clid_loss: graphs must both be m x m");
    }
    if (m == 0) throw NumericError("clid_loss: empty graphs");
    double s = 0.0;
    for (std::size_t k = 0; k < m * m; ++k) {
        s -= gq_hat.values()[k] * std::log(std::max(ge_hat.values()[k], kLogFloor));
    }
    return {s / static_cast<double>(m * m), m};
}

ClidScore clid_of_model(const MlpClassifier& model, const Matrix& x, double tau) {
    const auto trace = classifier_forward(model, x);
    const auto g = build_graphs(trace.embeddings(), trace.probs, tau);
    return clid_loss(g.gq_hat, g.ge_hat);
}

ParamVector clid_grad(const MlpClassifier& model, const Matrix& x, double tau, StopGradient sg) {
    const auto trace = classifier_forward(model, x);
    const auto g = build_graphs(trace.embeddings(), trace.probs, tau);
    const std::size_t m = x.rows();
    const double inv_m2 = 1.0 / static_cast<double>(m * m);

    Matrix grad_z;
    Matrix grad_logits(m, model.classes());

    if (sg != StopGradient::target_e) {
        // log Ge_hat_ij = C_ij/tau - log sum_k exp(C_ik/tau)
        // => dL/dC_ik = (rowsum(P)_i * E_ik - P_ik) / (tau m^2)
        Matrix grad_c(m, m);
        for (std::size_t i = 0; i < m; ++i) {
            double p_sum = 0.0;
            for (double p : g.gq_hat.row(i)) p_sum += p;
            for (std::size_t k = 0; k < m; ++k) {
                grad_c(i, k) = (p_sum * g.ge_hat(i, k) - g.gq_hat(i, k)) * inv_m2 / tau;
            }
        }
        grad_z = cosine_matrix_backward(trace.embeddings(), grad_c);
    }

    if (sg != StopGradient::target_q) {
        // dL/dP_ij = -log E_ij / m^2, then through P = row_normalize(G) and G = cos(q_i, q_j).
        Matrix grad_g(m, m);
        for (std::size_t i = 0; i < m; ++i) {
            double row_sum = 0.0;
            for (double v : g.gq.row(i)) row_sum += v;
            double weighted = 0.0;
            Vector dp(m);
            for (std::size_t j = 0; j < m; ++j) {
                dp[j] = -std::log(std::max(g.ge_hat(i, j), kLogFloor)) * inv_m2;
                weighted += g.gq_hat(i, j) * dp[j];
            }
            for (std::size_t j = 0; j < m; ++j) grad_g(i, j) = (dp[j] - weighted) / row_sum;
        }
        const Matrix grad_q = cosine_matrix_backward(trace.probs, grad_g);
        for (std::size_t i = 0; i < m; ++i) {
            auto q = trace.probs.row(i);
            const double qdq = dot(q, grad_q.row(i));
            for (std::size_t j = 0; j < q.size(); ++j) grad_logits(i, j) = q[j] * (grad_q(i, j) - qdq);
        }
    }

    return backprop(model, trace, grad_logits, grad_z.empty() ? nullptr : &grad_z);
}

}  // namespace clidmu
