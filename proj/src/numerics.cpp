#include "clidmu/numerics.hpp"

#include <cmath>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <numbers>

namespace clidmu {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        throw NumericError("matrix: value count " + std::to_string(values_.size()) + " != " +
                           std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols()) throw NumericError("matrix: ragged rows");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) throw NumericError("matrix: row index out of range");
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw NumericError("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

double norm2(std::span<const double> u) { return std::sqrt(dot(u, u)); }

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw NumericError("cosine_similarity: dimension mismatch");
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return dot(u, v) / (nu * nv);
}

void cosine_grad_accumulate(std::span<const double> u, std::span<const double> v, double upstream,
                            std::span<double> grad_u) {
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (nu == 0.0 || nv == 0.0 || upstream == 0.0) return;
    const double inv = 1.0 / (nu * nv);
    const double cos = dot(u, v) * inv;
    const double inv_nu2 = 1.0 / (nu * nu);
    for (std::size_t k = 0; k < u.size(); ++k) {
        grad_u[k] += upstream * (v[k] * inv - cos * u[k] * inv_nu2);
    }
}

Vector softmax(std::span<const double> logits) {
    if (logits.empty()) throw NumericError("softmax: empty input");
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    Vector out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto p = softmax(logits.row(r));
        std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
}

Matrix row_normalize(const Matrix& g) {
    Matrix out(g.rows(), g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
        double sum = 0.0;
        for (double x : g.row(r)) sum += x;
        if (!(sum > 0.0)) {
            throw NumericError("row_normalize: row " + std::to_string(r) + " has nonpositive sum");
        }
        auto dst = out.row(r);
        auto src = g.row(r);
        for (std::size_t c = 0; c < g.cols(); ++c) dst[c] = src[c] / sum;
    }
    return out;
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

bool all_finite(std::span<const double> v) noexcept {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

std::string format_double(double x) {
    // Shortest text that parses back to the same double.
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

bool parse_double(std::string_view text, double& out) {
    if (text.empty() || std::isspace(static_cast<unsigned char>(text.front()))) return false;
    // strtod needs a terminator; it also keeps subnormals that from_chars reports as out of range.
    const std::string buf(text);
    char* end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return false;
    out = v;
    return true;
}

std::uint64_t Prng::next_u64() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Prng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Prng::uniform_index(std::size_t n) {
    if (n == 0) throw NumericError("uniform_index: empty range");
    const std::uint64_t bound = n;
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

double Prng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

Prng Prng::fork(std::uint64_t salt) noexcept {
    Prng mixer(next_u64() ^ (salt * 0xD1B54A32D192ED03ULL));
    return Prng(mixer.next_u64());
}

}  // namespace clidmu
