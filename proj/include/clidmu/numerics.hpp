#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clidmu {

/// Raised on shape or domain violations in the dense primitives.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {values_.data() + r * cols_, cols_}; }

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    Matrix select_rows(std::span<const std::size_t> indices) const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

double dot(std::span<const double> u, std::span<const double> v);
double norm2(std::span<const double> u);

/// Cosine of the angle between u and v. Zero when either vector has zero norm.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Accumulates d cos(u,v) / du scaled by `upstream` into `grad_u`. No-op for zero vectors.
void cosine_grad_accumulate(std::span<const double> u, std::span<const double> v, double upstream,
                            std::span<double> grad_u);

Vector softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& logits);

/// Divides each row by its sum. Throws when a row sum is not strictly positive.
Matrix row_normalize(const Matrix& g);

inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }
double sigmoid(double x) noexcept;

bool all_finite(std::span<const double> v) noexcept;

/// Shortest decimal form that round-trips (nan/inf spelled as such).
std::string format_double(double x);

/// Parses the whole of `text` as a finite double (subnormals included).
bool parse_double(std::string_view text, double& out);

/// SplitMix64: a counter-based generator. Every draw is a pure function of
/// (seed, counter), so streams are identical on every platform. Distribution
/// helpers below avoid std:: distributions, whose output is library-specific.
class Prng {
public:
    explicit Prng(std::uint64_t seed = 0) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform integer in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);
    /// Standard normal via Box-Muller; caches the second variate.
    double normal() noexcept;
    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
    bool bernoulli(double p) noexcept { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[uniform_index(i)]);
        }
    }

    /// Independent child stream; deterministic in (this stream, salt).
    Prng fork(std::uint64_t salt) noexcept;

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace clidmu
