#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "clidmu/numerics.hpp"

namespace clidmu {

/// Affine layer y = W x + b with W stored out x in.
struct DenseLayer {
    Matrix weight;
    Vector bias;

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }
    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const noexcept { return rows * cols; }
    friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

/// Flat parameter (or gradient) vector with named, shaped blocks.
class ParamVector {
public:
    ParamVector() = default;
    ParamVector(std::vector<ParamBlock> blocks, Vector values);

    /// Zero vector with the same block layout as `like`.
    static ParamVector zeros_like(const ParamVector& like);

    std::size_t size() const noexcept { return values_.size(); }
    const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
    Vector& values() noexcept { return values_; }
    const Vector& values() const noexcept { return values_; }

    const ParamBlock& block(const std::string& name) const;
    std::span<const double> block_values(const std::string& name) const;
    std::span<double> block_values(const std::string& name);

    bool same_layout(const ParamVector& other) const noexcept { return blocks_ == other.blocks_; }

    /// this += a * other
    void axpy(double a, const ParamVector& other);
    void scale(double a) noexcept;
    double dot(const ParamVector& other) const;
    double norm() const;

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
    std::vector<ParamBlock> blocks_;
    Vector values_;
};

/// f(x) = head(ext(x)). Every extractor layer is followed by ReLU; the head by softmax.
/// Parameter blocks are named ext<k>.weight / ext<k>.bias / head.weight / head.bias.
struct MlpClassifier {
    std::vector<DenseLayer> extractor;
    DenseLayer head;

    /// He-normal weights, zero biases.
    static MlpClassifier init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                              std::size_t classes, Prng& rng);
    /// All-zero parameters with the given shape.
    static MlpClassifier zeros(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                               std::size_t classes);

    std::size_t input_dim() const noexcept { return extractor.front().in_dim(); }
    std::size_t embed_dim() const noexcept { return extractor.back().out_dim(); }
    std::size_t classes() const noexcept { return head.out_dim(); }
    std::vector<std::size_t> hidden_sizes() const;

    ParamVector to_params() const;
    /// Rebuilds a classifier whose architecture is implied by the block shapes.
    static MlpClassifier from_params(const ParamVector& params);
    void load(const ParamVector& params);

    /// Throws when the layer chain is inconsistent.
    void validate() const;

    friend bool operator==(const MlpClassifier&, const MlpClassifier&) = default;
};

/// Cached forward pass over a batch.
struct ForwardTrace {
    Matrix input;
    std::vector<Matrix> pre;   // extractor pre-activations
    std::vector<Matrix> act;   // extractor post-ReLU activations
    Matrix logits;
    Matrix probs;              // Q

    const Matrix& embeddings() const { return act.back(); }  // Z
    std::size_t batch() const noexcept { return input.rows(); }
};

ForwardTrace classifier_forward(const MlpClassifier& model, const Matrix& x);

inline constexpr double kProbFloor = 1e-12;

/// -log max(Q[i, y_i], 1e-12)
Vector per_sample_ce(const Matrix& q, std::span<const std::size_t> labels);
/// ||q_i - onehot(y_i)||_1
Vector per_sample_mae(const Matrix& q, std::span<const std::size_t> labels);

/// Reverse pass given dL/dlogits (batch x classes) and an optional extra dL/dZ
/// (batch x embed) that enters at the embedding layer. Returns the summed gradient.
ParamVector backprop(const MlpClassifier& model, const ForwardTrace& trace, const Matrix& grad_logits,
                     const Matrix* grad_embeddings = nullptr);

/// Gradient of (1/n) sum_i w_i CE_i.
ParamVector backward_weighted_ce(const MlpClassifier& model, const ForwardTrace& trace,
                                 std::span<const std::size_t> labels, std::span<const double> weights);

/// Gradient of (1/n) sum_i MAE_i.
ParamVector backward_mean_mae(const MlpClassifier& model, const ForwardTrace& trace,
                              std::span<const std::size_t> labels);

/// Element i is the gradient of CE_i alone.
std::vector<ParamVector> per_sample_grads(const MlpClassifier& model, const ForwardTrace& trace,
                                          std::span<const std::size_t> labels);

/// Weighting network: scalar loss -> ReLU hidden layer -> sigmoid weight.
/// Blocks: hidden.weight, hidden.bias, output.weight, output.bias.
struct MetaNet {
    DenseLayer hidden;  // width x 1
    DenseLayer output;  // 1 x width

    /// He-normal hidden weights; output layer zeroed so every initial weight is 0.5.
    static MetaNet init(std::size_t width, Prng& rng);

    std::size_t width() const noexcept { return hidden.out_dim(); }

    ParamVector to_params() const;
    void load(const ParamVector& params);

    friend bool operator==(const MetaNet&, const MetaNet&) = default;
};

inline constexpr std::size_t kDefaultMetaWidth = 100;

double metanet_weight(const MetaNet& meta, double loss);
Vector metanet_forward(const MetaNet& meta, std::span<const double> losses);
/// d weight / d psi at a fixed input loss.
ParamVector metanet_grad(const MetaNet& meta, double loss);

/// Euclidean norm of every named block.
std::map<std::string, double> layer_grad_norms(const ParamVector& g);

}  // namespace clidmu
