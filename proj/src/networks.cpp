#include "clidmu/networks.hpp"

#include <cmath>

namespace clidmu {

// ---------------------------------------------------------------- ParamVector

ParamVector::ParamVector(std::vector<ParamBlock> blocks, Vector values)
    : blocks_(std::move(blocks)), values_(std::move(values)) {
    std::size_t expect = 0;
    for (const auto& b : blocks_) {
        if (b.offset != expect) throw NumericError("param vector: block '" + b.name + "' is not contiguous");
        expect += b.size();
    }
    if (expect != values_.size()) throw NumericError("param vector: block sizes do not cover values");
}

ParamVector ParamVector::zeros_like(const ParamVector& like) {
    return ParamVector(like.blocks_, Vector(like.size(), 0.0));
}

const ParamBlock& ParamVector::block(const std::string& name) const {
    for (const auto& b : blocks_) {
        if (b.name == name) return b;
    }
    throw NumericError("param vector: no block named '" + name + "'");
}

std::span<const double> ParamVector::block_values(const std::string& name) const {
    const auto& b = block(name);
    return {values_.data() + b.offset, b.size()};
}

std::span<double> ParamVector::block_values(const std::string& name) {
    const auto& b = block(name);
    return {values_.data() + b.offset, b.size()};
}

void ParamVector::axpy(double a, const ParamVector& other) {
    if (other.size() != size()) throw NumericError("param vector: axpy size mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * other.values_[i];
}

void ParamVector::scale(double a) noexcept {
    for (double& x : values_) x *= a;
}

double ParamVector::dot(const ParamVector& other) const { return clidmu::dot(values_, other.values_); }

double ParamVector::norm() const { return norm2(values_); }

namespace {

struct NamedLayer {
    std::string prefix;
    const DenseLayer* layer;
};

ParamVector flatten(const std::vector<NamedLayer>& layers) {
    std::vector<ParamBlock> blocks;
    Vector values;
    for (const auto& [prefix, layer] : layers) {
        blocks.push_back({prefix + ".weight", values.size(), layer->weight.rows(), layer->weight.cols()});
        values.insert(values.end(), layer->weight.values().begin(), layer->weight.values().end());
        blocks.push_back({prefix + ".bias", values.size(), layer->bias.size(), 1});
        values.insert(values.end(), layer->bias.begin(), layer->bias.end());
    }
    return ParamVector(std::move(blocks), std::move(values));
}

void unflatten_into(DenseLayer& layer, const std::string& prefix, const ParamVector& params) {
    const auto& wb = params.block(prefix + ".weight");
    const auto& bb = params.block(prefix + ".bias");
    if (wb.rows != layer.weight.rows() || wb.cols != layer.weight.cols() || bb.rows != layer.bias.size()) {
        throw NumericError("param vector: shape mismatch for '" + prefix + "'");
    }
    auto w = params.block_values(prefix + ".weight");
    std::copy(w.begin(), w.end(), layer.weight.values().begin());
    auto b = params.block_values(prefix + ".bias");
    std::copy(b.begin(), b.end(), layer.bias.begin());
}

DenseLayer he_layer(std::size_t in, std::size_t out, Prng& rng) {
    DenseLayer layer{Matrix(out, in), Vector(out, 0.0)};
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (double& w : layer.weight.values()) w = rng.normal(0.0, stddev);
    return layer;
}

// out = in * W^T + b, rows are samples
Matrix affine(const Matrix& in, const DenseLayer& layer) {
    if (in.cols() != layer.in_dim()) {
        throw NumericError("forward: input has " + std::to_string(in.cols()) + " columns, layer expects " +
                           std::to_string(layer.in_dim()));
    }
    Matrix out(in.rows(), layer.out_dim());
    for (std::size_t r = 0; r < in.rows(); ++r) {
        auto x = in.row(r);
        auto y = out.row(r);
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            y[o] = layer.bias[o] + clidmu::dot(layer.weight.row(o), x);
        }
    }
    return out;
}

std::string ext_name(std::size_t k) { return "ext" + std::to_string(k); }

}  // namespace

// --------------------------------------------------------------- MlpClassifier

MlpClassifier MlpClassifier::init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                  std::size_t classes, Prng& rng) {
    if (hidden.empty()) throw NumericError("classifier: at least one extractor layer is required");
    if (input_dim == 0 || classes == 0) throw NumericError("classifier: zero dimension");
    MlpClassifier m;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
        if (h == 0) throw NumericError("classifier: zero hidden width");
        m.extractor.push_back(he_layer(in, h, rng));
        in = h;
    }
    m.head = he_layer(in, classes, rng);
    return m;
}

MlpClassifier MlpClassifier::zeros(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                   std::size_t classes) {
    if (hidden.empty()) throw NumericError("classifier: at least one extractor layer is required");
    MlpClassifier m;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
        m.extractor.push_back({Matrix(h, in), Vector(h, 0.0)});
        in = h;
    }
    m.head = {Matrix(classes, in), Vector(classes, 0.0)};
    return m;
}

std::vector<std::size_t> MlpClassifier::hidden_sizes() const {
    std::vector<std::size_t> out;
    for (const auto& l : extractor) out.push_back(l.out_dim());
    return out;
}

ParamVector MlpClassifier::to_params() const {
    std::vector<NamedLayer> layers;
    for (std::size_t k = 0; k < extractor.size(); ++k) layers.push_back({ext_name(k), &extractor[k]});
    layers.push_back({"head", &head});
    return flatten(layers);
}

MlpClassifier MlpClassifier::from_params(const ParamVector& params) {
    MlpClassifier m;
    for (std::size_t k = 0;; ++k) {
        const std::string w = ext_name(k) + ".weight";
        bool found = false;
        for (const auto& b : params.blocks()) found = found || b.name == w;
        if (!found) break;
        const auto& wb = params.block(w);
        m.extractor.push_back({Matrix(wb.rows, wb.cols), Vector(wb.rows, 0.0)});
    }
    if (m.extractor.empty()) throw NumericError("classifier: parameters contain no extractor layer");
    const auto& hb = params.block("head.weight");
    m.head = {Matrix(hb.rows, hb.cols), Vector(hb.rows, 0.0)};
    m.validate();
    m.load(params);
    return m;
}

void MlpClassifier::load(const ParamVector& params) {
    if (params.blocks().size() != 2 * (extractor.size() + 1)) {
        throw NumericError("classifier: parameter block count mismatch");
    }
    for (std::size_t k = 0; k < extractor.size(); ++k) unflatten_into(extractor[k], ext_name(k), params);
    unflatten_into(head, "head", params);
}

void MlpClassifier::validate() const {
    if (extractor.empty()) throw NumericError("classifier: no extractor layers");
    for (std::size_t k = 1; k < extractor.size(); ++k) {
        if (extractor[k].in_dim() != extractor[k - 1].out_dim()) {
            throw NumericError("classifier: extractor layer " + std::to_string(k) + " does not chain");
        }
    }
    if (head.in_dim() != embed_dim()) throw NumericError("classifier: head input != embedding width");
    for (const auto& l : extractor) {
        if (l.bias.size() != l.out_dim()) throw NumericError("classifier: bias size mismatch");
    }
    if (head.bias.size() != head.out_dim()) throw NumericError("classifier: bias size mismatch");
}

ForwardTrace classifier_forward(const MlpClassifier& model, const Matrix& x) {
    ForwardTrace t;
    t.input = x;
    const Matrix* in = &t.input;
    for (const auto& layer : model.extractor) {
        t.pre.push_back(affine(*in, layer));
        Matrix a = t.pre.back();
        for (double& v : a.values()) v = relu(v);
        t.act.push_back(std::move(a));
        in = &t.act.back();
    }
    t.logits = affine(*in, model.head);
    t.probs = softmax_rows(t.logits);
    return t;
}

// ---------------------------------------------------------------------- losses

namespace {

void check_labels(const Matrix& q, std::span<const std::size_t> labels) {
    if (labels.size() != q.rows()) throw NumericError("loss: label count != batch size");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= q.cols()) {
            throw NumericError("loss: label " + std::to_string(labels[i]) + " out of range at row " +
                               std::to_string(i));
        }
    }
}

}  // namespace

Vector per_sample_ce(const Matrix& q, std::span<const std::size_t> labels) {
    check_labels(q, labels);
    Vector out(q.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) out[i] = -std::log(std::max(q(i, labels[i]), kProbFloor));
    return out;
}

Vector per_sample_mae(const Matrix& q, std::span<const std::size_t> labels) {
    check_labels(q, labels);
    Vector out(q.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < q.cols(); ++k) s += std::abs(q(i, k) - (k == labels[i] ? 1.0 : 0.0));
        out[i] = s;
    }
    return out;
}

// -------------------------------------------------------------------- backprop

namespace {

// dL/d(pre-activation) for each extractor layer, plus dL/dlogits for the head.
struct Deltas {
    std::vector<Matrix> ext;
    Matrix head;
};

Deltas compute_deltas(const MlpClassifier& model, const ForwardTrace& trace, const Matrix& grad_logits,
                      const Matrix* grad_embeddings) {
    const std::size_t n = trace.batch();
    if (grad_logits.rows() != n || grad_logits.cols() != model.classes()) {
        throw NumericError("backprop: logit gradient shape mismatch");
    }
    if (grad_embeddings && (grad_embeddings->rows() != n || grad_embeddings->cols() != model.embed_dim())) {
        throw NumericError("backprop: embedding gradient shape mismatch");
    }
    Deltas d;
    d.head = grad_logits;
    d.ext.resize(model.extractor.size());

    // dL/dZ
    Matrix upstream = grad_embeddings ? *grad_embeddings : Matrix(n, model.embed_dim());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < model.classes(); ++o) {
            const double g = grad_logits(i, o);
            if (g == 0.0) continue;
            auto w = model.head.weight.row(o);
            for (std::size_t h = 0; h < w.size(); ++h) upstream(i, h) += g * w[h];
        }
    }
    for (std::size_t k = model.extractor.size(); k-- > 0;) {
        Matrix delta = std::move(upstream);
        const Matrix& pre = trace.pre[k];
        for (std::size_t j = 0; j < delta.values().size(); ++j) {
            if (!(pre.values()[j] > 0.0)) delta.values()[j] = 0.0;
        }
        if (k > 0) {
            const auto& layer = model.extractor[k];
            upstream = Matrix(n, layer.in_dim());
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                    const double g = delta(i, o);
                    if (g == 0.0) continue;
                    auto w = layer.weight.row(o);
                    for (std::size_t h = 0; h < w.size(); ++h) upstream(i, h) += g * w[h];
                }
            }
        }
        d.ext[k] = std::move(delta);
    }
    return d;
}

// Adds the parameter gradient contributed by batch rows [first, last) into grad.
void accumulate_rows(const MlpClassifier& model, const ForwardTrace& trace, const Deltas& d, std::size_t first,
                     std::size_t last, ParamVector& grad) {
    auto layer_grad = [&](const std::string& prefix, const Matrix& delta, const Matrix& input) {
        auto gw = grad.block_values(prefix + ".weight");
        auto gb = grad.block_values(prefix + ".bias");
        const std::size_t in_dim = input.cols();
        for (std::size_t i = first; i < last; ++i) {
            auto x = input.row(i);
            auto dl = delta.row(i);
            for (std::size_t o = 0; o < dl.size(); ++o) {
                const double g = dl[o];
                if (g == 0.0) continue;
                gb[o] += g;
                double* row = gw.data() + o * in_dim;
                for (std::size_t h = 0; h < in_dim; ++h) row[h] += g * x[h];
            }
        }
    };
    for (std::size_t k = 0; k < model.extractor.size(); ++k) {
        layer_grad(ext_name(k), d.ext[k], k == 0 ? trace.input : trace.act[k - 1]);
    }
    layer_grad("head", d.head, trace.act.back());
}

Matrix ce_logit_grad(const ForwardTrace& trace, std::span<const std::size_t> labels, std::span<const double> scale) {
    Matrix g = trace.probs;
    for (std::size_t i = 0; i < g.rows(); ++i) {
        g(i, labels[i]) -= 1.0;
        for (double& v : g.row(i)) v *= scale[i];
    }
    return g;
}

}  // namespace

ParamVector backprop(const MlpClassifier& model, const ForwardTrace& trace, const Matrix& grad_logits,
                     const Matrix* grad_embeddings) {
    const Deltas d = compute_deltas(model, trace, grad_logits, grad_embeddings);
    ParamVector grad = ParamVector::zeros_like(model.to_params());
    accumulate_rows(model, trace, d, 0, trace.batch(), grad);
    return grad;
}

ParamVector backward_weighted_ce(const MlpClassifier& model, const ForwardTrace& trace,
                                 std::span<const std::size_t> labels, std::span<const double> weights) {
    check_labels(trace.probs, labels);
    if (weights.size() != trace.batch()) throw NumericError("backward: weight count != batch size");
    const double inv_n = 1.0 / static_cast<double>(trace.batch());
    Vector scale(weights.begin(), weights.end());
    for (double& s : scale) s *= inv_n;
    return backprop(model, trace, ce_logit_grad(trace, labels, scale));
}

ParamVector backward_mean_mae(const MlpClassifier& model, const ForwardTrace& trace,
                              std::span<const std::size_t> labels) {
    check_labels(trace.probs, labels);
    // On the simplex ||q - e_y||_1 = 2 (1 - q_y), so dL/dlogit_j = -2 q_y (delta_jy - q_j).
    const double inv_n = 1.0 / static_cast<double>(trace.batch());
    Matrix g(trace.batch(), trace.probs.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
        const double qy = trace.probs(i, labels[i]);
        for (std::size_t j = 0; j < g.cols(); ++j) {
            g(i, j) = -2.0 * qy * ((j == labels[i] ? 1.0 : 0.0) - trace.probs(i, j)) * inv_n;
        }
    }
    return backprop(model, trace, g);
}

std::vector<ParamVector> per_sample_grads(const MlpClassifier& model, const ForwardTrace& trace,
                                          std::span<const std::size_t> labels) {
    check_labels(trace.probs, labels);
    if (trace.batch() == 0) throw NumericError("per_sample_grads: empty batch");
    const Vector ones(trace.batch(), 1.0);
    const Deltas d = compute_deltas(model, trace, ce_logit_grad(trace, labels, ones), nullptr);
    const ParamVector zero = ParamVector::zeros_like(model.to_params());
    std::vector<ParamVector> out(trace.batch(), zero);
    for (std::size_t i = 0; i < trace.batch(); ++i) accumulate_rows(model, trace, d, i, i + 1, out[i]);
    return out;
}

// --------------------------------------------------------------------- MetaNet

MetaNet MetaNet::init(std::size_t width, Prng& rng) {
    if (width == 0) throw NumericError("metanet: zero width");
    MetaNet m;
    m.hidden = he_layer(1, width, rng);
    m.output = {Matrix(1, width), Vector(1, 0.0)};
    return m;
}

ParamVector MetaNet::to_params() const { return flatten({{"hidden", &hidden}, {"output", &output}}); }

void MetaNet::load(const ParamVector& params) {
    unflatten_into(hidden, "hidden", params);
    unflatten_into(output, "output", params);
}

namespace {

double metanet_logit(const MetaNet& meta, double loss) {
    double s = meta.output.bias[0];
    for (std::size_t h = 0; h < meta.width(); ++h) {
        s += meta.output.weight(0, h) * relu(meta.hidden.weight(h, 0) * loss + meta.hidden.bias[h]);
    }
    return s;
}

}  // namespace

double metanet_weight(const MetaNet& meta, double loss) { return sigmoid(metanet_logit(meta, loss)); }

Vector metanet_forward(const MetaNet& meta, std::span<const double> losses) {
    Vector out(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) out[i] = metanet_weight(meta, losses[i]);
    return out;
}

ParamVector metanet_grad(const MetaNet& meta, double loss) {
    ParamVector g = ParamVector::zeros_like(meta.to_params());
    const double w = metanet_weight(meta, loss);
    const double ds = w * (1.0 - w);
    auto hw = g.block_values("hidden.weight");
    auto hb = g.block_values("hidden.bias");
    auto ow = g.block_values("output.weight");
    g.block_values("output.bias")[0] = ds;
    for (std::size_t h = 0; h < meta.width(); ++h) {
        const double pre = meta.hidden.weight(h, 0) * loss + meta.hidden.bias[h];
        ow[h] = ds * relu(pre);
        if (pre > 0.0) {
            const double back = ds * meta.output.weight(0, h);
            hw[h] = back * loss;
            hb[h] = back;
        }
    }
    return g;
}

std::map<std::string, double> layer_grad_norms(const ParamVector& g) {
    std::map<std::string, double> out;
    for (const auto& b : g.blocks()) out[b.name] = norm2(g.block_values(b.name));
    return out;
}

}  // namespace clidmu
