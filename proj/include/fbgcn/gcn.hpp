#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "errors.hpp"
#include "perturb.hpp"
#include "sparse.hpp"

namespace fbgcn {

struct AdamState {
    Dense m;
    Dense v;
    int t = 0;

    static AdamState zeros_like(const Dense& w) { return {Dense::Zero(w.rows(), w.cols()), Dense::Zero(w.rows(), w.cols()), 0}; }
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Two-layer GCN: logits = P(relu(P(X W1)) W2), P the propagation operator.
struct GcnModel {
    Dense W1;  // D x h
    Dense W2;  // h x O
    AdamState adam1;
    AdamState adam2;

    std::int64_t input_dim() const { return W1.rows(); }
    std::int64_t hidden_dim() const { return W1.cols(); }
    std::int64_t num_classes() const { return W2.cols(); }
};

// Uniform on +-sqrt(6 / (rows + cols)).
inline Dense glorot_init(std::int64_t rows, std::int64_t cols, std::mt19937_64& rng) {
    if (rows < 1 || cols < 1) throw UsageError("glorot_init: dimensions must be >= 1");
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-bound, bound);
    Dense w(rows, cols);
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) w(r, c) = u(rng);
    return w;
}

inline Dense glorot_init(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return glorot_init(rows, cols, rng);
}

inline GcnModel make_model(std::int64_t input_dim, std::int64_t hidden, std::int64_t classes, std::mt19937_64& rng) {
    GcnModel m;
    m.W1 = glorot_init(input_dim, hidden, rng);
    m.W2 = glorot_init(hidden, classes, rng);
    m.adam1 = AdamState::zeros_like(m.W1);
    m.adam2 = AdamState::zeros_like(m.W2);
    return m;
}

// Inverted-dropout multipliers: 0 or 1/(1-p). `input` has one entry per
// stored feature value, `hidden` is n x h.
struct DropoutMasks {
    std::vector<double> input;
    Dense hidden;
};

inline DropoutMasks sample_dropout(const CsrMatrix& features, std::int64_t hidden, double rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw UsageError("dropout rate must be in [0, 1)");
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    DropoutMasks m;
    m.input.resize(static_cast<std::size_t>(features.nnz()));
    for (auto& v : m.input) v = keep(rng) ? scale : 0.0;
    m.hidden.resize(features.rows(), hidden);
    for (Eigen::Index i = 0; i < m.hidden.size(); ++i) m.hidden.data()[i] = keep(rng) ? scale : 0.0;
    return m;
}

struct ForwardCache {
    CsrMatrix h0;   // input after dropout
    Dense xw;       // H0 W1
    Dense z1;       // P(H0 W1)
    Dense h1;       // relu(z1) after dropout
    Dense hw;       // H1 W2
    Dense logits;   // P(H1 W2)
    std::optional<Dense> hidden_mask;
};

// X^T G for sparse X.
inline Dense sparse_transpose_times(const CsrMatrix& x, const Dense& g) {
    Dense out = Dense::Zero(x.cols(), g.cols());
    for (std::int64_t i = 0; i < x.rows(); ++i) {
        auto cols = x.row_cols(i);
        auto vals = x.row_values(i);
        for (std::size_t p = 0; p < cols.size(); ++p) out.row(cols[p]).noalias() += vals[p] * g.row(i);
    }
    return out;
}

// masks == nullptr means evaluation mode (dropout is the identity).
inline ForwardCache forward(const GcnModel& model, const CsrMatrix& features, const Propagator& propagate,
                            const DropoutMasks* masks = nullptr) {
    if (features.cols() != model.input_dim() || features.rows() != propagate.n())
        throw UsageError("forward: feature matrix shape does not match model / graph");
    ForwardCache c;
    c.h0 = features;
    if (masks) {
        auto& v = c.h0.values();
        for (std::size_t p = 0; p < v.size(); ++p) v[p] *= masks->input[p];
    }
    c.xw = spmm(c.h0, model.W1);
    c.z1 = propagate.apply(c.xw);
    c.h1 = c.z1.cwiseMax(0.0);
    if (masks) {
        c.h1.array() *= masks->hidden.array();
        c.hidden_mask = masks->hidden;
    }
    c.hw = c.h1 * model.W2;
    c.logits = propagate.apply(c.hw);
    return c;
}

namespace detail {

inline Vector log_softmax_row(const Dense& logits, std::int64_t i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    return (logits.row(i).array() - lse).transpose().matrix();
}

}  // namespace detail

// Mean over `mask` of -log softmax(logits)_label.
inline double masked_xent(const Dense& logits, std::span<const int> labels, std::span<const std::int64_t> mask) {
    if (mask.empty()) throw UsageError("masked_xent: empty mask");
    double total = 0.0;
    for (auto i : mask) total -= detail::log_softmax_row(logits, i)[labels[i]];
    return total / static_cast<double>(mask.size());
}

// d masked_xent / d logits.
inline Dense masked_xent_grad(const Dense& logits, std::span<const int> labels, std::span<const std::int64_t> mask) {
    if (mask.empty()) throw UsageError("masked_xent_grad: empty mask");
    Dense g = Dense::Zero(logits.rows(), logits.cols());
    const double w = 1.0 / static_cast<double>(mask.size());
    for (auto i : mask) {
        Vector p = detail::log_softmax_row(logits, i).array().exp().matrix();
        p[labels[i]] -= 1.0;
        g.row(i) += w * p.transpose();
    }
    return g;
}

inline double accuracy(const Dense& logits, std::span<const int> labels, std::span<const std::int64_t> mask) {
    if (mask.empty()) return 0.0;
    std::int64_t hit = 0;
    for (auto i : mask) {
        Eigen::Index best = 0;
        logits.row(i).maxCoeff(&best);
        hit += best == labels[i];
    }
    return static_cast<double>(hit) / static_cast<double>(mask.size());
}

struct Gradients {
    Dense W1;
    Dense W2;
    // d loss / d delta; empty when the propagation is unperturbed.
    std::optional<Vector> delta;
};

// Backpropagates a given d loss / d logits through the cached forward pass.
inline Gradients backward_from_logits(const GcnModel& model, const ForwardCache& c, const Propagator& propagate,
                                      const Dense& grad_logits) {
    Gradients g;
    const Dense grad_hw = propagate.apply(grad_logits);
    g.W2 = c.h1.transpose() * grad_hw;
    Dense grad_z1 = grad_hw * model.W2.transpose();
    if (c.hidden_mask) grad_z1.array() *= c.hidden_mask->array();
    grad_z1.array() *= (c.z1.array() > 0.0).cast<double>();
    const Dense grad_xw = propagate.apply(grad_z1);
    g.W1 = sparse_transpose_times(c.h0, grad_xw);
    if (propagate.perturbed()) {
        g.delta = delta_gradient(*propagate.basis(), c.hw, grad_logits) + delta_gradient(*propagate.basis(), c.xw, grad_z1);
    }
    return g;
}

inline Gradients backward(const GcnModel& model, const ForwardCache& c, const Propagator& propagate,
                          std::span<const int> labels, std::span<const std::int64_t> mask) {
    return backward_from_logits(model, c, propagate, masked_xent_grad(c.logits, labels, mask));
}

// Bias-corrected Adam on one parameter block; weight_decay adds an L2
// gradient term weight_decay * W.
inline void adam_step(Dense& w, AdamState& s, const Dense& grad, double lr, double weight_decay = 0.0,
                      const AdamOptions& opt = {}) {
    if (grad.rows() != w.rows() || grad.cols() != w.cols()) throw UsageError("adam_step: gradient shape mismatch");
    ++s.t;
    const double c1 = 1.0 - std::pow(opt.beta1, s.t);
    const double c2 = 1.0 - std::pow(opt.beta2, s.t);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double g = grad.data()[i] + weight_decay * w.data()[i];
        double& m = s.m.data()[i];
        double& v = s.v.data()[i];
        m = opt.beta1 * m + (1.0 - opt.beta1) * g;
        v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
        w.data()[i] -= lr * (m / c1) / (std::sqrt(v / c2) + opt.eps);
    }
}

// Adam on the layer weights; weight decay on the first layer only.
inline void adam_step(GcnModel& model, const Gradients& g, double lr, double weight_decay) {
    adam_step(model.W1, model.adam1, g.W1, lr, weight_decay);
    adam_step(model.W2, model.adam2, g.W2, lr, 0.0);
}

// Rows scaled to unit sum; all-zero rows are left alone.
inline CsrMatrix row_normalize_features(const CsrMatrix& x) {
    CsrMatrix out = x;
    const Vector sums = x.row_sums();
    auto& v = out.values();
    for (std::int64_t i = 0; i < x.rows(); ++i) {
        if (sums[i] == 0.0) continue;
        for (auto p = x.row_ptr()[i]; p < x.row_ptr()[i + 1]; ++p) v[p] /= sums[i];
    }
    return out;
}

}  // namespace fbgcn
