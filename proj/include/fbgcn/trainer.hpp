#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "errors.hpp"
#include "gcn.hpp"
#include "laplacian.hpp"
#include "perturb.hpp"
#include "proximity.hpp"
#include "spectral.hpp"

namespace fbgcn {

enum class ModelKind { gcn, fishergcn };

struct TrainConfig {
    double lr = 0.01;
    std::int64_t hidden = 64;
    double dropout = 0.5;
    double weight_decay = 5e-4;
    int max_epochs = 500;
    int M = 5;
    double radius = 0.1;
    std::int64_t k = 10;
    ModelKind model_kind = ModelKind::gcn;
    std::optional<ProximityOptions> highorder;
    NoiseKind noise_kind = NoiseKind::uniform;
    std::uint64_t seed = 0;
    // Early stopping compares short and long moving averages of the
    // validation curve once `warmup` epochs have been recorded.
    bool early_stopping = true;
    int warmup = 100;
    int short_window = 10;
    int long_window = 100;

    void validate() const {
        if (!(lr > 0.0)) throw UsageError("lr must be > 0");
        if (dropout < 0.0 || dropout >= 1.0) throw UsageError("dropout must be in [0, 1)");
        if (M < 1) throw UsageError("M must be >= 1");
        if (hidden < 1) throw UsageError("hidden must be >= 1");
        if (max_epochs < 1) throw UsageError("max_epochs must be >= 1");
        if (radius < 0.0) throw UsageError("radius must be >= 0");
        if (model_kind == ModelKind::fishergcn && k < 1) throw UsageError("k must be >= 1");
        if (early_stopping && (short_window < 1 || long_window < short_window || warmup < long_window))
            throw UsageError("early stopping windows must satisfy 1 <= short <= long <= warmup");
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

enum class Termination { early_stop, max_epochs };

inline const char* to_string(Termination t) { return t == Termination::early_stop ? "early_stop" : "max_epochs"; }

struct TrainResult {
    std::vector<EpochRecord> history;
    double test_loss = 0.0;
    double test_acc = 0.0;
    int epochs = 0;
    Termination termination = Termination::max_epochs;
    GcnModel model;
    std::optional<PerturbationParams> perturbation;
};

// The graph-side inputs of training, prepared once and reusable across
// seeds: the propagation matrix and (for FisherGCN) its spectral basis.
struct PreparedGraph {
    SparseSym a_tilde;
    CsrMatrix features;  // row-normalized
    std::optional<SpectralBasis> basis;
};

inline PreparedGraph prepare_graph(const Dataset& d, const TrainConfig& cfg, std::uint64_t eig_seed = 0) {
    PreparedGraph g;
    g.a_tilde = cfg.highorder ? highorder_preprocess(d.adjacency, *cfg.highorder) : renormalize_adjacency(d.adjacency);
    g.features = row_normalize_features(d.features);
    if (cfg.model_kind == ModelKind::fishergcn) {
        LanczosOptions opt;
        opt.seed = eig_seed;
        g.basis = compute_spectral_basis(g.a_tilde, cfg.k, opt);
    }
    return g;
}

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Unperturbed propagation, no dropout.
inline Evaluation evaluate(const GcnModel& model, const PreparedGraph& g, std::span<const int> labels,
                           std::span<const std::int64_t> part) {
    const Propagator plain(g.a_tilde);
    const ForwardCache c = forward(model, g.features, plain);
    return {masked_xent(c.logits, labels, part), accuracy(c.logits, labels, part)};
}

// Short-window averages of validation loss above, and of validation
// accuracy below, their long-window averages.
inline bool should_stop(const std::vector<EpochRecord>& h, const TrainConfig& cfg) {
    if (!cfg.early_stopping || static_cast<int>(h.size()) < cfg.warmup) return false;
    auto mean = [&](int window, auto field) {
        double s = 0.0;
        for (auto it = h.end() - window; it != h.end(); ++it) s += field(*it);
        return s / window;
    };
    auto loss = [](const EpochRecord& r) { return r.val_loss; };
    auto acc = [](const EpochRecord& r) { return r.val_acc; };
    return mean(cfg.short_window, loss) > mean(cfg.long_window, loss) &&
           mean(cfg.short_window, acc) < mean(cfg.long_window, acc);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

using EpochCallback = std::function<void(const EpochRecord&)>;

// Minimax training. Every epoch draws M perturbations (one unperturbed
// branch for plain GCN), averages branch losses and gradients, takes one
// Adam descent step on the weights and, for FisherGCN, one Adam ascent
// step on xi. Initialization, dropout and noise use separate RNG streams
// so a zero-radius FisherGCN run consumes dropout masks exactly like GCN.
inline TrainResult train(const Dataset& d, const Split& split, const TrainConfig& cfg, const PreparedGraph& g,
                         const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (split.train.empty() || split.valid.empty()) throw UsageError("split needs training and validation nodes");
    const bool fisher = cfg.model_kind == ModelKind::fishergcn;
    if (fisher && !g.basis) throw UsageError("FisherGCN requires a spectral basis");
    for (const auto* part : {&split.train, &split.valid, &split.test})
        for (auto i : *part)
            if (i < 0 || i >= d.n || d.labels[i] == kUnlabeled)
                throw UsageError("split contains node " + std::to_string(i) + " without a label");

    auto init_rng = make_stream(cfg.seed, 1);
    auto dropout_rng = make_stream(cfg.seed, 2);
    auto noise_rng = make_stream(cfg.seed, 3);

    TrainResult result;
    result.model = make_model(g.features.cols(), cfg.hidden, d.num_classes, init_rng);
    GcnModel& model = result.model;
    std::optional<PerturbationParams> params;
    AdamState xi_adam;
    Dense xi_view;
    if (fisher) {
        params = PerturbationParams::initial(g.basis->k, cfg.radius, cfg.M, cfg.noise_kind);
        xi_view = Dense::Zero(1, g.basis->k);
        xi_adam = AdamState::zeros_like(xi_view);
    }
    const int branches = fisher ? cfg.M : 1;
    const std::span<const int> labels(d.labels);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const Dense noise = fisher ? draw_noise(g.basis->k, branches, cfg.noise_kind, noise_rng) : Dense();
        Gradients total{Dense::Zero(model.W1.rows(), model.W1.cols()), Dense::Zero(model.W2.rows(), model.W2.cols()), {}};
        Vector xi_grad = fisher ? Vector::Zero(g.basis->k) : Vector();
        double loss = 0.0;
        double acc = 0.0;
        for (int b = 0; b < branches; ++b) {
            const DropoutMasks masks = sample_dropout(g.features, cfg.hidden, cfg.dropout, dropout_rng);
            std::optional<Perturbation> pert;
            std::optional<Propagator> prop;
            if (fisher) {
                pert = make_perturbation(*params, *g.basis, noise.row(b).transpose());
                prop.emplace(g.a_tilde, *g.basis, pert->delta);
            } else {
                prop.emplace(g.a_tilde);
            }
            const ForwardCache c = forward(model, g.features, *prop, &masks);
            loss += masked_xent(c.logits, labels, split.train);
            if (b == 0) acc = accuracy(c.logits, labels, split.train);
            const Gradients gb = backward(model, c, *prop, labels, split.train);
            total.W1 += gb.W1;
            total.W2 += gb.W2;
            if (fisher && gb.delta) xi_grad += xi_gradient(*params, *g.basis, *pert, *gb.delta);
        }
        const double inv = 1.0 / branches;
        loss *= inv;
        if (!std::isfinite(loss)) throw TrainingError("training loss is not finite", epoch);
        total.W1 *= inv;
        total.W2 *= inv;
        adam_step(model, total, cfg.lr, cfg.weight_decay);
        if (fisher) {
            // Ascent: Adam on the negated gradient.
            xi_view.row(0) = params->xi.transpose();
            adam_step(xi_view, xi_adam, Dense(-inv * xi_grad.transpose()), cfg.lr);
            params->xi = xi_view.row(0).transpose();
        }
        if (!model.W1.allFinite() || !model.W2.allFinite())
            throw TrainingError("non-finite weights after optimizer step", epoch);

        const Evaluation val = evaluate(model, g, labels, split.valid);
        EpochRecord rec{epoch, loss, acc, val.loss, val.accuracy};
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        result.epochs = epoch;
        if (should_stop(result.history, cfg)) {
            result.termination = Termination::early_stop;
            break;
        }
    }
    if (!split.test.empty()) {
        const Evaluation test = evaluate(model, g, labels, split.test);
        result.test_loss = test.loss;
        result.test_acc = test.accuracy;
    }
    result.perturbation = params;
    return result;
}

inline TrainResult train(const Dataset& d, const Split& split, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    return train(d, split, cfg, prepare_graph(d, cfg, cfg.seed), on_epoch);
}

}  // namespace fbgcn
