#pragma once

// Targeted L-infinity gradient-sign attacks against the plain classifier.
//
// Every kind descends the cross-entropy toward target_label() and projects
// onto the epsilon ball around the clean input after each step, so
//   FGSM  == BIA with one step of size epsilon
//   PGD   == BIA when random_start is off.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lasenn/classifier.hpp"
#include "lasenn/combiner.hpp"
#include "lasenn/error.hpp"
#include "lasenn/knn_index.hpp"
#include "lasenn/rng.hpp"

namespace lasenn {

enum class AttackKind { FGSM, BIA, PGD };

inline std::string_view to_string(AttackKind k) {
    switch (k) {
    case AttackKind::FGSM: return "fgsm";
    case AttackKind::BIA: return "bia";
    case AttackKind::PGD: return "pgd";
    }
    return "?";
}

inline AttackKind parse_attack_kind(std::string_view s) {
    if (s == "fgsm" || s == "FGSM") return AttackKind::FGSM;
    if (s == "bia" || s == "BIA") return AttackKind::BIA;
    if (s == "pgd" || s == "PGD") return AttackKind::PGD;
    throw ArgumentError("unknown attack '" + std::string(s) + "' (expected fgsm, bia or pgd)");
}

struct AttackConfig {
    AttackKind kind = AttackKind::BIA;
    double epsilon = 0.1;
    double step_size = 0.025;
    std::size_t num_steps = 10;
    bool random_start = false;
    double clamp_lo = -std::numeric_limits<double>::infinity();
    double clamp_hi = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;

    /// Conventional settings for `kind` at radius `eps`: step eps/4, 10 steps, random start for PGD.
    static AttackConfig defaults(AttackKind kind, double eps) {
        AttackConfig c;
        c.kind = kind;
        c.epsilon = eps;
        c.step_size = eps / 4.0;
        c.num_steps = kind == AttackKind::FGSM ? 1 : 10;
        c.random_start = kind == AttackKind::PGD;
        return c;
    }

    void validate() const {
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ArgumentError("AttackConfig: epsilon must be >= 0");
        if (kind != AttackKind::FGSM) {
            if (!(step_size >= 0.0) || step_size > epsilon)
                throw ArgumentError("AttackConfig: step_size must lie in [0, epsilon]");
            if (num_steps < 1) throw ArgumentError("AttackConfig: num_steps must be >= 1");
        }
        if (!(clamp_lo <= clamp_hi)) throw ArgumentError("AttackConfig: empty clamp range");
    }
};

/// (true_label + 1) mod num_classes.
inline std::uint32_t target_label(std::uint32_t true_label, std::uint32_t num_classes) {
    if (true_label >= num_classes) throw ArgumentError("target_label: label out of range");
    return (true_label + 1) % num_classes;
}

/// dCE(model(x), label)/dx.
inline std::vector<double> input_gradient(const Mlp& model, std::span<const double> x, std::uint32_t label) {
    Backprop bp(model);
    std::vector<double> g;
    bp.accumulate(x, label, nullptr, &g);
    return g;
}

/// Adversarial version of `x`; `config.seed` drives the PGD random start.
inline std::vector<double> attack(const Mlp& model, std::span<const double> x, std::uint32_t true_label,
                                  const AttackConfig& config) {
    config.validate();
    if (x.size() != model.input_dim()) throw ArgumentError("attack: input dimension mismatch");
    const auto target = target_label(true_label, static_cast<std::uint32_t>(model.num_classes()));
    const double eps = config.epsilon;
    const double step = config.kind == AttackKind::FGSM ? eps : config.step_size;
    const std::size_t steps = config.kind == AttackKind::FGSM ? 1 : config.num_steps;

    std::vector<double> adv(x.begin(), x.end());
    if (config.kind == AttackKind::PGD && config.random_start) {
        Rng rng(config.seed);
        for (std::size_t i = 0; i < adv.size(); ++i)
            adv[i] = std::clamp(adv[i] + rng.uniform(-eps, eps), config.clamp_lo, config.clamp_hi);
    }

    Backprop bp(model);
    std::vector<double> g;
    for (std::size_t s = 0; s < steps; ++s) {
        bp.accumulate(adv, target, nullptr, &g);
        for (std::size_t i = 0; i < adv.size(); ++i) {
            if (!std::isfinite(g[i])) throw NumericalError("attack: non-finite input gradient");
            const double sign = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
            const double moved = adv[i] - step * sign;
            const double projected = std::min(std::max(moved, x[i] - eps), x[i] + eps);
            adv[i] = std::clamp(projected, config.clamp_lo, config.clamp_hi);
        }
    }
    return adv;
}

inline std::vector<double> attack(const Mlp& model, std::span<const float> x, std::uint32_t true_label,
                                  const AttackConfig& config) {
    std::vector<double> xd(x.begin(), x.end());
    return attack(model, std::span<const double>(xd), true_label, config);
}

/// Embeddings and outputs of arbitrary double-precision inputs, as a query corpus.
inline LabeledCorpus embed_inputs(const Mlp& model, std::span<const std::vector<double>> inputs,
                                  const LabelVector& labels, std::size_t layer, OutputKind kind) {
    if (layer < 1 || layer > model.hidden_layers()) throw ArgumentError("embed_inputs: invalid layer index");
    if (inputs.size() != labels.size()) throw ArgumentError("embed_inputs: input/label count mismatch");
    const std::size_t width = model.layer_sizes()[layer];
    LabeledCorpus c{TensorMatrix(inputs.size(), width), TensorMatrix(inputs.size(), model.num_classes()),
                    LabelVector{labels.labels, static_cast<std::uint32_t>(model.num_classes())}};
    for (std::size_t r = 0; r < inputs.size(); ++r) {
        const auto f = forward(model, std::span<const double>(inputs[r]));
        for (std::size_t j = 0; j < width; ++j) c.embeddings(r, j) = static_cast<float>(f.hidden[layer - 1][j]);
        const auto& out = f.output(kind);
        for (std::size_t j = 0; j < out.size(); ++j) c.logits(r, j) = static_cast<float>(out[j]);
    }
    return c;
}

struct AttackedEvaluation {
    BatchSummary summary;
    std::vector<std::vector<double>> adversarial_inputs;
    BatchResult predictions;
};

/// Attack every test row against the native model (per-row seed derived from config.seed),
/// then score native and combined predictions on the same attacked inputs.
inline AttackedEvaluation evaluate_under_attack(const Mlp& model, const LabeledCorpus& corpus, const KnnIndex& index,
                                                const LasennConfig& lasenn_config, const Dataset& test,
                                                const AttackConfig& attack_config,
                                                OutputKind kind = OutputKind::Probabilities) {
    test.validate();
    if (test.size() == 0) throw ArgumentError("evaluate_under_attack: empty test set");
    const std::size_t layer = resolve_layer(model, lasenn_config.layer);
    AttackedEvaluation out;
    out.adversarial_inputs.reserve(test.size());
    for (std::size_t r = 0; r < test.size(); ++r) {
        AttackConfig per_row = attack_config;
        per_row.seed = derive_seed(attack_config.seed, r);
        out.adversarial_inputs.push_back(attack(model, test.features.row(r), test.labels[r], per_row));
    }
    const auto queries = embed_inputs(model, out.adversarial_inputs, test.labels, layer, kind);
    out.predictions = predict_batch(lasenn_config, corpus, index, queries);
    out.summary = out.predictions.summary;
    return out;
}

/// Attacked inputs as a float32 matrix for offline inspection.
inline TensorMatrix to_tensor(std::span<const std::vector<double>> rows) {
    TensorMatrix m;
    std::vector<float> buf;
    for (const auto& r : rows) {
        buf.assign(r.begin(), r.end());
        m.push_row(buf);
    }
    return m;
}

} // namespace lasenn
