#pragma once

// Latent-space self-kNN inference: blend a query's own network output with
// the mean output of its k nearest training neighbors in embedding space,
// then take the argmax.

#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lasenn/error.hpp"
#include "lasenn/knn_index.hpp"
#include "lasenn/tensor_io.hpp"

namespace lasenn {

struct LasennConfig {
    std::size_t k = 3;
    double w_q = 0.88;
    Metric metric = Metric::SquaredL2;
    /// 1-based hidden layer whose activations feed the index; 0 selects the last hidden layer.
    std::size_t layer = 0;

    void validate() const {
        if (k < 1) throw ArgumentError("LasennConfig: k must be >= 1");
        if (!(w_q >= 0.0 && w_q <= 1.0)) throw ArgumentError("LasennConfig: w_q must lie in [0, 1]");
    }
};

struct CombinedPrediction {
    std::vector<double> combined_output;
    std::uint32_t predicted_class = 0;
    std::uint32_t native_class = 0;
    NeighborSet neighbors;
    bool changed = false;
};

struct BatchSummary {
    double acc_lasenn = 0.0;
    double acc_native = 0.0;
    double delta_acc = 0.0;
    double same_pred_fraction = 0.0;
};

struct BatchResult {
    std::vector<CombinedPrediction> predictions;
    BatchSummary summary;
};

/// Index of the largest element; the lowest index wins ties.
template <typename T>
std::uint32_t argmax(std::span<const T> v) {
    if (v.empty()) throw ArgumentError("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return static_cast<std::uint32_t>(best);
}

/// w_q * query + (1 - w_q) * mean(neighbors), accumulated in double.
inline std::vector<double> combine(std::span<const float> query_logits,
                                   std::span<const std::span<const float>> neighbor_logits, double w_q) {
    if (neighbor_logits.empty()) throw ArgumentError("combine: empty neighbor list");
    const std::size_t n = query_logits.size();
    std::vector<double> mean(n, 0.0);
    for (const auto& nb : neighbor_logits) {
        if (nb.size() != n) throw ArgumentError("combine: neighbor output length mismatch");
        for (std::size_t j = 0; j < n; ++j) mean[j] += static_cast<double>(nb[j]);
    }
    const double inv_k = 1.0 / static_cast<double>(neighbor_logits.size());
    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j)
        out[j] = w_q * static_cast<double>(query_logits[j]) + (1.0 - w_q) * (mean[j] * inv_k);
    return out;
}

inline CombinedPrediction predict(const LasennConfig& config, const LabeledCorpus& corpus, const KnnIndex& index,
                                  std::span<const float> query_embedding, std::span<const float> query_logits) {
    config.validate();
    if (index.rows() != corpus.size()) throw ArgumentError("predict: index and corpus sizes differ");
    if (query_logits.size() != corpus.logits.cols()) throw ArgumentError("predict: query output width mismatch");

    CombinedPrediction p;
    p.neighbors = index.query(query_embedding, config.k);
    if (p.neighbors.empty()) throw ArgumentError("predict: index has no usable candidates");
    std::vector<std::span<const float>> nb;
    nb.reserve(p.neighbors.size());
    for (const auto& n : p.neighbors) nb.push_back(corpus.logits.row(n.row));
    p.combined_output = combine(query_logits, nb, config.w_q);
    p.predicted_class = argmax<double>(p.combined_output);
    p.native_class = argmax<float>(query_logits);
    p.changed = p.predicted_class != p.native_class;
    return p;
}

/// Accuracy and samePred over predictions whose ground truth is `labels`.
inline BatchSummary summarize(std::span<const CombinedPrediction> preds, const LabelVector& labels) {
    if (preds.empty()) throw ArgumentError("summarize: empty prediction set");
    std::size_t ok_lasenn = 0, ok_native = 0, same = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        ok_lasenn += preds[i].predicted_class == labels[i];
        ok_native += preds[i].native_class == labels[i];
        same += !preds[i].changed;
    }
    const double n = static_cast<double>(preds.size());
    BatchSummary s;
    s.acc_lasenn = static_cast<double>(ok_lasenn) / n;
    s.acc_native = static_cast<double>(ok_native) / n;
    s.delta_acc = s.acc_lasenn - s.acc_native;
    s.same_pred_fraction = static_cast<double>(same) / n;
    return s;
}

inline BatchResult predict_batch(const LasennConfig& config, const LabeledCorpus& corpus, const KnnIndex& index,
                                 const LabeledCorpus& queries) {
    queries.validate();
    if (queries.size() == 0) throw ArgumentError("predict_batch: empty query set");
    BatchResult out;
    out.predictions.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
        out.predictions.push_back(predict(config, corpus, index, queries.embeddings.row(i), queries.logits.row(i)));
    out.summary = summarize(out.predictions, queries.labels);
    return out;
}

inline std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

/// `query_id,label,native_class,lasenn_class,changed,nn1..nnk` rows, then one `#summary` line.
inline void write_predictions_csv(std::ostream& out, const BatchResult& r, const LabelVector& labels, std::size_t k) {
    out << "query_id,label,native_class,lasenn_class,changed";
    for (std::size_t j = 1; j <= k; ++j) out << ",nn" << j;
    out << '\n';
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
        const auto& p = r.predictions[i];
        out << i << ',' << labels[i] << ',' << p.native_class << ',' << p.predicted_class << ',' << (p.changed ? 1 : 0);
        for (std::size_t j = 0; j < k; ++j) {
            out << ',';
            if (j < p.neighbors.size()) out << p.neighbors[j].row;
        }
        out << '\n';
    }
    out << "#summary,acc_lasenn=" << format_real(r.summary.acc_lasenn)
        << ",acc_native=" << format_real(r.summary.acc_native) << ",delta_acc=" << format_real(r.summary.delta_acc)
        << ",same_pred=" << format_real(r.summary.same_pred_fraction) << '\n';
}

} // namespace lasenn
