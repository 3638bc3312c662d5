#pragma once

// Exact brute-force k-nearest-neighbor search over float32 embeddings.
//
// SquaredL2 is a distance (smaller is better); Cosine is a similarity
// (larger is better). NeighborSet entries are always ordered best-first
// with ties broken by the lower corpus row.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lasenn/error.hpp"
#include "lasenn/tensor_io.hpp"

namespace lasenn {

enum class Metric { SquaredL2, Cosine };

inline std::string_view to_string(Metric m) { return m == Metric::SquaredL2 ? "l2" : "cosine"; }

inline Metric parse_metric(std::string_view s) {
    if (s == "l2" || s == "squared_l2" || s == "SquaredL2") return Metric::SquaredL2;
    if (s == "cosine" || s == "Cosine") return Metric::Cosine;
    throw ArgumentError("unknown metric '" + std::string(s) + "' (expected l2 or cosine)");
}

/// True if score `a` ranks ahead of score `b` under `m`.
inline bool better_score(Metric m, double a, double b) { return m == Metric::SquaredL2 ? a < b : a > b; }

struct Neighbor {
    std::size_t row = 0;
    double score = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct NeighborSet {
    std::vector<Neighbor> entries;
    std::size_t k = 0;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }
    const Neighbor& operator[](std::size_t i) const { return entries[i]; }
    auto begin() const { return entries.begin(); }
    auto end() const { return entries.end(); }

    friend bool operator==(const NeighborSet&, const NeighborSet&) = default;
};

inline double squared_l2(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

inline double dot(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

inline double l2_norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

/// Cosine similarity; both vectors must be nonzero.
inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    return dot(a, b) / (l2_norm(a) * l2_norm(b));
}

inline double metric_score(Metric m, std::span<const float> a, std::span<const float> b) {
    return m == Metric::SquaredL2 ? squared_l2(a, b) : cosine_similarity(a, b);
}

class KnnIndex {
  public:
    KnnIndex(TensorMatrix embeddings, Metric metric) : embeddings_(std::move(embeddings)), metric_(metric) {
        if (embeddings_.rows() == 0 || embeddings_.cols() == 0)
            throw ArgumentError("build_index: empty embedding matrix");
        if (!embeddings_.all_finite()) throw ArgumentError("build_index: non-finite embedding");
        if (metric_ == Metric::Cosine) {
            norms_.resize(embeddings_.rows());
            for (std::size_t r = 0; r < embeddings_.rows(); ++r) {
                norms_[r] = l2_norm(embeddings_.row(r));
                if (norms_[r] == 0.0) excluded_.push_back(r);
            }
        }
    }

    Metric metric() const noexcept { return metric_; }
    std::size_t rows() const noexcept { return embeddings_.rows(); }
    std::size_t dims() const noexcept { return embeddings_.cols(); }
    const TensorMatrix& embeddings() const noexcept { return embeddings_; }

    /// Rows dropped from the candidate set (zero vectors under Cosine).
    const std::vector<std::size_t>& excluded_rows() const noexcept { return excluded_; }

    /// Per-row L2 norms; populated for Cosine only.
    std::span<const double> norms() const noexcept { return norms_; }

    std::size_t candidate_count() const noexcept { return rows() - excluded_.size(); }

    NeighborSet query(std::span<const float> q, std::size_t k, std::optional<std::size_t> exclude = std::nullopt) const {
        check_query(q, k);
        double q_norm = 0.0;
        if (metric_ == Metric::Cosine) {
            q_norm = l2_norm(q);
            if (q_norm == 0.0) throw ArgumentError("query: zero vector has no cosine similarity");
        }
        std::vector<Neighbor> cand;
        cand.reserve(rows());
        for (std::size_t r = 0; r < rows(); ++r) {
            if (exclude && *exclude == r) continue;
            if (metric_ == Metric::Cosine) {
                if (norms_[r] == 0.0) continue;
                cand.push_back({r, dot(q, embeddings_.row(r)) / (q_norm * norms_[r])});
            } else {
                cand.push_back({r, squared_l2(q, embeddings_.row(r))});
            }
        }
        return take_best(std::move(cand), k);
    }

    /// k best rows of the union of each query's k nearest; a row reached by several queries keeps its best score.
    NeighborSet query_union(std::span<const std::vector<float>> queries, std::size_t k) const {
        if (queries.empty()) throw ArgumentError("query_union: no queries");
        std::unordered_map<std::size_t, double> best;
        for (const auto& q : queries) {
            for (const auto& n : query(q, k)) {
                auto [it, inserted] = best.try_emplace(n.row, n.score);
                if (!inserted && better_score(metric_, n.score, it->second)) it->second = n.score;
            }
        }
        std::vector<Neighbor> cand;
        cand.reserve(best.size());
        for (const auto& [row, score] : best) cand.push_back({row, score});
        return take_best(std::move(cand), k);
    }

  private:
    void check_query(std::span<const float> q, std::size_t k) const {
        if (q.size() != dims())
            throw ArgumentError("query: dimension " + std::to_string(q.size()) + " != index dimension " +
                                std::to_string(dims()));
        if (k == 0) throw ArgumentError("query: k must be >= 1");
    }

    NeighborSet take_best(std::vector<Neighbor> cand, std::size_t k) const {
        const auto order = [m = metric_](const Neighbor& a, const Neighbor& b) {
            if (a.score != b.score) return better_score(m, a.score, b.score);
            return a.row < b.row;
        };
        const std::size_t n = std::min(k, cand.size());
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(n), cand.end(), order);
        cand.resize(n);
        return {std::move(cand), k};
    }

    TensorMatrix embeddings_;
    Metric metric_;
    std::vector<double> norms_;
    std::vector<std::size_t> excluded_;
};

inline KnnIndex build_index(TensorMatrix embeddings, Metric metric) { return KnnIndex(std::move(embeddings), metric); }

} // namespace lasenn
