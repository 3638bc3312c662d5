#pragma once

// Density diagnostics for the latent space: neighbor pureness, mean
// neighbor distance, their correlation, and projection histograms of two
// nearby classes onto the line joining their means.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "lasenn/combiner.hpp"
#include "lasenn/error.hpp"
#include "lasenn/knn_index.hpp"
#include "lasenn/tensor_io.hpp"

namespace lasenn {

/// Number of neighbors labelled `query_label`.
inline std::size_t pureness(const NeighborSet& neighbors, const LabelVector& labels, std::uint32_t query_label) {
    std::size_t p = 0;
    for (const auto& n : neighbors) p += labels[n.row] == query_label;
    return p;
}

/// Mean Euclidean (not squared) distance from the query to its neighbors.
inline double avg_l2(const NeighborSet& neighbors, const TensorMatrix& corpus_embeddings,
                     std::span<const float> query_embedding) {
    if (neighbors.empty()) throw ArgumentError("avg_l2: empty neighbor set");
    double sum = 0.0;
    for (const auto& n : neighbors) sum += std::sqrt(squared_l2(corpus_embeddings.row(n.row), query_embedding));
    return sum / static_cast<double>(neighbors.size());
}

struct Correlation {
    std::optional<double> r;       // empty when either series is constant
    std::optional<double> p_value; // two-sided, t distribution with n-2 degrees of freedom
    std::size_t n = 0;

    bool degenerate() const noexcept { return !r.has_value(); }
};

inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ArgumentError("pearson: series lengths differ");
    if (x.size() < 3) throw ArgumentError("pearson: need at least 3 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Correlation c;
    c.n = x.size();
    if (sxx == 0.0 || syy == 0.0) return c;
    const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    c.r = r;
    if (std::abs(r) == 1.0) {
        c.p_value = 0.0;
    } else {
        const double df = n - 2.0;
        const double t = std::abs(r) * std::sqrt(df / (1.0 - r * r));
        const boost::math::students_t dist(df);
        c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
    }
    return c;
}

struct PointDensity {
    std::size_t pureness = 0;
    double avg_l2 = 0.0;
    bool native_correct = false;
    bool changed = false;
};

struct DensityReport {
    Correlation corr_P_avgL2;
    double same_pred = 0.0;
    std::optional<double> avgL2_corr;   // native prediction correct
    std::optional<double> avgL2_wrong;  // native prediction wrong
    std::optional<double> avgL2_change; // combined prediction differs from native
    double avgL2_all = 0.0;
    std::vector<PointDensity> points;
};

/// Per-test-point pureness, avgL2 and prediction outcomes under `config`.
inline std::vector<PointDensity> density_points(const LabeledCorpus& corpus, const KnnIndex& index,
                                                const LabeledCorpus& test, const LasennConfig& config) {
    test.validate();
    std::vector<PointDensity> pts;
    pts.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto pred = predict(config, corpus, index, test.embeddings.row(i), test.logits.row(i));
        PointDensity p;
        p.pureness = pureness(pred.neighbors, corpus.labels, test.labels[i]);
        p.avg_l2 = avg_l2(pred.neighbors, corpus.embeddings, test.embeddings.row(i));
        p.native_correct = pred.native_class == test.labels[i];
        p.changed = pred.changed;
        pts.push_back(p);
    }
    return pts;
}

inline DensityReport density_report(const LabeledCorpus& corpus, const KnnIndex& index, const LabeledCorpus& test,
                                    const LasennConfig& config) {
    if (test.size() < 3) throw ArgumentError("density_report: need at least 3 test points");
    DensityReport rep;
    rep.points = density_points(corpus, index, test, config);

    std::vector<double> ps, ds;
    double sum_corr = 0.0, sum_wrong = 0.0, sum_change = 0.0, sum_all = 0.0;
    std::size_t n_corr = 0, n_wrong = 0, n_change = 0, n_same = 0;
    for (const auto& p : rep.points) {
        ps.push_back(static_cast<double>(p.pureness));
        ds.push_back(p.avg_l2);
        sum_all += p.avg_l2;
        if (p.native_correct) {
            sum_corr += p.avg_l2;
            ++n_corr;
        } else {
            sum_wrong += p.avg_l2;
            ++n_wrong;
        }
        if (p.changed) {
            sum_change += p.avg_l2;
            ++n_change;
        } else {
            ++n_same;
        }
    }
    const auto mean_or_missing = [](double sum, std::size_t n) -> std::optional<double> {
        if (n == 0) return std::nullopt;
        return sum / static_cast<double>(n);
    };
    const double n = static_cast<double>(rep.points.size());
    rep.corr_P_avgL2 = pearson(ps, ds);
    rep.same_pred = static_cast<double>(n_same) / n;
    rep.avgL2_corr = mean_or_missing(sum_corr, n_corr);
    rep.avgL2_wrong = mean_or_missing(sum_wrong, n_wrong);
    rep.avgL2_change = mean_or_missing(sum_change, n_change);
    rep.avgL2_all = sum_all / n;
    return rep;
}

namespace detail {
inline std::string real_or_na(const std::optional<double>& v) { return v ? format_real(*v) : std::string("NA"); }
} // namespace detail

inline void write_density_csv(std::ostream& out, const DensityReport& r) {
    out << "metric,value\n";
    out << "corr_P_avgL2," << detail::real_or_na(r.corr_P_avgL2.r) << '\n';
    out << "p_value," << detail::real_or_na(r.corr_P_avgL2.p_value) << '\n';
    out << "same_pred," << format_real(r.same_pred) << '\n';
    out << "avgL2_corr," << detail::real_or_na(r.avgL2_corr) << '\n';
    out << "avgL2_wrong," << detail::real_or_na(r.avgL2_wrong) << '\n';
    out << "avgL2_change," << detail::real_or_na(r.avgL2_change) << '\n';
    out << "avgL2_all," << format_real(r.avgL2_all) << '\n';
}

struct ProjectionHistogram {
    std::uint32_t class_a = 0;
    std::uint32_t class_b = 0;
    std::vector<double> bin_edges; // bins + 1, strictly increasing
    std::vector<std::size_t> counts_a;
    std::vector<std::size_t> counts_b;
    std::vector<std::size_t> counts_changed;
    double mean_distance = 0.0; // |mu_b - mu_a|, the projection of mu_b
    std::vector<double> projections_a;
    std::vector<double> projections_b;
};

/// Projects samples of `class_a` and its nearest-mean class onto the unit vector from mu_a to mu_b (origin mu_a).
inline ProjectionHistogram projection_histogram(const TensorMatrix& embeddings, const LabelVector& labels,
                                                std::span<const std::uint32_t> native_pred,
                                                std::span<const std::uint32_t> lasenn_pred, std::uint32_t class_a,
                                                std::size_t bins = 50) {
    const std::size_t n = embeddings.rows(), dims = embeddings.cols();
    if (labels.size() != n || native_pred.size() != n || lasenn_pred.size() != n)
        throw ArgumentError("projection_histogram: input lengths differ");
    if (bins < 1) throw ArgumentError("projection_histogram: bins must be >= 1");
    if (class_a >= labels.num_classes) throw ArgumentError("projection_histogram: class_a out of range");

    std::vector<std::vector<double>> means(labels.num_classes, std::vector<double>(dims, 0.0));
    std::vector<std::size_t> counts(labels.num_classes, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = labels[i];
        ++counts[c];
        for (std::size_t j = 0; j < dims; ++j) means[c][j] += embeddings(i, j);
    }
    for (std::size_t c = 0; c < means.size(); ++c)
        if (counts[c] > 0)
            for (auto& v : means[c]) v /= static_cast<double>(counts[c]);
    if (counts[class_a] == 0) throw ArgumentError("projection_histogram: class_a has no samples");

    std::optional<std::uint32_t> class_b;
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t c = 0; c < means.size(); ++c) {
        if (c == class_a || counts[c] == 0) continue;
        double d2 = 0.0;
        for (std::size_t j = 0; j < dims; ++j) d2 += (means[c][j] - means[class_a][j]) * (means[c][j] - means[class_a][j]);
        if (d2 < best) {
            best = d2;
            class_b = c;
        }
    }
    if (!class_b) throw ArgumentError("projection_histogram: need at least two populated classes");
    if (best == 0.0) throw ArgumentError("projection_histogram: identical class means, no projection direction");

    ProjectionHistogram h;
    h.class_a = class_a;
    h.class_b = *class_b;
    h.mean_distance = std::sqrt(best);
    std::vector<double> dir(dims);
    for (std::size_t j = 0; j < dims; ++j) dir[j] = (means[h.class_b][j] - means[class_a][j]) / h.mean_distance;

    std::vector<std::pair<double, std::size_t>> projected; // (projection, row)
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != class_a && labels[i] != h.class_b) continue;
        double p = 0.0;
        for (std::size_t j = 0; j < dims; ++j) p += (embeddings(i, j) - means[class_a][j]) * dir[j];
        projected.emplace_back(p, i);
        (labels[i] == class_a ? h.projections_a : h.projections_b).push_back(p);
    }
    double lo = projected.front().first, hi = lo;
    for (const auto& [p, _] : projected) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    if (hi == lo) hi = lo + 1.0;
    h.bin_edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b)
        h.bin_edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    h.bin_edges[bins] = hi;
    h.counts_a.assign(bins, 0);
    h.counts_b.assign(bins, 0);
    h.counts_changed.assign(bins, 0);
    for (const auto& [p, row] : projected) {
        auto b = static_cast<std::size_t>((p - lo) / (hi - lo) * static_cast<double>(bins));
        b = std::min(b, bins - 1);
        (labels[row] == class_a ? h.counts_a : h.counts_b)[b]++;
        if (native_pred[row] != lasenn_pred[row]) h.counts_changed[b]++;
    }
    return h;
}

inline void write_histogram_csv(std::ostream& out, const ProjectionHistogram& h) {
    out << "bin_lo,bin_hi,count_a,count_b,count_changed\n";
    for (std::size_t b = 0; b < h.counts_a.size(); ++b)
        out << format_real(h.bin_edges[b]) << ',' << format_real(h.bin_edges[b + 1]) << ',' << h.counts_a[b] << ','
            << h.counts_b[b] << ',' << h.counts_changed[b] << '\n';
}

/// Bar chart: class counts on the left axis, changed-prediction counts (scaled separately) as an outline.
inline void write_histogram_svg(std::ostream& out, const ProjectionHistogram& h) {
    constexpr double width = 640, height = 360, margin = 40;
    const std::size_t bins = h.counts_a.size();
    std::size_t max_class = 1, max_changed = 1;
    for (std::size_t b = 0; b < bins; ++b) {
        max_class = std::max({max_class, h.counts_a[b], h.counts_b[b]});
        max_changed = std::max(max_changed, h.counts_changed[b]);
    }
    const double bw = (width - 2 * margin) / static_cast<double>(bins);
    const double plot_h = height - 2 * margin;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const auto bar = [&](std::size_t b, std::size_t count, double scale_max, const char* style) {
        const double bh = plot_h * static_cast<double>(count) / scale_max;
        out << "<rect x=\"" << format_real(margin + bw * static_cast<double>(b)) << "\" y=\""
            << format_real(height - margin - bh) << "\" width=\"" << format_real(bw) << "\" height=\""
            << format_real(bh) << "\" " << style << "/>\n";
    };
    for (std::size_t b = 0; b < bins; ++b) {
        bar(b, h.counts_a[b], static_cast<double>(max_class), "fill=\"steelblue\" fill-opacity=\"0.5\"");
        bar(b, h.counts_b[b], static_cast<double>(max_class), "fill=\"darkorange\" fill-opacity=\"0.5\"");
        bar(b, h.counts_changed[b], static_cast<double>(max_changed), "fill=\"none\" stroke=\"crimson\"");
    }
    out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin << "\" y2=\""
        << height - margin << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << margin << "\" y=\"20\" font-size=\"12\">class " << h.class_a << " (blue) vs class "
        << h.class_b << " (orange); changed predictions (red, right scale, max " << max_changed << ")</text>\n";
    out << "</svg>\n";
}

} // namespace lasenn
