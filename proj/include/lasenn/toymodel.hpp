#pragma once

// One-dimensional two-class model of a decision boundary.
//
// Positions are uniform on [0, 1]. Under the skewed-triangular class
// distribution a point at x is blue with probability 1 - x, so the optimal
// boundary sits at 0.5 and blue dominates to its left. A fitted boundary is
// described by its offset c: it sits at 0.5 - c, where the simple classifier
// C_S is undecided (C_S = 0.5). A nearest neighbor drawn from the window
// [0.5 - c - a, 0.5 - c + a] is blue with probability 0.5 + c.
//
// Coordinates of the three classifiers are raw positions; callers pass the
// linear-regime center explicitly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lasenn/combiner.hpp"
#include "lasenn/error.hpp"
#include "lasenn/rng.hpp"

namespace lasenn::toy {

enum class Distribution { SkewedTriangular, Uniform };

inline std::string_view to_string(Distribution d) {
    return d == Distribution::SkewedTriangular ? "skewed" : "uniform";
}

inline Distribution parse_distribution(std::string_view s) {
    if (s == "skewed" || s == "skewed_triangular" || s == "SkewedTriangular") return Distribution::SkewedTriangular;
    if (s == "uniform" || s == "Uniform") return Distribution::Uniform;
    throw ArgumentError("unknown toy distribution '" + std::string(s) + "' (expected skewed or uniform)");
}

/// p(blue | position x).
inline double blue_probability(Distribution d, double x) {
    return d == Distribution::SkewedTriangular ? 1.0 - x : 0.5;
}

struct Point {
    double x = 0.0;
    bool blue = false;
};

/// Piecewise-linear stand-in for a logistic unit: 0 below center - d, 1 above center + d, linear in between.
inline double c_s(double x, double center, double d) {
    if (!(d > 0.0)) throw ArgumentError("c_s: d must be > 0");
    return std::clamp(0.5 * (1.0 + (x - center) / d), 0.0, 1.0);
}

/// Index of the training point nearest to x (ties go to the smaller position).
inline std::size_t nearest_point(double x, std::span<const Point> training) {
    if (training.empty()) throw ArgumentError("nearest_point: empty training set");
    std::size_t best = 0;
    for (std::size_t i = 1; i < training.size(); ++i) {
        const double di = std::abs(training[i].x - x), db = std::abs(training[best].x - x);
        if (di < db || (di == db && training[i].x < training[best].x)) best = i;
    }
    return best;
}

/// Class probability of the nearest training point's position; its label is ignored.
inline double c_nn(double x, Distribution dist, std::span<const Point> training) {
    return blue_probability(dist, training[nearest_point(x, training)].x);
}

inline double c_la(double x, double center, double d, Distribution dist, std::span<const Point> training, double w_q) {
    return w_q * c_s(x, center, d) + (1.0 - w_q) * c_nn(x, dist, training);
}

struct ToyModelConfig {
    Distribution distribution = Distribution::SkewedTriangular;
    double c = 0.0;  // boundary offset; the fitted boundary sits at 0.5 - c
    double d = 0.02; // half-width of C_S's linear regime
    double a = 0.05; // half-width of the neighbor window
    double w_q = 0.88;
    std::size_t n = 100;              // training points per trial
    std::size_t n_trials = 100000;    // Monte-Carlo trials
    std::optional<double> query;      // query position; defaults to the fitted boundary
    std::uint64_t seed = 0;

    double query_position() const { return query.value_or(0.5 - c); }

    void validate() const {
        if (!(d > 0.0) || !(a > 0.0)) throw ArgumentError("ToyModelConfig: d and a must be > 0");
        if (!(w_q > 0.5 && w_q <= 1.0)) throw ArgumentError("ToyModelConfig: w_q must lie in (0.5, 1]");
        if (n < 1 || n_trials < 1) throw ArgumentError("ToyModelConfig: n and n_trials must be >= 1");
        const double q = query_position();
        if (!(q - d > 0.0 && q + d < 1.0 && q - a > 0.0 && q + a < 1.0))
            throw ArgumentError("ToyModelConfig: [q-d, q+d] and [q-a, q+a] must lie inside (0, 1), q = " +
                                std::to_string(q));
    }
};

/// Training set of n points: position uniform on [0, 1], class drawn from the distribution.
inline std::vector<Point> sample_points(Distribution dist, std::size_t n, Rng& rng) {
    std::vector<Point> pts(n);
    for (auto& p : pts) {
        p.x = rng.uniform();
        p.blue = rng.bernoulli(blue_probability(dist, p.x));
    }
    return pts;
}

struct NnBlueEstimate {
    double mc_estimate = 0.0;
    double mc_stderr = 0.0;
    double analytic = 0.0;
    std::size_t conditioned_trials = 0;
    std::size_t trials = 0;
};

/// Monte-Carlo estimate of p(nearest neighbor is blue | it lies within a of the query).
/// Trial t uses its own stream derive_seed(seed, t), so trials are order-independent.
inline NnBlueEstimate estimate_nn_blue_prob(const ToyModelConfig& config) {
    config.validate();
    const double q = config.query_position();
    std::size_t hits = 0, blue = 0;
    for (std::size_t t = 0; t < config.n_trials; ++t) {
        Rng rng(derive_seed(config.seed, t));
        // Only the nearest point's class matters, so classes are drawn lazily.
        double nn = rng.uniform();
        for (std::size_t i = 1; i < config.n; ++i) {
            const double x = rng.uniform();
            const double dx = std::abs(x - q), dn = std::abs(nn - q);
            if (dx < dn || (dx == dn && x < nn)) nn = x;
        }
        if (std::abs(nn - q) > config.a) continue;
        ++hits;
        blue += rng.bernoulli(blue_probability(config.distribution, nn));
    }
    if (hits == 0)
        throw ArgumentError("estimate_nn_blue_prob: no trial had a neighbor within a of the query; raise n or a");
    NnBlueEstimate e;
    e.trials = config.n_trials;
    e.conditioned_trials = hits;
    e.mc_estimate = static_cast<double>(blue) / static_cast<double>(hits);
    e.mc_stderr = std::sqrt(e.mc_estimate * (1.0 - e.mc_estimate) / static_cast<double>(hits));
    e.analytic = blue_probability(config.distribution, q);
    return e;
}

/// Threshold t (blue predicted for x < t) with the fewest training errors.
/// Candidates are 0, 1 and midpoints of consecutive sorted positions; ties go to the one nearest 0.5.
inline double optimal_threshold(std::span<const Point> training) {
    std::vector<Point> pts(training.begin(), training.end());
    std::sort(pts.begin(), pts.end(), [](const Point& l, const Point& r) { return l.x < r.x; });
    long errors = 0;
    for (const auto& p : pts) errors += p.blue; // t = 0: everything predicted red
    double best_t = 0.0;
    long best_err = errors;
    const auto consider = [&](double t, long err) {
        if (err < best_err || (err == best_err && std::abs(t - 0.5) < std::abs(best_t - 0.5))) {
            best_err = err;
            best_t = t;
        }
    };
    for (std::size_t i = 0; i < pts.size(); ++i) {
        errors += pts[i].blue ? -1 : 1; // point i now predicted blue
        const double t = i + 1 < pts.size() ? 0.5 * (pts[i].x + pts[i + 1].x) : 1.0;
        if (i + 1 < pts.size() && pts[i + 1].x == pts[i].x) continue;
        consider(t, errors);
    }
    return best_t;
}

struct DriftRow {
    std::size_t n = 0;
    double median_abs_offset = 0.0;
    std::vector<double> offsets; // signed threshold - 0.5, one per seed
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw ArgumentError("median of empty sequence");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// For each n, fit the error-minimizing threshold on n fresh points per seed and report the median |offset| from 0.5.
inline std::vector<DriftRow> boundary_drift(Distribution dist, std::span<const std::size_t> ns,
                                            std::span<const std::uint64_t> seeds) {
    if (seeds.empty()) throw ArgumentError("boundary_drift: no seeds");
    std::vector<DriftRow> rows;
    for (auto n : ns) {
        if (n < 2) throw ArgumentError("boundary_drift: n must be >= 2");
        DriftRow row;
        row.n = n;
        std::vector<double> abs_off;
        for (auto s : seeds) {
            Rng rng(derive_seed(s, n));
            const auto pts = sample_points(dist, n, rng);
            const double off = optimal_threshold(pts) - 0.5;
            row.offsets.push_back(off);
            abs_off.push_back(std::abs(off));
        }
        row.median_abs_offset = median(abs_off);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_estimate_csv_header(std::ostream& out) { out << "c,d,a,n_trials,mc_estimate,mc_stderr,analytic\n"; }

inline void write_estimate_csv_row(std::ostream& out, const ToyModelConfig& cfg, const NnBlueEstimate& e) {
    out << format_real(cfg.c) << ',' << format_real(cfg.d) << ',' << format_real(cfg.a) << ',' << e.conditioned_trials
        << ',' << format_real(e.mc_estimate) << ',' << format_real(e.mc_stderr) << ',' << format_real(e.analytic)
        << '\n';
}

inline void write_drift_csv(std::ostream& out, std::span<const DriftRow> rows) {
    out << "n,seeds,median_abs_offset\n";
    for (const auto& r : rows) out << r.n << ',' << r.offsets.size() << ',' << format_real(r.median_abs_offset) << '\n';
}

} // namespace lasenn::toy
