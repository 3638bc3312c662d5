#pragma once

// End-to-end experiment pipelines on synthetic data: generate, (optionally)
// corrupt labels, train, embed, index, and score native vs combined
// predictions, replicated over several seeds.
//
// Seed derivation from one master seed M:
//   dataset           derive_seed(M, 1)          shared by all replicates
//   replicate r       R = derive_seed(M, 1000 + r)
//     label noise     derive_seed(R, 2)
//     weight init     derive_seed(R, 3)
//     batch shuffling derive_seed(R, 4)
//     attacks         derive_seed(R, 5)

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "lasenn/adversarial.hpp"
#include "lasenn/classifier.hpp"
#include "lasenn/combiner.hpp"
#include "lasenn/knn_index.hpp"
#include "lasenn/rng.hpp"

namespace lasenn {

inline constexpr std::uint64_t kDataStream = 1;
inline constexpr std::uint64_t kNoiseStream = 2;
inline constexpr std::uint64_t kInitStream = 3;
inline constexpr std::uint64_t kShuffleStream = 4;
inline constexpr std::uint64_t kAttackStream = 5;

inline std::uint64_t replicate_seed(std::uint64_t master, std::size_t replicate) {
    return derive_seed(master, 1000 + replicate);
}

struct PipelineConfig {
    SyntheticSpec data;
    std::vector<std::size_t> hidden{64, 32};
    TrainConfig train;
    OutputKind output = OutputKind::Probabilities;
    double noise = 0.0;
    std::uint64_t seed = 0;

    std::vector<std::size_t> layer_sizes() const {
        std::vector<std::size_t> s{data.dims};
        s.insert(s.end(), hidden.begin(), hidden.end());
        s.push_back(data.num_classes);
        return s;
    }
};

struct TrainedReplicate {
    std::uint64_t seed = 0; // replicate seed
    SyntheticData data;     // clean labels
    Dataset train_used;     // labels after noise injection
    Mlp model;
    std::vector<EpochStats> trace;
};

inline SyntheticData pipeline_data(const PipelineConfig& cfg) {
    SyntheticSpec spec = cfg.data;
    spec.seed = derive_seed(cfg.seed, kDataStream);
    return generate_synthetic(spec);
}

inline TrainedReplicate train_replicate(const PipelineConfig& cfg, const SyntheticData& data, std::size_t replicate) {
    TrainedReplicate r;
    r.seed = replicate_seed(cfg.seed, replicate);
    r.data = data;
    r.train_used = data.train;
    if (cfg.noise > 0.0) r.train_used.labels = permute_labels(data.train.labels, cfg.noise, derive_seed(r.seed, kNoiseStream));
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(r.seed, kShuffleStream);
    auto result = train(Mlp::initialized(cfg.layer_sizes(), derive_seed(r.seed, kInitStream)), r.train_used, tc);
    r.model = std::move(result.model);
    r.trace = std::move(result.trace);
    return r;
}

/// Training corpus, test queries and index for one layer/metric choice.
struct EmbeddedReplicate {
    LabeledCorpus corpus;
    LabeledCorpus queries;
    KnnIndex index;
};

inline EmbeddedReplicate embed_replicate(const TrainedReplicate& r, std::size_t layer, Metric metric, OutputKind kind) {
    const std::size_t l = resolve_layer(r.model, layer);
    auto corpus = export_corpus(r.model, r.train_used, l, kind);
    auto queries = export_corpus(r.model, r.data.test, l, kind);
    KnnIndex index(corpus.embeddings, metric);
    return {std::move(corpus), std::move(queries), std::move(index)};
}

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;
};

/// Mean and sample standard deviation (0 for a single value).
inline MeanStd mean_std(std::span<const double> v) {
    MeanStd m;
    if (v.empty()) return m;
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        m.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return m;
}

struct SummaryStats {
    MeanStd acc_lasenn, acc_native, delta_acc, same_pred;

    static SummaryStats of(std::span<const BatchSummary> runs) {
        std::vector<double> l, n, d, s;
        for (const auto& r : runs) {
            l.push_back(r.acc_lasenn);
            n.push_back(r.acc_native);
            d.push_back(r.delta_acc);
            s.push_back(r.same_pred_fraction);
        }
        return {mean_std(l), mean_std(n), mean_std(d), mean_std(s)};
    }
};

struct SweepGrid {
    std::vector<Metric> metrics{Metric::SquaredL2};
    std::vector<std::size_t> layers{0};
    std::vector<double> w_q{0.88};
    std::vector<std::size_t> k{3};
    std::vector<double> noise{0.0};

    std::size_t cells() const { return metrics.size() * layers.size() * w_q.size() * k.size() * noise.size(); }
};

struct SweepCell {
    Metric metric = Metric::SquaredL2;
    std::size_t layer = 0;
    double w_q = 0.0;
    std::size_t k = 0;
    double noise = 0.0;
    std::vector<BatchSummary> runs; // one per replicate
    SummaryStats stats;
};

/// Every grid cell evaluated on `replicates` trained networks. Networks are trained once per noise level.
inline std::vector<SweepCell> run_sweep(const PipelineConfig& base, const SweepGrid& grid, std::size_t replicates) {
    if (grid.cells() == 0) throw ArgumentError("run_sweep: empty grid");
    if (replicates == 0) throw ArgumentError("run_sweep: need at least one replicate");
    const auto data = pipeline_data(base);
    // Key order fixes output order: noise, metric, layer, w_q, k.
    std::vector<SweepCell> cells;
    for (double noise : grid.noise) {
        PipelineConfig cfg = base;
        cfg.noise = noise;
        std::vector<SweepCell> block;
        for (auto m : grid.metrics)
            for (auto l : grid.layers)
                for (double w : grid.w_q)
                    for (auto k : grid.k) block.push_back(SweepCell{m, l, w, k, noise, {}, {}});
        for (std::size_t r = 0; r < replicates; ++r) {
            const auto trained = train_replicate(cfg, data, r);
            std::map<std::pair<Metric, std::size_t>, EmbeddedReplicate> embedded;
            for (auto& cell : block) {
                const auto key = std::make_pair(cell.metric, cell.layer);
                auto it = embedded.find(key);
                if (it == embedded.end())
                    it = embedded.emplace(key, embed_replicate(trained, cell.layer, cell.metric, cfg.output)).first;
                LasennConfig lc{cell.k, cell.w_q, cell.metric, cell.layer};
                cell.runs.push_back(predict_batch(lc, it->second.corpus, it->second.index, it->second.queries).summary);
            }
        }
        for (auto& cell : block) {
            cell.stats = SummaryStats::of(cell.runs);
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

inline void write_sweep_csv(std::ostream& out, std::span<const SweepCell> cells) {
    out << "metric,layer,w_q,k,noise,replicates,acc_lasenn_mean,acc_lasenn_std,acc_native_mean,acc_native_std,"
           "delta_acc_mean,delta_acc_std\n";
    for (const auto& c : cells)
        out << to_string(c.metric) << ',' << c.layer << ',' << format_real(c.w_q) << ',' << c.k << ','
            << format_real(c.noise) << ',' << c.runs.size() << ',' << format_real(c.stats.acc_lasenn.mean) << ','
            << format_real(c.stats.acc_lasenn.stddev) << ',' << format_real(c.stats.acc_native.mean) << ','
            << format_real(c.stats.acc_native.stddev) << ',' << format_real(c.stats.delta_acc.mean) << ','
            << format_real(c.stats.delta_acc.stddev) << '\n';
}

struct AttackSettings {
    std::vector<AttackKind> kinds{AttackKind::FGSM, AttackKind::BIA, AttackKind::PGD};
    double epsilon_fraction = 0.1; // of the training feature range
    double step_fraction = 0.25;   // of epsilon
    std::size_t num_steps = 10;
};

struct AttackRow {
    std::string name; // "clean" or the attack kind
    std::vector<BatchSummary> runs;
    SummaryStats stats;
};

inline std::pair<float, float> feature_range(const TensorMatrix& m) {
    float lo = m.data().empty() ? 0.0f : m.data()[0], hi = lo;
    for (float v : m.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

inline AttackConfig attack_config_for(const AttackSettings& s, AttackKind kind, const TensorMatrix& train_features,
                                      std::uint64_t seed) {
    const auto [lo, hi] = feature_range(train_features);
    const double eps = s.epsilon_fraction * (static_cast<double>(hi) - static_cast<double>(lo));
    AttackConfig c;
    c.kind = kind;
    c.epsilon = eps;
    c.step_size = s.step_fraction * eps;
    c.num_steps = kind == AttackKind::FGSM ? 1 : s.num_steps;
    c.random_start = kind == AttackKind::PGD;
    c.clamp_lo = lo;
    c.clamp_hi = hi;
    c.seed = seed;
    return c;
}

/// Clean row first, then one row per attack kind; all on the same trained replicates.
inline std::vector<AttackRow> run_attack_experiment(const PipelineConfig& base, const LasennConfig& lasenn,
                                                    const AttackSettings& settings, std::size_t replicates) {
    if (replicates == 0) throw ArgumentError("run_attack_experiment: need at least one replicate");
    const auto data = pipeline_data(base);
    std::vector<AttackRow> rows(1 + settings.kinds.size());
    rows[0].name = "clean";
    for (std::size_t i = 0; i < settings.kinds.size(); ++i) rows[i + 1].name = std::string(to_string(settings.kinds[i]));
    for (std::size_t r = 0; r < replicates; ++r) {
        const auto trained = train_replicate(base, data, r);
        const auto emb = embed_replicate(trained, lasenn.layer, lasenn.metric, base.output);
        rows[0].runs.push_back(predict_batch(lasenn, emb.corpus, emb.index, emb.queries).summary);
        for (std::size_t i = 0; i < settings.kinds.size(); ++i) {
            const auto ac = attack_config_for(settings, settings.kinds[i], trained.train_used.features,
                                              derive_seed(trained.seed, kAttackStream));
            rows[i + 1].runs.push_back(
                evaluate_under_attack(trained.model, emb.corpus, emb.index, lasenn, trained.data.test, ac, base.output)
                    .summary);
        }
    }
    for (auto& row : rows) row.stats = SummaryStats::of(row.runs);
    return rows;
}

inline void write_attack_csv(std::ostream& out, std::span<const AttackRow> rows) {
    out << "attack,replicates,acc_lasenn_mean,acc_lasenn_std,acc_native_mean,acc_native_std,delta_acc_mean,"
           "delta_acc_std\n";
    for (const auto& r : rows)
        out << r.name << ',' << r.runs.size() << ',' << format_real(r.stats.acc_lasenn.mean) << ','
            << format_real(r.stats.acc_lasenn.stddev) << ',' << format_real(r.stats.acc_native.mean) << ','
            << format_real(r.stats.acc_native.stddev) << ',' << format_real(r.stats.delta_acc.mean) << ','
            << format_real(r.stats.delta_acc.stddev) << '\n';
}

} // namespace lasenn
