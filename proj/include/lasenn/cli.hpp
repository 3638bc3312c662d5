#pragma once

// Subcommand runner behind the `lasenn` command-line tool.
//
// File-driven steps (gen-data -> train -> export-corpus -> build-index ->
// predict / diagnose) exchange LSNN/LSNL/LSNM artifacts through a directory.
// Experiment steps (sweep, noise-exp, attack-exp, toymodel) run their whole
// pipeline in memory. Every run writes manifest.txt next to its artifacts.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "lasenn/adversarial.hpp"
#include "lasenn/classifier.hpp"
#include "lasenn/combiner.hpp"
#include "lasenn/config.hpp"
#include "lasenn/diagnostics.hpp"
#include "lasenn/experiment.hpp"
#include "lasenn/knn_index.hpp"
#include "lasenn/tensor_io.hpp"
#include "lasenn/toymodel.hpp"

namespace lasenn {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

inline constexpr std::string_view kSubcommands[] = {"gen-data", "train",     "export-corpus", "build-index", "predict",
                                                    "sweep",    "noise-exp", "attack-exp",    "diagnose",    "toymodel"};

/// Noise grid used by noise-exp when grid_noise is empty.
inline const std::vector<double> kDefaultNoiseGrid{0.0, 0.01, 0.04, 0.08, 0.16, 0.32};

namespace cli_detail {

namespace fs = std::filesystem;

/// Rethrow argument-validation failures as configuration errors.
template <typename F>
auto checked(F&& f) {
    try {
        return f();
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
}

inline OutputKind output_kind(const ExperimentConfig& c) {
    const auto& v = c.raw("output");
    if (v == "probabilities") return OutputKind::Probabilities;
    if (v == "logits") return OutputKind::Logits;
    throw ConfigError("output must be 'probabilities' or 'logits', got '" + v + "'");
}

inline PipelineConfig pipeline_config(const ExperimentConfig& c) {
    PipelineConfig p;
    p.data.num_classes = c.integer("classes");
    p.data.samples_per_class = c.integer("samples_per_class");
    p.data.dims = c.integer("dims");
    p.data.cluster_mean_scale = c.real("mean_scale");
    p.data.cluster_stddev = c.real("stddev");
    p.hidden.clear();
    for (auto h : c.integer_list("hidden")) p.hidden.push_back(h);
    if (p.hidden.empty()) throw ConfigError("hidden must list at least one layer width");
    p.train.learning_rate = c.real("lr");
    p.train.momentum = c.real("momentum");
    p.train.batch_size = c.integer("batch_size");
    p.train.weight_decay = c.real("weight_decay");
    p.train.epochs = c.integer("epochs");
    p.output = output_kind(c);
    p.noise = c.real("noise");
    p.seed = c.integer("seed");
    checked([&] {
        p.data.validate();
        p.train.validate();
        if (p.data.num_classes < 2) throw ArgumentError("classes must be >= 2");
        if (!(p.noise >= 0.0 && p.noise <= 1.0)) throw ArgumentError("noise must lie in [0, 1]");
        for (auto h : p.hidden)
            if (h == 0) throw ArgumentError("hidden layer widths must be >= 1");
        return 0;
    });
    return p;
}

inline LasennConfig lasenn_config(const ExperimentConfig& c) {
    LasennConfig l;
    l.k = c.integer("k");
    l.w_q = c.real("w_q");
    l.metric = checked([&] { return parse_metric(c.raw("metric")); });
    l.layer = c.integer("layer");
    checked([&] {
        l.validate();
        return 0;
    });
    return l;
}

inline std::size_t replicates(const ExperimentConfig& c) {
    const auto r = c.integer("replicates");
    if (r < 1) throw ConfigError("replicates must be >= 1");
    return r;
}

inline SweepGrid sweep_grid(const ExperimentConfig& c, const PipelineConfig& p, const LasennConfig& l) {
    SweepGrid g;
    g.metrics = {l.metric};
    g.layers = {l.layer};
    g.w_q = {l.w_q};
    g.k = {l.k};
    g.noise = {p.noise};
    if (!c.list("grid_metric").empty()) {
        g.metrics.clear();
        for (const auto& m : c.list("grid_metric")) g.metrics.push_back(checked([&] { return parse_metric(m); }));
    }
    if (!c.list("grid_layer").empty()) {
        g.layers.clear();
        for (auto v : c.integer_list("grid_layer")) g.layers.push_back(v);
    }
    if (!c.list("grid_w_q").empty()) g.w_q = c.real_list("grid_w_q");
    if (!c.list("grid_k").empty()) {
        g.k.clear();
        for (auto v : c.integer_list("grid_k")) g.k.push_back(v);
    }
    if (!c.list("grid_noise").empty()) g.noise = c.real_list("grid_noise");
    for (double w : g.w_q)
        if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("grid_w_q values must lie in [0, 1]");
    for (auto k : g.k)
        if (k < 1) throw ConfigError("grid_k values must be >= 1");
    for (double n : g.noise)
        if (!(n >= 0.0 && n <= 1.0)) throw ConfigError("grid_noise values must lie in [0, 1]");
    for (auto layer : g.layers)
        if (layer > p.hidden.size()) throw ConfigError("grid_layer value exceeds the number of hidden layers");
    return g;
}

inline AttackSettings attack_settings(const ExperimentConfig& c) {
    AttackSettings s;
    s.kinds.clear();
    for (const auto& k : c.list("attacks")) s.kinds.push_back(checked([&] { return parse_attack_kind(k); }));
    s.epsilon_fraction = c.real("epsilon_frac");
    s.step_fraction = c.real("step_frac");
    s.num_steps = c.integer("steps");
    if (!(s.epsilon_fraction >= 0.0)) throw ConfigError("epsilon_frac must be >= 0");
    if (!(s.step_fraction >= 0.0 && s.step_fraction <= 1.0)) throw ConfigError("step_frac must lie in [0, 1]");
    if (s.num_steps < 1) throw ConfigError("steps must be >= 1");
    return s;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline void write_manifest(const fs::path& out_dir, std::string_view subcommand, const ExperimentConfig& c) {
    std::ofstream m(out_dir / "manifest.txt", std::ios::trunc);
    if (!m) throw IoError("cannot write manifest in " + out_dir.string());
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
    const auto seed = c.integer("seed");
    m << "toolkit_version=" << kToolkitVersion << '\n';
    m << "subcommand=" << subcommand << '\n';
    m << "config_hash=" << hex64(c.hash()) << '\n';
    m << "seed=" << seed << '\n';
    m << "replicate_seeds=";
    const auto reps = c.integer("replicates");
    for (std::uint64_t r = 0; r < reps; ++r) m << (r ? "," : "") << replicate_seed(seed, r);
    m << '\n';
    m << "timestamp=" << stamp << '\n';
    std::istringstream canon(c.canonical());
    for (std::string line; std::getline(canon, line);) m << "config." << line << '\n';
}

inline void require_files(const fs::path& dir, std::initializer_list<std::string_view> names) {
    for (auto n : names)
        if (!fs::exists(dir / n)) throw ConfigError("missing input file " + (dir / n).string());
}

inline std::ofstream text_out(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

inline Dataset load_training_set(const fs::path& in) { return load_dataset(in, "train"); }

inline void run_gen_data(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
    const auto p = pipeline_config(c);
    const auto data = pipeline_data(p);
    Dataset train = data.train;
    if (p.noise > 0.0)
        train.labels = permute_labels(data.train.labels, p.noise, derive_seed(replicate_seed(p.seed, 0), kNoiseStream));
    save_dataset(train, out, "train");
    save_labels(data.train.labels, out / "train_y_clean.lsnl");
    save_dataset(data.test, out, "test");
    log << "wrote " << train.size() << " training and " << data.test.size() << " test samples to " << out.string()
        << '\n';
}

inline void run_train(const ExperimentConfig& c, const fs::path& in, const fs::path& out, std::ostream& log) {
    auto p = pipeline_config(c);
    const auto train_set = load_training_set(in);
    p.data.dims = train_set.features.cols();
    p.data.num_classes = train_set.labels.num_classes;
    const auto rs = replicate_seed(p.seed, 0);
    TrainConfig tc = p.train;
    tc.seed = derive_seed(rs, kShuffleStream);
    const auto result = train(Mlp::initialized(p.layer_sizes(), derive_seed(rs, kInitStream)), train_set, tc);
    save_model(result.model, out / "model.lsnm");
    auto trace = text_out(out / "train_trace.csv");
    trace << "epoch,lr,loss,accuracy\n";
    for (const auto& e : result.trace)
        trace << e.epoch << ',' << format_real(e.learning_rate) << ',' << format_real(e.loss) << ','
              << format_real(e.accuracy) << '\n';
    log << "trained " << result.trace.size() << " epochs, final train accuracy "
        << format_real(result.trace.empty() ? 0.0 : result.trace.back().accuracy) << '\n';
}

inline void run_export(const ExperimentConfig& c, const fs::path& in, const fs::path& out, std::ostream& log) {
    const auto kind = output_kind(c);
    const auto model = load_model(in / "model.lsnm");
    const auto layer = resolve_layer(model, c.integer("layer"));
    if (layer < 1 || layer > model.hidden_layers()) throw ConfigError("layer exceeds the model's hidden layers");
    const auto corpus = export_corpus(model, load_training_set(in), layer, kind);
    const auto queries = export_corpus(model, load_dataset(in, "test"), layer, kind);
    save_corpus(corpus, out, "corpus");
    save_corpus(queries, out, "queries");
    log << "exported layer " << layer << " embeddings (" << corpus.embeddings.cols() << " dims) for "
        << corpus.size() << " corpus rows and " << queries.size() << " queries\n";
}

inline void warn_excluded(const KnnIndex& index, std::ostream& log) {
    if (!index.excluded_rows().empty())
        log << "warning: " << index.excluded_rows().size()
            << " zero-norm corpus rows excluded from cosine neighbor candidates\n";
}

inline void run_build_index(const ExperimentConfig& c, const fs::path& in, const fs::path& out, std::ostream& log) {
    const auto l = lasenn_config(c);
    const KnnIndex index(load_tensor(in / "corpus_emb.lsnn"), l.metric);
    warn_excluded(index, log);
    auto info = text_out(out / "index.txt");
    info << "metric=" << to_string(index.metric()) << '\n';
    info << "rows=" << index.rows() << '\n';
    info << "dims=" << index.dims() << '\n';
    info << "candidates=" << index.candidate_count() << '\n';
    info << "excluded_rows=";
    for (std::size_t i = 0; i < index.excluded_rows().size(); ++i) info << (i ? "," : "") << index.excluded_rows()[i];
    info << '\n';
    log << "index over " << index.rows() << " rows, " << index.candidate_count() << " candidates\n";
}

inline void run_predict(const ExperimentConfig& c, const fs::path& in, const fs::path& out, std::ostream& log) {
    const auto l = lasenn_config(c);
    const auto corpus = load_corpus(in, "corpus");
    const auto queries = load_corpus(in, "queries");
    const KnnIndex index(corpus.embeddings, l.metric);
    warn_excluded(index, log);
    const auto result = checked([&] { return predict_batch(l, corpus, index, queries); });
    auto csv = text_out(out / "predictions.csv");
    write_predictions_csv(csv, result, queries.labels, l.k);
    log << "acc_lasenn=" << format_real(result.summary.acc_lasenn) << " acc_native="
        << format_real(result.summary.acc_native) << " delta_acc=" << format_real(result.summary.delta_acc)
        << " same_pred=" << format_real(result.summary.same_pred_fraction) << '\n';
}

inline void run_diagnose(const ExperimentConfig& c, const fs::path& in, const fs::path& out, std::ostream& log) {
    const auto l = lasenn_config(c);
    const auto corpus = load_corpus(in, "corpus");
    const auto queries = load_corpus(in, "queries");
    const KnnIndex index(corpus.embeddings, l.metric);
    warn_excluded(index, log);
    const auto report = checked([&] { return density_report(corpus, index, queries, l); });
    auto csv = text_out(out / "density.csv");
    write_density_csv(csv, report);

    const auto preds = predict_batch(l, corpus, index, queries);
    std::vector<std::uint32_t> native, combined;
    for (const auto& p : preds.predictions) {
        native.push_back(p.native_class);
        combined.push_back(p.predicted_class);
    }
    const auto hist = checked([&] {
        return projection_histogram(queries.embeddings, queries.labels, native, combined,
                                    static_cast<std::uint32_t>(c.integer("class_a")), c.integer("bins"));
    });
    auto hcsv = text_out(out / "projection.csv");
    write_histogram_csv(hcsv, hist);
    auto svg = text_out(out / "projection.svg");
    write_histogram_svg(svg, hist);
    log << "corr(P,avgL2)=" << detail::real_or_na(report.corr_P_avgL2.r)
        << " p=" << detail::real_or_na(report.corr_P_avgL2.p_value) << " same_pred=" << format_real(report.same_pred)
        << '\n';
}

inline void run_sweep_cmd(const ExperimentConfig& c, const fs::path& out, std::ostream& log, bool noise_only) {
    const auto p = pipeline_config(c);
    const auto l = lasenn_config(c);
    auto grid = sweep_grid(c, p, l);
    if (noise_only && c.list("grid_noise").empty()) grid.noise = kDefaultNoiseGrid;
    const auto cells = run_sweep(p, grid, replicates(c));
    auto csv = text_out(out / (noise_only ? "noise.csv" : "sweep.csv"));
    write_sweep_csv(csv, cells);
    log << cells.size() << " grid cells x " << replicates(c) << " replicates\n";
}

inline void run_attack_cmd(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
    const auto p = pipeline_config(c);
    const auto l = lasenn_config(c);
    const auto s = attack_settings(c);
    const auto rows = run_attack_experiment(p, l, s, replicates(c));
    auto csv = text_out(out / "attack.csv");
    write_attack_csv(csv, rows);
    for (const auto& r : rows)
        log << r.name << ": acc_native=" << format_real(r.stats.acc_native.mean)
            << " delta_acc=" << format_real(r.stats.delta_acc.mean) << '\n';
}

inline void run_toymodel(const ExperimentConfig& c, const fs::path& out, std::ostream& log) {
    toy::ToyModelConfig base;
    base.distribution = checked([&] { return toy::parse_distribution(c.raw("toy_distribution")); });
    base.d = c.real("toy_d");
    base.a = c.real("toy_a");
    base.w_q = c.real("toy_w_q");
    base.n = c.integer("toy_n");
    base.n_trials = c.integer("toy_trials");
    base.seed = c.integer("seed");
    const auto cs = c.real_list("toy_c");
    if (cs.empty()) throw ConfigError("toy_c must list at least one offset");
    std::vector<toy::ToyModelConfig> configs;
    for (double offset : cs) {
        auto cfg = base;
        cfg.c = offset;
        checked([&] {
            cfg.validate();
            return 0;
        });
        configs.push_back(cfg);
    }
    std::vector<std::size_t> ns;
    for (auto n : c.integer_list("drift_n")) ns.push_back(n);
    const auto drift_seed_count = c.integer("drift_seeds");
    if (drift_seed_count < 1) throw ConfigError("drift_seeds must be >= 1");
    for (auto n : ns)
        if (n < 2) throw ConfigError("drift_n values must be >= 2");

    auto csv = text_out(out / "toymodel.csv");
    toy::write_estimate_csv_header(csv);
    for (const auto& cfg : configs) {
        const auto e = checked([&] { return toy::estimate_nn_blue_prob(cfg); });
        toy::write_estimate_csv_row(csv, cfg, e);
        log << "c=" << format_real(cfg.c) << " mc=" << format_real(e.mc_estimate) << " +- "
            << format_real(e.mc_stderr) << " analytic=" << format_real(e.analytic) << '\n';
    }
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < drift_seed_count; ++i) seeds.push_back(derive_seed(base.seed, 2000 + i));
    const auto drift = toy::boundary_drift(base.distribution, ns, seeds);
    auto dcsv = text_out(out / "drift.csv");
    toy::write_drift_csv(dcsv, drift);
}

} // namespace cli_detail

/// Run one subcommand. Throws ConfigError for invalid configuration or missing inputs.
inline void run_subcommand(std::string_view name, const ExperimentConfig& config, const std::filesystem::path& out_dir,
                           std::ostream& log) {
    namespace fs = std::filesystem;
    using namespace cli_detail;
    bool known = false;
    for (auto s : kSubcommands) known = known || s == name;
    if (!known) throw ConfigError("unknown subcommand '" + std::string(name) + "'");

    const fs::path in = config.raw("input_dir").empty() ? out_dir : fs::path(config.raw("input_dir"));
    if (name == "train") require_files(in, {"train_x.lsnn", "train_y.lsnl"});
    if (name == "export-corpus") require_files(in, {"model.lsnm", "train_x.lsnn", "train_y.lsnl", "test_x.lsnn", "test_y.lsnl"});
    if (name == "build-index") require_files(in, {"corpus_emb.lsnn"});
    if (name == "predict" || name == "diagnose")
        require_files(in, {"corpus_emb.lsnn", "corpus_logits.lsnn", "corpus_labels.lsnl", "queries_emb.lsnn",
                           "queries_logits.lsnn", "queries_labels.lsnl"});

    fs::create_directories(out_dir);
    if (name == "gen-data") run_gen_data(config, out_dir, log);
    else if (name == "train") run_train(config, in, out_dir, log);
    else if (name == "export-corpus") run_export(config, in, out_dir, log);
    else if (name == "build-index") run_build_index(config, in, out_dir, log);
    else if (name == "predict") run_predict(config, in, out_dir, log);
    else if (name == "diagnose") run_diagnose(config, in, out_dir, log);
    else if (name == "sweep") run_sweep_cmd(config, out_dir, log, false);
    else if (name == "noise-exp") run_sweep_cmd(config, out_dir, log, true);
    else if (name == "attack-exp") run_attack_cmd(config, out_dir, log);
    else if (name == "toymodel") run_toymodel(config, out_dir, log);
    write_manifest(out_dir, name, config);
}

} // namespace lasenn
