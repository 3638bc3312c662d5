// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
// Experiment criteria (4, 6, 7, 8) run on the toolkit's default configuration.
// Networks are trained once per noise level and replicate and shared between them.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lasenn/cli.hpp"
#include "oracles.hpp"

using namespace lasenn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (limit_s > 0.0 && secs >= limit_s) {
        o.pass = false;
        o.detail += "; runtime limit exceeded";
    }
    failures += !o.pass;
    std::printf("criterion %2d: %s  %s [%.1fs%s] %s\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), secs,
                limit_s > 0.0 ? (", limit " + std::to_string(static_cast<int>(limit_s)) + "s").c_str() : "",
                o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---- criteria 1, 2, 9: toy model ----

Outcome toy_estimates(toy::Distribution dist) {
    Outcome o{true, ""};
    const ExperimentConfig defaults;
    for (double c : {0.0, 0.05, 0.1, 0.2}) {
        toy::ToyModelConfig cfg;
        cfg.distribution = dist;
        cfg.c = c;
        cfg.d = 0.02;
        cfg.n_trials = defaults.integer("toy_trials");
        cfg.seed = derive_seed(defaults.integer("seed"), 77);
        const auto e = toy::estimate_nn_blue_prob(cfg);
        const double target = dist == toy::Distribution::Uniform ? 0.5 : 0.5 + c;
        const bool ok = e.conditioned_trials >= 100000 && std::abs(e.mc_estimate - target) <= 3.0 * e.mc_stderr;
        o.pass = o.pass && ok;
        o.detail += "c=" + fmt("%.2f", c) + ": " + fmt("%.4f", e.mc_estimate) + " vs " + fmt("%.2f", target) +
                    " (3se " + fmt("%.4f", 3.0 * e.mc_stderr) + ", " + std::to_string(e.conditioned_trials) +
                    " trials)" + (c < 0.2 ? "; " : "");
    }
    return o;
}

Outcome drift() {
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 31; ++i) seeds.push_back(derive_seed(1, 2000 + i));
    const std::vector<std::size_t> ns{100, 10000};
    const auto rows = toy::boundary_drift(toy::Distribution::SkewedTriangular, ns, seeds);
    return {rows[1].median_abs_offset < rows[0].median_abs_offset,
            "median |offset| n=100: " + fmt("%.5f", rows[0].median_abs_offset) +
                ", n=10000: " + fmt("%.5f", rows[1].median_abs_offset) + " (31 seeds)"};
}

// ---- criterion 3: kNN oracle ----

Outcome knn_oracle() {
    Rng rng(derive_seed(1, 3));
    std::size_t checked = 0, mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto inst = oracle::random_knn_instance(rng);
        for (auto metric : {Metric::SquaredL2, Metric::Cosine}) {
            bool all_zero = true;
            for (float v : inst.corpus.data()) all_zero = all_zero && v == 0.0f;
            if (metric == Metric::Cosine && all_zero) continue;
            const KnnIndex index(inst.corpus, metric);
            if (index.candidate_count() == 0) continue;
            const auto got = index.query(inst.query, inst.k);
            mismatches += !oracle::knn_matches(got, oracle::brute_force_knn(inst.corpus, inst.query, inst.k, metric));
            ++checked;
        }
    }
    return {mismatches == 0 && checked >= 1990,
            std::to_string(checked) + " (instance, metric) pairs, " + std::to_string(mismatches) + " mismatches"};
}

// ---- criterion 5: gradients ----

Outcome gradients() {
    Rng rng(derive_seed(1, 5));
    double worst = 0.0;
    std::size_t nets = 0, params = 0, attempts = 0;
    while (nets < 24) {
        ++attempts;
        std::vector<std::size_t> sizes{1 + rng.below(5)};
        const auto depth = 1 + rng.below(3);
        for (std::size_t l = 0; l < depth; ++l) sizes.push_back(1 + rng.below(6));
        sizes.push_back(2 + rng.below(3));
        const auto model = Mlp::initialized(sizes, rng.next_u64());
        Dataset data{TensorMatrix(1 + rng.below(6), sizes.front()),
                     LabelVector{{}, static_cast<std::uint32_t>(sizes.back())}};
        for (auto& v : data.features.data()) v = static_cast<float>(rng.normal());
        for (std::size_t r = 0; r < data.size(); ++r)
            data.labels.labels.push_back(static_cast<std::uint32_t>(rng.below(sizes.back())));
        if (oracle::min_abs_hidden_preactivation(model, data) < 1e-2) continue; // too close to a ReLU kink
        std::vector<double> analytic;
        gradient(model, data).for_each([&](double g) { analytic.push_back(g); });
        const auto numeric = oracle::finite_difference_gradient(model, data, 1e-4);
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-7});
            worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
        }
        params += analytic.size();
        ++nets;
    }
    return {worst < 1e-4, std::to_string(nets) + " networks (" + std::to_string(attempts) + " drawn), " +
                              std::to_string(params) + " parameters, worst relative error " + fmt("%.2e", worst)};
}

// ---- criteria 4, 6, 7, 8: trained experiments ----

struct Shared {
    PipelineConfig pipeline;
    LasennConfig lasenn;
    AttackSettings attacks;
    std::size_t replicates = 5;
    SyntheticData data;
    std::map<double, std::vector<TrainedReplicate>> trained; // by noise fraction
    std::size_t identity_checks = 0;
    std::size_t identity_violations = 0;
};

Shared& shared() {
    static Shared s = [] {
        Shared out;
        const ExperimentConfig defaults;
        out.pipeline = cli_detail::pipeline_config(defaults);
        out.lasenn = cli_detail::lasenn_config(defaults);
        out.attacks = cli_detail::attack_settings(defaults);
        out.replicates = cli_detail::replicates(defaults);
        out.data = pipeline_data(out.pipeline);
        return out;
    }();
    return s;
}

const std::vector<TrainedReplicate>& trained_at(double noise) {
    auto& s = shared();
    auto it = s.trained.find(noise);
    if (it != s.trained.end()) return it->second;
    PipelineConfig cfg = s.pipeline;
    cfg.noise = noise;
    std::vector<TrainedReplicate> reps;
    for (std::size_t r = 0; r < s.replicates; ++r) reps.push_back(train_replicate(cfg, s.data, r));
    return s.trained.emplace(noise, std::move(reps)).first->second;
}

/// Criterion 4 bookkeeping: every evaluated query set is also scored with w_q = 1.
void check_identity(const LabeledCorpus& corpus, const KnnIndex& index, const LabeledCorpus& queries) {
    auto& s = shared();
    LasennConfig id = s.lasenn;
    id.w_q = 1.0;
    const auto r = predict_batch(id, corpus, index, queries);
    for (const auto& p : r.predictions) {
        ++s.identity_checks;
        s.identity_violations += p.predicted_class != p.native_class;
    }
    s.identity_violations += r.summary.delta_acc != 0.0 || r.summary.same_pred_fraction != 1.0;
}

BatchSummary evaluate_clean(const TrainedReplicate& t) {
    const auto& s = shared();
    const auto emb = embed_replicate(t, s.lasenn.layer, s.lasenn.metric, s.pipeline.output);
    check_identity(emb.corpus, emb.index, emb.queries);
    return predict_batch(s.lasenn, emb.corpus, emb.index, emb.queries).summary;
}

std::string runs_of(const std::vector<double>& v, const char* f = "%+.4f") {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(f, v[i]);
    return out;
}

Outcome density() {
    const auto& s = shared();
    int acc_ok = 0, corr_ok = 0, same_ok = 0, wrong_ok = 0, change_ok = 0;
    std::vector<double> accs, rs, ps;
    for (const auto& t : trained_at(0.0)) {
        const auto emb = embed_replicate(t, s.lasenn.layer, s.lasenn.metric, s.pipeline.output);
        check_identity(emb.corpus, emb.index, emb.queries);
        const auto rep = density_report(emb.corpus, emb.index, emb.queries, s.lasenn);
        const auto native = predict_batch(s.lasenn, emb.corpus, emb.index, emb.queries).summary.acc_native;
        accs.push_back(native);
        rs.push_back(rep.corr_P_avgL2.r.value_or(0.0));
        ps.push_back(rep.corr_P_avgL2.p_value.value_or(1.0));
        acc_ok += native >= 0.80 && native <= 0.95;
        corr_ok += rep.corr_P_avgL2.r && *rep.corr_P_avgL2.r < 0.0 && *rep.corr_P_avgL2.p_value < 0.05;
        same_ok += rep.same_pred > 0.95;
        wrong_ok += rep.avgL2_wrong && rep.avgL2_corr && *rep.avgL2_wrong > *rep.avgL2_corr;
        change_ok += rep.avgL2_change && *rep.avgL2_change > rep.avgL2_all;
    }
    const int n = static_cast<int>(accs.size());
    const bool pass = acc_ok == n && corr_ok >= 4 && same_ok >= 4 && wrong_ok >= 4 && change_ok >= 4;
    return {pass, "native acc [" + runs_of(accs, "%.3f") + "] in range " + std::to_string(acc_ok) + "/" +
                      std::to_string(n) + "; corr<0 & p<0.05 " + std::to_string(corr_ok) + "/5 (r [" +
                      runs_of(rs, "%.3f") + "]); same_pred>0.95 " + std::to_string(same_ok) +
                      "/5; avgL2_wrong>avgL2_corr " + std::to_string(wrong_ok) + "/5; avgL2_change>avgL2_all " +
                      std::to_string(change_ok) + "/5"};
}

Outcome noise_trend() {
    std::map<double, double> mean;
    std::string detail;
    for (double noise : {0.0, 0.08, 0.16, 0.32}) {
        std::vector<double> d;
        for (const auto& t : trained_at(noise)) d.push_back(evaluate_clean(t).delta_acc);
        mean[noise] = mean_std(d).mean;
        detail += "noise " + fmt("%.2f", noise) + ": " + fmt("%+.4f", mean[noise]) + " [" + runs_of(d) + "]; ";
    }
    bool nonneg = true;
    for (const auto& [noise, m] : mean) nonneg = nonneg && m >= 0.0;
    return {mean[0.32] > mean[0.0] && nonneg, detail + "mean dAcc(0.32) > mean dAcc(0) and all >= 0"};
}

Outcome adversarial() {
    const auto& s = shared();
    std::vector<double> clean_delta, clean_acc;
    std::map<AttackKind, std::vector<double>> delta, acc;
    bool identical = true;
    for (const auto& t : trained_at(0.0)) {
        const auto emb = embed_replicate(t, s.lasenn.layer, s.lasenn.metric, s.pipeline.output);
        const auto clean = predict_batch(s.lasenn, emb.corpus, emb.index, emb.queries).summary;
        clean_delta.push_back(clean.delta_acc);
        clean_acc.push_back(clean.acc_native);
        const auto seed = derive_seed(t.seed, kAttackStream);
        for (auto kind : {AttackKind::FGSM, AttackKind::BIA, AttackKind::PGD}) {
            const auto ac = attack_config_for(s.attacks, kind, t.train_used.features, seed);
            const auto ev =
                evaluate_under_attack(t.model, emb.corpus, emb.index, s.lasenn, t.data.test, ac, s.pipeline.output);
            delta[kind].push_back(ev.summary.delta_acc);
            acc[kind].push_back(ev.summary.acc_native);
            check_identity(emb.corpus, emb.index,
                           embed_inputs(t.model, ev.adversarial_inputs, t.data.test.labels,
                                        resolve_layer(t.model, s.lasenn.layer), s.pipeline.output));
        }
        // Bit-identity of the degenerate attack configurations on every test row.
        auto bia1 = attack_config_for(s.attacks, AttackKind::BIA, t.train_used.features, seed);
        const auto fgsm = attack_config_for(s.attacks, AttackKind::FGSM, t.train_used.features, seed);
        bia1.num_steps = 1;
        bia1.step_size = bia1.epsilon;
        const auto bia = attack_config_for(s.attacks, AttackKind::BIA, t.train_used.features, seed);
        auto pgd = attack_config_for(s.attacks, AttackKind::PGD, t.train_used.features, seed);
        pgd.random_start = false;
        for (std::size_t r = 0; r < t.data.test.size() && identical; ++r) {
            const auto x = t.data.test.features.row(r);
            const auto y = t.data.test.labels[r];
            identical = attack(t.model, x, y, fgsm) == attack(t.model, x, y, bia1) &&
                        attack(t.model, x, y, pgd) == attack(t.model, x, y, bia);
        }
    }
    const double clean_native = mean_std(clean_acc).mean, clean_d = mean_std(clean_delta).mean;
    bool pass = identical;
    std::string detail = "clean acc " + fmt("%.4f", clean_native) + " dAcc " + fmt("%+.4f", clean_d) + "; ";
    for (auto kind : {AttackKind::FGSM, AttackKind::BIA, AttackKind::PGD}) {
        const double a = mean_std(acc[kind]).mean, d = mean_std(delta[kind]).mean;
        if (kind != AttackKind::FGSM) pass = pass && a < 0.2 * clean_native && d >= clean_d;
        detail += std::string(to_string(kind)) + " acc " + fmt("%.4f", a) + " dAcc " + fmt("%+.4f", d) + " [" +
                  runs_of(delta[kind]) + "]; ";
    }
    detail += std::string("FGSM==BIA(1 step), PGD(no start)==BIA: ") + (identical ? "bit-identical" : "DIFFER");
    return {pass, detail};
}

Outcome identity() {
    const auto& s = shared();
    return {s.identity_checks > 0 && s.identity_violations == 0,
            std::to_string(s.identity_checks) + " predictions across clean, label-noise and attacked evaluations, " +
                std::to_string(s.identity_violations) + " differ from native"};
}

// ---- criterion 10: reproducibility ----

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome reproducibility() {
    ExperimentConfig cfg;
    cfg.load_text("samples_per_class = 60\ndims = 8\nepochs = 6\nhidden = 16,8\nreplicates = 2\n"
                  "grid_k = 1,3\ngrid_noise = 0,0.16\nattacks = fgsm,bia,pgd\ntoy_trials = 5000\n"
                  "drift_n = 100,1000\ndrift_seeds = 7\n");
    const auto base = fs::temp_directory_path() / "lasenn_acceptance_repro";
    fs::remove_all(base);
    const std::vector<std::string> steps{"gen-data", "train",     "export-corpus", "build-index", "predict",
                                         "diagnose", "sweep",     "noise-exp",     "attack-exp",  "toymodel"};
    std::ostringstream log;
    for (const auto* run : {"a", "b"})
        for (const auto& step : steps) run_subcommand(step, cfg, base / run, log);
    std::size_t compared = 0, differ = 0;
    for (const auto& entry : fs::directory_iterator(base / "a")) {
        const auto name = entry.path().filename();
        if (name == "manifest.txt") continue;
        ++compared;
        differ += slurp(entry.path()) != slurp(base / "b" / name);
    }
    // Manifests agree except for the timestamp line.
    const auto strip = [](std::string m) { return m.erase(m.find("timestamp="), m.find('\n', m.find("timestamp=")) - m.find("timestamp=")); };
    differ += strip(slurp(base / "a" / "manifest.txt")) != strip(slurp(base / "b" / "manifest.txt"));
    fs::remove_all(base);
    return {compared >= 20 && differ == 0,
            std::to_string(compared) + " artifacts from " + std::to_string(steps.size()) +
                " subcommands compared byte-for-byte, " + std::to_string(differ) + " differ"};
}

// ---- criterion 11: formats ----

Outcome formats() {
    Rng rng(derive_seed(1, 11));
    std::size_t cases = 0, bad = 0;
    const auto tensor_case = [&](std::size_t rows, std::size_t cols) {
        TensorMatrix m(rows, cols);
        for (auto& v : m.data()) {
            v = static_cast<float>(rng.normal() * std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0));
            if (rng.bernoulli(0.05)) v = -0.0f;
        }
        std::stringstream ss;
        write_tensor(m, ss);
        bad += ss.str().size() != 28 + 4 * rows * cols;
        bad += !(read_tensor(ss) == m);
        ++cases;
    };
    tensor_case(0, 0);
    tensor_case(0, 5);
    tensor_case(1, 1);
    for (int i = 0; i < 100; ++i) tensor_case(rng.below(50), 1 + rng.below(40));
    const auto label_case = [&](std::size_t n, std::uint32_t k) {
        LabelVector l{{}, k};
        for (std::size_t i = 0; i < n; ++i) l.labels.push_back(static_cast<std::uint32_t>(rng.below(k)));
        std::stringstream ss;
        write_labels(l, ss);
        bad += !(read_labels(ss) == l);
        ++cases;
    };
    label_case(0, 10);
    label_case(1, 1);
    for (int i = 0; i < 50; ++i) label_case(rng.below(300), 1 + static_cast<std::uint32_t>(rng.below(20)));
    const auto model_case = [&](std::vector<std::size_t> sizes) {
        const auto m = Mlp::initialized(std::move(sizes), rng.next_u64());
        std::stringstream ss;
        write_model(m, ss);
        bad += !(read_model(ss) == m);
        ++cases;
    };
    model_case({1, 1});
    for (int i = 0; i < 30; ++i) {
        std::vector<std::size_t> sizes{1 + rng.below(20)};
        for (std::size_t l = 0, d = rng.below(4); l < d; ++l) sizes.push_back(1 + rng.below(30));
        sizes.push_back(1 + rng.below(10));
        model_case(sizes);
    }
    // Through the filesystem as well.
    const auto dir = fs::temp_directory_path() / "lasenn_acceptance_formats";
    fs::create_directories(dir);
    const TensorMatrix one(1, 1, {3.5f});
    save_tensor(one, dir / "one.lsnn");
    bad += !(load_tensor(dir / "one.lsnn") == one);
    save_tensor(TensorMatrix(0, 3), dir / "empty.lsnn");
    bad += !(load_tensor(dir / "empty.lsnn") == TensorMatrix(0, 3));
    const auto m = Mlp::initialized({3, 4, 2}, 9);
    save_model(m, dir / "m.lsnm");
    bad += !(load_model(dir / "m.lsnm") == m);
    cases += 3;
    fs::remove_all(dir);
    return {bad == 0, std::to_string(cases) + " LSNN/LSNL/LSNM round trips, " + std::to_string(bad) + " mismatches"};
}

} // namespace

int main() {
    std::printf("acceptance suite: defaults %s\n", [] {
        const ExperimentConfig d;
        return "dims=" + d.raw("dims") + " stddev=" + d.raw("stddev") + " samples_per_class=" +
               d.raw("samples_per_class") + " hidden=" + d.raw("hidden") + " epochs=" + d.raw("epochs") +
               " seed=" + d.raw("seed");
    }().c_str());
    report(1, "toy model: skewed MC estimate within 3 stderr of 0.5+c", 60, [] {
        return toy_estimates(toy::Distribution::SkewedTriangular);
    });
    report(2, "toy model: uniform null within 3 stderr of 0.5", 0, [] {
        return toy_estimates(toy::Distribution::Uniform);
    });
    report(3, "kNN index equals brute-force scan on 1000 random instances, both metrics", 30, knn_oracle);
    report(5, "analytic gradients match central finite differences", 30, gradients);
    report(6, "density-assumption signs on 4-class Gaussian clusters", 300, density);
    report(7, "label-noise trend of dAcc", 600, noise_trend);
    report(8, "adversarial deltas and attack equivalences", 600, adversarial);
    report(4, "w_q=1 reproduces native predictions in every experiment above", 0, identity);
    report(9, "toy model boundary drift shrinks with n", 60, drift);
    report(10, "reruns produce byte-identical artifacts", 0, reproducibility);
    report(11, "LSNN/LSNL/LSNM round trips incl. 0-row and 1x1", 0, formats);
    std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "PASSED", failures);
    return failures ? 1 : 0;
}
