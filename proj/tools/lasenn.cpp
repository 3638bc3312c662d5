// lasenn <subcommand> [--config FILE] [--out DIR] [--set key=value]...

#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lasenn/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Latent-space nearest-neighbor inference toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(lasenn::kToolkitVersion));

    std::string config_file;
    std::string out_dir = ".";
    std::vector<std::string> overrides;
    const std::map<std::string_view, std::string> about{
        {"gen-data", "generate the Gaussian-cluster dataset (train/test tensors and labels)"},
        {"train", "train the MLP on the generated data"},
        {"export-corpus", "export embeddings and outputs of the training set and the test queries"},
        {"build-index", "build the kNN index over the corpus and describe it"},
        {"predict", "native and LaSeNN predictions for the test queries"},
        {"sweep", "accuracy over the grid_* hyperparameter grid"},
        {"noise-exp", "accuracy delta over label-noise fractions"},
        {"attack-exp", "accuracy delta under FGSM/BIA/PGD attacks"},
        {"diagnose", "density statistics and the projection histogram"},
        {"toymodel", "1D toy model estimates and boundary drift"},
    };
    for (auto name : lasenn::kSubcommands) {
        auto* sub = app.add_subcommand(std::string(name), about.at(name));
        sub->add_option("--config", config_file, "key=value configuration file");
        sub->add_option("--out", out_dir, "output directory (also the default input directory)");
        sub->add_option("--set", overrides, "override one key, e.g. --set k=5")->allow_extra_args(false);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        lasenn::ExperimentConfig config;
        if (!config_file.empty()) config.load_file(config_file);
        for (const auto& o : overrides) config.set_assignment(o);
        lasenn::run_subcommand(app.get_subcommands().front()->get_name(), config, out_dir, std::cerr);
    } catch (const lasenn::ConfigError& e) {
        std::cerr << "lasenn: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "lasenn: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
