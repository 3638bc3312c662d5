#pragma once

// Plain-text key=value experiment configuration.
//
// One `key = value` per line; `#` starts a comment; blank lines are ignored.
// Every key has a default, unknown keys are rejected, and list values are
// comma separated. The canonical form (all keys, sorted, defaults filled in)
// is what gets hashed into the run manifest.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lasenn/error.hpp"

namespace lasenn {

/// Bad key, bad value or missing input file; the CLI maps it to exit status 2.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ConfigKey {
    std::string_view name;
    std::string_view default_value;
    std::string_view help;
};

// clang-format off
inline constexpr ConfigKey kConfigKeys[] = {
    // synthetic data
    {"classes", "4", "number of classes"},
    {"samples_per_class", "1000", "training (and test) samples per class"},
    {"dims", "32", "feature dimensions"},
    {"mean_scale", "2.0", "class means uniform in [-mean_scale, mean_scale]^dims"},
    {"stddev", "2.2", "isotropic cluster standard deviation"},
    // classifier and training
    {"hidden", "64,32", "hidden layer widths"},
    {"lr", "0.05", "initial learning rate"},
    {"momentum", "0.9", "SGD momentum"},
    {"batch_size", "128", "mini-batch size"},
    {"weight_decay", "0.0005", "L2 weight decay"},
    {"epochs", "20", "training epochs (lr x0.1 at 50% and 75%)"},
    {"output", "probabilities", "exported network outputs: probabilities or logits"},
    // combined inference
    {"k", "3", "number of nearest neighbors"},
    {"w_q", "0.88", "weight of the query's own output"},
    {"metric", "l2", "neighbor metric: l2 or cosine"},
    {"layer", "1", "hidden layer feeding the index (1-based, 0 = last hidden)"},
    // label noise
    {"noise", "0", "fraction of training labels permuted"},
    // attacks
    {"attacks", "fgsm,bia,pgd", "attack kinds for attack-exp"},
    {"epsilon_frac", "0.1", "L-inf radius as a fraction of the training feature range"},
    {"step_frac", "0.25", "iterative step size as a fraction of epsilon"},
    {"steps", "10", "iterations for bia and pgd"},
    // sweeps (empty = use the single value above)
    {"grid_metric", "", "sweep values for metric"},
    {"grid_layer", "", "sweep values for layer"},
    {"grid_w_q", "", "sweep values for w_q"},
    {"grid_k", "", "sweep values for k"},
    {"grid_noise", "", "sweep values for noise"},
    // seeds
    {"seed", "1", "master seed"},
    {"replicates", "5", "trained networks per configuration"},
    // diagnostics
    {"class_a", "0", "reference class for the projection histogram"},
    {"bins", "50", "projection histogram bins"},
    // toy model
    {"toy_distribution", "skewed", "skewed or uniform"},
    {"toy_c", "0,0.05,0.1,0.2", "boundary offsets"},
    {"toy_d", "0.02", "half-width of the linear regime"},
    {"toy_a", "0.05", "half-width of the neighbor window"},
    {"toy_w_q", "0.88", "query weight of the combined toy classifier"},
    {"toy_n", "100", "training points per trial"},
    {"toy_trials", "110000", "Monte-Carlo trials per offset"},
    {"drift_n", "100,1000,10000", "training set sizes for the drift table"},
    {"drift_seeds", "31", "seeds per drift size"},
    // io
    {"input_dir", "", "directory holding artifacts from earlier steps (default: output directory)"},
};
// clang-format on

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

class ExperimentConfig {
  public:
    ExperimentConfig() {
        for (const auto& k : kConfigKeys) values_.emplace(std::string(k.name), std::string(k.default_value));
    }

    static bool known(std::string_view key) {
        for (const auto& k : kConfigKeys)
            if (k.name == key) return true;
        return false;
    }

    void set(std::string_view key, std::string_view value) {
        if (!known(key)) throw ConfigError("unknown config key '" + std::string(key) + "'");
        values_[std::string(key)] = trim(value);
    }

    /// Parse `key=value` (as given to --set).
    void set_assignment(std::string_view assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
        set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
    }

    void load_text(std::string_view text, const std::string& origin = "<config>") {
        std::istringstream in{std::string(text)};
        std::string line;
        for (int lineno = 1; std::getline(in, line); ++lineno) {
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            if (trim(line).empty()) continue;
            try {
                set_assignment(line);
            } catch (const ConfigError& e) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    void load_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        load_text(ss.str(), path.string());
    }

    const std::string& raw(std::string_view key) const {
        const auto it = values_.find(std::string(key));
        if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
        return it->second;
    }

    double real(std::string_view key) const { return parse_real(key, raw(key)); }

    std::uint64_t integer(std::string_view key) const { return parse_integer(key, raw(key)); }

    std::vector<std::string> list(std::string_view key) const {
        std::vector<std::string> out;
        std::string item;
        std::istringstream in(raw(key));
        while (std::getline(in, item, ','))
            if (auto t = trim(item); !t.empty()) out.push_back(std::move(t));
        return out;
    }

    std::vector<double> real_list(std::string_view key) const {
        std::vector<double> out;
        for (const auto& s : list(key)) out.push_back(parse_real(key, s));
        return out;
    }

    std::vector<std::uint64_t> integer_list(std::string_view key) const {
        std::vector<std::uint64_t> out;
        for (const auto& s : list(key)) out.push_back(parse_integer(key, s));
        return out;
    }

    /// Sorted `key=value` lines covering every key.
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
        return out;
    }

    /// FNV-1a 64 of canonical().
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : canonical()) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

  private:
    static double parse_real(std::string_view key, const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + std::string(key) + "': '" + s + "' is not a number");
        }
    }

    static std::uint64_t parse_integer(std::string_view key, const std::string& s) {
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw ConfigError("config key '" + std::string(key) + "': '" + s + "' is not a non-negative integer");
        return v;
    }

    std::map<std::string, std::string> values_;
};

} // namespace lasenn
