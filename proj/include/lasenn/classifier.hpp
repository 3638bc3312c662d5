#pragma once

// Small fully-connected classifier with hand-written backpropagation.
//
// Hidden layers use ReLU (subgradient 0 at 0), the output layer softmax.
// Parameters are double precision; datasets and exported corpora are float32.
// Training is mini-batch SGD with momentum and L2 weight decay using the
// same update rule as torch.optim.SGD:
//     d = g + wd * w;  v = momentum * v + d;  w -= lr * v

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lasenn/error.hpp"
#include "lasenn/rng.hpp"
#include "lasenn/tensor_io.hpp"

namespace lasenn {

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights; // out x in, row-major
    std::vector<double> bias;    // out

    double w(std::size_t o, std::size_t i) const { return weights[o * in + i]; }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class Mlp {
  public:
    Mlp() = default;

    /// All-zero parameters.
    explicit Mlp(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
        if (sizes_.size() < 2) throw ArgumentError("Mlp: need at least input and output sizes");
        for (auto s : sizes_)
            if (s == 0) throw ArgumentError("Mlp: zero-width layer");
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            DenseLayer layer;
            layer.in = sizes_[l];
            layer.out = sizes_[l + 1];
            layer.weights.assign(layer.in * layer.out, 0.0);
            layer.bias.assign(layer.out, 0.0);
            layers_.push_back(std::move(layer));
        }
    }

    /// He-uniform weights, zero biases.
    static Mlp initialized(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
        Mlp m(std::move(layer_sizes));
        Rng rng(seed);
        for (auto& layer : m.layers_) {
            const double bound = std::sqrt(6.0 / static_cast<double>(layer.in));
            for (auto& w : layer.weights) w = rng.uniform(-bound, bound);
        }
        return m;
    }

    const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
    std::size_t input_dim() const noexcept { return sizes_.front(); }
    std::size_t num_classes() const noexcept { return sizes_.back(); }
    std::size_t hidden_layers() const noexcept { return sizes_.size() - 2; }

    std::vector<DenseLayer>& layers() noexcept { return layers_; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
        return n;
    }

    /// Visit every parameter in a fixed order (layer by layer, weights then bias).
    template <typename F>
    void for_each_parameter(F&& f) {
        for (auto& l : layers_) {
            for (auto& w : l.weights) f(w);
            for (auto& b : l.bias) f(b);
        }
    }

    template <typename F>
    void for_each_parameter(F&& f) const {
        for (const auto& l : layers_) {
            for (double w : l.weights) f(w);
            for (double b : l.bias) f(b);
        }
    }

    double squared_norm() const {
        double s = 0.0;
        for_each_parameter([&](double p) { s += p * p; });
        return s;
    }

    bool all_finite() const {
        bool ok = true;
        for_each_parameter([&](double p) { ok = ok && std::isfinite(p); });
        return ok;
    }

    friend bool operator==(const Mlp&, const Mlp&) = default;

  private:
    std::vector<std::size_t> sizes_;
    std::vector<DenseLayer> layers_;
};

/// Which output vector is exported as the corpus "logits".
enum class OutputKind { Probabilities, Logits };

struct ForwardPass {
    std::vector<std::vector<double>> hidden; // post-ReLU activations of hidden layers 1..H
    std::vector<double> logits;              // pre-softmax output
    std::vector<double> probabilities;       // softmax output

    const std::vector<double>& output(OutputKind kind) const {
        return kind == OutputKind::Probabilities ? probabilities : logits;
    }
};

/// Max-subtracted softmax.
inline std::vector<double> softmax(std::span<const double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) sum += (p[i] = std::exp(z[i] - m));
    for (auto& v : p) v /= sum;
    return p;
}

/// Cross-entropy of logits against class `y`, via log-sum-exp.
inline double cross_entropy(std::span<const double> z, std::size_t y) {
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    return m + std::log(sum) - z[y];
}

namespace detail {

// z = W a + b
inline void affine(const DenseLayer& l, std::span<const double> a, std::vector<double>& z) {
    z.resize(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
        const double* row = l.weights.data() + o * l.in;
        double acc = l.bias[o];
        for (std::size_t i = 0; i < l.in; ++i) acc += row[i] * a[i];
        z[o] = acc;
    }
}

} // namespace detail

inline ForwardPass forward(const Mlp& model, std::span<const double> x) {
    if (x.size() != model.input_dim())
        throw ArgumentError("forward: input dimension " + std::to_string(x.size()) + " != " +
                            std::to_string(model.input_dim()));
    ForwardPass f;
    std::vector<double> a(x.begin(), x.end());
    std::vector<double> z;
    const auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        detail::affine(layers[l], a, z);
        if (l + 1 < layers.size()) {
            for (auto& v : z) v = v > 0.0 ? v : 0.0;
            f.hidden.push_back(z);
            a = z;
        }
    }
    f.logits = std::move(z);
    f.probabilities = softmax(f.logits);
    return f;
}

inline ForwardPass forward(const Mlp& model, std::span<const float> x) {
    std::vector<double> xd(x.begin(), x.end());
    return forward(model, std::span<const double>(xd));
}

/// Parameter-shaped gradient buffers.
struct MlpGradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;

    explicit MlpGradients(const Mlp& model) {
        for (const auto& l : model.layers()) {
            weights.emplace_back(l.weights.size(), 0.0);
            bias.emplace_back(l.bias.size(), 0.0);
        }
    }

    void scale(double s) {
        for (auto& w : weights)
            for (auto& v : w) v *= s;
        for (auto& b : bias)
            for (auto& v : b) v *= s;
    }

    template <typename F>
    void for_each(F&& f) const {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (double w : weights[l]) f(w);
            for (double b : bias[l]) f(b);
        }
    }
};

/// Per-sample backpropagation with reusable buffers.
class Backprop {
  public:
    explicit Backprop(const Mlp& model) : model_(model) {
        const auto n = model.layers().size();
        acts_.resize(n + 1);
        pre_.resize(n);
        delta_.resize(n);
    }

    /// Adds dCE/dparams for (x, y) into `grads` (unscaled) and returns the loss.
    /// When `input_grad` is non-null it receives dCE/dx.
    double accumulate(std::span<const double> x, std::size_t y, MlpGradients* grads,
                      std::vector<double>* input_grad = nullptr) {
        const auto& layers = model_.layers();
        const std::size_t n = layers.size();
        if (x.size() != model_.input_dim()) throw ArgumentError("backprop: input dimension mismatch");
        if (y >= model_.num_classes()) throw ArgumentError("backprop: label out of range");

        acts_[0].assign(x.begin(), x.end());
        for (std::size_t l = 0; l < n; ++l) {
            detail::affine(layers[l], acts_[l], pre_[l]);
            acts_[l + 1] = pre_[l];
            if (l + 1 < n)
                for (auto& v : acts_[l + 1]) v = v > 0.0 ? v : 0.0;
        }
        const auto& logits = pre_[n - 1];
        const double loss = cross_entropy(logits, y);

        delta_[n - 1] = softmax(logits);
        delta_[n - 1][y] -= 1.0;
        for (std::size_t l = n; l-- > 0;) {
            const auto& layer = layers[l];
            const auto& d = delta_[l];
            if (grads) {
                auto& gw = grads->weights[l];
                auto& gb = grads->bias[l];
                const auto& a = acts_[l];
                for (std::size_t o = 0; o < layer.out; ++o) {
                    if (d[o] == 0.0) continue;
                    double* row = gw.data() + o * layer.in;
                    for (std::size_t i = 0; i < layer.in; ++i) row[i] += d[o] * a[i];
                    gb[o] += d[o];
                }
            }
            if (l == 0 && !input_grad) break;
            back_.assign(layer.in, 0.0);
            for (std::size_t o = 0; o < layer.out; ++o) {
                if (d[o] == 0.0) continue;
                const double* row = layer.weights.data() + o * layer.in;
                for (std::size_t i = 0; i < layer.in; ++i) back_[i] += row[i] * d[o];
            }
            if (l == 0) {
                *input_grad = back_;
                break;
            }
            auto& prev = delta_[l - 1];
            prev.resize(layer.in);
            for (std::size_t i = 0; i < layer.in; ++i) prev[i] = pre_[l - 1][i] > 0.0 ? back_[i] : 0.0;
        }
        return loss;
    }

  private:
    const Mlp& model_;
    std::vector<std::vector<double>> acts_, pre_, delta_;
    std::vector<double> back_;
};

/// Features and labels of one sample set.
struct Dataset {
    TensorMatrix features;
    LabelVector labels;

    std::size_t size() const noexcept { return features.rows(); }

    void validate() const {
        if (features.rows() != labels.size()) throw ValidationError("Dataset: feature rows != label count");
        labels.validate();
    }
};

/// Mean cross-entropy gradient over `rows` of `data`; returns the mean loss through `loss_out` if given.
inline MlpGradients gradient(const Mlp& model, const Dataset& data, std::span<const std::size_t> rows,
                             double* loss_out = nullptr) {
    if (rows.empty()) throw ArgumentError("gradient: empty batch");
    MlpGradients g(model);
    Backprop bp(model);
    std::vector<double> x(model.input_dim());
    double loss = 0.0;
    for (auto r : rows) {
        const auto f = data.features.row(r);
        std::copy(f.begin(), f.end(), x.begin());
        loss += bp.accumulate(x, data.labels[r], &g);
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    g.scale(inv);
    if (loss_out) *loss_out = loss * inv;
    return g;
}

inline MlpGradients gradient(const Mlp& model, const Dataset& data, double* loss_out = nullptr) {
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return gradient(model, data, rows, loss_out);
}

/// Mean cross-entropy of the whole dataset, summed in row order.
inline double mean_loss(const Mlp& model, const Dataset& data) {
    double loss = 0.0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto f = forward(model, data.features.row(r));
        loss += cross_entropy(f.logits, data.labels[r]);
    }
    return loss / static_cast<double>(data.size());
}

struct TrainConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::size_t batch_size = 128;
    double weight_decay = 0.0005;
    std::size_t epochs = 80;
    double lr_decay = 0.1;
    /// Epoch fractions at which the learning rate is multiplied by lr_decay.
    std::array<double, 2> milestones{0.5, 0.75};
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ArgumentError("TrainConfig: learning_rate must be finite and >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("TrainConfig: momentum must lie in [0, 1)");
        if (batch_size < 1) throw ArgumentError("TrainConfig: batch_size must be >= 1");
        if (!(weight_decay >= 0.0)) throw ArgumentError("TrainConfig: weight_decay must be >= 0");
    }

    double lr_at(std::size_t epoch) const {
        double lr = learning_rate;
        for (double m : milestones) {
            const double at = std::floor(m * static_cast<double>(epochs));
            if (at > 0.0 && static_cast<double>(epoch) >= at) lr *= lr_decay;
        }
        return lr;
    }
};

/// Momentum buffers for SGD.
struct SgdState {
    MlpGradients velocity;
    explicit SgdState(const Mlp& model) : velocity(model) {}
};

inline void sgd_step(Mlp& model, const MlpGradients& grads, SgdState& state, double lr, double momentum,
                     double weight_decay) {
    auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& v) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double d = g[i] + weight_decay * p[i];
                v[i] = momentum * v[i] + d;
                p[i] -= lr * v[i];
            }
        };
        update(layers[l].weights, grads.weights[l], state.velocity.weights[l]);
        update(layers[l].bias, grads.bias[l], state.velocity.bias[l]);
    }
}

struct EpochStats {
    std::size_t epoch = 0;
    double learning_rate = 0.0;
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainResult {
    Mlp model;
    std::vector<EpochStats> trace;
};

/// Fraction of rows whose argmax output equals the label.
inline double accuracy(const Mlp& model, const Dataset& data) {
    if (data.size() == 0) return 0.0;
    std::size_t ok = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto f = forward(model, data.features.row(r));
        const auto pred = static_cast<std::size_t>(
            std::max_element(f.probabilities.begin(), f.probabilities.end()) - f.probabilities.begin());
        ok += pred == data.labels[r];
    }
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

/// Trace entries are measured on the full training set after each epoch.
inline TrainResult train(Mlp model, const Dataset& data, const TrainConfig& config) {
    config.validate();
    data.validate();
    if (data.size() == 0) throw ArgumentError("train: empty dataset");
    if (data.features.cols() != model.input_dim()) throw ArgumentError("train: feature width != model input");
    if (data.labels.num_classes > model.num_classes()) throw ArgumentError("train: more classes than outputs");

    Rng rng(config.seed);
    SgdState state(model);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    TrainResult result;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.lr_at(epoch);
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            double batch_loss = 0.0;
            const auto g = gradient(model, data, std::span<const std::size_t>(order).subspan(start, stop - start),
                                    &batch_loss);
            if (!std::isfinite(batch_loss))
                throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                                     std::to_string(start) + " (lr " + std::to_string(lr) +
                                     "); lower the learning rate");
            sgd_step(model, g, state, lr, config.momentum, config.weight_decay);
        }
        EpochStats s;
        s.epoch = epoch;
        s.learning_rate = lr;
        s.loss = mean_loss(model, data);
        s.accuracy = accuracy(model, data);
        if (!std::isfinite(s.loss)) throw NumericalError("train: non-finite loss after epoch " + std::to_string(epoch));
        result.trace.push_back(s);
    }
    result.model = std::move(model);
    return result;
}

// Synthetic data

struct SyntheticSpec {
    std::size_t num_classes = 4;
    std::size_t samples_per_class = 500;
    std::size_t dims = 16;
    double cluster_mean_scale = 1.0;
    double cluster_stddev = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_classes < 1 || samples_per_class < 1 || dims < 1)
            throw ArgumentError("SyntheticSpec: counts must be >= 1");
        if (!(cluster_stddev > 0.0)) throw ArgumentError("SyntheticSpec: stddev must be > 0");
        if (!(cluster_mean_scale >= 0.0)) throw ArgumentError("SyntheticSpec: mean scale must be >= 0");
    }
};

struct SyntheticData {
    Dataset train;
    Dataset test;
    std::vector<std::vector<double>> class_means;
};

/// Isotropic Gaussian clusters with means uniform in [-scale, scale]^dims.
/// Rows are interleaved by class (row i has label i % num_classes); train and test use separate streams.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticData out;
    Rng mean_rng(derive_seed(spec.seed, 0));
    out.class_means.assign(spec.num_classes, std::vector<double>(spec.dims));
    for (auto& mu : out.class_means)
        for (auto& v : mu) v = mean_rng.uniform(-spec.cluster_mean_scale, spec.cluster_mean_scale);

    const auto draw = [&](std::uint64_t stream) {
        Rng rng(derive_seed(spec.seed, stream));
        const std::size_t n = spec.num_classes * spec.samples_per_class;
        Dataset d{TensorMatrix(n, spec.dims), LabelVector{{}, static_cast<std::uint32_t>(spec.num_classes)}};
        d.labels.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::uint32_t>(i % spec.num_classes);
            d.labels.labels[i] = c;
            for (std::size_t j = 0; j < spec.dims; ++j)
                d.features(i, j) = static_cast<float>(out.class_means[c][j] + spec.cluster_stddev * rng.normal());
        }
        return d;
    };
    out.train = draw(1);
    out.test = draw(2);
    return out;
}

/// Give exactly round(fraction * N) uniformly chosen rows a uniformly chosen different label.
inline LabelVector permute_labels(const LabelVector& labels, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ArgumentError("permute_labels: fraction must lie in [0, 1]");
    const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(labels.size())));
    if (count > 0 && labels.num_classes < 2) throw ArgumentError("permute_labels: need >= 2 classes to relabel");
    LabelVector out = labels;
    Rng rng(seed);
    std::vector<std::size_t> rows(labels.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `count` slots become a uniform sample without replacement.
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(rows.size() - i));
        std::swap(rows[i], rows[j]);
        const std::size_t r = rows[i];
        const auto shift = 1 + static_cast<std::uint32_t>(rng.below(labels.num_classes - 1));
        out.labels[r] = (labels.labels[r] + shift) % labels.num_classes;
    }
    return out;
}

/// Layer-`layer` activations (1-based hidden layer) and outputs of every row, labels carried over.
inline LabeledCorpus export_corpus(const Mlp& model, const Dataset& data, std::size_t layer,
                                   OutputKind kind = OutputKind::Probabilities) {
    if (layer < 1 || layer > model.hidden_layers())
        throw ArgumentError("export_corpus: layer index " + std::to_string(layer) + " outside [1, " +
                            std::to_string(model.hidden_layers()) + "]");
    data.validate();
    const std::size_t width = model.layer_sizes()[layer];
    LabeledCorpus c{TensorMatrix(data.size(), width), TensorMatrix(data.size(), model.num_classes()),
                    LabelVector{data.labels.labels, static_cast<std::uint32_t>(model.num_classes())}};
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto f = forward(model, data.features.row(r));
        const auto& emb = f.hidden[layer - 1];
        for (std::size_t j = 0; j < width; ++j) c.embeddings(r, j) = static_cast<float>(emb[j]);
        const auto& out = f.output(kind);
        for (std::size_t j = 0; j < out.size(); ++j) c.logits(r, j) = static_cast<float>(out[j]);
    }
    return c;
}

/// 0 means "last hidden layer".
inline std::size_t resolve_layer(const Mlp& model, std::size_t layer) {
    return layer == 0 ? model.hidden_layers() : layer;
}

// LSNM checkpoint: "LSNM", version u8, 3 reserved bytes, u32 layer count,
// u64 per layer size, then per dense layer a weight block (out x in) and a
// bias block (1 x out), each in LSNN float64 layout.

inline void write_model(const Mlp& model, std::ostream& out) {
    if (!model.all_finite()) throw ValidationError("write_model: non-finite parameter");
    std::array<unsigned char, 12> h{'L', 'S', 'N', 'M', detail::kFormatVersion, 0, 0, 0};
    const auto& sizes = model.layer_sizes();
    detail::put_le<std::uint32_t>(h.data() + 8, static_cast<std::uint32_t>(sizes.size()));
    detail::write_bytes(out, h.data(), h.size());
    std::array<unsigned char, 8> word{};
    for (auto s : sizes) {
        detail::put_le<std::uint64_t>(word.data(), s);
        detail::write_bytes(out, word.data(), word.size());
    }
    for (const auto& l : model.layers()) {
        write_tensor_f64(out, l.out, l.in, l.weights);
        write_tensor_f64(out, 1, l.out, l.bias);
    }
}

inline Mlp read_model(std::istream& in) {
    std::array<unsigned char, 12> h{};
    detail::read_bytes(in, h.data(), h.size(), "model header");
    if (std::memcmp(h.data(), "LSNM", 4) != 0) throw FormatError("bad model magic");
    if (h[4] != detail::kFormatVersion) throw FormatError("unsupported model version " + std::to_string(h[4]));
    const auto count = detail::get_le<std::uint32_t>(h.data() + 8);
    if (count < 2 || count > 1024) throw FormatError("implausible layer count " + std::to_string(count));
    std::vector<std::size_t> sizes;
    std::array<unsigned char, 8> word{};
    for (std::uint32_t i = 0; i < count; ++i) {
        detail::read_bytes(in, word.data(), word.size(), "layer sizes");
        sizes.push_back(static_cast<std::size_t>(detail::get_le<std::uint64_t>(word.data())));
    }
    Mlp model(sizes);
    for (auto& l : model.layers()) {
        auto w = read_tensor_f64(in);
        auto b = read_tensor_f64(in);
        if (w.rows != l.out || w.cols != l.in || b.rows != 1 || b.cols != l.out)
            throw FormatError("model block shape disagrees with layer sizes");
        l.weights = std::move(w.data);
        l.bias = std::move(b.data);
    }
    return model;
}

inline void save_model(const Mlp& model, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    write_model(model, out);
}

inline Mlp load_model(const std::filesystem::path& path) {
    auto in = open_for_read(path);
    return read_model(in);
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& dir, const std::string& prefix) {
    save_tensor(d.features, dir / (prefix + "_x.lsnn"));
    save_labels(d.labels, dir / (prefix + "_y.lsnl"));
}

inline Dataset load_dataset(const std::filesystem::path& dir, const std::string& prefix) {
    Dataset d{load_tensor(dir / (prefix + "_x.lsnn")), load_labels(dir / (prefix + "_y.lsnl"))};
    d.validate();
    return d;
}

} // namespace lasenn
