// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/dataset.hpp"
#include "autoduct/error.hpp"
#include "autoduct/numeric.hpp"
#include "autoduct/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace autoduct {

// ---------------------------------------------------------------------------
// Activations

enum class Activation { relu, leaky_relu, gelu, selu, elu, softplus };

inline constexpr std::array<Activation, 6> kAllActivations{Activation::relu, Activation::leaky_relu, Activation::gelu,
                                                           Activation::selu, Activation::elu,        Activation::softplus};

inline std::string_view to_string(Activation a) noexcept
{
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::gelu: return "gelu";
    case Activation::selu: return "selu";
    case Activation::elu: return "elu";
    case Activation::softplus: return "softplus";
    }
    return "relu";
}

inline Activation activation_from_string(std::string_view name)
{
    for (auto a : kAllActivations)
        if (to_string(a) == name)
            return a;
    throw Error(Errc::invalid_argument, "unknown activation '" + std::string(name) + "'");
}

namespace activation_constants {
inline constexpr double leaky_slope = 0.01;
// Klambauer et al. self-normalizing constants.
inline constexpr double selu_lambda = 1.0507009873554804934193349852946;
inline constexpr double selu_alpha = 1.6732632423543772848170429916717;
inline constexpr double elu_alpha = 1.0;
} // namespace activation_constants

inline double softplus(double x) noexcept
{
    // log(1 + e^x) without overflow
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) noexcept
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// GELU uses the exact erf form x * Phi(x); the ReLU derivative at 0 is 0.
inline double activate(Activation a, double x) noexcept
{
    using namespace activation_constants;
    switch (a) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? x : leaky_slope * x;
    case Activation::gelu: return x * normal_cdf(x);
    case Activation::selu: return x > 0.0 ? selu_lambda * x : selu_lambda * selu_alpha * std::expm1(x);
    case Activation::elu: return x > 0.0 ? x : elu_alpha * std::expm1(x);
    case Activation::softplus: return softplus(x);
    }
    return x;
}

inline double activation_derivative(Activation a, double x) noexcept
{
    using namespace activation_constants;
    switch (a) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? 1.0 : leaky_slope;
    case Activation::gelu: return normal_cdf(x) + x * normal_pdf(x);
    case Activation::selu: return x > 0.0 ? selu_lambda : selu_lambda * selu_alpha * std::exp(x);
    case Activation::elu: return x > 0.0 ? 1.0 : elu_alpha * std::exp(x);
    case Activation::softplus: return sigmoid(x);
    }
    return 1.0;
}

// ---------------------------------------------------------------------------
// Configuration

struct MLPConfig {
    int input_dim = static_cast<int>(kFeatureCount);
    int hidden_layers = 3;
    int hidden_units = 64;
    Activation activation = Activation::relu;
    double dropout_rate = 0.0;

    void validate() const
    {
        if (input_dim < 1)
            throw Error(Errc::invalid_argument, "input_dim must be at least 1");
        if (hidden_layers < 1)
            throw Error(Errc::invalid_argument, "hidden_layers must be at least 1");
        if (hidden_units < 1)
            throw Error(Errc::invalid_argument, "hidden_units must be at least 1");
        if (!(dropout_rate >= 0.0 && dropout_rate <= 0.3))
            throw Error(Errc::invalid_argument, "dropout_rate must lie in [0, 0.3]");
    }

    friend bool operator==(const MLPConfig&, const MLPConfig&) = default;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    int batch_size = 128;
    int epochs = 300;
    int patience = 30;
    std::uint64_t seed = 0;

    /// `search_space` additionally pins the tuning search-space domains.
    void validate(bool search_space = false) const
    {
        if (!(learning_rate > 0.0) || !(weight_decay >= 0.0))
            throw Error(Errc::invalid_argument, "learning_rate must be positive and weight_decay non-negative");
        if (batch_size < 1 || epochs < 1 || patience < 0)
            throw Error(Errc::invalid_argument, "batch_size and epochs must be positive, patience non-negative");
        if (search_space) {
            if (!(learning_rate >= 1e-4 && learning_rate <= 1e-2))
                throw Error(Errc::invalid_argument, "learning_rate outside [1e-4, 1e-2]");
            if (!(weight_decay >= 1e-4 && weight_decay <= 1e-2))
                throw Error(Errc::invalid_argument, "weight_decay outside [1e-4, 1e-2]");
            if (batch_size != 128 && batch_size != 256 && batch_size != 512)
                throw Error(Errc::invalid_argument, "batch_size must be one of 128, 256, 512");
        }
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline nlohmann::json to_json(const MLPConfig& c)
{
    return {{"input_dim", c.input_dim},
            {"hidden_layers", c.hidden_layers},
            {"hidden_units", c.hidden_units},
            {"activation", std::string(to_string(c.activation))},
            {"dropout_rate", c.dropout_rate}};
}

inline MLPConfig mlp_config_from_json(const nlohmann::json& j)
{
    MLPConfig c;
    c.input_dim = j.value("input_dim", c.input_dim);
    c.hidden_layers = j.at("hidden_layers").get<int>();
    c.hidden_units = j.at("hidden_units").get<int>();
    c.activation = activation_from_string(j.at("activation").get<std::string>());
    c.dropout_rate = j.value("dropout_rate", 0.0);
    c.validate();
    return c;
}

inline nlohmann::json to_json(const TrainConfig& t)
{
    return {{"learning_rate", t.learning_rate}, {"weight_decay", t.weight_decay}, {"batch_size", t.batch_size},
            {"epochs", t.epochs},               {"patience", t.patience},         {"seed", t.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& defaults = {})
{
    TrainConfig t = defaults;
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.epochs = j.value("epochs", t.epochs);
    t.patience = j.value("patience", t.patience);
    t.seed = j.value("seed", t.seed);
    t.validate();
    return t;
}

// ---------------------------------------------------------------------------
// Parameters

/// Variance head output is softplus(raw) + kVarianceFloor (normalized units).
inline constexpr double kVarianceFloor = 1e-6;

/// Weights and biases as a flat list of tensors:
/// [W_1, b_1, ..., W_L, b_L, w_mean, b_mean, w_var, b_var].
/// Weights are (out x in); biases are (out x 1).
struct Parameters {
    std::vector<Eigen::MatrixXd> tensors;

    [[nodiscard]] int hidden_layers() const noexcept { return static_cast<int>(tensors.size() / 2) - 2; }

    [[nodiscard]] Eigen::MatrixXd& weight(int layer) { return tensors[2 * static_cast<std::size_t>(layer)]; }
    [[nodiscard]] const Eigen::MatrixXd& weight(int layer) const { return tensors[2 * static_cast<std::size_t>(layer)]; }
    [[nodiscard]] Eigen::MatrixXd& bias(int layer) { return tensors[2 * static_cast<std::size_t>(layer) + 1]; }
    [[nodiscard]] const Eigen::MatrixXd& bias(int layer) const { return tensors[2 * static_cast<std::size_t>(layer) + 1]; }

    // Heads live after the hidden stack.
    [[nodiscard]] int mean_head() const noexcept { return hidden_layers(); }
    [[nodiscard]] int var_head() const noexcept { return hidden_layers() + 1; }

    [[nodiscard]] std::size_t count() const noexcept
    {
        std::size_t n = 0;
        for (const auto& t : tensors)
            n += static_cast<std::size_t>(t.size());
        return n;
    }

    [[nodiscard]] Parameters zeros_like() const
    {
        Parameters z;
        for (const auto& t : tensors)
            z.tensors.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
        return z;
    }

    [[nodiscard]] std::vector<double> flatten() const
    {
        std::vector<double> flat;
        flat.reserve(count());
        for (const auto& t : tensors)
            for (Eigen::Index j = 0; j < t.cols(); ++j)
                for (Eigen::Index i = 0; i < t.rows(); ++i)
                    flat.push_back(t(i, j));
        return flat;
    }

    void assign(std::span<const double> flat)
    {
        if (flat.size() != count())
            throw Error(Errc::dimension_mismatch, "flat parameter vector has the wrong length");
        std::size_t k = 0;
        for (auto& t : tensors)
            for (Eigen::Index j = 0; j < t.cols(); ++j)
                for (Eigen::Index i = 0; i < t.rows(); ++i)
                    t(i, j) = flat[k++];
    }

    [[nodiscard]] bool all_finite() const noexcept
    {
        for (const auto& t : tensors)
            if (!t.allFinite())
                return false;
        return true;
    }

    friend bool operator==(const Parameters& a, const Parameters& b)
    {
        if (a.tensors.size() != b.tensors.size())
            return false;
        for (std::size_t i = 0; i < a.tensors.size(); ++i)
            if (a.tensors[i].rows() != b.tensors[i].rows() || a.tensors[i].cols() != b.tensors[i].cols() ||
                a.tensors[i] != b.tensors[i])
                return false;
        return true;
    }
};

/// He-scaled Gaussian weights (std = sqrt(2 / fan_in)), zero biases.
inline Parameters init_params(const MLPConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    Rng rng(derive_seed(seed, 0x1417));
    Parameters p;
    auto add_layer = [&](int out, int in) {
        const double sd = std::sqrt(2.0 / static_cast<double>(in));
        Eigen::MatrixXd w(out, in);
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                w(i, j) = sd * rng.normal();
        p.tensors.push_back(std::move(w));
        p.tensors.push_back(Eigen::MatrixXd::Zero(out, 1));
    };
    int fan_in = cfg.input_dim;
    for (int l = 0; l < cfg.hidden_layers; ++l) {
        add_layer(cfg.hidden_units, fan_in);
        fan_in = cfg.hidden_units;
    }
    add_layer(1, fan_in);
    add_layer(1, fan_in);
    return p;
}

inline void check_shapes(const Parameters& p, const MLPConfig& cfg)
{
    if (p.hidden_layers() != cfg.hidden_layers || p.tensors.size() != 2 * static_cast<std::size_t>(cfg.hidden_layers + 2))
        throw Error(Errc::dimension_mismatch, "parameter tensor count does not match the configuration");
    int fan_in = cfg.input_dim;
    for (int l = 0; l < cfg.hidden_layers + 2; ++l) {
        const int out = l < cfg.hidden_layers ? cfg.hidden_units : 1;
        if (p.weight(l).rows() != out || p.weight(l).cols() != fan_in || p.bias(l).rows() != out || p.bias(l).cols() != 1)
            throw Error(Errc::dimension_mismatch, "layer " + std::to_string(l) + " has an unexpected shape");
        if (l < cfg.hidden_layers)
            fan_in = cfg.hidden_units;
    }
}

// ---------------------------------------------------------------------------
// Forward / loss / backward

struct GaussianPrediction {
    double mean = 0.0;
    double var = 1.0;

    friend bool operator==(const GaussianPrediction&, const GaussianPrediction&) = default;
};

/// Inverted-dropout masks per hidden layer: entries are 0 or 1/(1-rate).
struct DropoutMasks {
    std::vector<Eigen::MatrixXd> layers;

    [[nodiscard]] bool empty() const noexcept { return layers.empty(); }
};

inline DropoutMasks sample_dropout_masks(const MLPConfig& cfg, Eigen::Index batch, Rng& rng)
{
    DropoutMasks masks;
    if (cfg.dropout_rate <= 0.0)
        return masks;
    const double keep = 1.0 - cfg.dropout_rate;
    for (int l = 0; l < cfg.hidden_layers; ++l) {
        Eigen::MatrixXd m(cfg.hidden_units, batch);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                m(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
        masks.layers.push_back(std::move(m));
    }
    return masks;
}

/// Column-major batch in normalized units: inputs (input_dim x B), targets (B).
struct Batch {
    Eigen::MatrixXd inputs;
    Eigen::VectorXd targets;

    [[nodiscard]] Eigen::Index size() const noexcept { return inputs.cols(); }
};

/// Intermediate values of one batched forward pass, kept for backprop.
struct ForwardTrace {
    std::vector<Eigen::MatrixXd> pre;  // z_l per hidden layer
    std::vector<Eigen::MatrixXd> post; // h_l (after activation and dropout), post[0] = inputs
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd raw_var;
    Eigen::RowVectorXd var;
};

inline ForwardTrace forward_batch(const Parameters& p, const MLPConfig& cfg, const Eigen::MatrixXd& inputs,
                                  const DropoutMasks* masks = nullptr)
{
    if (inputs.rows() != cfg.input_dim)
        throw Error(Errc::dimension_mismatch, "input has " + std::to_string(inputs.rows()) + " features, network expects " +
                                                  std::to_string(cfg.input_dim));
    ForwardTrace t;
    t.post.push_back(inputs);
    for (int l = 0; l < cfg.hidden_layers; ++l) {
        Eigen::MatrixXd z = p.weight(l) * t.post.back();
        z.colwise() += p.bias(l).col(0);
        Eigen::MatrixXd h = z.unaryExpr([a = cfg.activation](double v) { return activate(a, v); });
        if (masks && !masks->empty())
            h.array() *= masks->layers[static_cast<std::size_t>(l)].array();
        t.pre.push_back(std::move(z));
        t.post.push_back(std::move(h));
    }
    const auto& top = t.post.back();
    t.mean = (p.weight(p.mean_head()) * top).row(0).array() + p.bias(p.mean_head())(0, 0);
    t.raw_var = (p.weight(p.var_head()) * top).row(0).array() + p.bias(p.var_head())(0, 0);
    t.var = t.raw_var.unaryExpr([](double r) { return softplus(r) + kVarianceFloor; });
    return t;
}

/// Single-input forward pass. In training mode dropout masks are drawn from
/// `dropout_seed`; at inference dropout is inactive and needs no rescaling.
inline GaussianPrediction forward(const Parameters& p, const MLPConfig& cfg, std::span<const double> x,
                                  bool training_mode = false, std::uint64_t dropout_seed = 0)
{
    if (static_cast<int>(x.size()) != cfg.input_dim)
        throw Error(Errc::dimension_mismatch, "input has " + std::to_string(x.size()) + " features, network expects " +
                                                  std::to_string(cfg.input_dim));
    Eigen::MatrixXd column(cfg.input_dim, 1);
    for (int i = 0; i < cfg.input_dim; ++i) {
        if (!std::isfinite(x[static_cast<std::size_t>(i)]))
            throw Error(Errc::invalid_argument, "non-finite network input");
        column(i, 0) = x[static_cast<std::size_t>(i)];
    }
    DropoutMasks masks;
    if (training_mode) {
        Rng rng(dropout_seed);
        masks = sample_dropout_masks(cfg, 1, rng);
    }
    const auto t = forward_batch(p, cfg, column, training_mode ? &masks : nullptr);
    return {t.mean(0), t.var(0)};
}

/// Mean over samples of (y - mu)^2 / (2 var) + 0.5 log var.
inline double nll_loss(std::span<const GaussianPrediction> preds, std::span<const double> targets)
{
    if (preds.size() != targets.size())
        throw Error(Errc::length_mismatch, std::to_string(preds.size()) + " predictions vs " +
                                               std::to_string(targets.size()) + " targets");
    if (preds.empty())
        throw Error(Errc::length_mismatch, "nll_loss needs at least one sample");
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double v = preds[i].var;
        if (!(v > 0.0))
            throw Error(Errc::non_positive_variance, "sample " + std::to_string(i));
        const double r = targets[i] - preds[i].mean;
        total += r * r / (2.0 * v) + 0.5 * std::log(v);
    }
    return total / static_cast<double>(preds.size());
}

inline double nll_loss(const ForwardTrace& t, const Eigen::VectorXd& targets)
{
    const Eigen::ArrayXd r = targets.array() - t.mean.transpose().array();
    const Eigen::ArrayXd v = t.var.transpose().array();
    return (r.square() / (2.0 * v) + 0.5 * v.log()).mean();
}

/// Data gradient of the NLL plus the decoupled weight-decay term kept apart,
/// so the optimizer can feed only `data` into its moment estimates.
struct Gradients {
    Parameters data;
    Parameters decay;
    double loss = 0.0;

    [[nodiscard]] Parameters total() const
    {
        Parameters sum = data;
        for (std::size_t i = 0; i < sum.tensors.size(); ++i)
            sum.tensors[i] += decay.tensors[i];
        return sum;
    }
};

inline Gradients backward(const Parameters& p, const MLPConfig& cfg, const Batch& batch, double weight_decay = 0.0,
                          const DropoutMasks* masks = nullptr)
{
    if (batch.size() == 0)
        throw Error(Errc::empty_input, "backward needs a non-empty batch");
    if (batch.targets.size() != batch.size())
        throw Error(Errc::length_mismatch, "batch inputs and targets differ in length");

    const ForwardTrace t = forward_batch(p, cfg, batch.inputs, masks);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    Gradients g;
    g.loss = nll_loss(t, batch.targets);
    g.data = p.zeros_like();
    g.decay = p.zeros_like();

    const Eigen::ArrayXXd y = batch.targets.transpose().array();
    const Eigen::ArrayXXd resid = y - t.mean.array();
    const Eigen::ArrayXXd var = t.var.array();
    // dL/dmu and dL/draw (through softplus)
    const Eigen::RowVectorXd d_mean = (-resid / var * inv_b).matrix();
    const Eigen::ArrayXXd d_var = (-resid.square() / (2.0 * var.square()) + 1.0 / (2.0 * var)) * inv_b;
    const Eigen::RowVectorXd d_raw = (d_var * t.raw_var.array().unaryExpr([](double r) { return sigmoid(r); })).matrix();

    const auto& top = t.post.back();
    const int mh = p.mean_head();
    const int vh = p.var_head();
    g.data.weight(mh) = d_mean * top.transpose();
    g.data.bias(mh)(0, 0) = d_mean.sum();
    g.data.weight(vh) = d_raw * top.transpose();
    g.data.bias(vh)(0, 0) = d_raw.sum();

    Eigen::MatrixXd delta_h = p.weight(mh).transpose() * d_mean + p.weight(vh).transpose() * d_raw;
    for (int l = cfg.hidden_layers - 1; l >= 0; --l) {
        const auto& z = t.pre[static_cast<std::size_t>(l)];
        Eigen::MatrixXd delta_z =
            delta_h.array() * z.unaryExpr([a = cfg.activation](double v) { return activation_derivative(a, v); }).array();
        if (masks && !masks->empty())
            delta_z.array() *= masks->layers[static_cast<std::size_t>(l)].array();
        g.data.weight(l) = delta_z * t.post[static_cast<std::size_t>(l)].transpose();
        g.data.bias(l) = delta_z.rowwise().sum();
        if (l > 0)
            delta_h = p.weight(l).transpose() * delta_z;
    }

    for (std::size_t i = 0; i < p.tensors.size(); ++i)
        g.decay.tensors[i] = weight_decay * p.tensors[i];
    return g;
}

// ---------------------------------------------------------------------------
// Training

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;
    double wall_time_s = 0.0;

    [[nodiscard]] int epochs_run() const noexcept { return static_cast<int>(val_loss.size()); }

    /// Equality over everything except wall time.
    [[nodiscard]] bool same_trajectory(const TrainHistory& other) const noexcept
    {
        return train_loss == other.train_loss && val_loss == other.val_loss && best_epoch == other.best_epoch;
    }
};

inline Batch make_batch(const Dataset& ds, const Normalizer& norm)
{
    Batch b;
    b.inputs.resize(static_cast<Eigen::Index>(kFeatureCount), static_cast<Eigen::Index>(ds.size()));
    b.targets.resize(static_cast<Eigen::Index>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto z = norm.apply(ds.points[i].inputs());
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            b.inputs(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(i)) = z[f];
        b.targets(static_cast<Eigen::Index>(i)) = ds.points[i].chf ? norm.apply_target(*ds.points[i].chf) : 0.0;
    }
    return b;
}

namespace adam {
inline constexpr double beta1 = 0.9;
inline constexpr double beta2 = 0.999;
inline constexpr double epsilon = 1e-8;
} // namespace adam

struct TrainedNetwork {
    Parameters params;
    TrainHistory history;
};

/// Mini-batch Adam with decoupled weight decay on the NLL in normalized
/// units. Batch order is reshuffled each epoch from the seed; the parameters
/// with the lowest validation NLL are returned. Training stops once the
/// validation loss has not improved for max(patience, 1) consecutive epochs.
inline TrainedNetwork train(const SplitDataset& splits, const Normalizer& normalizer, const MLPConfig& mlp,
                            const TrainConfig& tc)
{
    mlp.validate();
    tc.validate();
    if (splits.train.empty() || splits.validation.empty())
        throw Error(Errc::empty_input, "training needs non-empty train and validation splits");

    const auto started = std::chrono::steady_clock::now();
    const Batch train_all = make_batch(splits.train, normalizer);
    const Batch val_all = make_batch(splits.validation, normalizer);

    Parameters params = init_params(mlp, tc.seed);
    Parameters m1 = params.zeros_like();
    Parameters m2 = params.zeros_like();
    Rng order_rng(derive_seed(tc.seed, 0x5EED));
    Rng dropout_rng(derive_seed(tc.seed, 0xD209));

    TrainedNetwork out;
    out.params = params;
    double best_val = std::numeric_limits<double>::infinity();
    int stale = 0;
    long step = 0;

    const auto n = static_cast<std::size_t>(train_all.size());
    std::vector<Eigen::Index> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = static_cast<Eigen::Index>(i);
    const std::size_t batch_size = static_cast<std::size_t>(tc.batch_size);

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        order_rng.shuffle(std::span<Eigen::Index>(order));
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t stop = std::min(n, start + batch_size);
            Batch b;
            b.inputs.resize(train_all.inputs.rows(), static_cast<Eigen::Index>(stop - start));
            b.targets.resize(static_cast<Eigen::Index>(stop - start));
            for (std::size_t k = start; k < stop; ++k) {
                b.inputs.col(static_cast<Eigen::Index>(k - start)) = train_all.inputs.col(order[k]);
                b.targets(static_cast<Eigen::Index>(k - start)) = train_all.targets(order[k]);
            }
            const DropoutMasks masks = sample_dropout_masks(mlp, b.size(), dropout_rng);
            const Gradients g = backward(params, mlp, b, tc.weight_decay, &masks);
            if (!std::isfinite(g.loss))
                throw Error(Errc::diverged_loss, "training loss became non-finite at epoch " + std::to_string(epoch));
            loss_sum += g.loss * static_cast<double>(stop - start);

            ++step;
            const double c1 = 1.0 - std::pow(adam::beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(adam::beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < params.tensors.size(); ++i) {
                const auto& grad = g.data.tensors[i];
                m1.tensors[i] = adam::beta1 * m1.tensors[i] + (1.0 - adam::beta1) * grad;
                m2.tensors[i] = adam::beta2 * m2.tensors[i] + (1.0 - adam::beta2) * grad.cwiseAbs2();
                params.tensors[i].array() -=
                    tc.learning_rate * ((m1.tensors[i].array() / c1) / ((m2.tensors[i].array() / c2).sqrt() + adam::epsilon) +
                                        g.decay.tensors[i].array());
            }
        }
        const double train_loss = loss_sum / static_cast<double>(n);
        const double val_loss = nll_loss(forward_batch(params, mlp, val_all.inputs), val_all.targets);
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss) || !params.all_finite())
            throw Error(Errc::diverged_loss, "loss became non-finite at epoch " + std::to_string(epoch));
        out.history.train_loss.push_back(train_loss);
        out.history.val_loss.push_back(val_loss);

        if (val_loss < best_val) {
            best_val = val_loss;
            out.params = params;
            out.history.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= std::max(tc.patience, 1)) {
            break;
        }
    }
    out.history.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
}

/// Physical-unit predictions: mean mapped through the target affine, variance
/// multiplied by the squared target scale.
inline std::vector<GaussianPrediction> predict_batch(const Parameters& p, const MLPConfig& cfg, const Normalizer& norm,
                                                     std::span<const DataPoint> raw_inputs)
{
    std::vector<GaussianPrediction> out;
    out.reserve(raw_inputs.size());
    if (raw_inputs.empty())
        return out;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(kFeatureCount), static_cast<Eigen::Index>(raw_inputs.size()));
    for (std::size_t i = 0; i < raw_inputs.size(); ++i) {
        const auto raw = raw_inputs[i].inputs();
        for (double v : raw)
            if (!std::isfinite(v))
                throw Error(Errc::invalid_argument, "non-finite input at row " + std::to_string(i));
        const auto z = norm.apply(raw);
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            x(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(i)) = z[f];
    }
    const auto t = forward_batch(p, cfg, x);
    const double s = norm.target_scale();
    for (Eigen::Index i = 0; i < x.cols(); ++i)
        out.push_back({norm.invert_target(t.mean(i)), t.var(i) * s * s});
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kNetworkFormatVersion = 1;

inline nlohmann::json network_to_json(const Parameters& p, const MLPConfig& cfg, const Normalizer& norm)
{
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : p.tensors) {
        std::vector<double> data(t.data(), t.data() + t.size());
        tensors.push_back({{"shape", {t.rows(), t.cols()}}, {"data", std::move(data)}});
    }
    return {{"format_version", kNetworkFormatVersion},
            {"config", to_json(cfg)},
            {"normalizer", to_json(norm)},
            {"tensors", std::move(tensors)}};
}

struct NetworkDocument {
    Parameters params;
    MLPConfig config;
    Normalizer normalizer;
};

inline NetworkDocument network_from_json(const nlohmann::json& j)
{
    if (!j.is_object() || !j.contains("format_version"))
        throw Error(Errc::corrupt_artifact, "network document lacks format_version");
    if (j.at("format_version") != kNetworkFormatVersion)
        throw Error(Errc::version_mismatch, "network format " + j.at("format_version").dump() + ", expected " +
                                                std::to_string(kNetworkFormatVersion));
    try {
        NetworkDocument doc;
        doc.config = mlp_config_from_json(j.at("config"));
        doc.normalizer = normalizer_from_json(j.at("normalizer"));
        for (const auto& t : j.at("tensors")) {
            const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
            const auto data = t.at("data").get<std::vector<double>>();
            if (shape.size() != 2 || shape[0] * shape[1] != static_cast<Eigen::Index>(data.size()))
                throw Error(Errc::corrupt_artifact, "tensor shape does not match its data");
            doc.params.tensors.push_back(Eigen::Map<const Eigen::MatrixXd>(data.data(), shape[0], shape[1]));
        }
        check_shapes(doc.params, doc.config);
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::corrupt_artifact, e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::version_mismatch || e.code() == Errc::corrupt_artifact)
            throw;
        throw Error(Errc::corrupt_artifact, e.what());
    }
}

} // namespace autoduct
