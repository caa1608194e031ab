// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/error.hpp"
#include "autoduct/numeric.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace autoduct {

struct GpHyperparameters {
    std::vector<double> length_scales;
    double signal_var = 1.0;
    double noise_var = 1e-4;
};

/// Marginal-likelihood fitting controls. All variances refer to the
/// internally standardized objective.
///
/// Start grid: every combination of a shared length scale from
/// `start_length_scales` and a noise variance from `start_noise_vars`, with
/// unit signal variance. Each start runs `iterations` projected Adam steps
/// on the log-hyperparameters; the start with the highest final log
/// marginal likelihood wins (earliest start on ties).
struct GpOptions {
    std::optional<double> fixed_noise_var;
    int iterations = 100;
    double step_size = 0.05;
    std::vector<double> start_length_scales{0.3, 1.0, 3.0};
    std::vector<double> start_noise_vars{1e-4, 1e-1};
    double min_length_scale = 0.02;
    double max_length_scale = 50.0;
    double min_signal_var = 1e-2;
    double max_signal_var = 1e2;
    double min_noise_var = 1e-8;
    double max_noise_var = 2.0;
};

/// Matern-5/2 kernel with per-dimension length scales:
/// k(r) = s^2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r).
inline double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const GpHyperparameters& h)
{
    double r2 = 0.0;
    for (Eigen::Index d = 0; d < a.size(); ++d) {
        const double diff = (a(d) - b(d)) / h.length_scales[static_cast<std::size_t>(d)];
        r2 += diff * diff;
    }
    const double r = std::sqrt(r2);
    const double sr = std::sqrt(5.0) * r;
    return h.signal_var * (1.0 + sr + 5.0 * r2 / 3.0) * std::exp(-sr);
}

struct GpPosterior {
    double mean = 0.0;
    double var = 0.0; // latent (noise-free) variance

    [[nodiscard]] double stddev() const noexcept { return std::sqrt(std::max(var, 0.0)); }
};

/// Exact GP regression with a Matern-5/2 ARD kernel and Gaussian noise.
class GaussianProcess {
public:
    static constexpr double jitter_ladder[] = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4};

    static GaussianProcess fit(std::vector<Eigen::VectorXd> inputs, std::span<const double> objectives,
                               const GpOptions& options = {})
    {
        if (inputs.size() < 2 || inputs.size() != objectives.size())
            throw Error(Errc::invalid_argument, "fit_gp needs at least two observations with matching objectives");
        const auto dim = inputs.front().size();
        for (const auto& x : inputs)
            if (x.size() != dim || !x.allFinite())
                throw Error(Errc::dimension_mismatch, "GP inputs must share one dimension and be finite");
        for (double y : objectives)
            if (!std::isfinite(y))
                throw Error(Errc::invalid_argument, "GP objectives must be finite");

        GaussianProcess gp;
        gp.inputs_ = std::move(inputs);
        const auto n = static_cast<double>(objectives.size());
        double mean = 0.0;
        for (double y : objectives)
            mean += y;
        mean /= n;
        double ss = 0.0;
        for (double y : objectives)
            ss += (y - mean) * (y - mean);
        const double sd = std::sqrt(ss / n);
        gp.y_shift_ = mean;
        gp.y_scale_ = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
        gp.y_.resize(static_cast<Eigen::Index>(objectives.size()));
        for (std::size_t i = 0; i < objectives.size(); ++i)
            gp.y_(static_cast<Eigen::Index>(i)) = (objectives[i] - gp.y_shift_) / gp.y_scale_;

        gp.optimize(options);
        if (!gp.factorize())
            throw Error(Errc::singular_covariance, "covariance not positive definite after the full jitter ladder");
        return gp;
    }

    /// Posterior of the latent function in the original objective units.
    [[nodiscard]] GpPosterior predict(const Eigen::VectorXd& x) const
    {
        if (x.size() != inputs_.front().size())
            throw Error(Errc::dimension_mismatch, "GP query has the wrong dimension");
        Eigen::VectorXd k(static_cast<Eigen::Index>(inputs_.size()));
        for (std::size_t i = 0; i < inputs_.size(); ++i)
            k(static_cast<Eigen::Index>(i)) = matern52(x, inputs_[i], hyper_);
        const double mean = k.dot(alpha_);
        const Eigen::VectorXd v = chol_.matrixL().solve(k);
        const double var = std::max(hyper_.signal_var - v.squaredNorm(), 0.0);
        return {mean * y_scale_ + y_shift_, var * y_scale_ * y_scale_};
    }

    /// Minimum posterior mean over the observed inputs.
    [[nodiscard]] double min_observed_mean() const
    {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& x : inputs_)
            best = std::min(best, predict(x).mean);
        return best;
    }

    [[nodiscard]] const GpHyperparameters& hyperparameters() const noexcept { return hyper_; }
    [[nodiscard]] double log_marginal_likelihood() const noexcept { return lml_; }
    [[nodiscard]] double jitter() const noexcept { return jitter_; }
    [[nodiscard]] const std::vector<Eigen::VectorXd>& inputs() const noexcept { return inputs_; }
    [[nodiscard]] double objective_scale() const noexcept { return y_scale_; }

private:
    struct Evaluation {
        double lml = -std::numeric_limits<double>::infinity();
        Eigen::VectorXd grad; // w.r.t. [log l_1..log l_d, log s2, log noise]
    };

    [[nodiscard]] Eigen::MatrixXd signal_covariance(const GpHyperparameters& h) const
    {
        const auto n = static_cast<Eigen::Index>(inputs_.size());
        Eigen::MatrixXd k(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            k(i, i) = h.signal_var;
            for (Eigen::Index j = 0; j < i; ++j)
                k(i, j) = k(j, i) = matern52(inputs_[static_cast<std::size_t>(i)], inputs_[static_cast<std::size_t>(j)], h);
        }
        return k;
    }

    /// Log marginal likelihood and its gradient; nullopt when no jitter works.
    [[nodiscard]] std::optional<Evaluation> evaluate(const GpHyperparameters& h, bool with_gradient) const
    {
        const auto n = static_cast<Eigen::Index>(inputs_.size());
        const auto dim = inputs_.front().size();
        const Eigen::MatrixXd kf = signal_covariance(h);
        for (double jitter : jitter_ladder) {
            Eigen::MatrixXd k = kf;
            k.diagonal().array() += h.noise_var + jitter;
            Eigen::LLT<Eigen::MatrixXd> llt(k);
            if (llt.info() != Eigen::Success)
                continue;
            const Eigen::MatrixXd& l = llt.matrixLLT();
            bool ok = true;
            for (Eigen::Index i = 0; i < n; ++i)
                ok = ok && l(i, i) > 0.0 && std::isfinite(l(i, i));
            if (!ok)
                continue;

            Evaluation e;
            const Eigen::VectorXd alpha = llt.solve(y_);
            e.lml = -0.5 * y_.dot(alpha) - l.diagonal().array().log().sum() -
                    0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
            if (!with_gradient)
                return e;

            const Eigen::MatrixXd k_inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
            const Eigen::MatrixXd w = alpha * alpha.transpose() - k_inv;
            e.grad = Eigen::VectorXd::Zero(dim + 2);
            const double sqrt5 = std::sqrt(5.0);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < i; ++j) {
                    const auto& a = inputs_[static_cast<std::size_t>(i)];
                    const auto& b = inputs_[static_cast<std::size_t>(j)];
                    double r2 = 0.0;
                    for (Eigen::Index d = 0; d < dim; ++d) {
                        const double diff = (a(d) - b(d)) / h.length_scales[static_cast<std::size_t>(d)];
                        r2 += diff * diff;
                    }
                    const double r = std::sqrt(r2);
                    // dk/dlog(l_d) = s2 * 5/3 * (1 + sqrt5 r) exp(-sqrt5 r) * (diff_d / l_d)^2
                    const double common = h.signal_var * (5.0 / 3.0) * (1.0 + sqrt5 * r) * std::exp(-sqrt5 * r);
                    const double wij = w(i, j); // symmetric pair counted twice
                    for (Eigen::Index d = 0; d < dim; ++d) {
                        const double diff = (a(d) - b(d)) / h.length_scales[static_cast<std::size_t>(d)];
                        e.grad(d) += wij * common * diff * diff;
                    }
                }
            }
            e.grad(dim) = 0.5 * (w.array() * kf.array()).sum();
            e.grad(dim + 1) = 0.5 * w.trace() * h.noise_var;
            return e;
        }
        return std::nullopt;
    }

    void optimize(const GpOptions& o)
    {
        const auto dim = static_cast<std::size_t>(inputs_.front().size());
        const bool fixed_noise = o.fixed_noise_var.has_value();
        const double lo_l = std::log(o.min_length_scale), hi_l = std::log(o.max_length_scale);
        const double lo_s = std::log(o.min_signal_var), hi_s = std::log(o.max_signal_var);
        const double lo_n = std::log(o.min_noise_var), hi_n = std::log(o.max_noise_var);

        auto unpack = [&](const Eigen::VectorXd& theta) {
            GpHyperparameters h;
            h.length_scales.resize(dim);
            for (std::size_t d = 0; d < dim; ++d)
                h.length_scales[d] = std::exp(theta(static_cast<Eigen::Index>(d)));
            h.signal_var = std::exp(theta(static_cast<Eigen::Index>(dim)));
            h.noise_var = fixed_noise ? std::max(*o.fixed_noise_var, o.min_noise_var)
                                      : std::exp(theta(static_cast<Eigen::Index>(dim + 1)));
            return h;
        };
        auto project = [&](Eigen::VectorXd& theta) {
            for (std::size_t d = 0; d < dim; ++d)
                theta(static_cast<Eigen::Index>(d)) = std::clamp(theta(static_cast<Eigen::Index>(d)), lo_l, hi_l);
            theta(static_cast<Eigen::Index>(dim)) = std::clamp(theta(static_cast<Eigen::Index>(dim)), lo_s, hi_s);
            theta(static_cast<Eigen::Index>(dim + 1)) = std::clamp(theta(static_cast<Eigen::Index>(dim + 1)), lo_n, hi_n);
        };

        std::vector<double> noise_starts = o.start_noise_vars;
        if (fixed_noise)
            noise_starts = {std::max(*o.fixed_noise_var, o.min_noise_var)};

        bool found = false;
        for (double ls : o.start_length_scales) {
            for (double nv : noise_starts) {
                Eigen::VectorXd theta(static_cast<Eigen::Index>(dim + 2));
                theta.head(static_cast<Eigen::Index>(dim)).setConstant(std::log(ls));
                theta(static_cast<Eigen::Index>(dim)) = 0.0;
                theta(static_cast<Eigen::Index>(dim + 1)) = std::log(nv);
                project(theta);

                Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
                Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
                for (int it = 1; it <= o.iterations; ++it) {
                    const auto e = evaluate(unpack(theta), true);
                    if (!e || !e->grad.allFinite())
                        break;
                    Eigen::VectorXd g = e->grad;
                    if (fixed_noise)
                        g(static_cast<Eigen::Index>(dim + 1)) = 0.0;
                    m = 0.9 * m + 0.1 * g;
                    v = 0.999 * v + 0.001 * g.cwiseAbs2();
                    const double c1 = 1.0 - std::pow(0.9, it);
                    const double c2 = 1.0 - std::pow(0.999, it);
                    theta.array() += o.step_size * (m.array() / c1) / ((v.array() / c2).sqrt() + 1e-8);
                    project(theta);
                }
                const auto h = unpack(theta);
                const auto final_eval = evaluate(h, false);
                if (final_eval && final_eval->lml > lml_) {
                    lml_ = final_eval->lml;
                    hyper_ = h;
                    found = true;
                }
            }
        }
        if (!found) {
            // Every start failed to factorize; fall back to a heavily regularized setting.
            hyper_.length_scales.assign(dim, 1.0);
            hyper_.signal_var = 1.0;
            hyper_.noise_var = fixed_noise ? std::max(*o.fixed_noise_var, o.min_noise_var) : o.max_noise_var;
        }
    }

    bool factorize()
    {
        const Eigen::MatrixXd kf = signal_covariance(hyper_);
        for (double jitter : jitter_ladder) {
            Eigen::MatrixXd k = kf;
            k.diagonal().array() += hyper_.noise_var + jitter;
            chol_.compute(k);
            if (chol_.info() != Eigen::Success || !chol_.matrixLLT().diagonal().allFinite() ||
                (chol_.matrixLLT().diagonal().array() <= 0.0).any())
                continue;
            jitter_ = jitter;
            alpha_ = chol_.solve(y_);
            return true;
        }
        return false;
    }

    std::vector<Eigen::VectorXd> inputs_;
    Eigen::VectorXd y_;
    double y_shift_ = 0.0;
    double y_scale_ = 1.0;
    GpHyperparameters hyper_;
    double lml_ = -std::numeric_limits<double>::infinity();
    double jitter_ = 0.0;
    Eigen::LLT<Eigen::MatrixXd> chol_;
    Eigen::VectorXd alpha_;
};

/// Closed-form expected improvement for minimization. Zero when the
/// posterior is degenerate and the mean does not beat the incumbent.
inline double expected_improvement(double mean, double stddev, double incumbent) noexcept
{
    const double gain = incumbent - mean;
    if (!(stddev > 0.0))
        return std::max(gain, 0.0);
    const double z = gain / stddev;
    return std::max(gain * normal_cdf(z) + stddev * normal_pdf(z), 0.0);
}

} // namespace autoduct
