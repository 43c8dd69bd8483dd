#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <cbdemand/errors.hpp>
#include <cbdemand/features.hpp>

namespace cbdemand {

struct MeanTrainConfig {
    int max_cycles = 50;
    double convergence_tolerance = 1e-4;  ///< relative training-MAD improvement
    double prior_weight = 10.0;           ///< pseudo-count shrinking bins toward factor 1
    double learning_damping = 1.0;        ///< exponent on each partial factor, (0, 1]
};

/// Multiplicative regression model: prediction_i = c * prod_j f[j][bin(i,j)].
struct MeanModel {
    double c = 0.0;  ///< global mean of the target
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> factors;       ///< [feature][bin]
    std::vector<std::vector<std::int64_t>> support;  ///< training samples per bin
    std::vector<double> mad_per_cycle;               ///< training metric log
    int rolled_back_cycles = 0;  ///< cycles reverted because they raised the MAD
};

namespace detail {

inline void check_matrix_compat(const MeanModel& m, const FeatureMatrix& fm) {
    if (fm.n_features() != m.factors.size())
        throw DataError("predict_mean: feature matrix does not match the model layout");
    for (std::size_t j = 0; j < fm.n_features(); ++j)
        if (fm.n_bins[j] != static_cast<int>(m.factors[j].size()))
            throw DataError("predict_mean: bin count mismatch for feature '" + fm.names[j] + "'");
}

}  // namespace detail

/// Fits the global mean and the per-(feature, bin) factors by cyclic
/// coordinate descent. Each bin update multiplies the current factor by the
/// partial factor
///     g = (sum_bin y + w) / (sum_bin mu_hat + w)
/// where mu_hat always uses the newest factors of all other features and w is
/// the prior weight (w = 0 recovers the plain ratio of sums). Stops after
/// max_cycles or when the training MAD stops improving by the configured
/// relative tolerance at the end of a full cycle.
inline MeanModel fit_mean(std::span<const double> targets, const FeatureMatrix& fm,
                          const MeanTrainConfig& cfg = {}) {
    const std::size_t n = targets.size();
    if (n == 0) throw DataError("fit_mean: empty input");
    if (fm.n_samples != n) throw DataError("fit_mean: targets and feature matrix misaligned");
    double sum_y = 0.0;
    for (double y : targets) {
        if (!(y >= 0.0) || !std::isfinite(y))
            throw DataError("fit_mean: targets must be finite and non-negative");
        sum_y += y;
    }
    if (sum_y <= 0.0) throw DataError("fit_mean: all targets are zero");

    MeanModel model;
    model.c = sum_y / static_cast<double>(n);
    model.feature_names = fm.names;
    model.factors.resize(fm.n_features());
    model.support.resize(fm.n_features());
    for (std::size_t j = 0; j < fm.n_features(); ++j) {
        model.factors[j].assign(fm.n_bins[j], 1.0);
        model.support[j].assign(fm.n_bins[j], 0);
        for (std::size_t i = 0; i < n; ++i) ++model.support[j][fm.idx[j][i]];
    }

    std::vector<double> mu(n, model.c);
    std::vector<double> bin_y, bin_mu;
    std::vector<std::vector<double>> factors_checkpoint;
    std::vector<double> mu_checkpoint;

    double prev_mad = std::numeric_limits<double>::infinity();
    for (int cycle = 0; cycle < cfg.max_cycles; ++cycle) {
        factors_checkpoint = model.factors;
        mu_checkpoint = mu;
        for (std::size_t j = 0; j < fm.n_features(); ++j) {
            const auto& idx = fm.idx[j];
            auto& f = model.factors[j];
            bin_y.assign(f.size(), 0.0);
            bin_mu.assign(f.size(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                bin_y[idx[i]] += targets[i];
                bin_mu[idx[i]] += mu[i];
            }
            for (std::size_t k = 0; k < f.size(); ++k) {
                double g;
                if (model.support[j][k] == 0) {
                    g = 1.0;  // empty bins stay at exactly 1
                } else {
                    g = (bin_y[k] + cfg.prior_weight) / (bin_mu[k] + cfg.prior_weight);
                    if (cfg.learning_damping != 1.0) g = std::pow(g, cfg.learning_damping);
                    g = std::max(g, 1e-12);  // keep factors strictly positive
                }
                bin_mu[k] = g;  // reuse as the per-bin multiplier
                f[k] *= g;
            }
            for (std::size_t i = 0; i < n; ++i) mu[i] *= bin_mu[idx[i]];
        }

        double mad = 0.0;
        for (std::size_t i = 0; i < n; ++i) mad += std::abs(mu[i] - targets[i]);
        mad /= static_cast<double>(n);
        // A cycle is only kept if it does not worsen the training MAD; the
        // per-bin balance updates are not guaranteed to shrink an absolute
        // metric once the fit has reached its noise floor.
        if (cycle > 0 && mad > prev_mad + 1e-9 * model.c) {
            model.factors = factors_checkpoint;
            mu = mu_checkpoint;
            ++model.rolled_back_cycles;
            break;
        }
        model.mad_per_cycle.push_back(mad);
        if (cycle > 0 && prev_mad - mad <= cfg.convergence_tolerance * prev_mad) break;
        prev_mad = mad;
    }
    return model;
}

/// mu_hat_i = c * prod_j f[j][bin(i,j)], multiplied in feature order.
inline std::vector<double> predict_mean(const MeanModel& model, const FeatureMatrix& fm) {
    detail::check_matrix_compat(model, fm);
    std::vector<double> mu(fm.n_samples, model.c);
    for (std::size_t j = 0; j < fm.n_features(); ++j) {
        const auto& f = model.factors[j];
        const auto& idx = fm.idx[j];
        for (std::size_t i = 0; i < fm.n_samples; ++i) {
            const std::int32_t k = idx[i];
            if (k < 0 || k >= static_cast<std::int32_t>(f.size()))
                throw DataError("predict_mean: bin index out of range for feature '" +
                                fm.names[j] + "'");
            mu[i] *= f[k];
        }
    }
    return mu;
}

struct FactorContribution {
    std::string feature;
    int bin = 0;
    double factor = 1.0;
};

/// Per-sample factor breakdown, sorted by |log factor| descending. Folding c
/// through the factors in model feature order (c * f_1 * f_2 * ...)
/// reproduces the prediction bit-for-bit.
inline std::vector<FactorContribution> explain_mean(const MeanModel& model,
                                                    const FeatureMatrix& fm,
                                                    std::size_t sample) {
    detail::check_matrix_compat(model, fm);
    std::vector<FactorContribution> out;
    out.reserve(fm.n_features());
    for (std::size_t j = 0; j < fm.n_features(); ++j) {
        const std::int32_t k = fm.idx[j][sample];
        out.push_back({model.feature_names[j], k, model.factors[j][k]});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::abs(std::log(a.factor)) > std::abs(std::log(b.factor));
    });
    return out;
}

}  // namespace cbdemand
