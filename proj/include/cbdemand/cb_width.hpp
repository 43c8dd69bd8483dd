#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <cbdemand/cb_mean.hpp>
#include <cbdemand/distributions.hpp>
#include <cbdemand/errors.hpp>
#include <cbdemand/features.hpp>

namespace cbdemand {

struct WidthTrainConfig {
    int max_cycles = 20;
    double nll_tolerance = 1e-5;   ///< relative total-NLL improvement per cycle
    double log_factor_bound = 6.0; ///< line search window on log f: [-bound, bound]
    int line_search_evals = 40;    ///< objective evaluations per bin update
    double prior_weight = 10.0;    ///< blends each log-factor toward 0
};

/// Dispersion-link model: r_hat_i = 1 + 1 / prod_j f[j][bin(i,j)], fitted by
/// minimizing the NBD negative log-likelihood with the means held fixed.
/// A model fitted without any features carries the single fitted factor in
/// `global_factor` (1 otherwise).
struct WidthModel {
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> factors;        ///< [feature][bin], >= 0
    std::vector<std::vector<std::int64_t>> support;  ///< training samples per bin
    double global_factor = 1.0;
    std::vector<double> nll_per_cycle;
    std::int64_t guarded_updates = 0;  ///< regularized updates rejected to keep NLL monotone
};

namespace detail {

// -log NBD(y; mu, r) with r = 1 + 1/pi, pi > 0. `lg_y1` is lgamma(y+1).
inline double nbd_nll_term(double y, double mu, double pi, double log_mu, double lg_y1) {
    const double r = 1.0 + 1.0 / pi;
    return -log_gamma_ratio(r, static_cast<long long>(y)) + lg_y1 + r * std::log1p(mu / r)
           - y * (log_mu - std::log(r + mu));
}

struct BinObjective {
    std::span<const double> y, mu, log_mu, lg_y1, other;  // per sample in the bin
    double operator()(double log_factor) const {
        const double f = std::exp(log_factor);
        double nll = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i)
            nll += nbd_nll_term(y[i], mu[i], f * other[i], log_mu[i], lg_y1[i]);
        if (!std::isfinite(nll))
            throw NumericError("fit_width: non-finite negative log-likelihood");
        return nll;
    }
};

// Golden-section minimum of fn on [a, b] with a fixed evaluation budget.
template <typename Fn>
double golden_section_min(Fn&& fn, double a, double b, int evals) {
    constexpr double kGolden = 0.6180339887498949;
    double c = b - kGolden * (b - a);
    double d = a + kGolden * (b - a);
    double fc = fn(c), fd = fn(d);
    for (int e = 2; e < evals; ++e) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kGolden * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kGolden * (b - a);
            fd = fn(d);
        }
    }
    return fc < fd ? c : d;
}

}  // namespace detail

/// Cyclic coordinate descent on the per-bin dispersion factors. Each bin
/// update runs a golden-section line search on the log-factor, shrinks the
/// result toward 0 with weight prior_weight / (prior_weight + bin count), and
/// keeps the previous factor whenever the shrunk candidate would raise the
/// bin's NLL: the total loss is non-increasing across updates by construction.
inline WidthModel fit_width(std::span<const double> targets, std::span<const double> mu_hat,
                            const FeatureMatrix& fm, const WidthTrainConfig& cfg = {}) {
    const std::size_t n = targets.size();
    if (n == 0) throw DataError("fit_width: empty input");
    if (mu_hat.size() != n || fm.n_samples != n)
        throw DataError("fit_width: targets, means and feature matrix misaligned");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(targets[i] >= 0.0) || !std::isfinite(targets[i]))
            throw DataError("fit_width: targets must be finite and non-negative");
        if (!(mu_hat[i] > 0.0) || !std::isfinite(mu_hat[i]))
            throw DataError("fit_width: fixed means must be positive and finite");
    }

    WidthModel model;
    model.feature_names = fm.names;
    model.factors.resize(fm.n_features());
    model.support.resize(fm.n_features());
    for (std::size_t j = 0; j < fm.n_features(); ++j) {
        model.factors[j].assign(fm.n_bins[j], 1.0);
        model.support[j].assign(fm.n_bins[j], 0);
        for (std::size_t i = 0; i < n; ++i) ++model.support[j][fm.idx[j][i]];
    }

    std::vector<double> log_mu(n), lg_y1(n), prod(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        log_mu[i] = std::log(mu_hat[i]);
        lg_y1[i] = std::lgamma(targets[i] + 1.0);
    }

    // Sample order grouped by bin, per feature (CSR layout).
    std::vector<std::vector<std::uint32_t>> order(fm.n_features());
    std::vector<std::vector<std::uint32_t>> offset(fm.n_features());
    for (std::size_t j = 0; j < fm.n_features(); ++j) {
        offset[j].assign(fm.n_bins[j] + 1, 0);
        for (std::size_t i = 0; i < n; ++i) ++offset[j][fm.idx[j][i] + 1];
        for (int k = 0; k < fm.n_bins[j]; ++k) offset[j][k + 1] += offset[j][k];
        order[j].resize(n);
        std::vector<std::uint32_t> cursor(offset[j].begin(), offset[j].end() - 1);
        for (std::size_t i = 0; i < n; ++i)
            order[j][cursor[fm.idx[j][i]]++] = static_cast<std::uint32_t>(i);
    }

    // Scratch buffers for one bin.
    std::vector<double> by, bmu, blmu, blg, bother;

    auto update_bin = [&](std::span<const std::uint32_t> rows, double& factor,
                          std::int64_t n_bin) {
        by.clear(); bmu.clear(); blmu.clear(); blg.clear(); bother.clear();
        for (std::uint32_t i : rows) {
            by.push_back(targets[i]);
            bmu.push_back(mu_hat[i]);
            blmu.push_back(log_mu[i]);
            blg.push_back(lg_y1[i]);
            bother.push_back(prod[i] / factor);
        }
        detail::BinObjective obj{by, bmu, blmu, blg, bother};
        const double t_opt = detail::golden_section_min(obj, -cfg.log_factor_bound,
                                                        cfg.log_factor_bound,
                                                        cfg.line_search_evals);
        const double shrink = static_cast<double>(n_bin) /
                              (cfg.prior_weight + static_cast<double>(n_bin));
        const double t_new = t_opt * shrink;
        const double nll_new = obj(t_new);
        const double nll_cur = obj(std::log(factor));
        if (nll_new <= nll_cur + 1e-9) {
            factor = std::exp(t_new);
            for (std::size_t s = 0; s < rows.size(); ++s) prod[rows[s]] = bother[s] * factor;
            return nll_new;
        }
        ++model.guarded_updates;
        return nll_cur;
    };

    auto total_nll = [&]() {
        double nll = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            nll += detail::nbd_nll_term(targets[i], mu_hat[i], prod[i], log_mu[i], lg_y1[i]);
        if (!std::isfinite(nll))
            throw NumericError("fit_width: non-finite negative log-likelihood");
        return nll;
    };

    if (fm.n_features() == 0) {
        // With no features the factor product is empty and the link would be
        // pinned at r = 2; fit a single global factor instead so the model
        // still carries the one-dimensional MLE.
        std::vector<std::uint32_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<std::uint32_t>(i);
        update_bin(all, model.global_factor, static_cast<std::int64_t>(n));
        model.nll_per_cycle.push_back(total_nll());
        return model;
    }

    double prev = total_nll();
    for (int cycle = 0; cycle < cfg.max_cycles; ++cycle) {
        for (std::size_t j = 0; j < fm.n_features(); ++j) {
            for (int k = 0; k < fm.n_bins[j]; ++k) {
                if (model.support[j][k] == 0) continue;  // empty bins stay at exactly 1
                const std::span<const std::uint32_t> rows{order[j].data() + offset[j][k],
                                                          offset[j][k + 1] - offset[j][k]};
                update_bin(rows, model.factors[j][k], model.support[j][k]);
            }
        }
        const double cur = total_nll();
        model.nll_per_cycle.push_back(cur);
        if (prev - cur <= cfg.nll_tolerance * std::abs(prev)) break;
        prev = cur;
    }
    return model;
}

/// r_hat_i = 1 + 1 / (global * prod_j f[j][bin(i,j)]); a zero product maps to
/// r_hat = infinity, i.e. the exact Poisson limit.
inline std::vector<double> predict_dispersion(const WidthModel& model, const FeatureMatrix& fm) {
    if (fm.n_features() != model.factors.size())
        throw DataError("predict_dispersion: feature matrix does not match the model layout");
    std::vector<double> r_hat(fm.n_samples, model.global_factor);
    for (std::size_t j = 0; j < fm.n_features(); ++j) {
        const auto& f = model.factors[j];
        const auto& idx = fm.idx[j];
        for (std::size_t i = 0; i < fm.n_samples; ++i) r_hat[i] *= f[idx[i]];
    }
    for (double& pi : r_hat) pi = 1.0 + 1.0 / pi;  // pi == 0 -> inf
    return r_hat;
}

/// Pairs the mean model's predictions with the width model's dispersion into
/// one NBD per sample.
inline std::vector<NegBinDistribution> predict_pdf(const MeanModel& mean_model,
                                                   const WidthModel& width_model,
                                                   const FeatureMatrix& fm) {
    const auto mu = predict_mean(mean_model, fm);
    const auto r_hat = predict_dispersion(width_model, fm);
    std::vector<NegBinDistribution> out(fm.n_samples);
    for (std::size_t i = 0; i < fm.n_samples; ++i)
        out[i] = {mu[i], std::isinf(r_hat[i]) ? 0.0 : 1.0 / r_hat[i]};
    return out;
}

/// Factor breakdown for one sample, sorted by |log factor| descending; the
/// product of the factors (times global_factor) is the r_hat link product.
inline std::vector<FactorContribution> explain_width(const WidthModel& model,
                                                     const FeatureMatrix& fm,
                                                     std::size_t sample) {
    std::vector<FactorContribution> out;
    out.reserve(fm.n_features() + 1);
    if (model.global_factor != 1.0) out.push_back({"global", 0, model.global_factor});
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
