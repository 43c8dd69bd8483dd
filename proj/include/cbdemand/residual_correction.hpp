#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <cbdemand/errors.hpp>

namespace cbdemand {

struct SeriesKey {
    std::string item;
    std::string store;
    auto operator<=>(const SeriesKey&) const = default;
};

/// Running state of a normalized exponentially weighted moving average:
/// value = numerator / denominator with
///   numerator_t = x_t + (1-alpha) * numerator_{t-1}
///   denominator_t = 1 + (1-alpha) * denominator_{t-1}
/// so the weights (1-alpha)^k over the full history sum to the denominator.
struct EwmaState {
    double numerator = 0.0;
    double denominator = 0.0;
    double alpha = 0.15;
    std::int64_t last_t = -1;

    void update(double x, std::int64_t t) {
        if (t <= last_t) throw DataError("EwmaState: updates must move forward in time");
        numerator = x + (1.0 - alpha) * numerator;
        denominator = 1.0 + (1.0 - alpha) * denominator;
        last_t = t;
    }
    bool has_history() const { return denominator > 0.0; }
    double value() const { return numerator / denominator; }
};

/// Normalized EWMA of a time-ordered series (most recent value weighted 1).
inline double ewma(std::span<const double> series, double alpha) {
    if (series.empty()) throw DataError("ewma: empty series");
    EwmaState state;
    state.alpha = alpha;
    for (std::size_t t = 0; t < series.size(); ++t)
        state.update(series[t], static_cast<std::int64_t>(t));
    return state.value();
}

struct CorrectionConfig {
    double alpha = 0.15;
    int lag = 2;
    /// The raw EWMA ratio is clamped into [factor_floor, factor_ceil]; long
    /// all-zero stretches would otherwise drive predictions to 0 for good.
    double factor_floor = 0.05;
    double factor_ceil = 20.0;
};

struct CorrectedSeries {
    std::vector<double> factor;     ///< multiplicative correction per step
    std::vector<double> corrected;  ///< factor * mu_ml, elementwise
};

/// Residual correction for one series: at step t the prediction is scaled by
/// the ratio of the EWMAs of targets and raw predictions over steps <= t-lag.
/// Steps without any usable history (t < lag) and zero-denominator cases use
/// factor exactly 1.
inline CorrectedSeries correct_series(std::span<const double> mu_ml, std::span<const double> y,
                                      const CorrectionConfig& cfg = {}) {
    if (mu_ml.size() != y.size()) throw DataError("correct_series: misaligned series");
    if (cfg.lag < 1) throw ConfigError("correct_series: lag must be >= 1");

    const std::size_t n = mu_ml.size();
    CorrectedSeries out;
    out.factor.resize(n, 1.0);
    out.corrected.resize(n);

    EwmaState ewma_y, ewma_mu;
    ewma_y.alpha = cfg.alpha;
    ewma_mu.alpha = cfg.alpha;

    for (std::size_t t = 0; t < n; ++t) {
        const std::int64_t h = static_cast<std::int64_t>(t) - cfg.lag;
        if (h >= 0) {
            // Fold in the newly available step t-lag before predicting t, so
            // the states cover exactly the history up to t-lag.
            ewma_y.update(y[h], h);
            ewma_mu.update(mu_ml[h], h);
        }
        double factor = 1.0;
        if (ewma_mu.has_history() && ewma_mu.value() > 0.0) {
            factor = ewma_y.value() / ewma_mu.value();
            factor = std::clamp(factor, cfg.factor_floor, cfg.factor_ceil);
        }
        out.factor[t] = factor;
        out.corrected[t] = factor * mu_ml[t];
    }
    return out;
}

/// Grouped form: one independent correction per series key.
inline std::map<SeriesKey, CorrectedSeries> correct(
    const std::map<SeriesKey, std::vector<double>>& mu_ml,
    const std::map<SeriesKey, std::vector<double>>& y, const CorrectionConfig& cfg = {}) {
    std::map<SeriesKey, CorrectedSeries> out;
    for (const auto& [key, preds] : mu_ml) {
        auto it = y.find(key);
        if (it == y.end())
            throw DataError("correct: no target series for item '" + key.item + "', store '" +
                            key.store + "'");
        out[key] = correct_series(preds, it->second, cfg);
    }
    return out;
}

}  // namespace cbdemand
