#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <cbdemand/distributions.hpp>
#include <cbdemand/errors.hpp>

namespace cbdemand {

namespace detail {

// splitmix64 finalizer; the per-sample stream (seed, index) -> uniform draw
// makes every diagnostic independent of iteration order.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline double hashed_uniform(std::uint64_t seed, std::uint64_t index) {
    const std::uint64_t h = mix64(mix64(seed) ^ index);
    return static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
}

}  // namespace detail

/// Randomized probability integral transform for a discrete predictive CDF:
/// places the observation uniformly inside [CDF(y-1), CDF(y)), with
/// CDF(-1) = 0, so calibrated predictions give uniform values on [0, 1).
inline double randomized_pit(const NegBinDistribution& pred, long long y_obs, double draw) {
    const double lo = y_obs == 0 ? 0.0 : nbd_cdf(y_obs - 1, pred);
    const double hi = nbd_cdf(y_obs, pred);
    return lo + draw * (hi - lo);
}

struct PitHistogram {
    int n_bins = 100;
    std::vector<std::int64_t> counts;
    std::int64_t total = 0;
    std::uint64_t seed = 0;

    /// A thin histogram discretizes poorly; below 50 samples per bin the
    /// diagnostics should be read with care.
    bool sample_size_sufficient() const {
        return total >= static_cast<std::int64_t>(50) * n_bins;
    }
};

namespace detail {

inline std::vector<double> pit_values(std::span<const NegBinDistribution> preds,
                                      std::span<const double> observations, std::uint64_t seed) {
    if (preds.size() != observations.size())
        throw DataError("pit: predictions and observations misaligned");
    if (preds.empty()) throw DataError("pit: empty input");
    std::vector<double> u(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i)
        u[i] = randomized_pit(preds[i], std::llround(observations[i]),
                              hashed_uniform(seed, i));
    return u;
}

}  // namespace detail

/// Histogram of randomized PIT values over equal bins of [0, 1]; uniform for
/// calibrated predictions. Deterministic given the seed.
inline PitHistogram pit_histogram(std::span<const NegBinDistribution> preds,
                                  std::span<const double> observations, int n_bins = 100,
                                  std::uint64_t seed = 0) {
    if (n_bins < 2) throw ConfigError("pit_histogram: n_bins must be >= 2");
    PitHistogram hist;
    hist.n_bins = n_bins;
    hist.seed = seed;
    hist.counts.assign(n_bins, 0);
    for (double u : detail::pit_values(preds, observations, seed)) {
        int bin = static_cast<int>(u * n_bins);
        bin = std::clamp(bin, 0, n_bins - 1);
        ++hist.counts[bin];
        ++hist.total;
    }
    return hist;
}

struct QuantileProfile {
    std::vector<double> quantiles;
    std::vector<std::string> groups;                 ///< sorted; empty groups omitted
    std::vector<std::vector<double>> fraction;       ///< [group][quantile]: P(PIT <= q)
    std::vector<std::int64_t> group_count;           ///< samples per group
};

/// Per group g and quantile q: the fraction of samples in g whose randomized
/// PIT value is <= q. Calibrated predictions put every fraction at q.
inline QuantileProfile inverse_quantile_profile(std::span<const NegBinDistribution> preds,
                                                std::span<const double> observations,
                                                std::span<const double> quantiles,
                                                std::span<const std::string> group_values,
                                                std::uint64_t seed = 0) {
    if (group_values.size() != preds.size())
        throw DataError("inverse_quantile_profile: group values misaligned");
    for (std::size_t k = 1; k < quantiles.size(); ++k)
        if (!(quantiles[k] > quantiles[k - 1]))
            throw ConfigError("inverse_quantile_profile: quantiles must be strictly increasing");
    for (double q : quantiles)
        if (!(q > 0.0 && q < 1.0))
            throw ConfigError("inverse_quantile_profile: quantiles must lie in (0, 1)");

    const auto u = detail::pit_values(preds, observations, seed);

    std::map<std::string, std::vector<std::int64_t>> below;  // group -> per-quantile count
    std::map<std::string, std::int64_t> count;
    for (std::size_t i = 0; i < u.size(); ++i) {
        auto& b = below[group_values[i]];
        if (b.empty()) b.assign(quantiles.size(), 0);
        ++count[group_values[i]];
        for (std::size_t k = 0; k < quantiles.size(); ++k)
            if (u[i] <= quantiles[k]) ++b[k];
    }

    QuantileProfile profile;
    profile.quantiles.assign(quantiles.begin(), quantiles.end());
    for (const auto& [group, counts] : below) {
        profile.groups.push_back(group);
        profile.group_count.push_back(count[group]);
        std::vector<double> fractions(quantiles.size());
        for (std::size_t k = 0; k < quantiles.size(); ++k)
            fractions[k] = static_cast<double>(counts[k]) / static_cast<double>(count[group]);
        profile.fraction.push_back(std::move(fractions));
    }
    return profile;
}

/// First Wasserstein distance between the PIT histogram and the uniform
/// histogram over the same N bins, comparing cumulative count fractions bin
/// by bin:
///   EMD = (1/N) * sum_k |cum_P(k) - (k+1)/N|
/// An exactly uniform histogram gives EMD 0, hence accuracy exactly 1.
inline double emd_accuracy(const PitHistogram& hist) {
    if (hist.total <= 0) throw DataError("emd_accuracy: empty histogram");
    const std::int64_t n = hist.n_bins;
    // Integer arithmetic keeps the uniform case at exactly 1:
    // |cum_k/total - (k+1)/n| == |cum_k*n - (k+1)*total| / (total*n)
    std::int64_t cum = 0;
    double emd = 0.0;
    for (std::int64_t k = 0; k < n; ++k) {
        cum += hist.counts[k];
        emd += static_cast<double>(std::abs(cum * n - (k + 1) * hist.total));
    }
    emd /= static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(hist.total);
    return 1.0 - 2.0 * emd;
}

struct PointMetrics {
    double mad = 0.0;
    double mse = 0.0;
};

inline PointMetrics point_metrics(std::span<const double> mu_hat, std::span<const double> y) {
    if (mu_hat.size() != y.size()) throw DataError("point_metrics: misaligned vectors");
    if (mu_hat.empty()) throw DataError("point_metrics: empty input");
    PointMetrics m;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = mu_hat[i] - y[i];
        m.mad += std::abs(d);
        m.mse += d * d;
    }
    m.mad /= static_cast<double>(y.size());
    m.mse /= static_cast<double>(y.size());
    return m;
}

struct ProfileBin {
    double lo = 0.0, hi = 0.0;
    std::int64_t count = 0;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double stddev = std::numeric_limits<double>::quiet_NaN();
};

/// Profile histogram: mean and standard deviation of y within each x bin, the
/// one-dimensional summary of the (x, y) scatter. Empty bins are emitted with
/// count 0 and NaN statistics.
inline std::vector<ProfileBin> profile_histogram(std::span<const double> x,
                                                 std::span<const double> y,
                                                 std::span<const double> edges) {
    if (x.size() != y.size()) throw DataError("profile_histogram: misaligned vectors");
    if (edges.size() < 2) throw ConfigError("profile_histogram: need at least one bin");
    for (std::size_t k = 1; k < edges.size(); ++k)
        if (!(edges[k] > edges[k - 1]))
            throw ConfigError("profile_histogram: edges must be strictly increasing");

    const std::size_t n_bins = edges.size() - 1;
    std::vector<ProfileBin> bins(n_bins);
    std::vector<double> sum(n_bins, 0.0), sum2(n_bins, 0.0);
    for (std::size_t b = 0; b < n_bins; ++b) {
        bins[b].lo = edges[b];
        bins[b].hi = edges[b + 1];
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < edges.front() || x[i] > edges.back()) continue;
        std::size_t b = static_cast<std::size_t>(
            std::upper_bound(edges.begin(), edges.end(), x[i]) - edges.begin());
        b = b == 0 ? 0 : b - 1;
        if (b >= n_bins) b = n_bins - 1;  // x == last edge
        ++bins[b].count;
        sum[b] += y[i];
        sum2[b] += y[i] * y[i];
    }
    for (std::size_t b = 0; b < n_bins; ++b) {
        if (bins[b].count == 0) continue;
        const double nb = static_cast<double>(bins[b].count);
        bins[b].mean = sum[b] / nb;
        const double var = std::max(0.0, sum2[b] / nb - bins[b].mean * bins[b].mean);
        bins[b].stddev = std::sqrt(var);
    }
    return bins;
}

inline std::vector<double> equidistant_edges(double lo, double hi, int n_bins) {
    std::vector<double> edges(n_bins + 1);
    for (int k = 0; k <= n_bins; ++k)
        edges[k] = lo + (hi - lo) * static_cast<double>(k) / n_bins;
    return edges;
}

/// Everything the calibration stage reports for one model variant.
struct CalibrationReport {
    PitHistogram pit;
    double emd_acc = 0.0;  ///< 1 - 2 * EMD, in [0, 1]
    double mad = 0.0;
    double mse = 0.0;
    std::vector<std::pair<std::string, QuantileProfile>> profiles;  ///< (grouping name, profile)
};

}  // namespace cbdemand
