#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace cbdemand {

/// Negative binomial count distribution parameterized by its mean mu and the
/// inverse dispersion inv_r = 1/r, bounded to [0, 1]. inv_r = 0 is an exact
/// Poisson branch, not a numerical limit, so variance == mean holds bit-exactly
/// on that boundary.
///
/// NBD(y; mu, r) = Gamma(r+y) / (y! Gamma(r)) * (r/(r+mu))^r * (mu/(r+mu))^y
/// with variance sigma^2 = mu + mu^2 / r >= mu.
struct NegBinDistribution {
    double mu;     ///< mean demand, > 0
    double inv_r;  ///< inverse dispersion 1/r in [0, 1]; 0 == Poisson

    double variance() const { return mu + mu * mu * inv_r; }
    bool is_poisson() const { return inv_r == 0.0; }
};

struct PoissonDistribution {
    double mu;  ///< mean, > 0; variance equals mean

    NegBinDistribution as_nbd() const { return {mu, 0.0}; }
};

inline void validate(const NegBinDistribution& d) {
    if (!(d.mu > 0.0) || !std::isfinite(d.mu))
        throw std::domain_error("NegBinDistribution: mu must be positive and finite");
    if (!(d.inv_r >= 0.0 && d.inv_r <= 1.0))
        throw std::domain_error("NegBinDistribution: inv_r must lie in [0, 1]");
}

namespace detail {

// lgamma(r + y) - lgamma(r) for integer y >= 0. For small y (or huge r, where
// the direct difference cancels catastrophically) the exact product form
// sum_{k<y} log(r + k) is used instead.
inline double log_gamma_ratio(double r, long long y) {
    if (y == 0) return 0.0;
    if (y <= 64 || r > 1e8) {
        double s = 0.0;
        for (long long k = 0; k < y; ++k) s += std::log(r + static_cast<double>(k));
        return s;
    }
    return std::lgamma(r + static_cast<double>(y)) - std::lgamma(r);
}

}  // namespace detail

/// log PMF, stable for large y and for r up to the Poisson boundary.
inline double nbd_log_pmf(long long y, const NegBinDistribution& d) {
    validate(d);
    if (y < 0) return -std::numeric_limits<double>::infinity();
    const double yd = static_cast<double>(y);
    if (d.is_poisson())
        return -d.mu + yd * std::log(d.mu) - std::lgamma(yd + 1.0);
    const double r = 1.0 / d.inv_r;
    return detail::log_gamma_ratio(r, y) - std::lgamma(yd + 1.0)
           - r * std::log1p(d.mu / r)
           + yd * (std::log(d.mu) - std::log(r + d.mu));
}

inline double nbd_pmf(long long y, const NegBinDistribution& d) {
    if (y < 0) return 0.0;
    return std::exp(nbd_log_pmf(y, d));
}

namespace detail {

// Forward scan over the support using the PMF recurrence
//   pmf(k+1) = pmf(k) * ratio(k),
// which avoids one lgamma trio per term. Falls back to per-term log-space
// evaluation when pmf(0) underflows.
class PmfScan {
public:
    explicit PmfScan(const NegBinDistribution& d) : d_(d) {
        if (d.is_poisson()) {
            log_p0_ = -d.mu;
        } else {
            r_ = 1.0 / d.inv_r;
            q_ = d.mu / (r_ + d.mu);
            log_p0_ = -r_ * std::log1p(d.mu / r_);
        }
        slow_path_ = log_p0_ < -700.0;
        pmf_ = slow_path_ ? 0.0 : std::exp(log_p0_);
        if (slow_path_) pmf_ = std::exp(nbd_log_pmf(0, d_));
    }

    long long k() const { return k_; }
    double pmf() const { return pmf_; }

    void advance() {
        ++k_;
        if (slow_path_) {
            pmf_ = std::exp(nbd_log_pmf(k_, d_));
            return;
        }
        const double kd = static_cast<double>(k_ - 1);
        pmf_ *= d_.is_poisson() ? d_.mu / (kd + 1.0)
                                : (r_ + kd) / (kd + 1.0) * q_;
    }

private:
    NegBinDistribution d_;
    double r_ = 0.0, q_ = 0.0, log_p0_ = 0.0, pmf_ = 0.0;
    long long k_ = 0;
    bool slow_path_ = false;
};

}  // namespace detail

/// CDF(y) = sum_{k=0..y} pmf(k). Defined as 0 for y < 0 so that PIT intervals
/// can use CDF(y-1) uniformly.
inline double nbd_cdf(long long y, const NegBinDistribution& d) {
    validate(d);
    if (y < 0) return 0.0;
    detail::PmfScan scan(d);
    double cum = scan.pmf();
    while (scan.k() < y) {
        scan.advance();
        cum += scan.pmf();
    }
    return cum < 1.0 ? cum : 1.0;
}

/// Generalized inverse CDF: smallest integer x with CDF(x) > q, for q in [0, 1).
inline long long nbd_quantile(double q, const NegBinDistribution& d) {
    validate(d);
    if (!(q >= 0.0 && q < 1.0))
        throw std::domain_error("nbd_quantile: q must lie in [0, 1)");
    detail::PmfScan scan(d);
    double cum = scan.pmf();
    while (cum <= q) {
        scan.advance();
        cum += scan.pmf();
        // Far beyond the mean the partial sum is 1 up to round-off; stop once
        // the terms can no longer move it.
        if (scan.pmf() < 1e-300 && static_cast<double>(scan.k()) > d.mu) break;
    }
    return scan.k();
}

/// sigma^2 = mu + mu^2 * inv_r  (inv_r = 0 gives the Poisson identity).
inline double variance_from_dispersion(double mu, double inv_r) {
    if (!(mu > 0.0)) throw std::domain_error("variance_from_dispersion: mu must be positive");
    if (!(inv_r >= 0.0 && inv_r <= 1.0))
        throw std::domain_error("variance_from_dispersion: inv_r must lie in [0, 1]");
    return mu + mu * mu * inv_r;
}

/// Count of dispersion_from_variance calls that had to clamp sigma^2 < mu
/// (under-dispersion is unrepresentable; round-off from downstream models
/// lands here).
inline std::atomic<std::uint64_t>& underdispersion_clamp_count() {
    static std::atomic<std::uint64_t> n{0};
    return n;
}

/// Inverse of variance_from_dispersion: inv_r = (sigma^2 - mu) / mu^2,
/// clamped into [0, 1].
inline double dispersion_from_variance(double mu, double sigma2) {
    if (!(mu > 0.0)) throw std::domain_error("dispersion_from_variance: mu must be positive");
    if (sigma2 < mu) {
        underdispersion_clamp_count().fetch_add(1, std::memory_order_relaxed);
        return 0.0;
    }
    const double inv_r = (sigma2 - mu) / (mu * mu);
    return inv_r > 1.0 ? 1.0 : inv_r;
}

}  // namespace cbdemand
