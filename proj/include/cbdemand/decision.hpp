#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include <cbdemand/distributions.hpp>
#include <cbdemand/errors.hpp>

namespace cbdemand {

/// Cost-optimal CDF quantile for linear underage cost b and overage cost h.
inline double newsvendor_quantile(double b, double h) {
    if (!(b > 0.0) || !(h > 0.0))
        throw std::domain_error("newsvendor_quantile: costs must be positive");
    return b / (b + h);
}

struct CostFunction {
    enum class Kind { quadratic, absolute, linear_asymmetric, custom };
    Kind kind = Kind::quadratic;
    double underage = 0.0;  ///< b, cost per unit of unmet demand
    double overage = 0.0;   ///< h, cost per unit of surplus
    std::function<double(long long p, long long t)> evaluate;  ///< custom C(p, t)

    static CostFunction quadratic() { return {Kind::quadratic, 0.0, 0.0, nullptr}; }
    static CostFunction absolute() { return {Kind::absolute, 0.0, 0.0, nullptr}; }
    static CostFunction linear_asymmetric(double b, double h) {
        if (!(b > 0.0) || !(h > 0.0))
            throw std::domain_error("CostFunction: costs must be positive");
        return {Kind::linear_asymmetric, b, h, nullptr};
    }
    static CostFunction custom(std::function<double(long long, long long)> c) {
        return {Kind::custom, 0.0, 0.0, std::move(c)};
    }
};

namespace detail {

// Smallest integer x with CDF(x) >= q, up to a 1e-12 tie tolerance. Where no
// CDF value sits on q this coincides with the generalized inverse (strict >);
// when a CDF step hits q exactly both x and x+1 minimize the linear cost and
// the smaller decision is taken.
inline long long quantile_decision(double q, const NegBinDistribution& d) {
    PmfScan scan(d);
    double cum = scan.pmf();
    const double target = q - 1e-12;
    while (cum < target) {
        scan.advance();
        cum += scan.pmf();
        if (scan.pmf() < 1e-300 && static_cast<double>(scan.k()) > d.mu) break;
    }
    return scan.k();
}

// Support cut for exhaustive scans: everything beyond CDF > 1 - 1e-12 carries
// negligible probability for costs with polynomial growth.
inline std::vector<double> scan_pmf(const NegBinDistribution& d) {
    const long long top = nbd_quantile(1.0 - 1e-12, d);
    std::vector<double> pmf(static_cast<std::size_t>(top) + 1);
    PmfScan scan(d);
    pmf[0] = scan.pmf();
    while (scan.k() < top) {
        scan.advance();
        pmf[scan.k()] = scan.pmf();
    }
    return pmf;
}

}  // namespace detail

/// Optimal point estimate of a predicted count PDF under a cost function:
/// quadratic -> the mean (real-valued), absolute -> the median, linear
/// asymmetric -> the newsvendor quantile b/(b+h), custom -> exhaustive
/// expected-cost scan over the truncated support (smallest minimizer on ties).
/// Quantile-type decisions are integers via the generalized inverse.
inline double optimal_point_estimate(const NegBinDistribution& d, const CostFunction& cost) {
    validate(d);
    switch (cost.kind) {
        case CostFunction::Kind::quadratic:
            return d.mu;
        case CostFunction::Kind::absolute:
            return static_cast<double>(detail::quantile_decision(0.5, d));
        case CostFunction::Kind::linear_asymmetric:
            return static_cast<double>(
                detail::quantile_decision(newsvendor_quantile(cost.underage, cost.overage), d));
        case CostFunction::Kind::custom: {
            if (!cost.evaluate) throw std::domain_error("optimal_point_estimate: no cost given");
            const auto pmf = detail::scan_pmf(d);
            double best = std::numeric_limits<double>::infinity();
            long long best_p = 0;
            for (long long p = 0; p < static_cast<long long>(pmf.size()); ++p) {
                double expected = 0.0;
                for (long long t = 0; t < static_cast<long long>(pmf.size()); ++t)
                    expected += pmf[t] * cost.evaluate(p, t);
                if (!std::isfinite(expected))
                    throw NumericError("optimal_point_estimate: non-finite expected cost");
                if (expected < best) {
                    best = expected;
                    best_p = p;
                }
            }
            return static_cast<double>(best_p);
        }
    }
    throw std::logic_error("optimal_point_estimate: unknown cost kind");
}

}  // namespace cbdemand
