#pragma once

// Minimal statistics helpers for sampling checks: regularized incomplete
// gamma and the chi-square goodness-of-fit p-value.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "vqcgenlab/common.hpp"

namespace vqcgenlab::stats {

namespace detail {

inline double gamma_series_p(double a, double x) {
    double sum = 1.0 / a, term = sum;
    for (int k = 1; k < 10000; ++k) {
        term *= x / (a + k);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_cf_q(double a, double x) {
    // Lentz continued fraction for Q(a, x).
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x)/Gamma(a).
inline double gamma_q(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw ValidationError("gamma_q: invalid arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_series_p(a, x);
    return detail::gamma_cf_q(a, x);
}

/// Survival function of the chi-square distribution.
inline double chi_square_pvalue(double statistic, int dof) {
    if (dof < 1) throw ValidationError("chi_square_pvalue: dof must be >= 1");
    return gamma_q(0.5 * dof, 0.5 * statistic);
}

/// Chi-square goodness-of-fit p-value of observed counts against expected
/// probabilities; bins with tiny expectation are pooled into the largest bin.
inline double multinomial_gof_pvalue(const std::vector<std::uint64_t>& counts,
                                     const std::vector<double>& probs) {
    if (counts.size() != probs.size() || counts.empty())
        throw ValidationError("multinomial_gof_pvalue: shape mismatch");
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    double stat = 0.0;
    int dof = -1;
    double pooled_obs = 0.0, pooled_exp = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double expect = probs[i] * double(total);
        if (expect < 5.0) {
            pooled_obs += double(counts[i]);
            pooled_exp += expect;
            continue;
        }
        const double diff = double(counts[i]) - expect;
        stat += diff * diff / expect;
        ++dof;
    }
    if (pooled_exp > 0.0) {
        const double diff = pooled_obs - pooled_exp;
        stat += diff * diff / std::max(pooled_exp, 1e-12);
        ++dof;
    }
    if (dof < 1) return 1.0;
    return chi_square_pvalue(stat, dof);
}

}  // namespace vqcgenlab::stats
