#pragma once

// Covering-number, metric-entropy, generalization-bound, and
// sample-complexity calculators, in both asymptotic (unit-constant) and
// proof-exact-constant modes, plus a small-scale empirical covering-net
// validator for 1-qubit unitaries.
//
// Natural logarithms throughout. ln(max(.,2)) guards keep T = 1 and K = 1
// meaningful where a bare ln would erase the complexity term.

#include <functional>
#include <optional>
#include <vector>

#include "vqcgenlab/numkit.hpp"

namespace vqcgenlab::bounds {

enum class BoundMode { Asymptotic, ProofExact };

struct BoundQuery {
    int T = 0;                  // independently trainable maps
    double N = 1;               // training set size
    double delta = 0.05;        // failure probability
    double c_loss = 1.0;        // loss observable bound
    std::vector<double> m_t;    // per-group use counts; empty = all 1
    std::optional<std::vector<double>> delta_t;  // descending distances in [0,2]
    std::vector<double> c_t;    // per-group net constants; empty = all 1024
    double g_t = 1.0;           // architecture count
    std::optional<double> sigma_est;
    int kappa = 2;
    BoundMode mode = BoundMode::Asymptotic;

    double use_count(int t) const { return m_t.empty() ? 1.0 : m_t.at(t); }
    double max_c() const {
        if (c_t.empty()) return 1024.0;
        double m = 1.0;
        for (double c : c_t) m = std::max(m, c);
        return m;
    }
    double sum_log_m() const {
        double s = 0.0;
        for (int t = 0; t < T; ++t) s += std::log(use_count(t));
        return s;
    }

    void validate() const {
        if (T < 0) throw ValidationError("BoundQuery: T must be >= 0");
        if (N < 1) throw ValidationError("BoundQuery: N must be >= 1");
        if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("BoundQuery: delta in (0,1)");
        if (c_loss <= 0.0) throw ValidationError("BoundQuery: C_loss must be positive");
        if (!m_t.empty() && static_cast<int>(m_t.size()) != T)
            throw ValidationError("BoundQuery: M_t size must equal T");
        for (double m : m_t)
            if (m < 1.0) throw ValidationError("BoundQuery: use counts must be >= 1");
        if (delta_t) {
            if (static_cast<int>(delta_t->size()) != T)
                throw ValidationError("BoundQuery: Delta_t size must equal T");
            for (std::size_t k = 0; k < delta_t->size(); ++k) {
                const double d = (*delta_t)[k];
                if (d < 0.0 || d > 2.0) throw ValidationError("BoundQuery: Delta_t in [0,2]");
                if (k > 0 && d > (*delta_t)[k - 1] + 1e-12)
                    throw ValidationError("BoundQuery: Delta_t must be descending");
            }
        }
        if (!c_t.empty() && static_cast<int>(c_t.size()) != T)
            throw ValidationError("BoundQuery: c_t size must equal T");
        for (double c : c_t)
            if (c < 1.0 || c > 1024.0) throw ValidationError("BoundQuery: c_t in [1,1024]");
        if (g_t < 1.0) throw ValidationError("BoundQuery: G_T must be >= 1");
        if (sigma_est && *sigma_est < 1.0) throw ValidationError("BoundQuery: sigma_est must be >= 1");
        if (kappa < 1) throw ValidationError("BoundQuery: kappa must be >= 1");
    }
};

struct BoundTerms {
    double complexity = 0.0;
    double use_count = 0.0;
    double residual = 0.0;
    double structure = 0.0;
    double confidence = 0.0;
    double shot = 0.0;

    double sum() const { return complexity + use_count + residual + structure + confidence + shot; }
};

struct BoundReport {
    double value = 0.0;
    int optimal_K = 0;
    BoundTerms terms;
};

// ---------------------------------------------------------------------------
// Metric entropies
// ---------------------------------------------------------------------------

/// log covering number of a T-gate unitary QMLM class:
/// 2*2^(2 kappa) * T * ln(12 T / eps).
inline double covlog_unitary(int T, double eps, int kappa = 2) {
    if (T < 1) throw ValidationError("covlog_unitary: T must be >= 1");
    if (!(eps > 0.0 && eps <= 1.0)) throw ValidationError("covlog_unitary: eps in (0,1]");
    return 2.0 * std::pow(2.0, 2 * kappa) * T * std::log(12.0 * T / eps);
}

/// log covering number of a T-gate CPTP QMLM class with reuse:
/// 2*2^(4 kappa) * ( T ln(6T/eps) + sum_t ln M_t ).
inline double covlog_cptp(int T, double eps, const std::vector<double>& m_t = {}, int kappa = 2) {
    if (T < 1) throw ValidationError("covlog_cptp: T must be >= 1");
    if (!(eps > 0.0 && eps <= 1.0)) throw ValidationError("covlog_cptp: eps in (0,1]");
    if (!m_t.empty() && static_cast<int>(m_t.size()) != T)
        throw ValidationError("covlog_cptp: M_t size must equal T");
    double sum_log_m = 0.0;
    for (double m : m_t) {
        if (m < 1.0) throw ValidationError("covlog_cptp: use counts must be >= 1");
        sum_log_m += std::log(m);
    }
    return 2.0 * std::pow(2.0, 4 * kappa) * (T * std::log(6.0 * T / eps) + sum_log_m);
}

/// Optimization-dependent metric entropy at net size K:
/// K ln T + K max_t c_t ln(1 + K max_t M_t / eps).
inline double covlog_opt(int K, int T, double eps, const std::vector<double>& m_t = {},
                         const std::vector<double>& c_t = {}) {
    if (K < 0 || K > T) throw ValidationError("covlog_opt: K must be in [0, T]");
    if (eps <= 0.0) throw ValidationError("covlog_opt: eps must be positive");
    if (K == 0) return 0.0;
    double max_m = 1.0, max_c = 1024.0;
    for (double m : m_t) max_m = std::max(max_m, m);
    if (!c_t.empty()) {
        max_c = 1.0;
        for (double c : c_t) max_c = std::max(max_c, c);
    }
    return K * std::log(double(T)) + K * max_c * std::log(1.0 + K * max_m / eps);
}

// ---------------------------------------------------------------------------
// Proof-exact constants
// ---------------------------------------------------------------------------

/// I0 = integral_0^(1/2) sqrt(ln(1/a)) da, evaluated by adaptive quadrature
/// (the paper's erf closed form carries a sign slip; quadrature gives
/// ~0.6281160). After a = exp(-t^2) the integrand is 2 t^2 exp(-t^2) on
/// [sqrt(ln 2), inf).
inline double chaining_tail_integral() {
    static const double value = [] {
        auto f = [](double t) { return 2.0 * t * t * std::exp(-t * t); };
        std::function<double(double, double, double, double, double, int)> simpson =
            [&](double lo, double hi, double flo, double fhi, double whole, int depth) -> double {
            const double mid = 0.5 * (lo + hi);
            const double fmid = f(mid);
            const double left = (mid - lo) / 6.0 * (flo + 4.0 * f(0.5 * (lo + mid)) + fmid);
            const double right = (hi - mid) / 6.0 * (fmid + 4.0 * f(0.5 * (mid + hi)) + fhi);
            if (depth > 40 || std::abs(left + right - whole) < 1e-13)
                return left + right + (left + right - whole) / 15.0;
            return simpson(lo, mid, flo, fmid, left, depth + 1) +
                   simpson(mid, hi, fmid, fhi, right, depth + 1);
        };
        const double lo = std::sqrt(std::log(2.0)), hi = 9.0;
        const double whole = (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi));
        return simpson(lo, hi, f(lo), f(hi), whole, 0);
    }();
    return value;
}

// ---------------------------------------------------------------------------
// Generalization bounds
// ---------------------------------------------------------------------------

/// Fixed-architecture bound (gate sharing via the use-count term).
/// Preconditions: Delta_t absent, G_T = 1.
inline BoundReport gen_bound_fixed(const BoundQuery& q) {
    q.validate();
    if (q.delta_t) throw ValidationError("gen_bound_fixed: Delta_t must be absent");
    if (q.g_t != 1.0) throw ValidationError("gen_bound_fixed: G_T must be 1");
    BoundReport r;
    r.optimal_K = q.T;
    const double rn = std::sqrt(q.N);
    if (q.mode == BoundMode::Asymptotic) {
        if (q.T > 0)
            r.terms.complexity = q.c_loss * std::sqrt(q.T * std::log(std::max<double>(q.T, 2.0)) / q.N);
        r.terms.use_count = q.c_loss * std::sqrt(q.sum_log_m() / q.N);
        r.terms.confidence = q.c_loss * std::sqrt(std::log(1.0 / q.delta) / q.N);
    } else {
        const double dim_const = 2.0 * std::pow(2.0, 4 * q.kappa);  // 512 at kappa = 2
        if (q.T > 0)
            r.terms.complexity = 24.0 * q.c_loss * std::sqrt(dim_const * q.T) / rn *
                                 (0.5 * std::sqrt(std::log(6.0 * q.T)) + chaining_tail_integral());
        r.terms.use_count = 24.0 * q.c_loss * 0.5 * std::sqrt(dim_const * q.sum_log_m()) / rn;
        r.terms.confidence = 3.0 * q.c_loss * std::sqrt(2.0 * std::log(2.0 / q.delta) / q.N);
    }
    r.value = r.terms.sum();
    return r;
}

/// Variable-structure bound: the fixed bound plus C_loss sqrt(ln G_T / N).
inline BoundReport gen_bound_variable(const BoundQuery& q) {
    q.validate();
    if (q.delta_t) throw ValidationError("gen_bound_variable: Delta_t must be absent");
    BoundQuery base = q;
    base.g_t = 1.0;
    BoundReport r = gen_bound_fixed(base);
    r.terms.structure = q.c_loss * std::sqrt(std::log(q.g_t) / q.N);
    r.value = r.terms.sum();
    return r;
}

namespace detail {

inline BoundTerms opt_terms_at(const BoundQuery& q, int K) {
    BoundTerms t;
    const double max_c = q.max_c();
    if (K > 0) {
        t.complexity =
            q.c_loss * (std::sqrt(K * max_c * std::log(std::max<double>(K, 2.0)) / q.N) +
                        std::sqrt(K * std::log(std::max<double>(q.T, 2.0)) / q.N));
    }
    double resid = 0.0;
    if (q.delta_t)
        for (int k = K; k < q.T; ++k) resid += q.use_count(k) * (*q.delta_t)[k];
    t.residual = q.c_loss * resid;
    t.confidence = q.c_loss * std::sqrt(std::log(1.0 / q.delta) / q.N);
    return t;
}

}  // namespace detail

/// f(K) of the optimization-dependent bound at a forced K (exposed for the
/// specialization-chain checks).
inline BoundReport gen_bound_opt_at(const BoundQuery& q, int K) {
    q.validate();
    if (K < 0 || K > q.T) throw ValidationError("gen_bound_opt_at: K out of range");
    BoundReport r;
    r.optimal_K = K;
    r.terms = detail::opt_terms_at(q, K);
    r.value = r.terms.sum();
    return r;
}

/// Optimization-dependent bound: minimize f(K) over K = 0..T (ties resolve
/// to the smallest K). Preconditions: Delta_t present (descending).
inline BoundReport gen_bound_opt(const BoundQuery& q) {
    q.validate();
    if (!q.delta_t) throw ValidationError("gen_bound_opt: Delta_t must be present");
    BoundReport best;
    bool have = false;
    for (int K = 0; K <= q.T; ++K) {
        BoundReport r = gen_bound_opt_at(q, K);
        if (!have || r.value < best.value - 1e-15) {
            best = r;
            have = true;
        }
    }
    return best;
}

/// Mother bound: optimization-dependent minimization plus structure and
/// (optional) shot terms; Delta_t defaults to the all-zero vector.
inline BoundReport gen_bound_mother(const BoundQuery& q) {
    q.validate();
    BoundQuery base = q;
    if (!base.delta_t) base.delta_t = std::vector<double>(q.T, 0.0);
    BoundReport r = gen_bound_opt(base);
    r.terms.structure = q.c_loss * std::sqrt(std::log(q.g_t) / q.N);
    if (q.sigma_est)
        r.terms.shot = q.c_loss * std::sqrt(2.0 * std::log(2.0 / q.delta) / *q.sigma_est);
    r.value = r.terms.sum();
    return r;
}

enum class BoundSelector { Fixed, Variable, Opt, Mother };

inline BoundReport evaluate_bound(const BoundQuery& q, BoundSelector which) {
    switch (which) {
        case BoundSelector::Fixed: return gen_bound_fixed(q);
        case BoundSelector::Variable: return gen_bound_variable(q);
        case BoundSelector::Opt: return gen_bound_opt(q);
        case BoundSelector::Mother: return gen_bound_mother(q);
    }
    throw ValidationError("evaluate_bound: unknown selector");
}

/// Smallest integer N with bound(N) <= eps_target, by doubling + bisection.
inline std::uint64_t sample_complexity(double eps_target, BoundQuery q,
                                       BoundSelector which = BoundSelector::Fixed) {
    if (eps_target <= 0.0) throw ValidationError("sample_complexity: eps_target must be positive");
    auto value_at = [&](double n) {
        q.N = n;
        return evaluate_bound(q, which).value;
    };
    if (value_at(1.0) <= eps_target) return 1;
    double lo = 1.0, hi = 2.0;
    const double cap = 9.2e18;
    while (value_at(hi) > eps_target) {
        lo = hi;
        hi *= 2.0;
        if (hi > cap)
            throw InfeasibleError("sample_complexity: bound floor exceeds the target (residuals?)");
    }
    while (hi - lo > 1.0) {
        const double mid = std::floor(0.5 * (lo + hi));
        (value_at(mid) <= eps_target ? hi : lo) = mid;
    }
    return static_cast<std::uint64_t>(hi);
}

// ---------------------------------------------------------------------------
// Empirical covering-net validator (1-qubit analogue of the 2-qubit lemma,
// exponent 2*4 = 8)
// ---------------------------------------------------------------------------

struct NetReport {
    std::size_t net_size = 0;
    double max_uncovered = 0.0;
    double cardinality_bound = 0.0;  // (6/eps)^8
};

namespace detail {

/// Spectral norm of the difference of two 2x2 matrices, closed form.
inline double spectral_distance_2x2(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
    const Eigen::Matrix2cd d = a - b;
    const double t = d.squaredNorm();
    const double det2 = std::norm(d.determinant());
    const double disc = std::max(0.0, t * t - 4.0 * det2);
    return std::sqrt(0.5 * (t + std::sqrt(disc)));
}

}  // namespace detail

/// Greedy farthest-point net over Haar samples under spectral distance.
inline NetReport empirical_net_1qubit(double eps, std::size_t sample_count, SeededRng& rng) {
    if (!(eps > 0.0 && eps <= 1.0)) throw ValidationError("empirical_net_1qubit: eps in (0,1]");
    if (sample_count < 1) throw ValidationError("empirical_net_1qubit: need samples");
    std::vector<Eigen::Matrix2cd> samples(sample_count);
    for (auto& u : samples) u = numkit::haar_unitary(2, rng);

    std::vector<std::size_t> net = {0};
    std::vector<double> dist(sample_count, std::numeric_limits<double>::infinity());
    auto update = [&](std::size_t center) {
        for (std::size_t i = 0; i < sample_count; ++i)
            dist[i] = std::min(dist[i], detail::spectral_distance_2x2(samples[i], samples[center]));
    };
    update(0);
    while (true) {
        std::size_t far = 0;
        for (std::size_t i = 1; i < sample_count; ++i)
            if (dist[i] > dist[far]) far = i;
        if (dist[far] <= eps) break;
        net.push_back(far);
        update(far);
    }
    double max_unc = 0.0;
    for (double d : dist) max_unc = std::max(max_unc, d);
    return {net.size(), max_unc, std::pow(6.0 / eps, 8.0)};
}

}  // namespace vqcgenlab::bounds
