#include <doctest.h>

#include "vqcgenlab/bounds.hpp"

using namespace vqcgenlab;
using namespace vqcgenlab::bounds;

namespace {

BoundQuery base_query(int T, double N, double delta = 0.05) {
    BoundQuery q;
    q.T = T;
    q.N = N;
    q.delta = delta;
    return q;
}

}  // namespace

TEST_CASE("covlog_unitary closed form") {
    CHECK(covlog_unitary(1, 1.0) == doctest::Approx(32.0 * std::log(12.0)).epsilon(1e-12));
    CHECK(covlog_unitary(1, 1.0, 1) == doctest::Approx(8.0 * std::log(12.0)).epsilon(1e-12));
    // Superlinearity: doubling T more than doubles the value.
    for (int T : {1, 2, 5, 9}) CHECK(covlog_unitary(2 * T, 0.5) > 2.0 * covlog_unitary(T, 0.5));
    CHECK_THROWS_AS(covlog_unitary(1, 0.0), ValidationError);
    CHECK_THROWS_AS(covlog_unitary(1, 1.5), ValidationError);
}

TEST_CASE("covlog_cptp closed form") {
    CHECK(covlog_cptp(1, 1.0) == doctest::Approx(512.0 * std::log(6.0)).epsilon(1e-12));
    // M_t = 1 reduces exactly to the no-reuse value.
    CHECK(covlog_cptp(3, 0.5, {1, 1, 1}) == doctest::Approx(covlog_cptp(3, 0.5)).epsilon(1e-12));
    // Multiplying every M_t by e adds exactly 512*T.
    const double e = std::exp(1.0);
    CHECK(covlog_cptp(3, 0.5, {2.0 * e, 5.0 * e, 7.0 * e}) ==
          doctest::Approx(covlog_cptp(3, 0.5, {2, 5, 7}) + 512.0 * 3.0).epsilon(1e-10));
}

TEST_CASE("covlog_opt closed form and monotonicity") {
    CHECK(covlog_opt(0, 4, 1.0) == 0.0);
    CHECK(covlog_opt(4, 4, 1.0, {1, 1, 1, 1}, {1024, 1024, 1024, 1024}) ==
          doctest::Approx(4.0 * std::log(4.0) + 4.0 * 1024.0 * std::log(5.0)).epsilon(1e-12));
    double prev = -1.0;
    for (int K = 0; K <= 6; ++K) {
        const double v = covlog_opt(K, 6, 0.25);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK_THROWS_AS(covlog_opt(5, 4, 1.0), ValidationError);
}

TEST_CASE("chaining tail integral matches the corrected closed form") {
    // Corrected antiderivative: I0 = sqrt(ln2)/2 + (sqrt(pi)/2) erfc(sqrt(ln2)).
    const double closed =
        0.5 * std::sqrt(std::log(2.0)) + 0.5 * std::sqrt(PI) * std::erfc(std::sqrt(std::log(2.0)));
    CHECK(chaining_tail_integral() == doctest::Approx(closed).epsilon(1e-10));
    CHECK(chaining_tail_integral() == doctest::Approx(0.628116).epsilon(1e-5));
}

TEST_CASE("gen_bound_fixed asymptotic spot value and scaling") {
    auto q = base_query(8, 800);
    const auto r = gen_bound_fixed(q);
    const double expect = std::sqrt(8.0 * std::log(8.0) / 800.0) + std::sqrt(std::log(20.0) / 800.0);
    CHECK(r.value == doctest::Approx(expect).epsilon(1e-9));
    CHECK(r.value == doctest::Approx(0.2054).epsilon(1e-3));

    // Quadrupling N halves every term exactly.
    auto q4 = q;
    q4.N = 4 * q.N;
    const auto r4 = gen_bound_fixed(q4);
    CHECK(r4.terms.complexity == doctest::Approx(0.5 * r.terms.complexity).epsilon(1e-12));
    CHECK(r4.terms.confidence == doctest::Approx(0.5 * r.terms.confidence).epsilon(1e-12));

    // N -> infinity: monotone decrease to zero.
    double prev = std::numeric_limits<double>::infinity();
    for (double n : {10.0, 100.0, 1e4, 1e6, 1e10}) {
        auto qq = base_query(8, n);
        const double v = gen_bound_fixed(qq).value;
        CHECK(v < prev);
        prev = v;
    }
    CHECK(prev < 1e-3);

    // Preconditions.
    auto bad = base_query(2, 10);
    bad.delta_t = std::vector<double>{0.0, 0.0};
    CHECK_THROWS_AS(gen_bound_fixed(bad), ValidationError);
}

TEST_CASE("gen_bound_fixed proof-exact mode") {
    auto q = base_query(6, 100);
    q.mode = BoundMode::ProofExact;
    const auto r = gen_bound_fixed(q);
    const double expect_complexity = 24.0 / 10.0 * std::sqrt(512.0 * 6.0) *
                                     (0.5 * std::sqrt(std::log(36.0)) + chaining_tail_integral());
    CHECK(r.terms.complexity == doctest::Approx(expect_complexity).epsilon(1e-12));
    CHECK(r.terms.confidence ==
          doctest::Approx(3.0 * std::sqrt(2.0 * std::log(40.0) / 100.0)).epsilon(1e-12));
    CHECK(r.value > 0.0);
}

TEST_CASE("gen_bound_variable structure term") {
    auto q = base_query(4, 100);
    CHECK(gen_bound_variable(q).value == doctest::Approx(gen_bound_fixed(q).value).epsilon(1e-15));

    auto qe = q;
    qe.g_t = std::exp(double(q.T));
    CHECK(gen_bound_variable(qe).value ==
          doctest::Approx(gen_bound_fixed(q).value + std::sqrt(double(q.T) / q.N)).epsilon(1e-12));

    auto qg = base_query(1, 1e4);
    qg.g_t = 1e6;
    CHECK(gen_bound_variable(qg).terms.structure ==
          doctest::Approx(std::sqrt(std::log(1e6) / 1e4)).epsilon(1e-9));
    CHECK(gen_bound_variable(qg).terms.structure == doctest::Approx(0.03717).epsilon(1e-3));
}

TEST_CASE("gen_bound_opt minimization") {
    auto q = base_query(5, 1000);
    q.delta_t = std::vector<double>(5, 0.0);
    const auto r = gen_bound_opt(q);
    CHECK(r.optimal_K == 0);
    CHECK(r.value == doctest::Approx(std::sqrt(std::log(20.0) / 1000.0)).epsilon(1e-12));

    // All Delta = 2, M = 1, large N: residuals dominate, optimal K = T.
    auto q2 = base_query(4, 1e8);
    q2.delta_t = std::vector<double>(4, 2.0);
    const auto r2 = gen_bound_opt(q2);
    // Exhaustive oracle over K.
    int best_k = -1;
    double best_v = std::numeric_limits<double>::infinity();
    for (int K = 0; K <= 4; ++K) {
        const double v = gen_bound_opt_at(q2, K).value;
        if (v < best_v) {
            best_v = v;
            best_k = K;
        }
    }
    CHECK(r2.optimal_K == best_k);
    CHECK(r2.optimal_K == 4);
    CHECK(r2.value == doctest::Approx(best_v).epsilon(1e-15));

    // Minimum over a superset: forced K = T dominates the minimized value.
    CHECK(r2.value <= gen_bound_opt_at(q2, 4).value + 1e-15);

    auto unsorted = base_query(3, 100);
    unsorted.delta_t = std::vector<double>{0.1, 0.5, 0.2};
    CHECK_THROWS_AS(gen_bound_opt(unsorted), ValidationError);
}

TEST_CASE("gen_bound_opt at K = 0 is independent of T when Delta = 0") {
    for (int T : {1, 3, 9, 20}) {
        auto q = base_query(T, 777);
        q.delta_t = std::vector<double>(T, 0.0);
        const auto r = gen_bound_opt_at(q, 0);
        CHECK(r.value == gen_bound_opt_at(base_query(1, 777), 0).value);
    }
}

TEST_CASE("gen_bound_mother composition and shot term") {
    auto q = base_query(6, 500);
    q.delta_t = std::vector<double>{0.4, 0.3, 0.2, 0.1, 0.0, 0.0};
    const auto opt = gen_bound_opt(q);
    const auto mother = gen_bound_mother(q);
    CHECK(mother.value == doctest::Approx(opt.value).epsilon(1e-15));
    CHECK(mother.optimal_K == opt.optimal_K);

    auto qs = q;
    qs.sigma_est = q.N;
    const auto ms = gen_bound_mother(qs);
    CHECK(ms.terms.shot == doctest::Approx(std::sqrt(2.0 * std::log(2.0 / q.delta) / q.N)).epsilon(1e-12));

    // Full query: monotone decreasing in N and sigma_est.
    auto qf = base_query(9, 100);
    qf.m_t = std::vector<double>(9, 16.0);
    qf.delta_t = std::vector<double>(9, 0.0);
    qf.sigma_est = 8192.0;
    const double v0 = gen_bound_mother(qf).value;
    CHECK(std::isfinite(v0));
    auto qn = qf;
    qn.N = 200;
    CHECK(gen_bound_mother(qn).value < v0);
    auto qsig = qf;
    qsig.sigma_est = 16384.0;
    CHECK(gen_bound_mother(qsig).value < v0);
}

TEST_CASE("monotonicity scans over every query axis") {
    auto eval_mother = [](const BoundQuery& q) { return gen_bound_mother(q).value; };
    BoundQuery q0 = base_query(6, 400);
    q0.m_t = std::vector<double>(6, 2.0);
    q0.delta_t = std::vector<double>(6, 0.05);
    q0.g_t = 10.0;
    q0.sigma_est = 1000.0;

    // Decreasing in N and sigma_est.
    double prev = std::numeric_limits<double>::infinity();
    for (double n : {100.0, 200.0, 400.0, 800.0, 1600.0}) {
        auto q = q0;
        q.N = n;
        const double v = eval_mother(q);
        CHECK(v < prev);
        prev = v;
    }
    prev = std::numeric_limits<double>::infinity();
    for (double s : {100.0, 400.0, 1600.0, 6400.0, 25600.0}) {
        auto q = q0;
        q.sigma_est = s;
        const double v = eval_mother(q);
        CHECK(v < prev);
        prev = v;
    }
    // Increasing in T (Delta padded with equal values keeps ordering valid).
    prev = -1.0;
    for (int T : {2, 4, 6, 8, 10}) {
        auto q = q0;
        q.T = T;
        q.m_t = std::vector<double>(T, 2.0);
        q.delta_t = std::vector<double>(T, 0.05);
        const double v = eval_mother(q);
        CHECK(v >= prev);
        prev = v;
    }
    // Increasing in C_loss, 1/delta, M_t, Delta_t, G_T.
    prev = -1.0;
    for (double c : {0.5, 1.0, 2.0, 3.0, 4.0}) {
        auto q = q0;
        q.c_loss = c;
        const double v = eval_mother(q);
        CHECK(v > prev);
        prev = v;
    }
    prev = -1.0;
    for (double d : {0.2, 0.1, 0.05, 0.01, 0.001}) {
        auto q = q0;
        q.delta = d;
        const double v = eval_mother(q);
        CHECK(v > prev);
        prev = v;
    }
    prev = -1.0;
    for (double m : {1.0, 2.0, 4.0, 8.0, 16.0}) {
        auto q = q0;
        q.m_t = std::vector<double>(6, m);
        const double v = eval_mother(q);
        CHECK(v > prev);
        prev = v;
    }
    prev = -1.0;
    for (double d : {0.0, 0.05, 0.1, 0.2, 0.4}) {
        auto q = q0;
        q.delta_t = std::vector<double>(6, d);
        const double v = eval_mother(q);
        CHECK(v > prev);
        prev = v;
    }
    prev = -1.0;
    for (double g : {1.0, 10.0, 100.0, 1e4, 1e8}) {
        auto q = q0;
        q.g_t = g;
        const double v = eval_mother(q);
        CHECK(v > prev);
        prev = v;
    }
    // Fixed-bound scans share the axes without Delta/G/sigma.
    prev = std::numeric_limits<double>::infinity();
    for (double n : {50.0, 100.0, 200.0, 400.0, 800.0}) {
        auto q = base_query(4, n);
        const double v = gen_bound_fixed(q).value;
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("specialization chain under the documented degenerations") {
    // mother(G_T = 1, sigma absent) equals opt exactly.
    for (int T : {1, 3, 7}) {
        auto q = base_query(T, 250);
        q.delta_t = std::vector<double>(T, 0.01);
        CHECK(gen_bound_mother(q).value == doctest::Approx(gen_bound_opt(q).value).epsilon(1e-15));
    }
    // opt forced at K = T with Delta = 0, c_t = 1, M_t = max(T,2) equals the
    // fixed asymptotic bound to 1e-12 (the documented degeneration).
    for (int T : {1, 2, 5, 11}) {
        auto q = base_query(T, 640);
        q.delta_t = std::vector<double>(T, 0.0);
        q.c_t = std::vector<double>(T, 1.0);
        const auto forced = gen_bound_opt_at(q, T);
        auto qf = base_query(T, 640);
        qf.m_t = std::vector<double>(T, std::max<double>(T, 2.0));
        const auto fixed = gen_bound_fixed(qf);
        CHECK(std::abs(forced.value - fixed.value) < 1e-12);
    }
}

TEST_CASE("sample_complexity") {
    auto q = base_query(10, 1, 0.05);
    const auto n = sample_complexity(0.1, q, BoundSelector::Fixed);
    const double remark_scale = 10.0 * std::log(10.0) / (0.1 * 0.1);
    CHECK(double(n) <= 4.0 * remark_scale);
    CHECK(double(n) >= remark_scale / 4.0);

    // Bound already below target at N = 1.
    auto tiny = base_query(1, 1, 0.5);
    CHECK(sample_complexity(1e6, tiny) == 1);

    // Halving eps multiplies N by ~4.
    const auto n1 = sample_complexity(0.05, q);
    const auto n2 = sample_complexity(0.025, q);
    CHECK(double(n2) / double(n1) == doctest::Approx(4.0).epsilon(0.1));

    // Verify minimality: bound(n) <= eps < bound(n-1).
    auto qq = q;
    qq.N = double(n);
    CHECK(gen_bound_fixed(qq).value <= 0.1);
    qq.N = double(n - 1);
    CHECK(gen_bound_fixed(qq).value > 0.1);
}

TEST_CASE("empirical_net_1qubit coverage and cardinality") {
    SeededRng rng(301);
    CHECK_THROWS_AS(empirical_net_1qubit(2.0, 10, rng), ValidationError);

    const auto r1 = empirical_net_1qubit(1.0, 10000, rng);
    CHECK(r1.max_uncovered <= 1.0);
    CHECK(double(r1.net_size) <= std::pow(6.0, 8.0));

    const auto r2 = empirical_net_1qubit(0.5, 4000, rng);
    CHECK(r2.max_uncovered <= 0.5);
    CHECK(double(r2.net_size) <= std::pow(12.0, 8.0));
    CHECK(r2.net_size > r1.net_size);  // finer nets are larger
}
