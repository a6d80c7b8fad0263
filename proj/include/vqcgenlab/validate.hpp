#pragma once

// Runtime validation suites: every module's key invariants re-checked from a
// fresh process (diamond lemmas, MPS-dense oracles, estimator unbiasedness,
// bound monotonicity, net coverage, ...). The CLI `validate` command runs the
// registry and exits 0 iff every suite passes.

#include <functional>
#include <sstream>

#include "vqcgenlab/bounds.hpp"
#include "vqcgenlab/learning.hpp"
#include "vqcgenlab/stats.hpp"

namespace vqcgenlab::validate {

struct SuiteResult {
    std::string name;
    bool pass = true;
    int cases = 0;
    std::string counterexample;  // empty when passing
    std::uint64_t wall_ms = 0;
};

struct SuiteContext {
    std::uint64_t seed = 20240917ULL;
    // Injectable hook for the mutation-test harness: the diamond-lemma suite
    // computes the unitary diamond distance through this function.
    std::function<double(const channels::UnitaryGate&, const channels::UnitaryGate&)> diamond_fn =
        [](const channels::UnitaryGate& u, const channels::UnitaryGate& v) {
            return channels::diamond_distance_unitary(u, v);
        };
};

using SuiteFn = std::function<SuiteResult(const SuiteContext&)>;

namespace detail {

inline channels::UnitaryGate random_gate(int arity, SeededRng& rng) {
    return channels::UnitaryGate(arity, numkit::haar_unitary(1 << arity, rng));
}

template <typename Body>
SuiteResult run_suite(const std::string& name, Body&& body) {
    SuiteResult res;
    res.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(res);
    } catch (const std::exception& e) {
        res.pass = false;
        if (res.counterexample.empty()) res.counterexample = std::string("exception: ") + e.what();
    }
    res.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    return res;
}

inline void fail(SuiteResult& res, const std::string& what) {
    if (res.pass) res.counterexample = what;
    res.pass = false;
}

}  // namespace detail

inline std::vector<std::pair<std::string, SuiteFn>> suite_registry() {
    using detail::fail;
    using detail::random_gate;
    using detail::run_suite;
    std::vector<std::pair<std::string, SuiteFn>> suites;

    suites.emplace_back("polar_unitary_optimality", [](const SuiteContext& ctx) {
        return run_suite("polar_unitary_optimality", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x01);
            for (int t = 0; t < 300; ++t) {
                CMat m(4, 4);
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 4; ++j) m(i, j) = rng.complex_gaussian();
                const CMat u = numkit::polar_unitary(m);
                ++res.cases;
                if (numkit::unitarity_defect(u) > 1e-12) fail(res, "polar factor not unitary");
                const CMat probe = numkit::haar_unitary(4, rng);
                if ((probe.adjoint() * m).trace().real() >
                    (u.adjoint() * m).trace().real() + 1e-9)
                    fail(res, "polar factor not optimal");
            }
        });
    });

    suites.emplace_back("lanczos_vs_dense", [](const SuiteContext& ctx) {
        return run_suite("lanczos_vs_dense", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x02);
            for (int dim : {16, 64, 128}) {
                const CMat h = numkit::random_hermitian(dim, rng);
                auto [e, v] = numkit::lanczos_ground(h, 1e-10);
                Eigen::SelfAdjointEigenSolver<CMat> es(h, Eigen::EigenvaluesOnly);
                ++res.cases;
                if (std::abs(e - es.eigenvalues()(0)) > 1e-9)
                    fail(res, "lanczos energy off at dim " + std::to_string(dim));
            }
        });
    });

    suites.emplace_back("expm_inverse_roundtrip", [](const SuiteContext& ctx) {
        return run_suite("expm_inverse_roundtrip", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x03);
            for (int t = 0; t < 100; ++t) {
                const CMat h = numkit::random_hermitian(4, rng);
                const CMat prod = numkit::expm_hermitian(h, 0.9) * numkit::expm_hermitian(h, -0.9);
                ++res.cases;
                if ((prod - CMat::Identity(4, 4)).cwiseAbs().maxCoeff() > 1e-10)
                    fail(res, "expm(h,s) expm(h,-s) != I");
            }
        });
    });

    suites.emplace_back("haar_moments", [](const SuiteContext& ctx) {
        return run_suite("haar_moments", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x04);
            const int samples = 20000;
            double p00 = 0.0, tr2 = 0.0;
            for (int s = 0; s < samples; ++s) {
                p00 += std::norm(numkit::haar_unitary(2, rng)(0, 0));
                tr2 += std::norm(numkit::haar_unitary(4, rng).trace());
            }
            res.cases = samples;
            if (std::abs(p00 / samples - 0.5) > 0.02) fail(res, "<|U00|^2> off for d=2");
            if (std::abs(tr2 / samples - 1.0) > 0.1) fail(res, "<|tr U|^2> off for d=4");
        });
    });

    suites.emplace_back("diamond_lemma3", [](const SuiteContext& ctx) {
        return run_suite("diamond_lemma3", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x05);
            for (int t = 0; t < 1000; ++t) {
                const int arity = (t % 2) + 1;
                const auto u = random_gate(arity, rng);
                const auto v = random_gate(arity, rng);
                ++res.cases;
                const double dd = ctx.diamond_fn(u, v);
                if (0.5 * dd > channels::spectral_distance(u, v) + 1e-9) {
                    std::ostringstream os;
                    os << "lemma3 violated: diamond/2=" << 0.5 * dd
                       << " spectral=" << channels::spectral_distance(u, v);
                    fail(res, os.str());
                }
            }
        });
    });

    suites.emplace_back("diamond_subadditivity", [](const SuiteContext& ctx) {
        return run_suite("diamond_subadditivity", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x06);
            for (int t = 0; t < 1000; ++t) {
                const int d = (t % 2) ? 2 : 4;
                const CMat a = numkit::haar_unitary(d, rng), b = numkit::haar_unitary(d, rng);
                const CMat c = numkit::haar_unitary(d, rng), e = numkit::haar_unitary(d, rng);
                ++res.cases;
                const double lhs = channels::diamond_distance_unitary(CMat(a * b), CMat(c * e));
                const double rhs = channels::diamond_distance_unitary(a, c) +
                                   channels::diamond_distance_unitary(b, e);
                if (lhs > rhs + 1e-9) fail(res, "subadditivity violated");
            }
        });
    });

    suites.emplace_back("diamond_bracket_unitary", [](const SuiteContext& ctx) {
        return run_suite("diamond_bracket_unitary", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x07);
            for (int t = 0; t < 12; ++t) {
                const int arity = (t % 2) + 1;
                const auto u = random_gate(arity, rng);
                const auto v = random_gate(arity, rng);
                const double exact = channels::diamond_distance_unitary(u, v);
                const auto br = channels::diamond_bracket(channels::KrausChannel::from_unitary(u),
                                                          channels::KrausChannel::from_unitary(v),
                                                          16, 150, 1e-9, ctx.seed + t);
                ++res.cases;
                if (br.lo > exact + 1e-7 || exact > br.hi + 1e-9)
                    fail(res, "bracket does not bracket the exact value");
                if (std::abs(br.lo - exact) > 1e-5) fail(res, "ascent missed the exact value");
            }
        });
    });

    suites.emplace_back("mps_dense_overlap", [](const SuiteContext& ctx) {
        return run_suite("mps_dense_overlap", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x08);
            for (int t = 0; t < 20; ++t) {
                const int n = 4 + static_cast<int>(rng.uniform_below(5));
                backends::MPSState ms = backends::mps_from_basis(n, 0);
                backends::DenseState ds = backends::DenseState::zero_state(n);
                for (int step = 0; step < 10; ++step) {
                    const auto g = random_gate(2, rng);
                    const int a = static_cast<int>(rng.uniform_below(n));
                    int b = static_cast<int>(rng.uniform_below(n - 1));
                    if (b >= a) ++b;
                    ms = backends::mps_apply_two_qubit(ms, g, {a, b}, 1 << 30);
                    ds = backends::dense_apply_gate(ds, g, {a, b});
                }
                ++res.cases;
                const auto as_mps = backends::mps_from_dense(ds);
                if (std::abs(std::abs(backends::mps_overlap(ms, as_mps)) - 1.0) > 1e-8)
                    fail(res, "MPS and dense evolution disagree");
            }
        });
    });

    suites.emplace_back("mps_truncation", [](const SuiteContext& ctx) {
        return run_suite("mps_truncation", [&](SuiteResult& res) {
            using namespace backends;
            MPSState s = mps_from_basis(2, 0);
            s = mps_apply_two_qubit(
                s, channels::UnitaryGate(2, kron(circuits::gates::hadamard(), CMat::Identity(2, 2))),
                {0, 1}, 1 << 30);
            s = mps_apply_two_qubit(s, channels::UnitaryGate(2, circuits::gates::cnot()), {0, 1}, 1);
            res.cases = 1;
            if (std::abs(s.trunc_err - 0.5) > 1e-10) fail(res, "Bell truncation weight != 0.5");
            SeededRng rng(ctx.seed ^ 0x09);
            MPSState t = mps_random(6, 2, rng);
            double prev = t.trunc_err;
            for (int step = 0; step < 8; ++step) {
                const auto g = detail::random_gate(2, rng);
                t = mps_apply_two_qubit(t, g, {step % 5, step % 5 + 1}, 2);
                ++res.cases;
                if (t.trunc_err + 1e-15 < prev) fail(res, "trunc_err decreased");
                prev = t.trunc_err;
            }
        });
    });

    suites.emplace_back("perfect_sampling_chisq", [](const SuiteContext& ctx) {
        return run_suite("perfect_sampling_chisq", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x0a);
            const auto s = backends::mps_random(5, 4, rng);
            const CVec dense = backends::mps_to_dense_vec(s);
            const int draws = 200000;
            std::vector<std::uint64_t> obs(32, 0);
            for (int d = 0; d < draws; ++d) {
                SeededRng srng = rng.split(d);
                auto [bits, rest] = backends::mps_sample_perfect(s, {0, 1, 2, 3, 4}, srng);
                std::size_t idx = 0;
                for (int q = 0; q < 5; ++q)
                    if (bits[q] == '1') idx |= std::size_t(1) << q;
                ++obs[idx];
            }
            std::vector<double> probs(32);
            for (int i = 0; i < 32; ++i) probs[i] = std::norm(dense(i));
            res.cases = draws;
            if (stats::multinomial_gof_pvalue(obs, probs) <= 0.001)
                fail(res, "chi-square rejected perfect sampling");
        });
    });

    suites.emplace_back("estimator_unbiased", [](const SuiteContext& ctx) {
        return run_suite("estimator_unbiased", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x0b);
            const auto qft = circuits::build_qft(2);
            const CMat u = circuits::unitary_of(qft, circuits::identity_params(qft));
            std::vector<learning::LabeledPair> data;
            for (int k = 0; k < 6; ++k) {
                const CMat h = numkit::haar_unitary(4, rng);
                backends::DenseState in(2, h.col(0));
                backends::DenseState target(2, u * in.amplitudes);
                data.push_back({in, learning::StateHandle(std::move(target))});
            }
            learning::Model m{learning::Model::Kind::Compiling,
                              circuits::CircuitStructure{2, {}, {}},
                              circuits::ParamAssignment{},
                              1 << 30};
            const auto spec = learning::LossSpec::make(learning::LossKind::CompilingFidelity);
            const double exact = learning::empirical_risk(data, m, spec);
            const int reps = 200;
            const std::uint64_t sigma = 10000;
            double mean = 0.0;
            for (int r = 0; r < reps; ++r)
                mean += learning::shot_estimator(data, m, spec, sigma, rng);
            mean /= reps;
            res.cases = reps;
            const double se = 0.5 / std::sqrt(double(reps) * double(sigma));
            if (std::abs(mean - exact) > 4.0 * se + 1e-3) fail(res, "estimator mean off");
        });
    });

    suites.emplace_back("bound_monotonicity", [](const SuiteContext&) {
        return run_suite("bound_monotonicity", [&](SuiteResult& res) {
            bounds::BoundQuery q0;
            q0.T = 5;
            q0.N = 300;
            q0.m_t = std::vector<double>(5, 2.0);
            q0.delta_t = std::vector<double>(5, 0.05);
            q0.g_t = 8.0;
            q0.sigma_est = 2048.0;
            double prev = std::numeric_limits<double>::infinity();
            for (double n : {100.0, 200.0, 400.0, 800.0, 1600.0}) {
                auto q = q0;
                q.N = n;
                const double v = bounds::gen_bound_mother(q).value;
                ++res.cases;
                if (v >= prev) fail(res, "not decreasing in N");
                prev = v;
            }
            prev = -1.0;
            for (double d : {0.0, 0.05, 0.1, 0.2, 0.4}) {
                auto q = q0;
                q.delta_t = std::vector<double>(5, d);
                const double v = bounds::gen_bound_mother(q).value;
                ++res.cases;
                if (v <= prev) fail(res, "not increasing in Delta_t");
                prev = v;
            }
            prev = -1.0;
            for (double g : {1.0, 4.0, 16.0, 256.0, 65536.0}) {
                auto q = q0;
                q.g_t = g;
                const double v = bounds::gen_bound_mother(q).value;
                ++res.cases;
                if (v <= prev) fail(res, "not increasing in G_T");
                prev = v;
            }
        });
    });

    suites.emplace_back("specialization_chain", [](const SuiteContext&) {
        return run_suite("specialization_chain", [&](SuiteResult& res) {
            for (int T : {1, 3, 8}) {
                bounds::BoundQuery q;
                q.T = T;
                q.N = 512;
                q.delta_t = std::vector<double>(T, 0.01);
                ++res.cases;
                if (std::abs(bounds::gen_bound_mother(q).value - bounds::gen_bound_opt(q).value) >
                    1e-12)
                    fail(res, "mother != opt at G=1, sigma absent");
                bounds::BoundQuery qo;
                qo.T = T;
                qo.N = 512;
                qo.delta_t = std::vector<double>(T, 0.0);
                qo.c_t = std::vector<double>(T, 1.0);
                bounds::BoundQuery qf;
                qf.T = T;
                qf.N = 512;
                qf.m_t = std::vector<double>(T, std::max<double>(T, 2.0));
                ++res.cases;
                if (std::abs(bounds::gen_bound_opt_at(qo, T).value -
                             bounds::gen_bound_fixed(qf).value) > 1e-12)
                    fail(res, "opt(K=T, Delta=0) != fixed under the degeneration");
            }
        });
    });

    suites.emplace_back("net_coverage", [](const SuiteContext& ctx) {
        return run_suite("net_coverage", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x0c);
            const auto r = bounds::empirical_net_1qubit(0.5, 3000, rng);
            res.cases = 3000;
            if (r.max_uncovered > 0.5) fail(res, "net does not cover at eps");
            if (double(r.net_size) > std::pow(12.0, 8.0)) fail(res, "net larger than the bound");
        });
    });

    suites.emplace_back("circuit_json_roundtrip", [](const SuiteContext& ctx) {
        return run_suite("circuit_json_roundtrip", [&](SuiteResult& res) {
            SeededRng rng(ctx.seed ^ 0x0d);
            for (int t = 0; t < 10; ++t) {
                circuits::CircuitStructure c;
                c.n_qubits = 2 + static_cast<int>(rng.uniform_below(3));
                for (int s = 0; s < 4; ++s) {
                    const int q1 = static_cast<int>(rng.uniform_below(c.n_qubits));
                    int q2 = static_cast<int>(rng.uniform_below(c.n_qubits - 1));
                    if (q2 >= q1) ++q2;
                    c.slots.push_back(circuits::GateSlot::trainable(s, {q1, q2}, s));
                }
                circuits::ParamAssignment a;
                for (int g : c.trainable_group_ids()) {
                    a.params[g].resize(15);
                    for (auto& x : a.params[g]) x = rng.gaussian();
                }
                const std::string ser = circuits::circuit_to_json(c, a);
                auto [cc, aa] = circuits::circuit_from_json(ser);
                ++res.cases;
                if (circuits::circuit_to_json(cc, aa) != ser) fail(res, "roundtrip not byte-stable");
            }
        });
    });

    suites.emplace_back("sweep_monotonicity", [](const SuiteContext& ctx) {
        return run_suite("sweep_monotonicity", [&](SuiteResult& res) {
            // The sweep itself asserts per-update monotonicity; a run that
            // completes without throwing is the check.
            SeededRng rng(ctx.seed ^ 0x0e);
            const auto qft = circuits::build_qft(3);
            auto [c, a0] = circuits::trainablize(qft, circuits::identity_params(qft));
            const CMat u = circuits::unitary_of(qft, circuits::identity_params(qft));
            auto a = circuits::perturb_near_solution(c, a0, 0.5, rng);
            std::vector<learning::LabeledPair> data;
            for (int i = 0; i < 4; ++i) {
                const CMat h = numkit::haar_unitary(8, rng);
                backends::DenseState in(3, h.col(0));
                backends::DenseState target(3, u * in.amplitudes);
                data.push_back({in, learning::StateHandle(std::move(target))});
            }
            learning::SweepConfig cfg;
            cfg.max_sweeps = 60;
            auto [af, trace] = learning::environment_sweep(c, a, data, cfg);
            res.cases = static_cast<int>(trace.gate_updates);
            if (trace.risk_per_sweep.back() > trace.risk_per_sweep.front() + 1e-12)
                fail(res, "sweep increased the risk overall");
        });
    });

    return suites;
}

struct ValidateReport {
    std::vector<SuiteResult> results;
    bool all_pass = true;
};

inline ValidateReport run_validate(const SuiteContext& ctx = {}) {
    ValidateReport report;
    for (const auto& [name, fn] : suite_registry()) {
        report.results.push_back(fn(ctx));
        if (!report.results.back().pass) report.all_pass = false;
    }
    return report;
}

}  // namespace vqcgenlab::validate
