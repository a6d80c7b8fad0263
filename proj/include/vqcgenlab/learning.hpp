#pragma once

// Losses, risks, generalization gap, the shot-based risk estimator, and the
// optimizers: SPSA, per-gate environment sweeps, and the VAns annealing loop.

#include <algorithm>
#include <chrono>
#include <functional>
#include <variant>

#include "vqcgenlab/backends.hpp"

namespace vqcgenlab::learning {

using backends::DenseState;
using backends::MPSState;
using circuits::CircuitStructure;
using circuits::GateSlot;
using circuits::ParamAssignment;

// ---------------------------------------------------------------------------
// Data model
// ---------------------------------------------------------------------------

using StateHandle = std::variant<DenseState, MPSState>;

inline int state_n(const StateHandle& s) {
    return std::visit([](const auto& st) { return st.n; }, s);
}

inline DenseState to_dense(const StateHandle& s) {
    if (std::holds_alternative<DenseState>(s)) return std::get<DenseState>(s);
    return backends::mps_to_dense(std::get<MPSState>(s));
}

/// <a|b> for any backend combination.
inline Complex state_overlap(const StateHandle& a, const StateHandle& b) {
    if (std::holds_alternative<MPSState>(a) && std::holds_alternative<MPSState>(b))
        return backends::mps_overlap(std::get<MPSState>(a), std::get<MPSState>(b));
    const DenseState da = to_dense(a);
    const DenseState db = to_dense(b);
    if (da.n != db.n) throw ValidationError("state_overlap: size mismatch");
    return da.amplitudes.dot(db.amplitudes);
}

struct LabeledPair {
    StateHandle input;
    std::variant<std::string, StateHandle> label;  // 2-bit string or target state

    const std::string& label_bits() const {
        if (!std::holds_alternative<std::string>(label))
            throw ValidationError("LabeledPair: expected a bitstring label");
        return std::get<std::string>(label);
    }
    const StateHandle& label_state() const {
        if (!std::holds_alternative<StateHandle>(label))
            throw ValidationError("LabeledPair: expected a state label");
        return std::get<StateHandle>(label);
    }
};

enum class LossKind { QcnnMinProb, CompilingFidelity, CompilingSqTrace };

struct LossSpec {
    LossKind kind = LossKind::CompilingFidelity;
    double c_loss = 1.0;

    static double natural_bound(LossKind k) { return k == LossKind::CompilingSqTrace ? 4.0 : 1.0; }

    static LossSpec make(LossKind k) { return LossSpec{k, natural_bound(k)}; }

    void validate() const {
        if (c_loss < natural_bound(kind))
            throw ValidationError("LossSpec: C_loss below the attainable supremum");
    }
};

struct RiskReport {
    double empirical = 0.0;
    double test_estimate = 0.0;
    double gap = 0.0;  // test_estimate - empirical
};

struct EditLogEntry {
    int proposal = 0;
    std::string move;  // "insert" or "remove"
    bool accepted = false;
    double risk_after = 0.0;
    int gates_after = 0;
};

struct TrainResult {
    CircuitStructure structure;
    ParamAssignment assignment;
    std::vector<double> risk_trace;
    std::vector<EditLogEntry> edit_log;
    std::vector<double> deltas;  // descending diamond distances per group
    std::uint64_t evaluations = 0;
    std::uint64_t wall_ms = 0;
    double final_risk = 0.0;
};

// ---------------------------------------------------------------------------
// Model outputs and losses
// ---------------------------------------------------------------------------

using ModelOutput = std::variant<std::array<double, 4>, StateHandle>;

/// A QMLM instance: either a pure-unitary compiling circuit or a QCNN.
struct Model {
    enum class Kind { Compiling, Qcnn } kind = Kind::Compiling;
    CircuitStructure structure;
    ParamAssignment assignment;
    int chi_max = 100;  // MPS truncation cap during evolution

    StateHandle evolve(const StateHandle& in) const {
        if (std::holds_alternative<DenseState>(in)) {
            DenseState s = std::get<DenseState>(in);
            for (const auto& slot : structure.slots)
                circuits::detail::apply_gate_to_vector(s.amplitudes,
                                                       circuits::slot_matrix(slot, assignment),
                                                       slot.qubits, s.n);
            return s;
        }
        MPSState s = std::get<MPSState>(in);
        for (const auto& slot : structure.slots) {
            const CMat g = circuits::slot_matrix(slot, assignment);
            if (slot.arity() == 2)
                s = backends::mps_apply_two_qubit(s, circuits::UnitaryGate(2, g), slot.qubits, chi_max);
            else
                backends::mps_apply_one_qubit(s, g, slot.qubits[0]);
        }
        return s;
    }

    ModelOutput output_for(const LabeledPair& pair) const {
        if (kind == Kind::Qcnn)
            return backends::qcnn_forward_exact(to_dense(pair.input), structure, assignment);
        return evolve(pair.input);
    }
};

inline double loss_eval(const LossSpec& spec, const ModelOutput& output, const LabeledPair& pair) {
    spec.validate();
    switch (spec.kind) {
        case LossKind::QcnnMinProb: {
            if (!std::holds_alternative<std::array<double, 4>>(output))
                throw ValidationError("loss_eval: qcnn loss needs outcome probabilities");
            const auto& p = std::get<std::array<double, 4>>(output);
            const std::string& y = pair.label_bits();
            if (y.size() != 2 || (y[0] != '0' && y[0] != '1') || (y[1] != '0' && y[1] != '1'))
                throw ValidationError("loss_eval: label must be a 2-bit string");
            const int idx = (y[0] == '1' ? 1 : 0) + (y[1] == '1' ? 2 : 0);
            return p[idx];
        }
        case LossKind::CompilingFidelity:
        case LossKind::CompilingSqTrace: {
            if (!std::holds_alternative<StateHandle>(output))
                throw ValidationError("loss_eval: compiling loss needs an evolved state");
            const double fid = std::norm(state_overlap(pair.label_state(), std::get<StateHandle>(output)));
            const double base = std::max(0.0, 1.0 - fid);
            return spec.kind == LossKind::CompilingFidelity ? base : 4.0 * base;
        }
    }
    throw ValidationError("loss_eval: unknown loss kind");
}

inline double empirical_risk(const std::vector<LabeledPair>& dataset, const Model& model,
                             const LossSpec& spec) {
    if (dataset.empty()) throw ValidationError("empirical_risk: empty dataset");
    double acc = 0.0;
    for (const auto& pair : dataset) acc += loss_eval(spec, model.output_for(pair), pair);
    return acc / double(dataset.size());
}

inline RiskReport gen_gap(const std::vector<LabeledPair>& train, const std::vector<LabeledPair>& test,
                          const Model& model, const LossSpec& spec) {
    RiskReport r;
    r.empirical = empirical_risk(train, model, spec);
    r.test_estimate = empirical_risk(test, model, spec);
    r.gap = r.test_estimate - r.empirical;
    return r;
}

/// Unbiased single-shot estimator of the empirical risk: per draw, pick a
/// training pair uniformly, realize the loss as a Bernoulli with success
/// probability loss/C_loss, record C_loss * outcome.
inline double shot_estimator(const std::vector<LabeledPair>& dataset, const Model& model,
                             const LossSpec& spec, std::uint64_t sigma_est, SeededRng& rng) {
    if (sigma_est < 1) throw ValidationError("shot_estimator: sigma_est must be >= 1");
    if (dataset.empty()) throw ValidationError("shot_estimator: empty dataset");
    std::vector<double> loss(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i)
        loss[i] = loss_eval(spec, model.output_for(dataset[i]), dataset[i]);
    double acc = 0.0;
    for (std::uint64_t s = 0; s < sigma_est; ++s) {
        const std::size_t i = rng.uniform_below(dataset.size());
        if (rng.bernoulli(loss[i] / spec.c_loss)) acc += spec.c_loss;
    }
    return acc / double(sigma_est);
}

/// Least frequent 2-bit outcome; ties resolve to the lexicographically
/// smallest bitstring.
inline std::string min_prob_decode(const std::map<std::string, std::uint64_t>& counts) {
    static const char* keys[4] = {"00", "01", "10", "11"};
    std::uint64_t total = 0;
    for (const auto& [k, v] : counts) total += v;
    if (total < 1) throw ValidationError("min_prob_decode: no counts");
    std::string best;
    std::uint64_t best_count = UINT64_MAX;
    for (const char* k : keys) {
        const auto it = counts.find(k);
        const std::uint64_t c = (it == counts.end()) ? 0 : it->second;
        if (c < best_count) {
            best_count = c;
            best = k;
        }
    }
    return best;
}

/// Per-group diamond distances between two assignments on one structure,
/// sorted descending.
inline std::vector<double> delta_distances(const CircuitStructure& c, const ParamAssignment& a_initial,
                                           const ParamAssignment& a_final) {
    a_initial.validate_for(c);
    a_final.validate_for(c);
    std::vector<double> deltas;
    for (int g : c.trainable_group_ids()) {
        const int arity = c.group_arity(g);
        const CMat u0 = circuits::gate_matrix_from_params(arity, a_initial.at(g));
        const CMat u1 = circuits::gate_matrix_from_params(arity, a_final.at(g));
        deltas.push_back(channels::diamond_distance_unitary(u0, u1));
    }
    std::sort(deltas.begin(), deltas.end(), std::greater<>());
    return deltas;
}

// ---------------------------------------------------------------------------
// SPSA
// ---------------------------------------------------------------------------

struct SpsaConfig {
    double a = 0.2;
    double c = 0.1;
    double big_a = 100.0;
    double alpha = 0.602;
    double gamma = 0.101;
    int iterations = 2000;
    // Shot-frugal schedule: shots multiply by `growth` when the best risk
    // fails to improve by `improve_factor` over `patience` iterations.
    std::uint64_t shots0 = 0;  // 0 = exact evaluation, schedule inactive
    std::uint64_t shots_cap = 1 << 20;
    int growth = 4;
    int patience = 50;
    double improve_factor = 0.01;
    int snapshot_stride = 0;            // 0 = no stride snapshots
    std::vector<int> snapshot_iters;    // explicit extra snapshot iterations
};

struct SpsaResult {
    RVec theta;
    std::vector<double> risk_trace;
    std::vector<std::pair<int, RVec>> snapshots;
    std::uint64_t evaluations = 0;
};

/// Standard SPSA iteration theta_{k+1} = theta_k - a_k g_k with Rademacher
/// perturbations and the shot-frugal schedule from the config.
template <typename RiskFn>
inline SpsaResult spsa_minimize(RiskFn&& risk_fn, const RVec& theta0, const SpsaConfig& cfg,
                                SeededRng& rng) {
    SpsaResult res;
    res.theta = theta0;
    std::uint64_t shots = cfg.shots0;
    double best = std::numeric_limits<double>::infinity();
    double best_at_window_start = best;
    int stall = 0;
    RVec delta(theta0.size());
    for (int k = 0; k < cfg.iterations; ++k) {
        const double ak = cfg.a / std::pow(k + 1.0 + cfg.big_a, cfg.alpha);
        const double ck = cfg.c / std::pow(k + 1.0, cfg.gamma);
        for (Eigen::Index i = 0; i < delta.size(); ++i) delta(i) = rng.rademacher();
        const RVec up = res.theta + ck * delta;
        const RVec dn = res.theta - ck * delta;
        const double fu = risk_fn(up, shots);
        const double fd = risk_fn(dn, shots);
        res.evaluations += 2;
        if (!std::isfinite(fu) || !std::isfinite(fd))
            throw ConvergenceError("spsa_minimize: non-finite risk", std::min(fu, fd));
        const double slope = (fu - fd) / (2.0 * ck);
        for (Eigen::Index i = 0; i < delta.size(); ++i) res.theta(i) -= ak * slope * delta(i);
        const double mid = 0.5 * (fu + fd);
        res.risk_trace.push_back(mid);
        best = std::min(best, mid);
        if (cfg.shots0 > 0 && ++stall >= cfg.patience) {
            if (best > best_at_window_start * (1.0 - cfg.improve_factor))
                shots = std::min<std::uint64_t>(cfg.shots_cap, shots * cfg.growth);
            best_at_window_start = best;
            stall = 0;
        }
        const bool stride_hit = cfg.snapshot_stride > 0 && ((k + 1) % cfg.snapshot_stride == 0);
        const bool listed = std::find(cfg.snapshot_iters.begin(), cfg.snapshot_iters.end(), k + 1) !=
                            cfg.snapshot_iters.end();
        if (stride_hit || listed) res.snapshots.emplace_back(k + 1, res.theta);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Environment sweeps (qFactor-style per-gate continuous optimization)
// ---------------------------------------------------------------------------

enum class SweepObjective {
    PerStateFidelity,  // maximize sum_i |<phi_i|V|psi_i>|^2
    CoherentSum,       // maximize |sum_i <phi_i|V|psi_i>|^2
};

struct SweepConfig {
    int max_sweeps = 100;
    int inner_iters = 40;
    double inner_tol = 1e-13;
    double target_risk = -1.0;  // stop early when the fidelity risk drops below
    double stall_tol = 1e-14;   // stop when a full sweep improves less than this
    SweepObjective objective = SweepObjective::PerStateFidelity;
    LossKind risk_kind = LossKind::CompilingFidelity;
};

struct SweepTrace {
    std::vector<double> risk_per_sweep;
    std::uint64_t gate_updates = 0;
};

namespace detail {

/// Environment matrix E with tr(u^dagger E) = conj(<R| u_slot |L>), i.e. the
/// partial trace of |R><L| over the spectator sites.
inline CMat environment_matrix(const CVec& l, const CVec& r, const std::vector<int>& sites, int n) {
    const int arity = static_cast<int>(sites.size());
    const int ld = 1 << arity;
    CMat e = CMat::Zero(ld, ld);
    const std::size_t dim = std::size_t(1) << n;
    std::size_t site_mask = 0;
    for (int q : sites) site_mask |= std::size_t(1) << q;
    for (std::size_t base = 0; base < dim; ++base) {
        if (base & site_mask) continue;
        std::array<std::size_t, 4> idx{};
        for (int loc = 0; loc < ld; ++loc) {
            std::size_t i = base;
            for (int k = 0; k < arity; ++k)
                if ((loc >> (arity - 1 - k)) & 1) i |= std::size_t(1) << sites[k];
            idx[loc] = i;
        }
        for (int p = 0; p < ld; ++p)
            for (int q = 0; q < ld; ++q) e(p, q) += r(idx[p]) * std::conj(l(idx[q]));
    }
    return e;
}

inline double sweep_objective_value(const std::vector<Complex>& overlaps, SweepObjective obj) {
    if (obj == SweepObjective::PerStateFidelity) {
        double s = 0.0;
        for (const Complex& o : overlaps) s += std::norm(o);
        return s;
    }
    Complex s = 0.0;
    for (const Complex& o : overlaps) s += o;
    return std::norm(s);
}

}  // namespace detail

/// Per-gate optimal updates via the polar factor of the environment matrix.
/// The objective is non-decreasing after every gate update (asserted).
/// Operates on the dense backend; inputs are converted as needed (n <= 12).
inline std::pair<ParamAssignment, SweepTrace> environment_sweep(const CircuitStructure& c,
                                                                const ParamAssignment& a0,
                                                                const std::vector<LabeledPair>& dataset,
                                                                const SweepConfig& cfg = {}) {
    if (c.has_pooling()) throw UnsupportedShapeError("environment_sweep: pooling not supported");
    if (c.n_qubits > 12) throw CapacityError("environment_sweep: n capped at 12");
    if (dataset.empty()) throw ValidationError("environment_sweep: empty dataset");
    for (const auto& s : c.slots)
        if (s.kind == GateSlot::Kind::Trainable && c.use_count(s.group_id) != 1)
            throw UnsupportedShapeError("environment_sweep: shared groups not supported");
    a0.validate_for(c);

    const std::size_t npairs = dataset.size();
    std::vector<CVec> inputs(npairs), targets(npairs);
    for (std::size_t i = 0; i < npairs; ++i) {
        inputs[i] = to_dense(dataset[i].input).amplitudes;
        targets[i] = to_dense(dataset[i].label_state()).amplitudes;
    }

    const std::size_t nslots = c.slots.size();
    std::vector<CMat> gate(nslots);
    for (std::size_t s = 0; s < nslots; ++s) gate[s] = circuits::slot_matrix(c.slots[s], a0);

    SweepTrace trace;
    ParamAssignment a = a0;
    auto risk_of = [&](const std::vector<Complex>& overlaps) {
        double acc = 0.0;
        for (const Complex& o : overlaps) acc += std::max(0.0, 1.0 - std::norm(o));
        acc /= double(npairs);
        return cfg.risk_kind == LossKind::CompilingSqTrace ? 4.0 * acc : acc;
    };

    double prev_risk = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        // Backward stack R[s] = (product of gates after slot s)^dagger target.
        std::vector<std::vector<CVec>> rstack(nslots, std::vector<CVec>(npairs));
        for (std::size_t i = 0; i < npairs; ++i) {
            CVec r = targets[i];
            for (std::size_t s = nslots; s-- > 0;) {
                rstack[s][i] = r;
                if (s > 0)
                    circuits::detail::apply_gate_to_vector(r, CMat(gate[s].adjoint()),
                                                           c.slots[s].qubits, c.n_qubits);
            }
        }
        std::vector<CVec> l = inputs;
        std::vector<Complex> overlaps(npairs);
        for (std::size_t s = 0; s < nslots; ++s) {
            const auto& slot = c.slots[s];
            if (slot.kind == GateSlot::Kind::Trainable) {
                std::vector<CMat> env(npairs);
                for (std::size_t i = 0; i < npairs; ++i)
                    env[i] = detail::environment_matrix(l[i], rstack[s][i], slot.qubits, c.n_qubits);
                const int ld = 1 << slot.arity();
                CMat u = gate[s];
                auto z_of = [&](const CMat& uu) {
                    std::vector<Complex> z(npairs);
                    for (std::size_t i = 0; i < npairs; ++i) z[i] = (uu.adjoint() * env[i]).trace();
                    return z;
                };
                std::vector<Complex> z = z_of(u);
                double obj = detail::sweep_objective_value(z, cfg.objective);
                for (int inner = 0; inner < cfg.inner_iters; ++inner) {
                    CMat f = CMat::Zero(ld, ld);
                    if (cfg.objective == SweepObjective::PerStateFidelity) {
                        for (std::size_t i = 0; i < npairs; ++i) f += std::conj(z[i]) * env[i];
                    } else {
                        Complex zsum = 0.0;
                        for (const Complex& zi : z) zsum += zi;
                        CMat esum = CMat::Zero(ld, ld);
                        for (const CMat& e : env) esum += e;
                        f = std::conj(zsum) * esum;
                    }
                    if (f.cwiseAbs().maxCoeff() < 1e-300) break;
                    const CMat u_new = numkit::polar_unitary(f);
                    const std::vector<Complex> z_new = z_of(u_new);
                    const double obj_new = detail::sweep_objective_value(z_new, cfg.objective);
                    if (obj_new < obj - 1e-9 * std::max(1.0, std::abs(obj)))
                        throw std::logic_error("environment_sweep: objective decreased at a gate update");
                    u = u_new;
                    z = z_new;
                    ++trace.gate_updates;
                    if (obj_new - obj < cfg.inner_tol) {
                        obj = obj_new;
                        break;
                    }
                    obj = obj_new;
                }
                a.params[slot.group_id] = circuits::su_params_up_to_phase(u);
                gate[s] = circuits::gate_matrix_from_params(slot.arity(), a.params[slot.group_id]);
            }
            for (std::size_t i = 0; i < npairs; ++i)
                circuits::detail::apply_gate_to_vector(l[i], gate[s], slot.qubits, c.n_qubits);
        }
        for (std::size_t i = 0; i < npairs; ++i) overlaps[i] = targets[i].dot(l[i]);
        const double risk = risk_of(overlaps);
        trace.risk_per_sweep.push_back(risk);
        if (cfg.target_risk >= 0.0 && risk <= cfg.target_risk) break;
        if (prev_risk - risk < cfg.stall_tol && sweep > 0) break;
        prev_risk = risk;
    }
    return {a, trace};
}

// ---------------------------------------------------------------------------
// VAns: annealed structural search over insert/remove moves
// ---------------------------------------------------------------------------

struct VansConfig {
    int max_proposals = 2000;
    double target_risk = 1e-8;
    double t_anneal0 = 0.05;
    double t_decay = 0.995;
    double lambda0 = 1e-3;
    double lambda_decay = 0.995;
    double p_insert = 0.7;
    double p_kick = 0.0;  // re-randomize one gate's parameters, then sweep
    double kick_scale = 0.5;
    double removal_threshold = 1e-6;
    int max_gates = 256;
    SweepConfig sweep;
    LossSpec loss = LossSpec::make(LossKind::CompilingFidelity);
    CircuitStructure initial_structure;  // default: empty circuit (set n!)
    ParamAssignment initial_assignment;
};

/// Simulated-annealing structure search: propose insert/remove, re-optimize
/// continuous parameters with environment sweeps, accept with probability
/// min(1, exp(-(dR + Lambda*dG)/T)), decay T and Lambda geometrically.
inline TrainResult vans_optimize(const std::vector<LabeledPair>& dataset, const VansConfig& cfg,
                                 SeededRng& rng) {
    const auto t_start = std::chrono::steady_clock::now();
    TrainResult res;
    CircuitStructure cur = cfg.initial_structure;
    ParamAssignment cur_a = cfg.initial_assignment;
    if (cur.n_qubits < 1) throw ValidationError("vans_optimize: initial structure needs n_qubits");

    // Reference parameters per group (value at first appearance) for Delta_t.
    std::map<int, std::vector<double>> references;
    for (int g : cur.trainable_group_ids()) references[g] = cur_a.at(g);

    Model model{Model::Kind::Compiling, cur, cur_a, 1 << 30};
    auto risk_of = [&](const CircuitStructure& c, const ParamAssignment& a) {
        Model m{Model::Kind::Compiling, c, a, 1 << 30};
        ++res.evaluations;
        return empirical_risk(dataset, m, cfg.loss);
    };

    double cur_risk = risk_of(cur, cur_a);
    res.risk_trace.push_back(cur_risk);
    double temp = cfg.t_anneal0;
    double lambda = cfg.lambda0;

    for (int prop = 0; prop < cfg.max_proposals && cur_risk > cfg.target_risk; ++prop) {
        const double move_draw = rng.uniform();
        const bool do_kick = move_draw < cfg.p_kick && !cur.slots.empty();
        const bool do_insert =
            (move_draw < cfg.p_kick + cfg.p_insert && !do_kick) || cur.slots.empty();
        CircuitStructure cand;
        ParamAssignment cand_a;
        std::string move;
        if (do_kick) {
            move = "kick";
            cand = cur;
            cand_a = cur_a;
            const auto groups = cand.trainable_group_ids();
            if (!groups.empty()) {
                const int g = groups[rng.uniform_below(groups.size())];
                for (double& x : cand_a.params[g]) x += cfg.kick_scale * rng.gaussian();
            }
        } else if (do_insert && static_cast<int>(cur.slots.size()) < cfg.max_gates) {
            move = "insert";
            std::tie(cand, cand_a) = circuits::vans_insert(cur, cur_a, rng);
        } else {
            move = "remove";
            std::tie(cand, cand_a) = circuits::vans_remove(
                cur, cur_a, [&](const CircuitStructure& c, const ParamAssignment& a) { return risk_of(c, a); },
                cfg.removal_threshold);
        }
        SweepConfig sweep_cfg = cfg.sweep;
        sweep_cfg.target_risk = cfg.target_risk;
        if (!cand.slots.empty()) {
            auto [swept, trace] = environment_sweep(cand, cand_a, dataset, sweep_cfg);
            cand_a = std::move(swept);
            res.evaluations += trace.gate_updates;
        }
        const double cand_risk = risk_of(cand, cand_a);
        const double d_risk = cand_risk - cur_risk;
        const double d_gates = double(cand.slots.size()) - double(cur.slots.size());
        const double cost = d_risk + lambda * d_gates;
        bool accept;
        if (temp < 1e-12) {
            accept = cost <= 0.0;
        } else {
            accept = rng.uniform() < std::min(1.0, std::exp(-cost / temp));
        }
        if (accept) {
            cur = std::move(cand);
            cur_a = std::move(cand_a);
            cur_risk = cand_risk;
            for (int g : cur.trainable_group_ids())
                if (!references.count(g)) references[g] = std::vector<double>(15, 0.0);
        }
        res.edit_log.push_back({prop, move, accept, cur_risk, static_cast<int>(cur.slots.size())});
        res.risk_trace.push_back(cur_risk);
        temp *= cfg.t_decay;
        lambda *= cfg.lambda_decay;
    }

    res.structure = cur;
    res.assignment = cur_a;
    res.final_risk = cur_risk;
    ParamAssignment ref;
    for (int g : cur.trainable_group_ids()) ref.params[g] = references.at(g);
    res.deltas = delta_distances(cur, ref, cur_a);
    res.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
    return res;
}

/// Gate-count compression on the zero-risk manifold: repeatedly try to drop
/// one trainable slot, re-optimize with sweeps, and keep the removal when the
/// risk recovers below the target. Stops when no single removal survives.
inline std::pair<CircuitStructure, ParamAssignment> shrink_at_target(
    const CircuitStructure& c0, const ParamAssignment& a0, const std::vector<LabeledPair>& dataset,
    double target_risk, const SweepConfig& sweep_cfg, const LossSpec& loss) {
    CircuitStructure cur = c0;
    ParamAssignment cur_a = a0;
    bool changed = true;
    while (changed && !cur.slots.empty()) {
        changed = false;
        for (std::size_t idx = 0; idx < cur.slots.size(); ++idx) {
            if (cur.slots[idx].kind != GateSlot::Kind::Trainable) continue;
            CircuitStructure cand = cur;
            ParamAssignment cand_a = cur_a;
            const int group = cand.slots[idx].group_id;
            cand.slots.erase(cand.slots.begin() + idx);
            bool still_used = false;
            for (const auto& s : cand.slots)
                if (s.kind == GateSlot::Kind::Trainable && s.group_id == group) still_used = true;
            if (!still_used) cand_a.params.erase(group);
            if (!cand.slots.empty()) {
                SweepConfig scfg = sweep_cfg;
                scfg.target_risk = target_risk;
                auto [swept, trace] = environment_sweep(cand, cand_a, dataset, scfg);
                cand_a = std::move(swept);
            }
            Model m{Model::Kind::Compiling, cand, cand_a, 1 << 30};
            const double risk = cand.slots.empty() && dataset.empty()
                                    ? 0.0
                                    : empirical_risk(dataset, m, loss);
            if (risk <= target_risk) {
                cur = std::move(cand);
                cur_a = std::move(cand_a);
                changed = true;
                break;  // restart the scan on the shorter circuit
            }
        }
    }
    return {cur, cur_a};
}

}  // namespace vqcgenlab::learning
