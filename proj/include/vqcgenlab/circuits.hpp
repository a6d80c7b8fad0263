#pragma once

// Parameterized circuit structures alpha = (theta, k): gate slots with shared
// parameter groups, builders for QFT and QCNN, structural edit moves for
// variable-ansatz search, and JSON persistence.
//
// Conventions used throughout:
//  - Basis index i carries the bit of site q at (i >> q) & 1 (site 0 = LSB).
//  - A 2-qubit gate matrix on sites (a, b) is indexed by the local basis
//    |q_a q_b>, i.e. local index = 2*bit_a + bit_b; "A tensor B" therefore
//    means A acting on the first listed site.
//  - Slots apply in slot order: slot 0 acts first.

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqcgenlab/channels.hpp"
#include "vqcgenlab/numkit.hpp"

namespace vqcgenlab::circuits {

using channels::UnitaryGate;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct GateSlot {
    enum class Kind { Fixed, Trainable };

    int slot_id = 0;
    std::vector<int> qubits;  // 1 or 2 distinct site indices
    Kind kind = Kind::Fixed;
    CMat fixed_matrix;  // Fixed slots only
    int group_id = -1;  // Trainable slots only

    int arity() const { return static_cast<int>(qubits.size()); }

    static GateSlot fixed(int id, std::vector<int> sites, CMat m) {
        GateSlot s;
        s.slot_id = id;
        s.qubits = std::move(sites);
        s.kind = Kind::Fixed;
        s.fixed_matrix = std::move(m);
        return s;
    }
    static GateSlot trainable(int id, std::vector<int> sites, int group) {
        GateSlot s;
        s.slot_id = id;
        s.qubits = std::move(sites);
        s.kind = Kind::Trainable;
        s.group_id = group;
        return s;
    }
};

/// One pooling layer: applied after `after_slot` slots, measures the listed
/// sites (current-layer labels) and applies an outcome-conditioned trainable
/// 1-qubit group to each measured site's left neighbor.
struct PoolingLayer {
    int after_slot = 0;
    std::vector<int> measured_sites;
    int cond_group[2] = {-1, -1};  // group applied on outcome 0 / 1
};

struct CircuitStructure {
    int n_qubits = 0;
    std::vector<GateSlot> slots;
    std::vector<PoolingLayer> pooling;

    bool has_pooling() const { return !pooling.empty(); }

    std::vector<int> trainable_group_ids() const {
        std::set<int> ids;
        for (const auto& s : slots)
            if (s.kind == GateSlot::Kind::Trainable) ids.insert(s.group_id);
        for (const auto& p : pooling) {
            ids.insert(p.cond_group[0]);
            ids.insert(p.cond_group[1]);
        }
        return {ids.begin(), ids.end()};
    }

    /// Number of independently trainable groups (the T of the bounds).
    int T() const { return static_cast<int>(trainable_group_ids().size()); }

    /// Use count M_t of a group: slot placements plus conditioned pooling
    /// placements (one per measured site in the layer that lists it).
    int use_count(int group) const {
        int m = 0;
        for (const auto& s : slots)
            if (s.kind == GateSlot::Kind::Trainable && s.group_id == group) ++m;
        for (const auto& p : pooling)
            for (int o = 0; o < 2; ++o)
                if (p.cond_group[o] == group) m += static_cast<int>(p.measured_sites.size());
        return m;
    }

    /// 1 or 2; pooling-conditioned groups are 1-qubit.
    int group_arity(int group) const {
        for (const auto& s : slots)
            if (s.kind == GateSlot::Kind::Trainable && s.group_id == group)
                return s.arity();
        for (const auto& p : pooling)
            if (p.cond_group[0] == group || p.cond_group[1] == group) return 1;
        throw ValidationError("group_arity: unknown group id");
    }

    int fresh_group_id() const {
        int mx = -1;
        for (int g : trainable_group_ids()) mx = std::max(mx, g);
        return mx + 1;
    }

    void validate() const {
        if (n_qubits < 1) throw ValidationError("CircuitStructure: n_qubits must be positive");
        for (const auto& s : slots) {
            if (s.qubits.empty() || s.qubits.size() > 2)
                throw ValidationError("GateSlot: needs 1 or 2 sites");
            std::set<int> uniq(s.qubits.begin(), s.qubits.end());
            if (uniq.size() != s.qubits.size())
                throw ValidationError("GateSlot: site indices must be distinct");
            for (int q : s.qubits)
                if (q < 0 || q >= n_qubits) throw ValidationError("GateSlot: site out of range");
            if (s.kind == GateSlot::Kind::Fixed) {
                const int d = 1 << s.arity();
                if (s.fixed_matrix.rows() != d || s.fixed_matrix.cols() != d)
                    throw ValidationError("GateSlot: fixed matrix dimension mismatch");
            } else if (s.group_id < 0) {
                throw ValidationError("GateSlot: trainable slot needs a group id");
            }
        }
    }
};

/// Continuous parameters theta: 15 reals per 2-qubit group, 3 per 1-qubit.
struct ParamAssignment {
    std::map<int, std::vector<double>> params;

    const std::vector<double>& at(int group) const {
        auto it = params.find(group);
        if (it == params.end()) throw ValidationError("ParamAssignment: missing group");
        return it->second;
    }

    void validate_for(const CircuitStructure& c) const {
        const auto ids = c.trainable_group_ids();
        if (ids.size() != params.size())
            throw ValidationError("ParamAssignment: group set does not match structure");
        for (int g : ids) {
            const auto& th = at(g);
            const std::size_t want = (c.group_arity(g) == 2) ? 15 : 3;
            if (th.size() != want)
                throw ValidationError("ParamAssignment: wrong parameter count for group");
        }
    }
};

// ---------------------------------------------------------------------------
// Gate parametrization: exp(i sum_k theta_k G_k) over the Pauli products.
// Order of the 15 two-qubit generators: (a, b) over {I,X,Y,Z}^2 minus (I,I),
// ascending in a*4+b, with matrix pauli(a) tensor pauli(b) (a on the first
// site). The 3 one-qubit generators are X, Y, Z.
// ---------------------------------------------------------------------------

inline const std::vector<CMat>& su4_generators() {
    static const std::vector<CMat> gens = [] {
        std::vector<CMat> g;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                if (a != 0 || b != 0) g.push_back(kron(pauli(a), pauli(b)));
        return g;
    }();
    return gens;
}

inline CMat su2_from_params(const std::vector<double>& theta) {
    if (theta.size() != 3) throw ValidationError("su2_from_params: expected 3 parameters");
    CMat h = CMat::Zero(2, 2);
    for (int k = 0; k < 3; ++k) h += theta[k] * pauli(k + 1);
    return numkit::expm_hermitian(h, 1.0);
}

inline UnitaryGate su4_from_params(const std::vector<double>& theta) {
    if (theta.size() != 15) throw ValidationError("su4_from_params: expected 15 parameters");
    for (double t : theta)
        if (!std::isfinite(t)) throw ValidationError("su4_from_params: parameters must be finite");
    CMat h = CMat::Zero(4, 4);
    const auto& gens = su4_generators();
    for (int k = 0; k < 15; ++k) h += theta[k] * gens[k];
    return UnitaryGate(2, numkit::expm_hermitian(h, 1.0));
}

inline CMat gate_matrix_from_params(int arity, const std::vector<double>& theta) {
    return arity == 2 ? su4_from_params(theta).matrix : su2_from_params(theta);
}

namespace detail {

/// Principal-branch eigenphases of a unitary with branch balancing so the
/// phases sum to zero (possible exactly when det(u) = 1). Throws when an
/// eigenphase sits numerically on the branch cut.
inline std::pair<CMat, RVec> balanced_log_frames(const CMat& u) {
    Eigen::ComplexSchur<CMat> schur(u);
    const CMat q = schur.matrixU();
    const int d = static_cast<int>(u.rows());
    RVec phi(d);
    for (int j = 0; j < d; ++j) {
        const Complex t = schur.matrixT()(j, j);
        phi(j) = std::arg(t);
        if (std::abs(std::abs(phi(j)) - PI) < 1e-9)
            throw DegenerateInputError("unitary log: eigenvalue on the principal branch cut");
    }
    double total = phi.sum();
    // det(u) = 1 makes the sum a multiple of 2*pi; shift branches to zero it.
    while (total > PI) {
        Eigen::Index k;
        phi.maxCoeff(&k);
        phi(k) -= 2.0 * PI;
        total -= 2.0 * PI;
    }
    while (total < -PI) {
        Eigen::Index k;
        phi.minCoeff(&k);
        phi(k) += 2.0 * PI;
        total += 2.0 * PI;
    }
    if (std::abs(total) > 1e-6)
        throw ValidationError("unitary log: determinant is not 1 (phase not removable)");
    return {q, phi};
}

}  // namespace detail

/// Parameters reproducing a special-unitary target exactly:
/// exp(i sum theta_k G_k) = u, requiring det(u) = 1 within tolerance.
inline std::vector<double> su_params_exact(const CMat& u) {
    const int d = static_cast<int>(u.rows());
    if (d != 2 && d != 4) throw ValidationError("su_params_exact: dimension must be 2 or 4");
    auto [q, phi] = detail::balanced_log_frames(u);
    CMat h = q * phi.cast<Complex>().asDiagonal() * q.adjoint();
    std::vector<double> theta;
    if (d == 4) {
        const auto& gens = su4_generators();
        theta.resize(15);
        for (int k = 0; k < 15; ++k) theta[k] = (gens[k] * h).trace().real() / 4.0;
    } else {
        theta.resize(3);
        for (int k = 0; k < 3; ++k) theta[k] = (pauli(k + 1) * h).trace().real() / 2.0;
    }
    return theta;
}

/// Parameters reproducing an arbitrary unitary up to global phase: take the
/// principal-branch eigenphases (twisting by a generic phase when one sits on
/// the branch cut) and center them, which drops the identity component.
inline std::vector<double> su_params_up_to_phase(const CMat& u) {
    const int d = static_cast<int>(u.rows());
    if (d != 2 && d != 4) throw ValidationError("su_params_up_to_phase: dimension must be 2 or 4");
    for (int attempt = 0; attempt < 64; ++attempt) {
        const CMat candidate = u * std::exp(-I_UNIT * (PI * attempt / 64.7));
        Eigen::ComplexSchur<CMat> schur(candidate);
        RVec phi(d);
        bool on_cut = false;
        for (int j = 0; j < d; ++j) {
            phi(j) = std::arg(schur.matrixT()(j, j));
            if (std::abs(std::abs(phi(j)) - PI) < 1e-9) on_cut = true;
        }
        if (on_cut) continue;
        phi.array() -= phi.mean();
        const CMat h = schur.matrixU() * phi.cast<Complex>().asDiagonal() * schur.matrixU().adjoint();
        std::vector<double> theta(d == 4 ? 15 : 3);
        if (d == 4) {
            const auto& gens = su4_generators();
            for (int k = 0; k < 15; ++k) theta[k] = (gens[k] * h).trace().real() / 4.0;
        } else {
            for (int k = 0; k < 3; ++k) theta[k] = (pauli(k + 1) * h).trace().real() / 2.0;
        }
        return theta;
    }
    throw DegenerateInputError("su_params_up_to_phase: could not avoid the branch cut");
}

/// Matrix implemented by one slot under an assignment.
inline CMat slot_matrix(const GateSlot& s, const ParamAssignment& a) {
    if (s.kind == GateSlot::Kind::Fixed) return s.fixed_matrix;
    return gate_matrix_from_params(s.arity(), a.at(s.group_id));
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

namespace gates {

inline CMat hadamard() {
    CMat h(2, 2);
    h << 1, 1, 1, -1;
    return h / std::sqrt(2.0);
}

inline CMat swap() {
    CMat s = CMat::Zero(4, 4);
    s(0, 0) = s(3, 3) = 1;
    s(1, 2) = s(2, 1) = 1;
    return s;
}

inline CMat cnot() {
    CMat c = CMat::Zero(4, 4);
    c(0, 0) = c(1, 1) = 1;
    c(2, 3) = c(3, 2) = 1;  // control = first site
    return c;
}

inline CMat controlled_phase(double angle) {
    CMat c = CMat::Identity(4, 4);
    c(3, 3) = std::exp(I_UNIT * angle);
    return c;
}

}  // namespace gates

/// Textbook QFT rewritten into 2-qubit gates only: each Hadamard is absorbed
/// into the first controlled phase that follows it (the last qubit's Hadamard
/// becomes a 2-qubit slot acting trivially on its partner); the final
/// qubit-reversal swaps stay explicit.
inline CircuitStructure build_qft(int n) {
    if (n < 2 || n > 40) throw ValidationError("build_qft: n must be in [2, 40]");
    CircuitStructure c;
    c.n_qubits = n;
    int id = 0;
    for (int q = n - 1; q >= 0; --q) {
        if (q >= 1) {
            // CP(pi/2) between (q, q-1) composed after H on q, as one block.
            const CMat block = gates::controlled_phase(PI / 2.0) * kron(gates::hadamard(), CMat::Identity(2, 2));
            c.slots.push_back(GateSlot::fixed(id++, {q, q - 1}, block));
            for (int p = q - 2; p >= 0; --p)
                c.slots.push_back(
                    GateSlot::fixed(id++, {q, p}, gates::controlled_phase(PI / std::pow(2.0, q - p))));
        } else {
            c.slots.push_back(
                GateSlot::fixed(id++, {0, 1}, kron(gates::hadamard(), CMat::Identity(2, 2))));
        }
    }
    for (int q = 0; q < n / 2; ++q)
        c.slots.push_back(GateSlot::fixed(id++, {q, n - 1 - q}, gates::swap()));
    c.validate();
    return c;
}

struct QcnnBuildConfig {};  // reserved for recipe variants

/// QCNN recipe: per layer, one translationally invariant trainable 2-qubit
/// conv group on all periodic nearest-neighbor pairs, then a pooling layer
/// measuring every second site with two outcome-conditioned 1-qubit groups.
/// Halves the register per layer down to 2 qubits.
inline CircuitStructure build_qcnn(int n, const QcnnBuildConfig& = {}) {
    if (!is_power_of_two(static_cast<std::uint64_t>(n)) || n < 4)
        throw ValidationError("build_qcnn: n must be a power of two, n >= 4");
    CircuitStructure c;
    c.n_qubits = n;
    int id = 0, group = 0;
    for (int k = n; k > 2; k /= 2) {
        const int conv = group++;
        for (int q = 0; q < k; ++q)
            c.slots.push_back(GateSlot::trainable(id++, {q, (q + 1) % k}, conv));
        PoolingLayer pool;
        pool.after_slot = id;
        for (int q = 1; q < k; q += 2) pool.measured_sites.push_back(q);
        pool.cond_group[0] = group++;
        pool.cond_group[1] = group++;
        c.pooling.push_back(pool);
    }
    c.validate();
    return c;
}

/// All-zero parameters (every trainable gate the identity).
inline ParamAssignment identity_params(const CircuitStructure& c) {
    ParamAssignment a;
    for (int g : c.trainable_group_ids())
        a.params[g] = std::vector<double>(c.group_arity(g) == 2 ? 15 : 3, 0.0);
    return a;
}

// ---------------------------------------------------------------------------
// Dense composition
// ---------------------------------------------------------------------------

namespace detail {

/// Apply a 1- or 2-qubit gate in place to a 2^n column vector.
inline void apply_gate_to_vector(CVec& psi, const CMat& g, const std::vector<int>& sites, int n) {
    const std::size_t dim = std::size_t(1) << n;
    if (sites.size() == 1) {
        const std::size_t mask = std::size_t(1) << sites[0];
        for (std::size_t i = 0; i < dim; ++i) {
            if (i & mask) continue;
            const std::size_t j = i | mask;
            const Complex a0 = psi(i), a1 = psi(j);
            psi(i) = g(0, 0) * a0 + g(0, 1) * a1;
            psi(j) = g(1, 0) * a0 + g(1, 1) * a1;
        }
        return;
    }
    const std::size_t ma = std::size_t(1) << sites[0];
    const std::size_t mb = std::size_t(1) << sites[1];
    for (std::size_t i = 0; i < dim; ++i) {
        if ((i & ma) || (i & mb)) continue;
        const std::size_t i00 = i, i01 = i | mb, i10 = i | ma, i11 = i | ma | mb;
        const Complex a00 = psi(i00), a01 = psi(i01), a10 = psi(i10), a11 = psi(i11);
        // Local index 2*bit_first + bit_second.
        psi(i00) = g(0, 0) * a00 + g(0, 1) * a01 + g(0, 2) * a10 + g(0, 3) * a11;
        psi(i01) = g(1, 0) * a00 + g(1, 1) * a01 + g(1, 2) * a10 + g(1, 3) * a11;
        psi(i10) = g(2, 0) * a00 + g(2, 1) * a01 + g(2, 2) * a10 + g(2, 3) * a11;
        psi(i11) = g(3, 0) * a00 + g(3, 1) * a01 + g(3, 2) * a10 + g(3, 3) * a11;
    }
}

}  // namespace detail

/// Ordered product of the slot unitaries embedded on n qubits (slot 0 acts
/// first, so the result is U_{last} ... U_1 U_0).
inline CMat unitary_of(const CircuitStructure& c, const ParamAssignment& a) {
    if (c.has_pooling())
        throw UnsupportedShapeError("unitary_of: pooling circuits are not a single unitary");
    if (c.n_qubits > 12) throw CapacityError("unitary_of: n capped at 12");
    a.validate_for(c);
    const std::size_t dim = std::size_t(1) << c.n_qubits;
    std::vector<CMat> mats;
    mats.reserve(c.slots.size());
    for (const auto& s : c.slots) mats.push_back(slot_matrix(s, a));
    CMat out(dim, dim);
    CVec col(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        col.setZero();
        col(j) = 1.0;
        for (std::size_t s = 0; s < c.slots.size(); ++s)
            detail::apply_gate_to_vector(col, mats[s], c.slots[s].qubits, c.n_qubits);
        out.col(j) = col;
    }
    return out;
}

// ---------------------------------------------------------------------------
// VAns structural moves
// ---------------------------------------------------------------------------

/// Insert a fresh trainable 2-qubit slot at a random position on a random
/// pair, initialized to the identity so the implemented map is unchanged.
inline std::pair<CircuitStructure, ParamAssignment> vans_insert(const CircuitStructure& c,
                                                                const ParamAssignment& a,
                                                                SeededRng& rng) {
    CircuitStructure out = c;
    ParamAssignment pa = a;
    const int pos = static_cast<int>(rng.uniform_below(out.slots.size() + 1));
    const int q1 = static_cast<int>(rng.uniform_below(out.n_qubits));
    int q2 = static_cast<int>(rng.uniform_below(out.n_qubits - 1));
    if (q2 >= q1) ++q2;
    const int group = out.fresh_group_id();
    int max_id = -1;
    for (const auto& s : out.slots) max_id = std::max(max_id, s.slot_id);
    out.slots.insert(out.slots.begin() + pos, GateSlot::trainable(max_id + 1, {q1, q2}, group));
    pa.params[group] = std::vector<double>(15, 0.0);
    return {out, pa};
}

/// Greedily drop trainable slots whose removal does not raise the risk by
/// threshold or more (risk re-evaluated after each removal); at threshold 0
/// only removals with a non-positive risk change happen. Fixed slots stay.
template <typename RiskFn>
inline std::pair<CircuitStructure, ParamAssignment> vans_remove(const CircuitStructure& c,
                                                                const ParamAssignment& a,
                                                                RiskFn&& risk_fn, double threshold) {
    if (threshold < 0) throw ValidationError("vans_remove: threshold must be >= 0");
    CircuitStructure cur = c;
    ParamAssignment pa = a;
    double cur_risk = risk_fn(cur, pa);
    std::size_t idx = 0;
    while (idx < cur.slots.size()) {
        if (cur.slots[idx].kind != GateSlot::Kind::Trainable) {
            ++idx;
            continue;
        }
        CircuitStructure cand = cur;
        ParamAssignment cand_pa = pa;
        const int group = cand.slots[idx].group_id;
        cand.slots.erase(cand.slots.begin() + idx);
        bool group_still_used = false;
        for (const auto& s : cand.slots)
            if (s.kind == GateSlot::Kind::Trainable && s.group_id == group) group_still_used = true;
        for (const auto& p : cand.pooling)
            if (p.cond_group[0] == group || p.cond_group[1] == group) group_still_used = true;
        if (!group_still_used) cand_pa.params.erase(group);
        const double cand_risk = risk_fn(cand, cand_pa);
        const double change = cand_risk - cur_risk;
        if (change <= 0.0 || change < threshold) {
            cur = std::move(cand);
            pa = std::move(cand_pa);
            cur_risk = cand_risk;
            // stay at idx: the next slot shifted into this position
        } else {
            ++idx;
        }
    }
    return {cur, pa};
}

/// For every group: draw a traceless GUE generator h, solve by monotone
/// bisection for the delta with ||u - u e^{i delta h}|| = eps, and return
/// parameters reproducing u e^{i delta h} exactly.
inline ParamAssignment perturb_near_solution(const CircuitStructure& c, const ParamAssignment& a,
                                             double eps, SeededRng& rng) {
    if (!(eps > 0.0 && eps < 2.0)) throw ValidationError("perturb_near_solution: eps in (0, 2)");
    for (const auto& s : c.slots)
        if (s.kind != GateSlot::Kind::Trainable)
            throw ValidationError("perturb_near_solution: all slots must be trainable");
    a.validate_for(c);

    ParamAssignment out;
    for (int g : c.trainable_group_ids()) {
        const int d = c.group_arity(g) == 2 ? 4 : 2;
        const CMat u = gate_matrix_from_params(c.group_arity(g), a.at(g));
        for (int attempt = 0;; ++attempt) {
            if (attempt > 64)
                throw ConvergenceError("perturb_near_solution: no branch-safe draw found", eps);
            CMat h = numkit::random_hermitian(d, rng);
            h -= (h.trace() / static_cast<double>(d)) * CMat::Identity(d, d);
            const double hnorm = numkit::spectral_norm(h);
            if (hnorm < 1e-12) continue;
            // ||u - u e^{i delta h}|| = ||I - e^{i delta h}|| is monotone in
            // delta until the largest eigenphase reaches pi.
            double lo = 0.0, hi = PI / hnorm;
            auto dist_at = [&](double delta) {
                return numkit::spectral_norm(CMat::Identity(d, d) - numkit::expm_hermitian(h, delta));
            };
            if (dist_at(hi) < eps) continue;  // eps unreachable before the cut
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                (dist_at(mid) < eps ? lo : hi) = mid;
            }
            const double delta = 0.5 * (lo + hi);
            if (std::abs(dist_at(delta) - eps) > 1e-9) continue;
            const CMat target = u * numkit::expm_hermitian(h, delta);
            try {
                out.params[g] = su_params_exact(target);
            } catch (const DegenerateInputError&) {
                continue;  // eigenvalue at -1: redraw h (measure-zero event)
            }
            break;
        }
    }
    return out;
}

/// Convert every fixed slot into its own trainable group, recovering
/// parameters up to a global phase per gate (phases are unobservable in all
/// losses used here). Already-trainable slots keep their groups.
inline std::pair<CircuitStructure, ParamAssignment> trainablize(const CircuitStructure& c,
                                                                const ParamAssignment& a) {
    CircuitStructure out = c;
    ParamAssignment pa = a;
    int group = c.fresh_group_id();
    for (auto& s : out.slots) {
        if (s.kind != GateSlot::Kind::Fixed) continue;
        pa.params[group] = su_params_up_to_phase(s.fixed_matrix);
        s.kind = GateSlot::Kind::Trainable;
        s.group_id = group++;
        s.fixed_matrix.resize(0, 0);
    }
    return {out, pa};
}

// ---------------------------------------------------------------------------
// JSON persistence. Field order is fixed and floats carry 17 significant
// digits, so serialization is byte-stable and round-trips bit-exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt17(double x) {
    if (x == 0.0) x = 0.0;  // canonicalize -0 (JSON parsers drop the sign)
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace detail

inline std::string circuit_to_json(const CircuitStructure& c, const ParamAssignment& a) {
    std::ostringstream os;
    os << "{\"n\": " << c.n_qubits << ", \"slots\": [";
    for (std::size_t i = 0; i < c.slots.size(); ++i) {
        const auto& s = c.slots[i];
        if (i) os << ", ";
        os << "{\"id\": " << s.slot_id << ", \"qubits\": [";
        for (std::size_t q = 0; q < s.qubits.size(); ++q) os << (q ? ", " : "") << s.qubits[q];
        os << "], \"kind\": " << (s.kind == GateSlot::Kind::Fixed ? "\"fixed\"" : "\"trainable\"");
        if (s.kind == GateSlot::Kind::Fixed) {
            os << ", \"matrix\": [";
            for (Eigen::Index r = 0; r < s.fixed_matrix.rows(); ++r)
                for (Eigen::Index col = 0; col < s.fixed_matrix.cols(); ++col) {
                    if (r || col) os << ", ";
                    os << "[" << detail::fmt17(s.fixed_matrix(r, col).real()) << ", "
                       << detail::fmt17(s.fixed_matrix(r, col).imag()) << "]";
                }
            os << "]";
        } else {
            os << ", \"group\": " << s.group_id;
        }
        os << "}";
    }
    os << "], \"params\": {";
    bool first = true;
    for (const auto& [g, theta] : a.params) {
        if (!first) os << ", ";
        first = false;
        os << "\"" << g << "\": [";
        for (std::size_t k = 0; k < theta.size(); ++k)
            os << (k ? ", " : "") << detail::fmt17(theta[k]);
        os << "]";
    }
    os << "}";
    if (!c.pooling.empty()) {
        os << ", \"pooling\": [";
        for (std::size_t l = 0; l < c.pooling.size(); ++l) {
            const auto& p = c.pooling[l];
            if (l) os << ", ";
            os << "{\"after_slot\": " << p.after_slot << ", \"measure\": [";
            for (std::size_t m = 0; m < p.measured_sites.size(); ++m)
                os << (m ? ", " : "") << p.measured_sites[m];
            os << "], \"cond\": [" << p.cond_group[0] << ", " << p.cond_group[1] << "]}";
        }
        os << "]";
    }
    os << "}";
    return os.str();
}

inline std::pair<CircuitStructure, ParamAssignment> circuit_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.what(), "byte " + std::to_string(e.byte));
    }
    auto need = [&](const nlohmann::json& j, const char* key, const char* where) -> const nlohmann::json& {
        if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'", where);
        return j.at(key);
    };
    CircuitStructure c;
    ParamAssignment a;
    c.n_qubits = need(doc, "n", "$").get<int>();
    for (const auto& js : need(doc, "slots", "$")) {
        GateSlot s;
        s.slot_id = need(js, "id", "slots[]").get<int>();
        for (const auto& q : need(js, "qubits", "slots[]")) s.qubits.push_back(q.get<int>());
        const std::string kind = need(js, "kind", "slots[]").get<std::string>();
        if (kind == "fixed") {
            s.kind = GateSlot::Kind::Fixed;
            const auto& m = need(js, "matrix", "slots[]");
            const int d = 1 << s.arity();
            if (static_cast<int>(m.size()) != d * d)
                throw ParseError("matrix entry count mismatch", "slots[].matrix");
            s.fixed_matrix.resize(d, d);
            int idx = 0;
            for (const auto& entry : m) {
                s.fixed_matrix(idx / d, idx % d) =
                    Complex(entry.at(0).get<double>(), entry.at(1).get<double>());
                ++idx;
            }
        } else if (kind == "trainable") {
            s.kind = GateSlot::Kind::Trainable;
            s.group_id = need(js, "group", "slots[]").get<int>();
        } else {
            throw ParseError("unknown slot kind '" + kind + "'", "slots[].kind");
        }
        c.slots.push_back(std::move(s));
    }
    for (const auto& [key, val] : need(doc, "params", "$").items()) {
        std::vector<double> theta;
        for (const auto& x : val) theta.push_back(x.get<double>());
        a.params[std::stoi(key)] = std::move(theta);
    }
    if (doc.contains("pooling")) {
        for (const auto& jp : doc.at("pooling")) {
            PoolingLayer p;
            p.after_slot = need(jp, "after_slot", "pooling[]").get<int>();
            for (const auto& m : need(jp, "measure", "pooling[]")) p.measured_sites.push_back(m.get<int>());
            const auto& cond = need(jp, "cond", "pooling[]");
            p.cond_group[0] = cond.at(0).get<int>();
            p.cond_group[1] = cond.at(1).get<int>();
            c.pooling.push_back(std::move(p));
        }
    }
    c.validate();
    return {std::move(c), std::move(a)};
}

}  // namespace vqcgenlab::circuits
