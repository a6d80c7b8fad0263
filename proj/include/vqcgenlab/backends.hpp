#pragma once

// State simulation (dense and MPS), the generalized cluster Hamiltonian and
// its ground states, and the QCNN forward pass with mid-circuit measurement.
//
// Bit conventions follow circuits.hpp: site q holds bit (i >> q) & 1 of the
// basis index i, and bitstrings print site 0 first.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "vqcgenlab/circuits.hpp"

namespace vqcgenlab::backends {

using channels::UnitaryGate;
using circuits::CircuitStructure;
using circuits::GateSlot;
using circuits::ParamAssignment;

// ---------------------------------------------------------------------------
// Dense states
// ---------------------------------------------------------------------------

struct DenseState {
    int n = 0;
    CVec amplitudes;

    DenseState() = default;
    DenseState(int n_, CVec amps) : n(n_), amplitudes(std::move(amps)) { validate(); }

    static DenseState basis_state(int n, std::size_t index) {
        CVec amps = CVec::Zero(std::size_t(1) << n);
        amps(index) = 1.0;
        return DenseState(n, std::move(amps));
    }
    static DenseState zero_state(int n) { return basis_state(n, 0); }

    void validate() const {
        if (n < 1 || n > 26) throw ValidationError("DenseState: n out of range");
        if (amplitudes.size() != Eigen::Index(std::size_t(1) << n))
            throw ValidationError("DenseState: amplitude count mismatch");
        if (std::abs(amplitudes.norm() - 1.0) > 1e-10)
            throw ValidationError("DenseState: not normalized within 1e-10");
    }
};

inline std::string bitstring_of(std::size_t index, int n) {
    std::string s(n, '0');
    for (int q = 0; q < n; ++q)
        if ((index >> q) & 1) s[q] = '1';
    return s;
}

inline DenseState dense_apply_gate(const DenseState& s, const UnitaryGate& g,
                                   const std::vector<int>& sites) {
    if (static_cast<int>(sites.size()) != g.arity)
        throw ValidationError("dense_apply_gate: site count does not match gate arity");
    std::set<int> uniq(sites.begin(), sites.end());
    if (uniq.size() != sites.size()) throw ValidationError("dense_apply_gate: site collision");
    for (int q : sites)
        if (q < 0 || q >= s.n) throw ValidationError("dense_apply_gate: site out of range");
    DenseState out = s;
    circuits::detail::apply_gate_to_vector(out.amplitudes, g.matrix, sites, s.n);
    return out;
}

/// Multinomial counts over computational basis bitstrings.
inline std::map<std::string, std::uint64_t> dense_sample(const DenseState& s, std::uint64_t shots,
    SeededRng& rng) {
    if (shots < 1) throw ValidationError("dense_sample: shots must be >= 1");
    const std::size_t dim = std::size_t(1) << s.n;
    std::vector<double> cdf(dim);
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        acc += std::norm(s.amplitudes(i));
        cdf[i] = acc;
    }
    std::map<std::string, std::uint64_t> counts;
    for (std::uint64_t shot = 0; shot < shots; ++shot) {
        const double u = rng.uniform() * acc;
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        const std::size_t idx = std::min<std::size_t>(it - cdf.begin(), dim - 1);
        ++counts[bitstring_of(idx, s.n)];
    }
    return counts;
}

// ---------------------------------------------------------------------------
// Matrix product states
// ---------------------------------------------------------------------------

struct MPSState {
    int n = 0;
    int chi_max = 1 << 30;
    double trunc_err = 0.0;
    bool right_canonical = false;
    // tensors[site][phys] is a (left bond x right bond) matrix
    std::vector<std::array<CMat, 2>> tensors;

    int bond_dim(int cut) const {  // bond to the right of site `cut`
        return static_cast<int>(tensors[cut][0].cols());
    }
};

namespace detail {

/// LQ decomposition M = L * Q with Q having orthonormal rows.
inline std::pair<CMat, CMat> lq(const CMat& m) {
    Eigen::HouseholderQR<CMat> qr(m.adjoint());
    CMat q = CMat(qr.householderQ()).leftCols(std::min(m.rows(), m.cols()));
    CMat r = CMat(qr.matrixQR().triangularView<Eigen::Upper>()).topRows(std::min(m.rows(), m.cols()));
    return {r.adjoint(), q.adjoint()};
}

}  // namespace detail

/// Sweep right-to-left into right-canonical form and normalize.
inline void mps_canonicalize(MPSState& s) {
    for (int i = s.n - 1; i >= 1; --i) {
        const Eigen::Index chi_l = s.tensors[i][0].rows();
        const Eigen::Index chi_r = s.tensors[i][0].cols();
        CMat m(chi_l, 2 * chi_r);
        m.leftCols(chi_r) = s.tensors[i][0];
        m.rightCols(chi_r) = s.tensors[i][1];
        auto [l, q] = detail::lq(m);
        s.tensors[i][0] = q.leftCols(chi_r);
        s.tensors[i][1] = q.rightCols(chi_r);
        s.tensors[i - 1][0] = s.tensors[i - 1][0] * l;
        s.tensors[i - 1][1] = s.tensors[i - 1][1] * l;
    }
    double norm = std::sqrt(s.tensors[0][0].squaredNorm() + s.tensors[0][1].squaredNorm());
    if (norm == 0.0) throw DegenerateInputError("mps_canonicalize: zero state");
    s.tensors[0][0] /= norm;
    s.tensors[0][1] /= norm;
    s.right_canonical = true;
}

inline Complex mps_overlap(const MPSState& a, const MPSState& b) {
    if (a.n != b.n) throw ValidationError("mps_overlap: length mismatch");
    CMat env = CMat::Ones(1, 1);
    for (int i = 0; i < a.n; ++i) {
        CMat next = CMat::Zero(a.tensors[i][0].cols(), b.tensors[i][0].cols());
        for (int phys = 0; phys < 2; ++phys)
            next += a.tensors[i][phys].adjoint() * env * b.tensors[i][phys];
        env = std::move(next);
    }
    return env(0, 0);
}

inline double mps_norm(const MPSState& s) { return std::sqrt(std::abs(mps_overlap(s, s))); }

/// Random Gaussian MPS, canonicalized and normalized; bond dimensions are
/// min(chi, maximal possible at each cut).
inline MPSState mps_random(int n, int chi, SeededRng& rng) {
    if (n < 1) throw ValidationError("mps_random: n must be positive");
    if (chi < 1) throw ValidationError("mps_random: chi must be >= 1");
    MPSState s;
    s.n = n;
    s.chi_max = std::max(chi, 1);
    s.tensors.resize(n);
    auto cap = [&](int cut) {  // max bond dim at the cut right of site `cut`
        const double left = std::pow(2.0, cut + 1);
        const double right = std::pow(2.0, n - cut - 1);
        return static_cast<int>(std::min({double(chi), left, right}));
    };
    int chi_l = 1;
    for (int i = 0; i < n; ++i) {
        const int chi_r = (i == n - 1) ? 1 : cap(i);
        for (int phys = 0; phys < 2; ++phys) {
            s.tensors[i][phys].resize(chi_l, chi_r);
            for (int r = 0; r < chi_l; ++r)
                for (int c = 0; c < chi_r; ++c) s.tensors[i][phys](r, c) = rng.complex_gaussian();
        }
        chi_l = chi_r;
    }
    mps_canonicalize(s);
    return s;
}

inline MPSState mps_from_basis(int n, std::size_t index, int chi_max = 1 << 30) {
    MPSState s;
    s.n = n;
    s.chi_max = chi_max;
    s.tensors.resize(n);
    for (int i = 0; i < n; ++i) {
        const int bit = (index >> i) & 1;
        s.tensors[i][bit] = CMat::Ones(1, 1);
        s.tensors[i][1 - bit] = CMat::Zero(1, 1);
    }
    s.right_canonical = true;
    return s;
}

inline CVec mps_to_dense_vec(const MPSState& s) {
    if (s.n > 22) throw CapacityError("mps_to_dense: n too large");
    const std::size_t dim = std::size_t(1) << s.n;
    CVec out(dim);
    for (std::size_t idx = 0; idx < dim; ++idx) {
        CMat prod = CMat::Ones(1, 1);
        for (int i = 0; i < s.n; ++i) prod = prod * s.tensors[i][(idx >> i) & 1];
        out(idx) = prod(0, 0);
    }
    return out;
}

inline DenseState mps_to_dense(const MPSState& s) {
    CVec v = mps_to_dense_vec(s);
    v.normalize();
    return DenseState(s.n, std::move(v));
}

inline MPSState mps_from_dense(const DenseState& d, int chi_max = 1 << 30) {
    MPSState s;
    s.n = d.n;
    s.chi_max = chi_max;
    s.tensors.resize(d.n);
    // Successive SVD splits, site 0 first. Reshape with site bit fastest.
    CMat rest(1, std::size_t(1) << d.n);
    for (Eigen::Index i = 0; i < rest.cols(); ++i) rest(0, i) = d.amplitudes(i);
    Eigen::Index chi_l = 1;
    for (int site = 0; site < d.n - 1; ++site) {
        const Eigen::Index cols = rest.cols() / 2;
        // rows of m: (chi_l, bit of current site); columns: remaining bits
        CMat m(chi_l * 2, cols);
        for (Eigen::Index r = 0; r < chi_l; ++r)
            for (int b = 0; b < 2; ++b)
                for (Eigen::Index c = 0; c < cols; ++c)
                    m(r + chi_l * b, c) = rest(r, b + 2 * c);
        Eigen::JacobiSVD<CMat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Eigen::Index keep = 0;
        for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k)
            if (svd.singularValues()(k) > 1e-14) ++keep;
        keep = std::max<Eigen::Index>(1, std::min<Eigen::Index>(keep, chi_max));
        s.tensors[site][0] = svd.matrixU().topRows(chi_l).leftCols(keep);
        s.tensors[site][1] = svd.matrixU().bottomRows(chi_l).leftCols(keep);
        rest = svd.singularValues().head(keep).asDiagonal() * CMat(svd.matrixV().adjoint()).topRows(keep);
        chi_l = keep;
    }
    s.tensors[d.n - 1][0] = rest.leftCols(rest.cols() / 2);
    s.tensors[d.n - 1][1] = rest.rightCols(rest.cols() / 2);
    mps_canonicalize(s);
    return s;
}

inline void mps_apply_one_qubit(MPSState& s, const CMat& g, int site) {
    const CMat a0 = s.tensors[site][0], a1 = s.tensors[site][1];
    s.tensors[site][0] = g(0, 0) * a0 + g(0, 1) * a1;
    s.tensors[site][1] = g(1, 0) * a0 + g(1, 1) * a1;
}

namespace detail {

/// Two-site gate on adjacent sites (i, i+1); gate local index is
/// 2*bit_i + bit_{i+1}. SVD split with truncation to chi_max.
inline void apply_two_site_adjacent(MPSState& s, const CMat& g, int i, int chi_max) {
    const Eigen::Index chi_l = s.tensors[i][0].rows();
    const Eigen::Index chi_m = s.tensors[i][0].cols();
    const Eigen::Index chi_r = s.tensors[i + 1][0].cols();

    // theta[(l, s_i, s_j, r)] then gate application on the local pair.
    std::array<CMat, 4> theta;  // indexed by 2*s_i + s_j, each chi_l x chi_r
    for (int si = 0; si < 2; ++si)
        for (int sj = 0; sj < 2; ++sj) theta[2 * si + sj] = s.tensors[i][si] * s.tensors[i + 1][sj];
    std::array<CMat, 4> applied;
    for (int out = 0; out < 4; ++out) {
        applied[out] = CMat::Zero(chi_l, chi_r);
        for (int in = 0; in < 4; ++in) applied[out] += g(out, in) * theta[in];
    }
    (void)chi_m;

    // Reshape to (chi_l * s_i) x (s_j * chi_r) and split.
    CMat m(chi_l * 2, 2 * chi_r);
    for (int si = 0; si < 2; ++si)
        for (int sj = 0; sj < 2; ++sj)
            m.block(si * chi_l, sj * chi_r, chi_l, chi_r) = applied[2 * si + sj];
    Eigen::JacobiSVD<CMat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double total = 0.0;
    for (Eigen::Index k = 0; k < sv.size(); ++k) total += sv(k) * sv(k);
    Eigen::Index keep = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
        if (sv(k) > 1e-14) ++keep;
    keep = std::max<Eigen::Index>(1, std::min<Eigen::Index>(keep, chi_max));
    double kept = 0.0;
    for (Eigen::Index k = 0; k < keep; ++k) kept += sv(k) * sv(k);
    const double discarded = std::max(0.0, total - kept);
    s.trunc_err += discarded;
    const double rescale = (kept > 0.0) ? std::sqrt(total / kept) : 1.0;

    s.tensors[i][0] = svd.matrixU().topRows(chi_l).leftCols(keep);
    s.tensors[i][1] = svd.matrixU().bottomRows(chi_l).leftCols(keep);
    CMat right = (sv.head(keep) * rescale).asDiagonal() * CMat(svd.matrixV().adjoint()).topRows(keep);
    s.tensors[i + 1][0] = right.leftCols(chi_r);
    s.tensors[i + 1][1] = right.rightCols(chi_r);
    s.right_canonical = false;
}

}  // namespace detail

/// Two-qubit gate on arbitrary sites; non-adjacent pairs are routed with an
/// explicit swap network under the same chi_max truncation.
inline MPSState mps_apply_two_qubit(const MPSState& s, const UnitaryGate& g,
                                    const std::vector<int>& sites, int chi_max) {
    if (sites.size() != 2 || sites[0] == sites[1])
        throw ValidationError("mps_apply_two_qubit: need two distinct sites");
    MPSState out = s;
    out.chi_max = chi_max;
    int a = sites[0], b = sites[1];
    CMat gm = g.matrix;
    if (a > b) {  // reorder so a < b, permuting the gate's local bits
        std::swap(a, b);
        CMat p = CMat::Zero(4, 4);
        p(0, 0) = p(3, 3) = 1;
        p(1, 2) = p(2, 1) = 1;
        gm = p * gm * p;
    }
    static const UnitaryGate swap_gate(2, circuits::gates::swap());
    // Route site a next to b.
    for (int i = a; i < b - 1; ++i) detail::apply_two_site_adjacent(out, swap_gate.matrix, i, chi_max);
    detail::apply_two_site_adjacent(out, gm, b - 1, chi_max);
    for (int i = b - 2; i >= a; --i) detail::apply_two_site_adjacent(out, swap_gate.matrix, i, chi_max);
    return out;
}

/// Perfect sampling of the listed sites from a canonical MPS; returns the
/// outcome bits (in the order the sites were given, which must be ascending)
/// and the renormalized post-measurement state on the remaining sites.
inline std::pair<std::string, MPSState> mps_sample_perfect(const MPSState& s,
                                                           const std::vector<int>& sites,
                                                           SeededRng& rng) {
    for (std::size_t k = 1; k < sites.size(); ++k)
        if (sites[k] <= sites[k - 1])
            throw ValidationError("mps_sample_perfect: sites must be strictly ascending");
    if (!sites.empty() && (sites.front() < 0 || sites.back() >= s.n))
        throw ValidationError("mps_sample_perfect: site out of range");

    MPSState work = s;
    if (!work.right_canonical) mps_canonicalize(work);  // documented side step

    std::string outcome;
    std::vector<int> chosen(s.n, -1);
    CMat env = CMat::Ones(1, 1);
    std::size_t next = 0;
    for (int i = 0; i < s.n; ++i) {
        if (next < sites.size() && sites[next] == i) {
            double p[2];
            CMat cond[2];
            for (int o = 0; o < 2; ++o) {
                cond[o] = work.tensors[i][o].adjoint() * env * work.tensors[i][o];
                p[o] = std::max(0.0, cond[o].trace().real());
            }
            const double total = p[0] + p[1];
            const int o = (rng.uniform() * total < p[0]) ? 0 : 1;
            outcome.push_back(o ? '1' : '0');
            chosen[i] = o;
            env = cond[o] / std::max(p[o], 1e-300);
            ++next;
        } else {
            CMat sum = CMat::Zero(work.tensors[i][0].cols(), work.tensors[i][0].cols());
            for (int o = 0; o < 2; ++o) sum += work.tensors[i][o].adjoint() * env * work.tensors[i][o];
            env = std::move(sum);
        }
    }

    // Collapse: contract the measured matrices into the chain.
    MPSState post;
    post.n = s.n - static_cast<int>(sites.size());
    post.chi_max = s.chi_max;
    post.trunc_err = s.trunc_err;
    if (post.n > 0) {
        CMat carry = CMat::Ones(1, 1);
        bool have_kept = false;
        for (int i = 0; i < s.n; ++i) {
            if (chosen[i] >= 0) {
                carry = carry * work.tensors[i][chosen[i]];
            } else {
                std::array<CMat, 2> t = {carry * work.tensors[i][0], carry * work.tensors[i][1]};
                post.tensors.push_back(std::move(t));
                carry = CMat::Identity(post.tensors.back()[0].cols(), post.tensors.back()[0].cols());
                have_kept = true;
            }
        }
        if (have_kept && carry.size() > 0) {
            auto& last = post.tensors.back();
            last[0] = last[0] * carry;
            last[1] = last[1] * carry;
        }
        mps_canonicalize(post);
    }
    return {outcome, std::move(post)};
}

// ---------------------------------------------------------------------------
// Generalized cluster Hamiltonian
// H = sum_j ( Z_j - J1 X_j X_{j+1} - J2 X_{j-1} Z_j X_{j+1} ), periodic.
// ---------------------------------------------------------------------------

struct HamiltonianSpec {
    int n = 0;
    double j1 = 0.0;
    double j2 = 0.0;
    bool periodic = true;

    void validate() const {
        if (n < 2) throw ValidationError("HamiltonianSpec: n must be >= 2");
        if (j2 != 0.0 && n < 3)
            throw ValidationError("HamiltonianSpec: three-site term needs n >= 3");
        if (!periodic) throw ValidationError("HamiltonianSpec: only periodic boundaries supported");
    }
};

inline void cluster_matvec(const HamiltonianSpec& h, const CVec& x, CVec& y) {
    const int n = h.n;
    const std::size_t dim = std::size_t(1) << n;
    y.setZero();
    for (std::size_t i = 0; i < dim; ++i) {
        const Complex amp = x(i);
        if (amp == Complex(0.0, 0.0)) continue;
        // sum_j Z_j: diagonal, +1 for bit 0, -1 for bit 1.
        const int pop = __builtin_popcountll(i);
        y(i) += double(n - 2 * pop) * amp;
        for (int j = 0; j < n; ++j) {
            if (h.j1 != 0.0) {
                const int jp = (j + 1) % n;
                const std::size_t flipped = i ^ (std::size_t(1) << j) ^ (std::size_t(1) << jp);
                y(flipped) -= h.j1 * amp;
            }
            if (h.j2 != 0.0) {
                const int jm = (j - 1 + n) % n;
                const int jp = (j + 1) % n;
                const std::size_t flipped = i ^ (std::size_t(1) << jm) ^ (std::size_t(1) << jp);
                const double zj = ((i >> j) & 1) ? -1.0 : 1.0;
                y(flipped) -= h.j2 * zj * amp;
            }
        }
    }
}

inline CMat cluster_dense_matrix(const HamiltonianSpec& h) {
    h.validate();
    const std::size_t dim = std::size_t(1) << h.n;
    if (h.n > 12) throw CapacityError("cluster_dense_matrix: n too large for dense form");
    CMat m(dim, dim);
    CVec e(dim), col(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        e.setZero();
        e(j) = 1.0;
        cluster_matvec(h, e, col);
        m.col(j) = col;
    }
    return m;
}

/// Ground state via Lanczos with an on-the-fly Pauli matvec; in degenerate
/// ground spaces the seeded Lanczos vector is returned as-is.
inline std::pair<double, DenseState> cluster_ground_state(const HamiltonianSpec& h,
                                                          double tol = 1e-9) {
    h.validate();
    if (h.n > 16) throw CapacityError("cluster_ground_state: n capped at 16");
    auto mv = [&h](const CVec& x, CVec& y) { cluster_matvec(h, x, y); };
    auto [e, v] = numkit::lanczos_ground(mv, Eigen::Index(std::size_t(1) << h.n), tol);
    return {e, DenseState(h.n, std::move(v))};
}

// ---------------------------------------------------------------------------
// QCNN forward pass
// ---------------------------------------------------------------------------

namespace detail {

struct QcnnLayers {
    struct Layer {
        std::vector<const GateSlot*> conv;
        const circuits::PoolingLayer* pool;
        int width;  // register size entering the layer
    };
    std::vector<Layer> layers;
};

inline QcnnLayers qcnn_layers(const CircuitStructure& c) {
    if (!c.has_pooling()) throw UnsupportedShapeError("qcnn: structure has no pooling plan");
    QcnnLayers out;
    std::size_t slot = 0;
    int width = c.n_qubits;
    for (const auto& p : c.pooling) {
        QcnnLayers::Layer layer;
        layer.width = width;
        layer.pool = &p;
        while (slot < c.slots.size() && static_cast<int>(slot) < p.after_slot)
            layer.conv.push_back(&c.slots[slot++]);
        if (static_cast<int>(p.measured_sites.size()) * 2 != width)
            throw UnsupportedShapeError("qcnn: pooling must measure every second qubit");
        for (std::size_t k = 0; k < p.measured_sites.size(); ++k)
            if (p.measured_sites[k] != static_cast<int>(2 * k + 1))
                throw UnsupportedShapeError("qcnn: expected odd-site measurements");
        width /= 2;
        out.layers.push_back(std::move(layer));
    }
    if (slot != c.slots.size())
        throw UnsupportedShapeError("qcnn: trailing slots after the last pooling layer");
    if (width != 2) throw UnsupportedShapeError("qcnn: final register must be 2 qubits");
    return out;
}

inline void qcnn_exact_recurse(CVec psi, int width, std::size_t layer_idx, const QcnnLayers& plan,
                               const ParamAssignment& a, double weight, std::array<double, 4>& p) {
    if (layer_idx == plan.layers.size()) {
        for (int i = 0; i < 4; ++i) p[i] += weight * std::norm(psi(i));
        return;
    }
    const auto& layer = plan.layers[layer_idx];
    for (const GateSlot* s : layer.conv)
        circuits::detail::apply_gate_to_vector(psi, circuits::slot_matrix(*s, a), s->qubits, width);

    const int m = width / 2;
    const CMat g0 = circuits::su2_from_params(a.at(layer.pool->cond_group[0]));
    const CMat g1 = circuits::su2_from_params(a.at(layer.pool->cond_group[1]));

    for (std::size_t outcome = 0; outcome < (std::size_t(1) << m); ++outcome) {
        CVec sub(std::size_t(1) << m);
        for (std::size_t kept = 0; kept < (std::size_t(1) << m); ++kept) {
            std::size_t full = 0;
            for (int t = 0; t < m; ++t) {
                full |= ((kept >> t) & 1) << (2 * t);
                full |= ((outcome >> t) & 1) << (2 * t + 1);
            }
            sub(kept) = psi(full);
        }
        const double pb = sub.squaredNorm();
        if (pb < 1e-18) continue;
        sub /= std::sqrt(pb);
        for (int t = 0; t < m; ++t) {
            const CMat& g = ((outcome >> t) & 1) ? g1 : g0;
            circuits::detail::apply_gate_to_vector(sub, g, {t}, m);
        }
        qcnn_exact_recurse(std::move(sub), m, layer_idx + 1, plan, a, weight * pb, p);
    }
}

}  // namespace detail

/// Exact outcome distribution over the 2-qubit output register, summing all
/// pooling-measurement branches with their Born weights. Index = q0 + 2*q1.
inline std::array<double, 4> qcnn_forward_exact(const DenseState& s, const CircuitStructure& c,
                                                const ParamAssignment& a) {
    if (s.n != c.n_qubits) throw ValidationError("qcnn_forward_exact: state size mismatch");
    if (s.n > 12) throw CapacityError("qcnn_forward_exact: n capped at 12");
    const auto plan = detail::qcnn_layers(c);
    a.validate_for(c);
    std::array<double, 4> p{0, 0, 0, 0};
    detail::qcnn_exact_recurse(s.amplitudes, s.n, 0, plan, a, 1.0, p);
    return p;
}

inline std::string outcome_string(int index) {
    std::string s(2, '0');
    if (index & 1) s[0] = '1';
    if (index & 2) s[1] = '1';
    return s;
}

/// Per-shot sampled QCNN forward on the dense backend.
inline std::map<std::string, std::uint64_t> qcnn_forward_sampled(const DenseState& s,
                                                                 const CircuitStructure& c,
                                                                 const ParamAssignment& a,
                                                                 std::uint64_t shots, SeededRng& rng) {
    if (shots < 1) throw ValidationError("qcnn_forward_sampled: shots must be >= 1");
    const auto plan = detail::qcnn_layers(c);
    a.validate_for(c);
    std::map<std::string, std::uint64_t> counts;
    for (std::uint64_t shot = 0; shot < shots; ++shot) {
        SeededRng srng = rng.split(shot);
        CVec psi = s.amplitudes;
        int width = s.n;
        for (const auto& layer : plan.layers) {
            for (const GateSlot* slot : layer.conv)
                circuits::detail::apply_gate_to_vector(psi, circuits::slot_matrix(*slot, a),
                                                       slot->qubits, width);
            const int m = width / 2;
            // Branch probabilities over the measured (odd) sites.
            std::vector<double> pb(std::size_t(1) << m, 0.0);
            for (std::size_t full = 0; full < (std::size_t(1) << width); ++full) {
                std::size_t o = 0;
                for (int t = 0; t < m; ++t) o |= ((full >> (2 * t + 1)) & 1) << t;
                pb[o] += std::norm(psi(full));
            }
            double u = srng.uniform();
            std::size_t outcome = 0;
            for (std::size_t o = 0; o < pb.size(); ++o) {
                if (u < pb[o] || o + 1 == pb.size()) {
                    outcome = o;
                    break;
                }
                u -= pb[o];
            }
            CVec sub(std::size_t(1) << m);
            for (std::size_t kept = 0; kept < (std::size_t(1) << m); ++kept) {
                std::size_t full = 0;
                for (int t = 0; t < m; ++t) {
                    full |= ((kept >> t) & 1) << (2 * t);
                    full |= ((outcome >> t) & 1) << (2 * t + 1);
                }
                sub(kept) = psi(full);
            }
            sub.normalize();
            const CMat g0 = circuits::su2_from_params(a.at(layer.pool->cond_group[0]));
            const CMat g1 = circuits::su2_from_params(a.at(layer.pool->cond_group[1]));
            for (int t = 0; t < m; ++t) {
                const CMat& g = ((outcome >> t) & 1) ? g1 : g0;
                circuits::detail::apply_gate_to_vector(sub, g, {t}, m);
            }
            psi = std::move(sub);
            width = m;
        }
        double u = srng.uniform();
        int idx = 3;
        for (int i = 0; i < 4; ++i) {
            const double pi = std::norm(psi(i));
            if (u < pi || i == 3) {
                idx = i;
                break;
            }
            u -= pi;
        }
        ++counts[outcome_string(idx)];
    }
    return counts;
}

/// Per-shot sampled QCNN forward on the MPS backend with perfect sampling.
inline std::map<std::string, std::uint64_t> qcnn_forward_sampled(const MPSState& s,
                                                                 const CircuitStructure& c,
                                                                 const ParamAssignment& a,
                                                                 std::uint64_t shots, SeededRng& rng,
                                                                 int chi_max = 1 << 30) {
    if (shots < 1) throw ValidationError("qcnn_forward_sampled: shots must be >= 1");
    const auto plan = detail::qcnn_layers(c);
    a.validate_for(c);
    std::map<std::string, std::uint64_t> counts;
    for (std::uint64_t shot = 0; shot < shots; ++shot) {
        SeededRng srng = rng.split(shot);
        MPSState psi = s;
        for (const auto& layer : plan.layers) {
            const int width = layer.width;
            for (const GateSlot* slot : layer.conv)
                psi = mps_apply_two_qubit(psi, circuits::UnitaryGate(2, circuits::slot_matrix(*slot, a)),
                                          slot->qubits, chi_max);
            auto [bits, post] = mps_sample_perfect(psi, layer.pool->measured_sites, srng);
            const CMat g0 = circuits::su2_from_params(a.at(layer.pool->cond_group[0]));
            const CMat g1 = circuits::su2_from_params(a.at(layer.pool->cond_group[1]));
            for (int t = 0; t < width / 2; ++t)
                mps_apply_one_qubit(post, bits[t] == '1' ? g1 : g0, t);
            psi = std::move(post);
        }
        auto [bits, rest] = mps_sample_perfect(psi, {0, 1}, srng);
        ++counts[bits];
    }
    return counts;
}

}  // namespace vqcgenlab::backends
