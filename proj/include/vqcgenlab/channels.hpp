#pragma once

// Quantum gates and channels as mathematical objects, together with the norm
// machinery (spectral, trace, diamond) consumed by the generalization bounds.

#include <algorithm>
#include <utility>
#include <vector>

#include "vqcgenlab/numkit.hpp"

namespace vqcgenlab::channels {

struct UnitaryGate {
    int arity = 1;  // qubits acted on (1 or 2)
    CMat matrix;

    UnitaryGate() = default;
    UnitaryGate(int arity_, CMat m) : arity(arity_), matrix(std::move(m)) { validate(); }

    int dim() const { return 1 << arity; }

    void validate() const {
        if (arity != 1 && arity != 2) throw ValidationError("UnitaryGate: arity must be 1 or 2");
        if (matrix.rows() != dim() || matrix.cols() != dim())
            throw ValidationError("UnitaryGate: matrix dimension does not match arity");
        if (numkit::unitarity_defect(matrix) > 1e-10)
            throw ValidationError("UnitaryGate: matrix is not unitary within 1e-10");
    }
};

struct KrausChannel {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<CMat> kraus_ops;  // each out_dim x in_dim

    KrausChannel() = default;
    KrausChannel(int in_d, int out_d, std::vector<CMat> ops)
        : in_dim(in_d), out_dim(out_d), kraus_ops(std::move(ops)) {
        validate();
    }

    static KrausChannel from_unitary(const CMat& u) {
        return KrausChannel(static_cast<int>(u.cols()), static_cast<int>(u.rows()), {u});
    }
    static KrausChannel from_unitary(const UnitaryGate& g) { return from_unitary(g.matrix); }

    void validate() const {
        if (kraus_ops.empty()) throw ValidationError("KrausChannel: needs at least one Kraus operator");
        if (in_dim < 1 || out_dim < 1) throw ValidationError("KrausChannel: dimensions must be positive");
        CMat sum = CMat::Zero(in_dim, in_dim);
        for (const CMat& k : kraus_ops) {
            if (k.rows() != out_dim || k.cols() != in_dim)
                throw ValidationError("KrausChannel: operator shape mismatch");
            sum += k.adjoint() * k;
        }
        if ((sum - CMat::Identity(in_dim, in_dim)).cwiseAbs().maxCoeff() > 1e-10)
            throw ValidationError("KrausChannel: not trace preserving within 1e-10");
    }

    CMat apply(const CMat& rho) const {
        CMat out = CMat::Zero(out_dim, out_dim);
        for (const CMat& k : kraus_ops) out += k * rho * k.adjoint();
        return out;
    }
};

/// ||U - V|| (largest singular value of the difference), in [0, 2].
inline double spectral_distance(const UnitaryGate& u, const UnitaryGate& v) {
    if (u.arity != v.arity) throw ValidationError("spectral_distance: arity mismatch");
    return numkit::spectral_norm(u.matrix - v.matrix);
}

namespace detail {

/// Euclidean distance from the origin to the convex hull of a set of points
/// in the complex plane. Zero when the origin lies inside the hull.
inline double origin_to_hull_distance(std::vector<Complex> pts) {
    if (pts.empty()) throw ValidationError("origin_to_hull_distance: empty point set");
    std::sort(pts.begin(), pts.end(),
              [](const Complex& a, const Complex& b) { return std::arg(a) < std::arg(b); });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Complex& a, const Complex& b) { return std::abs(a - b) < 1e-9; }),
              pts.end());

    if (pts.size() == 1) return std::abs(pts[0]);

    auto seg_dist = [](const Complex& a, const Complex& b) {
        const Complex d = b - a;
        const double len2 = std::norm(d);
        if (len2 == 0.0) return std::abs(a);
        double t = -(a.real() * d.real() + a.imag() * d.imag()) / len2;
        t = std::clamp(t, 0.0, 1.0);
        return std::abs(a + t * d);
    };

    // Distinct points sorted by angle are in convex position when they lie on
    // a circle (our use case: eigenvalues of a unitary). Inside test via the
    // cross products of consecutive edges against the origin.
    const std::size_t m = pts.size();
    bool all_nonneg = true, all_nonpos = true;
    for (std::size_t i = 0; i < m; ++i) {
        const Complex a = pts[i], b = pts[(i + 1) % m];
        const double cross = (b.real() - a.real()) * (-a.imag()) - (b.imag() - a.imag()) * (-a.real());
        if (cross < 0) all_nonneg = false;
        if (cross > 0) all_nonpos = false;
    }
    if (m >= 3 && (all_nonneg || all_nonpos)) return 0.0;

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) best = std::min(best, seg_dist(pts[i], pts[(i + 1) % m]));
    return best;
}

}  // namespace detail

/// Exact diamond distance between two unitary channels:
/// ||U - V||_diamond = 2*sqrt(1 - dist(0, conv(spec(U^dagger V)))^2).
inline double diamond_distance_unitary(const UnitaryGate& u, const UnitaryGate& v) {
    if (u.arity != v.arity) throw ValidationError("diamond_distance_unitary: arity mismatch");
    const CMat w = u.matrix.adjoint() * v.matrix;
    Eigen::ComplexEigenSolver<CMat> es(w, /*computeEigenvectors=*/false);
    std::vector<Complex> eigs(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    // W is unitary, so its spectrum lies on the unit circle; snapping the
    // moduli keeps the sqrt below well conditioned near d = 1.
    for (Complex& z : eigs) z /= std::abs(z);
    const double d = detail::origin_to_hull_distance(std::move(eigs));
    return 2.0 * std::sqrt(std::max(0.0, 1.0 - d * d));
}

inline double diamond_distance_unitary(const CMat& u, const CMat& v) {
    const int arity = (u.rows() == 2) ? 1 : 2;
    return diamond_distance_unitary(UnitaryGate(arity, u), UnitaryGate(arity, v));
}

/// Output trace distance || (A - B) tensor id applied to |psi><psi| ||_1 for a
/// pure state on system+ancilla, ancilla dimension = in_dim.
inline double extended_trace_distance(const KrausChannel& a, const KrausChannel& b, const CVec& psi) {
    const int d = a.in_dim, e = a.out_dim;
    CMat delta = CMat::Zero(e * d, e * d);
    // psi indexed as (system s, ancilla r) -> s*d + r; K tensor id acts on s.
    auto accumulate = [&](const std::vector<CMat>& ops, double sign) {
        for (const CMat& k : ops) {
            CMat kpsi(e, d);  // rows: output system index, cols: ancilla
            for (int out = 0; out < e; ++out)
                for (int r = 0; r < d; ++r) {
                    Complex acc = 0.0;
                    for (int s = 0; s < d; ++s) acc += k(out, s) * psi(s * d + r);
                    kpsi(out, r) = acc;
                }
            Eigen::Map<const CVec> flat(kpsi.data(), e * d);
            // kpsi is column-major (out + e*r); keep that layout consistently.
            delta += sign * (flat * flat.adjoint());
        }
    };
    accumulate(a.kraus_ops, 1.0);
    accumulate(b.kraus_ops, -1.0);
    Eigen::SelfAdjointEigenSolver<CMat> es(delta, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().sum();
}

struct DiamondBracket {
    double lo = 0.0;
    double hi = 0.0;
};

namespace detail {

/// Unnormalized Choi matrix J(E) = sum_k w_k w_k^dagger with
/// w_k = sum_i |i> tensor K_k|i>.
inline CMat choi_matrix(const KrausChannel& c) {
    const int d = c.in_dim, e = c.out_dim;
    CMat j = CMat::Zero(d * e, d * e);
    for (const CMat& k : c.kraus_ops) {
        CVec w = CVec::Zero(d * e);
        for (int i = 0; i < d; ++i)
            for (int out = 0; out < e; ++out) w(i * e + out) = k(out, i);
        j += w * w.adjoint();
    }
    return j;
}

}  // namespace detail

/// Bracket on the diamond distance of two general channels: lo from
/// multi-restart ascent over ancilla-extended pure states (a certified lower
/// bound), hi = min(2, trace norm of the unnormalized Choi difference).
inline DiamondBracket diamond_bracket(const KrausChannel& a, const KrausChannel& b,
                                      int restarts = 32, int max_iters = 200,
                                      double improve_tol = 1e-8, std::uint64_t seed = 0xd1a30ULL) {
    if (a.in_dim != b.in_dim || a.out_dim != b.out_dim)
        throw ValidationError("diamond_bracket: dimension mismatch");
    if (a.in_dim > 16) throw CapacityError("diamond_bracket: in_dim capped at 16");

    const int d = a.in_dim, e = a.out_dim;
    const int ext = d * d;

    // Extended Kraus operators K tensor id as explicit matrices (e*d x d*d).
    auto extend = [&](const std::vector<CMat>& ops) {
        std::vector<CMat> out;
        out.reserve(ops.size());
        for (const CMat& k : ops) out.push_back(kron(k, CMat::Identity(d, d)));
        return out;
    };
    const std::vector<CMat> ma = extend(a.kraus_ops);
    const std::vector<CMat> mb = extend(b.kraus_ops);

    SeededRng rng(seed);
    double lo = 0.0;
    for (int r = 0; r < restarts; ++r) {
        CVec psi(ext);
        for (int i = 0; i < ext; ++i) psi(i) = rng.complex_gaussian();
        psi.normalize();

        double value = 0.0;
        for (int it = 0; it < max_iters; ++it) {
            CMat x = CMat::Zero(e * d, e * d);
            for (const CMat& m : ma) x += (m * psi) * (m * psi).adjoint();
            for (const CMat& m : mb) x -= (m * psi) * (m * psi).adjoint();
            Eigen::SelfAdjointEigenSolver<CMat> es(x);
            const double f = es.eigenvalues().cwiseAbs().sum();
            if (f <= value + improve_tol && it > 0) {
                value = std::max(value, f);
                break;
            }
            value = std::max(value, f);
            // sign(X), then ascend to the top eigenvector of the lifted operator.
            CVec sgn(es.eigenvalues().size());
            for (Eigen::Index i = 0; i < sgn.size(); ++i)
                sgn(i) = es.eigenvalues()(i) >= 0 ? 1.0 : -1.0;
            const CMat s = es.eigenvectors() * sgn.asDiagonal() * es.eigenvectors().adjoint();
            CMat h = CMat::Zero(ext, ext);
            for (const CMat& m : ma) h += m.adjoint() * s * m;
            for (const CMat& m : mb) h -= m.adjoint() * s * m;
            Eigen::SelfAdjointEigenSolver<CMat> hs(h);
            psi = hs.eigenvectors().col(ext - 1);
        }
        lo = std::max(lo, value);
    }

    const CMat dj = detail::choi_matrix(a) - detail::choi_matrix(b);
    Eigen::SelfAdjointEigenSolver<CMat> es(dj, Eigen::EigenvaluesOnly);
    const double hi = std::min(2.0, es.eigenvalues().cwiseAbs().sum());
    return {std::min(lo, hi + 1e-12), hi};
}

/// Channel application with density-matrix validation.
inline CMat apply_channel(const KrausChannel& c, const CMat& rho) {
    if (rho.rows() != c.in_dim || rho.cols() != c.in_dim)
        throw ValidationError("apply_channel: state dimension mismatch");
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
        throw ValidationError("apply_channel: state not Hermitian");
    if (std::abs(rho.trace().real() - 1.0) > 1e-10 || std::abs(rho.trace().imag()) > 1e-10)
        throw ValidationError("apply_channel: state trace differs from 1");
    Eigen::SelfAdjointEigenSolver<CMat> es(rho, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw ValidationError("apply_channel: state not positive semidefinite");
    return c.apply(rho);
}

}  // namespace vqcgenlab::channels
