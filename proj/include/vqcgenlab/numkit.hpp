#pragma once

// Dense complex linear algebra, spectral routines, and random-matrix
// sampling. Everything here is a pure function of its inputs plus an
// explicitly passed RNG.

#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vqcgenlab/common.hpp"

namespace vqcgenlab::numkit {

inline double spectral_norm(const CMat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<CMat> svd(m);
    return svd.singularValues()(0);
}

inline double hermiticity_defect(const CMat& m) {
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline double unitarity_defect(const CMat& u) {
    return spectral_norm(u.adjoint() * u - CMat::Identity(u.cols(), u.cols()));
}

/// Unitary polar factor W*V^dagger of the SVD m = W*S*V^dagger. Maximizes
/// Re tr(u^dagger m) over unitaries u. SVD backend is deterministic for a
/// fixed input.
inline CMat polar_unitary(const CMat& m) {
    if (m.rows() != m.cols()) throw ValidationError("polar_unitary: matrix must be square");
    if (m.cwiseAbs().maxCoeff() == 0.0)
        throw DegenerateInputError("polar_unitary: zero matrix has no unitary polar factor");
    Eigen::JacobiSVD<CMat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

/// exp(i*scale*h) for Hermitian h, via eigendecomposition.
inline CMat expm_hermitian(const CMat& h, double scale) {
    if (h.rows() != h.cols()) throw ValidationError("expm_hermitian: matrix must be square");
    if (hermiticity_defect(h) > 1e-10)
        throw ValidationError("expm_hermitian: input is not Hermitian within 1e-10");
    Eigen::SelfAdjointEigenSolver<CMat> es(h);
    const RVec& lam = es.eigenvalues();
    CVec phases(lam.size());
    for (Eigen::Index k = 0; k < lam.size(); ++k)
        phases(k) = std::exp(I_UNIT * (scale * lam(k)));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// Haar-distributed unitary: Ginibre matrix, QR, R-diagonal phase fix.
inline CMat haar_unitary(int d, SeededRng& rng) {
    if (d < 1) throw ValidationError("haar_unitary: dimension must be >= 1");
    CMat g(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            g(i, j) = rng.complex_gaussian() / std::sqrt(2.0);
    Eigen::HouseholderQR<CMat> qr(g);
    CMat q = qr.householderQ();
    CMat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j) {
        const Complex rjj = r(j, j);
        const double a = std::abs(rjj);
        q.col(j) *= (a == 0.0) ? Complex(1.0, 0.0) : rjj / a;
    }
    return q;
}

/// GUE sample: diagonal N(0,1), off-diagonal (N(0,1)+iN(0,1))/sqrt(2);
/// Hermitian exactly by construction.
inline CMat random_hermitian(int d, SeededRng& rng) {
    if (d < 1) throw ValidationError("random_hermitian: dimension must be >= 1");
    CMat h(d, d);
    for (int i = 0; i < d; ++i) {
        h(i, i) = rng.gaussian();
        for (int j = i + 1; j < d; ++j) {
            const Complex z = rng.complex_gaussian() / std::sqrt(2.0);
            h(i, j) = z;
            h(j, i) = std::conj(z);
        }
    }
    return h;
}

using MatVec = std::function<void(const CVec&, CVec&)>;

struct LanczosOptions {
    int krylov_dim = 50;
    int max_restarts = 400;
    std::uint64_t start_seed = 0x1a9c205eedULL;
};

/// Lowest eigenpair of a Hermitian operator given through a matvec handle.
/// Restarted Lanczos with full reorthogonalization inside each Krylov block.
/// Residual target: ||H v - E v|| <= tol * max(1, |E|).
inline std::pair<double, CVec> lanczos_ground(const MatVec& matvec, Eigen::Index dim, double tol,
                                              const LanczosOptions& opt = {}) {
    if (dim < 1 || dim > (1LL << 20)) throw ValidationError("lanczos_ground: dim out of range");
    if (tol <= 0.0) throw ValidationError("lanczos_ground: tol must be positive");

    SeededRng rng(opt.start_seed);
    CVec v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.complex_gaussian();
    v.normalize();

    const int m = static_cast<int>(std::min<Eigen::Index>(opt.krylov_dim, dim));
    double best_residual = std::numeric_limits<double>::infinity();

    for (int restart = 0; restart < opt.max_restarts; ++restart) {
        std::vector<CVec> basis;
        basis.reserve(m);
        std::vector<double> alpha, beta;
        basis.push_back(v);
        CVec w(dim);
        for (int j = 0; j < m; ++j) {
            matvec(basis[j], w);
            Complex a = basis[j].dot(w);
            alpha.push_back(a.real());
            w -= a * basis[j];
            if (j > 0) w -= Complex(beta[j - 1]) * basis[j - 1];
            // Full reorthogonalization keeps the block numerically orthogonal.
            for (const CVec& b : basis) w -= b.dot(w) * b;
            const double nb = w.norm();
            if (j + 1 == m || nb < 1e-14) break;
            beta.push_back(nb);
            basis.push_back(w / nb);
        }
        const int k = static_cast<int>(alpha.size());
        Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(k, k);
        for (int j = 0; j < k; ++j) {
            tri(j, j) = alpha[j];
            if (j + 1 < k) tri(j, j + 1) = tri(j + 1, j) = beta[j];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
        const double energy = es.eigenvalues()(0);
        CVec ritz = CVec::Zero(dim);
        for (int j = 0; j < k; ++j) ritz += Complex(es.eigenvectors()(j, 0)) * basis[j];
        ritz.normalize();

        matvec(ritz, w);
        const double residual = (w - energy * ritz).norm();
        best_residual = std::min(best_residual, residual);
        if (residual <= tol * std::max(1.0, std::abs(energy)))
            return {energy, std::move(ritz)};
        v = std::move(ritz);
    }
    throw ConvergenceError("lanczos_ground: no convergence within restart budget", best_residual);
}

/// Convenience overload for an explicit Hermitian matrix.
inline std::pair<double, CVec> lanczos_ground(const CMat& h, double tol,
                                              const LanczosOptions& opt = {}) {
    return lanczos_ground([&h](const CVec& x, CVec& y) { y = h * x; }, h.rows(), tol, opt);
}

}  // namespace vqcgenlab::numkit
