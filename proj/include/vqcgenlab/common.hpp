#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace vqcgenlab {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

constexpr Complex I_UNIT{0.0, 1.0};
constexpr double PI = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

struct ValidationError : std::invalid_argument {
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

struct DegenerateInputError : std::invalid_argument {
    explicit DegenerateInputError(const std::string& what) : std::invalid_argument(what) {}
};

struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

struct UnsupportedShapeError : std::runtime_error {
    explicit UnsupportedShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct ConvergenceError : std::runtime_error {
    double best_residual;
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), best_residual(residual) {}
};

struct ParseError : std::runtime_error {
    std::string location;
    ParseError(const std::string& what, std::string where)
        : std::runtime_error(what + " (at " + where + ")"), location(std::move(where)) {}
};

struct InfeasibleError : std::runtime_error {
    explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Seeded RNG
//
// All randomness flows through SeededRng. The generator is mt19937_64 (fully
// specified by the standard) and the Gaussian draw is a hand-rolled
// Box-Muller over the raw bit stream, so equal seeds give bit-identical
// streams independent of the C++ library implementation.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    static constexpr const char* algorithm() { return "mt19937_64/boxmuller"; }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_below(std::uint64_t n) {
        if (n == 0) throw ValidationError("uniform_below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * PI * u2);
    }

    Complex complex_gaussian() {
        const double re = gaussian();
        const double im = gaussian();
        return {re, im};
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// +1 or -1 with equal probability.
    int rademacher() { return (engine_() & 1u) ? 1 : -1; }

    /// Deterministic child stream; independent of draws made on the parent.
    SeededRng split(std::uint64_t index) const {
        return SeededRng(splitmix64(seed_ ^ splitmix64(index + 0x51abe1ecULL)));
    }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Small helpers shared across modules
// ---------------------------------------------------------------------------

inline bool is_power_of_two(std::uint64_t x) { return x != 0 && (x & (x - 1)) == 0; }

inline int log2_exact(std::uint64_t x) {
    int k = 0;
    while ((1ULL << k) < x) ++k;
    return k;
}

inline CMat kron(const CMat& a, const CMat& b) {
    CMat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Pauli matrices in the order I, X, Y, Z.
inline const CMat& pauli(int k) {
    static const CMat mats[4] = {
        (CMat(2, 2) << 1, 0, 0, 1).finished(),
        (CMat(2, 2) << 0, 1, 1, 0).finished(),
        (CMat(2, 2) << 0, Complex(0, -1), Complex(0, 1), 0).finished(),
        (CMat(2, 2) << 1, 0, 0, -1).finished()};
    if (k < 0 || k > 3) throw ValidationError("pauli index out of range");
    return mats[k];
}

}  // namespace vqcgenlab
