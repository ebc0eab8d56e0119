#pragma once

// Complex linear solvers: partial-pivot LU (Eigen) and a pivot-free
// tridiagonal sweep.

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "resochain/model.hpp"

namespace resochain::linalg {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Reciprocal condition estimates below this are reported as singular.
inline constexpr double kMinRcond = 1e-15;

/// Factorize once, solve for every column of rhs.
inline Matrix solve_dense(const Matrix& m, const Matrix& rhs) {
    Eigen::PartialPivLU<Matrix> lu(m);
    const double rc = lu.rcond();
    if (!(rc > kMinRcond)) throw SolverError("singular coupling matrix (rcond " + std::to_string(rc) + ")");
    Matrix x = lu.solve(rhs);
    if (!x.allFinite()) throw SolverError("non-finite solution of coupling matrix");
    return x;
}

/// Thomas sweep for lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]
/// (lower[0] and upper[n-1] unused), several right-hand sides at once.
/// Returns nullopt when a pivot falls below 1e-12 times its row norm.
inline std::optional<Matrix> solve_tridiagonal(const Vector& lower, const Vector& diag,
                                               const Vector& upper, const Matrix& rhs) {
    constexpr double kPivotTol = 1e-12;
    const Eigen::Index n = diag.size();
    Vector cp(n);
    Matrix dp(n, rhs.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const cplx lo = i > 0 ? lower[i] : cplx{};
        const cplx up = i + 1 < n ? upper[i] : cplx{};
        const cplx pivot = i > 0 ? diag[i] - lo * cp[i - 1] : diag[i];
        const double row = std::abs(lo) + std::abs(diag[i]) + std::abs(up);
        if (!(std::abs(pivot) > kPivotTol * row) || !std::isfinite(std::abs(pivot))) {
            return std::nullopt;
        }
        cp[i] = up / pivot;
        dp.row(i) = i > 0 ? ((rhs.row(i) - lo * dp.row(i - 1)) / pivot).eval() : (rhs.row(i) / pivot).eval();
    }
    for (Eigen::Index i = n - 2; i >= 0; --i) dp.row(i) -= cp[i] * dp.row(i + 1);
    return dp;
}

} // namespace resochain::linalg
