#pragma once

// Linear coupled-mode equations in the frame rotating at the drive:
//
//   da/dt = -m a - b u,      y = p u + c a,
//
// with u = (in_1, in_2) and y = (out_1, out_2). Every site-basis solver and the
// time-domain integrator read the same CoupledModeEquations, so the steady
// state S = p - c m^{-1} b and the integrated fixed point cannot drift apart
// through a transcription slip.

#include <cmath>
#include <optional>

#include "resochain/linalg.hpp"
#include "resochain/model.hpp"

namespace resochain {

struct CoupledModeEquations {
    linalg::Matrix m;          // dim x dim steady-state operator
    linalg::Matrix b;          // dim x 2, column q drives from input port q
    linalg::Matrix c;          // 2 x dim, row q assembles output port q
    Eigen::Matrix2cd p;        // direct input -> output paths
    bool tridiagonal = false;  // m has nonzeros only on three diagonals

    Eigen::Index dim() const noexcept { return m.rows(); }
};

inline SMatrix to_smatrix(const Eigen::Matrix2cd& s) {
    return {s(0, 0), s(1, 0), s(0, 1), s(1, 1)};
}

/// S from the steady-state amplitudes a_q (column q: unit drive at port q).
inline SMatrix scattering_from_amplitudes(const CoupledModeEquations& eq, const linalg::Matrix& a) {
    const Eigen::Matrix2cd s = eq.p + eq.c * a;
    return to_smatrix(s);
}

/// Steady-state amplitudes a = -m^{-1} b for both ports. Tridiagonal systems
/// use the pivot-free sweep and fall back to LU on a small pivot.
inline linalg::Matrix steady_amplitudes(const CoupledModeEquations& eq, bool* fell_back = nullptr) {
    if (fell_back) *fell_back = false;
    if (eq.tridiagonal && eq.dim() > 1) {
        const Eigen::Index n = eq.dim();
        linalg::Vector lo(n), di(n), up(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            di[i] = eq.m(i, i);
            lo[i] = i > 0 ? eq.m(i, i - 1) : cplx{};
            up[i] = i + 1 < n ? eq.m(i, i + 1) : cplx{};
        }
        if (auto x = linalg::solve_tridiagonal(lo, di, up, -eq.b)) {
            if (x->allFinite()) return *x;
        }
        if (fell_back) *fell_back = true;
    }
    return linalg::solve_dense(eq.m, -eq.b);
}

inline SMatrix solve_scattering(const CoupledModeEquations& eq, bool* fell_back = nullptr) {
    return scattering_from_amplitudes(eq, steady_amplitudes(eq, fell_back));
}

/// Single bridge resonator: both ports couple at the same anti-node with the
/// same sign.
inline CoupledModeEquations bridge_equations(double delta, double gamma1, double gamma2,
                                             double gamma_a) {
    const double s1 = std::sqrt(gamma1);
    const double s2 = std::sqrt(gamma2);
    CoupledModeEquations eq;
    eq.m = linalg::Matrix::Constant(1, 1, kI * delta + 0.5 * (gamma1 + gamma2) + 0.5 * gamma_a);
    eq.b = linalg::Matrix(1, 2);
    eq.b << s1, s2;
    eq.c = linalg::Matrix(2, 1);
    eq.c << s1, s2;
    eq.p = Eigen::Matrix2cd::Identity();
    eq.tridiagonal = true;
    return eq;
}

} // namespace resochain
