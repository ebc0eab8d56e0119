#pragma once

// N hanger resonators side-coupled to one waveguide. Adjacent sites are
// separated by the propagation phase theta; port 1 feeds r_in (left to right),
// port 2 feeds l_in (right to left). Output 1 is l_out, output 2 is r_out.

#include <atomic>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "resochain/equations.hpp"
#include "resochain/model.hpp"
#include "resochain/single.hpp"
#include "resochain/sweep.hpp"

namespace resochain {

/// Steady state: matrix * a = -(rhs_right * r_in + rhs_left * l_in).
struct ChainLinearSystem {
    linalg::Matrix matrix;
    linalg::Vector rhs_right;
    linalg::Vector rhs_left;
    linalg::Vector output_row_left;  // l_out = passthrough * l_in + row . a
    linalg::Vector output_row_right; // r_out = passthrough * r_in + row . a
    cplx passthrough_phase;
};

inline ChainLinearSystem build_chain_system(const HangerChain& chain, double omega_d) {
    chain.validate();
    const auto n = static_cast<Eigen::Index>(chain.n());
    const double th = chain.theta;
    auto phase = [th](double k) { return std::polar(1.0, k * th); };

    ChainLinearSystem sys;
    sys.matrix.resize(n, n);
    sys.rhs_right.resize(n);
    sys.rhs_left.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double sj = std::sqrt(chain.gamma[j]);
        for (Eigen::Index k = 0; k < n; ++k) {
            sys.matrix(j, k) = sj * std::sqrt(chain.gamma[k]) * phase(static_cast<double>(std::abs(j - k)));
        }
        const double delta = chain.omega0[j] - omega_d;
        sys.matrix(j, j) += kI * delta + 0.5 * chain.gamma_a[j];
        sys.rhs_right[j] = sj * phase(static_cast<double>(j));
        sys.rhs_left[j] = sj * phase(static_cast<double>(n - 1 - j));
    }
    sys.output_row_left = sys.rhs_right;
    sys.output_row_right = sys.rhs_left;
    sys.passthrough_phase = phase(static_cast<double>(n - 1));
    return sys;
}

inline CoupledModeEquations to_equations(const ChainLinearSystem& sys) {
    CoupledModeEquations eq;
    const Eigen::Index n = sys.matrix.rows();
    eq.m = sys.matrix;
    eq.b.resize(n, 2);
    eq.b.col(0) = sys.rhs_right;
    eq.b.col(1) = sys.rhs_left;
    eq.c.resize(2, n);
    eq.c.row(0) = sys.output_row_left.transpose();
    eq.c.row(1) = sys.output_row_right.transpose();
    eq.p << cplx{}, sys.passthrough_phase, sys.passthrough_phase, cplx{};
    eq.tridiagonal = n <= 2;
    return eq;
}

inline CoupledModeEquations equations(const HangerChain& chain, double omega_d) {
    return to_equations(build_chain_system(chain, omega_d));
}

inline SMatrix s_hanger_chain_dense(const HangerChain& chain, double omega_d) {
    try {
        const CoupledModeEquations eq = equations(chain, omega_d);
        return scattering_from_amplitudes(eq, linalg::solve_dense(eq.m, -eq.b));
    } catch (const SolverError& e) {
        throw SolverError(e.what(), omega_d);
    }
}

/// How the intrinsic-loss symbol of the two-site closed form is read.
/// Half: Gamma_j = gamma_a_j / 2, the reading consistent with the equations of
/// motion. Full: Gamma_j = gamma_a_j, kept for comparison only.
enum class LossReading { Half, Full };

inline SMatrix s_hanger_chain_n2(double delta1, double delta2, double gamma1, double gamma2,
                                 double gamma_a1, double gamma_a2, double theta,
                                 LossReading reading = LossReading::Half) {
    for (double r : {gamma1, gamma2, gamma_a1, gamma_a2}) detail::require_rate(r, "rate");
    detail::require_finite(theta, "theta");
    const double f = reading == LossReading::Half ? 0.5 : 1.0;
    const cplx a1 = kI * delta1 + f * gamma_a1;
    const cplx a2 = kI * delta2 + f * gamma_a2;
    const cplx e2 = std::polar(1.0, 2.0 * theta);
    const cplx cross = gamma1 * gamma2 * (1.0 - e2);
    const double scale = std::abs(delta1) + std::abs(delta2) + gamma1 + gamma2 + gamma_a1 + gamma_a2;
    const cplx den = detail::checked_denominator(a1 * a2 + gamma1 * a2 + gamma2 * a1 + cross,
                                                 scale * scale, "s_hanger_chain_n2");
    const cplx s11 = -(gamma1 * a2 + e2 * gamma2 * a1 + cross) / den;
    const cplx s21 = std::polar(1.0, theta) * a1 * a2 / den;
    const cplx s22 = -(e2 * gamma1 * a2 + gamma2 * a1 + cross) / den;
    return {s11, s21, s21, s22};
}

inline SMatrix s_hanger_chain_n2(const HangerChain& chain, double omega_d,
                                 LossReading reading = LossReading::Half) {
    chain.validate();
    if (chain.n() != 2) throw UsageError("n2 closed form needs exactly 2 sites");
    try {
        return s_hanger_chain_n2(chain.omega0[0] - omega_d, chain.omega0[1] - omega_d, chain.gamma[0],
                                 chain.gamma[1], chain.gamma_a[0], chain.gamma_a[1], chain.theta,
                                 reading);
    } catch (const SingularityError& e) {
        throw SingularityError(e.what(), omega_d);
    }
}

namespace detail {

// Amplitudes c_j and d_j collect the field re-emitted towards the left and the
// right by sites j..N and 1..j respectively; both include site j, so the
// effective site factor is x = gamma / (i Delta - gamma + gamma_a / 2).
// Returns false when a recurrence denominator breaks down.
inline bool thomas_outputs(std::size_t n, cplx x, double theta, cplx l_in, cplx r_in,
                           cplx& l_out, cplx& r_out) {
    constexpr double kPivotTol = 1e-12;
    const auto nn = static_cast<double>(n);
    const cplx e2 = std::polar(1.0, 2.0 * theta);
    const cplx one_x = 1.0 + x;
    const cplx first = 1.0 + 2.0 * x;
    auto bad = [&](cplx den, double row) {
        return !(std::abs(den) > kPivotTol * row) || !std::isfinite(std::abs(den));
    };
    if (bad(first, 1.0 + 2.0 * std::abs(x))) return false;

    std::vector<cplx> ap(n), bp(n);
    auto sweep_c = [&](cplx b1, cplx drive) {
        ap[0] = -one_x / first;
        bp[0] = b1 / first;
        for (std::size_t j = 1; j < n; ++j) {
            const cplx den = (first + e2) + ap[j - 1] * one_x * e2;
            if (bad(den, std::abs(first) + 1.0 + std::abs(ap[j - 1] * one_x))) return false;
            ap[j] = -one_x / den;
            bp[j] = -(drive - bp[j - 1] * one_x * e2) / den;
        }
        return true;
    };
    // Back substitution; returns the first unknown of the sweep order.
    auto back = [&]() {
        cplx next = bp[n - 1];
        for (std::size_t j = n - 1; j-- > 0;) next = bp[j] - ap[j] * next;
        return next;
    };

    // Leftward amplitudes: c_1 drives l_out.
    const cplx eN = std::polar(1.0, nn * theta);
    if (!sweep_c(-x * (eN * l_in + std::polar(1.0, theta) * r_in), x * eN * (1.0 - e2) * l_in)) {
        return false;
    }
    const cplx c1 = back();

    // Rightward amplitudes, swept in reversed site order: d_N drives r_out.
    const cplx eNm = std::polar(1.0, -nn * theta);
    if (!sweep_c(-x * (eNm * l_in + std::polar(1.0, -theta) * r_in),
                 x * (std::polar(1.0, -theta) - std::polar(1.0, theta)) * r_in)) {
        return false;
    }
    const cplx dN = back();

    const cplx pass = std::polar(1.0, (nn - 1.0) * theta);
    l_out = pass * l_in + std::polar(1.0, -theta) * c1;
    r_out = pass * r_in + eN * dN;
    return std::isfinite(std::abs(l_out)) && std::isfinite(std::abs(r_out));
}

} // namespace detail

/// O(N) solver for homogeneous chains. Sets *fell_back and uses the dense
/// solver when a recurrence denominator breaks down.
inline SMatrix s_hanger_chain_thomas(const HangerChain& chain, double omega_d,
                                     bool* fell_back = nullptr) {
    chain.validate();
    if (!chain.is_homogeneous()) {
        throw UsageError("thomas method needs a homogeneous chain; use dense");
    }
    if (fell_back) *fell_back = false;
    const double delta = chain.omega0[0] - omega_d;
    const double g = chain.gamma[0];
    const cplx x = g / (kI * delta - g + 0.5 * chain.gamma_a[0]);
    SMatrix s;
    const bool ok =
        std::isfinite(std::abs(x)) &&
        detail::thomas_outputs(chain.n(), x, chain.theta, 0.0, 1.0, s.s11, s.s21) &&
        detail::thomas_outputs(chain.n(), x, chain.theta, 1.0, 0.0, s.s12, s.s22);
    if (ok) return s;
    if (fell_back) *fell_back = true;
    return s_hanger_chain_dense(chain, omega_d);
}

inline Spectrum spectrum_hanger_chain(const HangerChain& chain, const FrequencyGrid& grid,
                                      Method method, unsigned threads = 1) {
    chain.validate();
    switch (method) {
    case Method::Dense:
        return Spectrum(grid,
                        sweep(grid, [&](double w) { return s_hanger_chain_dense(chain, w); }, threads),
                        Method::Dense);
    case Method::ClosedFormN2:
        if (chain.n() != 2) {
            throw UsageError("n2 needs exactly 2 sites; applicable methods: dense" +
                             std::string(chain.is_homogeneous() ? ", thomas" : ""));
        }
        return Spectrum(grid,
                        sweep(grid, [&](double w) { return s_hanger_chain_n2(chain, w); }, threads),
                        Method::ClosedFormN2);
    case Method::Thomas: {
        if (!chain.is_homogeneous()) {
            throw UsageError("thomas needs a homogeneous chain; applicable methods: dense" +
                             std::string(chain.n() == 2 ? ", n2" : ""));
        }
        std::atomic<std::size_t> fallbacks{0};
        Spectrum s(grid,
                   sweep(grid,
                         [&](double w) {
                             bool fb = false;
                             SMatrix m = s_hanger_chain_thomas(chain, w, &fb);
                             if (fb) ++fallbacks;
                             return m;
                         },
                         threads),
                   Method::Thomas);
        if (fallbacks > 0) {
            s.diagnostics.push_back("thomas recurrence broke down at " + std::to_string(fallbacks.load()) +
                                    " point(s); dense solver used there");
        }
        return s;
    }
    default:
        throw UsageError(std::string("method ") + std::string(to_string(method)) +
                         " does not apply to hanger chains; applicable methods: dense, thomas, n2");
    }
}

} // namespace resochain
