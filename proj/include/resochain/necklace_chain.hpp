#pragma once

// N necklace resonators coupled end to end with hopping g_j. Port 1 couples to
// site 1 with rate gamma1, port 2 to site N with rate gamma2.

#include <atomic>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "resochain/equations.hpp"
#include "resochain/model.hpp"
#include "resochain/single.hpp"
#include "resochain/sweep.hpp"

namespace resochain {

/// Site-basis equations. A periodic chain closes into a ring through one extra
/// bond g between sites N and 1 (requires uniform hopping).
inline CoupledModeEquations equations(const NecklaceChain& chain, double omega_d) {
    chain.validate();
    const auto n = static_cast<Eigen::Index>(chain.n());
    CoupledModeEquations eq;
    eq.m = linalg::Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        eq.m(j, j) = kI * (chain.omega0[j] - omega_d) + 0.5 * chain.gamma_a[j];
    }
    eq.m(0, 0) += 0.5 * chain.gamma1;
    eq.m(n - 1, n - 1) += 0.5 * chain.gamma2;
    for (Eigen::Index j = 0; j + 1 < n; ++j) {
        eq.m(j, j + 1) += -kI * chain.g[j];
        eq.m(j + 1, j) += -kI * chain.g[j];
    }
    eq.tridiagonal = true;
    if (chain.boundary == Boundary::Periodic && n > 1) {
        if (!chain.is_homogeneous()) throw UsageError("periodic necklace chain must be homogeneous");
        eq.m(0, n - 1) += -kI * chain.uniform_g();
        eq.m(n - 1, 0) += -kI * chain.uniform_g();
        eq.tridiagonal = n <= 2;
    }
    const double s1 = std::sqrt(chain.gamma1);
    const double s2 = std::sqrt(chain.gamma2);
    // The two ends couple with opposite sign.
    eq.b = linalg::Matrix::Zero(n, 2);
    eq.b(0, 0) = s1;
    eq.b(n - 1, 1) = -s2;
    eq.c = linalg::Matrix::Zero(2, n);
    eq.c(0, 0) = s1;
    eq.c(1, n - 1) = -s2;
    eq.p = Eigen::Matrix2cd::Identity();
    return eq;
}

inline SMatrix s_necklace_chain_site(const NecklaceChain& chain, double omega_d,
                                     bool* fell_back = nullptr) {
    if (chain.boundary != Boundary::HardWall) {
        throw UsageError("site method needs a hard-wall chain; use collective for periodic");
    }
    try {
        return solve_scattering(equations(chain, omega_d), fell_back);
    } catch (const SolverError& e) {
        throw SolverError(e.what(), omega_d);
    }
}

/// Ring-closed site model of a homogeneous periodic chain.
inline SMatrix s_necklace_chain_ring(const NecklaceChain& chain, double omega_d) {
    if (chain.boundary != Boundary::Periodic) throw UsageError("ring model needs a periodic chain");
    try {
        return solve_scattering(equations(chain, omega_d));
    } catch (const SolverError& e) {
        throw SolverError(e.what(), omega_d);
    }
}

/// Sign of the two-site transmission. SiteConsistent (+i g ...) agrees with
/// the site equations and the collective forms; Negated (-i g ...) flips it
/// and is kept for comparison.
enum class TransmissionSign { SiteConsistent, Negated };

inline SMatrix s_necklace_chain_n2(double delta1, double delta2, double g, double gamma1,
                                   double gamma2, double gamma_a1, double gamma_a2,
                                   TransmissionSign sign = TransmissionSign::SiteConsistent) {
    for (double r : {gamma1, gamma2, gamma_a1, gamma_a2}) detail::require_rate(r, "rate");
    detail::require_finite(g, "g");
    const cplx a = kI * delta1 + 0.5 * gamma1 + 0.5 * gamma_a1;
    const cplx b = kI * delta2 + 0.5 * gamma2 + 0.5 * gamma_a2;
    const double scale = std::abs(delta1) + std::abs(delta2) + std::abs(g) + gamma1 + gamma2 +
                         gamma_a1 + gamma_a2;
    const cplx den = detail::checked_denominator(a * b + g * g, scale * scale, "s_necklace_chain_n2");
    const double sg = sign == TransmissionSign::SiteConsistent ? 1.0 : -1.0;
    const cplx s21 = sg * kI * g * std::sqrt(gamma1 * gamma2) / den;
    return {1.0 - gamma1 * b / den, s21, s21, 1.0 - gamma2 * a / den};
}

inline SMatrix s_necklace_chain_n2(const NecklaceChain& chain, double omega_d,
                                   TransmissionSign sign = TransmissionSign::SiteConsistent) {
    chain.validate();
    if (chain.n() != 2) throw UsageError("n2 closed form needs exactly 2 sites");
    if (chain.boundary != Boundary::HardWall) throw UsageError("n2 closed form needs a hard-wall chain");
    try {
        return s_necklace_chain_n2(chain.omega0[0] - omega_d, chain.omega0[1] - omega_d, chain.g[0],
                                   chain.gamma1, chain.gamma2, chain.gamma_a[0], chain.gamma_a[1],
                                   sign);
    } catch (const SingularityError& e) {
        throw SingularityError(e.what(), omega_d);
    }
}

// ---------------------------------------------------------------------------
// Collective modes of a homogeneous chain
// ---------------------------------------------------------------------------

struct CollectiveModeSet {
    Boundary boundary = Boundary::HardWall;
    double delta = 0.0;                // common site detuning the set was built for
    std::vector<double> delta_k;       // mode detunings
    std::vector<cplx> root_gamma1_k;   // coupling amplitude of mode k to port 1
    std::vector<cplx> root_gamma2_k;   // coupling amplitude of mode k to port 2
    std::vector<int> parity;           // (-1)^k for hard wall, +1 for periodic

    std::size_t n() const noexcept { return delta_k.size(); }
};

/// Modes k = 1..n. Hard wall: standing waves sin(k pi j / (n + 1)).
/// Periodic: running waves exp(2 pi i k j / n).
inline CollectiveModeSet collective_modes(std::size_t n, double delta, double g, double gamma1,
                                          double gamma2, Boundary boundary) {
    if (n == 0) throw DomainError("collective modes need n >= 1");
    detail::require_finite(delta, "delta");
    detail::require_finite(g, "g");
    detail::require_rate(gamma1, "gamma1");
    detail::require_rate(gamma2, "gamma2");
    constexpr double pi = std::numbers::pi;
    const auto nn = static_cast<double>(n);
    CollectiveModeSet m;
    m.boundary = boundary;
    m.delta = delta;
    for (std::size_t k = 1; k <= n; ++k) {
        const auto kk = static_cast<double>(k);
        if (boundary == Boundary::HardWall) {
            const double q = kk * pi / (nn + 1.0);
            const double w = std::sin(q);
            m.delta_k.push_back(delta - 2.0 * g * std::cos(q));
            m.root_gamma1_k.emplace_back(std::sqrt(2.0 * gamma1 / (nn + 1.0)) * w);
            m.root_gamma2_k.emplace_back(std::sqrt(2.0 * gamma2 / (nn + 1.0)) * w);
            m.parity.push_back(k % 2 == 0 ? 1 : -1);
        } else {
            const double q = 2.0 * pi * kk / nn;
            m.delta_k.push_back(delta - 2.0 * g * std::cos(q));
            m.root_gamma1_k.push_back(std::sqrt(gamma1 / nn) * std::polar(1.0, -q));
            m.root_gamma2_k.emplace_back(std::sqrt(gamma2 / nn));
            m.parity.push_back(1);
        }
    }
    return m;
}

/// How gamma_{m,k} is formed from the complex periodic amplitudes.
/// ModulusSquared: |sqrt(gamma_mk)|^2 and conj(sqrt(gamma_1k)) sqrt(gamma_2k),
/// which is passive and equals the ring-closed site model. Literal: plain
/// squares and products of the amplitudes, kept for comparison.
enum class PeriodicReading { ModulusSquared, Literal };

/// Evaluate the mode sums at site detuning `delta` (the set's mode offsets are
/// reused, so one set serves a whole sweep).
inline SMatrix s_necklace_chain_collective(const CollectiveModeSet& modes, double delta,
                                           double gamma_a,
                                           PeriodicReading reading = PeriodicReading::ModulusSquared) {
    detail::require_rate(gamma_a, "gamma_a");
    detail::require_finite(delta, "delta");
    const bool periodic = modes.boundary == Boundary::Periodic;
    const bool literal = periodic && reading == PeriodicReading::Literal;
    cplx a1{}, a2{}, x{};
    for (std::size_t k = 0; k < modes.n(); ++k) {
        const double dk = modes.delta_k[k] + (delta - modes.delta);
        const cplx d = detail::checked_denominator(kI * dk + 0.5 * gamma_a, std::abs(dk) + gamma_a,
                                                   "collective mode");
        const cplx r1 = modes.root_gamma1_k[k];
        const cplx r2 = modes.root_gamma2_k[k];
        if (literal) {
            a1 += r1 * r1 / d;
            a2 += r2 * r2 / d;
            x += r1 * r2 / d;
        } else {
            a1 += std::norm(r1) / d;
            a2 += std::norm(r2) / d;
            x += static_cast<double>(modes.parity[k]) * std::conj(r1) * r2 / d;
        }
    }
    const cplx h1 = 1.0 + 0.5 * a1;
    const cplx h2 = 1.0 + 0.5 * a2;
    const cplx den = detail::checked_denominator(h1 * h2 - 0.25 * x * x, 1.0, "collective sum");
    const cplx s11 = 1.0 - (h2 * a1 - 0.5 * x * x) / den;
    const cplx s22 = 1.0 - (h1 * a2 - 0.5 * x * x) / den;
    const cplx s21 = (periodic ? x : -x) / den;
    return {s11, s21, s21, s22};
}

inline SMatrix s_necklace_chain_collective(const NecklaceChain& chain, double omega_d,
                                           PeriodicReading reading = PeriodicReading::ModulusSquared) {
    chain.validate();
    if (!chain.is_homogeneous()) throw UsageError("collective method needs a homogeneous chain");
    const double delta = chain.omega0[0] - omega_d;
    const auto modes = collective_modes(chain.n(), delta, chain.uniform_g(), chain.gamma1,
                                        chain.gamma2, chain.boundary);
    try {
        return s_necklace_chain_collective(modes, delta, chain.gamma_a[0], reading);
    } catch (const SingularityError& e) {
        throw SingularityError(e.what(), omega_d);
    }
}

inline Spectrum spectrum_necklace_chain(const NecklaceChain& chain, const FrequencyGrid& grid,
                                        Method method, unsigned threads = 1) {
    chain.validate();
    const bool hard = chain.boundary == Boundary::HardWall;
    auto applicable = [&]() {
        std::string s;
        if (hard) s += "site";
        if (hard && chain.n() == 2) s += ", n2";
        if (chain.is_homogeneous()) s += std::string(s.empty() ? "" : ", ") + "collective";
        return s.empty() ? std::string("none") : s;
    };
    switch (method) {
    case Method::Site: {
        if (!hard) throw UsageError("site needs a hard-wall chain; applicable methods: " + applicable());
        std::atomic<std::size_t> fallbacks{0};
        Spectrum s(grid,
                   sweep(grid,
                         [&](double w) {
                             bool fb = false;
                             SMatrix m = s_necklace_chain_site(chain, w, &fb);
                             if (fb) ++fallbacks;
                             return m;
                         },
                         threads),
                   Method::Site);
        if (fallbacks > 0) {
            s.diagnostics.push_back("tridiagonal pivot too small at " + std::to_string(fallbacks.load()) +
                                    " point(s); LU used there");
        }
        return s;
    }
    case Method::ClosedFormN2:
        if (chain.n() != 2 || !hard) {
            throw UsageError("n2 needs a 2-site hard-wall chain; applicable methods: " + applicable());
        }
        return Spectrum(grid,
                        sweep(grid, [&](double w) { return s_necklace_chain_n2(chain, w); }, threads),
                        Method::ClosedFormN2);
    case Method::Collective: {
        if (!chain.is_homogeneous()) {
            throw UsageError("collective needs a homogeneous chain; applicable methods: " + applicable());
        }
        const auto modes = collective_modes(chain.n(), 0.0, chain.uniform_g(), chain.gamma1,
                                            chain.gamma2, chain.boundary);
        const double w0 = chain.omega0[0];
        const double ga = chain.gamma_a[0];
        return Spectrum(grid,
                        sweep(grid,
                              [&](double w) {
                                  try {
                                      return s_necklace_chain_collective(modes, w0 - w, ga);
                                  } catch (const SingularityError& e) {
                                      throw SingularityError(e.what(), w);
                                  }
                              },
                              threads),
                        Method::Collective);
    }
    default:
        throw UsageError(std::string("method ") + std::string(to_string(method)) +
                         " does not apply to necklace chains; applicable methods: " + applicable());
    }
}

} // namespace resochain
