#pragma once

// Closed-form scattering matrices of a single resonator in the hanger,
// necklace and bridge geometries.

#include <cmath>

#include "resochain/model.hpp"
#include "resochain/sweep.hpp"

namespace resochain {

namespace detail {

// Denominators with |D| below kSingularScale * (rate scale) are treated as zero.
inline constexpr double kSingularScale = 1e-30;

inline cplx checked_denominator(cplx d, double scale, const char* what) {
    if (!(std::abs(d) > kSingularScale * scale) || !std::isfinite(std::abs(d))) {
        throw SingularityError(std::string(what) + ": vanishing denominator");
    }
    return d;
}

} // namespace detail

/// s11 = s22 = -gamma / (i delta + gamma + gamma_a/2), s21 = s12 = 1 + s11.
inline SMatrix s_hanger(double delta, double gamma, double gamma_a) {
    detail::require_rate(gamma, "gamma");
    detail::require_rate(gamma_a, "gamma_a");
    const double scale = std::abs(delta) + gamma + gamma_a;
    const cplx den = detail::checked_denominator(kI * delta + gamma + 0.5 * gamma_a, scale, "s_hanger");
    const cplx r = -gamma / den;
    const cplx t = 1.0 + r;
    return {r, t, t, r};
}

namespace detail {

inline SMatrix two_port(double delta, double gamma1, double gamma2, double gamma_a, double sign,
                        const char* what) {
    require_rate(gamma1, "gamma1");
    require_rate(gamma2, "gamma2");
    require_rate(gamma_a, "gamma_a");
    const double scale = std::abs(delta) + gamma1 + gamma2 + gamma_a;
    const cplx den =
        checked_denominator(kI * delta + 0.5 * (gamma1 + gamma2) + 0.5 * gamma_a, scale, what);
    const cplx t = sign * std::sqrt(gamma1 * gamma2) / den;
    return {1.0 - gamma1 / den, t, t, 1.0 - gamma2 / den};
}

} // namespace detail

/// Necklace (end-coupled) resonator: s21 = +sqrt(gamma1 gamma2) / D.
inline SMatrix s_necklace(double delta, double gamma1, double gamma2, double gamma_a) {
    return detail::two_port(delta, gamma1, gamma2, gamma_a, +1.0, "s_necklace");
}

/// Bridge resonator: identical to the necklace except s21 = -sqrt(gamma1 gamma2) / D.
inline SMatrix s_bridge(double delta, double gamma1, double gamma2, double gamma_a) {
    return detail::two_port(delta, gamma1, gamma2, gamma_a, -1.0, "s_bridge");
}

/// Closed form for the resonator's geometry at drive frequency omega_d.
inline SMatrix s_single(const SingleResonator& res, double omega_d) {
    const double delta = res.omega0 - omega_d;
    switch (res.geometry) {
    case Geometry::Hanger: return s_hanger(delta, res.gamma_ext, res.gamma_a);
    case Geometry::Necklace: return s_necklace(delta, res.gamma1, res.gamma2, res.gamma_a);
    case Geometry::Bridge: return s_bridge(delta, res.gamma1, res.gamma2, res.gamma_a);
    }
    throw UsageError("unknown geometry");
}

inline Spectrum spectrum_single(const SingleResonator& res, const FrequencyGrid& grid,
                                unsigned threads = 1) {
    res.validate();
    auto eval = [&](double w) {
        try {
            return s_single(res, w);
        } catch (const SingularityError& e) {
            throw SingularityError(e.what(), w);
        }
    };
    return Spectrum(grid, sweep(grid, eval, threads), Method::ClosedForm);
}

} // namespace resochain
