#pragma once

// Domain types shared by all solvers: resonator descriptions, scattering
// matrices, frequency grids and the decay-rate <-> quality-factor relations.
//
// Conventions:
//   * every frequency and rate is angular (rad/s);
//   * detuning is always Delta = omega0 - omega_d, evaluated per drive point;
//   * the imaginary unit follows the quantum-optics convention i = -j.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace resochain {

using cplx = std::complex<double>;

inline constexpr cplx kI{0.0, 1.0};
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double hz_to_rad(double hz) noexcept { return kTwoPi * hz; }
constexpr double rad_to_hz(double rad) noexcept { return rad / kTwoPi; }

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid physical input (negative rate, nonpositive Q, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A closed-form denominator vanished.
class SingularityError : public Error {
public:
    explicit SingularityError(const std::string& what,
                              std::optional<double> omega_d = std::nullopt)
        : Error(omega_d ? what + " (omega_d = " + std::to_string(*omega_d) + " rad/s)" : what),
          omega_d_(omega_d) {}
    std::optional<double> omega_d() const noexcept { return omega_d_; }

private:
    std::optional<double> omega_d_;
};

/// A method was requested for a system it does not apply to.
class UsageError : public Error {
public:
    using Error::Error;
};

/// A linear solve failed (singular matrix).
class SolverError : public Error {
public:
    explicit SolverError(const std::string& what, std::optional<double> omega_d = std::nullopt)
        : Error(omega_d ? what + " (omega_d = " + std::to_string(*omega_d) + " rad/s)" : what),
          omega_d_(omega_d) {}
    std::optional<double> omega_d() const noexcept { return omega_d_; }

private:
    std::optional<double> omega_d_;
};

/// Time integration did not reach steady state inside the horizon.
class TimeoutError : public Error {
public:
    TimeoutError(const std::string& what, double last_residual)
        : Error(what), last_residual_(last_residual) {}
    double last_residual() const noexcept { return last_residual_; }

private:
    double last_residual_;
};

/// A spectral feature is not bracketed by the frequency grid.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Least-squares fit failed or was ambiguous.
class FitError : public Error {
public:
    FitError(const std::string& what, double last_residual = std::numeric_limits<double>::quiet_NaN())
        : Error(what), last_residual_(last_residual) {}
    double last_residual() const noexcept { return last_residual_; }

private:
    double last_residual_;
};

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

enum class Geometry { Hanger, Necklace, Bridge };

enum class Boundary { HardWall, Periodic };

/// Provenance of a computed spectrum.
enum class Method { ClosedForm, ClosedFormN2, Dense, Thomas, Site, Collective, TimeDomain };

enum class Channel { S11, S21, S12, S22 };

constexpr std::string_view to_string(Geometry g) noexcept {
    switch (g) {
    case Geometry::Hanger: return "hanger";
    case Geometry::Necklace: return "necklace";
    case Geometry::Bridge: return "bridge";
    }
    return "?";
}

constexpr std::string_view to_string(Boundary b) noexcept {
    return b == Boundary::HardWall ? "hard-wall" : "periodic";
}

constexpr std::string_view to_string(Method m) noexcept {
    switch (m) {
    case Method::ClosedForm: return "closed-form";
    case Method::ClosedFormN2: return "n2";
    case Method::Dense: return "dense";
    case Method::Thomas: return "thomas";
    case Method::Site: return "site";
    case Method::Collective: return "collective";
    case Method::TimeDomain: return "timedomain";
    }
    return "?";
}

constexpr std::string_view to_string(Channel c) noexcept {
    switch (c) {
    case Channel::S11: return "S11";
    case Channel::S21: return "S21";
    case Channel::S12: return "S12";
    case Channel::S22: return "S22";
    }
    return "?";
}

inline std::optional<Geometry> parse_geometry(std::string_view s) {
    if (s == "hanger") return Geometry::Hanger;
    if (s == "necklace") return Geometry::Necklace;
    if (s == "bridge") return Geometry::Bridge;
    return std::nullopt;
}

inline std::optional<Boundary> parse_boundary(std::string_view s) {
    if (s == "hard-wall" || s == "hardwall") return Boundary::HardWall;
    if (s == "periodic") return Boundary::Periodic;
    return std::nullopt;
}

inline std::optional<Method> parse_method(std::string_view s) {
    for (Method m : {Method::ClosedForm, Method::ClosedFormN2, Method::Dense, Method::Thomas,
                     Method::Site, Method::Collective, Method::TimeDomain}) {
        if (s == to_string(m)) return m;
    }
    return std::nullopt;
}

inline std::optional<Channel> parse_channel(std::string_view s) {
    for (Channel c : {Channel::S11, Channel::S21, Channel::S12, Channel::S22}) {
        if (s == to_string(c)) return c;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Validation helpers
// ---------------------------------------------------------------------------

namespace detail {

inline void require_rate(double v, std::string_view name) {
    if (!std::isfinite(v) || v < 0.0) {
        throw DomainError(std::string(name) + " must be finite and >= 0, got " + std::to_string(v));
    }
}

inline void require_positive(double v, std::string_view name) {
    if (!std::isfinite(v) || v <= 0.0) {
        throw DomainError(std::string(name) + " must be finite and > 0, got " + std::to_string(v));
    }
}

inline void require_finite(double v, std::string_view name) {
    if (!std::isfinite(v)) {
        throw DomainError(std::string(name) + " must be finite");
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Scattering matrix
// ---------------------------------------------------------------------------

struct SMatrix {
    cplx s11{};
    cplx s21{};
    cplx s12{};
    cplx s22{};

    cplx operator[](Channel c) const noexcept {
        switch (c) {
        case Channel::S11: return s11;
        case Channel::S21: return s21;
        case Channel::S12: return s12;
        case Channel::S22: return s22;
        }
        return {};
    }

    /// Largest entry-wise deviation |a_ij - b_ij|.
    friend double max_abs_diff(const SMatrix& a, const SMatrix& b) noexcept {
        return std::max({std::abs(a.s11 - b.s11), std::abs(a.s21 - b.s21),
                         std::abs(a.s12 - b.s12), std::abs(a.s22 - b.s22)});
    }

    double max_abs() const noexcept {
        return std::max({std::abs(s11), std::abs(s21), std::abs(s12), std::abs(s22)});
    }

    bool is_finite() const noexcept {
        for (cplx v : {s11, s21, s12, s22}) {
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        }
        return true;
    }

    SMatrix scaled(cplx factor) const noexcept {
        return {s11 * factor, s21 * factor, s12 * factor, s22 * factor};
    }
};

// ---------------------------------------------------------------------------
// Single resonators and quality factors
// ---------------------------------------------------------------------------

struct SingleResonator {
    Geometry geometry = Geometry::Hanger;
    double omega0 = 0.0;
    double gamma_ext = 0.0; // hanger only
    double gamma1 = 0.0;    // necklace / bridge only
    double gamma2 = 0.0;    // necklace / bridge only
    double gamma_a = 0.0;

    static SingleResonator hanger(double omega0, double gamma, double gamma_a) {
        SingleResonator r{Geometry::Hanger, omega0, gamma, 0.0, 0.0, gamma_a};
        r.validate();
        return r;
    }

    static SingleResonator two_port(Geometry geometry, double omega0, double gamma1,
                                    double gamma2, double gamma_a) {
        SingleResonator r{geometry, omega0, 0.0, gamma1, gamma2, gamma_a};
        r.validate();
        return r;
    }

    void validate() const {
        detail::require_positive(omega0, "omega0");
        detail::require_rate(gamma_a, "gamma_a");
        if (geometry == Geometry::Hanger) {
            detail::require_rate(gamma_ext, "gamma");
            if (gamma1 != 0.0 || gamma2 != 0.0) {
                throw DomainError("hanger resonator has a single external rate; gamma1/gamma2 must be zero");
            }
        } else {
            detail::require_rate(gamma1, "gamma1");
            detail::require_rate(gamma2, "gamma2");
            if (gamma_ext != 0.0) {
                throw DomainError("two-port resonator uses gamma1/gamma2; gamma must be zero");
            }
        }
    }

    /// Total energy decay rate of the mode (sum of all channels).
    double total_decay() const noexcept {
        return geometry == Geometry::Hanger ? 2.0 * gamma_ext + gamma_a : gamma1 + gamma2 + gamma_a;
    }
};

struct QualityFactorSet {
    double omega_a = 0.0;
    double q_i = 0.0;
    double q_c1 = 0.0;
    std::optional<double> q_c2; // absent for hanger
};

/// gamma_a = omega_a / Qi; hanger gamma = omega_a / (2 Qc); two-port gamma_m = omega_a / Qc_m.
inline SingleResonator rates_from_q(const QualityFactorSet& q, Geometry geometry) {
    detail::require_positive(q.omega_a, "omega_a");
    detail::require_positive(q.q_i, "Qi");
    detail::require_positive(q.q_c1, "Qc");
    const double gamma_a = q.omega_a / q.q_i;
    if (geometry == Geometry::Hanger) {
        return SingleResonator::hanger(q.omega_a, q.omega_a / (2.0 * q.q_c1), gamma_a);
    }
    if (!q.q_c2) throw DomainError("two-port geometry requires Qc2");
    detail::require_positive(*q.q_c2, "Qc2");
    return SingleResonator::two_port(geometry, q.omega_a, q.omega_a / q.q_c1,
                                     q.omega_a / *q.q_c2, gamma_a);
}

/// Exact inverse of rates_from_q. A zero rate means a divergent Q and is rejected.
inline QualityFactorSet q_from_rates(const SingleResonator& r) {
    r.validate();
    detail::require_positive(r.gamma_a, "gamma_a (Qi diverges)");
    QualityFactorSet q;
    q.omega_a = r.omega0;
    q.q_i = r.omega0 / r.gamma_a;
    if (r.geometry == Geometry::Hanger) {
        detail::require_positive(r.gamma_ext, "gamma (Qc diverges)");
        q.q_c1 = r.omega0 / (2.0 * r.gamma_ext);
    } else {
        detail::require_positive(r.gamma1, "gamma1 (Qc1 diverges)");
        detail::require_positive(r.gamma2, "gamma2 (Qc2 diverges)");
        q.q_c1 = r.omega0 / r.gamma1;
        q.q_c2 = r.omega0 / r.gamma2;
    }
    return q;
}

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

/// N hanger resonators side-coupled to one waveguide, adjacent sites separated
/// by the propagation phase theta = omega_d * tau.
struct HangerChain {
    std::vector<double> omega0;  // per-site resonance frequency
    std::vector<double> gamma;   // per-site external rate
    std::vector<double> gamma_a; // per-site intrinsic rate
    double theta = 0.0;

    std::size_t n() const noexcept { return omega0.size(); }

    static HangerChain homogeneous(std::size_t n, double omega0, double gamma, double gamma_a,
                                   double theta) {
        HangerChain c{std::vector<double>(n, omega0), std::vector<double>(n, gamma),
                      std::vector<double>(n, gamma_a), theta};
        c.validate();
        return c;
    }

    void validate() const {
        if (omega0.empty()) throw DomainError("hanger chain needs at least one site");
        if (gamma.size() != n() || gamma_a.size() != n()) {
            throw DomainError("hanger chain lists must all have length n");
        }
        for (std::size_t j = 0; j < n(); ++j) {
            detail::require_positive(omega0[j], "omega0");
            detail::require_rate(gamma[j], "gamma");
            detail::require_rate(gamma_a[j], "gamma_a");
        }
        detail::require_finite(theta, "theta");
    }

    /// Exact floating-point equality of all per-site parameters.
    bool is_homogeneous() const noexcept {
        for (std::size_t j = 1; j < n(); ++j) {
            if (omega0[j] != omega0[0] || gamma[j] != gamma[0] || gamma_a[j] != gamma_a[0]) {
                return false;
            }
        }
        return true;
    }
};

/// N necklace resonators coupled end-to-end with hopping g_j, port 1 at site 1
/// and port 2 at site N.
struct NecklaceChain {
    std::vector<double> omega0;  // per-site resonance frequency
    std::vector<double> g;       // hopping strengths, length n - 1
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    std::vector<double> gamma_a; // per-site intrinsic rate
    Boundary boundary = Boundary::HardWall;

    std::size_t n() const noexcept { return omega0.size(); }

    static NecklaceChain homogeneous(std::size_t n, double omega0, double g, double gamma1,
                                     double gamma2, double gamma_a,
                                     Boundary boundary = Boundary::HardWall) {
        NecklaceChain c{std::vector<double>(n, omega0),
                        std::vector<double>(n > 0 ? n - 1 : 0, g),
                        gamma1,
                        gamma2,
                        std::vector<double>(n, gamma_a),
                        boundary};
        c.validate();
        return c;
    }

    void validate() const {
        if (omega0.empty()) throw DomainError("necklace chain needs at least one site");
        if (g.size() != n() - 1) throw DomainError("necklace chain needs n - 1 hopping strengths");
        if (gamma_a.size() != n()) throw DomainError("necklace chain gamma_a list must have length n");
        for (std::size_t j = 0; j < n(); ++j) {
            detail::require_positive(omega0[j], "omega0");
            detail::require_rate(gamma_a[j], "gamma_a");
        }
        for (double gj : g) detail::require_finite(gj, "g");
        detail::require_rate(gamma1, "gamma1");
        detail::require_rate(gamma2, "gamma2");
    }

    bool is_homogeneous() const noexcept {
        for (std::size_t j = 1; j < n(); ++j) {
            if (omega0[j] != omega0[0] || gamma_a[j] != gamma_a[0]) return false;
        }
        for (std::size_t j = 1; j < g.size(); ++j) {
            if (g[j] != g[0]) return false;
        }
        return true;
    }

    /// Uniform hopping of a homogeneous chain (0 for a single site).
    double uniform_g() const noexcept { return g.empty() ? 0.0 : g[0]; }
};

// ---------------------------------------------------------------------------
// Frequency grid and spectrum
// ---------------------------------------------------------------------------

class FrequencyGrid {
public:
    FrequencyGrid() = default;

    explicit FrequencyGrid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.empty()) throw DomainError("frequency grid needs at least one point");
        for (std::size_t i = 0; i < points_.size(); ++i) {
            detail::require_finite(points_[i], "grid point");
            if (i > 0 && !(points_[i] > points_[i - 1])) {
                throw DomainError("frequency grid must be strictly increasing");
            }
        }
    }

    /// n evenly spaced points from start to stop inclusive (rad/s).
    static FrequencyGrid linspace(double start, double stop, std::size_t n) {
        if (n == 0) throw DomainError("frequency grid needs at least one point");
        if (n == 1) return FrequencyGrid({start});
        std::vector<double> pts(n);
        const double step = (stop - start) / static_cast<double>(n - 1);
        for (std::size_t i = 0; i < n; ++i) pts[i] = start + step * static_cast<double>(i);
        pts.back() = stop;
        return FrequencyGrid(std::move(pts));
    }

    /// Symmetric grid omega0 +/- half_span.
    static FrequencyGrid centered(double omega0, double half_span, std::size_t n) {
        return linspace(omega0 - half_span, omega0 + half_span, n);
    }

    std::size_t size() const noexcept { return points_.size(); }
    double operator[](std::size_t i) const noexcept { return points_[i]; }
    const std::vector<double>& points() const noexcept { return points_; }
    auto begin() const noexcept { return points_.begin(); }
    auto end() const noexcept { return points_.end(); }

private:
    std::vector<double> points_;
};

struct Spectrum {
    FrequencyGrid grid;
    std::vector<SMatrix> matrices;
    Method method = Method::ClosedForm;
    std::vector<std::string> diagnostics; // solver fallbacks and similar events

    Spectrum() = default;
    Spectrum(FrequencyGrid g, std::vector<SMatrix> m, Method meth)
        : grid(std::move(g)), matrices(std::move(m)), method(meth) {
        if (matrices.size() != grid.size()) {
            throw DomainError("spectrum needs one S-matrix per grid point");
        }
    }

    std::size_t size() const noexcept { return grid.size(); }

    std::vector<cplx> channel(Channel c) const {
        std::vector<cplx> out;
        out.reserve(matrices.size());
        for (const auto& s : matrices) out.push_back(s[c]);
        return out;
    }
};

} // namespace resochain
