#pragma once

// Time-domain oracle: integrates the coupled-mode equations under a constant
// coherent drive until the amplitudes settle, then reads the S-matrix off the
// output maps. The equations come from the same builders the frequency-domain
// site solvers use.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <boost/numeric/odeint.hpp>

#include "resochain/equations.hpp"
#include "resochain/hanger_chain.hpp"
#include "resochain/model.hpp"
#include "resochain/necklace_chain.hpp"
#include "resochain/sweep.hpp"

namespace resochain {

/// da/dt = a_matrix a + drive_q * in_q;  out = passthrough * in + output_rows * a.
struct MeanFieldSystem {
    Eigen::Index dim = 0;
    linalg::Matrix a_matrix;
    linalg::Vector drive_vec_port1;
    linalg::Vector drive_vec_port2;
    linalg::Matrix output_rows;  // 2 x dim, row q = output port q
    Eigen::Matrix2cd passthrough; // (out, in)
    double min_damping = 0.0;     // min over eigenvalues of -Re(lambda)
    double max_rate = 0.0;        // max |lambda|
    double min_singular = 0.0;    // smallest singular value of the drift
    std::vector<std::string> warnings;

    bool stable() const noexcept { return min_damping > 0.0; }
    const linalg::Vector& drive(int port) const {
        if (port != 1 && port != 2) throw UsageError("port must be 1 or 2");
        return port == 1 ? drive_vec_port1 : drive_vec_port2;
    }
};

using SystemVariant = std::variant<SingleResonator, HangerChain, NecklaceChain>;

inline CoupledModeEquations equations(const SingleResonator& res, double omega_d) {
    res.validate();
    switch (res.geometry) {
    case Geometry::Hanger:
        return equations(HangerChain::homogeneous(1, res.omega0, res.gamma_ext, res.gamma_a, 0.0), omega_d);
    case Geometry::Necklace:
        return equations(NecklaceChain::homogeneous(1, res.omega0, 0.0, res.gamma1, res.gamma2, res.gamma_a),
                         omega_d);
    case Geometry::Bridge:
        return bridge_equations(res.omega0 - omega_d, res.gamma1, res.gamma2, res.gamma_a);
    }
    throw UsageError("unknown geometry");
}

inline MeanFieldSystem to_mean_field(const CoupledModeEquations& eq) {
    MeanFieldSystem sys;
    sys.dim = eq.dim();
    sys.a_matrix = -eq.m;
    sys.drive_vec_port1 = -eq.b.col(0);
    sys.drive_vec_port2 = -eq.b.col(1);
    sys.output_rows = eq.c;
    sys.passthrough = eq.p;
    const Eigen::ComplexEigenSolver<linalg::Matrix> es(sys.a_matrix, false);
    double kmin = std::numeric_limits<double>::infinity();
    double rmax = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        kmin = std::min(kmin, -es.eigenvalues()[i].real());
        rmax = std::max(rmax, std::abs(es.eigenvalues()[i]));
    }
    sys.min_damping = kmin;
    sys.max_rate = rmax;
    const Eigen::JacobiSVD<linalg::Matrix> svd(sys.a_matrix);
    sys.min_singular = svd.singularValues()(svd.singularValues().size() - 1);
    if (!(kmin > 0.0)) {
        sys.warnings.push_back("drift has an eigenvalue with non-negative real part; steady state may not exist");
    }
    return sys;
}

inline MeanFieldSystem build_mean_field(const SystemVariant& system, double omega_d) {
    return std::visit([&](const auto& s) { return to_mean_field(equations(s, omega_d)); }, system);
}

struct IntegrationSettings {
    double dt = 0.0;    // initial step (s)
    double t_end = 0.0; // horizon (s)
    double tol = 1e-10; // steady-state residual threshold

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("dt must be > 0");
        if (!(t_end > dt) || !std::isfinite(t_end)) throw DomainError("t_end must exceed dt");
        if (!(tol > 0.0)) throw DomainError("tol must be > 0");
    }

    /// dt = 0.01 / max rate, t_end = 50 / min damping.
    static IntegrationSettings defaults_for(const MeanFieldSystem& sys) {
        IntegrationSettings s;
        const double rmax = sys.max_rate > 0.0 ? sys.max_rate : 1.0;
        s.dt = 0.01 / rmax;
        s.t_end = sys.min_damping > 0.0 ? 50.0 / sys.min_damping : 1e4 / rmax;
        s.t_end = std::max(s.t_end, 2.0 * s.dt);
        return s;
    }
};

/// Exact fixed point a = -A^{-1} drive * amplitude.
inline linalg::Vector steady_state_direct(const MeanFieldSystem& sys, int port, cplx amplitude = 1.0) {
    const linalg::Vector rhs = -sys.drive(port) * amplitude;
    return linalg::solve_dense(sys.a_matrix, rhs);
}

struct SteadyState {
    linalg::Vector a;
    double residual = 0.0; // |da/dt| / (sigma_min |a|), bounds the relative distance to the fixed point
    double t = 0.0;
};

/// Integrate from a = 0 with constant drive at `port` until the residual
/// |da/dt| / (sigma_min |a|) drops below settings.tol. Since a - a* = A^-1 da/dt,
/// the residual bounds the relative error of the state. Embedded 5(4)
/// Dormand-Prince pair with step control; tolerances scale with the drive
/// amplitude so the trajectory is exactly linear in it.
inline SteadyState integrate_to_steady_state(const MeanFieldSystem& sys, int port,
                                             const IntegrationSettings& settings,
                                             cplx amplitude = 1.0) {
    namespace ode = boost::numeric::odeint;
    settings.validate();
    const Eigen::Index n = sys.dim;
    const linalg::Vector f = sys.drive(port) * amplitude;
    using State = std::vector<double>;

    // Real/imaginary split state.
    auto rhs = [&](const State& x, State& dxdt, double /*t*/) {
        linalg::Vector a(n);
        for (Eigen::Index i = 0; i < n; ++i) a[i] = {x[2 * i], x[2 * i + 1]};
        const linalg::Vector d = sys.a_matrix * a + f;
        for (Eigen::Index i = 0; i < n; ++i) {
            dxdt[2 * i] = d[i].real();
            dxdt[2 * i + 1] = d[i].imag();
        }
    };
    auto residual_of = [&](const State& x, State& dxdt) {
        rhs(x, dxdt, 0.0);
        double na = 0.0, nd = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            na += x[i] * x[i];
            nd += dxdt[i] * dxdt[i];
        }
        if (na == 0.0 || !(sys.min_damping > 0.0) || !(sys.min_singular > 0.0)) {
            return std::numeric_limits<double>::infinity();
        }
        return std::sqrt(nd / na) / sys.min_singular;
    };

    const double kscale = sys.min_damping > 0.0 ? sys.min_damping : (sys.max_rate > 0.0 ? sys.max_rate : 1.0);
    const double a_scale = std::max(f.norm() / kscale, 1e-300);
    const double abs_tol = 1e-16 * a_scale;
    const double rel_tol = 1e-14;
    auto stepper = ode::make_controlled<ode::runge_kutta_dopri5<State>>(abs_tol, rel_tol);

    State x(static_cast<std::size_t>(2 * n), 0.0), dxdt(x.size());
    double t = 0.0;
    double dt = settings.dt;
    double res = std::numeric_limits<double>::infinity();
    std::size_t rejects = 0;
    while (t < settings.t_end) {
        if (t + dt > settings.t_end) dt = settings.t_end - t;
        if (stepper.try_step(rhs, x, t, dt) == ode::success) {
            rejects = 0;
            res = residual_of(x, dxdt);
            if (res < settings.tol) {
                SteadyState out;
                out.a.resize(n);
                for (Eigen::Index i = 0; i < n; ++i) out.a[i] = {x[2 * i], x[2 * i + 1]};
                out.residual = res;
                out.t = t;
                return out;
            }
        } else if (++rejects > 500) {
            break;
        }
        if (!std::isfinite(x[0])) break;
    }
    throw TimeoutError("steady state not reached within t_end = " + std::to_string(settings.t_end) + " s", res);
}

inline linalg::Vector integrate_to_steady(const MeanFieldSystem& sys, int port,
                                          const IntegrationSettings& settings, cplx amplitude = 1.0) {
    return integrate_to_steady_state(sys, port, settings, amplitude).a;
}

/// Drive each port in turn and apply the output maps.
inline SMatrix s_from_timedomain(const SystemVariant& system, double omega_d,
                                 std::optional<IntegrationSettings> settings = std::nullopt) {
    const MeanFieldSystem sys = build_mean_field(system, omega_d);
    const IntegrationSettings st = settings ? *settings : IntegrationSettings::defaults_for(sys);
    linalg::Matrix a(sys.dim, 2);
    try {
        a.col(0) = integrate_to_steady(sys, 1, st);
        a.col(1) = integrate_to_steady(sys, 2, st);
    } catch (const TimeoutError& e) {
        throw TimeoutError(std::string(e.what()) + " (omega_d = " + std::to_string(omega_d) + " rad/s)",
                           e.last_residual());
    }
    return to_smatrix(sys.passthrough + sys.output_rows * a);
}

inline Spectrum spectrum_timedomain(const SystemVariant& system, const FrequencyGrid& grid,
                                    std::optional<IntegrationSettings> settings = std::nullopt,
                                    unsigned threads = 1) {
    std::visit([](const auto& s) { s.validate(); }, system);
    return Spectrum(grid, sweep(grid, [&](double w) { return s_from_timedomain(system, w, settings); }, threads),
                    Method::TimeDomain);
}

} // namespace resochain
