#pragma once

// Spectrum post-processing: resonance finding, FWHM, line-shape
// classification and single-resonator Q extraction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resochain/model.hpp"
#include "resochain/single.hpp"

namespace resochain {

enum class FeatureKind { Dip, Peak };

constexpr std::string_view to_string(FeatureKind k) noexcept {
    return k == FeatureKind::Dip ? "dip" : "peak";
}

struct ResonanceFeature {
    double center = 0.0;             // rad/s, sub-grid refined
    FeatureKind kind = FeatureKind::Dip;
    double magnitude_extremum = 0.0; // |S| at the refined center
    std::optional<double> fwhm;      // rad/s, absent when a flank leaves the grid
    double prominence = 0.0;         // |S| height above (peak) or depth below (dip) the local base
    Channel channel = Channel::S21;
    std::size_t index = 0;           // grid index of the sampled extremum
};

namespace detail {

inline std::vector<double> magnitudes(const Spectrum& spec, Channel ch) {
    std::vector<double> y(spec.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::abs(spec.matrices[i][ch]);
    return y;
}

// Topographic prominence of the extremum at i. `sign` = +1 for peaks, -1 for
// dips (the dip is treated as a peak of -y).
inline double prominence_at(const std::vector<double>& y, std::size_t i, double sign) {
    const double top = sign * y[i];
    double left = top;
    for (std::size_t j = i; j-- > 0;) {
        if (sign * y[j] > top) break;
        left = std::min(left, sign * y[j]);
    }
    double right = top;
    for (std::size_t j = i + 1; j < y.size(); ++j) {
        if (sign * y[j] > top) break;
        right = std::min(right, sign * y[j]);
    }
    return top - std::max(left, right);
}

// Vertex of the parabola through three (x, v) points, clamped to [x0, x2].
inline void parabola_vertex(double x0, double v0, double x1, double v1, double x2, double v2,
                            double& xv, double& vv) {
    const double d01 = (v1 - v0) / (x1 - x0);
    const double d12 = (v2 - v1) / (x2 - x1);
    const double a = (d12 - d01) / (x2 - x0);
    if (a == 0.0 || !std::isfinite(a)) {
        xv = x1;
        vv = v1;
        return;
    }
    const double b = d01 - a * (x0 + x1);
    xv = std::clamp(-b / (2.0 * a), x0, x2);
    vv = v1 + (xv - x1) * (d01 + a * (xv - x0));
}

} // namespace detail

/// Width of a feature at half height (peak) or half depth (dip) of |S|^2
/// relative to its prominence base, by linear interpolation between samples.
inline double fwhm(const Spectrum& spec, const ResonanceFeature& f) {
    const auto y = detail::magnitudes(spec, f.channel);
    const std::size_t n = y.size();
    const std::size_t i = f.index;
    if (i >= n) throw RangeError("feature index outside the grid");
    const double sign = f.kind == FeatureKind::Peak ? 1.0 : -1.0;
    const double base = y[i] - sign * f.prominence;
    const double half = 0.5 * (y[i] * y[i] + base * base);
    auto inside = [&](std::size_t j) { return sign * (y[j] * y[j] - half) > 0.0; };
    auto cross = [&](std::size_t a, std::size_t b) {
        const double ya = y[a] * y[a], yb = y[b] * y[b];
        const double t = (half - ya) / (yb - ya);
        return spec.grid[a] + t * (spec.grid[b] - spec.grid[a]);
    };
    std::size_t l = i;
    while (l > 0 && inside(l - 1)) --l;
    if (l == 0) throw RangeError("left flank of the feature is not bracketed by the grid");
    std::size_t r = i;
    while (r + 1 < n && inside(r + 1)) ++r;
    if (r + 1 == n) throw RangeError("right flank of the feature is not bracketed by the grid");
    const double w = cross(r + 1, r) - cross(l - 1, l);
    if (!(w > 0.0)) throw RangeError("degenerate feature width");
    return w;
}

/// Local extrema of |S_channel| with prominence >= min_prominence. Peaks must
/// rise above and dips fall below the mean of the two end samples.
inline std::vector<ResonanceFeature> find_resonances(const Spectrum& spec, Channel channel,
                                                     double min_prominence) {
    if (spec.size() < 5) throw DomainError("resonance search needs at least 5 grid points");
    const auto y = detail::magnitudes(spec, channel);
    const std::size_t n = y.size();
    const double baseline = 0.5 * (y.front() + y.back());
    std::vector<ResonanceFeature> out;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const bool peak = y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > baseline;
        const bool dip = y[i] < y[i - 1] && y[i] <= y[i + 1] && y[i] < baseline;
        if (!peak && !dip) continue;
        const double sign = peak ? 1.0 : -1.0;
        const double prom = detail::prominence_at(y, i, sign);
        if (!(prom >= min_prominence) || prom <= 0.0) continue;
        ResonanceFeature f;
        f.kind = peak ? FeatureKind::Peak : FeatureKind::Dip;
        f.channel = channel;
        f.index = i;
        f.prominence = prom;
        double xv = 0.0, vv = 0.0;
        detail::parabola_vertex(spec.grid[i - 1], y[i - 1] * y[i - 1], spec.grid[i], y[i] * y[i],
                                spec.grid[i + 1], y[i + 1] * y[i + 1], xv, vv);
        f.center = xv;
        f.magnitude_extremum = std::sqrt(std::max(vv, 0.0));
        try {
            f.fwhm = fwhm(spec, f);
        } catch (const RangeError&) {
            f.fwhm.reset();
        }
        out.push_back(f);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Line-shape classification
// ---------------------------------------------------------------------------

enum class LineShape { LorentzianSymmetric, FanoSymmetric, FanoAsymmetric };

constexpr std::string_view to_string(LineShape s) noexcept {
    switch (s) {
    case LineShape::LorentzianSymmetric: return "lorentzian-symmetric";
    case LineShape::FanoSymmetric: return "fano-symmetric";
    case LineShape::FanoAsymmetric: return "fano-asymmetric";
    }
    return "?";
}

struct ClassifierConfig {
    double asymmetry_threshold = 0.05; // |A| above this is asymmetric
    double phase_excess_threshold = 0.3; // rad of phase deviation from a Lorentzian
    double window_fwhm = 2.0;          // half-window in units of the FWHM
    std::size_t samples = 801;         // quadrature samples per half-window
};

struct LineShapeReport {
    LineShape shape = LineShape::LorentzianSymmetric;
    double asymmetry = 0.0;
    double phase_excursion = 0.0;           // max - min of unwrapped arg S over the window
    double lorentzian_phase_excursion = 0.0; // same for a single pole of equal width and depth
    double phase_deviation = 0.0;           // unwrapped range of arg(S / Lorentzian)
    double fwhm = 0.0;
};

namespace detail {

inline cplx interpolate(const Spectrum& spec, Channel ch, double w) {
    const auto& g = spec.grid.points();
    if (w < g.front() || w > g.back()) throw RangeError("classification window leaves the grid");
    auto it = std::upper_bound(g.begin(), g.end(), w);
    if (it == g.end()) return spec.matrices.back()[ch];
    const auto j = static_cast<std::size_t>(it - g.begin());
    if (j == 0) return spec.matrices.front()[ch];
    const double t = (w - g[j - 1]) / (g[j] - g[j - 1]);
    return spec.matrices[j - 1][ch] * (1.0 - t) + spec.matrices[j][ch] * t;
}

inline double unwrapped_range(const std::vector<double>& phase) {
    if (phase.empty()) return 0.0;
    double prev = phase[0], acc = phase[0], lo = acc, hi = acc;
    for (std::size_t i = 1; i < phase.size(); ++i) {
        double d = phase[i] - prev;
        d -= kTwoPi * std::round(d / kTwoPi);
        acc += d;
        prev = phase[i];
        lo = std::min(lo, acc);
        hi = std::max(hi, acc);
    }
    return hi - lo;
}

} // namespace detail

/// A = int(|S(w0+d)| - |S(w0-d)|) / int(|S(w0+d)| + |S(w0-d)|) over the window
/// decides asymmetry. Symmetric features are Fano when arg(S / L), with L a
/// single-pole Lorentzian of the same width and depth, is not flat over the
/// window (its unwrapped range exceeds phase_excess_threshold).
inline LineShapeReport analyze_lineshape(const Spectrum& spec, const ResonanceFeature& f,
                                         const ClassifierConfig& cfg = {}) {
    LineShapeReport rep;
    rep.fwhm = f.fwhm ? *f.fwhm : fwhm(spec, f);
    const double half = cfg.window_fwhm * rep.fwhm;
    const double c = f.center;
    if (c - half < spec.grid[0] || c + half > spec.grid[spec.size() - 1]) {
        throw RangeError("classification window of +/-" + std::to_string(cfg.window_fwhm) +
                         " FWHM leaves the grid");
    }
    const std::size_t m = std::max<std::size_t>(cfg.samples, 3);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double d = half * static_cast<double>(k) / static_cast<double>(m - 1);
        const double wgt = (k == 0 || k + 1 == m) ? 0.5 : 1.0;
        const double up = std::abs(detail::interpolate(spec, f.channel, c + d));
        const double dn = std::abs(detail::interpolate(spec, f.channel, c - d));
        num += wgt * (up - dn);
        den += wgt * (up + dn);
    }
    rep.asymmetry = den > 0.0 ? num / den : 0.0;

    // Reference pole of equal width and depth. A dip's depth fixes |m| only, so
    // both the under- and the overcoupled sign are tried and the closer one kept.
    const double kappa = 0.5 * rep.fwhm;
    const double sign = f.kind == FeatureKind::Peak ? 1.0 : -1.0;
    const double base = f.magnitude_extremum - sign * f.prominence;
    const double depth = base > 0.0 ? std::clamp(f.magnitude_extremum / base, 0.0, 1.0) : 0.0;
    std::vector<cplx> data;
    std::vector<double> offsets;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const double w = spec.grid[i];
        if (w < c - half || w > c + half) continue;
        data.push_back(spec.matrices[i][f.channel]);
        offsets.push_back(w - c);
    }
    auto reference = [&](double m) {
        std::vector<cplx> l;
        for (double d : offsets) {
            // Detuning is omega0 - omega_d = -d.
            l.push_back(f.kind == FeatureKind::Dip ? (-kI * d + m * kappa) / (-kI * d + kappa)
                                                   : 1.0 / (-kI * d + kappa));
        }
        return l;
    };
    auto deviation = [&](const std::vector<cplx>& l) {
        std::vector<double> r;
        for (std::size_t k = 0; k < l.size(); ++k) r.push_back(std::arg(data[k] / l[k]));
        return detail::unwrapped_range(r);
    };
    std::vector<cplx> lor = reference(depth);
    rep.phase_deviation = deviation(lor);
    if (f.kind == FeatureKind::Dip) {
        auto over = reference(-depth);
        const double dv = deviation(over);
        if (dv < rep.phase_deviation) {
            rep.phase_deviation = dv;
            lor = std::move(over);
        }
    }
    std::vector<double> phase, ref;
    for (std::size_t k = 0; k < data.size(); ++k) {
        phase.push_back(std::arg(data[k]));
        ref.push_back(std::arg(lor[k]));
    }
    rep.phase_excursion = detail::unwrapped_range(phase);
    rep.lorentzian_phase_excursion = detail::unwrapped_range(ref);

    if (std::abs(rep.asymmetry) > cfg.asymmetry_threshold) {
        rep.shape = LineShape::FanoAsymmetric;
    } else if (rep.phase_deviation > cfg.phase_excess_threshold) {
        rep.shape = LineShape::FanoSymmetric;
    } else {
        rep.shape = LineShape::LorentzianSymmetric;
    }
    return rep;
}

inline LineShape classify_lineshape(const Spectrum& spec, const ResonanceFeature& f,
                                    const ClassifierConfig& cfg = {}) {
    return analyze_lineshape(spec, f, cfg).shape;
}

// ---------------------------------------------------------------------------
// Single-resonator fit
// ---------------------------------------------------------------------------

/// Fitted parameters. extra_linewidth is a fixed phenomenological broadening
/// (rad/s, added to the total linewidth) and is never folded into q_i: a
/// measured width need not reflect energy dissipation alone.
struct FitResult {
    Geometry geometry = Geometry::Hanger;
    double omega0 = 0.0;
    double q_i = 0.0;
    double q_c = 0.0;
    std::optional<double> q_c2;
    double extra_linewidth = 0.0;
    double residual_rms = 0.0;
    std::vector<double> covariance_diag; // omega0, then rates in model order (rad/s)^2
    SingleResonator rates;
    int iterations = 0;
};

struct FitOptions {
    double extra_linewidth = 0.0;
    int max_iterations = 200;
    double min_prominence = 0.02;
    double ambiguity_ratio = 0.5; // second feature this prominent relative to the first is ambiguous
};

namespace detail {

inline SMatrix fit_model(Geometry geo, const Eigen::VectorXd& p, double extra, double w) {
    const double delta = p[0] - w;
    if (geo == Geometry::Hanger) return s_hanger(delta, p[1], p[2] + extra);
    if (geo == Geometry::Necklace) return s_necklace(delta, p[1], p[2], p[3] + extra);
    return s_bridge(delta, p[1], p[2], p[3] + extra);
}

// Channels entering the residual: S21 and S11, plus S22 for two-port geometries.
inline Eigen::VectorXd fit_residual(const Spectrum& spec, Geometry geo, const Eigen::VectorXd& p,
                                    double extra) {
    const std::size_t nch = geo == Geometry::Hanger ? 2 : 3;
    Eigen::VectorXd r(static_cast<Eigen::Index>(2 * nch * spec.size()));
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const SMatrix m = fit_model(geo, p, extra, spec.grid[i]);
        const SMatrix& d = spec.matrices[i];
        const cplx diff[3] = {m.s21 - d.s21, m.s11 - d.s11, m.s22 - d.s22};
        for (std::size_t c = 0; c < nch; ++c) {
            r[k++] = diff[c].real();
            r[k++] = diff[c].imag();
        }
    }
    return r;
}

inline double q_or_inf(double omega, double rate) {
    return rate > 0.0 ? omega / rate : std::numeric_limits<double>::infinity();
}

} // namespace detail

/// Starting point from the dominant |S21| feature: hanger dips give the total
/// width and the depth; two-port peaks give the width, and the reflection at
/// resonance splits it between the ports.
inline SingleResonator initial_guess(const Spectrum& spec, Geometry geo, const FitOptions& opt = {}) {
    auto feats = find_resonances(spec, Channel::S21, opt.min_prominence);
    const FeatureKind want = geo == Geometry::Hanger ? FeatureKind::Dip : FeatureKind::Peak;
    std::erase_if(feats, [&](const ResonanceFeature& f) { return f.kind != want; });
    if (feats.empty()) throw FitError("no resonance feature of the expected kind in |S21|");
    std::sort(feats.begin(), feats.end(),
              [](const auto& a, const auto& b) { return a.prominence > b.prominence; });
    if (feats.size() > 1 && feats[1].prominence >= opt.ambiguity_ratio * feats[0].prominence) {
        throw FitError("ambiguous: " + std::to_string(feats.size()) + " comparable resonance features");
    }
    const ResonanceFeature& f = feats[0];
    if (!f.fwhm) throw FitError("resonance width is not bracketed by the grid");
    const double kappa = 0.5 * *f.fwhm;
    const double extra = 0.5 * opt.extra_linewidth;
    if (geo == Geometry::Hanger) {
        const double base = f.magnitude_extremum + f.prominence;
        const double m = base > 0.0 ? std::clamp(f.magnitude_extremum / base, 0.0, 1.0) : 0.0;
        const double big_gamma = m * kappa;
        SingleResonator r{Geometry::Hanger, f.center, std::max(kappa - big_gamma, 1e-6 * kappa), 0.0, 0.0,
                          std::max(2.0 * (big_gamma - extra), 0.0)};
        return r;
    }
    const cplx s11 = spec.matrices[f.index].s11;
    const cplx s22 = spec.matrices[f.index].s22;
    const double g1 = std::max(kappa * (1.0 - s11.real()), 1e-6 * kappa);
    const double g2 = std::max(kappa * (1.0 - s22.real()), 1e-6 * kappa);
    const double ga = std::max(2.0 * kappa - g1 - g2 - 2.0 * extra, 0.0);
    return SingleResonator{geo, f.center, 0.0, g1, g2, ga};
}

/// Bound-constrained Levenberg-Marquardt on the stacked real and imaginary
/// residuals of the geometry's closed form. Rates are projected onto >= 0.
inline FitResult fit_single_resonator(const Spectrum& spec, Geometry geo,
                                      const std::optional<FitResult>& initial = std::nullopt,
                                      const FitOptions& opt = {}) {
    if (spec.size() < 5) throw FitError("fit needs at least 5 grid points");
    detail::require_rate(opt.extra_linewidth, "extra_linewidth");
    SingleResonator start;
    if (initial) {
        QualityFactorSet q{initial->omega0, initial->q_i, initial->q_c, initial->q_c2};
        if (geo != Geometry::Hanger && !q.q_c2) q.q_c2 = q.q_c1;
        start = rates_from_q(q, geo);
    } else {
        start = initial_guess(spec, geo, opt);
    }
    const double extra = opt.extra_linewidth;

    // Normalized parameters: omega0 = w_ref + s * u0, rate_k = s * u_k.
    const double s = std::max(start.total_decay(), 1e-12 * start.omega0);
    const double w_ref = start.omega0;
    const Eigen::Index np = geo == Geometry::Hanger ? 3 : 4;
    Eigen::VectorXd u(np);
    u[0] = 0.0;
    if (geo == Geometry::Hanger) {
        u[1] = start.gamma_ext / s;
        u[2] = start.gamma_a / s;
    } else {
        u[1] = start.gamma1 / s;
        u[2] = start.gamma2 / s;
        u[3] = start.gamma_a / s;
    }
    auto physical = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd p(np);
        p[0] = w_ref + s * v[0];
        for (Eigen::Index k = 1; k < np; ++k) p[k] = s * std::max(v[k], 0.0);
        return p;
    };
    auto residual = [&](const Eigen::VectorXd& v) { return detail::fit_residual(spec, geo, physical(v), extra); };
    auto jacobian = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& r0) {
        Eigen::MatrixXd j(r0.size(), np);
        for (Eigen::Index k = 0; k < np; ++k) {
            const double h = 1e-7 * std::max(1.0, std::abs(v[k]));
            Eigen::VectorXd vp = v, vm = v;
            vp[k] += h;
            vm[k] -= h;
            if (k > 0 && vm[k] < 0.0) {
                vm[k] = v[k];
                j.col(k) = (residual(vp) - r0) / h;
            } else {
                j.col(k) = (residual(vp) - residual(vm)) / (2.0 * h);
            }
        }
        return j;
    };

    Eigen::VectorXd r = residual(u);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    int it = 0;
    bool converged = false;
    Eigen::MatrixXd jac;
    for (; it < opt.max_iterations; ++it) {
        jac = jacobian(u, r);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        bool improved = false;
        for (int tries = 0; tries < 30; ++tries) {
            Eigen::MatrixXd a = jtj;
            for (Eigen::Index k = 0; k < np; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-30);
            Eigen::VectorXd step = a.ldlt().solve(-g);
            Eigen::VectorXd trial = u + step;
            for (Eigen::Index k = 1; k < np; ++k) trial[k] = std::max(trial[k], 0.0);
            const Eigen::VectorXd rt = residual(trial);
            const double ct = rt.squaredNorm();
            if (std::isfinite(ct) && ct <= cost) {
                const double rel_step = (trial - u).norm() / std::max(u.norm(), 1e-12);
                const double rel_cost = (cost - ct) / std::max(cost, 1e-300);
                u = trial;
                r = rt;
                cost = ct;
                lambda = std::max(lambda / 10.0, 1e-15);
                improved = true;
                if (rel_step < 1e-12 || rel_cost < 1e-15) converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) {
            // No downhill step at any damping: u is a stationary point.
            converged = true;
        }
        if (converged) break;
    }
    const std::size_t m = static_cast<std::size_t>(r.size() / 2);
    const double rms = std::sqrt(cost / static_cast<double>(std::max<std::size_t>(m, 1)));
    if (!converged) throw FitError("fit did not converge", rms);

    const Eigen::VectorXd p = physical(u);
    FitResult out;
    out.geometry = geo;
    out.omega0 = p[0];
    out.extra_linewidth = extra;
    out.residual_rms = rms;
    out.iterations = it + 1;
    if (geo == Geometry::Hanger) {
        out.rates = SingleResonator{geo, p[0], p[1], 0.0, 0.0, p[2]};
        out.q_c = detail::q_or_inf(p[0], 2.0 * p[1]);
        out.q_i = detail::q_or_inf(p[0], p[2]);
    } else {
        out.rates = SingleResonator{geo, p[0], 0.0, p[1], p[2], p[3]};
        out.q_c = detail::q_or_inf(p[0], p[1]);
        out.q_c2 = detail::q_or_inf(p[0], p[2]);
        out.q_i = detail::q_or_inf(p[0], p[3]);
    }
    if (out.rates.total_decay() <= 0.0) throw FitError("fit collapsed to zero linewidth", rms);

    // Variance estimate sigma^2 (J^T J)^{-1}, mapped back to physical units.
    jac = jacobian(u, r);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const double dof = static_cast<double>(std::max<Eigen::Index>(r.size() - np, 1));
    const Eigen::MatrixXd cov = jtj.completeOrthogonalDecomposition().pseudoInverse() * (cost / dof);
    for (Eigen::Index k = 0; k < np; ++k) out.covariance_diag.push_back(cov(k, k) * s * s);
    return out;
}

} // namespace resochain
