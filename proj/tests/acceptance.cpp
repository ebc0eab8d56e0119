// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracle_values.hpp"
#include "resochain/resochain.hpp"

using namespace resochain;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
const double kW0 = hz_to_rad(6.659e9);
const double kG = hz_to_rad(928e3);
const double kGa = hz_to_rad(212e3);
const double kGn = hz_to_rad(1.86e6);
const double kHop = hz_to_rad(44e6);

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Formats into a std::string; every detail line goes through here.
template <class... Args>
std::string fmt(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void append(Outcome& o, const std::string& s) {
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += s;
}

double max_diff(const Spectrum& a, const Spectrum& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, max_abs_diff(a.matrices[i], b.matrices[i]));
    return m;
}

// ---------------------------------------------------------------------------
// 1. Closed forms at tabulated points
// ---------------------------------------------------------------------------

Outcome closed_forms() {
    Outcome o;
    double worst = 0.0;
    auto rel = [&](cplx got, cplx want) {
        const double e = got == want ? 0.0 : std::abs(got - want) / std::abs(want);
        worst = std::max(worst, e);
    };
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& p : oracle::kHanger) {
        const SMatrix s = s_hanger(p.delta, p.gamma, p.gamma_a);
        rel(s.s11, p.s11);
        rel(s.s22, p.s11);
        rel(s.s21, p.s21);
        rel(s.s12, p.s21);
    }
    for (const auto* table : {&oracle::kNecklace, &oracle::kBridge}) {
        for (const auto& p : *table) {
            const SMatrix s = table == &oracle::kNecklace ? s_necklace(p.delta, p.gamma1, p.gamma2, p.gamma_a)
                                                          : s_bridge(p.delta, p.gamma1, p.gamma2, p.gamma_a);
            rel(s.s11, p.s11);
            rel(s.s22, p.s22);
            rel(s.s21, p.s21);
            rel(s.s12, p.s21);
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.pass = worst <= 1e-12 && secs < 1.0;
    o.detail = fmt("30 points, worst relative error %.2e, %.3f s", worst, secs);
    return o;
}

// ---------------------------------------------------------------------------
// 2, 3. Randomized lossless cases
// ---------------------------------------------------------------------------

struct Case {
    SystemVariant system;
    double omega_d = 0.0;
    std::string label;
};

std::vector<Case> lossless_cases() {
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> rate(0.05, 2.0), det(-3.0, 3.0), hop(0.2, 2.0), th(-10.0, 10.0);
    std::vector<Case> out;
    for (int i = 0; i < 1000; ++i) {
        const double wd = 100.0 + det(rng);
        const bool homo = i % 3 != 0;
        const std::size_t n = 1 + static_cast<std::size_t>((i / 6) % 8);
        switch (i % 6) {
        case 0:
            out.push_back({SingleResonator::hanger(100.0 + det(rng), rate(rng), 0.0), wd, "single hanger"});
            break;
        case 1: {
            const Geometry geo = (i / 6) % 2 == 0 ? Geometry::Necklace : Geometry::Bridge;
            out.push_back({SingleResonator::two_port(geo, 100.0 + det(rng), rate(rng), rate(rng), 0.0), wd,
                           std::string("single ") + std::string(to_string(geo))});
            break;
        }
        case 2:
        case 3: {
            HangerChain c;
            c.theta = th(rng);
            const double w = 100.0 + det(rng), g = rate(rng);
            for (std::size_t j = 0; j < n; ++j) {
                c.omega0.push_back(homo ? w : 100.0 + det(rng));
                c.gamma.push_back(homo ? g : rate(rng));
                c.gamma_a.push_back(0.0);
            }
            out.push_back({c, wd, "hanger chain N=" + std::to_string(n)});
            break;
        }
        case 4: {
            NecklaceChain c;
            c.gamma1 = rate(rng);
            c.gamma2 = rate(rng);
            const double w = 100.0 + det(rng), g = hop(rng);
            for (std::size_t j = 0; j < n; ++j) {
                c.omega0.push_back(homo ? w : 100.0 + det(rng));
                c.gamma_a.push_back(0.0);
                if (j + 1 < n) c.g.push_back(homo ? g : hop(rng));
            }
            out.push_back({c, wd, "necklace chain N=" + std::to_string(n)});
            break;
        }
        default: {
            const std::size_t np = std::max<std::size_t>(n, 2);
            out.push_back({NecklaceChain::homogeneous(np, 100.0 + det(rng), hop(rng), rate(rng), rate(rng), 0.0,
                                                      Boundary::Periodic),
                           wd, "periodic necklace chain N=" + std::to_string(np)});
            break;
        }
        }
    }
    return out;
}

// Every applicable frequency-domain solver for the case.
std::vector<std::pair<std::string, SMatrix>> fd_solutions(const Case& c) {
    std::vector<std::pair<std::string, SMatrix>> out;
    const double w = c.omega_d;
    if (const auto* r = std::get_if<SingleResonator>(&c.system)) {
        out.emplace_back("closed-form", s_single(*r, w));
    } else if (const auto* h = std::get_if<HangerChain>(&c.system)) {
        out.emplace_back("dense", s_hanger_chain_dense(*h, w));
        if (h->n() == 2) out.emplace_back("n2", s_hanger_chain_n2(*h, w));
        if (h->is_homogeneous()) out.emplace_back("thomas", s_hanger_chain_thomas(*h, w));
    } else {
        const auto& k = std::get<NecklaceChain>(c.system);
        if (k.boundary == Boundary::HardWall) {
            out.emplace_back("site", s_necklace_chain_site(k, w));
            if (k.n() == 2) out.emplace_back("n2", s_necklace_chain_n2(k, w));
        } else {
            out.emplace_back("ring", s_necklace_chain_ring(k, w));
        }
        if (k.is_homogeneous()) out.emplace_back("collective", s_necklace_chain_collective(k, w));
    }
    return out;
}

Outcome unitarity(const std::vector<Case>& cases) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string where;
    std::size_t evaluations = 0;
    for (const auto& c : cases) {
        for (const auto& [name, s] : fd_solutions(c)) {
            ++evaluations;
            const double e = std::max(std::abs(std::norm(s.s11) + std::norm(s.s21) - 1.0),
                                      std::abs(std::norm(s.s22) + std::norm(s.s12) - 1.0));
            if (e > worst) {
                worst = e;
                where = c.label + " (" + name + ")";
            }
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.pass = worst <= 1e-10 && secs < 30.0;
    o.detail = fmt("%zu cases, %zu solver evaluations, worst %.2e at %s, %.2f s", cases.size(), evaluations, worst,
                   where.c_str(), secs);
    return o;
}

Outcome reciprocity(const std::vector<Case>& cases) {
    Outcome o;
    double worst = 0.0;
    std::string where;
    for (const auto& c : cases) {
        for (const auto& [name, s] : fd_solutions(c)) {
            const double e = std::abs(s.s21 - s.s12);
            if (e > worst) {
                worst = e;
                where = c.label + " (" + name + ")";
            }
        }
    }
    o.pass = worst <= 1e-12;
    append(o, fmt("frequency-domain solvers: worst |S21 - S12| %.2e at %s", worst, where.c_str()));

    // The time-domain solver drives each port separately, so its S21 and S12
    // come from independent integrations and agree only to the settling
    // tolerance. Lossless chains often carry nearly dark modes whose decay is
    // orders of magnitude below the fastest rate; integrating those to 1e-13
    // is out of reach, so only well-damped drifts (slowest decay at least a
    // tenth of the fastest rate) take part.
    double td_worst = 0.0;
    std::size_t td_cases = 0;
    for (const auto& c : cases) {
        const auto sys = build_mean_field(c.system, c.omega_d);
        if (!sys.stable() || sys.min_damping < 0.1 * sys.max_rate) continue;
        IntegrationSettings tight = IntegrationSettings::defaults_for(sys);
        tight.tol = 1e-13;
        SMatrix s;
        try {
            s = s_from_timedomain(c.system, c.omega_d, tight);
        } catch (const TimeoutError&) {
            o.pass = false;
            append(o, "time domain timed out on " + c.label);
            continue;
        }
        ++td_cases;
        td_worst = std::max(td_worst, std::abs(s.s21 - s.s12));
    }
    if (td_worst > 1e-12) o.pass = false;
    append(o, fmt("time domain at tol 1e-13 on %zu well-damped cases: worst %.2e", td_cases, td_worst));
    return o;
}

// ---------------------------------------------------------------------------
// 4. Cross-method ladder
// ---------------------------------------------------------------------------

Outcome cross_method() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();

    double hanger_worst = 0.0;
    for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 6u, 7u, 8u, 12u, 16u, 24u, 32u, 48u, 64u}) {
        for (double theta : {0.0, 0.3, kPi / 4, kPi / 2, 2.0, kPi}) {
            const auto c = HangerChain::homogeneous(n, kW0, kG, kGa, theta);
            const auto grid = FrequencyGrid::centered(kW0, 20 * kG, 401);
            const auto dense = spectrum_hanger_chain(c, grid, Method::Dense);
            hanger_worst = std::max(hanger_worst, max_diff(dense, spectrum_hanger_chain(c, grid, Method::Thomas)));
            if (n == 2) {
                hanger_worst =
                    std::max(hanger_worst, max_diff(dense, spectrum_hanger_chain(c, grid, Method::ClosedFormN2)));
            }
        }
    }
    if (hanger_worst > 1e-9) o.pass = false;
    append(o, fmt("hanger n2/dense/thomas N<=64: %.2e", hanger_worst));

    double necklace_worst = 0.0;
    for (std::size_t n = 1; n <= 6; ++n) {
        for (double g : {0.5 * kGn, kHop}) {
            const auto c = NecklaceChain::homogeneous(n, kW0, g, kGn, 0.7 * kGn, kGa);
            const auto grid = FrequencyGrid::centered(kW0, 2.5 * g + 10 * kGn, 401);
            const auto site = spectrum_necklace_chain(c, grid, Method::Site);
            necklace_worst =
                std::max(necklace_worst, max_diff(site, spectrum_necklace_chain(c, grid, Method::Collective)));
            if (n == 2) {
                necklace_worst =
                    std::max(necklace_worst, max_diff(site, spectrum_necklace_chain(c, grid, Method::ClosedFormN2)));
            }
        }
    }
    if (necklace_worst > 1e-9) o.pass = false;
    append(o, fmt("necklace n2/site/collective N<=6: %.2e", necklace_worst));

    // Time domain against every frequency-domain method applicable to each system.
    double td_worst = 0.0;
    std::size_t td_points = 0;
    auto versus = [&](const SystemVariant& sv, const FrequencyGrid& grid, const std::vector<Spectrum>& refs) {
        const auto td = spectrum_timedomain(sv, grid);
        for (const auto& r : refs) {
            td_worst = std::max(td_worst, max_diff(td, r));
            td_points += grid.size();
        }
    };
    const auto near = FrequencyGrid::centered(kW0, 4 * kGn, 9);
    for (Geometry geo : {Geometry::Hanger, Geometry::Necklace, Geometry::Bridge}) {
        const auto r = geo == Geometry::Hanger ? SingleResonator::hanger(kW0, kG, kGa)
                                               : SingleResonator::two_port(geo, kW0, kGn, 0.7 * kGn, kGa);
        versus(r, near, {spectrum_single(r, near)});
    }
    for (std::size_t n : {2u, 3u, 5u}) {
        for (double theta : {0.0, kPi / 4, kPi / 2}) {
            const auto c = HangerChain::homogeneous(n, kW0, kG, kGa, theta);
            std::vector<Spectrum> refs{spectrum_hanger_chain(c, near, Method::Dense),
                                       spectrum_hanger_chain(c, near, Method::Thomas)};
            if (n == 2) refs.push_back(spectrum_hanger_chain(c, near, Method::ClosedFormN2));
            versus(c, near, refs);
        }
    }
    {
        auto c = HangerChain::homogeneous(3, kW0, kG, kGa, 0.9);
        c.omega0[1] += 0.5 * kG;
        versus(c, near, {spectrum_hanger_chain(c, near, Method::Dense)});
    }
    const auto band = FrequencyGrid::centered(kW0, 2.5 * kHop, 9);
    for (std::size_t n : {2u, 3u, 4u}) {
        const auto c = NecklaceChain::homogeneous(n, kW0, kHop, kGn, kGn, kGa);
        std::vector<Spectrum> refs{spectrum_necklace_chain(c, band, Method::Site),
                                   spectrum_necklace_chain(c, band, Method::Collective)};
        if (n == 2) refs.push_back(spectrum_necklace_chain(c, band, Method::ClosedFormN2));
        versus(c, band, refs);
    }
    {
        const auto c = NecklaceChain::homogeneous(4, kW0, kHop, kGn, kGn, kGa, Boundary::Periodic);
        versus(c, band, {spectrum_necklace_chain(c, band, Method::Collective)});
    }
    if (td_worst > 1e-6) o.pass = false;
    append(o, fmt("time domain vs frequency domain over %zu point comparisons: %.2e", td_points, td_worst));

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= 300.0) o.pass = false;
    append(o, fmt("%.1f s", secs));
    return o;
}

// ---------------------------------------------------------------------------
// 5. Two-hanger and short hanger chain phenomenology
// ---------------------------------------------------------------------------

Spectrum hanger_chain_spectrum(std::size_t n, double theta) {
    const auto c = HangerChain::homogeneous(n, kW0, kG, kGa, theta);
    return spectrum_hanger_chain(c, FrequencyGrid::centered(kW0, 40 * kG, 20001), Method::Dense);
}

std::optional<ResonanceFeature> dominant(const Spectrum& sp, Channel ch) {
    const auto f = find_resonances(sp, ch, 0.02);
    if (f.empty()) return std::nullopt;
    return *std::max_element(f.begin(), f.end(),
                             [](const auto& a, const auto& b) { return a.prominence < b.prominence; });
}

Outcome line_shapes() {
    Outcome o;
    const std::pair<double, LineShape> expect[] = {{0.0, LineShape::LorentzianSymmetric},
                                                   {kPi / 4, LineShape::FanoAsymmetric},
                                                   {kPi / 2, LineShape::FanoSymmetric}};
    const char* names[] = {"0", "pi/4", "pi/2"};
    int i = 0;
    for (const auto& [theta, shape] : expect) {
        const auto sp = hanger_chain_spectrum(2, theta);
        const auto f = dominant(sp, Channel::S21);
        if (!f) {
            o.pass = false;
            append(o, fmt("theta=%s: no feature", names[i++]));
            continue;
        }
        const auto rep = analyze_lineshape(sp, *f);
        if (rep.shape != shape) o.pass = false;
        append(o, fmt("theta=%s: %s (A=%.3f, phase deviation %.3f rad)", names[i++],
                      std::string(to_string(rep.shape)).c_str(), rep.asymmetry, rep.phase_deviation));
    }
    return o;
}

Outcome phase_jump() {
    Outcome o;
    const auto below = HangerChain::homogeneous(2, kW0, kG, kGa, kPi / 2 - 1e-3);
    const auto above = HangerChain::homogeneous(2, kW0, kG, kGa, kPi / 2 + 1e-3);
    const double a = std::arg(s_hanger_chain_dense(below, kW0).s21);
    const double b = std::arg(s_hanger_chain_dense(above, kW0).s21);
    const double jump = std::remainder(b - a, kTwoPi);
    o.pass = std::abs(std::abs(jump) - kPi) <= 0.01;
    o.detail = fmt("arg S21 at resonance changes by %.3e rad across theta = pi/2 +/- 1e-3", jump);
    return o;
}

Outcome reflection_widths() {
    Outcome o;
    for (double theta : {0.0, kPi / 2}) {
        std::vector<double> w;
        for (std::size_t n : {2u, 3u, 4u}) {
            const auto f = dominant(hanger_chain_spectrum(n, theta), Channel::S11);
            w.push_back(f && f->fwhm ? *f->fwhm / kG : std::numeric_limits<double>::quiet_NaN());
        }
        const bool ok = theta == 0.0 ? (w[0] < w[1] && w[1] < w[2]) : (w[0] > w[1] && w[1] > w[2]);
        if (!ok) o.pass = false;
        append(o, fmt("theta=%s FWHM/gamma N=2,3,4: %.3f %.3f %.3f", theta == 0.0 ? "0" : "pi/2", w[0], w[1], w[2]));
    }
    return o;
}

// ---------------------------------------------------------------------------
// 6. Necklace chain phenomenology
// ---------------------------------------------------------------------------

Spectrum necklace_band(std::size_t n) {
    const auto c = NecklaceChain::homogeneous(n, kW0, kHop, kGn, kGn, kGa);
    return spectrum_necklace_chain(c, FrequencyGrid::centered(kW0, 2.5 * kHop, 200001), Method::Site);
}

Outcome necklace_modes() {
    Outcome o;
    std::string counts = "peaks", spreads = "spread error";
    for (std::size_t n = 2; n <= 6; ++n) {
        const auto peaks = find_resonances(necklace_band(n), Channel::S21, 0.05);
        const bool all_peaks = std::all_of(peaks.begin(), peaks.end(),
                                           [](const auto& p) { return p.kind == FeatureKind::Peak; });
        if (peaks.size() != n || !all_peaks) o.pass = false;
        counts += fmt(" N=%zu:%zu", n, peaks.size());
        if (peaks.empty()) continue;
        const auto [lo, hi] = std::minmax_element(peaks.begin(), peaks.end(),
                                                  [](const auto& a, const auto& b) { return a.center < b.center; });
        const double expect = 4.0 * kHop * std::cos(kPi / static_cast<double>(n + 1));
        const double err = std::abs((hi->center - lo->center) / expect - 1.0);
        if (!(err <= 0.05)) o.pass = false;
        spreads += fmt(" %.2f%%", 100.0 * err);
    }
    append(o, counts);
    append(o, spreads);
    return o;
}

Outcome necklace_parity() {
    Outcome o;
    std::string s = "|S21| at band center";
    for (std::size_t n = 2; n <= 6; ++n) {
        const auto c = NecklaceChain::homogeneous(n, kW0, kHop, kGn, kGn, kGa);
        const double t = std::abs(s_necklace_chain_site(c, kW0).s21);
        if (n % 2 == 1 ? !(t > 0.9) : !(t < 0.1)) o.pass = false;
        s += fmt(" N=%zu:%.4f", n, t);
    }
    o.detail = s;
    return o;
}

Outcome necklace_central_width() {
    Outcome o;
    std::vector<double> w;
    for (std::size_t n : {1u, 3u, 5u}) {
        const auto peaks = find_resonances(necklace_band(n), Channel::S21, 0.05);
        const auto it = std::min_element(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) {
            return std::abs(a.center - kW0) < std::abs(b.center - kW0);
        });
        w.push_back(it != peaks.end() && it->fwhm ? *it->fwhm / kTwoPi : std::numeric_limits<double>::quiet_NaN());
    }
    o.pass = w[0] > w[1] && w[1] > w[2];
    o.detail = fmt("central FWHM N=1,3,5: %.4g %.4g %.4g Hz", w[0], w[1], w[2]);
    return o;
}

// ---------------------------------------------------------------------------
// 7. Fit round trip
// ---------------------------------------------------------------------------

Outcome fit_round_trip() {
    Outcome o;
    auto rel = [](double a, double b) { return std::abs(a / b - 1.0); };
    for (Geometry geo : {Geometry::Hanger, Geometry::Necklace, Geometry::Bridge}) {
        const auto r = geo == Geometry::Hanger ? SingleResonator::hanger(kW0, kG, kGa)
                                               : SingleResonator::two_port(geo, kW0, kGn, 0.6 * kGn, kGa);
        const auto q = q_from_rates(r);
        const auto clean = spectrum_single(r, FrequencyGrid::centered(kW0, 12 * r.total_decay(), 1201));
        double noiseless = 0.0;
        try {
            const auto fit = fit_single_resonator(clean, geo);
            noiseless = std::max(rel(fit.q_i, q.q_i), rel(fit.q_c, q.q_c1));
            if (geo != Geometry::Hanger) noiseless = std::max(noiseless, rel(fit.q_c2.value_or(0.0), *q.q_c2));
        } catch (const Error&) {
            noiseless = std::numeric_limits<double>::infinity();
        }
        std::vector<double> err;
        for (unsigned seed = 0; seed < 100; ++seed) {
            std::mt19937_64 rng(seed);
            // Complex noise of standard deviation sigma: sigma / sqrt(2) per component.
            std::normal_distribution<double> nd(0.0, 1e-3 / std::sqrt(2.0));
            auto noisy = clean.matrices;
            for (auto& m : noisy) {
                for (cplx* z : {&m.s11, &m.s21, &m.s12, &m.s22}) *z += cplx(nd(rng), nd(rng));
            }
            try {
                const auto fit = fit_single_resonator(Spectrum(clean.grid, noisy, clean.method), geo);
                double e = std::max(rel(fit.q_i, q.q_i), rel(fit.q_c, q.q_c1));
                if (geo != Geometry::Hanger) e = std::max(e, rel(fit.q_c2.value_or(0.0), *q.q_c2));
                err.push_back(e);
            } catch (const Error&) {
                err.push_back(std::numeric_limits<double>::infinity());
            }
        }
        std::sort(err.begin(), err.end());
        const double p95 = err[94];
        if (!(noiseless <= 1e-3) || !(p95 < 0.02)) o.pass = false;
        append(o, fmt("%s noiseless %.1e, noisy p95 %.2f%%", std::string(to_string(geo)).c_str(), noiseless,
                      100.0 * p95));
    }
    return o;
}

// ---------------------------------------------------------------------------
// 8. Lossless hanger width
// ---------------------------------------------------------------------------

Outcome lossless_width() {
    Outcome o;
    for (double hz : {10e3, 1e6, 100e6}) {
        const double g = hz_to_rad(hz);
        const auto sp = spectrum_single(SingleResonator::hanger(kW0, g, 0.0), FrequencyGrid::centered(kW0, 50 * g, 20001));
        const auto f = find_resonances(sp, Channel::S21, 0.1);
        double err = std::numeric_limits<double>::infinity();
        if (f.size() == 1 && f[0].fwhm) err = std::abs(*f[0].fwhm / (2.0 * g) - 1.0);
        if (!(err <= 0.01)) o.pass = false;
        append(o, fmt("gamma=2pi*%g Hz: %.2e", hz, err));
    }
    return o;
}

// ---------------------------------------------------------------------------
// 9. Determinism of the command-line tool
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    Outcome o;
    const fs::path work = RESOCHAIN_WORK_DIR;
    const std::pair<const char*, const char*> runs[] = {
        {"single", "hanger_single.json"},
        {"hanger-chain", "hanger_pair.json"},
        {"necklace-chain", "necklace_chain.json"},
        {"necklace-chain", "necklace_ring.json"},
        {"single", "necklace_single_q.json"},
    };
    std::size_t compared = 0;
    for (const auto& [cmd, cfg] : runs) {
        std::vector<fs::path> dirs;
        for (const char* rep : {"a", "b"}) {
            const fs::path dir = work / (fs::path(cfg).stem().string() + "_" + rep);
            fs::remove_all(dir);
            fs::create_directories(dir);
            const std::string line = "cd '" + dir.string() + "' && '" + RESOCHAIN_CLI_PATH + "' " + cmd +
                                     " --config '" + (fs::path(RESOCHAIN_CONFIG_DIR) / cfg).string() +
                                     "' > /dev/null 2> stderr.txt";
            const int st = std::system(line.c_str());
            if (!WIFEXITED(st) || WEXITSTATUS(st) != 0) {
                o.pass = false;
                append(o, std::string(cfg) + ": run failed");
            }
            dirs.push_back(dir);
        }
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
            const std::string name = e.path().filename().string();
            if (!e.is_regular_file() || name == "stderr.txt") continue;
            // Metadata carries wall time and a timestamp by design.
            if (name.size() > 10 && name.ends_with(".meta.json")) continue;
            files.push_back(fs::relative(e.path(), dirs[0]));
        }
        if (files.empty()) {
            o.pass = false;
            append(o, std::string(cfg) + ": no data files");
        }
        for (const auto& f : files) {
            ++compared;
            if (!fs::exists(dirs[1] / f) || slurp(dirs[0] / f) != slurp(dirs[1] / f)) {
                o.pass = false;
                append(o, std::string(cfg) + ": " + f.string() + " differs");
            }
        }
    }
    append(o, fmt("%zu data files compared byte for byte", compared));
    return o;
}

} // namespace

int main() {
    int failures = 0;
    auto report = [&](const char* id, const char* name, const std::function<Outcome()>& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) ++failures;
        std::printf("%s %-4s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
        std::fflush(stdout);
    };

    const auto cases = lossless_cases();
    report("1", "closed-form fidelity", closed_forms);
    report("2", "unitarity", [&] { return unitarity(cases); });
    report("3", "reciprocity", [&] { return reciprocity(cases); });
    report("4", "cross-method equivalence", cross_method);
    report("5a", "two-hanger line shapes", line_shapes);
    report("5b", "pi phase jump across theta = pi/2", phase_jump);
    report("5c", "reflection width versus chain length", reflection_widths);
    report("6a", "necklace mode count and spread", necklace_modes);
    report("6b", "necklace center transmission parity", necklace_parity);
    report("6c", "necklace central width over odd N", necklace_central_width);
    report("7", "fit round trip", fit_round_trip);
    report("8", "lossless hanger width", lossless_width);
    report("9", "determinism", determinism);
    std::printf("%d criterion line(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
