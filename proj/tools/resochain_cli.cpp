// resochain command-line front end.
//
// Configs are JSON (comments allowed). Frequencies and rates are in Hz and are
// converted to rad/s once, here. Every data file is written atomically, and
// nothing is written until the config has parsed and the spectrum has been
// computed.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "resochain/resochain.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace resochain;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr const char* kCsvHeader = "freq_hz,s11_re,s11_im,s21_re,s21_im,s12_re,s12_im,s22_re,s22_im";

enum ExitCode : int {
    kExitOk = 0,
    kExitCompareFailed = 1,
    kExitConfig = 2,
    kExitSolver = 3,
    kExitAnalysis = 4,
    kExitIo = 5,
};

// Config and usage problems that are not library exceptions.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown by the analysis stage; carries the partial report.
struct AnalysisFailure : std::runtime_error {
    AnalysisFailure(const std::string& what, std::string type)
        : std::runtime_error(what), type(std::move(type)) {}
    std::string type;
};

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct AnalysisToggles {
    bool fwhm = false;
    bool classify = false;
    bool fit = false;
    std::vector<Channel> channels{Channel::S21};
    double min_prominence = 0.02;
    std::optional<Geometry> fit_geometry;
    double extra_linewidth_hz = 0.0;

    bool any() const { return fwhm || classify || fit; }
};

struct ThetaSweep {
    double start = 0.0;
    double stop = 0.0;
    std::size_t steps = 0;
};

struct RunConfig {
    std::string kind; // single, hanger-chain, necklace-chain
    SystemVariant system;
    std::vector<double> grid_hz;
    std::optional<Method> method;
    std::string out_path;
    std::string format = "csv";
    bool plots = true;
    AnalysisToggles analysis;
    std::optional<ThetaSweep> theta_sweep;
    std::optional<double> td_tol;
};

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, v] : obj.items()) {
        if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
    }
}

double number(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError("missing '" + key + "' in " + where);
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError("'" + key + "' in " + where + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError("'" + key + "' in " + where + " must be finite");
    return d;
}

double number_or(const json& obj, const std::string& key, double fallback, const std::string& where) {
    return obj.contains(key) ? number(obj, key, where) : fallback;
}

std::size_t count(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError("missing '" + key + "' in " + where);
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 1) {
        throw ConfigError("'" + key + "' in " + where + " must be a positive integer");
    }
    return static_cast<std::size_t>(v.get<long long>());
}

std::string text(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError("missing '" + key + "' in " + where);
    if (!obj.at(key).is_string()) throw ConfigError("'" + key + "' in " + where + " must be a string");
    return obj.at(key).get<std::string>();
}

// Scalar broadcast to every site, or an array of exactly n values.
std::vector<double> per_site(const json& obj, const std::string& key, std::size_t n, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError("missing '" + key + "' in " + where);
    const json& v = obj.at(key);
    if (v.is_number()) return std::vector<double>(n, number(obj, key, where));
    if (!v.is_array() || v.size() != n) {
        throw ConfigError("'" + key + "' in " + where + " must be a number or an array of " + std::to_string(n));
    }
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError("'" + key + "' in " + where + " must contain numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<double> rad(std::vector<double> hz) {
    for (double& x : hz) x = hz_to_rad(x);
    return hz;
}

Geometry geometry_from(const std::string& s, const std::string& where) {
    const auto g = parse_geometry(s);
    if (!g) throw ConfigError("unknown geometry '" + s + "' in " + where + " (hanger, necklace, bridge)");
    return *g;
}

SingleResonator parse_single(const json& s) {
    const std::string where = "system";
    check_keys(s, {"type", "geometry", "f0_hz", "gamma_hz", "gamma1_hz", "gamma2_hz", "gamma_a_hz", "q"}, where);
    const Geometry geo = geometry_from(text(s, "geometry", where), where);
    const double w0 = hz_to_rad(number(s, "f0_hz", where));
    const bool has_rates = s.contains("gamma_a_hz");
    if (has_rates == s.contains("q")) throw ConfigError("system needs either rates in Hz or a 'q' set, not both");
    if (s.contains("q")) {
        const json& q = s.at("q");
        const std::string qw = "system.q";
        if (geo == Geometry::Hanger) {
            check_keys(q, {"qi", "qc"}, qw);
            return rates_from_q({w0, number(q, "qi", qw), number(q, "qc", qw), std::nullopt}, geo);
        }
        check_keys(q, {"qi", "qc1", "qc2"}, qw);
        return rates_from_q({w0, number(q, "qi", qw), number(q, "qc1", qw), number(q, "qc2", qw)}, geo);
    }
    const double ga = hz_to_rad(number(s, "gamma_a_hz", where));
    if (geo == Geometry::Hanger) {
        if (s.contains("gamma1_hz") || s.contains("gamma2_hz")) {
            throw ConfigError("hanger takes 'gamma_hz', not gamma1_hz/gamma2_hz");
        }
        return SingleResonator::hanger(w0, hz_to_rad(number(s, "gamma_hz", where)), ga);
    }
    if (s.contains("gamma_hz")) throw ConfigError("two-port geometries take gamma1_hz and gamma2_hz");
    return SingleResonator::two_port(geo, w0, hz_to_rad(number(s, "gamma1_hz", where)),
                                     hz_to_rad(number(s, "gamma2_hz", where)), ga);
}

HangerChain parse_hanger_chain(const json& s) {
    const std::string where = "system";
    check_keys(s, {"type", "n", "f0_hz", "gamma_hz", "gamma_a_hz", "q", "theta_rad"}, where);
    const std::size_t n = count(s, "n", where);
    HangerChain c;
    c.omega0 = rad(per_site(s, "f0_hz", n, where));
    c.theta = number(s, "theta_rad", where);
    const bool has_rates = s.contains("gamma_hz") || s.contains("gamma_a_hz");
    if (has_rates == s.contains("q")) throw ConfigError("system needs either rates in Hz or a 'q' set, not both");
    if (s.contains("q")) {
        const json& q = s.at("q");
        check_keys(q, {"qi", "qc"}, "system.q");
        const auto qi = per_site(q, "qi", n, "system.q");
        const auto qc = per_site(q, "qc", n, "system.q");
        for (std::size_t j = 0; j < n; ++j) {
            const auto r = rates_from_q({c.omega0[j], qi[j], qc[j], std::nullopt}, Geometry::Hanger);
            c.gamma.push_back(r.gamma_ext);
            c.gamma_a.push_back(r.gamma_a);
        }
    } else {
        c.gamma = rad(per_site(s, "gamma_hz", n, where));
        c.gamma_a = rad(per_site(s, "gamma_a_hz", n, where));
    }
    c.validate();
    return c;
}

NecklaceChain parse_necklace_chain(const json& s) {
    const std::string where = "system";
    check_keys(s, {"type", "n", "f0_hz", "g_hz", "gamma1_hz", "gamma2_hz", "gamma_a_hz", "q", "boundary"}, where);
    const std::size_t n = count(s, "n", where);
    NecklaceChain c;
    c.omega0 = rad(per_site(s, "f0_hz", n, where));
    c.g = n > 1 ? rad(per_site(s, "g_hz", n - 1, where)) : std::vector<double>{};
    if (s.contains("boundary")) {
        const auto b = parse_boundary(text(s, "boundary", where));
        if (!b) throw ConfigError("boundary must be 'hard-wall' or 'periodic'");
        c.boundary = *b;
    }
    const bool has_rates = s.contains("gamma1_hz") || s.contains("gamma2_hz") || s.contains("gamma_a_hz");
    if (has_rates == s.contains("q")) throw ConfigError("system needs either rates in Hz or a 'q' set, not both");
    if (s.contains("q")) {
        // Qc1 and Qc2 refer to the end sites; Qi may be per site.
        const json& q = s.at("q");
        check_keys(q, {"qi", "qc1", "qc2"}, "system.q");
        const auto qi = per_site(q, "qi", n, "system.q");
        for (std::size_t j = 0; j < n; ++j) {
            detail::require_positive(qi[j], "Qi");
            c.gamma_a.push_back(c.omega0[j] / qi[j]);
        }
        const double qc1 = number(q, "qc1", "system.q"), qc2 = number(q, "qc2", "system.q");
        detail::require_positive(qc1, "Qc1");
        detail::require_positive(qc2, "Qc2");
        c.gamma1 = c.omega0.front() / qc1;
        c.gamma2 = c.omega0.back() / qc2;
    } else {
        c.gamma1 = hz_to_rad(number(s, "gamma1_hz", where));
        c.gamma2 = hz_to_rad(number(s, "gamma2_hz", where));
        c.gamma_a = rad(per_site(s, "gamma_a_hz", n, where));
    }
    c.validate();
    return c;
}

std::vector<double> parse_grid(const json& g) {
    const std::string where = "grid";
    if (!g.is_object()) throw ConfigError("grid must be an object");
    if (g.contains("points_hz")) {
        check_keys(g, {"points_hz"}, where);
        if (!g.at("points_hz").is_array()) throw ConfigError("grid.points_hz must be an array");
        std::vector<double> pts;
        for (const auto& e : g.at("points_hz")) {
            if (!e.is_number()) throw ConfigError("grid.points_hz must contain numbers");
            pts.push_back(e.get<double>());
        }
        FrequencyGrid check(rad(pts));
        return pts;
    }
    check_keys(g, {"start_hz", "stop_hz", "points"}, where);
    const double a = number(g, "start_hz", where), b = number(g, "stop_hz", where);
    const std::size_t n = count(g, "points", where);
    if (n > 1 && !(b > a)) throw ConfigError("grid.stop_hz must exceed grid.start_hz");
    return FrequencyGrid::linspace(a, b, n).points();
}

AnalysisToggles parse_analysis(const json& a) {
    const std::string where = "analysis";
    check_keys(a, {"fwhm", "classify", "fit", "channels", "min_prominence", "fit_geometry", "extra_linewidth_hz"},
               where);
    AnalysisToggles t;
    auto flag = [&](const char* k, bool& dst) {
        if (!a.contains(k)) return;
        if (!a.at(k).is_boolean()) throw ConfigError(std::string("analysis.") + k + " must be true or false");
        dst = a.at(k).get<bool>();
    };
    flag("fwhm", t.fwhm);
    flag("classify", t.classify);
    flag("fit", t.fit);
    if (a.contains("channels")) {
        t.channels.clear();
        if (!a.at("channels").is_array()) throw ConfigError("analysis.channels must be an array");
        for (const auto& e : a.at("channels")) {
            std::string s = e.is_string() ? e.get<std::string>() : std::string{};
            for (char& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            const auto c = parse_channel(s);
            if (!c) throw ConfigError("analysis.channels entries must be one of s11, s21, s12, s22");
            t.channels.push_back(*c);
        }
    }
    t.min_prominence = number_or(a, "min_prominence", t.min_prominence, where);
    if (!(t.min_prominence > 0.0)) throw ConfigError("analysis.min_prominence must be > 0");
    if (a.contains("fit_geometry")) t.fit_geometry = geometry_from(text(a, "fit_geometry", where), where);
    t.extra_linewidth_hz = number_or(a, "extra_linewidth_hz", 0.0, where);
    if (t.extra_linewidth_hz < 0.0) throw ConfigError("analysis.extra_linewidth_hz must be >= 0");
    return t;
}

std::string kind_of(const std::string& type) {
    if (type == "single") return "single";
    if (type == "hanger_chain" || type == "hanger-chain") return "hanger-chain";
    if (type == "necklace_chain" || type == "necklace-chain") return "necklace-chain";
    throw ConfigError("system.type must be single, hanger_chain or necklace_chain");
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json root;
    try {
        root = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    check_keys(root, {"system", "grid", "method", "output", "analysis", "sweep_theta", "timedomain"}, "config");
    if (!root.contains("system")) throw ConfigError("config needs a 'system' object");
    if (!root.contains("grid")) throw ConfigError("config needs a 'grid' object");
    RunConfig cfg;
    const json& sys = root.at("system");
    if (!sys.is_object()) throw ConfigError("system must be an object");
    cfg.kind = kind_of(text(sys, "type", "system"));
    if (cfg.kind == "single") {
        cfg.system = parse_single(sys);
    } else if (cfg.kind == "hanger-chain") {
        cfg.system = parse_hanger_chain(sys);
    } else {
        cfg.system = parse_necklace_chain(sys);
    }
    cfg.grid_hz = parse_grid(root.at("grid"));
    if (root.contains("method")) {
        const std::string m = text(root, "method", "config");
        cfg.method = parse_method(m);
        if (!cfg.method) throw ConfigError("unknown method '" + m + "'");
    }
    if (root.contains("output")) {
        const json& o = root.at("output");
        check_keys(o, {"path", "format", "plots"}, "output");
        if (o.contains("path")) cfg.out_path = text(o, "path", "output");
        if (o.contains("format")) cfg.format = text(o, "format", "output");
        if (o.contains("plots")) {
            if (!o.at("plots").is_boolean()) throw ConfigError("output.plots must be true or false");
            cfg.plots = o.at("plots").get<bool>();
        }
    }
    if (root.contains("analysis")) cfg.analysis = parse_analysis(root.at("analysis"));
    if (root.contains("sweep_theta")) {
        const json& t = root.at("sweep_theta");
        check_keys(t, {"start_rad", "stop_rad", "steps"}, "sweep_theta");
        cfg.theta_sweep = ThetaSweep{number(t, "start_rad", "sweep_theta"), number(t, "stop_rad", "sweep_theta"),
                                     count(t, "steps", "sweep_theta")};
    }
    if (root.contains("timedomain")) {
        const json& t = root.at("timedomain");
        check_keys(t, {"tol"}, "timedomain");
        cfg.td_tol = number(t, "tol", "timedomain");
        if (!(*cfg.td_tol > 0.0)) throw ConfigError("timedomain.tol must be > 0");
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Computation
// ---------------------------------------------------------------------------

unsigned thread_count() {
    const char* env = std::getenv("RESOCHAIN_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) throw ConfigError("RESOCHAIN_THREADS must be an integer in [1, 1024]");
    return static_cast<unsigned>(v);
}

Method default_method(const SystemVariant& sys) {
    if (std::holds_alternative<SingleResonator>(sys)) return Method::ClosedForm;
    if (std::holds_alternative<HangerChain>(sys)) return Method::Dense;
    return std::get<NecklaceChain>(sys).boundary == Boundary::Periodic ? Method::Collective : Method::Site;
}

std::vector<Method> applicable_methods(const SystemVariant& sys) {
    std::vector<Method> out;
    if (std::holds_alternative<SingleResonator>(sys)) {
        out = {Method::ClosedForm};
    } else if (const auto* h = std::get_if<HangerChain>(&sys)) {
        out = {Method::Dense};
        if (h->n() == 2) out.push_back(Method::ClosedFormN2);
        if (h->is_homogeneous()) out.push_back(Method::Thomas);
    } else {
        const auto& c = std::get<NecklaceChain>(sys);
        const bool hard = c.boundary == Boundary::HardWall;
        if (hard) out.push_back(Method::Site);
        if (hard && c.n() == 2) out.push_back(Method::ClosedFormN2);
        if (c.is_homogeneous()) out.push_back(Method::Collective);
    }
    out.push_back(Method::TimeDomain);
    return out;
}

Spectrum compute(const RunConfig& cfg, const SystemVariant& sys, Method method, unsigned threads) {
    const FrequencyGrid grid(rad(cfg.grid_hz));
    if (method == Method::TimeDomain) {
        std::optional<IntegrationSettings> st;
        if (cfg.td_tol) {
            // Per-point defaults with the configured residual threshold.
            const auto base = IntegrationSettings::defaults_for(build_mean_field(sys, grid[0]));
            st = base;
            st->tol = *cfg.td_tol;
        }
        return spectrum_timedomain(sys, grid, st, threads);
    }
    if (const auto* s = std::get_if<SingleResonator>(&sys)) {
        if (method != Method::ClosedForm) {
            throw UsageError("method '" + std::string(to_string(method)) +
                             "' does not apply to a single resonator; applicable methods: closed-form, timedomain");
        }
        return spectrum_single(*s, grid, threads);
    }
    if (const auto* h = std::get_if<HangerChain>(&sys)) return spectrum_hanger_chain(*h, grid, method, threads);
    return spectrum_necklace_chain(std::get<NecklaceChain>(sys), grid, method, threads);
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_text(const std::vector<double>& hz, const Spectrum& sp) {
    std::string out = kCsvHeader;
    out += '\n';
    for (std::size_t i = 0; i < sp.size(); ++i) {
        const SMatrix& m = sp.matrices[i];
        out += fmt(hz[i]);
        for (cplx z : {m.s11, m.s21, m.s12, m.s22}) {
            out += ',';
            out += fmt(z.real());
            out += ',';
            out += fmt(z.imag());
        }
        out += '\n';
    }
    return out;
}

json pairs(const Spectrum& sp, Channel c) {
    json a = json::array();
    for (const auto& m : sp.matrices) a.push_back({m[c].real(), m[c].imag()});
    return a;
}

std::string json_text(const std::vector<double>& hz, const Spectrum& sp) {
    json j;
    j["format"] = "resochain-spectrum";
    j["version"] = 1;
    j["convention"] = "fields evolve as exp(-i omega t); engineering convention uses j = -i";
    j["method"] = std::string(to_string(sp.method));
    j["freq_hz"] = hz;
    j["s11"] = pairs(sp, Channel::S11);
    j["s21"] = pairs(sp, Channel::S21);
    j["s12"] = pairs(sp, Channel::S12);
    j["s22"] = pairs(sp, Channel::S22);
    j["diagnostics"] = sp.diagnostics;
    return j.dump(2) + "\n";
}

std::string plot_text(const std::vector<double>& hz, const Spectrum& sp, bool db) {
    std::string out = db ? "# freq_hz\ts21_db\n" : "# freq_hz\ts21_phase_rad\n";
    for (std::size_t i = 0; i < sp.size(); ++i) {
        const cplx z = sp.matrices[i].s21;
        out += fmt(hz[i]);
        out += '\t';
        out += fmt(db ? 20.0 * std::log10(std::abs(z)) : std::arg(z));
        out += '\n';
    }
    return out;
}

// Write to a sibling temp file, then rename over the target.
void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.close();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw std::runtime_error("write to '" + tmp.string() + "' failed");
        }
    }
    fs::rename(tmp, path);
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
    fs::path p = out.parent_path() / out.stem();
    p += suffix;
    return p;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

double to_hz(double w) { return rad_to_hz(w); }

json fit_json(const FitResult& f) {
    json j;
    j["geometry"] = std::string(to_string(f.geometry));
    j["f0_hz"] = to_hz(f.omega0);
    j["qi"] = f.q_i;
    j["qc"] = f.q_c;
    j["qc2"] = f.q_c2 ? json(*f.q_c2) : json(nullptr);
    j["extra_linewidth_hz"] = to_hz(f.extra_linewidth);
    j["residual_rms"] = f.residual_rms;
    j["iterations"] = f.iterations;
    json rates;
    if (f.geometry == Geometry::Hanger) {
        rates["gamma_hz"] = to_hz(f.rates.gamma_ext);
    } else {
        rates["gamma1_hz"] = to_hz(f.rates.gamma1);
        rates["gamma2_hz"] = to_hz(f.rates.gamma2);
    }
    rates["gamma_a_hz"] = to_hz(f.rates.gamma_a);
    j["rates"] = rates;
    json sd = json::array();
    for (double v : f.covariance_diag) sd.push_back(to_hz(std::sqrt(std::max(v, 0.0))));
    j["std_error_hz"] = sd; // f0 first, then the rates in the order above
    return j;
}

json error_json(int code, const std::string& kind, const std::string& type, const std::string& message,
                std::optional<double> omega_d = std::nullopt) {
    json e;
    e["exit_code"] = code;
    e["kind"] = kind;
    e["type"] = type;
    e["message"] = message;
    if (omega_d) e["freq_hz"] = to_hz(*omega_d);
    return e;
}

// Fills `report`; throws AnalysisFailure after recording the error in it.
void analyze(const RunConfig& cfg, const Spectrum& sp, json& report) {
    const auto& a = cfg.analysis;
    report["channels"] = json::object();
    try {
        for (Channel ch : a.channels) {
            json feats = json::array();
            for (const auto& f : find_resonances(sp, ch, a.min_prominence)) {
                json jf;
                jf["center_hz"] = to_hz(f.center);
                jf["kind"] = std::string(to_string(f.kind));
                jf["magnitude_extremum"] = f.magnitude_extremum;
                jf["prominence"] = f.prominence;
                if (a.fwhm || a.classify) jf["fwhm_hz"] = f.fwhm ? json(to_hz(*f.fwhm)) : json(nullptr);
                if (a.classify) {
                    // Features near the grid edge cannot be classified; say so per feature.
                    try {
                        const auto rep = analyze_lineshape(sp, f);
                        jf["lineshape"] = std::string(to_string(rep.shape));
                        jf["asymmetry"] = rep.asymmetry;
                        jf["phase_excursion_rad"] = rep.phase_excursion;
                        jf["phase_deviation_rad"] = rep.phase_deviation;
                    } catch (const RangeError& e) {
                        jf["lineshape"] = nullptr;
                        jf["lineshape_error"] = e.what();
                    }
                }
                feats.push_back(jf);
            }
            report["channels"][std::string(to_string(ch))] = feats;
        }
        if (a.fit) {
            std::optional<Geometry> geo = a.fit_geometry;
            if (!geo) {
                if (const auto* s = std::get_if<SingleResonator>(&cfg.system)) geo = s->geometry;
            }
            if (!geo) throw FitError("analysis.fit on a chain needs analysis.fit_geometry");
            FitOptions opt;
            opt.extra_linewidth = hz_to_rad(a.extra_linewidth_hz);
            opt.min_prominence = a.min_prominence;
            report["fit"] = fit_json(fit_single_resonator(sp, *geo, std::nullopt, opt));
        }
    } catch (const FitError& e) {
        report["error"] = error_json(kExitAnalysis, "analysis", "FitError", e.what());
        throw AnalysisFailure(e.what(), "FitError");
    } catch (const RangeError& e) {
        report["error"] = error_json(kExitAnalysis, "analysis", "RangeError", e.what());
        throw AnalysisFailure(e.what(), "RangeError");
    } catch (const DomainError& e) {
        report["error"] = error_json(kExitAnalysis, "analysis", "DomainError", e.what());
        throw AnalysisFailure(e.what(), "DomainError");
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct CommonOptions {
    std::string config;
    std::string out;
    std::string format;
    std::string method;
    double tol = 1e-8;
};

void apply_overrides(RunConfig& cfg, const CommonOptions& o) {
    if (!o.out.empty()) cfg.out_path = o.out;
    if (!o.format.empty()) cfg.format = o.format;
    if (!o.method.empty()) {
        cfg.method = parse_method(o.method);
        if (!cfg.method) throw ConfigError("unknown method '" + o.method + "'");
    }
    if (cfg.format != "csv" && cfg.format != "json") throw ConfigError("format must be csv or json");
    if (cfg.out_path.empty()) throw ConfigError("no output path (set output.path or pass --out)");
}

struct Artifact {
    fs::path path;
    std::string content;
};

// Spectrum file, plot files and (optionally) the analysis report for one run.
int produce(const RunConfig& cfg, const SystemVariant& sys, const fs::path& out, unsigned threads,
            std::vector<Artifact>& files, json& meta) {
    const Method method = cfg.method.value_or(default_method(sys));
    const auto t0 = std::chrono::steady_clock::now();
    const Spectrum sp = compute(cfg, sys, method, threads);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    files.push_back({out, cfg.format == "csv" ? csv_text(cfg.grid_hz, sp) : json_text(cfg.grid_hz, sp)});
    if (cfg.plots) {
        files.push_back({sibling(out, ".s21_db.dat"), plot_text(cfg.grid_hz, sp, true)});
        files.push_back({sibling(out, ".s21_phase.dat"), plot_text(cfg.grid_hz, sp, false)});
    }
    meta["method"] = std::string(to_string(method));
    meta["points"] = sp.size();
    meta["elapsed_s"] = elapsed;
    meta["diagnostics"] = sp.diagnostics;

    int rc = kExitOk;
    if (cfg.analysis.any()) {
        json report;
        try {
            analyze(cfg, sp, report);
        } catch (const AnalysisFailure& e) {
            std::cerr << "resochain: analysis error: " << e.what() << "\n"
                      << report["error"].dump() << "\n";
            rc = kExitAnalysis;
        }
        files.push_back({sibling(out, ".analysis.json"), report.dump(2) + "\n"});
    }
    return rc;
}

void write_all(const std::vector<Artifact>& files, json meta, const fs::path& meta_path, const std::string& config) {
    json outputs = json::array();
    for (const auto& f : files) {
        write_atomic(f.path, f.content);
        outputs.push_back(f.path.string());
    }
    meta["tool"] = "resochain";
    meta["version"] = kVersion;
    meta["generated_utc"] = utc_now();
    meta["config"] = config;
    meta["outputs"] = outputs;
    write_atomic(meta_path, meta.dump(2) + "\n");
}

int cmd_run(const std::string& kind, const CommonOptions& o) {
    RunConfig cfg = load_config(o.config);
    if (cfg.kind != kind) {
        throw ConfigError("config describes a " + cfg.kind + " system but the '" + kind + "' command was used");
    }
    apply_overrides(cfg, o);
    const unsigned threads = thread_count();
    std::vector<Artifact> files;
    json meta;
    meta["threads"] = threads;
    const int rc = produce(cfg, cfg.system, cfg.out_path, threads, files, meta);
    write_all(files, meta, sibling(cfg.out_path, ".meta.json"), o.config);
    return rc;
}

int cmd_sweep_theta(const CommonOptions& o, std::optional<double> start, std::optional<double> stop,
                    std::optional<std::size_t> steps) {
    RunConfig cfg = load_config(o.config);
    if (cfg.kind != "hanger-chain") throw ConfigError("sweep-theta needs a hanger_chain system");
    apply_overrides(cfg, o);
    ThetaSweep ts = cfg.theta_sweep.value_or(ThetaSweep{});
    if (start) ts.start = *start;
    if (stop) ts.stop = *stop;
    if (steps) ts.steps = *steps;
    if (ts.steps == 0) throw ConfigError("sweep-theta needs steps (sweep_theta.steps or --steps)");
    if (ts.steps > 1 && !(ts.stop > ts.start)) throw ConfigError("sweep_theta.stop_rad must exceed start_rad");
    const unsigned threads = thread_count();

    const fs::path base(cfg.out_path);
    const std::string ext = base.extension().string();
    const auto thetas = FrequencyGrid::linspace(ts.start, ts.stop, ts.steps).points();
    const int width = static_cast<int>(std::to_string(ts.steps - 1).size());
    std::vector<Artifact> files;
    json meta;
    meta["threads"] = threads;
    meta["runs"] = json::array();
    std::string index = "index,theta_rad,file\n";
    int rc = kExitOk;
    for (std::size_t k = 0; k < thetas.size(); ++k) {
        HangerChain c = std::get<HangerChain>(cfg.system);
        c.theta = thetas[k];
        char num[32];
        std::snprintf(num, sizeof num, "%0*zu", width, k);
        fs::path out = base.parent_path() / base.stem();
        out += std::string("_theta_") + num + ext;
        json run;
        rc = std::max(rc, produce(cfg, c, out, threads, files, run));
        meta["runs"].push_back(run);
        index += std::to_string(k) + "," + fmt(thetas[k]) + "," + out.filename().string() + "\n";
    }
    files.push_back({sibling(base, ".index.csv"), index});
    write_all(files, meta, sibling(base, ".meta.json"), o.config);
    return rc;
}

std::string method_list(const std::vector<Method>& ms) {
    std::string s;
    for (Method m : ms) s += (s.empty() ? "" : ", ") + std::string(to_string(m));
    return s;
}

int cmd_compare(const CommonOptions& o, const std::vector<std::string>& names) {
    RunConfig cfg = load_config(o.config);
    if (!o.method.empty()) throw ConfigError("compare takes --methods, not --method");
    if (!(o.tol > 0.0)) throw ConfigError("--tol must be > 0");
    const auto applicable = applicable_methods(cfg.system);
    std::vector<Method> methods;
    if (names.empty()) {
        for (Method m : applicable) {
            if (m != Method::TimeDomain) methods.push_back(m);
        }
    } else {
        for (const auto& n : names) {
            const auto m = parse_method(n);
            if (!m) throw ConfigError("unknown method '" + n + "'");
            if (std::find(applicable.begin(), applicable.end(), *m) == applicable.end()) {
                throw UsageError("method '" + n + "' does not apply to this system; applicable methods: " +
                                 method_list(applicable));
            }
            methods.push_back(*m);
        }
    }
    if (methods.size() < 2) {
        throw UsageError("compare needs at least 2 applicable methods; applicable methods: " + method_list(applicable));
    }
    const unsigned threads = thread_count();
    std::vector<Spectrum> spectra;
    for (Method m : methods) spectra.push_back(compute(cfg, cfg.system, m, threads));

    json report;
    report["reference"] = std::string(to_string(methods[0]));
    report["tolerance"] = o.tol;
    report["points"] = spectra[0].size();
    report["comparisons"] = json::array();
    bool ok = true;
    for (std::size_t k = 1; k < methods.size(); ++k) {
        json c;
        c["method"] = std::string(to_string(methods[k]));
        double worst = 0.0;
        for (Channel ch : {Channel::S11, Channel::S21, Channel::S12, Channel::S22}) {
            double d = 0.0;
            for (std::size_t i = 0; i < spectra[0].size(); ++i) {
                d = std::max(d, std::abs(spectra[k].matrices[i][ch] - spectra[0].matrices[i][ch]));
            }
            c["max_deviation"][std::string(to_string(ch))] = d;
            worst = std::max(worst, d);
        }
        c["max"] = worst;
        c["within_tolerance"] = worst <= o.tol;
        ok = ok && worst <= o.tol;
        report["comparisons"].push_back(c);
        std::printf("%s vs %s: max deviation %.3e (%s)\n", std::string(to_string(methods[k])).c_str(),
                    std::string(to_string(methods[0])).c_str(), worst, worst <= o.tol ? "ok" : "exceeds tolerance");
    }
    report["passed"] = ok;
    const std::string out = o.out.empty() ? cfg.out_path : o.out;
    if (!o.out.empty()) write_atomic(out, report.dump(2) + "\n");
    return ok ? kExitOk : kExitCompareFailed;
}

Spectrum read_spectrum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open input '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string body = ss.str();
    std::vector<double> hz;
    std::vector<SMatrix> ms;
    if (fs::path(path).extension() == ".json") {
        json j;
        try {
            j = json::parse(body);
            hz = j.at("freq_hz").get<std::vector<double>>();
            const auto s11 = j.at("s11").get<std::vector<std::array<double, 2>>>();
            const auto s21 = j.at("s21").get<std::vector<std::array<double, 2>>>();
            const auto s12 = j.at("s12").get<std::vector<std::array<double, 2>>>();
            const auto s22 = j.at("s22").get<std::vector<std::array<double, 2>>>();
            if (s11.size() != hz.size() || s21.size() != hz.size() || s12.size() != hz.size() ||
                s22.size() != hz.size()) {
                throw ConfigError("spectrum arrays in '" + path + "' differ in length");
            }
            for (std::size_t i = 0; i < hz.size(); ++i) {
                ms.push_back({{s11[i][0], s11[i][1]}, {s21[i][0], s21[i][1]}, {s12[i][0], s12[i][1]},
                              {s22[i][0], s22[i][1]}});
            }
        } catch (const json::exception& e) {
            throw ConfigError("input '" + path + "' is not a spectrum JSON file: " + e.what());
        }
    } else {
        std::istringstream lines(body);
        std::string line;
        if (!std::getline(lines, line) || line != kCsvHeader) {
            throw ConfigError("input '" + path + "' does not start with the spectrum CSV header");
        }
        std::size_t row = 1;
        while (std::getline(lines, line)) {
            ++row;
            if (line.empty()) continue;
            double v[9];
            const char* p = line.c_str();
            for (int k = 0; k < 9; ++k) {
                char* end = nullptr;
                v[k] = std::strtod(p, &end);
                if (end == p || (k < 8 && *end != ',') || (k == 8 && *end != '\0')) {
                    throw ConfigError("malformed CSV row " + std::to_string(row) + " in '" + path + "'");
                }
                p = end + 1;
            }
            hz.push_back(v[0]);
            ms.push_back({{v[1], v[2]}, {v[3], v[4]}, {v[5], v[6]}, {v[7], v[8]}});
        }
    }
    return Spectrum(FrequencyGrid(rad(hz)), std::move(ms), Method::ClosedForm);
}

int cmd_fit(const std::string& input, const std::string& geometry, double extra_hz, const std::string& out) {
    const Geometry geo = geometry_from(geometry, "--geometry");
    if (extra_hz < 0.0) throw ConfigError("--extra-linewidth-hz must be >= 0");
    const Spectrum sp = read_spectrum(input);
    FitOptions opt;
    opt.extra_linewidth = hz_to_rad(extra_hz);
    json report;
    try {
        report = fit_json(fit_single_resonator(sp, geo, std::nullopt, opt));
    } catch (const FitError& e) {
        throw AnalysisFailure(e.what(), "FitError");
    } catch (const RangeError& e) {
        throw AnalysisFailure(e.what(), "RangeError");
    }
    const std::string text = report.dump(2) + "\n";
    if (out.empty()) {
        std::cout << text;
    } else {
        write_atomic(out, text);
    }
    return kExitOk;
}

int fail(int code, const std::string& kind, const std::string& type, const std::string& msg,
         std::optional<double> omega_d = std::nullopt) {
    std::cerr << "resochain: " << kind << " error: " << msg << "\n"
              << json{{"error", error_json(code, kind, type, msg, omega_d)}}.dump() << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scattering spectra of side-coupled and end-coupled resonator chains"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    CommonOptions common;
    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* c = sub->add_option("--config", common.config, "Run config (JSON, comments allowed)");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        sub->add_option("--out", common.out, "Output path (overrides output.path)");
        sub->add_option("--format", common.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--method", common.method, "Solver method");
        sub->add_option("--tol", common.tol, "Comparison tolerance")->capture_default_str();
    };

    auto* single = app.add_subcommand("single", "Spectrum of one resonator");
    auto* hanger = app.add_subcommand("hanger-chain", "Spectrum of a side-coupled hanger chain");
    auto* necklace = app.add_subcommand("necklace-chain", "Spectrum of an end-coupled necklace chain");
    for (auto* s : {single, hanger, necklace}) add_common(s);

    auto* compare = app.add_subcommand("compare", "Cross-check solver methods on one config");
    add_common(compare);
    std::vector<std::string> methods;
    compare->add_option("--methods", methods, "Methods to compare (first is the reference)")->delimiter(',');

    auto* sweep = app.add_subcommand("sweep-theta", "Hanger-chain spectra over a range of separation phases");
    add_common(sweep);
    std::optional<double> th_start, th_stop;
    std::optional<std::size_t> th_steps;
    sweep->add_option("--theta-start", th_start, "First phase (rad)");
    sweep->add_option("--theta-stop", th_stop, "Last phase (rad)");
    sweep->add_option("--steps", th_steps, "Number of phases")->check(CLI::PositiveNumber);

    auto* fit = app.add_subcommand("fit", "Fit a single-resonator model to a spectrum file");
    std::string fit_input, fit_geometry, fit_out;
    double fit_extra = 0.0;
    fit->add_option("--input", fit_input, "Spectrum file (CSV or JSON as written by this tool)")
        ->required()
        ->check(CLI::ExistingFile);
    fit->add_option("--geometry", fit_geometry, "hanger, necklace or bridge")->required();
    fit->add_option("--extra-linewidth-hz", fit_extra, "Fixed non-dissipative broadening (Hz)");
    fit->add_option("--out", fit_out, "Report path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*single) return cmd_run("single", common);
        if (*hanger) return cmd_run("hanger-chain", common);
        if (*necklace) return cmd_run("necklace-chain", common);
        if (*compare) return cmd_compare(common, methods);
        if (*sweep) return cmd_sweep_theta(common, th_start, th_stop, th_steps);
        if (*fit) return cmd_fit(fit_input, fit_geometry, fit_extra, fit_out);
    } catch (const ConfigError& e) {
        return fail(kExitConfig, "config", "ConfigError", e.what());
    } catch (const UsageError& e) {
        return fail(kExitConfig, "config", "UsageError", e.what());
    } catch (const DomainError& e) {
        return fail(kExitConfig, "config", "DomainError", e.what());
    } catch (const SingularityError& e) {
        return fail(kExitSolver, "solver", "SingularityError", e.what(), e.omega_d());
    } catch (const SolverError& e) {
        return fail(kExitSolver, "solver", "SolverError", e.what(), e.omega_d());
    } catch (const TimeoutError& e) {
        return fail(kExitSolver, "solver", "TimeoutError", e.what());
    } catch (const AnalysisFailure& e) {
        return fail(kExitAnalysis, "analysis", e.type, e.what());
    } catch (const std::exception& e) {
        return fail(kExitIo, "io", "Error", e.what());
    }
    return kExitConfig;
}
