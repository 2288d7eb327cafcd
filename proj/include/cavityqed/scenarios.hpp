// scenarios.hpp - named scenario presets, strict INI configuration, CSV and
// SVG emission. The command-line front end lives in tools/.
//
// Configuration is a flat set of (section, key) entries described by a single
// registry; the INI parser and the command-line flags both feed the same raw
// key=value map, so type checking and unit documentation exist once.

#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cavityqed/errors.hpp"
#include "cavityqed/model.hpp"

namespace cavityqed::scenarios {

struct ConfigError : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{
        "fig2-transmission", "fig2-reflection", "fig2-fluorescence", "fig3-detuning-series",
        "fig3-lamb-shift",   "fig3-coupling-regimes", "fig4-phase", "fig5-g2",
        "fig5-g2-vs-C",      "fig6-single-photon", "saturation", "derive"};
    return names;
}

struct GridSpec {
    std::optional<double> freq_min; // GHz
    std::optional<double> freq_max; // GHz
    std::optional<int> freq_points;
    std::vector<double> delta_cm_values{-6.6, -3.3, -1.65, -0.8, 0.0, 0.8, 1.65, 3.3, 6.6}; // GHz
    std::vector<double> kappa_scales{4.0, 2.0, 1.0, 0.5, 0.125};
    std::vector<double> eta_values{0.0, 0.05, 0.1, 0.2, 0.4}; // GHz, 0 = weak-drive limit
    double eta_min = 1e-3; // GHz
    double eta_max = 2.0;  // GHz
    int eta_points = 40;
    double c_min = 0.1;
    double c_max = 20.0;
    int c_points = 20;
    double tau_max = 0.0; // ns, 0 = default grid
};

struct ScenarioConfig {
    std::string scenario = "derive";
    std::string output = ".";
    bool plot = false;
    std::uint64_t seed = 1;
    std::optional<model::Mode> mode;
    unsigned workers = 0;

    model::ModelParams params;
    std::optional<double> purcell; // sets g when given
    bool g_given = false;
    GridSpec grid;

    // derive
    double gamma_prime = 604.0; // MHz
    double gamma0 = 44.0;       // MHz
    double red_ratio = 2.0;
    model::CavityGeometry geometry;

    // detector
    std::string regime = "all";
    double irf_ps = 50.0;
    double observed_g2 = 21.0;

    // source
    double source_fwhm = 41.0; // MHz
    bool noise = false;
    double count_rate = 500.0; // counts per second on resonance-free baseline
    double dwell_s = 1.0;       // integration time per frequency point
};

// ---------------------------------------------------------------------------
// Value parsing

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& v, const std::string& where) {
    double out = 0.0;
    const char* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end || !std::isfinite(out))
        throw ConfigError(where + ": expected a number, got '" + v + "'");
    return out;
}

inline long long parse_int(const std::string& v, const std::string& where) {
    long long out = 0;
    const char* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end) throw ConfigError(where + ": expected an integer, got '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(where + ": expected true/false, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& v, const std::string& where) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), where));
    if (out.empty()) throw ConfigError(where + ": expected a comma-separated list of numbers");
    return out;
}

inline model::Mode parse_mode(const std::string& v, const std::string& where) {
    if (v == "analytic") return model::Mode::analytic;
    if (v == "master-equation" || v == "me") return model::Mode::master_equation;
    throw ConfigError(where + ": mode must be 'analytic' or 'master-equation', got '" + v + "'");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Key registry

struct KeySpec {
    std::string section;
    std::string key;
    std::string unit;
    std::string help;
    std::function<void(ScenarioConfig&, const std::string& value, const std::string& where)> apply;

    std::string flag() const {
        std::string f = "--" + key;
        for (auto& c : f)
            if (c == '_') c = '-';
        return f;
    }
    std::string id() const { return section + "." + key; }
};

inline const std::vector<KeySpec>& key_registry() {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;
    using detail::parse_list;
    using C = ScenarioConfig;
    using S = const std::string&;
    auto dbl = [](double C::*field) {
        return [field](C& c, S v, S w) { c.*field = parse_double(v, w); };
    };
    auto par = [](double model::ModelParams::*field) {
        return [field](C& c, S v, S w) { c.params.*field = parse_double(v, w); };
    };
    auto geo = [](double model::CavityGeometry::*field) {
        return [field](C& c, S v, S w) { c.geometry.*field = parse_double(v, w); };
    };
    auto grd = [](double GridSpec::*field) {
        return [field](C& c, S v, S w) { c.grid.*field = parse_double(v, w); };
    };
    auto grd_int = [](int GridSpec::*field) {
        return [field](C& c, S v, S w) { c.grid.*field = int(parse_int(v, w)); };
    };
    auto grd_list = [](std::vector<double> GridSpec::*field) {
        return [field](C& c, S v, S w) { c.grid.*field = parse_list(v, w); };
    };

    static const std::vector<KeySpec> reg{
        {"run", "scenario", "", "scenario name", [](C& c, S v, S) { c.scenario = v; }},
        {"run", "output", "path", "output directory", [](C& c, S v, S) { c.output = v; }},
        {"run", "plot", "bool", "also write an SVG plot", [](C& c, S v, S w) { c.plot = parse_bool(v, w); }},
        {"run", "seed", "", "seed for noise synthesis",
         [](C& c, S v, S w) {
             const auto s = parse_int(v, w);
             if (s < 0) throw ConfigError(w + ": seed must be >= 0");
             c.seed = std::uint64_t(s);
         }},
        {"run", "mode", "", "analytic | master-equation", [](C& c, S v, S w) { c.mode = detail::parse_mode(v, w); }},
        {"run", "workers", "", "worker threads (0 = all cores)",
         [](C& c, S v, S w) {
             const auto n = parse_int(v, w);
             if (n < 0) throw ConfigError(w + ": workers must be >= 0");
             c.workers = unsigned(n);
         }},

        {"cavity", "kappa", "GHz", "cavity Lorentzian FWHM", par(&model::ModelParams::kappa)},
        {"cavity", "kappa_gauss", "GHz", "Gaussian cavity jitter FWHM (0 disables)", par(&model::ModelParams::kappa_gauss)},
        {"cavity", "reflection_visibility", "", "empty-cavity reflection dip depth in [0,1]",
         par(&model::ModelParams::reflection_visibility)},
        {"cavity", "in_coupling", "", "input-mirror share of kappa in (0,1]", par(&model::ModelParams::in_coupling)},
        {"cavity", "n_max", "", "Fock cutoff", [](C& c, S v, S w) { c.params.n_max = int(parse_int(v, w)); }},

        {"molecule", "gamma_zpl0", "MHz", "free-space 00ZPL decay FWHM", par(&model::ModelParams::gamma_zpl0)},
        {"molecule", "gamma_red", "MHz", "red-shifted decay FWHM", par(&model::ModelParams::gamma_red)},
        {"molecule", "dephasing", "MHz", "pure dephasing FWHM", par(&model::ModelParams::dephasing)},

        {"coupling", "g", "GHz", "coherent coupling",
         [](C& c, S v, S w) {
             c.params.g = parse_double(v, w);
             c.g_given = true;
         }},
        {"coupling", "purcell", "", "Purcell factor; sets g from kappa and gamma_zpl0",
         [](C& c, S v, S w) { c.purcell = parse_double(v, w); }},

        {"drive", "eta", "GHz", "coherent drive amplitude", par(&model::ModelParams::eta)},
        {"drive", "delta_cm", "GHz", "cavity - molecule detuning", par(&model::ModelParams::delta_cm)},
        {"drive", "delta_lm", "GHz", "laser - molecule detuning", par(&model::ModelParams::delta_lm)},

        {"grid", "freq_min", "GHz", "lower edge of the laser-frequency grid",
         [](C& c, S v, S w) { c.grid.freq_min = parse_double(v, w); }},
        {"grid", "freq_max", "GHz", "upper edge of the laser-frequency grid",
         [](C& c, S v, S w) { c.grid.freq_max = parse_double(v, w); }},
        {"grid", "freq_points", "", "number of frequency points",
         [](C& c, S v, S w) { c.grid.freq_points = int(parse_int(v, w)); }},
        {"grid", "delta_cm_values", "GHz", "comma-separated cavity detunings", grd_list(&GridSpec::delta_cm_values)},
        {"grid", "kappa_scales", "", "comma-separated kappa multipliers", grd_list(&GridSpec::kappa_scales)},
        {"grid", "eta_values", "GHz", "comma-separated drives for the phase scan (0 = weak drive)",
         grd_list(&GridSpec::eta_values)},
        {"grid", "eta_min", "GHz", "saturation scan lower drive", grd(&GridSpec::eta_min)},
        {"grid", "eta_max", "GHz", "saturation scan upper drive", grd(&GridSpec::eta_max)},
        {"grid", "eta_points", "", "saturation scan points (log-spaced)", grd_int(&GridSpec::eta_points)},
        {"grid", "c_min", "", "lowest cooperativity", grd(&GridSpec::c_min)},
        {"grid", "c_max", "", "highest cooperativity", grd(&GridSpec::c_max)},
        {"grid", "c_points", "", "cooperativity points (log-spaced)", grd_int(&GridSpec::c_points)},
        {"grid", "tau_max", "ns", "longest correlation delay (0 = 20 / (pi gamma'))", grd(&GridSpec::tau_max)},

        {"derive", "gamma_prime", "MHz", "measured cavity-enhanced linewidth", dbl(&C::gamma_prime)},
        {"derive", "gamma0", "MHz", "measured free-space linewidth", dbl(&C::gamma0)},
        {"derive", "red_ratio", "", "gamma_red / gamma_zpl0", dbl(&C::red_ratio)},

        {"geometry", "q_factor", "", "cavity quality factor", geo(&model::CavityGeometry::Q)},
        {"geometry", "mode_volume", "lambda^3", "cavity mode volume", geo(&model::CavityGeometry::V)},
        {"geometry", "wavelength", "nm", "emission wavelength", geo(&model::CavityGeometry::wavelength)},
        {"geometry", "refractive_index", "", "index used in the (lambda/n)^3 volume scaling",
         geo(&model::CavityGeometry::refractive_index)},

        {"detector", "regime", "", "all | resonant | polariton-branch | molecule-branch | detuned-bunching",
         [](C& c, S v, S) { c.regime = v; }},
        {"detector", "irf_ps", "ps", "detector timing jitter FWHM", dbl(&C::irf_ps)},
        {"detector", "observed_g2", "", "measured g2(0) the background fraction is fitted to", dbl(&C::observed_g2)},

        {"source", "source_fwhm", "MHz", "single-photon source linewidth", dbl(&C::source_fwhm)},
        {"source", "noise", "bool", "add Poisson counting noise", [](C& c, S v, S w) { c.noise = parse_bool(v, w); }},
        {"source", "count_rate", "1/s", "detected count rate on the baseline", dbl(&C::count_rate)},
        {"source", "dwell_s", "s", "integration time per point", dbl(&C::dwell_s)},
    };
    return reg;
}

inline const KeySpec* find_key(const std::string& section, const std::string& key) {
    for (const auto& k : key_registry())
        if (k.section == section && k.key == key) return &k;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Raw configuration: (section.key) -> value with its origin for messages.

struct RawEntry {
    std::string value;
    std::string origin; // "file:line" or "--flag"
};

using RawConfig = std::map<std::string, RawEntry>;

// INI text: [section] headers, key = value lines, '#' or ';' comments.
// Unknown sections or keys, duplicates and malformed lines are fatal.
inline RawConfig parse_ini(std::istream& in, const std::string& name = "config") {
    RawConfig raw;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = name + ":" + std::to_string(lineno);
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + ": malformed section header '" + t + "'");
            section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
            bool known = false;
            for (const auto& k : key_registry()) known = known || k.section == section;
            if (!known) throw ConfigError(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + t + "'");
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        std::string value = detail::trim(std::string_view(t).substr(eq + 1));
        if (const auto hash = value.find(" #"); hash != std::string::npos) value = detail::trim(value.substr(0, hash));
        if (section.empty()) throw ConfigError(where + ": key '" + key + "' appears before any [section]");
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (!find_key(section, key)) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
        const std::string id = section + "." + key;
        if (const auto it = raw.find(id); it != raw.end())
            throw ConfigError(where + ": duplicate key '" + key + "' (first set at " + it->second.origin + ")");
        if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
        raw[id] = {value, where};
    }
    return raw;
}

inline RawConfig parse_ini_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_ini(in, path);
}

// Builds a typed configuration; later layers override earlier ones.
inline ScenarioConfig build_config(const RawConfig& raw) {
    ScenarioConfig cfg;
    for (const auto& [id, entry] : raw) {
        const auto dot = id.find('.');
        const KeySpec* spec = dot == std::string::npos ? nullptr : find_key(id.substr(0, dot), id.substr(dot + 1));
        if (!spec) throw ConfigError(entry.origin + ": unknown key '" + id + "'");
        spec->apply(cfg, entry.value, entry.origin);
    }
    if (cfg.purcell) {
        if (cfg.g_given) throw ConfigError("coupling: give either g or purcell, not both");
        cfg.params.g = model::g_from_purcell(*cfg.purcell, cfg.params.kappa, cfg.params.gamma_zpl0);
    }
    bool known = false;
    for (const auto& n : scenario_names()) known = known || n == cfg.scenario;
    if (!known) throw ConfigError("unknown scenario '" + cfg.scenario + "'");
    try {
        cfg.params.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

inline ScenarioConfig parse_config(const std::string& path) { return build_config(parse_ini_file(path)); }

// ---------------------------------------------------------------------------
// Output

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    void add(std::string name, std::vector<double> values) {
        if (!columns.empty() && values.size() != columns.front().size())
            throw DimensionMismatch("Table: column length differs");
        header.push_back(std::move(name));
        columns.push_back(std::move(values));
    }
    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    const std::vector<double>& column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return columns[i];
        throw InvalidArgument("Table: no column '" + name + "'");
    }
    // Appends the rows of another table with the same header.
    void append(const Table& other) {
        if (columns.empty()) {
            *this = other;
            return;
        }
        if (other.header != header) throw DimensionMismatch("Table: headers differ");
        for (std::size_t i = 0; i < columns.size(); ++i)
            columns[i].insert(columns[i].end(), other.columns[i].begin(), other.columns[i].end());
    }
};

inline void write_csv(std::ostream& out, const Table& t) {
    for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
    out << '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << format_number(t.columns[i][r]);
        out << '\n';
    }
}

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal self-contained line plot: frame, ticks, up to a handful of series
// and a legend. Non-finite points break the polyline.
inline std::string render_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<PlotSeries>& series, bool log_x = false) {
    constexpr double W = 720, H = 440, L = 80, R = 20, T = 40, B = 60;
    static const char* colors[] = {"#1b6ca8", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#2c3e50"};
    auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i]) || !std::isfinite(tx(s.x[i]))) continue;
            x0 = std::min(x0, tx(s.x[i]));
            x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!(x1 > x0)) x1 = x0 + 1.0;
    if (!(y1 > y0)) y1 = y0 + 1.0;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 5; ++k) {
        const double fx = x0 + (x1 - x0) * k / 5.0, fy = y0 + (y1 - y0) * k / 5.0;
        const double sx = L + (W - L - R) * k / 5.0, sy = H - B - (H - T - B) * k / 5.0;
        char bx[32], by[32];
        std::snprintf(bx, sizeof bx, "%.4g", log_x ? std::pow(10.0, fx) : fx);
        std::snprintf(by, sizeof by, "%.4g", fy);
        o << "<line x1=\"" << sx << "\" y1=\"" << H - B << "\" x2=\"" << sx << "\" y2=\"" << H - B + 5 << "\" stroke=\"black\"/>";
        o << "<text x=\"" << sx << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << bx << "</text>\n";
        o << "<line x1=\"" << L - 5 << "\" y1=\"" << sy << "\" x2=\"" << L << "\" y2=\"" << sy << "\" stroke=\"black\"/>";
        o << "<text x=\"" << L - 8 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">" << by << "</text>\n";
    }
    o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    o << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* c = colors[s % 6];
        o << "<path fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" d=\"";
        bool pen = false;
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            const double x = series[s].x[i], y = series[s].y[i];
            if (!std::isfinite(y) || !std::isfinite(tx(x))) {
                pen = false;
                continue;
            }
            char buf[64];
            std::snprintf(buf, sizeof buf, "%c%.2f %.2f ", pen ? 'L' : 'M', px(x), py(y));
            o << buf;
            pen = true;
        }
        o << "\"/>\n";
        const double ly = T + 16 + 16 * double(s);
        o << "<line x1=\"" << W - R - 150 << "\" y1=\"" << ly << "\" x2=\"" << W - R - 125 << "\" y2=\"" << ly
          << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>";
        o << "<text x=\"" << W - R - 120 << "\" y=\"" << ly + 4 << "\">" << series[s].label << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

// ---------------------------------------------------------------------------
// Scenarios

struct ScenarioOutput {
    std::string csv_name;
    Table table;
    std::vector<std::pair<std::string, Table>> extra; // additional CSV files
    std::string summary;                               // human-readable lines for stdout
    std::string svg;                                   // empty unless plotting was requested
};

namespace detail {

inline std::vector<double> freq_grid(const ScenarioConfig& c, double lo, double hi, int n) {
    const double a = c.grid.freq_min.value_or(lo);
    const double b = c.grid.freq_max.value_or(hi);
    const int m = c.grid.freq_points.value_or(n);
    if (!(b > a) || m < 2) throw ConfigError("grid: need freq_max > freq_min and freq_points >= 2");
    return linspace(a, b, m);
}

inline Table spectra_table(const SpectrumTrace& s) {
    Table t;
    t.add("freq_ghz", s.freqs);
    t.add("transmission", s.channel(channel::transmission));
    t.add("reflection", s.channel(channel::reflection));
    t.add("phase_deg", s.channel(channel::phase_deg));
    t.add("excited_pop", s.channel(channel::excited_population));
    return t;
}

inline Table with_leading(const std::string& name, double value, Table t) {
    Table out;
    out.add(name, std::vector<double>(t.rows(), value));
    for (std::size_t i = 0; i < t.header.size(); ++i) out.add(t.header[i], t.columns[i]);
    return out;
}

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

inline model::G2Regime parse_regime(const std::string& r) {
    for (auto g : {model::G2Regime::resonant, model::G2Regime::polariton_branch, model::G2Regime::molecule_branch,
                   model::G2Regime::detuned_bunching})
        if (r == model::to_string(g)) return g;
    throw ConfigError("detector.regime: unknown regime '" + r + "'");
}

inline void require_converged(bool ok, const std::string& what) {
    if (!ok) throw ConvergenceError(what + ": lineshape fit did not converge");
}

inline ScenarioOutput spectrum_scenario(const ScenarioConfig& c, const std::vector<double>& grid, model::Mode mode,
                                        const char* plotted, const char* title) {
    ScenarioOutput out;
    out.csv_name = c.scenario + ".csv";
    const auto s = model::response_spectrum(c.params, grid, {mode, c.workers});
    out.table = spectra_table(s);
    const auto& t = s.channel(channel::transmission);
    const auto& r = s.channel(channel::reflection);
    out.summary += "mode=" + std::string(model::to_string(mode)) + "\n";
    out.summary += "min_transmission=" + fmt("%.6g", *std::min_element(t.begin(), t.end())) + "\n";
    out.summary += "min_reflection=" + fmt("%.6g", *std::min_element(r.begin(), r.end())) + "\n";
    if (c.plot) out.svg = render_svg(title, "laser detuning (GHz)", plotted, {{plotted, s.freqs, s.channel(plotted)}});
    return out;
}

} // namespace detail

inline ScenarioOutput run_scenario(const ScenarioConfig& c) {
    using namespace model;
    using detail::fmt;
    const auto& p = c.params;
    const std::string& name = c.scenario;
    ScenarioOutput out;
    out.csv_name = name + ".csv";

    if (name == "derive") {
        const auto d = derived_quantities(c.gamma_prime, c.gamma0, c.red_ratio, p.kappa);
        const double fpred = purcell_prediction(c.geometry);
        out.csv_name.clear();
        out.summary += "F=" + fmt("%.3g", d.F) + "\n";
        out.summary += "beta=" + fmt("%.3g", d.beta) + "\n";
        out.summary += "alpha_prime=" + fmt("%.3g", d.alpha_prime) + "\n";
        out.summary += "C=" + fmt("%.3g", d.C) + "\n";
        out.summary += "g_ep_ghz=" + fmt("%.3g", *d.g_ep) + "\n";
        out.summary += "lifetime_ps=" + fmt("%.4g", d.lifetime) + "\n";
        out.summary += "gamma_zpl0_mhz=" + fmt("%.4g", d.gamma_zpl0) + "\n";
        out.summary += "g_from_F_ghz=" + fmt("%.4g", g_from_purcell(d.F, p.kappa, d.gamma_zpl0)) + "\n";
        out.summary += "model_g_ghz=" + fmt("%.6g", p.g) + "\n";
        out.summary += "model_F=" + fmt("%.4g", purcell_from_g(p.g, p.kappa, p.gamma_zpl0)) + "\n";
        out.summary += "F_geometry=" + fmt("%.4g", fpred) + "\n";
        return out;
    }
    if (name == "fig2-transmission")
        return detail::spectrum_scenario(c, detail::freq_grid(c, -8.0, 8.0, 401), c.mode.value_or(Mode::master_equation),
                                         channel::transmission, "transmission");
    if (name == "fig2-reflection")
        return detail::spectrum_scenario(c, detail::freq_grid(c, -8.0, 8.0, 401), c.mode.value_or(Mode::master_equation),
                                         channel::reflection, "reflection");
    if (name == "fig2-fluorescence")
        return detail::spectrum_scenario(c, detail::freq_grid(c, -2.0, 2.0, 401), c.mode.value_or(Mode::master_equation),
                                         channel::excited_population, "fluorescence excitation");

    if (name == "fig3-detuning-series") {
        const auto mode = c.mode.value_or(Mode::master_equation);
        std::vector<PlotSeries> plots;
        for (double d : c.grid.delta_cm_values) {
            ModelParams q = p;
            q.delta_cm = d;
            const auto grid = detail::freq_grid(c, std::min(0.0, d) - 6.0, std::max(0.0, d) + 6.0, 241);
            const auto s = response_spectrum(q, grid, {mode, c.workers});
            out.table.append(detail::with_leading("delta_cm_ghz", d, detail::spectra_table(s)));
            plots.push_back({"dcm=" + fmt("%.3g", d), s.freqs, s.channel(channel::transmission)});
        }
        out.summary += "detunings=" + std::to_string(c.grid.delta_cm_values.size()) + "\n";
        if (c.plot) out.svg = render_svg("transmission vs cavity detuning", "laser detuning (GHz)", "transmission", plots);
        return out;
    }

    if (name == "fig3-lamb-shift") {
        FeatureFitOptions fo;
        fo.mode = c.mode.value_or(Mode::analytic);
        fo.workers = c.workers;
        std::vector<double> dcm, shift, pshift, width, pwidth, fp, num, nup;
        const auto& grid = c.grid.delta_cm_values;
        const auto fits = parallel_map(
            grid.size(), [&](std::size_t i) { return fit_molecular_feature(p, grid[i], {fo.mode, fo.points, fo.window, 1}); },
            c.workers);
        const auto peaks = parallel_map(grid.size(), [&](std::size_t i) { return polariton_peaks(p, grid[i]); }, c.workers);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            detail::require_converged(fits[i].fit.converged, "fig3-lamb-shift at delta_cm=" + fmt("%g", grid[i]));
            dcm.push_back(grid[i]);
            shift.push_back(fits[i].center / kMHz);
            pshift.push_back(fits[i].predicted_center / kMHz);
            width.push_back(fits[i].fwhm / kMHz);
            pwidth.push_back(fits[i].predicted_fwhm / kMHz);
            fp.push_back(derived_quantities(fits[i].fwhm / kMHz, p.gamma0_mhz(), p.red_ratio()).F);
            num.push_back(peaks[i].nu_minus);
            nup.push_back(peaks[i].nu_plus);
        }
        out.table.add("delta_cm_ghz", dcm);
        out.table.add("shift_mhz", shift);
        out.table.add("predicted_shift_mhz", pshift);
        out.table.add("fwhm_mhz", width);
        out.table.add("predicted_fwhm_mhz", pwidth);
        out.table.add("purcell", fp);
        out.table.add("nu_minus_ghz", num);
        out.table.add("nu_plus_ghz", nup);
        double mx = 0.0;
        for (double s : shift) mx = std::max(mx, std::abs(s));
        out.summary += "max_abs_shift_mhz=" + fmt("%.4g", mx) + "\n";
        out.summary += "g2_over_kappa_mhz=" + fmt("%.4g", p.g * p.g / p.kappa / kMHz) + "\n";
        if (c.plot)
            out.svg = render_svg("cavity-induced shift", "cavity detuning (GHz)", "shift (MHz)",
                                 {{"fitted", dcm, shift}, {"dispersive", dcm, pshift}});
        return out;
    }

    if (name == "fig3-coupling-regimes") {
        std::vector<PlotSeries> plots;
        const auto mode = c.mode.value_or(Mode::master_equation);
        for (double s : c.grid.kappa_scales) {
            if (!(s > 0.0)) throw ConfigError("grid.kappa_scales: entries must be positive");
            ModelParams q = p;
            q.kappa = p.kappa * s;
            const auto grid = detail::freq_grid(c, -3.0, 3.0, 301);
            const auto sp = response_spectrum(q, grid, {mode, c.workers});
            out.table.append(detail::with_leading("kappa_scale", s, detail::spectra_table(sp)));
            const auto pk = polariton_peaks(q, q.delta_cm);
            const auto fl = lineshape::find_peaks(sp, channel::excited_population, 0.0);
            out.summary += "kappa_scale=" + fmt("%g", s) + " nu_minus=" + fmt("%.5g", pk.nu_minus) +
                           " nu_plus=" + fmt("%.5g", pk.nu_plus) + " fluorescence_maxima=" + std::to_string(fl.size()) + "\n";
            plots.push_back({"kappa x" + fmt("%g", s), sp.freqs, sp.channel(channel::excited_population)});
        }
        if (c.plot) out.svg = render_svg("excitation spectra vs cavity linewidth", "laser detuning (GHz)", "excited population", plots);
        return out;
    }

    if (name == "fig4-phase") {
        std::vector<PlotSeries> plots;
        const auto grid = detail::freq_grid(c, -1.5, 1.5, 301);
        for (double eta : c.grid.eta_values) {
            if (!(eta >= 0.0)) throw ConfigError("grid.eta_values: entries must be >= 0");
            ModelParams q = p;
            Mode mode = Mode::analytic;
            if (eta > 0.0) {
                q.eta = eta;
                mode = Mode::master_equation;
            }
            const auto sp = response_spectrum(q, grid, {mode, c.workers});
            out.table.append(detail::with_leading("eta_ghz", eta, detail::spectra_table(sp)));
            double mx = 0.0;
            for (double v : sp.channel(channel::phase_deg)) mx = std::max(mx, std::abs(v));
            out.summary += "eta=" + fmt("%g", eta) + " max_abs_phase_deg=" + fmt("%.4g", mx) + "\n";
            plots.push_back({eta > 0 ? "eta=" + fmt("%g", eta) : std::string("weak drive"), sp.freqs, sp.channel(channel::phase_deg)});
        }
        if (c.plot) out.svg = render_svg("phase shift", "laser detuning (GHz)", "phase (deg)", plots);
        return out;
    }

    if (name == "fig5-g2") {
        std::vector<G2Regime> regimes;
        if (c.regime == "all")
            regimes = {G2Regime::resonant, G2Regime::polariton_branch, G2Regime::molecule_branch, G2Regime::detuned_bunching};
        else
            regimes = {detail::parse_regime(c.regime)};
        std::vector<PlotSeries> plots;
        out.csv_name.clear();
        for (auto r : regimes) {
            const auto q = g2_preset(p, r);
            std::optional<std::vector<double>> tau;
            if (c.grid.tau_max > 0.0) {
                auto g = default_tau_grid(20.0 / c.grid.tau_max);
                tau = g;
            }
            const auto tr = g2_trace(q, tau);
            Table t;
            t.add("tau_ns", tr.delays);
            t.add("g2", tr.values);
            const std::string base = std::string("fig5-g2-") + to_string(r);
            out.extra.emplace_back(base + ".csv", t);
            out.summary += std::string(to_string(r)) + " delta_cm=" + fmt("%.5g", q.delta_cm) + " delta_lm=" +
                           fmt("%.5g", q.delta_lm) + " g2_0=" + fmt("%.6g", tr.values.front()) + "\n";
            plots.push_back({to_string(r), tr.delays, tr.values});
            if (r == G2Regime::resonant) {
                const auto b = fit_background_fraction(tr, c.irf_ps, c.observed_g2);
                if (b) {
                    const auto det = detector_degrade(tr, c.irf_ps, *b);
                    Table d;
                    d.add("tau_ns", det.delays);
                    d.add("g2", det.values);
                    out.extra.emplace_back(base + "-detected.csv", d);
                    out.summary += "detected irf_ps=" + fmt("%g", c.irf_ps) + " background_fraction=" + fmt("%.6g", *b) +
                                   " g2_0=" + fmt("%.6g", det.values.front()) + "\n";
                } else {
                    out.summary += "detected: observed g2 cannot be reached by background mixing\n";
                }
            }
        }
        if (c.plot) {
            for (auto& s : plots)
                for (auto& v : s.y) v = std::log10(std::max(v, 1e-12));
            out.svg = render_svg("intensity correlation", "delay (ns)", "log10 g2", plots);
        }
        return out;
    }

    if (name == "fig5-g2-vs-C") {
        if (!(c.grid.c_min > 0.0) || !(c.grid.c_max > c.grid.c_min) || c.grid.c_points < 2)
            throw ConfigError("grid: need 0 < c_min < c_max and c_points >= 2");
        const auto grid = logspace(c.grid.c_min, c.grid.c_max, c.grid.c_points);
        const auto curve = g2_vs_cooperativity(p, grid, c.workers);
        std::vector<double> cs, g2, lg;
        for (const auto& pt : curve) {
            cs.push_back(pt.C);
            g2.push_back(pt.g2_zero);
            lg.push_back(std::log10(pt.g2_zero));
        }
        out.table.add("cooperativity", cs);
        out.table.add("g2_zero", g2);
        const double c0 = 4.0 * p.g * p.g / (p.kappa * p.gamma0_mhz() * kMHz);
        out.summary += "C_model=" + fmt("%.4g", c0) + " g2_0=" + fmt("%.6g", steady_observables(p).g2_zero) + "\n";
        if (c.plot) out.svg = render_svg("g2(0) vs cooperativity", "C", "log10 g2(0)", {{"resonant", cs, lg}}, true);
        return out;
    }

    if (name == "fig6-single-photon") {
        const auto grid = detail::freq_grid(c, -2.0, 2.0, 401);
        const auto probe = response_spectrum(p, grid, {c.mode.value_or(Mode::analytic), c.workers});
        auto conv = source_convolve(probe, c.source_fwhm);
        if (c.noise) {
            if (!(c.count_rate > 0.0) || !(c.dwell_s > 0.0)) throw ConfigError("source: count_rate and dwell_s must be positive");
            std::mt19937_64 rng(c.seed);
            auto r = conv.channel(channel::reflection);
            const double n0 = c.count_rate * c.dwell_s;
            for (auto& v : r) {
                std::poisson_distribution<long long> pd(std::max(0.0, v) * n0);
                v = double(pd(rng)) / n0;
            }
            conv.set(channel::reflection, r);
        }
        out.table = detail::spectra_table(conv);
        const auto& r = conv.channel(channel::reflection);
        out.summary += "source_fwhm_mhz=" + fmt("%g", c.source_fwhm) +
                       " min_reflection=" + fmt("%.6g", *std::min_element(r.begin(), r.end())) + "\n";
        if (c.plot)
            out.svg = render_svg("single-photon reflection", "laser detuning (GHz)", "reflection",
                                 {{"laser", probe.freqs, probe.channel(channel::reflection)}, {"single photons", conv.freqs, r}});
        return out;
    }

    if (name == "saturation") {
        if (!(c.grid.eta_min > 0.0) || !(c.grid.eta_max > c.grid.eta_min) || c.grid.eta_points < 2)
            throw ConfigError("grid: need 0 < eta_min < eta_max and eta_points >= 2");
        const auto grid = logspace(c.grid.eta_min, c.grid.eta_max, c.grid.eta_points);
        const auto r = saturation_scan(p, grid, c.workers);
        out.table.add("eta_ghz", r.eta);
        out.table.add("S", r.S);
        out.table.add("photons_per_lifetime", r.photons_per_lifetime);
        out.table.add("dip_contrast", r.dip_contrast);
        const auto s1 = drive_for_saturation(p, 1.0);
        out.summary += "S=1 at eta_ghz=" + fmt("%.5g", s1.eta) + " photons_per_lifetime=" +
                       fmt("%.4g", s1.point.photons_per_lifetime) + " dip_contrast=" + fmt("%.4g", s1.point.dip_contrast) + "\n";
        if (c.plot)
            out.svg = render_svg("saturation", "eta (GHz)", "S, contrast",
                                 {{"S", r.eta, r.S}, {"dip contrast", r.eta, r.dip_contrast}}, true);
        return out;
    }
    throw ConfigError("unknown scenario '" + name + "'");
}

// Writes CSV/SVG files into the output directory and returns the paths.
inline std::vector<std::string> write_outputs(const ScenarioConfig& c, const ScenarioOutput& o) {
    namespace fs = std::filesystem;
    std::vector<std::string> written;
    std::error_code ec;
    fs::create_directories(c.output, ec);
    if (ec) throw ConfigError("cannot create output directory '" + c.output + "'");
    auto emit = [&](const std::string& file, const auto& writer) {
        const auto path = (fs::path(c.output) / file).string();
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ConfigError("cannot write '" + path + "'");
        writer(f);
        written.push_back(path);
    };
    if (!o.csv_name.empty()) emit(o.csv_name, [&](std::ostream& f) { write_csv(f, o.table); });
    for (const auto& [file, t] : o.extra) emit(file, [&](std::ostream& f) { write_csv(f, t); });
    if (!o.svg.empty()) emit(c.scenario + ".svg", [&](std::ostream& f) { f << o.svg; });
    return written;
}

// Exit-code contract: 0 success, 2 configuration or argument error, 3 numerical failure.
inline int run(const ScenarioConfig& c, std::ostream& out, std::ostream& err) {
    try {
        const auto o = run_scenario(c);
        out << "scenario=" << c.scenario << "\n" << o.summary;
        for (const auto& path : write_outputs(c, o)) out << "wrote " << path << "\n";
        return 0;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const InvalidArgument& e) {
        err << "configuration error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace cavityqed::scenarios
