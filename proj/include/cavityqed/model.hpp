// model.hpp - driven molecule-cavity system: Liouvillian from laboratory
// parameters, spectra, derived cavity-QED quantities and detector models
//
// Units. User-facing rates are FWHM-type frequencies: GHz for the cavity,
// coupling, detunings and drive; MHz for molecular widths and dephasing.
// Internally everything is angular, rad/ns = 2 pi x GHz, and times are ns.
// Decay operators carry the angular FWHM as their rate, so an empty cavity
// shows a Lorentzian of FWHM kappa.
//
// Frequencies on spectrum grids are laser frequencies relative to the bare
// molecule; delta_cm is cavity minus molecule.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cavityqed/errors.hpp"
#include "cavityqed/lindblad.hpp"
#include "cavityqed/lineshape.hpp"
#include "cavityqed/parallel.hpp"
#include "cavityqed/quantum_core.hpp"
#include "cavityqed/spectrum.hpp"

namespace cavityqed::model {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kMHz = 1e-3; // in GHz

inline double angular(double ghz) { return kTwoPi * ghz; }

// g = sqrt(F kappa gamma_zpl0 / 4); kappa in GHz, gamma_zpl0 in MHz, g in GHz.
inline double g_from_purcell(double purcell, double kappa_ghz, double gamma_zpl0_mhz) {
    if (purcell < 0.0 || kappa_ghz < 0.0 || gamma_zpl0_mhz < 0.0)
        throw InvalidArgument("g_from_purcell: arguments must be >= 0");
    return std::sqrt(purcell * kappa_ghz * gamma_zpl0_mhz * kMHz / 4.0);
}

inline double purcell_from_g(double g_ghz, double kappa_ghz, double gamma_zpl0_mhz) {
    if (!(kappa_ghz > 0.0) || !(gamma_zpl0_mhz > 0.0))
        throw InvalidArgument("purcell_from_g: kappa and gamma_zpl0 must be positive");
    return 4.0 * g_ghz * g_ghz / (kappa_ghz * gamma_zpl0_mhz * kMHz);
}

struct ModelParams {
    double kappa = 3.3;                // cavity Lorentzian FWHM, GHz
    double kappa_gauss = 0.0;          // Gaussian cavity-detuning jitter FWHM, GHz (0 disables)
    double gamma_zpl0 = 14.67;         // free-space 00ZPL decay FWHM, MHz
    double gamma_red = 29.33;          // red-shifted decay FWHM, MHz
    double dephasing = 0.0;            // pure dephasing FWHM, MHz
    double g = g_from_purcell(38.0, 3.3, 14.67); // coherent coupling, GHz
    double delta_cm = 0.0;             // cavity - molecule, GHz
    double delta_lm = 0.0;             // laser - molecule, GHz
    double eta = 1e-3;                 // coherent drive amplitude, GHz
    int n_max = 3;                     // Fock cutoff
    double reflection_visibility = 0.6; // empty-cavity reflection dip depth
    double in_coupling = 0.5;          // input-mirror share of kappa (0.5 = critical coupling)

    void validate() const {
        auto nonneg = [](double v, const char* name) {
            if (!(v >= 0.0) || !std::isfinite(v))
                throw InvalidArgument(std::string("ModelParams: ") + name + " must be finite and >= 0");
        };
        nonneg(kappa, "kappa");
        nonneg(kappa_gauss, "kappa_gauss");
        nonneg(gamma_zpl0, "gamma_zpl0");
        nonneg(gamma_red, "gamma_red");
        nonneg(dephasing, "dephasing");
        nonneg(g, "g");
        nonneg(eta, "eta");
        if (!std::isfinite(delta_cm) || !std::isfinite(delta_lm))
            throw InvalidArgument("ModelParams: detunings must be finite");
        if (n_max < 2) throw InvalidArgument("ModelParams: n_max must be >= 2");
        if (!(reflection_visibility >= 0.0 && reflection_visibility <= 1.0))
            throw InvalidArgument("ModelParams: reflection_visibility must lie in [0, 1]");
        if (!(in_coupling > 0.0 && in_coupling <= 1.0))
            throw InvalidArgument("ModelParams: in_coupling must lie in (0, 1]");
    }

    HilbertLayout layout() const { return HilbertLayout(2, n_max); }

    double gamma0_mhz() const { return gamma_zpl0 + gamma_red; }
    // Homogeneous molecular FWHM including pure dephasing, GHz.
    double gamma_total_ghz() const { return (gamma_zpl0 + gamma_red + 2.0 * dephasing) * kMHz; }
    double red_ratio() const { return gamma_red / gamma_zpl0; }

    // Cavity-enhanced molecular FWHM in the bad-cavity picture, GHz:
    // gamma0 + 4 g^2 / kappa / (1 + (2 delta / kappa)^2).
    double purcell_width_ghz(double detuning) const {
        if (kappa == 0.0) return gamma_total_ghz();
        const double u = 2.0 * detuning / kappa;
        return gamma_total_ghz() + 4.0 * g * g / kappa / (1.0 + u * u);
    }
    double purcell_width_ghz() const { return purcell_width_ghz(delta_cm); }

    // Dispersive pull of the molecular line by the detuned cavity, GHz.
    // Negative for a blue-detuned cavity (level repulsion).
    double dispersive_shift_ghz(double detuning) const {
        const double hk = 0.5 * kappa;
        return -g * g * detuning / (detuning * detuning + hk * hk);
    }
};

struct CavityGeometry {
    double Q = 120000.0;
    double V = 4.4;              // mode volume in units of lambda^3
    double wavelength = 784.0;   // nm
    double refractive_index = 1.0;

    void validate() const {
        if (!(Q >= 0.0) || !(V > 0.0) || !(wavelength > 0.0) || !(refractive_index > 0.0))
            throw InvalidArgument("CavityGeometry: Q must be >= 0 and V, wavelength, refractive index > 0");
    }
};

// F = 3/(4 pi^2) Q (lambda/n)^3 / V. With V given in lambda^3 the wavelength
// cancels; n enters cubed.
inline double purcell_prediction(const CavityGeometry& geom) {
    geom.validate();
    const double n3 = geom.refractive_index * geom.refractive_index * geom.refractive_index;
    return 3.0 / (4.0 * std::numbers::pi * std::numbers::pi) * geom.Q / (n3 * geom.V);
}

struct DerivedQuantities {
    double F = 0.0;
    double beta = 0.0;
    double alpha_prime = 0.0;
    double C = 0.0;
    std::optional<double> g_ep; // GHz, when kappa is known
    double lifetime = 0.0;      // ps
    double gamma_prime = 0.0;   // MHz
    double gamma_zpl0 = 0.0;    // MHz
};

// From a measured pair of linewidths (MHz). red_ratio k = gamma_red / gamma_zpl0.
inline DerivedQuantities derived_quantities(double gamma_prime_mhz, double gamma0_mhz, double red_ratio = 2.0,
                                            std::optional<double> kappa_ghz = std::nullopt) {
    if (!(red_ratio >= 0.0)) throw InvalidArgument("derived_quantities: red ratio must be >= 0");
    const double zpl0 = gamma0_mhz / (1.0 + red_ratio);
    if (!(zpl0 > 0.0)) throw InvalidArgument("derived_quantities: gamma_zpl0 must be positive");
    if (!(gamma_prime_mhz > 0.0)) throw InvalidArgument("derived_quantities: gamma' must be positive");
    DerivedQuantities d;
    d.gamma_zpl0 = zpl0;
    d.gamma_prime = gamma_prime_mhz;
    d.F = gamma_prime_mhz / zpl0 - (1.0 + red_ratio);
    d.beta = d.F / (d.F + red_ratio + 1.0);
    d.alpha_prime = (d.F + 1.0) / (d.F + red_ratio + 1.0);
    d.C = d.F / (1.0 + red_ratio);
    if (kappa_ghz) d.g_ep = std::abs(*kappa_ghz - gamma0_mhz * kMHz) / 4.0;
    d.lifetime = 1e3 / (kTwoPi * gamma_prime_mhz * kMHz);
    return d;
}

// From model parameters, with F = 4 g^2 / (kappa gamma_zpl0).
inline DerivedQuantities derived_quantities(const ModelParams& p) {
    if (!(p.gamma_zpl0 > 0.0)) throw InvalidArgument("derived_quantities: gamma_zpl0 must be positive");
    const double k = p.red_ratio();
    const double f = purcell_from_g(p.g, p.kappa, p.gamma_zpl0);
    return derived_quantities((1.0 + k + f) * p.gamma_zpl0, p.gamma0_mhz(), k, p.kappa);
}

// ---------------------------------------------------------------------------
// Liouvillian

struct ModelOperators {
    HilbertLayout layout;
    Operator a;
    Operator sigma;
    Operator n_cav;
    Operator n_exc;

    explicit ModelOperators(HilbertLayout l)
        : layout(l), a(annihilation_op(l)), sigma(emitter_lowering_op(l)),
          n_cav((a.adjoint() * a).as_hermitian()), n_exc((sigma.adjoint() * sigma).as_hermitian()) {}
};

// H = Dc a^dag a + Dm s^dag s + 2 pi g (a^dag s + a s^dag) + 2 pi eta (a + a^dag)
// in the frame rotating at the laser; collapses sqrt(2 pi kappa) a,
// sqrt(2 pi (gamma_zpl0 + gamma_red)) s and sqrt(2 * 2 pi dephasing) s^dag s.
inline SuperOperator build_liouvillian(const ModelParams& p, const ModelOperators& ops) {
    p.validate();
    const double dc = angular(p.delta_cm - p.delta_lm);
    const double dm = angular(-p.delta_lm);
    const Matrix& a = ops.a.matrix();
    const Matrix& s = ops.sigma.matrix();
    Matrix h = dc * ops.n_cav.matrix() + dm * ops.n_exc.matrix() +
               angular(p.g) * (a.adjoint() * s + a * s.adjoint()) + angular(p.eta) * (a + a.adjoint());
    const Operator ham(ops.layout, 0.5 * (h + h.adjoint()), true);
    std::vector<Collapse> cs{
        {ops.a, angular(p.kappa)},
        {ops.sigma, angular(p.gamma0_mhz() * kMHz)},
        {ops.n_exc, 2.0 * angular(p.dephasing * kMHz)},
    };
    return liouvillian(ham, cs);
}

inline SuperOperator build_liouvillian(const ModelParams& p) { return build_liouvillian(p, ModelOperators(p.layout())); }

// Smallest cutoff >= p.n_max whose Poisson tail P(N > n_max) at the
// resonant empty-cavity photon number (2 eta / kappa)^2 is below tail.
inline int drive_cutoff(const ModelParams& p, double eta, double tail = 1e-10) {
    if (!(p.kappa > 0.0) || !(eta > 0.0)) return p.n_max;
    const double lambda = std::pow(2.0 * eta / p.kappa, 2);
    double term = std::exp(-lambda), cdf = term;
    int n = 0;
    while (n < p.n_max || 1.0 - cdf > tail) {
        if (n >= 200) throw ConvergenceError("drive_cutoff: drive needs more than 200 Fock states");
        ++n;
        term *= lambda / double(n);
        cdf += term;
    }
    return n;
}

inline ModelOperators drive_operators(const ModelParams& p, double eta) {
    return ModelOperators(HilbertLayout(2, drive_cutoff(p, eta)));
}

struct SteadyObservables {
    double photons = 0.0;        // <a^dag a>
    std::complex<double> field;  // <a>
    double excited = 0.0;        // <s^dag s>
    double g2_zero = 0.0;        // NaN when <a^dag a> = 0
    double min_eigenvalue = 0.0;
};

inline SteadyObservables steady_observables(const ModelParams& p, const ModelOperators& ops) {
    const auto rho = steady_state(build_liouvillian(p, ops));
    SteadyObservables o;
    o.photons = rho.expect(ops.n_cav).real();
    o.field = rho.expect(ops.a);
    o.excited = rho.expect(ops.n_exc).real();
    o.g2_zero = o.photons > 0.0 ? g2_zero_direct(rho, ops.a) : std::nan("");
    o.min_eigenvalue = rho.min_eigenvalue();
    return o;
}

inline SteadyObservables steady_observables(const ModelParams& p) { return steady_observables(p, drive_operators(p, p.eta)); }

// ---------------------------------------------------------------------------
// Linear-response amplitudes

// t = (k/2) / (i(wc - w) + k/2 + G^2 / (i(wm - w) + Gm/2)); angular rates, wm = 0.
inline std::complex<double> transmission_amplitude(const ModelParams& p, double nu, double cavity_offset = 0.0) {
    const double hk = 0.5 * angular(p.kappa);
    const double wc = angular(p.delta_cm + cavity_offset);
    const double w = angular(nu);
    const double gg = angular(p.g) * angular(p.g);
    const std::complex<double> mol(0.5 * angular(p.gamma_total_ghz()), -w);
    return hk / (std::complex<double>(hk, wc - w) + gg / mol);
}

inline std::complex<double> empty_amplitude(const ModelParams& p, double nu, double cavity_offset = 0.0) {
    const double hk = 0.5 * angular(p.kappa);
    return hk / std::complex<double>(hk, angular(p.delta_cm + cavity_offset - nu));
}

// Empty-cavity steady field for the drive term 2 pi eta (a + a^dag).
inline std::complex<double> empty_field(const ModelParams& p, double nu, double cavity_offset = 0.0) {
    const double hk = 0.5 * angular(p.kappa);
    return std::complex<double>(0.0, -angular(p.eta)) / std::complex<double>(hk, angular(p.delta_cm + cavity_offset - nu));
}

// Quadrature nodes and weights for the Gaussian cavity jitter; a single node
// at zero when kappa_gauss = 0.
struct JitterQuadrature {
    std::vector<double> offsets;
    std::vector<double> weights;
};

inline JitterQuadrature jitter_quadrature(double fwhm, int points = 41) {
    if (fwhm <= 0.0) return {{0.0}, {1.0}};
    const double sigma = fwhm / lineshape::kFwhmPerSigma;
    JitterQuadrature q;
    double total = 0.0;
    for (int i = 0; i < points; ++i) {
        const double x = -4.0 * sigma + 8.0 * sigma * double(i) / double(points - 1);
        const double w = std::exp(-0.5 * x * x / (sigma * sigma));
        q.offsets.push_back(x);
        q.weights.push_back(w);
        total += w;
    }
    for (auto& w : q.weights) w /= total;
    return q;
}

enum class Mode { analytic, master_equation };

inline const char* to_string(Mode m) { return m == Mode::analytic ? "analytic" : "master-equation"; }

// Per-frequency channels before normalization.
struct PointResponse {
    double transmission = 0.0; // T / T_empty_peak for this jitter sample
    double empty = 0.0;        // T_empty / T_empty_peak
    double phase_deg = 0.0;    // relative to the empty cavity at the same frequency
    double excited = 0.0;      // <s^dag s>; |<s>|^2 in linear response
};

inline PointResponse point_response(const ModelParams& p, const ModelOperators* ops, double nu, Mode mode,
                                    double cavity_offset) {
    PointResponse r;
    const auto t0 = empty_amplitude(p, nu, cavity_offset);
    r.empty = std::norm(t0);
    if (mode == Mode::analytic) {
        const auto t = transmission_amplitude(p, nu, cavity_offset);
        r.transmission = std::norm(t);
        r.phase_deg = std::arg(t / t0) * 180.0 / std::numbers::pi;
        const std::complex<double> field = empty_field(p, nu, cavity_offset) * t / t0;
        const std::complex<double> mol(0.5 * angular(p.gamma_total_ghz()), -angular(nu));
        r.excited = std::norm(angular(p.g) * field / mol);
        return r;
    }
    ModelParams q = p;
    q.delta_lm = nu;
    q.delta_cm = p.delta_cm + cavity_offset;
    const auto obs = steady_observables(q, *ops);
    const double peak = std::pow(2.0 * angular(p.eta) / angular(p.kappa), 2);
    r.transmission = obs.photons / peak;
    r.phase_deg = std::arg(obs.field / empty_field(p, nu, cavity_offset)) * 180.0 / std::numbers::pi;
    r.excited = obs.excited;
    return r;
}

struct SpectrumOptions {
    Mode mode = Mode::analytic;
    unsigned workers = 0; // 0 = hardware concurrency
};

// Full set of channels on the grid: transmission (normalized to the empty
// cavity peak), reflection (1 - v * transmission), phase_deg and
// excited_population (linear response in analytic mode, so it scales as
// eta^2 there). With kappa_gauss > 0 every channel is
// averaged over the cavity jitter and normalized to the averaged empty peak.
inline SpectrumTrace response_spectrum(const ModelParams& p, std::span<const double> freqs, const SpectrumOptions& opt = {}) {
    p.validate();
    check_grid_increasing(freqs, "spectrum");
    if (opt.mode == Mode::master_equation && !(p.eta > 0.0))
        throw InvalidArgument("spectrum: master-equation mode needs eta > 0");
    if (opt.mode == Mode::master_equation && !(p.kappa > 0.0))
        throw InvalidArgument("spectrum: master-equation mode needs kappa > 0");
    const auto jitter = jitter_quadrature(p.kappa_gauss);
    const ModelOperators ops = drive_operators(p, p.eta);

    // Averaged empty-cavity peak, at nu = delta_cm by symmetry of the jitter.
    double empty_peak = 0.0;
    for (std::size_t k = 0; k < jitter.offsets.size(); ++k)
        empty_peak += jitter.weights[k] * std::norm(empty_amplitude(p, p.delta_cm, jitter.offsets[k]));

    struct Avg {
        double t, ph, ex;
    };
    const auto pts = parallel_map(
        freqs.size(),
        [&](std::size_t i) {
            Avg a{0, 0, 0};
            for (std::size_t k = 0; k < jitter.offsets.size(); ++k) {
                const auto r = point_response(p, &ops, freqs[i], opt.mode, jitter.offsets[k]);
                a.t += jitter.weights[k] * r.transmission;
                a.ph += jitter.weights[k] * r.phase_deg;
                a.ex += jitter.weights[k] * r.excited;
            }
            return a;
        },
        opt.workers);

    SpectrumTrace tr;
    tr.freqs.assign(freqs.begin(), freqs.end());
    std::vector<double> t(freqs.size()), refl(freqs.size()), ph(freqs.size()), ex(freqs.size());
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        t[i] = pts[i].t / empty_peak;
        refl[i] = 1.0 - p.reflection_visibility * t[i];
        ph[i] = pts[i].ph;
        ex[i] = pts[i].ex;
    }
    tr.set(channel::transmission, std::move(t));
    tr.set(channel::reflection, std::move(refl));
    tr.set(channel::phase_deg, std::move(ph));
    tr.set(channel::excited_population, std::move(ex));
    return tr;
}

inline SpectrumTrace select_channels(const SpectrumTrace& full, std::initializer_list<const char*> names) {
    SpectrumTrace out;
    out.freqs = full.freqs;
    for (const char* n : names)
        if (full.has(n)) out.set(n, full.channel(n));
    return out;
}

inline SpectrumTrace transmission_spectrum(const ModelParams& p, std::span<const double> freqs, Mode mode = Mode::analytic) {
    return select_channels(response_spectrum(p, freqs, {mode}), {channel::transmission});
}

inline SpectrumTrace reflection_spectrum(const ModelParams& p, std::span<const double> freqs, Mode mode = Mode::analytic) {
    return select_channels(response_spectrum(p, freqs, {mode}), {channel::reflection});
}

inline SpectrumTrace phase_spectrum(const ModelParams& p, std::span<const double> freqs, Mode mode = Mode::analytic) {
    return select_channels(response_spectrum(p, freqs, {mode}), {channel::phase_deg});
}

// <s^dag s> in the steady state versus laser detuning. Red-shifted emission is
// proportional to gamma_red times this channel.
inline SpectrumTrace fluorescence_excitation_spectrum(const ModelParams& p, std::span<const double> freqs) {
    return select_channels(response_spectrum(p, freqs, {Mode::master_equation}), {channel::excited_population});
}

// ---------------------------------------------------------------------------
// Spectral feature analysis

struct PolaritonPeaks {
    double nu_plus = 0.0;  // GHz
    double nu_minus = 0.0; // GHz
    bool split = false;    // false: a single maximum, reported in both slots
    std::vector<lineshape::Peak> peaks;

    double separation() const { return nu_plus - nu_minus; }
};

namespace detail {

inline double weak_transmission(const ModelParams& p, double nu) {
    if (p.kappa_gauss <= 0.0) return std::norm(transmission_amplitude(p, nu));
    const auto j = jitter_quadrature(p.kappa_gauss);
    double t = 0.0;
    for (std::size_t k = 0; k < j.offsets.size(); ++k) t += j.weights[k] * std::norm(transmission_amplitude(p, nu, j.offsets[k]));
    return t;
}

// Golden-section maximization of f on [lo, hi].
template <class F>
double golden_max(F&& f, double lo, double hi, double tol) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > tol) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

// The two local maxima of the weak-drive transmission, located on a grid
// fine enough to resolve the molecular linewidth and refined by golden-section
// search. At zero detuning the separation estimates 2g.
inline PolaritonPeaks polariton_peaks(const ModelParams& base, double delta_cm) {
    ModelParams p = base;
    p.delta_cm = delta_cm;
    p.validate();
    const double lo = std::min(0.0, delta_cm) - 2.0 * (p.kappa + p.kappa_gauss + p.g) - 0.5;
    const double hi = std::max(0.0, delta_cm) + 2.0 * (p.kappa + p.kappa_gauss + p.g) + 0.5;
    const double step = std::max(1e-4, 0.2 * p.gamma_total_ghz());
    const int n = std::min(400001, int(std::ceil((hi - lo) / step)) + 1);
    const auto grid = linspace(lo, hi, n);
    std::vector<double> t(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) t[i] = detail::weak_transmission(p, grid[i]);
    const double tmax = *std::max_element(t.begin(), t.end());
    auto raw = lineshape::find_peaks(grid, t, 1e-4 * tmax);

    PolaritonPeaks out;
    const double dx = grid[1] - grid[0];
    for (auto& pk : raw) {
        pk.position = detail::golden_max([&](double x) { return detail::weak_transmission(p, x); }, pk.position - dx,
                                         pk.position + dx, 1e-9);
        pk.height = detail::weak_transmission(p, pk.position);
    }
    // Keep the two highest maxima, ordered by frequency.
    std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.height > b.height; });
    if (raw.size() > 2) raw.resize(2);
    std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.position < b.position; });
    out.peaks = raw;
    if (raw.size() == 2) {
        out.split = true;
        out.nu_minus = raw[0].position;
        out.nu_plus = raw[1].position;
    } else if (raw.size() == 1) {
        out.nu_minus = out.nu_plus = raw[0].position;
    } else {
        throw NumericalError("polariton_peaks: transmission has no interior maximum");
    }
    return out;
}

struct FeatureFit {
    double delta_cm = 0.0;
    double center = 0.0;      // GHz, relative to the bare molecule
    double fwhm = 0.0;        // GHz
    double predicted_center = 0.0;
    double predicted_fwhm = 0.0;
    lineshape::FitResult fit;
};

struct FeatureFitOptions {
    Mode mode = Mode::master_equation;
    int points = 241;
    // Fit window half-width in units of the estimated feature FWHM.
    double window = 2.0;
    unsigned workers = 0;
};

// Fits the Fano (generalized Lorentzian) model to the cavity-normalized
// transmission T / T_empty around the molecular line. Dividing out the empty
// cavity leaves the molecule's feature as a Fano profile up to the slow
// frequency dependence of the cavity over the window.
inline FeatureFit fit_molecular_feature(const ModelParams& base, double delta_cm, const FeatureFitOptions& opt = {}) {
    ModelParams p = base;
    p.delta_cm = delta_cm;
    p.validate();
    FeatureFit out;
    out.delta_cm = delta_cm;
    out.predicted_center = p.dispersive_shift_ghz(delta_cm);
    out.predicted_fwhm = p.purcell_width_ghz(delta_cm);
    const double half = opt.window * out.predicted_fwhm;
    const auto grid = linspace(out.predicted_center - half, out.predicted_center + half, opt.points);

    ModelParams q = p;
    q.kappa_gauss = p.kappa_gauss;
    const auto tr = response_spectrum(q, grid, {opt.mode, opt.workers});
    const auto& t = tr.channel(channel::transmission);
    // Empty cavity on the same normalization.
    const auto jitter = jitter_quadrature(p.kappa_gauss);
    double empty_peak = 0.0;
    for (std::size_t k = 0; k < jitter.offsets.size(); ++k)
        empty_peak += jitter.weights[k] * std::norm(empty_amplitude(p, p.delta_cm, jitter.offsets[k]));
    std::vector<double> ratio(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double e = 0.0;
        for (std::size_t k = 0; k < jitter.offsets.size(); ++k)
            e += jitter.weights[k] * std::norm(empty_amplitude(p, grid[i], jitter.offsets[k]));
        ratio[i] = t[i] / (e / empty_peak);
    }
    const auto [mn, mx] = std::minmax_element(ratio.begin(), ratio.end());
    std::vector<double> init{out.predicted_center, out.predicted_fwhm, 0.0, *mx - *mn, *mn};
    lineshape::FitOptions fo;
    fo.max_iterations = 4000;
    out.fit = lineshape::fit(lineshape::fano_model(), grid, ratio, init, fo);
    out.center = out.fit.get("center");
    out.fwhm = out.fit.get("fwhm");
    return out;
}

struct LambShiftPoint {
    double delta_cm;      // GHz
    double shift;         // MHz, fitted centre minus bare molecule
    double predicted;     // MHz, dispersive formula
    bool converged;
};

inline std::vector<LambShiftPoint> lamb_shift_curve(const ModelParams& p, std::span<const double> delta_cm_grid,
                                                    const FeatureFitOptions& opt = {}) {
    std::vector<LambShiftPoint> out;
    for (double d : delta_cm_grid) {
        const auto f = fit_molecular_feature(p, d, opt);
        out.push_back({d, f.center / kMHz, p.dispersive_shift_ghz(d) / kMHz, f.fit.converged});
    }
    return out;
}

struct LinewidthPoint {
    double delta_cm; // GHz
    double fwhm;     // MHz
    double purcell;  // F from the fitted width
    double predicted_fwhm; // MHz, bad-cavity Purcell width
    bool converged;
};

inline std::vector<LinewidthPoint> linewidth_vs_detuning(const ModelParams& p, std::span<const double> delta_cm_grid,
                                                         const FeatureFitOptions& opt = {}) {
    std::vector<LinewidthPoint> out;
    for (double d : delta_cm_grid) {
        const auto f = fit_molecular_feature(p, d, opt);
        const double w = f.fwhm / kMHz;
        const auto dq = derived_quantities(w, p.gamma0_mhz(), p.red_ratio());
        out.push_back({d, w, dq.F, f.predicted_fwhm / kMHz, f.fit.converged});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Saturation

struct SaturationResult {
    std::vector<double> eta;                  // GHz
    std::vector<double> S;                    // NaN where <s^dag s> >= 1/2
    std::vector<double> photons_per_lifetime;
    std::vector<double> dip_contrast;
    std::vector<bool> saturated;              // S undefined at that point
};

struct SaturationPoint {
    double S;
    double photons_per_lifetime;
    double dip_contrast;
    bool undefined;
};

// Incident flux Phi = (2 pi eta)^2 / kappa_in with kappa_in = in_coupling * kappa
// (photons per ns), times the cavity-modified lifetime 1 / (2 pi gamma').
inline double photons_per_lifetime(const ModelParams& p, double eta) {
    const double flux = angular(eta) * angular(eta) / (p.in_coupling * angular(p.kappa));
    const double lifetime = 1.0 / angular(p.purcell_width_ghz());
    return flux * lifetime;
}

// ops is reused while its cutoff suffices for eta.
inline SaturationPoint saturation_point(const ModelParams& base, double eta, const ModelOperators& ops) {
    ModelParams p = base;
    p.eta = eta;
    p.delta_lm = base.dispersive_shift_ghz(base.delta_cm);
    const int cutoff = drive_cutoff(base, eta);
    const auto obs = cutoff <= ops.layout.fock_cutoff() ? steady_observables(p, ops)
                                                         : steady_observables(p, drive_operators(base, eta));
    SaturationPoint s{};
    const double pe = obs.excited;
    s.undefined = !(pe < 0.5);
    s.S = s.undefined ? std::nan("") : 2.0 * pe / (1.0 - 2.0 * pe);
    s.photons_per_lifetime = photons_per_lifetime(p, eta);
    const double t = obs.photons / std::norm(empty_field(p, p.delta_lm));
    s.dip_contrast = 1.0 - t;
    return s;
}

inline SaturationResult saturation_scan(const ModelParams& p, std::span<const double> eta_grid, unsigned workers = 0) {
    p.validate();
    const ModelOperators ops(p.layout());
    const auto pts = parallel_map(eta_grid.size(), [&](std::size_t i) { return saturation_point(p, eta_grid[i], ops); }, workers);
    SaturationResult r;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        r.eta.push_back(eta_grid[i]);
        r.S.push_back(pts[i].S);
        r.photons_per_lifetime.push_back(pts[i].photons_per_lifetime);
        r.dip_contrast.push_back(pts[i].dip_contrast);
        r.saturated.push_back(pts[i].undefined);
    }
    return r;
}

struct SaturationCrossing {
    double eta;
    SaturationPoint point;
};

// Drive at which S reaches the target, by bisection (S is monotone in eta).
inline SaturationCrossing drive_for_saturation(const ModelParams& p, double target_s = 1.0) {
    p.validate();
    const ModelOperators ops(p.layout());
    double lo = 0.0, hi = std::max(p.eta, 1e-3);
    for (int i = 0; i < 60; ++i) {
        const auto s = saturation_point(p, hi, ops);
        if (s.undefined || s.S >= target_s) break;
        lo = hi;
        hi *= 2.0;
    }
    for (int i = 0; i < 100 && hi - lo > 1e-12 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        const auto s = saturation_point(p, mid, ops);
        (!s.undefined && s.S < target_s ? lo : hi) = mid;
    }
    const double eta = 0.5 * (lo + hi);
    return {eta, saturation_point(p, eta, ops)};
}

// ---------------------------------------------------------------------------
// Photon statistics

enum class G2Regime { resonant, polariton_branch, molecule_branch, detuned_bunching };

inline const char* to_string(G2Regime r) {
    switch (r) {
    case G2Regime::resonant: return "resonant";
    case G2Regime::polariton_branch: return "polariton-branch";
    case G2Regime::molecule_branch: return "molecule-branch";
    case G2Regime::detuned_bunching: return "detuned-bunching";
    }
    return "?";
}

// Fixed laser/cavity settings for the four photon-statistics regimes. The
// detuned presets put the cavity one linewidth below the molecule; the laser
// then sits on the cavity-like lower branch, on the molecule-like transmission
// maximum, or on the bare molecular frequency.
inline ModelParams g2_preset(const ModelParams& base, G2Regime regime) {
    ModelParams p = base;
    switch (regime) {
    case G2Regime::resonant:
        p.delta_cm = 0.0;
        p.delta_lm = 0.0;
        break;
    case G2Regime::polariton_branch:
    case G2Regime::molecule_branch: {
        p.delta_cm = -base.kappa;
        const auto pk = polariton_peaks(p, p.delta_cm);
        p.delta_lm = regime == G2Regime::polariton_branch ? pk.nu_minus : pk.nu_plus;
        break;
    }
    case G2Regime::detuned_bunching:
        p.delta_cm = -base.kappa;
        p.delta_lm = 0.0;
        break;
    }
    return p;
}

// Slowest relaxation scale used for the default delay grid: the amplitude
// decay rate pi * gamma' of the cavity-modified molecular line.
inline double correlation_rate(const ModelParams& p) { return std::numbers::pi * p.purcell_width_ghz(); }

inline CorrelationTrace g2_trace(const ModelParams& p, std::optional<std::vector<double>> tau_grid = std::nullopt) {
    p.validate();
    const ModelOperators ops = drive_operators(p, p.eta);
    const auto l = build_liouvillian(p, ops);
    const auto rho = steady_state(l);
    const auto grid = tau_grid ? *tau_grid : default_tau_grid(correlation_rate(p));
    return g2_of_tau(l, rho, ops.a, grid);
}

inline CorrelationTrace g2_scenario(const ModelParams& base, G2Regime regime,
                                    std::optional<std::vector<double>> tau_grid = std::nullopt) {
    return g2_trace(g2_preset(base, regime), std::move(tau_grid));
}

struct G2Point {
    double C;
    double g;
    double g2_zero;
};

// Resonant weak-drive g2(0) versus cooperativity at fixed kappa and gamma:
// C -> F = C (1 + k) -> g.
inline std::vector<G2Point> g2_vs_cooperativity(const ModelParams& base, std::span<const double> c_grid, unsigned workers = 0) {
    base.validate();
    const ModelOperators ops = drive_operators(base, base.eta);
    return parallel_map(
        c_grid.size(),
        [&](std::size_t i) {
            ModelParams p = base;
            p.delta_cm = 0.0;
            p.delta_lm = 0.0;
            const double f = c_grid[i] * (1.0 + base.red_ratio());
            p.g = g_from_purcell(f, p.kappa, p.gamma_zpl0);
            return G2Point{c_grid[i], p.g, steady_observables(p, ops).g2_zero};
        },
        workers);
}

// ---------------------------------------------------------------------------
// Instrument models

namespace detail {

inline double interp_g2(const CorrelationTrace& tr, double tau) {
    tau = std::abs(tau);
    const auto& x = tr.delays;
    const auto& y = tr.values;
    if (tau >= x.back()) return y.back();
    const auto it = std::upper_bound(x.begin(), x.end(), tau);
    const std::size_t j = std::size_t(it - x.begin());
    const double f = (tau - x[j - 1]) / (x[j] - x[j - 1]);
    return y[j - 1] + f * (y[j] - y[j - 1]);
}

} // namespace detail

// Convolves g2 - 1 (extended symmetrically to negative delays) with a Gaussian
// instrument response of the given FWHM, then mixes in an uncorrelated
// background fraction b: g2 = 1 + (1 - b)^2 (g2_conv - 1).
inline CorrelationTrace detector_degrade(const CorrelationTrace& trace, double irf_fwhm_ps, double background) {
    if (!(background >= 0.0 && background < 1.0))
        throw InvalidArgument("detector_degrade: background fraction must lie in [0, 1)");
    if (!(irf_fwhm_ps >= 0.0)) throw InvalidArgument("detector_degrade: IRF width must be >= 0");
    if (trace.delays.size() < 2) throw InvalidArgument("detector_degrade: trace too short");
    CorrelationTrace out = trace;
    const double mix = (1.0 - background) * (1.0 - background);
    const double sigma = irf_fwhm_ps * 1e-3 / lineshape::kFwhmPerSigma;
    constexpr int kNodes = 801;
    for (std::size_t i = 0; i < trace.delays.size(); ++i) {
        double conv = trace.values[i];
        if (sigma > 0.0) {
            double acc = 0.0, wsum = 0.0;
            for (int k = 0; k < kNodes; ++k) {
                const double s = -6.0 * sigma + 12.0 * sigma * double(k) / double(kNodes - 1);
                const double w = std::exp(-0.5 * s * s / (sigma * sigma)) * ((k == 0 || k == kNodes - 1) ? 0.5 : 1.0);
                acc += w * detail::interp_g2(trace, trace.delays[i] - s);
                wsum += w;
            }
            conv = acc / wsum;
        }
        out.values[i] = background == 0.0 ? conv : 1.0 + mix * (conv - 1.0);
    }
    return out;
}

// Background fraction that brings the degraded g2(0) to the observed value,
// by a one-parameter fit (closed form in b).
inline std::optional<double> fit_background_fraction(const CorrelationTrace& trace, double irf_fwhm_ps, double observed_g2_zero) {
    const auto conv = detector_degrade(trace, irf_fwhm_ps, 0.0);
    const double excess = conv.values.front() - 1.0;
    const double target = observed_g2_zero - 1.0;
    if (!(excess > 0.0) || !(target >= 0.0) || target > excess) return std::nullopt;
    return 1.0 - std::sqrt(target / excess);
}

// Convolves every channel with a normalized Lorentzian of the source FWHM
// (MHz). Channels are treated as piecewise linear on the grid and held
// constant beyond its ends; the segment integrals are exact.
inline SpectrumTrace source_convolve(const SpectrumTrace& spectrum, double source_fwhm_mhz) {
    if (!(source_fwhm_mhz >= 0.0)) throw InvalidArgument("source_convolve: linewidth must be >= 0");
    check_grid_increasing(spectrum.freqs, "source_convolve");
    if (source_fwhm_mhz == 0.0) return spectrum;
    const double h = 0.5 * source_fwhm_mhz * kMHz;
    const auto& x = spectrum.freqs;
    const std::size_t n = x.size();
    SpectrumTrace out;
    out.freqs = x;
    for (const auto& [name, y] : spectrum.channels) {
        std::vector<double> c(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double nu = x[i];
            auto cdf = [&](double u) { return std::atan(u / h) / std::numbers::pi; };
            double acc = y.front() * (cdf(x.front() - nu) + 0.5) + y.back() * (0.5 - cdf(x.back() - nu));
            for (std::size_t j = 0; j + 1 < n; ++j) {
                const double ua = x[j] - nu, ub = x[j + 1] - nu;
                const double beta = (y[j + 1] - y[j]) / (x[j + 1] - x[j]);
                const double alpha = y[j] - beta * ua;
                acc += alpha * (cdf(ub) - cdf(ua)) +
                       beta * h / (2.0 * std::numbers::pi) * std::log((ub * ub + h * h) / (ua * ua + h * h));
            }
            c[i] = acc;
        }
        out.set(name, std::move(c));
    }
    return out;
}

} // namespace cavityqed::model
