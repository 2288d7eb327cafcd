// lineshape.hpp - Lorentzian, Voigt and Fano line models, a Nelder-Mead
// least-squares fitter and discrete peak finding

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cavityqed/errors.hpp"
#include "cavityqed/spectrum.hpp"

namespace cavityqed::lineshape {

// ---------------------------------------------------------------------------
// Faddeeva function w(z) = exp(-z^2) erfc(-iz) for Im z >= 0, by Weideman's
// rational expansion (SIAM J. Numer. Anal. 31, 1994) with 40 terms.

namespace detail {

inline constexpr int kWeidemanTerms = 40;

struct WeidemanTable {
    double l;
    std::array<double, kWeidemanTerms> coeff; // highest degree first
};

inline WeidemanTable make_weideman_table() {
    constexpr int n = kWeidemanTerms;
    constexpr int m = 2 * n;
    constexpr int m2 = 2 * m;
    WeidemanTable tab{};
    tab.l = std::sqrt(n / std::numbers::sqrt2);
    // f sampled at k = -m+1 .. m-1, with a leading zero to length m2.
    std::vector<double> f(m2, 0.0);
    for (int k = -m + 1; k <= m - 1; ++k) {
        const double theta = k * std::numbers::pi / m;
        const double t = tab.l * std::tan(0.5 * theta);
        f[static_cast<std::size_t>(k + m)] = std::exp(-t * t) * (tab.l * tab.l + t * t);
    }
    // fftshift, then the real part of a plain DFT.
    std::vector<double> shifted(m2);
    for (int i = 0; i < m2; ++i) shifted[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>((i + m2 / 2) % m2)];
    std::vector<double> a(static_cast<std::size_t>(n + 1));
    for (int j = 0; j <= n; ++j) {
        double re = 0.0;
        for (int i = 0; i < m2; ++i) re += shifted[static_cast<std::size_t>(i)] * std::cos(2.0 * std::numbers::pi * j * i / m2);
        a[static_cast<std::size_t>(j)] = re / m2;
    }
    for (int j = 0; j < n; ++j) tab.coeff[static_cast<std::size_t>(j)] = a[static_cast<std::size_t>(n - j)];
    return tab;
}

inline const WeidemanTable& weideman_table() {
    static const WeidemanTable tab = make_weideman_table();
    return tab;
}

} // namespace detail

inline std::complex<double> faddeeva(std::complex<double> z) {
    if (z.imag() < 0.0) throw InvalidArgument("faddeeva: only the upper half plane is supported");
    const auto& tab = detail::weideman_table();
    const std::complex<double> iz(-z.imag(), z.real());
    const std::complex<double> lmiz = tab.l - iz;
    const std::complex<double> zz = (tab.l + iz) / lmiz;
    std::complex<double> p = 0.0;
    for (double c : tab.coeff) p = p * zz + c;
    return 2.0 * p / (lmiz * lmiz) + (1.0 / std::sqrt(std::numbers::pi)) / lmiz;
}

// ---------------------------------------------------------------------------
// Profiles. All widths are FWHM in the same unit as the abscissa; amplitude is
// the peak height above the offset unless stated otherwise.

inline constexpr double kFwhmPerSigma = 2.3548200450309493; // 2 sqrt(2 ln 2)

struct VoigtParams {
    double center = 0.0;
    double lorentz_fwhm = 0.0;
    double gauss_fwhm = 0.0;
    double amplitude = 1.0;
    double offset = 0.0;
};

struct FanoParams {
    double center = 0.0;
    double fwhm = 1.0;
    double q = 0.0;
    double amplitude = 1.0;
    double offset = 0.0;
};

struct LorentzParams {
    double center = 0.0;
    double fwhm = 1.0;
    double amplitude = 1.0;
    double offset = 0.0;
};

inline double lorentzian(double x, const LorentzParams& p) {
    const double u = 2.0 * (x - p.center) / p.fwhm;
    return p.offset + p.amplitude / (1.0 + u * u);
}

// Area-normalized Voigt density.
inline double voigt_density(double x, double lorentz_fwhm, double gauss_fwhm) {
    const double gamma = 0.5 * std::abs(lorentz_fwhm);
    const double sigma = std::abs(gauss_fwhm) / kFwhmPerSigma;
    if (sigma == 0.0) {
        if (gamma == 0.0) throw InvalidArgument("voigt: both widths are zero");
        return gamma / (std::numbers::pi * (x * x + gamma * gamma));
    }
    if (gamma == 0.0) return std::exp(-0.5 * x * x / (sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    const std::complex<double> z(x / (sigma * std::numbers::sqrt2), gamma / (sigma * std::numbers::sqrt2));
    return faddeeva(z).real() / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

inline double voigt_profile(double x, const VoigtParams& p) {
    const double peak = voigt_density(0.0, p.lorentz_fwhm, p.gauss_fwhm);
    return p.offset + p.amplitude * voigt_density(x - p.center, p.lorentz_fwhm, p.gauss_fwhm) / peak;
}

// Olivero-Longbothum closed form.
inline double voigt_fwhm(double lorentz_fwhm, double gauss_fwhm) {
    const double l = std::abs(lorentz_fwhm);
    const double g = std::abs(gauss_fwhm);
    return 0.5346 * l + std::sqrt(0.2166 * l * l + g * g);
}

// FWHM read off the evaluated profile by bisection on the half-maximum crossing.
inline double voigt_fwhm_numeric(double lorentz_fwhm, double gauss_fwhm) {
    const double half = 0.5 * voigt_density(0.0, lorentz_fwhm, gauss_fwhm);
    double lo = 0.0;
    double hi = std::max(std::abs(lorentz_fwhm), std::abs(gauss_fwhm));
    while (voigt_density(hi, lorentz_fwhm, gauss_fwhm) > half) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (voigt_density(mid, lorentz_fwhm, gauss_fwhm) > half ? lo : hi) = mid;
    }
    return lo + hi;
}

// Generalized Lorentzian (Fano) line:
//     offset + amplitude (q G/2 + x)^2 / (x^2 + (G/2)^2),  x = nu - center.
inline double fano_profile(double x, const FanoParams& p) {
    const double hw = 0.5 * p.fwhm;
    const double u = x - p.center;
    const double num = p.q * hw + u;
    return p.offset + p.amplitude * num * num / (u * u + hw * hw);
}

// ---------------------------------------------------------------------------
// Named models for the fitter.

struct LineshapeModel {
    std::string name;
    std::vector<std::string> param_names;
    std::function<double(double, std::span<const double>)> eval;
    // Parameters reported as absolute values after fitting (widths).
    std::vector<std::size_t> nonnegative;
};

inline LineshapeModel lorentz_model() {
    return {"lorentzian",
            {"center", "fwhm", "amplitude", "offset"},
            [](double x, std::span<const double> p) {
                return lorentzian(x, {p[0], std::abs(p[1]), p[2], p[3]});
            },
            {1}};
}

inline LineshapeModel voigt_model() {
    return {"voigt",
            {"center", "lorentz_fwhm", "gauss_fwhm", "amplitude", "offset"},
            [](double x, std::span<const double> p) {
                return voigt_profile(x, {p[0], std::abs(p[1]), std::abs(p[2]), p[3], p[4]});
            },
            {1, 2}};
}

inline LineshapeModel fano_model() {
    return {"fano",
            {"center", "fwhm", "q", "amplitude", "offset"},
            [](double x, std::span<const double> p) {
                return fano_profile(x, {p[0], std::abs(p[1]), p[2], p[3], p[4]});
            },
            {1}};
}

inline LineshapeModel model_by_name(const std::string& name) {
    if (name == "lorentzian") return lorentz_model();
    if (name == "voigt") return voigt_model();
    if (name == "fano") return fano_model();
    throw InvalidArgument("unknown lineshape model '" + name + "'");
}

struct FitResult {
    std::string model;
    std::vector<std::string> names;
    std::vector<double> params;
    double residual_norm = 0.0; // sqrt of the sum of squared residuals
    double initial_residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> best_history; // best residual norm after each iteration

    double get(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return params[i];
        throw InvalidArgument("FitResult: no parameter '" + name + "'");
    }
    double rms(std::size_t n_points) const { return residual_norm / std::sqrt(double(n_points)); }
};

struct FitOptions {
    int max_iterations = 2000;
    double simplex_tol = 1e-10;
    // Initial simplex edge per parameter, relative to |init| (absolute when init is 0).
    double initial_step = 0.1;
    // When set, a fit whose rms residual exceeds this is reported as not converged.
    std::optional<double> max_rms;
};

// Derivative-free Nelder-Mead minimization of the residual sum of squares.
// Converged means the simplex has shrunk below simplex_tol relative to the
// parameter scale before max_iterations, with a restart from the converged
// point to guard against premature collapse.
inline FitResult fit(const LineshapeModel& model, std::span<const double> x, std::span<const double> y,
                     std::vector<double> init, const FitOptions& opt = {}) {
    const std::size_t np = model.param_names.size();
    if (init.size() != np) throw InvalidArgument("fit: init has wrong number of parameters for " + model.name);
    if (x.size() != y.size()) throw DimensionMismatch("fit: x and y differ in length");
    if (x.size() < np + 2) throw InvalidArgument("fit: need at least n_params + 2 data points");

    auto cost = [&](const std::vector<double>& p) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = model.eval(x[i], p) - y[i];
            s += r * r;
        }
        return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
    };

    std::vector<double> scale(np);
    for (std::size_t j = 0; j < np; ++j) scale[j] = init[j] != 0.0 ? std::abs(init[j]) : 1.0;

    FitResult res;
    res.model = model.name;
    res.names = model.param_names;
    res.initial_residual_norm = std::sqrt(cost(init));

    std::vector<std::vector<double>> simplex(np + 1, init);
    std::vector<double> fval(np + 1);
    auto build_simplex = [&](const std::vector<double>& base) {
        simplex.assign(np + 1, base);
        for (std::size_t j = 0; j < np; ++j) {
            const double step = opt.initial_step * (base[j] != 0.0 ? std::abs(base[j]) : scale[j]);
            simplex[j + 1][j] += step;
        }
        for (std::size_t i = 0; i <= np; ++i) fval[i] = cost(simplex[i]);
    };
    build_simplex(init);

    auto order = [&]() {
        std::vector<std::size_t> idx(np + 1);
        for (std::size_t i = 0; i <= np; ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fval[a] < fval[b]; });
        std::vector<std::vector<double>> s2(np + 1);
        std::vector<double> f2(np + 1);
        for (std::size_t i = 0; i <= np; ++i) {
            s2[i] = simplex[idx[i]];
            f2[i] = fval[idx[i]];
        }
        simplex = std::move(s2);
        fval = std::move(f2);
    };
    auto small_enough = [&]() {
        for (std::size_t i = 1; i <= np; ++i)
            for (std::size_t j = 0; j < np; ++j)
                if (std::abs(simplex[i][j] - simplex[0][j]) >
                    opt.simplex_tol * (std::abs(simplex[0][j]) + 1e-3 * scale[j]))
                    return false;
        return true;
    };

    bool restarted = false;
    int it = 0;
    order();
    for (; it < opt.max_iterations; ++it) {
        if (small_enough()) {
            if (restarted) {
                res.converged = true;
                break;
            }
            restarted = true;
            build_simplex(simplex[0]);
            order();
            continue;
        }
        std::vector<double> centroid(np, 0.0);
        for (std::size_t i = 0; i < np; ++i)
            for (std::size_t j = 0; j < np; ++j) centroid[j] += simplex[i][j] / double(np);
        auto along = [&](double t) {
            std::vector<double> p(np);
            for (std::size_t j = 0; j < np; ++j) p[j] = centroid[j] + t * (simplex[np][j] - centroid[j]);
            return p;
        };
        const auto xr = along(-1.0);
        const double fr = cost(xr);
        if (fr < fval[0]) {
            const auto xe = along(-2.0);
            const double fe = cost(xe);
            if (fe < fr) {
                simplex[np] = xe;
                fval[np] = fe;
            } else {
                simplex[np] = xr;
                fval[np] = fr;
            }
        } else if (fr < fval[np - 1]) {
            simplex[np] = xr;
            fval[np] = fr;
        } else {
            const bool outside = fr < fval[np];
            const auto xc = along(outside ? -0.5 : 0.5);
            const double fc = cost(xc);
            if (fc < (outside ? fr : fval[np])) {
                simplex[np] = xc;
                fval[np] = fc;
            } else {
                for (std::size_t i = 1; i <= np; ++i) {
                    for (std::size_t j = 0; j < np; ++j) simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                    fval[i] = cost(simplex[i]);
                }
            }
        }
        order();
        res.best_history.push_back(std::sqrt(fval[0]));
    }

    res.iterations = it;
    res.params = simplex[0];
    for (std::size_t j : model.nonnegative) res.params[j] = std::abs(res.params[j]);
    res.residual_norm = std::sqrt(fval[0]);
    if (res.converged && !(res.residual_norm <= res.initial_residual_norm)) res.converged = false;
    if (res.converged && opt.max_rms && res.rms(x.size()) > *opt.max_rms) res.converged = false;
    return res;
}

inline FitResult fit(const LineshapeModel& model, const SpectrumTrace& data, const std::string& channel_name,
                     std::vector<double> init, const FitOptions& opt = {}) {
    return fit(model, data.freqs, data.channel(channel_name), std::move(init), opt);
}

// ---------------------------------------------------------------------------

struct Peak {
    double position;
    double height;
    double prominence;
};

// Vertex of the parabola through three points (non-uniform spacing allowed).
inline std::pair<double, double> parabolic_vertex(double x0, double y0, double x1, double y1, double x2, double y2) {
    const double d01 = (y1 - y0) / (x1 - x0);
    const double d12 = (y2 - y1) / (x2 - x1);
    const double a = (d12 - d01) / (x2 - x0);
    if (a >= 0.0) return {x1, y1};
    const double b = d01 - a * (x0 + x1);
    const double xv = -b / (2.0 * a);
    const double yv = y1 + (xv - x1) * (d01 + a * (xv - x0));
    return {xv, yv};
}

// Interior local maxima, refined by three-point quadratic interpolation and
// filtered by topographic prominence.
inline std::vector<Peak> find_peaks(std::span<const double> x, std::span<const double> y, double min_prominence) {
    if (x.size() != y.size()) throw DimensionMismatch("find_peaks: x and y differ in length");
    std::vector<Peak> out;
    const std::size_t n = y.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(y[i] > y[i - 1] && y[i] >= y[i + 1])) continue;
        // Plateau to the right: the peak must eventually drop.
        std::size_t r = i;
        while (r + 1 < n && y[r + 1] == y[i]) ++r;
        if (r + 1 >= n) continue;
        double left_min = y[i];
        for (std::size_t k = i; k-- > 0;) {
            if (y[k] > y[i]) break;
            left_min = std::min(left_min, y[k]);
        }
        double right_min = y[i];
        for (std::size_t k = r + 1; k < n; ++k) {
            if (y[k] > y[i]) break;
            right_min = std::min(right_min, y[k]);
        }
        const double prominence = y[i] - std::max(left_min, right_min);
        if (prominence < min_prominence) continue;
        const auto [xv, yv] = parabolic_vertex(x[i - 1], y[i - 1], x[i], y[i], x[i + 1], y[i + 1]);
        out.push_back({xv, yv, prominence});
    }
    return out;
}

inline std::vector<Peak> find_peaks(const SpectrumTrace& trace, const std::string& channel_name, double min_prominence) {
    return find_peaks(trace.freqs, trace.channel(channel_name), min_prominence);
}

} // namespace cavityqed::lineshape
