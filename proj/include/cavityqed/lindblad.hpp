// lindblad.hpp - steady states, time propagation and two-time correlations
// for an assembled Liouvillian

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cavityqed/errors.hpp"
#include "cavityqed/quantum_core.hpp"

namespace cavityqed {

struct CorrelationTrace {
    std::vector<double> delays; // ns
    std::vector<double> values; // g2(tau), dimensionless
    double mean_photon = 0.0;   // <a^dagger a> in the steady state
};

inline Eigen::RowVectorXcd trace_functional(int d) {
    Eigen::RowVectorXcd tr = Eigen::RowVectorXcd::Zero(Eigen::Index(d) * d);
    for (int i = 0; i < d; ++i) tr(i + d * i) = 1.0;
    return tr;
}

// Solves L vec(rho) = 0 with Tr rho = 1 by overwriting the first row of the
// linear system with the trace constraint.
inline DensityMatrix steady_state(const SuperOperator& liou) {
    const int d = liou.layout().total_dim();
    Matrix system = liou.matrix();
    system.row(0) = trace_functional(d);
    Vector rhs = Vector::Zero(system.rows());
    rhs(0) = 1.0;

    Eigen::PartialPivLU<Matrix> lu(system);
    // The rcond estimate misses exactly zero pivots; check the pivot spread too.
    const Eigen::VectorXd pivots = lu.matrixLU().diagonal().cwiseAbs();
    const double spread = pivots.minCoeff() / pivots.maxCoeff();
    const double rcond = lu.rcond();
    if (!(rcond > 1e-13) || !(spread > 1e-13))
        throw AmbiguousSteadyState("steady_state: kernel is not one-dimensional (rcond " + std::to_string(rcond) +
                                   ", pivot spread " + std::to_string(spread) + ")");
    const Vector x = lu.solve(rhs);

    const double residual = (liou.matrix() * x).norm();
    const double scale = liou.matrix().norm() * x.norm();
    if (!std::isfinite(residual) || residual > 1e-10 * scale)
        throw ConvergenceError("steady_state: residual " + std::to_string(residual) + " above tolerance");
    return DensityMatrix::from_numerical(liou.layout(), unvectorize(x, d));
}

struct PropagationOptions {
    // Step-halving acceptance: every density-matrix entry must agree between
    // step h and h/2 within atol + rtol * |entry|.
    double rtol = 1e-9;
    double atol = 1e-14;
    // Initial step as a fraction of 1 / ||L||_inf.
    double initial_step_scale = 0.1;
    int max_halvings = 16;
};

namespace detail {

inline double inf_norm(const Matrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

// One classical RK4 step for a linear autonomous system is the matrix
// polynomial I + hL + (hL)^2/2 + (hL)^3/6 + (hL)^4/24.
inline Matrix rk4_step_matrix(const Matrix& l, double h) {
    const Matrix hl = h * l;
    const Eigen::Index n = l.rows();
    Matrix p = Matrix::Identity(n, n) + hl / 24.0;
    p = Matrix::Identity(n, n) + (hl * p) / 3.0;
    p = Matrix::Identity(n, n) + (hl * p) / 2.0;
    p = Matrix::Identity(n, n) + hl * p;
    return p;
}

inline Matrix matrix_power(Matrix base, std::int64_t m) {
    Matrix out = Matrix::Identity(base.rows(), base.cols());
    while (m > 0) {
        if (m & 1) out = out * base;
        m >>= 1;
        if (m > 0) base = base * base;
    }
    return out;
}

inline std::uint64_t bits_of(double x) {
    std::uint64_t b;
    std::memcpy(&b, &x, sizeof b);
    return b;
}

inline Vector rk4_vector_steps(Vector v, const Matrix& l, double h, std::int64_t m) {
    for (std::int64_t k = 0; k < m; ++k) {
        const Vector k1 = l * v;
        const Vector k2 = l * (v + 0.5 * h * k1);
        const Vector k3 = l * (v + 0.5 * h * k2);
        const Vector k4 = l * (v + h * k3);
        v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return v;
}

// Fixed-step RK4 across the grid; each interval [t_i, t_{i+1}] is split into
// m_i = ceil(dt_i / h) equal steps. An interval is advanced either by m_i
// matrix-vector RK4 steps or by the cached m_i-th power of the step matrix,
// whichever is cheaper given how often its length recurs in the grid.
inline std::vector<Vector> rk4_trajectory(const Vector& v0, const Matrix& l, std::span<const double> grid, double h) {
    std::map<std::uint64_t, int> uses;
    for (std::size_t i = 1; i < grid.size(); ++i) ++uses[bits_of(grid[i] - grid[i - 1])];
    const double dim = double(l.rows());

    std::vector<Vector> out;
    out.reserve(grid.size());
    out.push_back(v0);
    std::map<std::uint64_t, Matrix> cache;
    Vector v = v0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double dt = grid[i] - grid[i - 1];
        const auto key = bits_of(dt);
        const auto m = std::max<std::int64_t>(1, std::int64_t(std::ceil(dt / h - 1e-9)));
        auto it = cache.find(key);
        if (it == cache.end()) {
            // Costs in units of one matrix-vector product.
            const double by_vector = 4.0 * double(m) * uses[key];
            const double by_power = (4.0 + 2.0 * std::ceil(std::log2(double(m) + 1.0))) * dim + uses[key];
            if (by_vector <= by_power) {
                v = rk4_vector_steps(v, l, dt / double(m), m);
                out.push_back(v);
                continue;
            }
            it = cache.emplace(key, matrix_power(rk4_step_matrix(l, dt / double(m)), m)).first;
        }
        v = it->second * v;
        out.push_back(v);
    }
    return out;
}

inline bool trajectories_agree(const std::vector<Vector>& coarse, const std::vector<Vector>& fine,
                               const PropagationOptions& opt) {
    for (std::size_t k = 0; k < coarse.size(); ++k) {
        const Eigen::VectorXd diff = (coarse[k] - fine[k]).cwiseAbs();
        for (Eigen::Index i = 0; i < diff.size(); ++i) {
            if (!std::isfinite(diff(i))) return false;
            if (diff(i) > opt.atol + opt.rtol * std::abs(fine[k](i))) return false;
        }
    }
    return true;
}

inline void check_grid(std::span<const double> grid) {
    if (grid.empty()) throw InvalidArgument("propagate: empty time grid");
    if (grid.front() != 0.0) throw InvalidArgument("propagate: time grid must start at 0");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw InvalidArgument("propagate: time grid must be strictly increasing");
}

} // namespace detail

// Propagates an arbitrary (not necessarily normalized) operator under L.
// Used directly by the correlation code, where the conditioned state is
// tiny and carries solver roundoff that would fail DensityMatrix checks.
inline std::vector<Matrix> propagate_operator(const Matrix& x0, const SuperOperator& liou,
                                              std::span<const double> t_grid, const PropagationOptions& opt = {}) {
    detail::check_grid(t_grid);
    const int d = liou.layout().total_dim();
    if (x0.rows() != d || x0.cols() != d) throw DimensionMismatch("propagate: state does not match layout");
    const Matrix& l = liou.matrix();
    const double norm = detail::inf_norm(l);

    std::vector<Matrix> out;
    if (norm == 0.0) {
        out.assign(t_grid.size(), x0);
        return out;
    }
    const Vector v0 = vectorize(x0);
    double h = opt.initial_step_scale / norm;
    auto coarse = detail::rk4_trajectory(v0, l, t_grid, h);
    for (int k = 0; k < opt.max_halvings; ++k) {
        h *= 0.5;
        auto fine = detail::rk4_trajectory(v0, l, t_grid, h);
        if (detail::trajectories_agree(coarse, fine, opt)) {
            out.reserve(fine.size());
            for (const auto& v : fine) out.push_back(unvectorize(v, d));
            return out;
        }
        coarse = std::move(fine);
    }
    throw IntegrationError("propagate: step control failed after " + std::to_string(opt.max_halvings) + " halvings");
}

inline std::vector<DensityMatrix> propagate(const DensityMatrix& rho0, const SuperOperator& liou,
                                            std::span<const double> t_grid, const PropagationOptions& opt = {}) {
    if (!(rho0.layout() == liou.layout())) throw DimensionMismatch("propagate: layouts differ");
    const auto raw = propagate_operator(rho0.matrix(), liou, t_grid, opt);
    std::vector<DensityMatrix> out;
    out.reserve(raw.size());
    for (const auto& m : raw) out.push_back(DensityMatrix::from_numerical(rho0.layout(), m));
    return out;
}

// <a^dagger a^dagger a a> / <a^dagger a>^2 evaluated on a single state.
inline double g2_zero_direct(const DensityMatrix& rho, const Operator& a) {
    const Matrix& am = a.matrix();
    const Matrix n_op = am.adjoint() * am;
    const double n = (n_op.transpose().cwiseProduct(rho.matrix())).sum().real();
    if (!(n > 0.0)) throw UndefinedCorrelation("g2: mean photon number is zero");
    const Matrix m4 = am.adjoint() * am.adjoint() * am * am;
    return (m4.transpose().cwiseProduct(rho.matrix())).sum().real() / (n * n);
}

// Logarithmic-then-linear delay grid on [0, 20 / rate]: 30 log-spaced points
// up to 5% of the span, then 200 linear points.
inline std::vector<double> default_tau_grid(double rate, int log_points = 30, int linear_points = 200) {
    if (!(rate > 0.0)) throw InvalidArgument("default_tau_grid: rate must be positive");
    const double span = 20.0 / rate;
    const double knee = 0.05 * span;
    const double first = 1e-4 * span;
    std::vector<double> grid{0.0};
    for (int i = 0; i < log_points; ++i)
        grid.push_back(first * std::pow(knee / first, double(i) / double(log_points)));
    for (int i = 0; i <= linear_points; ++i)
        grid.push_back(knee + (span - knee) * double(i) / double(linear_points));
    return grid;
}

// Quantum regression: g2(tau) = Tr[a^dagger a e^{L tau}(a rho a^dagger)] / <a^dagger a>^2.
// The conditioned state is normalized by <a^dagger a> before propagation.
inline CorrelationTrace g2_of_tau(const SuperOperator& liou, const DensityMatrix& rho_ss, const Operator& a,
                                  std::span<const double> tau_grid, const PropagationOptions& opt = {}) {
    if (!(a.layout() == liou.layout()) || !(rho_ss.layout() == liou.layout()))
        throw DimensionMismatch("g2_of_tau: layouts differ");
    const Matrix& am = a.matrix();
    const Matrix n_op = am.adjoint() * am;
    const double n = (n_op.transpose().cwiseProduct(rho_ss.matrix())).sum().real();
    if (!(n > 0.0) || !std::isfinite(n)) throw UndefinedCorrelation("g2_of_tau: mean photon number is zero");

    const Matrix conditioned = am * rho_ss.matrix() * am.adjoint() / n;
    const auto traj = propagate_operator(conditioned, liou, tau_grid, opt);

    CorrelationTrace out;
    out.mean_photon = n;
    out.delays.assign(tau_grid.begin(), tau_grid.end());
    out.values.reserve(traj.size());
    for (const auto& x : traj) out.values.push_back((n_op.transpose().cwiseProduct(x)).sum().real() / n);
    return out;
}

} // namespace cavityqed
