// quantum_core.hpp - operators on the truncated emitter (x) Fock space and
// Lindblad superoperator assembly
//
// Layout convention: the emitter factor comes first, so basis index
// i = level * (n_max + 1) + n. Emitter level 0 is |g>, level 1 is |e>.
//
// Vectorization convention: column-major stacking, vec(rho)[i + D*j] = rho(i, j),
// which is what Eigen's default storage gives. Under it
//     vec(A X B) = (B^T (x) A) vec(X).

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cavityqed/errors.hpp"

namespace cavityqed {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

class HilbertLayout {
public:
    HilbertLayout(int emitter_dim, int fock_cutoff)
        : emitter_dim_(emitter_dim), fock_cutoff_(fock_cutoff) {
        if (emitter_dim < 2) throw InvalidArgument("HilbertLayout: emitter_dim must be >= 2");
        if (fock_cutoff < 1) throw InvalidArgument("HilbertLayout: fock cutoff n_max must be >= 1");
    }

    int emitter_dim() const { return emitter_dim_; }
    int fock_cutoff() const { return fock_cutoff_; }
    int fock_dim() const { return fock_cutoff_ + 1; }
    int total_dim() const { return emitter_dim_ * fock_dim(); }

    int index(int level, int photons) const { return level * fock_dim() + photons; }

    friend bool operator==(const HilbertLayout&, const HilbertLayout&) = default;

private:
    int emitter_dim_;
    int fock_cutoff_;
};

inline double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline bool is_hermitian(const Matrix& m, double rel_tol = 1e-12) {
    if (m.rows() != m.cols()) return false;
    const double scale = max_abs(m);
    if (scale == 0.0) return true;
    return max_abs(m - m.adjoint()) < rel_tol * scale;
}

// Square matrix bound to a layout. Immutable once built.
class Operator {
public:
    Operator(HilbertLayout layout, Matrix entries, bool hermitian = false)
        : layout_(layout), entries_(std::move(entries)), hermitian_(hermitian) {
        const int d = layout_.total_dim();
        if (entries_.rows() != d || entries_.cols() != d)
            throw DimensionMismatch("Operator: entries are " + std::to_string(entries_.rows()) + "x" +
                                    std::to_string(entries_.cols()) + ", layout needs " +
                                    std::to_string(d) + "x" + std::to_string(d));
        if (hermitian_ && !is_hermitian(entries_))
            throw InvalidArgument("Operator: flagged Hermitian but max|A - A^dagger| exceeds 1e-12 max|A|");
    }

    static Operator identity(HilbertLayout layout) {
        return Operator(layout, Matrix::Identity(layout.total_dim(), layout.total_dim()), true);
    }
    static Operator zero(HilbertLayout layout) {
        return Operator(layout, Matrix::Zero(layout.total_dim(), layout.total_dim()), true);
    }

    const HilbertLayout& layout() const { return layout_; }
    const Matrix& matrix() const { return entries_; }
    int dim() const { return layout_.total_dim(); }
    bool hermitian() const { return hermitian_; }

    Operator adjoint() const { return Operator(layout_, entries_.adjoint(), hermitian_); }
    cplx trace() const { return entries_.trace(); }

    // Re-tag as Hermitian after verifying.
    Operator as_hermitian() const { return Operator(layout_, entries_, true); }

    friend Operator operator*(const Operator& a, const Operator& b) {
        check_same(a, b);
        return Operator(a.layout_, a.entries_ * b.entries_);
    }
    friend Operator operator+(const Operator& a, const Operator& b) {
        check_same(a, b);
        return Operator(a.layout_, a.entries_ + b.entries_, a.hermitian_ && b.hermitian_);
    }
    friend Operator operator-(const Operator& a, const Operator& b) {
        check_same(a, b);
        return Operator(a.layout_, a.entries_ - b.entries_, a.hermitian_ && b.hermitian_);
    }
    friend Operator operator*(cplx s, const Operator& a) {
        return Operator(a.layout_, s * a.entries_, a.hermitian_ && s.imag() == 0.0);
    }
    friend Operator operator*(double s, const Operator& a) {
        return Operator(a.layout_, s * a.entries_, a.hermitian_);
    }

private:
    static void check_same(const Operator& a, const Operator& b) {
        if (!(a.layout_ == b.layout_)) throw DimensionMismatch("Operator: layouts differ");
    }

    HilbertLayout layout_;
    Matrix entries_;
    bool hermitian_;
};

inline Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }
inline Operator anticommutator(const Operator& a, const Operator& b) { return a * b + b * a; }

// Validated state: Hermitian to 1e-10, unit trace to 1e-9, min eigenvalue >= -1e-9.
class DensityMatrix {
public:
    static constexpr double kHermitianTol = 1e-10;
    static constexpr double kTraceTol = 1e-9;
    static constexpr double kPositivityTol = 1e-9;

    DensityMatrix(HilbertLayout layout, Matrix entries) : layout_(layout), entries_(std::move(entries)) {
        const int d = layout_.total_dim();
        if (entries_.rows() != d || entries_.cols() != d)
            throw DimensionMismatch("DensityMatrix: entries do not match layout");
        if (max_abs(entries_ - entries_.adjoint()) >= kHermitianTol)
            throw InvalidArgument("DensityMatrix: not Hermitian");
        if (std::abs(entries_.trace() - cplx(1.0)) >= kTraceTol)
            throw InvalidArgument("DensityMatrix: trace differs from 1");
        if (min_eigenvalue() < -kPositivityTol)
            throw InvalidArgument("DensityMatrix: negative eigenvalue " + std::to_string(min_eigenvalue()));
    }

    // Symmetrizes before validating; for solver output carrying roundoff.
    static DensityMatrix from_numerical(HilbertLayout layout, const Matrix& m) {
        return DensityMatrix(layout, 0.5 * (m + m.adjoint()));
    }

    static DensityMatrix pure(HilbertLayout layout, int index) {
        Matrix m = Matrix::Zero(layout.total_dim(), layout.total_dim());
        m(index, index) = 1.0;
        return DensityMatrix(layout, std::move(m));
    }

    static DensityMatrix maximally_mixed(HilbertLayout layout) {
        const int d = layout.total_dim();
        return DensityMatrix(layout, Matrix::Identity(d, d) / double(d));
    }

    const HilbertLayout& layout() const { return layout_; }
    const Matrix& matrix() const { return entries_; }

    cplx expect(const Operator& op) const {
        if (!(op.layout() == layout_)) throw DimensionMismatch("expect: layouts differ");
        // Tr(A rho) without forming the product.
        return (op.matrix().transpose().cwiseProduct(entries_)).sum();
    }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (entries_ + entries_.adjoint()), Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

    double purity() const { return (entries_ * entries_).trace().real(); }

private:
    HilbertLayout layout_;
    Matrix entries_;
};

// Kronecker product of raw factors.
inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Emitter factor (x) field factor, checked against the layout.
inline Operator kron(const HilbertLayout& layout, const Matrix& emitter_factor, const Matrix& field_factor) {
    if (emitter_factor.rows() != layout.emitter_dim() || emitter_factor.cols() != layout.emitter_dim())
        throw DimensionMismatch("kron: emitter factor does not match layout emitter_dim");
    if (field_factor.rows() != layout.fock_dim() || field_factor.cols() != layout.fock_dim())
        throw DimensionMismatch("kron: field factor does not match layout Fock dimension");
    return Operator(layout, kron(emitter_factor, field_factor));
}

inline Matrix fock_annihilation(int n_max) {
    Matrix a = Matrix::Zero(n_max + 1, n_max + 1);
    for (int n = 1; n <= n_max; ++n) a(n - 1, n) = std::sqrt(double(n));
    return a;
}

inline Operator annihilation_op(const HilbertLayout& layout) {
    return kron(layout, Matrix::Identity(layout.emitter_dim(), layout.emitter_dim()),
                fock_annihilation(layout.fock_cutoff()));
}

// sigma = |g><e| on a two-level emitter.
inline Operator emitter_lowering_op(const HilbertLayout& layout) {
    if (layout.emitter_dim() != 2)
        throw UnsupportedLevelStructure("emitter_lowering_op: only two-level emitters are supported, got " +
                                        std::to_string(layout.emitter_dim()) + " levels");
    Matrix s = Matrix::Zero(2, 2);
    s(0, 1) = 1.0;
    return kron(layout, s, Matrix::Identity(layout.fock_dim(), layout.fock_dim()));
}

// Generator acting on column-major vectorized density matrices.
class SuperOperator {
public:
    SuperOperator(HilbertLayout layout, Matrix entries) : layout_(layout), entries_(std::move(entries)) {
        const Eigen::Index n = Eigen::Index(layout_.total_dim()) * layout_.total_dim();
        if (entries_.rows() != n || entries_.cols() != n)
            throw DimensionMismatch("SuperOperator: entries do not match layout");
    }

    const HilbertLayout& layout() const { return layout_; }
    const Matrix& matrix() const { return entries_; }
    Eigen::Index size() const { return entries_.rows(); }

    Matrix apply(const Matrix& rho) const {
        const int d = layout_.total_dim();
        Vector v = entries_ * Eigen::Map<const Vector>(rho.data(), rho.size());
        return Eigen::Map<const Matrix>(v.data(), d, d);
    }

    // Column sums of the trace functional applied to L; zero for a trace-preserving generator.
    double trace_defect() const {
        const int d = layout_.total_dim();
        Eigen::RowVectorXcd tr = Eigen::RowVectorXcd::Zero(size());
        for (int i = 0; i < d; ++i) tr(i + d * i) = 1.0;
        return (tr * entries_).cwiseAbs().maxCoeff();
    }

private:
    HilbertLayout layout_;
    Matrix entries_;
};

inline Vector vectorize(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

inline Matrix unvectorize(const Vector& v, int d) { return Eigen::Map<const Matrix>(v.data(), d, d); }

struct Collapse {
    Operator op;
    double rate;
};

// L(rho) = -i[H, rho] + sum_k rate_k (C rho C^dagger - 1/2 {C^dagger C, rho})
inline SuperOperator liouvillian(const Operator& hamiltonian, const std::vector<Collapse>& collapses) {
    if (!is_hermitian(hamiltonian.matrix()))
        throw InvalidArgument("liouvillian: Hamiltonian is not Hermitian");
    const HilbertLayout layout = hamiltonian.layout();
    const int d = layout.total_dim();
    const Matrix id = Matrix::Identity(d, d);
    const Matrix& h = hamiltonian.matrix();

    Matrix l = cplx(0.0, -1.0) * (kron(id, h) - kron(h.transpose(), id));
    for (const auto& c : collapses) {
        if (!(c.op.layout() == layout)) throw DimensionMismatch("liouvillian: collapse layout differs from H");
        if (c.rate < 0.0 || !std::isfinite(c.rate))
            throw InvalidArgument("liouvillian: collapse rate must be finite and >= 0");
        if (c.rate == 0.0) continue;
        const Matrix& cm = c.op.matrix();
        const Matrix cdc = cm.adjoint() * cm;
        l += c.rate * (kron(cm.conjugate(), cm) - 0.5 * kron(id, cdc) - 0.5 * kron(cdc.transpose(), id));
    }
    return SuperOperator(layout, std::move(l));
}

} // namespace cavityqed
