#pragma once

#include <cmath>

#include "kc/params.hpp"

namespace kc {

// Real symmetric tridiagonal matrix: diagonal d, off-diagonal e (e(i) couples i and i+1).
template <class Real = double>
struct SymTridiag {
    RVector<Real> d;
    RVector<Real> e;

    SymTridiag() = default;
    explicit SymTridiag(int n) : d(RVector<Real>::Zero(n)), e(RVector<Real>::Zero(n > 0 ? n - 1 : 0)) {}

    int size() const { return static_cast<int>(d.size()); }

    void add_pair(int a, int b, Real daa, Real dab, Real dbb) {
        d(a) += daa;
        d(b) += dbb;
        e(std::min(a, b)) += dab;
    }

    template <class Vec>
    CVector<Real> apply(const Vec& x) const {
        const int n = size();
        CVector<Real> y(n);
        for (int i = 0; i < n; ++i) {
            Complex<Real> acc = d(i) * x(i);
            if (i > 0) acc += e(i - 1) * x(i - 1);
            if (i + 1 < n) acc += e(i) * x(i + 1);
            y(i) = acc;
        }
        return y;
    }

    RMatrix<Real> dense() const {
        const int n = size();
        RMatrix<Real> m = RMatrix<Real>::Zero(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = d(i);
        for (int i = 0; i + 1 < n; ++i) m(i, i + 1) = m(i + 1, i) = e(i);
        return m;
    }

    SymTridiag& operator+=(const SymTridiag& o) { d += o.d; e += o.e; return *this; }
};

// LDL^T factorization of the complex symmetric tridiagonal a*A + b*B, solved
// without pivoting. Used for M + i(dt/2)H, whose Hermitian part M is positive definite.
template <class Real = double>
class ComplexTridiagSolver {
public:
    ComplexTridiagSolver() = default;

    ComplexTridiagSolver(const SymTridiag<Real>& A, Complex<Real> a, const SymTridiag<Real>& B, Complex<Real> b) {
        const int n = A.size();
        piv_.resize(n);
        mult_.resize(n > 0 ? n - 1 : 0);
        off_.resize(n > 0 ? n - 1 : 0);
        for (int i = 0; i + 1 < n; ++i) off_(i) = a * A.e(i) + b * B.e(i);
        Real scale = 0;
        for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(a * A.d(i) + b * B.d(i)));
        piv_(0) = a * A.d(0) + b * B.d(0);
        for (int i = 0; i + 1 < n; ++i) {
            if (!(std::abs(piv_(i)) > scale * Real(1e-14))) throw NumericalGuard("tridiagonal solve: vanishing pivot");
            mult_(i) = off_(i) / piv_(i);
            piv_(i + 1) = a * A.d(i + 1) + b * B.d(i + 1) - mult_(i) * off_(i);
        }
        if (!(std::abs(piv_(n - 1)) > scale * Real(1e-14))) throw NumericalGuard("tridiagonal solve: vanishing pivot");
    }

    CVector<Real> solve(CVector<Real> r) const {
        const int n = static_cast<int>(piv_.size());
        for (int i = 0; i + 1 < n; ++i) r(i + 1) -= mult_(i) * r(i);
        r(n - 1) /= piv_(n - 1);
        for (int i = n - 2; i >= 0; --i) r(i) = r(i) / piv_(i) - mult_(i) * r(i + 1);
        return r;
    }

private:
    CVector<Real> piv_, mult_, off_;
};

}  // namespace kc
