#pragma once

#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "kc/generator.hpp"

namespace kc {

// Coefficients of the eigenproblem -nu1 u'' + theta1 u = lam u, -nu2 v'' + theta2 v = lam v,
// u(0) = v(0) = 0, u(1) = v(1), nu1 u'(1) + nu2 v'(1) + alpha u(1) = 0.
template <class Real = double>
struct ModeCoefficients {
    Real nu1, nu2, theta1, theta2, alpha;

    static ModeCoefficients from(const PhysicalParams<Real>& p) {
        return {p.nu1(), p.nu2(), p.theta1(), p.theta2(), p.alpha};
    }
    static ModeCoefficients potential_free(const PhysicalParams<Real>& p) {
        return {p.nu1(), p.nu2(), Real(0), Real(0), p.alpha};
    }
};

// sin(kx), sinh(qx) or x depending on the sign of ksq; value and first two derivatives.
template <class Real>
struct Profile {
    Real ksq;

    Real value(Real x) const {
        if (ksq > 0) return std::sin(std::sqrt(ksq) * x);
        if (ksq < 0) return std::sinh(std::sqrt(-ksq) * x);
        return x;
    }
    Real d1(Real x) const {
        if (ksq > 0) { const Real k = std::sqrt(ksq); return k * std::cos(k * x); }
        if (ksq < 0) { const Real q = std::sqrt(-ksq); return q * std::cosh(q * x); }
        return 1;
    }
    Real d2(Real x) const { return -ksq * value(x); }
    // int_0^1 value^2
    Real square_integral() const {
        if (ksq > 0) { const Real k = std::sqrt(ksq); return Real(0.5) - std::sin(2 * k) / (4 * k); }
        if (ksq < 0) { const Real q = std::sqrt(-ksq); return std::sinh(2 * q) / (4 * q) - Real(0.5); }
        return Real(1) / 3;
    }
};

template <class Real = double>
struct ExactMode {
    Real lambda;
    Profile<Real> p1, p2;
    Real a, b;  // u = a p1, v = b p2, unit L2 norm

    Real u(Real x) const { return a * p1.value(x); }
    Real v(Real x) const { return b * p2.value(x); }
    Real ux(Real x) const { return a * p1.d1(x); }
    Real vx(Real x) const { return b * p2.d1(x); }
    Real uxx(Real x) const { return a * p1.d2(x); }
    Real vxx(Real x) const { return b * p2.d2(x); }
};

template <class Real>
Real mode_determinant(const ModeCoefficients<Real>& c, Real lam) {
    const Profile<Real> p1{(lam - c.theta1) / c.nu1}, p2{(lam - c.theta2) / c.nu2};
    return p1.value(1) * c.nu2 * p2.d1(1) + p2.value(1) * (c.nu1 * p1.d1(1) + c.alpha * p1.value(1));
}

// Lowest `count` eigenmodes, by sign-change scan in sqrt(lam - lam_min) and bisection.
template <class Real>
std::vector<ExactMode<Real>> exact_modes(const ModeCoefficients<Real>& c, int count) {
    std::vector<ExactMode<Real>> out;
    const Real lo = std::min(c.theta1, c.theta2);
    const Real step = Real(2e-3) * std::sqrt(std::min(c.nu1, c.nu2));
    Real r0 = step, f0 = mode_determinant(c, lo + r0 * r0);
    for (int it = 0; static_cast<int>(out.size()) < count; ++it) {
        if (it > 50000000) throw NumericalGuard("exact_modes: root scan did not terminate");
        const Real r1 = r0 + step, f1 = mode_determinant(c, lo + r1 * r1);
        if ((f0 < 0) != (f1 < 0) || f1 == 0) {
            Real a = r0, b = r1, fa = f0;
            for (int k = 0; k < 200 && b - a > std::numeric_limits<Real>::epsilon() * b; ++k) {
                const Real m = (a + b) / 2, fm = mode_determinant(c, lo + m * m);
                if ((fm < 0) == (fa < 0)) { a = m; fa = fm; } else { b = m; }
            }
            const Real r = (a + b) / 2, lam = lo + r * r;
            ExactMode<Real> m{lam, {(lam - c.theta1) / c.nu1}, {(lam - c.theta2) / c.nu2}, 0, 0};
            const Real r1a = m.p1.value(1), r1b = -m.p2.value(1);
            const Real r2a = c.nu1 * m.p1.d1(1) + c.alpha * m.p1.value(1), r2b = c.nu2 * m.p2.d1(1);
            if (std::hypot(r1a, r1b) >= std::hypot(r2a, r2b)) { m.a = -r1b; m.b = r1a; }
            else { m.a = r2b; m.b = -r2a; }
            const Real nrm = std::sqrt(m.a * m.a * m.p1.square_integral() + m.b * m.b * m.p2.square_integral());
            m.a /= nrm;
            m.b /= nrm;
            out.push_back(m);
        }
        r0 = r1;
        f0 = f1;
    }
    return out;
}

// Grid interpolant of sum_j coeffs[j] * mode_j (u(1) = v(1) enforced on the shared node).
template <class Real>
StatePair<Real> modal_state(const std::vector<ExactMode<Real>>& modes, const std::vector<Complex<Real>>& coeffs,
                            const Grid<Real>& g) {
    const int n = g.n_cells;
    CVector<Real> u = CVector<Real>::Zero(n + 1), v = CVector<Real>::Zero(n + 1);
    for (std::size_t j = 0; j < coeffs.size() && j < modes.size(); ++j)
        for (int i = 1; i <= n; ++i) {
            u(i) += coeffs[j] * modes[j].u(g.x(i));
            v(i) += coeffs[j] * modes[j].v(g.x(i));
        }
    v(n) = u(n);
    return StatePair<Real>::from_nodes(u, v);
}

template <class Real = double>
std::vector<Complex<Real>> random_coefficients(std::mt19937_64& rng, int count) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<Complex<Real>> c(count);
    for (auto& z : c) {
        const double re = nd(rng), im = nd(rng);
        z = Complex<Real>(Real(re), Real(im));
    }
    return c;
}

// Random complex combination of the lowest `count` exact modes of the generator.
template <class Real>
StatePair<Real> smooth_random_state(const PhysicalParams<Real>& p, const Grid<Real>& g, std::mt19937_64& rng,
                                    int count = 5) {
    const auto modes = exact_modes(ModeCoefficients<Real>::from(p), count);
    return modal_state(modes, random_coefficients<Real>(rng, count), g);
}

template <class Real>
CVector<Real> random_dofs(int size, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    CVector<Real> x(size);
    for (int i = 0; i < size; ++i) {
        const double re = nd(rng), im = nd(rng);
        x(i) = Complex<Real>(Real(re), Real(im));
    }
    return x;
}

// Generalized eigendecomposition H V = M V diag(lambda), V^T M V = I.
template <class Real = double>
struct ModalBasis {
    RVector<Real> lambda;
    RMatrix<Real> vectors;
    RVector<Real> observability;  // |V(v-node 1, j)| / max_j |V(v-node 1, j)|

    explicit ModalBasis(const DiscreteGenerator<Real>& gen) {
        Eigen::GeneralizedSelfAdjointEigenSolver<RMatrix<Real>> es(gen.hamiltonian().dense(), gen.mass.dense());
        if (es.info() != Eigen::Success) throw NumericalGuard("generalized eigensolve failed");
        lambda = es.eigenvalues();
        vectors = es.eigenvectors();
        observability = vectors.row(gen.layout().v_first()).transpose().cwiseAbs();
        observability /= observability.maxCoeff();
    }

    int size() const { return static_cast<int>(lambda.size()); }
};

}  // namespace kc
