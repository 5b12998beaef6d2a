#pragma once

#include "kc/state.hpp"
#include "kc/tridiag.hpp"

namespace kc {

// P1 weak form on the constrained space, i M U' = H U with H = K + P + alpha e_s e_s^T.
// The v-equation is divided by sigma, so the mass is the plain L2 mass on both branches.
template <class Real = double>
struct DiscreteGenerator {
    PhysicalParams<Real> params;
    Grid<Real> grid;
    SymTridiag<Real> mass;
    SymTridiag<Real> stiffness;
    SymTridiag<Real> potential;
    Real boundary = 0;  // alpha, added at the shared node
    Real k_lift = 0;    // H-coupling between v-node 0 (value h) and v-node 1
    SymTridiag<Real> ham;

    ChainLayout layout() const { return {grid.n_cells}; }
    int dofs() const { return grid.dofs(); }

    const SymTridiag<Real>& hamiltonian() const { return ham; }

    template <class Vec>
    CVector<Real> apply_mass(const Vec& x) const { return mass.apply(x); }
    template <class Vec>
    CVector<Real> apply_h(const Vec& x) const { return ham.apply(x); }

    // <a, b>_M = b^H M a
    Complex<Real> mass_inner(const CVector<Real>& a, const CVector<Real>& b) const {
        return b.dot(mass.apply(a));
    }
    Real mass_norm(const CVector<Real>& a) const { return std::sqrt(std::max(Real(0), std::real(mass_inner(a, a)))); }
    Real energy(const CVector<Real>& a) const { return std::real(a.dot(apply_h(a))); }

    // Re <A_h U, U>_M with A_h = -i M^{-1} H, i.e. Re(U^H (-i H) U).
    Real skew_defect(const CVector<Real>& u) const {
        return std::real(Complex<Real>(0, -1) * u.dot(apply_h(u)));
    }
};

template <class Real>
DiscreteGenerator<Real> assemble_generator(const PhysicalParams<Real>& p, const Grid<Real>& g) {
    p.validate();
    const int n = g.n_cells;
    const int D = g.dofs();
    const Real dx = g.dx;
    const ChainLayout c{n};
    DiscreteGenerator<Real> gen{p, g, SymTridiag<Real>(D), SymTridiag<Real>(D), SymTridiag<Real>(D), p.alpha, 0, {}};

    auto add_branch = [&](auto pos, Real nu, Real theta) {
        for (int i = 0; i < n; ++i) {
            const int a = i, b = i + 1;
            if (a == 0) {
                const int pb = pos(b);
                gen.mass.d(pb) += dx / 3;
                gen.stiffness.d(pb) += nu / dx;
                gen.potential.d(pb) += theta * dx / 3;
                continue;
            }
            const int pa = pos(a), pb = pos(b);
            gen.mass.add_pair(pa, pb, dx / 3, dx / 6, dx / 3);
            gen.stiffness.add_pair(pa, pb, nu / dx, -nu / dx, nu / dx);
            gen.potential.add_pair(pa, pb, theta * dx / 3, theta * dx / 6, theta * dx / 3);
        }
    };
    add_branch([&](int i) { return c.u_pos(i); }, p.nu1(), p.theta1());
    add_branch([&](int i) { return c.v_pos(i); }, p.nu2(), p.theta2());
    gen.k_lift = -p.nu2() / dx + p.theta2() * dx / 6;
    gen.ham = gen.stiffness;
    gen.ham += gen.potential;
    gen.ham.d(c.shared()) += gen.boundary;
    return gen;
}

}  // namespace kc
