#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "kc/params.hpp"

namespace kc {

// Chain ordering of the constrained unknowns: u-nodes 1..N-1, the shared
// node N, then v-nodes N-1..1. Every P1 coupling is between chain neighbours,
// so all operators on this layout are tridiagonal.
struct ChainLayout {
    int n;

    int size() const { return 2 * n - 1; }
    int shared() const { return n - 1; }
    int v_first() const { return 2 * n - 2; }  // v-node 1, adjacent to the control node
    int u_pos(int i) const { return i < n ? i - 1 : n - 1; }
    int v_pos(int i) const { return i < n ? 2 * n - 1 - i : n - 1; }
};

template <class Real = double>
struct StatePair {
    int n = 0;
    CVector<Real> dofs;          // chain layout, size 2N-1
    Complex<Real> lift{0, 0};    // v at node 0 (Dirichlet control value)

    StatePair() = default;
    explicit StatePair(int n_cells) : n(n_cells), dofs(CVector<Real>::Zero(2 * n_cells - 1)) {}
    StatePair(int n_cells, CVector<Real> d, Complex<Real> h = {})
        : n(n_cells), dofs(std::move(d)), lift(h) {
        if (dofs.size() != 2 * n - 1) throw ValidationError("StatePair: dof vector has wrong size");
    }

    ChainLayout layout() const { return {n}; }

    static StatePair from_nodes(const CVector<Real>& u, const CVector<Real>& v, Real tol = Real(1e-12)) {
        if (u.size() != v.size() || u.size() < 5) throw ValidationError("StatePair: u and v need N+1 >= 5 nodes");
        const int n = static_cast<int>(u.size()) - 1;
        const Real scale = std::max<Real>(Real(1), std::max(u.cwiseAbs().maxCoeff(), v.cwiseAbs().maxCoeff()));
        if (std::abs(u(n) - v(n)) > tol * scale) throw ValidationError("StatePair: u(1) != v(1) (Kirchhoff continuity)");
        if (std::abs(u(0)) > tol * scale) throw ValidationError("StatePair: u(0) must vanish");
        StatePair s(n);
        const ChainLayout c{n};
        for (int i = 1; i < n; ++i) {
            s.dofs(c.u_pos(i)) = u(i);
            s.dofs(c.v_pos(i)) = v(i);
        }
        s.dofs(c.shared()) = u(n);
        s.lift = v(0);
        return s;
    }

    CVector<Real> u_nodes() const {
        CVector<Real> u(n + 1);
        const ChainLayout c{n};
        u(0) = 0;
        for (int i = 1; i <= n; ++i) u(i) = dofs(c.u_pos(i));
        return u;
    }

    CVector<Real> v_nodes() const {
        CVector<Real> v(n + 1);
        const ChainLayout c{n};
        v(0) = lift;
        for (int i = 1; i <= n; ++i) v(i) = dofs(c.v_pos(i));
        return v;
    }

    StatePair& operator+=(const StatePair& o) { dofs += o.dofs; lift += o.lift; return *this; }
    StatePair& operator*=(Complex<Real> c) { dofs *= c; lift *= c; return *this; }
    friend StatePair operator+(StatePair a, const StatePair& b) { return a += b; }
    friend StatePair operator*(Complex<Real> c, StatePair a) { return a *= c; }
    StatePair conjugate() const { return StatePair(n, dofs.conjugate(), std::conj(lift)); }
};

namespace detail {
template <class Real>
void check_same_grid(const StatePair<Real>& a, const Grid<Real>& g) {
    if (a.n != g.n_cells) throw ValidationError("state and grid disagree on N");
}
}  // namespace detail

// Exact integral of the P1 interpolant, (int |u|^2 + |v|^2)^(1/2).
template <class Real>
Real l2_norm(const StatePair<Real>& s, const Grid<Real>& g) {
    detail::check_same_grid(s, g);
    const CVector<Real> u = s.u_nodes(), v = s.v_nodes();
    Real acc = 0;
    for (int i = 0; i < s.n; ++i) {
        for (const auto* f : {&u, &v}) {
            const auto a = (*f)(i), b = (*f)(i + 1);
            acc += std::norm(a) + std::norm(b) + std::real(a * std::conj(b));
        }
    }
    return std::sqrt(acc * g.dx / Real(3));
}

template <class Real>
Complex<Real> inner_h(const StatePair<Real>& a, const StatePair<Real>& b, const Grid<Real>& g) {
    detail::check_same_grid(a, g);
    detail::check_same_grid(b, g);
    const CVector<Real> ua = a.u_nodes(), va = a.v_nodes(), ub = b.u_nodes(), vb = b.v_nodes();
    Complex<Real> acc = 0;
    for (int i = 0; i < a.n; ++i) {
        acc += (ua(i + 1) - ua(i)) * std::conj(ub(i + 1) - ub(i));
        acc += (va(i + 1) - va(i)) * std::conj(vb(i + 1) - vb(i));
    }
    return acc / g.dx;
}

// Cell-difference quadrature of (int |u'|^2 + |v'|^2)^(1/2).
template <class Real>
Real h_norm(const StatePair<Real>& s, const Grid<Real>& g) {
    return std::sqrt(std::max(Real(0), std::real(inner_h(s, s, g))));
}

template <class Real>
void write_state_csv(const std::string& path, const StatePair<Real>& s, const Grid<Real>& g) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(17) << "x,re_u,im_u,re_v,im_v\n";
    const CVector<Real> u = s.u_nodes(), v = s.v_nodes();
    for (int i = 0; i <= s.n; ++i)
        out << g.x(i) << ',' << u(i).real() << ',' << u(i).imag() << ',' << v(i).real() << ',' << v(i).imag() << '\n';
}

template <class Real>
StatePair<Real> read_state_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    std::getline(in, line);
    std::vector<Complex<Real>> u, v;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Real vals[5];
        for (Real& x : vals) {
            if (!std::getline(ss, cell, ',')) throw ValidationError("malformed state CSV row: " + line);
            x = static_cast<Real>(std::stod(cell));
        }
        u.emplace_back(vals[1], vals[2]);
        v.emplace_back(vals[3], vals[4]);
    }
    CVector<Real> uu = Eigen::Map<CVector<Real>>(u.data(), u.size());
    CVector<Real> vv = Eigen::Map<CVector<Real>>(v.data(), v.size());
    return StatePair<Real>::from_nodes(uu, vv, Real(1e-9));
}

}  // namespace kc
