#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "kc/dynamics.hpp"

namespace kc {

// Polynomial multiplier m(x) = sum_k coef[k] x^k.
template <class Real = double>
struct Multiplier {
    std::vector<Real> coef;

    Real m(Real x) const {
        Real v = 0;
        for (std::size_t k = coef.size(); k-- > 0;) v = v * x + coef[k];
        return v;
    }
    Real dm(Real x) const {
        Real v = 0;
        for (std::size_t k = coef.size(); k-- > 1;) v = v * x + Real(k) * coef[k];
        return v;
    }
    Real d2m(Real x) const {
        Real v = 0;
        for (std::size_t k = coef.size(); k-- > 2;) v = v * x + Real(k * (k - 1)) * coef[k];
        return v;
    }
    // m(1) = 0, m(0) > 0, m'(1) = 1
    bool admissible(Real tol = Real(1e-14)) const {
        return std::abs(m(1)) <= tol && m(0) > 0 && std::abs(dm(1) - 1) <= tol;
    }
};

// m(x) = 2(x-1)^2 + (x-1)
template <class Real = double>
Multiplier<Real> default_multiplier() {
    return {{Real(1), Real(-3), Real(2)}};
}

namespace detail {

// Second-order differences: centered inside, one-sided at both ends.
template <class Real>
std::vector<Complex<Real>> gradient(const std::vector<Complex<Real>>& f, Real h) {
    const std::size_t n = f.size();
    std::vector<Complex<Real>> d(n);
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2 * h);
    d[0] = (Real(-3) * f[0] + Real(4) * f[1] - f[2]) / (2 * h);
    d[n - 1] = (Real(3) * f[n - 1] - Real(4) * f[n - 2] + f[n - 3]) / (2 * h);
    return d;
}

// Composite Simpson; an odd number of intervals closes with the 3/8 rule on the last three.
template <class Real, class T>
T simpson(const std::vector<T>& f, Real h) {
    const std::size_t n = f.size() - 1;
    T acc{};
    std::size_t end = n;
    if (n % 2 == 1) {
        end = n - 3;
        acc += (Real(3) * h / 8) * (f[end] + Real(3) * f[end + 1] + Real(3) * f[end + 2] + f[end + 3]);
    }
    if (end >= 2) {
        T s = f[0] + f[end];
        for (std::size_t i = 1; i < end; ++i) s += (i % 2 ? Real(4) : Real(2)) * f[i];
        acc += s * (h / 3);
    }
    return acc;
}

}  // namespace detail

template <class Real = double>
struct TraceTerm {
    std::string name;
    Complex<Real> value;      // raw integral, summed over the two components
    Real coefficient;         // weight in the identity
    Real printed_coefficient; // weight as displayed in the source statement
    bool imaginary_part;      // the identity uses Im(value) instead of Re(value)

    Real contribution(bool printed) const {
        return (printed ? printed_coefficient : coefficient) * (imaginary_part ? value.imag() : value.real());
    }
};

template <class Real = double>
struct TraceIdentity {
    Real lhs = 0;
    std::vector<TraceTerm<Real>> terms;

    Real rhs(bool printed = false) const {
        Real r = 0;
        for (const auto& t : terms) r += t.contribution(printed);
        return r;
    }
    Real residual(bool printed = false) const {
        const Real r = rhs(printed), s = std::max(std::abs(lhs), std::abs(r));
        return s > 0 ? std::abs(lhs - r) / s : Real(0);
    }
};

// Multiplier identity for an adjoint trajectory (homogeneous Dirichlet at x = 0):
//   1/2 sum nu_j m(0) int |phi_jx(t,0)|^2
//     = 1/2 sum nu_j m(1) int |phi_jx(t,1)|^2 + 1/2 Im int conj(phi(T)) m phi_x(T) - 1/2 Im int conj(phi(0)) m phi_x(0)
//       - 1/2 Im int m(1) phi_t(t,1) conj(phi(t,1)) - sum nu_j Re iint m' |phi_x|^2 - 1/2 sum nu_j Re iint phi_x m'' conj(phi)
//       + 1/2 sum nu_j Re int phi_x(t,1) m'(1) conj(phi(t,1)) - 1/2 sum theta_j int m(1) |phi(t,1)|^2
// obtained from the multiplier m conj(phi_x) + m'/2 conj(phi). The printed coefficients are kept for comparison.
template <class Real>
TraceIdentity<Real> trace_identity_terms(const Trajectory<Real>& traj, const Multiplier<Real>& mult,
                                         const PhysicalParams<Real>& prm) {
    const int M = traj.time.n_steps;
    if (M < 4) throw ValidationError("trace identity needs M >= 4");
    if (traj.controlled()) throw ValidationError("trace identity needs an uncontrolled (adjoint) trajectory");
    const int N = traj.states.front().n;
    const Real dx = Real(1) / N, dt = traj.time.dt;
    std::vector<Real> m(N + 1), dm(N + 1), d2m(N + 1);
    for (int i = 0; i <= N; ++i) {
        const Real x = i * dx;
        m[i] = mult.m(x);
        dm[i] = mult.dm(x);
        d2m[i] = mult.d2m(x);
    }
    const Real nu[2] = {prm.nu1(), prm.nu2()}, th[2] = {prm.theta1(), prm.theta2()};

    Real lhs = 0;
    Complex<Real> g_grad1 = 0, g_pair_t = 0, g_pair_0 = 0, g_time = 0, g_m1 = 0, g_m2 = 0, g_bnd = 0, g_theta = 0;
    for (int j = 0; j < 2; ++j) {
        std::vector<std::vector<Complex<Real>>> phi(M + 1), phix(M + 1);
        for (int n = 0; n <= M; ++n) {
            const CVector<Real> f = j == 0 ? traj.states[n].u_nodes() : traj.states[n].v_nodes();
            phi[n].assign(f.data(), f.data() + f.size());
            phix[n] = detail::gradient(phi[n], dx);
        }
        std::vector<Real> left(M + 1), right(M + 1), theta1(M + 1);
        std::vector<Complex<Real>> bnd(M + 1), right_val(M + 1), inner1(M + 1), inner2(M + 1);
        for (int n = 0; n <= M; ++n) {
            left[n] = std::norm(phix[n][0]);
            right[n] = std::norm(phix[n][N]);
            right_val[n] = phi[n][N];
            bnd[n] = phix[n][N] * dm[N] * std::conj(phi[n][N]);
            theta1[n] = m[N] * std::norm(phi[n][N]);
            std::vector<Complex<Real>> a(N + 1), b(N + 1);
            for (int i = 0; i <= N; ++i) {
                a[i] = phix[n][i] * dm[i] * std::conj(phix[n][i]);
                b[i] = phix[n][i] * d2m[i] * std::conj(phi[n][i]);
            }
            inner1[n] = detail::simpson(a, dx);
            inner2[n] = detail::simpson(b, dx);
        }
        const auto phit = detail::gradient(right_val, dt);
        std::vector<Complex<Real>> tb(M + 1);
        for (int n = 0; n <= M; ++n) tb[n] = m[N] * phit[n] * std::conj(right_val[n]);
        auto pairing = [&](int n) {
            std::vector<Complex<Real>> a(N + 1);
            for (int i = 0; i <= N; ++i) a[i] = std::conj(phi[n][i]) * m[i] * phix[n][i];
            return detail::simpson(a, dx);
        };
        lhs += Real(0.5) * nu[j] * m[0] * detail::simpson(left, dt);
        g_grad1 += nu[j] * m[N] * detail::simpson(right, dt);
        g_pair_t += pairing(M);
        g_pair_0 += pairing(0);
        g_time += detail::simpson(tb, dt);
        g_m1 += nu[j] * detail::simpson(inner1, dt);
        g_m2 += nu[j] * detail::simpson(inner2, dt);
        g_bnd += nu[j] * detail::simpson(bnd, dt);
        g_theta += th[j] * detail::simpson(theta1, dt);
    }
    TraceIdentity<Real> out;
    out.lhs = lhs;
    out.terms = {
        {"gradient_at_1", g_grad1, Real(0.5), Real(0.5), false},
        {"pairing_at_T", g_pair_t, Real(0.5), Real(-0.5), true},
        {"pairing_at_0", g_pair_0, Real(-0.5), Real(0.5), true},
        {"time_derivative_at_1", g_time, Real(-0.5), Real(0.5), true},
        {"interior_dm", g_m1, Real(-1), Real(-0.5), false},
        {"interior_d2m", g_m2, Real(-0.5), Real(-0.5), false},
        {"boundary_dm_at_1", g_bnd, Real(0.5), Real(0.5), false},
        {"potential_at_1", g_theta, Real(-0.5), Real(-0.5), false},
    };
    return out;
}

template <class Real>
Real trace_identity_residual(const Trajectory<Real>& traj, const Multiplier<Real>& m, const PhysicalParams<Real>& prm) {
    return trace_identity_terms(traj, m, prm).residual();
}

template <class Real = double>
struct ConservationReport {
    Real l2_drift = 0;
    Real h_drift = 0;
    Real energy_drift = 0;  // U^H H U, reported when the generator is supplied
};

template <class Real>
ConservationReport<Real> conservation_report(const Trajectory<Real>& traj, const Grid<Real>& g,
                                             const DiscreteGenerator<Real>* gen = nullptr) {
    if (traj.controlled()) throw ValidationError("conservation report needs an uncontrolled trajectory");
    ConservationReport<Real> r;
    if (traj.states.empty()) return r;
    const Real l0 = l2_norm(traj.states.front(), g), h0 = h_norm(traj.states.front(), g);
    const Real e0 = gen ? gen->energy(traj.states.front().dofs) : Real(0);
    for (const auto& s : traj.states) {
        if (l0 > 0) r.l2_drift = std::max(r.l2_drift, std::abs(l2_norm(s, g) - l0) / l0);
        if (h0 > 0) r.h_drift = std::max(r.h_drift, std::abs(h_norm(s, g) - h0) / h0);
        if (gen && e0 > 0) r.energy_drift = std::max(r.energy_drift, std::abs(gen->energy(s.dofs) - e0) / e0);
    }
    return r;
}

template <class Real>
void write_trace_terms_csv(const std::string& path, const TraceIdentity<Real>& id) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(17) << "term_name,value_re,value_im\n";
    out << "lhs," << id.lhs << ",0\n";
    for (const auto& t : id.terms) out << t.name << ',' << t.value.real() << ',' << t.value.imag() << '\n';
    out << "rhs," << id.rhs(false) << ",0\n";
    out << "rhs_printed_coefficients," << id.rhs(true) << ",0\n";
    out << "residual," << id.residual(false) << ",0\n";
    out << "residual_printed_coefficients," << id.residual(true) << ",0\n";
}

}  // namespace kc
