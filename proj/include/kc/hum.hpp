#pragma once

#include <limits>
#include <sstream>
#include <random>
#include <string>
#include <vector>

#include "kc/dynamics.hpp"
#include "kc/modes.hpp"

namespace kc {

// Discrete transposition identity
//   <U(T), zeta>_M - <U0, Phi(0)>_M = factor * sum_n w_n h_n conj(tau_n)   (conjugate_trace = true)
// where tau is the observation trace of the adjoint solution Phi with Phi(T) = zeta.
template <class Real = double>
struct DualityConvention {
    Complex<Real> factor;
    bool conjugate_trace = true;

    Complex<Real> pair(Complex<Real> h, Complex<Real> tau) const { return h * (conjugate_trace ? std::conj(tau) : tau); }
    // The control realizing the Gram form for a given adjoint trace.
    Complex<Real> control(Complex<Real> tau) const {
        return std::conj(factor) * (conjugate_trace ? tau : std::conj(tau));
    }
    std::string describe() const {
        std::ostringstream os;
        os << "<U(T),zeta>_M - <U0,Phi(0)>_M = (" << factor.real() << (factor.imag() < 0 ? "-" : "+")
           << std::abs(factor.imag()) << "i) * sum w h " << (conjugate_trace ? "conj(trace)" : "trace")
           << "; h = conj(factor) * " << (conjugate_trace ? "trace" : "conj(trace)");
        return os.str();
    }
};

template <class Real = double>
struct HumReport {
    int iterations = 0;
    Real cg_residual = 0;
    Real control_l2 = 0;
    Real final_ratio = 0;
    Real observability_rayleigh = std::numeric_limits<Real>::infinity();
    bool converged = false;
    std::vector<Real> residual_history;
    std::vector<Real> functional_history;
};

// Matrix-free observation map and Gramian for a fixed generator and time grid.
// The observation trace is the variational flux recovery at x = 0 that is exactly
// dual to the lifted CN control map: tau_n = -(k_lift/nu2) s_n / w_n, s_n the
// midpoint-rule integral of phi_2(., v-node 1) over the half-intervals around t_n.
template <class Real = double>
class HumOperator {
public:
    HumOperator(const DiscreteGenerator<Real>& gen, const TimeGrid<Real>& tg)
        : gen_(&gen), tg_(tg), fwd_(gen, tg.dt), back_(gen, -tg.dt),
          convention_{Complex<Real>(0, gen.params.nu2()), true} {
        weights_.assign(tg.n_steps + 1, tg.dt);
        weights_.front() = weights_.back() = tg.dt / 2;
    }

    const DiscreteGenerator<Real>& generator() const { return *gen_; }
    const TimeGrid<Real>& time() const { return tg_; }
    const std::vector<Real>& weights() const { return weights_; }
    const DualityConvention<Real>& convention() const { return convention_; }
    void set_convention(const DualityConvention<Real>& c) { convention_ = c; }

    // Backward adjoint solve from zeta; returns Phi(0) and the v-node-1 series.
    CVector<Real> adjoint(const CVector<Real>& zeta, std::vector<Complex<Real>>& v1) const {
        const int M = tg_.n_steps, p = gen_->layout().v_first();
        v1.assign(M + 1, Complex<Real>(0));
        CVector<Real> phi = zeta;
        v1[M] = phi(p);
        for (int n = M; n > 0; --n) {
            phi = back_.step(phi);
            v1[n - 1] = phi(p);
        }
        return phi;
    }

    std::vector<Complex<Real>> cotrace(const std::vector<Complex<Real>>& v1) const {
        const int M = tg_.n_steps;
        std::vector<Complex<Real>> s(M + 1, Complex<Real>(0));
        for (int n = 0; n < M; ++n) {
            const Complex<Real> mid = (v1[n] + v1[n + 1]) * (tg_.dt / 4);
            s[n] += mid;
            s[n + 1] += mid;
        }
        const Real c = -gen_->k_lift / gen_->params.nu2();
        for (int n = 0; n <= M; ++n) s[n] *= c / weights_[n];
        return s;
    }

    std::vector<Complex<Real>> observe(const CVector<Real>& zeta, CVector<Real>* phi0 = nullptr) const {
        std::vector<Complex<Real>> v1;
        CVector<Real> p0 = adjoint(zeta, v1);
        if (phi0) *phi0 = std::move(p0);
        return cotrace(v1);
    }

    std::vector<Complex<Real>> control_from_trace(const std::vector<Complex<Real>>& tau) const {
        std::vector<Complex<Real>> h(tau.size());
        for (std::size_t n = 0; n < tau.size(); ++n) h[n] = convention_.control(tau[n]);
        return h;
    }

    CVector<Real> forward_final(const CVector<Real>& u0, const std::vector<Complex<Real>>& h) const {
        if (static_cast<int>(h.size()) != tg_.n_steps + 1) throw ValidationError("control series must have M+1 values");
        CVector<Real> u = u0;
        for (int n = 0; n < tg_.n_steps; ++n) u = fwd_.step(u, h[n], h[n + 1]);
        return u;
    }

    CVector<Real> free_final(const CVector<Real>& u0) const {
        CVector<Real> u = u0;
        for (int n = 0; n < tg_.n_steps; ++n) u = fwd_.step(u);
        return u;
    }

    CVector<Real> gramian_apply(const CVector<Real>& zeta) const {
        return forward_final(CVector<Real>::Zero(zeta.size()), control_from_trace(observe(zeta)));
    }

    Real series_l2_sq(const std::vector<Complex<Real>>& f) const {
        Real acc = 0;
        for (std::size_t n = 0; n < f.size(); ++n) acc += weights_[n] * std::norm(f[n]);
        return acc;
    }

    Complex<Real> boundary_pairing(const std::vector<Complex<Real>>& h, const std::vector<Complex<Real>>& tau) const {
        Complex<Real> acc = 0;
        for (std::size_t n = 0; n < h.size(); ++n) acc += weights_[n] * convention_.pair(h[n], tau[n]);
        return convention_.factor * acc;
    }

    // int |O(zeta)|^2 / ||Phi(0)||_H^2 with O = tau.
    Real rayleigh(const CVector<Real>& zeta) const {
        CVector<Real> phi0;
        const auto tau = observe(zeta, &phi0);
        const Real hn = h_norm(StatePair<Real>(gen_->grid.n_cells, phi0), gen_->grid);
        return series_l2_sq(tau) / (hn * hn);
    }

private:
    const DiscreteGenerator<Real>* gen_;
    TimeGrid<Real> tg_;
    Propagator<Real> fwd_, back_;
    DualityConvention<Real> convention_;
    std::vector<Real> weights_;
};

template <class Real>
std::vector<Complex<Real>> observation_map(const HumOperator<Real>& op, const StatePair<Real>& zeta) {
    return op.observe(zeta.dofs);
}

template <class Real>
StatePair<Real> gramian_apply(const HumOperator<Real>& op, const StatePair<Real>& zeta) {
    return StatePair<Real>(zeta.n, op.gramian_apply(zeta.dofs));
}

template <class Real = double>
struct DualityCheck {
    Real residual;
    Complex<Real> lhs;  // <U(T), zeta> - <U0, Phi(0)>
    Complex<Real> rhs;  // boundary term
};

// Relative mismatch of the discrete transposition identity for control h, adjoint data zeta and
// initial state u0 (zero by default). Normalized by the largest of the three pairings.
template <class Real>
DualityCheck<Real> duality_check(const HumOperator<Real>& op, const std::vector<Complex<Real>>& h,
                                 const StatePair<Real>& zeta, const CVector<Real>& u0) {
    const auto& gen = op.generator();
    CVector<Real> phi0;
    const auto tau = op.observe(zeta.dofs, &phi0);
    const CVector<Real> uT = op.forward_final(u0, h);
    const Complex<Real> end = gen.mass_inner(uT, zeta.dofs), start = gen.mass_inner(u0, phi0);
    const Complex<Real> rhs = op.boundary_pairing(h, tau);
    const Real scale = std::max({std::abs(end), std::abs(start), std::abs(rhs), std::numeric_limits<Real>::min()});
    return {std::abs(end - start - rhs) / scale, end - start, rhs};
}

template <class Real>
Real duality_residual(const HumOperator<Real>& op, const std::vector<Complex<Real>>& h, const StatePair<Real>& zeta) {
    const CVector<Real> u0 = CVector<Real>::Zero(zeta.dofs.size());
    return duality_check(op, h, zeta, u0).residual;
}

// Same identity with the boundary term built from the one-sided FD trace d_x phi_2(t,0) and the
// trapezoid rule; measures consistency with the continuous identity, so it decays with (dx, dt).
template <class Real>
Real duality_residual_fd(const HumOperator<Real>& op, const std::vector<Complex<Real>>& h, const StatePair<Real>& zeta,
                         const CVector<Real>& u0) {
    const auto& gen = op.generator();
    const Trajectory<Real> adj = solve_adjoint(gen, zeta, op.time());
    const CVector<Real> uT = op.forward_final(u0, h);
    const Complex<Real> end = gen.mass_inner(uT, zeta.dofs), start = gen.mass_inner(u0, adj.states.front().dofs);
    const auto& w = op.weights();
    Complex<Real> acc = 0;
    for (std::size_t n = 0; n < h.size(); ++n) acc += w[n] * op.convention().pair(h[n], adj.left_trace_v[n]);
    const Complex<Real> rhs = op.convention().factor * acc;
    const Real scale = std::max({std::abs(end), std::abs(start), std::abs(rhs), std::numeric_limits<Real>::min()});
    return std::abs(end - start - rhs) / scale;
}

template <class Real>
std::vector<DualityConvention<Real>> candidate_conventions(const PhysicalParams<Real>& p) {
    const Real nu = p.nu2();
    std::vector<DualityConvention<Real>> out;
    for (bool conj : {true, false})
        for (Complex<Real> f : {Complex<Real>(0, nu), Complex<Real>(0, -nu), Complex<Real>(nu, 0), Complex<Real>(-nu, 0)})
            out.push_back({f, conj});
    return out;
}

// Picks the convention whose duality residual on random (h, zeta) is smallest; requires <= tol.
template <class Real>
DualityConvention<Real> calibrate_convention(HumOperator<Real>& op, std::mt19937_64& rng, Real tol = Real(1e-6),
                                             int samples = 3) {
    const auto& gen = op.generator();
    std::vector<std::vector<Complex<Real>>> hs;
    std::vector<StatePair<Real>> zs;
    for (int k = 0; k < samples; ++k) {
        hs.push_back(random_coefficients<Real>(rng, op.time().n_steps + 1));
        zs.emplace_back(gen.grid.n_cells, random_dofs<Real>(gen.dofs(), rng));
    }
    Real best = std::numeric_limits<Real>::infinity();
    DualityConvention<Real> chosen = op.convention();
    for (const auto& c : candidate_conventions(gen.params)) {
        op.set_convention(c);
        Real worst = 0;
        for (int k = 0; k < samples; ++k) worst = std::max(worst, duality_residual(op, hs[k], zs[k]));
        if (worst < best) { best = worst; chosen = c; }
    }
    op.set_convention(chosen);
    if (!(best <= tol)) throw NumericalGuard("duality calibration failed: best residual " + std::to_string(static_cast<double>(best)));
    return chosen;
}

template <class Real>
Real verify_null_control(const HumOperator<Real>& op, const StatePair<Real>& u0v0, const std::vector<Complex<Real>>& h) {
    const auto& gen = op.generator();
    const Real n0 = gen.mass_norm(u0v0.dofs);
    if (!(n0 > Real(0))) throw ValidationError("verify_null_control needs nonzero initial data");
    return gen.mass_norm(op.forward_final(u0v0.dofs, h)) / n0;
}

template <class Real = double>
struct HumResult {
    std::vector<Complex<Real>> control;
    HumReport<Real> report;
    CVector<Real> zeta;
};

// Conjugate gradient on Lambda zeta = -S(T) U0 in the discrete L2 (mass) inner product.
// Returns the iterate with the smallest residual.
template <class Real>
HumResult<Real> hum_control(const HumOperator<Real>& op, const StatePair<Real>& u0v0, Real tol = Real(1e-8),
                            int max_iter = 500) {
    const auto& gen = op.generator();
    const int D = gen.dofs();
    HumResult<Real> res{std::vector<Complex<Real>>(op.time().n_steps + 1, Complex<Real>(0)), {}, CVector<Real>::Zero(D)};
    const Real n0 = gen.mass_norm(u0v0.dofs);
    if (!(n0 > Real(0))) return res;

    const CVector<Real> b = -op.free_final(u0v0.dofs);
    const Real bnorm = gen.mass_norm(b);
    CVector<Real> zeta = CVector<Real>::Zero(D), r = b, p = r, best = zeta;
    Real rr = std::real(gen.mass_inner(r, r)), best_res = Real(1);
    auto& rep = res.report;
    rep.residual_history.push_back(Real(1));
    rep.functional_history.push_back(Real(0));
    int it = 0;
    while (it < max_iter && best_res > tol) {
        CVector<Real> phi0;
        const auto tau = op.observe(p, &phi0);
        const CVector<Real> q = op.forward_final(CVector<Real>::Zero(D), op.control_from_trace(tau));
        const Real hp = h_norm(StatePair<Real>(gen.grid.n_cells, phi0), gen.grid);
        if (hp > Real(0)) rep.observability_rayleigh = std::min(rep.observability_rayleigh, op.series_l2_sq(tau) / (hp * hp));
        const Real pq = std::real(gen.mass_inner(q, p));
        if (!(pq > Real(0))) break;
        const Real a = rr / pq;
        zeta += a * p;
        r -= a * q;
        ++it;
        const Real rn = std::real(gen.mass_inner(r, r));
        const Real rel = std::sqrt(std::max(rn, Real(0))) / bnorm;
        rep.residual_history.push_back(rel);
        rep.functional_history.push_back(
            -std::real(gen.mass_inner(b, zeta)) / 2 - std::real(gen.mass_inner(r, zeta)) / 2);
        if (rel < best_res) { best_res = rel; best = zeta; }
        p = r + (rn / rr) * p;
        rr = rn;
    }
    rep.iterations = it;
    rep.cg_residual = best_res;
    rep.converged = best_res <= tol;
    res.zeta = best;
    res.control = op.control_from_trace(op.observe(best));
    rep.control_l2 = std::sqrt(op.series_l2_sq(res.control));
    rep.final_ratio = verify_null_control(op, u0v0, res.control);
    return res;
}

template <class Real>
void write_control_csv(const std::string& path, const std::vector<Complex<Real>>& h, const TimeGrid<Real>& tg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(17) << "t,re_h,im_h\n";
    for (std::size_t n = 0; n < h.size(); ++n)
        out << tg.t(static_cast<int>(n)) << ',' << h[n].real() << ',' << h[n].imag() << '\n';
}

}  // namespace kc
