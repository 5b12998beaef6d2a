#pragma once

#include <map>
#include <random>
#include <vector>

#include "kc/modes.hpp"
#include "kc/parallel.hpp"
#include "kc/quadrature.hpp"

namespace kc {

template <class Real = double>
struct CarlemanConfig {
    Real lambda = 2;
    Real s = 1;
    Real c1 = 1;
    Real c2 = -4;
    Real T = 1;
    Real delta = Real(1) / 50;  // time clamp, [delta, T - delta]
    Real lambda0 = 0;
    Real mu0 = 0;

    static CarlemanConfig from(const PhysicalParams<Real>& p, Real T, Real lambda, Real s) {
        const auto rep = validate_sigma(p);
        CarlemanConfig c;
        c.lambda = lambda;
        c.s = s;
        c.c1 = rep.c1;
        c.c2 = rep.c2;
        c.T = T;
        c.delta = T / 50;
        c.validate();
        return c;
    }

    void validate() const {
        if (!(lambda > Real(1))) throw ValidationError("lambda must be > 1");
        if (!(s > Real(0))) throw ValidationError("s must be positive");
        if (!(T > Real(0))) throw ValidationError("T must be positive");
        if (!(delta > Real(0) && 2 * delta < T)) throw ValidationError("delta must lie in (0, T/2)");
        if (2 * lambda * beta_max() > Real(600)) throw ValidationError("lambda too large: e^{2 lambda |beta|} overflows");
    }

    Real c(int j) const { return j == 1 ? c1 : c2; }
    Real beta(int j, Real x) const { return Real(2) + c(j) * (x - Real(1)); }
    // common sup-norm of beta_1, beta_2 on [0, 1]
    Real beta_max() const {
        return std::max({beta(1, 0), beta(1, 1), beta(2, 0), beta(2, 1)});
    }
    Real s0() const { return mu0 * (T + T * T); }
    bool s_above_threshold() const { return mu0 > 0 && s >= s0(); }
};

// Closed-form weights at one point; t must lie strictly inside (0, T).
template <class Real = double>
struct WeightPoint {
    Real beta, xi, eta;
    Real xi_x, eta_x, eta_xx, eta_xxx;
    Real xi_t, eta_t, eta_xt, eta_tt;
};

template <class Real>
WeightPoint<Real> weight_at(const CarlemanConfig<Real>& cfg, int j, Real t, Real x) {
    if (!(t > Real(0) && t < cfg.T)) throw ValidationError("weights are singular at t = 0 and t = T");
    const Real T = cfg.T, lam = cfg.lambda, cj = cfg.c(j);
    const Real q = t * (T - t);
    const Real g = Real(1) / q, gt = -(T - 2 * t) * g * g, gtt = 2 * g * g * g * (q + (T - 2 * t) * (T - 2 * t));
    const Real b = cfg.beta(j, x), eb = std::exp(lam * b), big = std::exp(2 * lam * cfg.beta_max());
    WeightPoint<Real> w;
    w.beta = b;
    w.xi = eb * g;
    w.eta = (big - eb) * g;
    w.xi_x = lam * cj * eb * g;
    w.eta_x = -lam * cj * eb * g;
    w.eta_xx = -lam * lam * cj * cj * eb * g;
    w.eta_xxx = -lam * lam * lam * cj * cj * cj * eb * g;
    w.xi_t = eb * gt;
    w.eta_t = (big - eb) * gt;
    w.eta_xt = -lam * cj * eb * gt;
    w.eta_tt = (big - eb) * gtt;
    return w;
}

template <class Real = double>
struct WeightEval {
    std::vector<Real> t, x;
    // index [j-1](ti, xi)
    std::array<RMatrix<Real>, 2> beta, xi, eta, xi_x, eta_x, eta_xx, eta_xxx, xi_t, eta_t, eta_xt, eta_tt;
};

// Tabulates the weights on the grid nodes and the time-grid points inside [delta, T - delta].
template <class Real>
WeightEval<Real> eval_weights(const CarlemanConfig<Real>& cfg, const Grid<Real>& g, const TimeGrid<Real>& tg) {
    cfg.validate();
    WeightEval<Real> w;
    for (int n = 0; n <= tg.n_steps; ++n) {
        const Real t = tg.t(n);
        if (t >= cfg.delta - Real(1e-14) && t <= cfg.T - cfg.delta + Real(1e-14)) w.t.push_back(t);
    }
    for (int i = 0; i <= g.n_cells; ++i) w.x.push_back(g.x(i));
    const int nt = static_cast<int>(w.t.size()), nx = static_cast<int>(w.x.size());
    for (int j = 0; j < 2; ++j) {
        for (auto* m : {&w.beta, &w.xi, &w.eta, &w.xi_x, &w.eta_x, &w.eta_xx, &w.eta_xxx, &w.xi_t, &w.eta_t, &w.eta_xt,
                        &w.eta_tt})
            (*m)[j].resize(nt, nx);
        for (int a = 0; a < nt; ++a)
            for (int b = 0; b < nx; ++b) {
                const auto p = weight_at(cfg, j + 1, w.t[a], w.x[b]);
                w.beta[j](a, b) = p.beta;
                w.xi[j](a, b) = p.xi;
                w.eta[j](a, b) = p.eta;
                w.xi_x[j](a, b) = p.xi_x;
                w.eta_x[j](a, b) = p.eta_x;
                w.eta_xx[j](a, b) = p.eta_xx;
                w.eta_xxx[j](a, b) = p.eta_xxx;
                w.xi_t[j](a, b) = p.xi_t;
                w.eta_t[j](a, b) = p.eta_t;
                w.eta_xt[j](a, b) = p.eta_xt;
                w.eta_tt[j](a, b) = p.eta_tt;
            }
    }
    return w;
}

// sum_k a_k sin(w_k x) + p1 x + p2 x^2 + p3 x^3
template <class Real = double>
struct SpatialProfile {
    std::vector<Complex<Real>> sin_coef;
    std::vector<Real> sin_freq;
    Complex<Real> p1{}, p2{}, p3{};

    Complex<Real> value(Real x) const {
        Complex<Real> v = p1 * x + p2 * x * x + p3 * x * x * x;
        for (std::size_t k = 0; k < sin_coef.size(); ++k) v += sin_coef[k] * std::sin(sin_freq[k] * x);
        return v;
    }
    Complex<Real> d1(Real x) const {
        Complex<Real> v = p1 + Real(2) * p2 * x + Real(3) * p3 * x * x;
        for (std::size_t k = 0; k < sin_coef.size(); ++k) v += sin_coef[k] * sin_freq[k] * std::cos(sin_freq[k] * x);
        return v;
    }
    Complex<Real> d2(Real x) const {
        Complex<Real> v = Real(2) * p2 + Real(6) * p3 * x;
        for (std::size_t k = 0; k < sin_coef.size(); ++k)
            v -= sin_coef[k] * sin_freq[k] * sin_freq[k] * std::sin(sin_freq[k] * x);
        return v;
    }
    SpatialProfile conjugate() const {
        SpatialProfile o = *this;
        for (auto& a : o.sin_coef) a = std::conj(a);
        o.p1 = std::conj(p1);
        o.p2 = std::conj(p2);
        o.p3 = std::conj(p3);
        return o;
    }
    SpatialProfile& operator*=(Complex<Real> c) {
        for (auto& a : sin_coef) a *= c;
        p1 *= c;
        p2 *= c;
        p3 *= c;
        return *this;
    }
};

// c e^{z t}, optionally times sin(pi t / T)
template <class Real = double>
struct TimeFactor {
    Complex<Real> c{1, 0};
    Complex<Real> z{0, 0};
    bool window = true;
    Real T = 1;

    Complex<Real> value(Real t) const {
        const Complex<Real> e = c * std::exp(z * t);
        return window ? e * std::sin(Real(M_PI) * t / T) : e;
    }
    Complex<Real> d1(Real t) const {
        const Complex<Real> e = c * std::exp(z * t);
        if (!window) return z * e;
        const Real w = Real(M_PI) / T;
        return e * (z * std::sin(w * t) + w * std::cos(w * t));
    }
    // conj(theta(T - t)) in the same family
    TimeFactor reversed_conjugate() const {
        TimeFactor o = *this;
        o.c = std::conj(c) * std::exp(std::conj(z) * T);
        o.z = -std::conj(z);
        return o;
    }
};

// phi_j(t, x) = theta(t) X_j(x)
template <class Real = double>
struct TestPair {
    TimeFactor<Real> theta;
    SpatialProfile<Real> X1, X2;

    const SpatialProfile<Real>& X(int j) const { return j == 1 ? X1 : X2; }
    Complex<Real> phi(int j, Real t, Real x) const { return theta.value(t) * X(j).value(x); }
    Complex<Real> phi_x(int j, Real t, Real x) const { return theta.value(t) * X(j).d1(x); }
    // L_j phi_j = i phi_t + nu_j phi_xx
    Complex<Real> L(int j, Real nu, Real t, Real x) const {
        return Complex<Real>(0, 1) * theta.d1(t) * X(j).value(x) + nu * theta.value(t) * X(j).d2(x);
    }
    TestPair reversed_conjugate() const { return {theta.reversed_conjugate(), X1.conjugate(), X2.conjugate()}; }
    TestPair& operator*=(Complex<Real> c) { X1 *= c; X2 *= c; return *this; }
};

// Boundary residuals: |phi_1(0)|, |phi_2(0)|, |phi_1(1) - phi_2(1)|, |flux|, relative to the profile scale.
template <class Real>
Real boundary_residual(const TestPair<Real>& p, const PhysicalParams<Real>& prm) {
    const auto& a = p.X1;
    const auto& b = p.X2;
    Real scale = std::max({std::abs(a.d1(0)), std::abs(b.d1(0)), std::abs(a.value(1)), std::abs(a.d1(1)), std::abs(b.d1(1)),
                           std::numeric_limits<Real>::min()});
    const Real r = std::max({std::abs(a.value(0)), std::abs(b.value(0)), std::abs(a.value(1) - b.value(1)),
                             std::abs(prm.gamma1 * a.d1(1) + prm.nu2() * b.d1(1) + prm.alpha * a.value(1))});
    return r / scale;
}

// Random pair in Q: X2 = sum_k a_k [sin(k pi x) + b_k x^2], X1 = c1 x + c2 x^2 + c3 x^3 with c1 random
// and (c2, c3) fixed by continuity and the flux condition at x = 1.
template <class Real>
TestPair<Real> sample_Q_function(std::uint64_t seed, const PhysicalParams<Real>& prm, Real T, int terms = 3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    auto cn = [&] { const double re = nd(rng), im = nd(rng); return Complex<Real>(Real(re), Real(im)); };
    TestPair<Real> p;
    p.theta.T = T;
    p.theta.window = true;
    {
        const double re = 0.5 * ud(rng), im = 3.0 * ud(rng);
        p.theta.z = Complex<Real>(Real(re), Real(im));
    }
    Complex<Real> quad = 0;
    for (int k = 1; k <= terms; ++k) {
        const Complex<Real> a = cn(), b = cn();
        p.X2.sin_coef.push_back(a);
        p.X2.sin_freq.push_back(Real(k) * Real(M_PI));
        quad += a * b;
    }
    p.X2.p2 = quad;
    const Complex<Real> v1 = p.X2.value(1), dv1 = p.X2.d1(1);
    const Complex<Real> c1 = cn();
    // c2 + c3 = v1 - c1 ; gamma1 (c1 + 2 c2 + 3 c3) + nu2 dv1 + alpha v1 = 0
    const Real g1 = prm.gamma1;
    const Complex<Real> rhs = -prm.nu2() * dv1 - prm.alpha * v1 - g1 * c1;
    const Complex<Real> c3 = (rhs - Real(2) * g1 * (v1 - c1)) / g1;
    const Complex<Real> c2 = v1 - c1 - c3;
    p.X1.p1 = c1;
    p.X1.p2 = c2;
    p.X1.p3 = c3;
    return p;
}

// e^{-i lam t} (u, v) for an exact mode of the potential-free operators; L1 phi1 = L2 phi2 = 0.
template <class Real>
TestPair<Real> kernel_pair(const PhysicalParams<Real>& prm, Real T, int index = 0) {
    const auto modes = exact_modes(ModeCoefficients<Real>::potential_free(prm), index + 1);
    const auto& m = modes[static_cast<std::size_t>(index)];
    if (!(m.p1.ksq > 0 && m.p2.ksq > 0)) throw NumericalGuard("kernel mode is not oscillatory");
    TestPair<Real> p;
    p.theta = {Complex<Real>(1, 0), Complex<Real>(0, -m.lambda), false, T};
    p.X1.sin_coef = {Complex<Real>(m.a)};
    p.X1.sin_freq = {std::sqrt(m.p1.ksq)};
    p.X2.sin_coef = {Complex<Real>(m.b)};
    p.X2.sin_freq = {std::sqrt(m.p2.ksq)};
    return p;
}

template <class Real = double>
struct CarlemanSides {
    Real lhs_zero_order = 0;   // s^3 lambda^4 sum int e^{-2 s eta} xi^3 |phi|^2
    Real lhs_gradient = 0;     // s lambda^2 sum int e^{-2 s eta} xi |phi_x|^2
    Real rhs_interior = 0;     // sum int e^{-2 s eta} |L phi|^2
    Real rhs_observation = 0;  // s lambda int e^{-2 s eta_2(t,0)} xi_2(t,0) |phi_2x(t,0)|^2
    Real log_scale = 0;        // every value above is multiplied by e^{-log_scale}

    Real lhs() const { return lhs_zero_order + lhs_gradient; }
    Real rhs() const { return rhs_interior + rhs_observation; }
    Real ratio() const { return rhs() > 0 ? lhs() / rhs() : std::numeric_limits<Real>::quiet_NaN(); }
};

template <class Real = double>
struct CarlemanQuadrature {
    Real rel_tol = Real(1e-9);
    int max_panels = 3000;
};

// Both sides of the Carleman estimate, with s in the polynomial prefactors and s_exp in the
// exponential weights (s_exp = s is the estimate itself). The common factor e^{-2 s_exp min eta}
// is divided out analytically: eta_j - min eta is evaluated without cancellation.
template <class Real>
CarlemanSides<Real> carleman_sides(const TestPair<Real>& pair, const CarlemanConfig<Real>& cfg,
                                   const PhysicalParams<Real>& prm, Real s_exp = Real(-1),
                                   const CarlemanQuadrature<Real>& q = {}) {
    cfg.validate();
    if (s_exp <= 0) s_exp = cfg.s;
    const Real T = cfg.T, lam = cfg.lambda, s = cfg.s, B = cfg.beta_max();
    const Real g0 = Real(4) / (T * T), eB = std::exp(lam * B), e2B = std::exp(2 * lam * B);
    const Real nu[2] = {prm.nu1(), prm.nu2()};

    // log of e^{-2 s_exp (eta_j - eta_min)} xi_j^p
    auto log_weight = [&](int j, Real t, Real x, int p) {
        const Real q2 = t * (T - t);
        const Real dg = (T - 2 * t) * (T - 2 * t) / (T * T * q2);
        const Real lb = lam * cfg.beta(j, x);
        const Real gap = dg * (e2B - std::exp(lb)) - g0 * eB * std::expm1(lb - lam * B);
        return -2 * s_exp * gap + p * (lb - std::log(q2));
    };

    GaussKronrod<Real, 3> inner;
    inner.rel_tol = q.rel_tol;
    inner.max_panels = q.max_panels;
    GaussKronrod<Real, 3> outer = inner;
    const Real a = cfg.delta, b = T - cfg.delta;
    const std::vector<Real> xb = graded_breaks<Real>(0, 1, {Real(0), Real(1)});
    const std::vector<Real> tb = graded_breaks<Real>(a, b, {T / 2});

    const Real c0 = s * s * s * lam * lam * lam * lam, c1 = s * lam * lam;
    auto over_x = [&](Real t) {
        const Complex<Real> th = pair.theta.value(t);
        if (th == Complex<Real>(0)) return std::array<Real, 3>{0, 0, 0};
        return inner.integrate(
            [&](Real x) {
                std::array<Real, 3> v{0, 0, 0};
                for (int j = 1; j <= 2; ++j) {
                    const Real w0 = std::exp(log_weight(j, t, x, 0));
                    if (w0 == Real(0)) continue;
                    const Real w1 = std::exp(log_weight(j, t, x, 1)), w3 = std::exp(log_weight(j, t, x, 3));
                    v[0] += c0 * w3 * std::norm(pair.phi(j, t, x));
                    v[1] += c1 * w1 * std::norm(pair.phi_x(j, t, x));
                    v[2] += w0 * std::norm(pair.L(j, nu[j - 1], t, x));
                }
                return v;
            },
            xb);
    };
    const auto inside = outer.integrate(over_x, tb);

    GaussKronrod<Real, 1> obs;
    obs.rel_tol = q.rel_tol;
    obs.max_panels = q.max_panels;
    const auto ob = obs.integrate(
        [&](Real t) {
            return std::array<Real, 1>{s * lam * std::exp(log_weight(2, t, 0, 1)) * std::norm(pair.phi_x(2, t, 0))};
        },
        tb);

    CarlemanSides<Real> out;
    out.lhs_zero_order = inside[0];
    out.lhs_gradient = inside[1];
    out.rhs_interior = inside[2];
    out.rhs_observation = ob[0];
    out.log_scale = 2 * s_exp * g0 * (e2B - eB);
    return out;
}

template <class Real>
Real carleman_lhs(const TestPair<Real>& p, const CarlemanConfig<Real>& cfg, const PhysicalParams<Real>& prm) {
    return carleman_sides(p, cfg, prm).lhs();
}

template <class Real>
Real carleman_rhs(const TestPair<Real>& p, const CarlemanConfig<Real>& cfg, const PhysicalParams<Real>& prm) {
    return carleman_sides(p, cfg, prm).rhs();
}

template <class Real = double>
struct SweepRow {
    Real lambda, s;
    std::uint64_t seed;
    Real lhs, rhs, ratio;
    bool admissible;
    Real log_scale;
};

template <class Real = double>
struct SweepReport {
    std::vector<SweepRow<Real>> rows;
    std::map<std::pair<Real, Real>, Real> max_ratio;  // (lambda, s) -> max over seeds
    std::vector<std::pair<Real, Real>> non_monotone;  // (lambda, s) where max ratio grew from the previous s
    Real lambda0 = 0, mu0 = 0, s0 = 0, c_emp = 0;
    bool thresholds_found = false;
    bool admissible = true;
    std::vector<std::string> warnings;
};

template <class Real>
SweepReport<Real> carleman_sweep(const PhysicalParams<Real>& prm, Real T, const std::vector<Real>& lambdas,
                                 std::vector<Real> s_values, const std::vector<std::uint64_t>& seeds,
                                 const CarlemanQuadrature<Real>& q = {}, Real delta = 0) {
    const auto rep = validate_sigma(prm);
    std::sort(s_values.begin(), s_values.end());
    SweepReport<Real> out;
    out.admissible = rep.admissible;
    if (!rep.admissible)
        out.warnings.push_back("kappa = " + std::to_string(static_cast<double>(rep.kappa)) +
                               " <= 3: Carleman hypotheses violated (contrast run)");
    std::vector<TestPair<Real>> pairs;
    for (auto sd : seeds) pairs.push_back(sample_Q_function(sd, prm, T));

    struct Cell { std::size_t l, s, k; };
    std::vector<Cell> cells;
    for (std::size_t l = 0; l < lambdas.size(); ++l)
        for (std::size_t si = 0; si < s_values.size(); ++si)
            for (std::size_t k = 0; k < seeds.size(); ++k) cells.push_back({l, si, k});
    std::vector<SweepRow<Real>> rows(cells.size());
    parallel_for(static_cast<int>(cells.size()), [&](int i) {
        const Cell c = cells[static_cast<std::size_t>(i)];
        auto cfg = CarlemanConfig<Real>::from(prm, T, lambdas[c.l], s_values[c.s]);
        if (delta > 0) {
            cfg.delta = delta;
            cfg.validate();
        }
        const auto sides = carleman_sides(pairs[c.k], cfg, prm, Real(-1), q);
        rows[static_cast<std::size_t>(i)] = {lambdas[c.l], s_values[c.s], seeds[c.k], sides.lhs(), sides.rhs(),
                                             sides.ratio(), rep.admissible, sides.log_scale};
    });
    for (const auto& r : rows) {
        if (!(r.lhs > 0) && !(r.rhs > 0)) continue;  // zero test pair
        out.rows.push_back(r);
        auto& m = out.max_ratio[{r.lambda, r.s}];
        m = std::max(m, r.ratio);
    }
    // lambda0: smallest lambda whose max ratio is non-increasing in s from some sweep value on;
    // mu0 = that s / (T + T^2).
    for (Real lam : lambdas) {
        std::size_t first = s_values.size();
        for (std::size_t i = s_values.size(); i-- > 0;) {
            if (i + 1 < s_values.size() && out.max_ratio[{lam, s_values[i + 1]}] > out.max_ratio[{lam, s_values[i]}]) break;
            first = i;
        }
        for (std::size_t i = 1; i < s_values.size(); ++i)
            if (out.max_ratio[{lam, s_values[i]}] > out.max_ratio[{lam, s_values[i - 1]}])
                out.non_monotone.push_back({lam, s_values[i]});
        if (!out.thresholds_found && first + 1 < s_values.size()) {
            out.thresholds_found = true;
            out.lambda0 = lam;
            out.s0 = s_values[first];
            out.mu0 = out.s0 / (T + T * T);
        }
    }
    if (out.thresholds_found)
        for (const auto& [key, m] : out.max_ratio)
            if (key.first >= out.lambda0 && key.second >= out.s0) out.c_emp = std::max(out.c_emp, m);
    return out;
}

template <class Real>
void write_sweep_csv(const std::string& path, const SweepReport<Real>& rep) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(17) << "lambda,s,seed,lhs,rhs,ratio,admissible_flag,log_scale\n";
    for (const auto& r : rep.rows)
        out << r.lambda << ',' << r.s << ',' << r.seed << ',' << r.lhs << ',' << r.rhs << ',' << r.ratio << ','
            << (r.admissible ? 1 : 0) << ',' << r.log_scale << '\n';
}

}  // namespace kc
