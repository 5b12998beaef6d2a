#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "kc/dynamics.hpp"
#include "kc/modes.hpp"

namespace kc {

enum class Pairing { L2, H };

inline std::string to_string(Pairing p) { return p == Pairing::L2 ? "L2" : "H"; }

template <class Real = double>
struct StabOptions {
    Real omega = Real(0.5);
    Real dt = Real(1e-3);
    Real t_obs = Real(1);
    Real tail_tol = Real(1e-8);       // e^{-2 omega T_inf} target
    Real tail_check_tol = Real(1e-6); // relative truncated-tail bound that is accepted
    Real filter_tol = Real(1e-3);     // relative v-node-1 weight of kept modes
    Pairing pairing = Pairing::L2;
};

// H-seminorm Gram matrix on the chain dofs (unit coefficients on both branches).
template <class Real>
SymTridiag<Real> h_gram(const Grid<Real>& g) {
    const int n = g.n_cells;
    const ChainLayout c{n};
    SymTridiag<Real> k(g.dofs());
    const Real w = Real(1) / g.dx;
    for (auto pos : {0, 1}) {
        for (int i = 0; i < n; ++i) {
            const int b = pos ? c.v_pos(i + 1) : c.u_pos(i + 1);
            if (i == 0) { k.d(b) += w; continue; }
            const int a = pos ? c.v_pos(i) : c.u_pos(i);
            k.add_pair(a, b, w, -w, w);
        }
    }
    return k;
}

// Discrete exponentially weighted Gramian of the CN loop U+ = R U + Gamma h:
//   Lambda = sum_{n<Ms} dt e^{-2 omega n dt} b(n)^H b(n),  b_k(n) = ell(R^{n+1} e_k),
// ell(y) = Gamma^H M y / dt the M-adjoint of the one-step control map (approximately -i nu2 d_x y_2(0)).
template <class Real = double>
class StabGramian {
public:
    StabGramian(const DiscreteGenerator<Real>& gen, const StabOptions<Real>& opt)
        : gen_(&gen), opt_(opt), prop_(gen, opt.dt), modal_(gen) {
        if (!(opt.omega > Real(0))) throw ValidationError("omega must be positive");
        const int D = gen.dofs();
        const Real t_inf = std::max(opt.t_obs, -std::log(opt.tail_tol) / (2 * opt.omega));
        steps_ = static_cast<int>(std::ceil(t_inf / opt.dt - Real(1e-9)));
        horizon_ = steps_ * opt.dt;

        CVector<Real> e = CVector<Real>::Zero(D);
        e(gen.layout().v_first()) = Complex<Real>(0, -opt.dt) * gen.k_lift;
        gamma_ = prop_.solve(e);
        ell_ = gen.mass.apply(gamma_) / opt.dt;

        // Row n of the bank is ell^H R^{n+1}; with R^T = P* P^{-1} all basis traces come from one recursion.
        bank_.resize(steps_, D);
        CVector<Real> c = ell_.conjugate();
        const Complex<Real> half(0, opt.dt / 2);
        for (int n = 0; n < steps_; ++n) {
            const CVector<Real> y = prop_.solve(c);
            c = gen.mass.apply(y) - half * gen.ham.apply(y);
            bank_.row(n) = c.transpose();
        }
        RVector<Real> w(steps_);
        for (int n = 0; n < steps_; ++n) w(n) = opt.dt * std::exp(-2 * opt.omega * opt.dt * n);
        matrix_ = bank_.adjoint() * w.asDiagonal() * bank_;
        hermitian_defect_ = (matrix_ - matrix_.adjoint()).norm() / matrix_.norm();
        matrix_ = (matrix_ + matrix_.adjoint()) / Real(2);

        Real sup = 0;
        for (int k = 0; k < D; ++k) sup = std::max(sup, bank_.col(k).cwiseAbs2().maxCoeff());
        const Real diag = matrix_.diagonal().real().maxCoeff();
        tail_bound_ = std::exp(-2 * opt.omega * horizon_) * sup / (2 * opt.omega) / diag;
        if (tail_bound_ > opt.tail_check_tol) {
            const Real need = horizon_ + std::log(tail_bound_ / opt.tail_check_tol) / (2 * opt.omega);
            throw NumericalGuard("Gramian tail bound " + std::to_string(static_cast<double>(tail_bound_)) +
                                 " exceeds tolerance; use T_inf >= " + std::to_string(static_cast<double>(need)));
        }
        build_feedback();
    }

    Real omega() const { return opt_.omega; }
    Real horizon() const { return horizon_; }
    Real dt() const { return opt_.dt; }
    int steps() const { return steps_; }
    int size() const { return static_cast<int>(matrix_.rows()); }
    const StabOptions<Real>& options() const { return opt_; }
    const CMatrix<Real>& matrix() const { return matrix_; }
    const CMatrix<Real>& trace_bank() const { return bank_; }
    const CMatrix<Real>& filtered_matrix() const { return filtered_; }
    const RMatrix<Real>& kept_modes() const { return kept_; }
    const ModalBasis<Real>& modal() const { return modal_; }
    const CVector<Real>& feedback_row() const { return feedback_; }
    const CVector<Real>& control_column() const { return gamma_; }
    Real hermitian_defect() const { return hermitian_defect_; }
    Real tail_bound() const { return tail_bound_; }
    const Propagator<Real>& propagator() const { return prop_; }
    const DiscreteGenerator<Real>& generator() const { return *gen_; }

    // x^H Lambda x
    Real quadratic_form(const CVector<Real>& x) const { return std::real(x.dot(matrix_ * x)); }

    // Same quantity by direct propagation of x; independent of the stored bank.
    Real quadratic_form_direct(const CVector<Real>& x) const {
        CVector<Real> y = x;
        Real acc = 0;
        for (int n = 0; n < steps_; ++n) {
            y = prop_.step(y);
            acc += opt_.dt * std::exp(-2 * opt_.omega * opt_.dt * n) * std::norm(ell_.dot(y));
        }
        return acc;
    }

    Complex<Real> trace_functional(const CVector<Real>& y) const { return ell_.dot(y); }

    // Trace series of basis element k by forward propagation (independent of the bank recursion).
    CVector<Real> basis_trace(int k) const {
        CVector<Real> y = CVector<Real>::Zero(size()), out(steps_);
        y(k) = 1;
        for (int n = 0; n < steps_; ++n) {
            y = prop_.step(y);
            out(n) = ell_.dot(y);
        }
        return out;
    }

    // Lax-Milgram solve on the observable modal subspace: returns Phi0 with
    // V_f^T Lambda Phi0 = V_f^T G z, G the mass (L2) or H Gram matrix.
    CVector<Real> lax_milgram_solve(const CVector<Real>& z) const {
        const CVector<Real> rhs = kept_.transpose() * pairing_apply(z);
        const CVector<Real> c = filtered_.llt().solve(rhs);
        return kept_ * c;
    }

    CVector<Real> pairing_apply(const CVector<Real>& z) const {
        return opt_.pairing == Pairing::L2 ? gen_->mass.apply(z) : h_gram(gen_->grid).apply(z);
    }

    Complex<Real> feedback(const CVector<Real>& z) const { return feedback_.cwiseProduct(z).sum(); }

    Real filtered_min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(filtered_);
        return es.eigenvalues().minCoeff();
    }

    RVector<Real> eigenvalues() const {
        Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(matrix_, Eigen::EigenvaluesOnly);
        return es.eigenvalues();
    }

    // sup |F z| / ||z|| over the discrete space, in the H seminorm or the L2 norm.
    Real feedback_norm(Pairing norm) const {
        const SymTridiag<Real> g = norm == Pairing::L2 ? gen_->mass : h_gram(gen_->grid);
        const ComplexTridiagSolver<Real> s(g, Complex<Real>(1), g, Complex<Real>(0));
        const CVector<Real> fc = feedback_.conjugate();
        return std::sqrt(std::abs(feedback_.cwiseProduct(s.solve(fc)).sum()));
    }

private:
    void build_feedback() {
        const int D = size();
        std::vector<int> keep;
        for (int j = 0; j < D; ++j)
            if (modal_.observability(j) >= opt_.filter_tol) keep.push_back(j);
        kept_.resize(D, static_cast<int>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) kept_.col(j) = modal_.vectors.col(keep[j]);
        const CMatrix<Real> vf = kept_.template cast<Complex<Real>>();
        filtered_ = vf.transpose() * matrix_ * vf;
        filtered_ = (filtered_ + filtered_.adjoint()) / Real(2);
        Eigen::LLT<CMatrix<Real>> llt(filtered_);
        if (llt.info() != Eigen::Success) throw NumericalGuard("filtered Gramian is not positive definite");
        // h = -a^T Lambda_f^{-1} V_f^T G z with a_j = ell(R v_j). Lambda_f is Hermitian,
        // so the gain column is -G V_f conj(Lambda_f^{-1} conj(a)).
        const CVector<Real> a = (bank_.row(0) * vf).transpose();
        CMatrix<Real> pg(D, static_cast<int>(keep.size()));
        for (int j = 0; j < pg.cols(); ++j) pg.col(j) = pairing_apply(vf.col(j));
        const CVector<Real> row = llt.solve(a.conjugate()).conjugate();
        feedback_ = -(pg * row);
    }

    const DiscreteGenerator<Real>* gen_;
    StabOptions<Real> opt_;
    Propagator<Real> prop_;
    ModalBasis<Real> modal_;
    int steps_ = 0;
    Real horizon_ = 0;
    CVector<Real> gamma_, ell_, feedback_;
    CMatrix<Real> bank_, matrix_, filtered_;
    RMatrix<Real> kept_;
    Real hermitian_defect_ = 0, tail_bound_ = 0;
};

template <class Real>
Complex<Real> feedback_gain(const StabGramian<Real>& lam, const StatePair<Real>& z) {
    return lam.feedback(z.dofs);
}

// Lagged feedback loop: h_n = F(U_n) held over [t_n, t_{n+1}]; state n carries lift h_n.
template <class Real>
Trajectory<Real> closed_loop_simulate(const StabGramian<Real>& lam, const StatePair<Real>& initial,
                                      const TimeGrid<Real>& tg, Real blowup = Real(1e3)) {
    const auto& gen = lam.generator();
    if (std::abs(tg.dt - lam.dt()) > Real(1e-12) * lam.dt()) throw ValidationError("closed loop dt must match the Gramian dt");
    if (initial.n != gen.grid.n_cells) throw ValidationError("initial state and generator disagree on N");
    const auto& prop = lam.propagator();
    Trajectory<Real> traj{tg, {}, {}, {}};
    traj.states.reserve(tg.n_steps + 1);
    traj.applied_control.reserve(tg.n_steps + 1);
    CVector<Real> u = initial.dofs;
    const Real n0 = gen.mass_norm(u);
    for (int n = 0; n <= tg.n_steps; ++n) {
        const Complex<Real> h = lam.feedback(u);
        traj.states.emplace_back(gen.grid.n_cells, u, h);
        traj.applied_control.push_back(h);
        if (gen.mass_norm(u) > blowup * std::max(n0, std::numeric_limits<Real>::min()))
            throw NumericalGuard("closed loop blow-up at t = " + std::to_string(static_cast<double>(tg.t(n))));
        if (n < tg.n_steps) u = prop.step(u, h, h);
    }
    traj.left_trace_v = boundary_trace_left(traj, gen.grid);
    return traj;
}

template <class Real = double>
struct DecayFit {
    Real rate;
    Real prefactor;
    Real residual;  // RMS of log-residuals over the window
};

template <class Real>
DecayFit<Real> fit_decay_rate(const std::vector<Real>& t, const std::vector<Real>& norms, Real t0, Real t1) {
    Real sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t0 - Real(1e-12) || t[i] > t1 + Real(1e-12)) continue;
        if (!(norms[i] > Real(0))) throw ValidationError("decay fit needs positive norms in the window");
        const Real y = std::log(norms[i]);
        sx += t[i]; sy += y; sxx += t[i] * t[i]; sxy += t[i] * y;
        ++n;
    }
    if (n < 2) throw ValidationError("decay fit window holds fewer than two samples");
    const Real den = n * sxx - sx * sx;
    const Real slope = (n * sxy - sx * sy) / den, icpt = (sy - slope * sx) / n;
    Real ss = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t0 - Real(1e-12) || t[i] > t1 + Real(1e-12)) continue;
        const Real r = std::log(norms[i]) - (icpt + slope * t[i]);
        ss += r * r;
    }
    return {-slope, std::exp(icpt), std::sqrt(ss / n)};
}

template <class Real>
std::string params_hash(const PhysicalParams<Real>& p, const Grid<Real>& g) {
    std::ostringstream os;
    os << std::setprecision(17) << p.gamma1 << ',' << p.gamma2 << ',' << p.alpha1 << ',' << p.alpha2 << ',' << p.alpha
       << ',' << p.sigma << ',' << g.n_cells;
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : os.str()) { h ^= ch; h *= 1099511628211ULL; }
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << h;
    return hex.str();
}

template <class Real>
void write_gramian_csv(const std::string& path, const StabGramian<Real>& lam) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(17) << "row,col,re,im\n";
    const auto& m = lam.matrix();
    for (int j = 0; j < m.rows(); ++j)
        for (int k = 0; k < m.cols(); ++k) out << j << ',' << k << ',' << m(j, k).real() << ',' << m(j, k).imag() << '\n';
}

template <class Real>
void write_decay_csv(const std::string& path, const Trajectory<Real>& traj, const Grid<Real>& g) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(17) << "t,h_norm,re_h,im_h\n";
    for (std::size_t n = 0; n < traj.states.size(); ++n) {
        const auto h = traj.applied_control[n];
        out << traj.time.t(static_cast<int>(n)) << ',' << h_norm(traj.states[n], g) << ',' << h.real() << ',' << h.imag()
            << '\n';
    }
}

}  // namespace kc
