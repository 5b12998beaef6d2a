#pragma once

#include <filesystem>
#include <vector>

#include "kc/generator.hpp"

namespace kc {

// Crank-Nicolson map (M + i dt/2 H) U+ = (M - i dt/2 H) U - i dt/2 k_lift e_v1 (h_now + h_next).
// dt < 0 steps backward. Holds a reference to the generator.
template <class Real = double>
class Propagator {
public:
    Propagator(const DiscreteGenerator<Real>& gen, Real dt)
        : gen_(&gen), dt_(dt),
          solver_(gen.mass, Complex<Real>(1, 0), gen.hamiltonian(), Complex<Real>(0, dt / 2)) {
        if (!(std::abs(dt) > Real(0))) throw ValidationError("dt must be nonzero");
    }

    Real dt() const { return dt_; }
    const DiscreteGenerator<Real>& generator() const { return *gen_; }

    CVector<Real> step(const CVector<Real>& u, Complex<Real> h_now = {}, Complex<Real> h_next = {}) const {
        CVector<Real> r = gen_->mass.apply(u) - Complex<Real>(0, dt_ / 2) * gen_->ham.apply(u);
        const Complex<Real> h = h_now + h_next;
        if (h != Complex<Real>(0)) r(gen_->layout().v_first()) -= Complex<Real>(0, dt_ / 2) * gen_->k_lift * h;
        return solver_.solve(std::move(r));
    }

    // P^{-1} x, the implicit half of the step.
    CVector<Real> solve(CVector<Real> x) const { return solver_.solve(std::move(x)); }

private:
    const DiscreteGenerator<Real>* gen_;
    Real dt_;
    ComplexTridiagSolver<Real> solver_;
};

template <class Real>
StatePair<Real> cn_step(const DiscreteGenerator<Real>& gen, const StatePair<Real>& s, Complex<Real> h_now,
                        Complex<Real> h_next, Real dt) {
    const Propagator<Real> prop(gen, dt);
    return StatePair<Real>(s.n, prop.step(s.dofs, h_now, h_next), h_next);
}

template <class Real = double>
struct Trajectory {
    TimeGrid<Real> time;
    std::vector<StatePair<Real>> states;
    std::vector<Complex<Real>> left_trace_v;
    std::vector<Complex<Real>> applied_control;  // empty for uncontrolled runs

    bool controlled() const { return !applied_control.empty(); }
};

// One-sided second-order derivative at x = 0 of the v-component (includes the lift value).
template <class Real>
Complex<Real> left_trace(const StatePair<Real>& s, Real dx) {
    const ChainLayout c = s.layout();
    const Complex<Real> v1 = s.dofs(c.v_pos(1)), v2 = s.dofs(c.v_pos(2));
    return (Real(-3) * s.lift + Real(4) * v1 - v2) / (Real(2) * dx);
}

template <class Real>
std::vector<Complex<Real>> boundary_trace_left(const Trajectory<Real>& traj, const Grid<Real>& g) {
    if (g.n_cells < 3) throw ValidationError("trace needs N >= 3");
    std::vector<Complex<Real>> out;
    out.reserve(traj.states.size());
    for (const auto& s : traj.states) out.push_back(left_trace(s, g.dx));
    return out;
}

template <class Real>
Trajectory<Real> solve_forward(const DiscreteGenerator<Real>& gen, const StatePair<Real>& initial,
                               const std::vector<Complex<Real>>& control, const TimeGrid<Real>& tg) {
    if (static_cast<int>(control.size()) != tg.n_steps + 1) throw ValidationError("control series must have M+1 values");
    if (initial.n != gen.grid.n_cells) throw ValidationError("initial state and generator disagree on N");
    const Propagator<Real> prop(gen, tg.dt);
    Trajectory<Real> traj{tg, {}, {}, control};
    traj.states.reserve(tg.n_steps + 1);
    StatePair<Real> s(initial.n, initial.dofs, control[0]);
    traj.states.push_back(s);
    for (int n = 0; n < tg.n_steps; ++n) {
        s.dofs = prop.step(s.dofs, control[n], control[n + 1]);
        s.lift = control[n + 1];
        traj.states.push_back(s);
    }
    traj.left_trace_v = boundary_trace_left(traj, gen.grid);
    return traj;
}

template <class Real>
Trajectory<Real> solve_free(const DiscreteGenerator<Real>& gen, const StatePair<Real>& initial, const TimeGrid<Real>& tg) {
    StatePair<Real> s0(initial.n, initial.dofs);
    Trajectory<Real> traj = solve_forward(gen, s0, std::vector<Complex<Real>>(tg.n_steps + 1), tg);
    traj.applied_control.clear();
    return traj;
}

// Backward solve from phi(T) = final_data with homogeneous Dirichlet data; states stored at t_0..t_M.
template <class Real>
Trajectory<Real> solve_adjoint(const DiscreteGenerator<Real>& gen, const StatePair<Real>& final_data,
                               const TimeGrid<Real>& tg) {
    if (final_data.n != gen.grid.n_cells) throw ValidationError("final data and generator disagree on N");
    const Propagator<Real> back(gen, -tg.dt);
    Trajectory<Real> traj{tg, std::vector<StatePair<Real>>(tg.n_steps + 1), {}, {}};
    StatePair<Real> s(final_data.n, final_data.dofs);
    traj.states[tg.n_steps] = s;
    for (int n = tg.n_steps; n > 0; --n) {
        s.dofs = back.step(s.dofs);
        traj.states[n - 1] = s;
    }
    traj.left_trace_v = boundary_trace_left(traj, gen.grid);
    return traj;
}

template <class Real>
Real trapezoid(const std::vector<Real>& f, Real dt) {
    if (f.size() < 2) return 0;
    Real acc = (f.front() + f.back()) / 2;
    for (std::size_t i = 1; i + 1 < f.size(); ++i) acc += f[i];
    return acc * dt;
}

// (int_0^T |d_x phi_2(t,0)|^2 dt) / ||final_data||_H^2
template <class Real>
Real admissibility_ratio(const StatePair<Real>& final_data, const DiscreteGenerator<Real>& gen, const TimeGrid<Real>& tg) {
    const Real hn = h_norm(final_data, gen.grid);
    if (!(hn > Real(0))) throw ValidationError("admissibility ratio needs nonzero final data");
    const Trajectory<Real> traj = solve_adjoint(gen, final_data, tg);
    std::vector<Real> sq;
    sq.reserve(traj.left_trace_v.size());
    for (const auto& z : traj.left_trace_v) sq.push_back(std::norm(z));
    return trapezoid(sq, tg.dt) / (hn * hn);
}

template <class Real>
void write_trajectory_csv(const std::string& path, const Trajectory<Real>& traj, const Grid<Real>& g) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(17) << "t,l2_norm,h_norm,re_trace,im_trace,re_h,im_h\n";
    for (std::size_t n = 0; n < traj.states.size(); ++n) {
        const auto& s = traj.states[n];
        const Complex<Real> h = traj.controlled() ? traj.applied_control[n] : Complex<Real>(0);
        out << traj.time.t(static_cast<int>(n)) << ',' << l2_norm(s, g) << ',' << h_norm(s, g) << ','
            << traj.left_trace_v[n].real() << ',' << traj.left_trace_v[n].imag() << ',' << h.real() << ',' << h.imag()
            << '\n';
    }
}

// Writes state_<n>.csv every `stride` steps; returns the written paths.
template <class Real>
std::vector<std::string> write_snapshots(const std::filesystem::path& dir, const Trajectory<Real>& traj,
                                         const Grid<Real>& g, int stride) {
    std::vector<std::string> paths;
    if (stride <= 0) return paths;
    std::filesystem::create_directories(dir);
    for (std::size_t n = 0; n < traj.states.size(); n += static_cast<std::size_t>(stride)) {
        const auto p = dir / ("state_" + std::to_string(n) + ".csv");
        write_state_csv(p.string(), traj.states[n], g);
        paths.push_back(p.string());
    }
    return paths;
}

}  // namespace kc
