#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <random>

#include "kc/dynamics.hpp"
#include "kc/modes.hpp"
#include "kc/trace_identity.hpp"

using namespace kc;
using C = std::complex<double>;

namespace {

const PhysicalParams<double> kDefault{};

// Max nodal difference between a coarse state and the matching nodes of a 2x finer one.
double coarse_gap(const StatePair<double>& a, const StatePair<double>& b) {
    const CVector<double> ua = a.u_nodes(), va = a.v_nodes(), ub = b.u_nodes(), vb = b.v_nodes();
    double e = 0;
    for (int i = 0; i <= a.n; ++i) {
        e = std::max(e, std::abs(ua(i) - ub(2 * i)));
        e = std::max(e, std::abs(va(i) - vb(2 * i)));
    }
    return e;
}

StatePair<double> controlled_final(int n, int power) {
    const Grid<double> g(n);
    const TimeGrid<double> tg(1.0, 4 * n);
    const auto gen = assemble_generator(kDefault, g);
    std::vector<C> h(tg.n_steps + 1);
    for (int k = 0; k <= tg.n_steps; ++k) h[k] = std::pow(std::sin(std::numbers::pi * tg.t(k)), power);
    return solve_forward(gen, StatePair<double>(n), h, tg).states.back();
}

}  // namespace

TEST_CASE("generator is skew in the mass inner product") {
    const Grid<double> g(50);
    const auto gen = assemble_generator(kDefault, g);
    std::mt19937_64 rng(11);
    for (int k = 0; k < 100; ++k) {
        const CVector<double> u = random_dofs<double>(g.dofs(), rng);
        CHECK(std::abs(gen.skew_defect(u)) <= 1e-12 * std::real(gen.mass_inner(u, u)));
    }
    CHECK_THROWS_AS(assemble_generator(kDefault, Grid<double>(3)), ValidationError);
}

TEST_CASE("mass row sums equal the local cell measures") {
    const int n = 10;
    const Grid<double> g(n);
    const auto gen = assemble_generator(kDefault, g);
    const RMatrix<double> m = gen.mass.dense();
    const ChainLayout c{n};
    for (int p = 0; p < g.dofs(); ++p) {
        double sum = m.row(p).sum();
        // the node-0 neighbours lose their coupling dx/6 to the eliminated Dirichlet node
        if (p == c.u_pos(1) || p == c.v_pos(1)) sum += g.dx / 6;
        CHECK(sum == doctest::Approx(g.dx).epsilon(1e-14));
    }
    CHECK(gen.mass.dense().llt().info() == Eigen::Success);
}

TEST_CASE("decoupled Dirichlet limit of the u-block") {
    // u-block restricted to u-nodes 1..N-1 (u(1) = 0 imposed, coupling dropped). The exact P1 eigenvalues
    // are gamma1 (6/dx^2)(1 - cos k pi dx)/(2 + cos k pi dx) + alpha1, approximating gamma1 k^2 pi^2 + alpha1.
    const PhysicalParams<double> p;
    double prev = 0;
    for (int n : {40, 80, 160}) {
        const Grid<double> g(n);
        const auto gen = assemble_generator(p, g);
        const int m = n - 1;
        const RMatrix<double> H = gen.hamiltonian().dense().topLeftCorner(m, m);
        const RMatrix<double> M = gen.mass.dense().topLeftCorner(m, m);
        Eigen::GeneralizedSelfAdjointEigenSolver<RMatrix<double>> es(H, M);
        double err = 0;
        for (int k = 1; k <= 3; ++k) {
            const double th = k * std::numbers::pi * g.dx;
            const double exact_p1 = p.gamma1 * 6 / (g.dx * g.dx) * (1 - std::cos(th)) / (2 + std::cos(th)) + p.alpha1;
            CHECK(es.eigenvalues()(k - 1) == doctest::Approx(exact_p1).epsilon(1e-10));
            const double cont = p.gamma1 * k * k * std::numbers::pi * std::numbers::pi + p.alpha1;
            err = std::max(err, std::abs(es.eigenvalues()(k - 1) - cont) / cont);
        }
        if (prev > 0) CHECK(prev / err == doctest::Approx(4).epsilon(0.05));
        prev = err;
    }
}

TEST_CASE("cn_step basics") {
    const Grid<double> g(30);
    const auto gen = assemble_generator(kDefault, g);
    const StatePair<double> zero(30);
    CHECK(cn_step(gen, zero, C(0), C(0), 1e-3).dofs.norm() == 0.0);

    std::mt19937_64 rng(2);
    const StatePair<double> s(30, random_dofs<double>(g.dofs(), rng));
    const auto s1 = cn_step(gen, s, C(0), C(0), 1e-2);
    CHECK(std::abs(gen.mass_norm(s1.dofs) - gen.mass_norm(s.dofs)) <= 1e-11 * gen.mass_norm(s.dofs));

    // a discrete eigenmode rotates by the Cayley factor, e^{-i lambda dt} + O(dt^3)
    const ModalBasis<double> mb(gen);
    for (int j : {0, 5}) {
        const double lam = mb.lambda(j), dt = 1e-3;
        const CVector<double> v = mb.vectors.col(j).cast<C>();
        const auto out = cn_step(gen, StatePair<double>(30, v), C(0), C(0), dt);
        const C cayley = (C(1) - C(0, lam * dt / 2)) / (C(1) + C(0, lam * dt / 2));
        CHECK((out.dofs - cayley * v).norm() <= 1e-12 * v.norm());
        CHECK(std::abs(cayley - std::exp(C(0, -lam * dt))) <= std::pow(lam * dt, 3) / 12 * 1.01);
    }
}

TEST_CASE("forward solves") {
    const int n = 40;
    const Grid<double> g(n);
    const TimeGrid<double> tg(1.0, 200);
    const auto gen = assemble_generator(kDefault, g);
    const std::vector<C> zero_h(tg.n_steps + 1);
    const auto z = solve_forward(gen, StatePair<double>(n), zero_h, tg);
    for (const auto& s : z.states) CHECK(s.dofs.norm() == 0.0);
    CHECK(z.states.size() == static_cast<std::size_t>(tg.n_steps + 1));
    CHECK(z.left_trace_v.size() == z.states.size());

    std::mt19937_64 rng(9);
    const StatePair<double> a(n, random_dofs<double>(g.dofs(), rng)), b(n, random_dofs<double>(g.dofs(), rng));
    const auto fa = solve_forward(gen, a, zero_h, tg);
    const double m0 = gen.mass_norm(a.dofs);
    for (const auto& s : fa.states) CHECK(std::abs(gen.mass_norm(s.dofs) - m0) <= 1e-10 * m0);

    // linearity
    const auto h1 = random_coefficients<double>(rng, tg.n_steps + 1), h2 = random_coefficients<double>(rng, tg.n_steps + 1);
    const C al(0.3, -1.2), be(-0.7, 0.4);
    std::vector<C> hc(h1.size());
    for (std::size_t k = 0; k < h1.size(); ++k) hc[k] = al * h1[k] + be * h2[k];
    const auto ya = solve_forward(gen, a, h1, tg).states.back(), yb = solve_forward(gen, b, h2, tg).states.back();
    const auto yc = solve_forward(gen, al * a + be * b, hc, tg).states.back();
    CHECK((yc.dofs - al * ya.dofs - be * yb.dofs).norm() <= 1e-11 * yc.dofs.norm());
    CHECK_THROWS_AS(solve_forward(gen, a, std::vector<C>(5), tg), ValidationError);
}

TEST_CASE("controlled self-convergence") {
    // smooth control compatible with zero data (h and its first three derivatives vanish at t = 0): order 2
    const auto c25 = controlled_final(25, 4), c50 = controlled_final(50, 4), c100 = controlled_final(100, 4);
    const double e1 = coarse_gap(c25, c50), e2 = coarse_gap(c50, c100);
    CHECK(e1 / e2 == doctest::Approx(4).epsilon(0.1));
    // h = sin(pi t / T) has h'(0) != 0 against zero data; the gap still shrinks, at a reduced rate
    const auto s50 = controlled_final(50, 1), s100 = controlled_final(100, 1), s200 = controlled_final(200, 1);
    const double f1 = coarse_gap(s50, s100), f2 = coarse_gap(s100, s200);
    CHECK(f2 < f1);
    CHECK(f2 < 1e-2);
    CHECK(s200.dofs.norm() > 0.1);
}

TEST_CASE("free and adjoint solves") {
    const int n = 40;
    const Grid<double> g(n);
    const TimeGrid<double> tg(1.0, 200);
    const auto gen = assemble_generator(kDefault, g);
    std::mt19937_64 rng(4);
    const StatePair<double> s(n, random_dofs<double>(g.dofs(), rng));

    const auto fr = solve_free(gen, s, tg);
    CHECK_FALSE(fr.controlled());
    const auto back = solve_adjoint(gen, fr.states.back(), tg);
    CHECK((back.states.front().dofs - s.dofs).norm() <= 1e-9 * s.dofs.norm());

    const auto adj = solve_adjoint(gen, s, tg);
    CHECK((adj.states.back().dofs - s.dofs).norm() == 0.0);
    const auto again = solve_free(gen, adj.states.front(), tg);
    CHECK((again.states.back().dofs - s.dofs).norm() <= 1e-9 * s.dofs.norm());
    for (const auto& st : adj.states)
        CHECK(std::abs(gen.mass_norm(st.dofs) - gen.mass_norm(s.dofs)) <= 1e-10 * gen.mass_norm(s.dofs));

    const auto zadj = solve_adjoint(gen, StatePair<double>(n), tg);
    for (const auto& st : zadj.states) CHECK(st.dofs.norm() == 0.0);
}

TEST_CASE("energy is conserved, the H seminorm is not") {
    // the conserved quadratic form is U^H H U; the H seminorm drifts by an N-independent amount
    const TimeGrid<double> tg(1.0, 400);
    double drift[2];
    int k = 0;
    for (int n : {50, 100}) {
        const Grid<double> g(n);
        const auto gen = assemble_generator(kDefault, g);
        std::mt19937_64 rng(1);
        const auto s = smooth_random_state(kDefault, g, rng, 5);
        const auto rep = conservation_report(solve_free(gen, s, tg), g, &gen);
        CHECK(rep.energy_drift <= 1e-11);
        CHECK(rep.l2_drift <= 1e-10);
        drift[k++] = rep.h_drift;
    }
    CHECK(drift[0] > 0.1);
    CHECK(drift[1] == doctest::Approx(drift[0]).epsilon(0.05));
}

TEST_CASE("left boundary trace") {
    double prev = 0;
    for (int n : {50, 100, 200}) {
        const Grid<double> g(n);
        for (int k : {1, 2}) {
            CVector<double> u = CVector<double>::Zero(n + 1), v(n + 1);
            for (int i = 0; i <= n; ++i) v(i) = std::sin(k * std::numbers::pi * g.x(i));
            v(n) = 0;
            const auto s = StatePair<double>::from_nodes(u, v);
            const C tr = left_trace(s, g.dx);
            const double err = std::abs(tr - C(k * std::numbers::pi));
            if (k == 2) {
                if (prev > 0) CHECK(prev / err == doctest::Approx(4).epsilon(0.05));
                prev = err;
            }
            // leading error of the one-sided formula: (dx^2 / 3) |f'''(0)|
            CHECK(err < 1.05 * std::pow(k * std::numbers::pi, 3) / (3.0 * n * n));
            CHECK(std::abs(left_trace(s.conjugate(), g.dx) - std::conj(tr)) == 0.0);
        }
    }
    // v vanishing near x = 0 gives a zero trace
    const int n = 20;
    CVector<double> u = CVector<double>::Zero(n + 1), v = CVector<double>::Zero(n + 1);
    for (int i = 10; i <= n; ++i) u(i) = v(i) = C(i - 10.0, 1.0);
    CHECK(left_trace(StatePair<double>::from_nodes(u, v), 0.05) == C(0));
}

TEST_CASE("admissibility ratio") {
    const TimeGrid<double> tg(1.0, 400);
    const auto modes = exact_modes(ModeCoefficients<double>::from(kDefault), 4);
    std::mt19937_64 rng(6);
    const auto coef = random_coefficients<double>(rng, 4);
    double r[2];
    int k = 0;
    for (int n : {100, 200}) {
        const Grid<double> g(n);
        const auto gen = assemble_generator(kDefault, g);
        const auto zeta = modal_state(modes, coef, g);
        r[k++] = admissibility_ratio(zeta, gen, tg);
        CHECK(std::isfinite(r[k - 1]));
        if (n == 100) CHECK(admissibility_ratio(C(3, -2) * zeta, gen, tg) == doctest::Approx(r[0]).epsilon(1e-10));
    }
    CHECK(r[1] == doctest::Approx(r[0]).epsilon(0.1));

    // data supported near x = 1 at t = T still reaches x = 0 within (0, T)
    const int n = 100;
    const Grid<double> g(n);
    const auto gen = assemble_generator(kDefault, g);
    CVector<double> u = CVector<double>::Zero(n + 1), v = CVector<double>::Zero(n + 1);
    for (int i = 80; i <= n; ++i) {
        const double x = g.x(i);
        u(i) = std::pow(std::sin(std::numbers::pi * (x - 0.8) / 0.4), 2);
        v(i) = u(i);
    }
    const auto bump = StatePair<double>::from_nodes(u, v);
    CHECK(admissibility_ratio(bump, gen, tg) > 1e-4);
    CHECK_THROWS_AS(admissibility_ratio(StatePair<double>(n), gen, tg), ValidationError);
}
