#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <numbers>
#include <random>

#include "kc/modes.hpp"
#include "kc/state.hpp"

using namespace kc;
using C = std::complex<double>;

namespace {

StatePair<double> sine_pair(int n, double ku, double kv) {
    CVector<double> u(n + 1), v(n + 1);
    for (int i = 0; i <= n; ++i) {
        const double x = double(i) / n;
        u(i) = std::sin(ku * std::numbers::pi * x);
        v(i) = std::sin(kv * std::numbers::pi * x);
    }
    u(n) = v(n) = 0;
    return StatePair<double>::from_nodes(u, v);
}

}  // namespace

TEST_CASE("validate_sigma") {
    PhysicalParams<double> p;
    auto r = validate_sigma(p);
    CHECK(r.kappa == 4.0);
    CHECK(r.admissible);
    CHECK(r.c1 == 1.0);
    CHECK(r.c2 == -4.0);

    p.sigma = 3;
    r = validate_sigma(p);
    CHECK(r.kappa == 3.0);
    CHECK_FALSE(r.admissible);

    p.gamma1 = 2;
    p.gamma2 = 1;
    p.sigma = 2;
    r = validate_sigma(p);
    CHECK(r.kappa == 4.0);
    CHECK(r.admissible);
    CHECK(validate_sigma(p).kappa == r.kappa);
}

TEST_CASE("non-positive parameters are rejected by name") {
    PhysicalParams<double> p;
    p.alpha2 = 0;
    CHECK_THROWS_WITH_AS(validate_sigma(p), "alpha2 must be positive", ValidationError);
    p = {};
    p.sigma = -1;
    CHECK_THROWS_WITH_AS(p.validate(), "sigma must be positive", ValidationError);
}

TEST_CASE("grids") {
    CHECK_THROWS_AS(Grid<double>(3), ValidationError);
    const Grid<double> g(8);
    CHECK(g.dofs() == 15);
    CHECK(g.x(0) == 0.0);
    CHECK(g.x(8) == 1.0);
    const TimeGrid<double> tg(2.0, 8);
    CHECK(tg.dt == 0.25);
    CHECK(tg.t(8) == 2.0);
    CHECK_THROWS_AS(TimeGrid<double>(0.0, 4), ValidationError);
}

TEST_CASE("state pair invariants") {
    const int n = 6;
    CVector<double> u = CVector<double>::LinSpaced(n + 1, 0, 1), v = CVector<double>::Zero(n + 1);
    CHECK_THROWS_AS(StatePair<double>::from_nodes(u, v), ValidationError);  // u(1) != v(1)
    v(n) = u(n);
    v(0) = C(0.5, -1);
    const auto s = StatePair<double>::from_nodes(u, v);
    CHECK(s.lift == C(0.5, -1));
    CHECK((s.u_nodes() - u).norm() == 0.0);
    CHECK((s.v_nodes() - v).norm() == 0.0);
    u(0) = 1;
    CHECK_THROWS_AS(StatePair<double>::from_nodes(u, v), ValidationError);
}

TEST_CASE("zero state norms") {
    const Grid<double> g(10);
    const StatePair<double> z(10);
    CHECK(h_norm(z, g) == 0.0);
    CHECK(l2_norm(z, g) == 0.0);
}

TEST_CASE("h_norm of sin(pi x) in both components") {
    // Cell differences of sin(pi x_i): sum = 2N^2 sin^2(pi/(2N)) per component, so
    // ||.||_H = 2N sin(pi/(2N)) -> pi = (int 2 pi^2 cos^2(pi x) dx)^(1/2).
    double prev = 0;
    for (int n : {25, 50, 100, 200}) {
        const Grid<double> g(n);
        const double h = h_norm(sine_pair(n, 1, 1), g);
        CHECK(h == doctest::Approx(2 * n * std::sin(std::numbers::pi / (2 * n))).epsilon(1e-13));
        const double err = std::abs(h - std::numbers::pi);
        if (prev > 0) CHECK(prev / err == doctest::Approx(4).epsilon(0.01));
        prev = err;
    }
}

TEST_CASE("l2_norm oracles") {
    double prev = 0;
    for (int n : {25, 50, 100, 200}) {
        const Grid<double> g(n);
        const double err = std::abs(l2_norm(sine_pair(n, 1, 1), g) - 1.0);
        CHECK(err < 2.0 / (n * n));
        if (prev > 0) CHECK(prev / err == doctest::Approx(4).epsilon(0.02));
        prev = err;
    }
    // u = 1 on interior nodes, 0 at both ends; v = 0.
    const int n = 2000;
    CVector<double> u = CVector<double>::Ones(n + 1), v = CVector<double>::Zero(n + 1);
    u(0) = u(n) = 0;
    CHECK(l2_norm(StatePair<double>::from_nodes(u, v), Grid<double>(n)) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("inner_h sesquilinear properties") {
    std::mt19937_64 rng(3);
    const Grid<double> g(40);
    const StatePair<double> a(40, random_dofs<double>(79, rng)), b(40, random_dofs<double>(79, rng));
    CHECK(std::abs(inner_h(a, a, g).real() - std::pow(h_norm(a, g), 2)) < 1e-10 * std::pow(h_norm(a, g), 2));
    CHECK(std::abs(inner_h(a, b, g) - std::conj(inner_h(b, a, g))) < 1e-12 * std::abs(inner_h(a, b, g)));
    const C c(-1.5, 2.0);
    CHECK(h_norm(c * a, g) == doctest::Approx(std::abs(c) * h_norm(a, g)).epsilon(1e-14));
    CHECK(l2_norm(c * a, g) == doctest::Approx(std::abs(c) * l2_norm(a, g)).epsilon(1e-14));
    // discrete sine modes are exactly orthogonal under cell differences
    const int n = 64;
    CVector<double> u1(n + 1), u2(n + 1), z = CVector<double>::Zero(n + 1);
    for (int i = 0; i <= n; ++i) {
        u1(i) = std::sin(std::numbers::pi * i / n);
        u2(i) = std::sin(2 * std::numbers::pi * i / n);
    }
    u1(n) = u2(n) = 0;
    const auto s1 = StatePair<double>::from_nodes(u1, z), s2 = StatePair<double>::from_nodes(u2, z);
    CHECK(std::abs(inner_h(s1, s2, Grid<double>(n))) < 1e-12);
    CHECK_THROWS_AS(inner_h(s1, a, g), ValidationError);
}

TEST_CASE("state CSV round trip") {
    std::mt19937_64 rng(5);
    const Grid<double> g(12);
    StatePair<double> s(12, random_dofs<double>(23, rng), C(0.25, 0.5));
    const std::string path = "test_core_state.csv";
    write_state_csv(path, s, g);
    const auto r = read_state_csv<double>(path);
    std::remove(path.c_str());
    CHECK(r.n == 12);
    CHECK((r.dofs - s.dofs).norm() < 1e-15 * s.dofs.norm());
    CHECK(std::abs(r.lift - s.lift) < 1e-16);
}
