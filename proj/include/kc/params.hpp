#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace kc {

template <class Real>
using Complex = std::complex<Real>;

template <class Real>
using CVector = Eigen::Matrix<Complex<Real>, Eigen::Dynamic, 1>;

template <class Real>
using RVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

template <class Real>
using CMatrix = Eigen::Matrix<Complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;

template <class Real>
using RMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericalGuard : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Coefficients of i u_t + gamma1 u_xx - alpha1 u = 0 and
// i sigma v_t + gamma2 v_xx - alpha2 v = 0 with Kirchhoff coupling at x = 1.
template <class Real = double>
struct PhysicalParams {
    Real gamma1 = 1;
    Real gamma2 = 1;
    Real alpha1 = 0.5;
    Real alpha2 = 0.5;
    Real alpha = 1;
    Real sigma = 4;

    Real kappa() const { return sigma * gamma1 / gamma2; }
    bool admissible() const { return kappa() > Real(3); }

    Real nu1() const { return gamma1; }
    Real nu2() const { return gamma2 / sigma; }
    Real theta1() const { return alpha1; }
    Real theta2() const { return alpha2 / sigma; }

    void validate() const {
        auto check = [](Real value, const char* name) {
            if (!(value > Real(0)) || !std::isfinite(static_cast<double>(value)))
                throw ValidationError(std::string(name) + " must be positive");
        };
        check(gamma1, "gamma1");
        check(gamma2, "gamma2");
        check(alpha1, "alpha1");
        check(alpha2, "alpha2");
        check(alpha, "alpha");
        check(sigma, "sigma");
    }
};

template <class Real = double>
struct AdmissibilityReport {
    Real kappa;
    bool admissible;
    Real c1;
    Real c2;
};

template <class Real>
AdmissibilityReport<Real> validate_sigma(const PhysicalParams<Real>& p) {
    p.validate();
    const Real k = p.kappa();
    return {k, k > Real(3), Real(1), -k};
}

template <class Real = double>
struct Grid {
    int n_cells;
    Real dx;

    explicit Grid(int n) : n_cells(n), dx(Real(1) / Real(n)) {
        if (n < 4) throw ValidationError("N must be at least 4");
    }

    Real x(int i) const { return Real(i) * dx; }
    int dofs() const { return 2 * n_cells - 1; }
    bool operator==(const Grid& o) const { return n_cells == o.n_cells; }
};

template <class Real = double>
struct TimeGrid {
    Real horizon;
    int n_steps;
    Real dt;

    TimeGrid(Real T, int M) : horizon(T), n_steps(M), dt(T / Real(M)) {
        if (!(T > Real(0))) throw ValidationError("T must be positive");
        if (M < 1) throw ValidationError("M must be positive");
    }

    Real t(int n) const { return Real(n) * dt; }
};

}  // namespace kc
