#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <vector>

namespace kc {

// Adaptive Gauss-Kronrod 7/15 for vector-valued integrands f(x) -> std::array<Real, K>.
// Starts from the given breakpoints and bisects the panel with the largest error estimate.
template <class Real, std::size_t K>
struct GaussKronrod {
    using Value = std::array<Real, K>;

    Real rel_tol = Real(1e-10);
    Real abs_tol = Real(0);
    int max_panels = 4000;

    struct Panel {
        Real a, b;
        Value value;
        Real error;
        bool operator<(const Panel& o) const { return error < o.error; }
    };

    template <class F>
    static Panel panel(F& f, Real a, Real b) {
        static constexpr Real xk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                       0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                       0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                       0.207784955007898467600689403773245, 0.0};
        static constexpr Real wk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                       0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                       0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                       0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
        static constexpr Real wg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                       0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
        const Real c = (a + b) / 2, h = (b - a) / 2;
        Value kron{}, gauss{};
        for (int i = 0; i < 8; ++i) {
            const int npts = i == 7 ? 1 : 2;
            for (int sgn = 0; sgn < npts; ++sgn) {
                const Value fx = f(sgn ? c - h * xk[i] : c + h * xk[i]);
                for (std::size_t k = 0; k < K; ++k) {
                    kron[k] += wk[i] * fx[k];
                    if (i % 2 == 1) gauss[k] += wg[i / 2] * fx[k];
                }
            }
        }
        Panel p{a, b, {}, 0};
        for (std::size_t k = 0; k < K; ++k) {
            p.value[k] = kron[k] * h;
            p.error = std::max(p.error, std::abs((kron[k] - gauss[k]) * h));
        }
        return p;
    }

    template <class F>
    Value integrate(F&& f, std::vector<Real> breaks) const {
        std::sort(breaks.begin(), breaks.end());
        breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
        std::priority_queue<Panel> queue;
        for (std::size_t i = 0; i + 1 < breaks.size(); ++i) queue.push(panel(f, breaks[i], breaks[i + 1]));
        auto totals = [&](Value& v, Real& e) {
            v.fill(Real(0));
            e = 0;
            auto copy = queue;
            while (!copy.empty()) {
                const Panel& p = copy.top();
                for (std::size_t k = 0; k < K; ++k) v[k] += p.value[k];
                e += p.error;
                copy.pop();
            }
        };
        Value v;
        Real err;
        totals(v, err);
        int panels = static_cast<int>(queue.size());
        while (panels < max_panels) {
            Real scale = 0;
            for (std::size_t k = 0; k < K; ++k) scale = std::max(scale, std::abs(v[k]));
            if (err <= std::max(abs_tol, rel_tol * scale)) break;
            const Panel worst = queue.top();
            queue.pop();
            const Real mid = (worst.a + worst.b) / 2;
            const Panel left = panel(f, worst.a, mid), right = panel(f, mid, worst.b);
            queue.push(left);
            queue.push(right);
            for (std::size_t k = 0; k < K; ++k) v[k] += left.value[k] + right.value[k] - worst.value[k];
            err += left.error + right.error - worst.error;
            ++panels;
        }
        totals(v, err);
        return v;
    }
};

// Breakpoints on [a, b] graded geometrically toward each listed focus point.
template <class Real>
std::vector<Real> graded_breaks(Real a, Real b, const std::vector<Real>& foci, int levels = 16, Real ratio = Real(0.1)) {
    std::vector<Real> out{a, b};
    const Real len = b - a;
    for (Real f : foci) {
        if (f < a || f > b) continue;
        out.push_back(f);
        Real off = len / 4;
        for (int k = 0; k < levels; ++k, off *= ratio) {
            if (f - off > a) out.push_back(f - off);
            if (f + off < b) out.push_back(f + off);
        }
    }
    return out;
}

}  // namespace kc
