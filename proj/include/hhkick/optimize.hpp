#pragma once

// Nelder-Mead simplex minimization (Lagarias parameterization). Used for the
// kick-amplitude search; generic over dimension.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <vector>

#include "types.hpp"

namespace hhkick {

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;  // false: max_iter hit; x/value carry the best so far
};

// Minimize f over R^k from an initial simplex of k+1 vertices. Stops when the
// simplex diameter (max pairwise Euclidean distance) drops below tol or after
// max_iter reflections. The best vertex never regresses.
template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<std::vector<double>> simplex, double tol,
                             int max_iter) {
    if (simplex.size() < 2) throw std::invalid_argument("nelder_mead: need >= 2 vertices");
    const std::size_t n = simplex.size() - 1;  // dimension
    for (const auto& v : simplex)
        if (v.size() != n) throw std::invalid_argument("nelder_mead: simplex shape mismatch");

    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i <= n; ++i) fv[i] = f(simplex[i]);

    auto order = [&] {
        std::vector<std::size_t> idx(n + 1);
        for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> s2(n + 1);
        std::vector<double> f2(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            s2[i] = simplex[idx[i]];
            f2[i] = fv[idx[i]];
        }
        simplex.swap(s2);
        fv.swap(f2);
    };
    auto diameter = [&] {
        double d = 0.0;
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t j = i + 1; j <= n; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double dd = simplex[i][k] - simplex[j][k];
                    s += dd * dd;
                }
                d = std::max(d, s);
            }
        return std::sqrt(d);
    };

    int iter = 0;
    order();
    while (iter < max_iter && diameter() >= tol) {
        ++iter;
        // Centroid of all but the worst vertex.
        std::vector<double> cen(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) cen[k] += simplex[i][k] / double(n);

        auto blend = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t k = 0; k < n; ++k)
                p[k] = cen[k] + coef * (simplex[n][k] - cen[k]);
            return p;
        };

        bool need_shrink = false;
        std::vector<double> xr = blend(-1.0);  // reflection
        const double fr = f(xr);
        if (fr < fv[0]) {
            std::vector<double> xe = blend(-2.0);  // expansion
            const double fe = f(xe);
            if (fe < fr) {
                simplex[n] = std::move(xe);
                fv[n] = fe;
            } else {
                simplex[n] = std::move(xr);
                fv[n] = fr;
            }
        } else if (fr < fv[n - 1]) {
            simplex[n] = std::move(xr);
            fv[n] = fr;
        } else if (fr < fv[n]) {
            std::vector<double> xc = blend(-0.5);  // outside contraction
            const double fc = f(xc);
            if (fc <= fr) {
                simplex[n] = std::move(xc);
                fv[n] = fc;
            } else {
                need_shrink = true;
            }
        } else {
            std::vector<double> xc = blend(0.5);  // inside contraction
            const double fc = f(xc);
            if (fc < fv[n]) {
                simplex[n] = std::move(xc);
                fv[n] = fc;
            } else {
                need_shrink = true;
            }
        }
        if (need_shrink) {
            for (std::size_t i = 1; i <= n; ++i) {
                for (std::size_t k = 0; k < n; ++k)
                    simplex[i][k] = simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]);
                fv[i] = f(simplex[i]);
            }
        }
        order();
    }

    NelderMeadResult out;
    out.x = simplex[0];
    out.value = fv[0];
    out.iterations = iter;
    out.converged = diameter() < tol;
    return out;
}

}  // namespace hhkick
