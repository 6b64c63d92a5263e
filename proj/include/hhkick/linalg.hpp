#pragma once

// Dense linear algebra at fixed size 4: eigenvalues via Hessenberg reduction
// plus shifted QR, singular values via one-sided Jacobi, and an LU solver for
// Newton steps. Dependency-free on purpose; 4x4 needs no library.

#include <algorithm>
#include <array>
#include <complex>
#include <cstddef>

#include "types.hpp"

namespace hhkick {

using Complex = std::complex<double>;

namespace detail {

using CMat4 = std::array<Complex, 16>;

inline Complex& at(CMat4& m, std::size_t i, std::size_t j) { return m[4 * i + j]; }
inline Complex at(const CMat4& m, std::size_t i, std::size_t j) { return m[4 * i + j]; }

// Householder reduction to upper Hessenberg form (real arithmetic).
inline Mat4 hessenberg(Mat4 a) {
    for (std::size_t c = 0; c < 2; ++c) {
        // Zero entries (c+2..3, c) with a reflector on rows/cols c+1..3.
        double alpha = 0.0;
        for (std::size_t i = c + 1; i < 4; ++i) alpha += a(i, c) * a(i, c);
        alpha = std::sqrt(alpha);
        if (alpha == 0.0) continue;
        if (a(c + 1, c) > 0.0) alpha = -alpha;
        std::array<double, 4> v{};
        double vnorm2 = 0.0;
        for (std::size_t i = c + 1; i < 4; ++i) {
            v[i] = a(i, c) - (i == c + 1 ? alpha : 0.0);
            vnorm2 += v[i] * v[i];
        }
        if (vnorm2 == 0.0) continue;
        // a <- P a P with P = I - 2 v v^T / (v^T v).
        for (std::size_t j = 0; j < 4; ++j) {
            double s = 0.0;
            for (std::size_t i = c + 1; i < 4; ++i) s += v[i] * a(i, j);
            s *= 2.0 / vnorm2;
            for (std::size_t i = c + 1; i < 4; ++i) a(i, j) -= s * v[i];
        }
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0.0;
            for (std::size_t j = c + 1; j < 4; ++j) s += a(i, j) * v[j];
            s *= 2.0 / vnorm2;
            for (std::size_t j = c + 1; j < 4; ++j) a(i, j) -= s * v[j];
        }
        for (std::size_t i = c + 2; i < 4; ++i) a(i, c) = 0.0;
    }
    return a;
}

// Eigenvalues of a (complex) 2x2 block.
inline std::pair<Complex, Complex> eig2(Complex a, Complex b, Complex c, Complex d) {
    const Complex tr = a + d;
    const Complex disc = std::sqrt(0.25 * (a - d) * (a - d) + b * c);
    return {0.5 * tr + disc, 0.5 * tr - disc};
}

}  // namespace detail

// Eigenvalues of a 4x4 real matrix, unordered. Real Hessenberg reduction
// followed by Wilkinson-shifted QR in complex arithmetic (complex shifts make
// conjugate pairs converge without double-shift bulge chasing).
inline std::array<Complex, 4> eigenvalues4(const Mat4& m) {
    if (!all_finite(m)) throw std::invalid_argument("eigenvalues4: non-finite input");

    double scale = 0.0;
    for (double v : m.a) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return {Complex(0), Complex(0), Complex(0), Complex(0)};

    const Mat4 hr = detail::hessenberg(m);
    detail::CMat4 h{};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) detail::at(h, i, j) = Complex(hr(i, j));

    std::array<Complex, 4> eig{};
    int hi = 3;
    int iters = 0;
    const double eps = 1e-15;

    auto subdiag_small = [&](int k) {
        return std::abs(detail::at(h, k, k - 1)) <=
               eps * (std::abs(detail::at(h, k - 1, k - 1)) + std::abs(detail::at(h, k, k)));
    };

    while (hi >= 0) {
        if (++iters > 400) throw NoConvergence("eigenvalues4: QR iteration stalled");

        for (int k = 1; k <= hi; ++k)
            if (subdiag_small(k)) detail::at(h, k, k - 1) = Complex(0);

        if (hi == 0 || detail::at(h, hi, hi - 1) == Complex(0)) {
            eig[hi] = detail::at(h, hi, hi);
            --hi;
            continue;
        }
        if (hi == 1 || detail::at(h, hi - 1, hi - 2) == Complex(0)) {
            auto [l1, l2] = detail::eig2(detail::at(h, hi - 1, hi - 1),
                                         detail::at(h, hi - 1, hi), detail::at(h, hi, hi - 1),
                                         detail::at(h, hi, hi));
            eig[hi] = l1;
            eig[hi - 1] = l2;
            hi -= 2;
            continue;
        }

        // Active window [lo, hi].
        int lo = hi - 1;
        while (lo > 0 && detail::at(h, lo, lo - 1) != Complex(0)) --lo;

        // Wilkinson shift: trailing-2x2 eigenvalue closest to h(hi,hi).
        auto [s1, s2] = detail::eig2(detail::at(h, hi - 1, hi - 1), detail::at(h, hi - 1, hi),
                                     detail::at(h, hi, hi - 1), detail::at(h, hi, hi));
        const Complex hh = detail::at(h, hi, hi);
        Complex mu = (std::abs(s1 - hh) < std::abs(s2 - hh)) ? s1 : s2;
        if (iters % 17 == 0) mu += Complex(0.5 * std::abs(detail::at(h, hi, hi - 1)));

        for (std::size_t i = 0; i < 4; ++i) detail::at(h, i, i) -= mu;

        // QR step via complex Givens rotations on the window's subdiagonals.
        std::array<std::pair<Complex, Complex>, 3> rot{};  // (c, s) per position
        for (int k = lo; k < hi; ++k) {
            const Complex a = detail::at(h, k, k);
            const Complex b = detail::at(h, k + 1, k);
            const double r = std::sqrt(std::norm(a) + std::norm(b));
            Complex c(1), s(0);
            if (r > 0.0) {
                c = std::conj(a) / r;
                s = std::conj(b) / r;
            }
            rot[static_cast<std::size_t>(k - lo)] = {c, s};
            for (std::size_t j = 0; j < 4; ++j) {
                const Complex x = detail::at(h, k, j);
                const Complex y = detail::at(h, k + 1, j);
                detail::at(h, k, j) = c * x + s * y;
                detail::at(h, k + 1, j) = -std::conj(s) * x + std::conj(c) * y;
            }
        }
        for (int k = lo; k < hi; ++k) {
            const auto [c, s] = rot[static_cast<std::size_t>(k - lo)];
            for (std::size_t i = 0; i < 4; ++i) {
                const Complex x = detail::at(h, i, k);
                const Complex y = detail::at(h, i, k + 1);
                detail::at(h, i, k) = x * std::conj(c) + y * std::conj(s);
                detail::at(h, i, k + 1) = -x * s + y * c;
            }
        }
        for (std::size_t i = 0; i < 4; ++i) detail::at(h, i, i) += mu;
    }

    // Real inputs: scrub noise-level imaginary parts.
    for (auto& l : eig)
        if (std::abs(l.imag()) <= 1e-12 * scale) l = Complex(l.real(), 0.0);
    return eig;
}

struct Svd4 {
    Vec4 sigma;  // descending, all >= 0
    Mat4 u;      // columns = left singular vectors
    Mat4 v;      // columns = right singular vectors; m = u diag(sigma) v^T
};

// One-sided Jacobi SVD: rotate column pairs of a working copy until all pairs
// are orthogonal, accumulating the rotations into v.
inline Svd4 svd4(const Mat4& m) {
    if (!all_finite(m)) throw std::invalid_argument("svd4: non-finite input");

    Mat4 a = m;
    Mat4 v = Mat4::identity();

    for (int sweep = 0; sweep < 100; ++sweep) {
        double worst = 0.0;
        for (std::size_t p = 0; p < 3; ++p) {
            for (std::size_t q = p + 1; q < 4; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t k = 0; k < 4; ++k) {
                    app += a(k, p) * a(k, p);
                    aqq += a(k, q) * a(k, q);
                    apq += a(k, p) * a(k, q);
                }
                const double denom = std::sqrt(app * aqq);
                if (denom == 0.0 || std::abs(apq) <= 1e-16 * denom) continue;
                worst = std::max(worst, std::abs(apq) / denom);

                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < 4; ++k) {
                    const double x = a(k, p), y = a(k, q);
                    a(k, p) = c * x - s * y;
                    a(k, q) = s * x + c * y;
                    const double vx = v(k, p), vy = v(k, q);
                    v(k, p) = c * vx - s * vy;
                    v(k, q) = s * vx + c * vy;
                }
            }
        }
        if (worst == 0.0) break;
    }

    Svd4 out;
    out.v = v;
    std::array<std::size_t, 4> order{0, 1, 2, 3};
    Vec4 sig{};
    for (std::size_t j = 0; j < 4; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += a(k, j) * a(k, j);
        sig[j] = std::sqrt(s);
    }
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return sig[i] > sig[j]; });

    Mat4 u{}, vp{};
    for (std::size_t j = 0; j < 4; ++j) {
        const std::size_t src = order[j];
        out.sigma[j] = sig[src];
        for (std::size_t k = 0; k < 4; ++k) vp(k, j) = v(k, src);
        if (sig[src] > 1e-290) {
            for (std::size_t k = 0; k < 4; ++k) u(k, j) = a(k, src) / sig[src];
        }
    }
    // Complete zero-sigma columns of u to an orthonormal basis.
    for (std::size_t j = 0; j < 4; ++j) {
        double n = 0.0;
        for (std::size_t k = 0; k < 4; ++k) n += u(k, j) * u(k, j);
        if (n > 0.5) continue;
        for (std::size_t cand = 0; cand < 4; ++cand) {
            Vec4 e{};
            e[cand] = 1.0;
            for (std::size_t jj = 0; jj < 4; ++jj) {
                if (jj == j) continue;
                double d = 0.0;
                for (std::size_t k = 0; k < 4; ++k) d += u(k, jj) * e[k];
                for (std::size_t k = 0; k < 4; ++k) e[k] -= d * u(k, jj);
            }
            const double en = norm2(e);
            if (en > 1e-3) {
                for (std::size_t k = 0; k < 4; ++k) u(k, j) = e[k] / en;
                break;
            }
        }
    }
    out.u = u;
    out.v = vp;
    return out;
}

// Solve a x = b by LU with partial pivoting.
inline Vec4 solve4(Mat4 a, Vec4 b) {
    std::array<std::size_t, 4> piv{0, 1, 2, 3};
    for (std::size_t c = 0; c < 4; ++c) {
        std::size_t best = c;
        for (std::size_t i = c + 1; i < 4; ++i)
            if (std::abs(a(i, c)) > std::abs(a(best, c))) best = i;
        if (best != c) {
            for (std::size_t j = 0; j < 4; ++j) std::swap(a.a[4 * c + j], a.a[4 * best + j]);
            std::swap(b[c], b[best]);
            std::swap(piv[c], piv[best]);
        }
        const double pivot = a(c, c);
        if (std::abs(pivot) < 1e-300) throw NumericalError("solve4: singular matrix");
        for (std::size_t i = c + 1; i < 4; ++i) {
            const double f = a(i, c) / pivot;
            a(i, c) = 0.0;
            for (std::size_t j = c + 1; j < 4; ++j) a(i, j) -= f * a(c, j);
            b[i] -= f * b[c];
        }
    }
    Vec4 x{};
    for (int i = 3; i >= 0; --i) {
        double s = b[static_cast<std::size_t>(i)];
        for (std::size_t j = static_cast<std::size_t>(i) + 1; j < 4; ++j)
            s -= a(static_cast<std::size_t>(i), j) * x[j];
        x[static_cast<std::size_t>(i)] = s / a(static_cast<std::size_t>(i), static_cast<std::size_t>(i));
    }
    return x;
}

}  // namespace hhkick
