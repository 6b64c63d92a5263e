#pragma once

// Shared independent oracles for the test suite: finite differences, complex
// determinants for eigenvalue residuals, seeded random inputs, and unordered
// set matching. These deliberately avoid the library's own linear algebra
// where they are used to check it.

#include <algorithm>
#include <array>
#include <complex>
#include <random>
#include <vector>

#include <hhkick/types.hpp>

namespace oracles {

using hhkick::Mat4;
using hhkick::Vec4;

inline std::mt19937_64 rng(unsigned long long seed) { return std::mt19937_64{seed}; }

inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline Vec4 random_vec(std::mt19937_64& g, double lo, double hi) {
    return {uniform(g, lo, hi), uniform(g, lo, hi), uniform(g, lo, hi), uniform(g, lo, hi)};
}

inline Mat4 random_mat(std::mt19937_64& g, double lo, double hi) {
    Mat4 m;
    for (std::size_t i = 0; i < 16; ++i) m.a[i] = uniform(g, lo, hi);
    return m;
}

// Central finite-difference Jacobian of a Vec4 field.
template <class Field>
Mat4 fd_jacobian(Field&& field, const Vec4& x, double h = 1e-6) {
    Mat4 j;
    for (std::size_t col = 0; col < 4; ++col) {
        Vec4 xp = x, xm = x;
        xp[col] += h;
        xm[col] -= h;
        Vec4 fp, fm;
        field(xp, fp);
        field(xm, fm);
        for (std::size_t row = 0; row < 4; ++row) j(row, col) = (fp[row] - fm[row]) / (2 * h);
    }
    return j;
}

// Complex determinant of a 4x4 (for |det(M - lambda I)| eigenvalue residuals).
inline std::complex<double> det4_complex(std::array<std::complex<double>, 16> m) {
    std::complex<double> det = 1.0;
    for (int c = 0; c < 4; ++c) {
        int piv = c;
        for (int r = c + 1; r < 4; ++r)
            if (std::abs(m[4 * r + c]) > std::abs(m[4 * piv + c])) piv = r;
        if (std::abs(m[4 * piv + c]) == 0.0) return 0.0;
        if (piv != c) {
            for (int k = 0; k < 4; ++k) std::swap(m[4 * piv + k], m[4 * c + k]);
            det = -det;
        }
        det *= m[4 * c + c];
        for (int r = c + 1; r < 4; ++r) {
            const std::complex<double> f = m[4 * r + c] / m[4 * c + c];
            for (int k = c; k < 4; ++k) m[4 * r + k] -= f * m[4 * c + k];
        }
    }
    return det;
}

// Greedy unordered matching; returns the largest pairing distance.
inline double match_unordered(std::vector<std::complex<double>> got,
                              std::vector<std::complex<double>> want) {
    double worst = 0.0;
    for (const auto& w : want) {
        std::size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < got.size(); ++i) {
            const double d = std::abs(got[i] - w);
            if (d < bd) {
                bd = d;
                best = i;
            }
        }
        worst = std::max(worst, bd);
        got.erase(got.begin() + static_cast<long>(best));
    }
    return worst;
}

}  // namespace oracles
