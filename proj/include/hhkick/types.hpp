#pragma once

// Small fixed-size vector/matrix types shared by every module, plus the
// error taxonomy for numerical failures.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace hhkick {

using Vec4 = std::array<double, 4>;

template <std::size_t N>
using VecN = std::array<double, N>;

// 4x4 real matrix, row-major.
struct Mat4 {
    std::array<double, 16> a{};

    double& operator()(std::size_t i, std::size_t j) { return a[4 * i + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[4 * i + j]; }

    static Mat4 identity() {
        Mat4 m;
        for (std::size_t i = 0; i < 4; ++i) m(i, i) = 1.0;
        return m;
    }

    Vec4 row(std::size_t i) const { return {a[4 * i], a[4 * i + 1], a[4 * i + 2], a[4 * i + 3]}; }
    Vec4 col(std::size_t j) const { return {a[j], a[4 + j], a[8 + j], a[12 + j]}; }

    void set_row(std::size_t i, const Vec4& v) {
        for (std::size_t j = 0; j < 4; ++j) a[4 * i + j] = v[j];
    }
    void set_col(std::size_t j, const Vec4& v) {
        for (std::size_t i = 0; i < 4; ++i) a[4 * i + j] = v[i];
    }
};

// ---- elementwise helpers -------------------------------------------------

template <std::size_t N>
inline VecN<N> operator+(const VecN<N>& x, const VecN<N>& y) {
    VecN<N> r;
    for (std::size_t i = 0; i < N; ++i) r[i] = x[i] + y[i];
    return r;
}

template <std::size_t N>
inline VecN<N> operator-(const VecN<N>& x, const VecN<N>& y) {
    VecN<N> r;
    for (std::size_t i = 0; i < N; ++i) r[i] = x[i] - y[i];
    return r;
}

template <std::size_t N>
inline VecN<N> operator*(double s, const VecN<N>& x) {
    VecN<N> r;
    for (std::size_t i = 0; i < N; ++i) r[i] = s * x[i];
    return r;
}

template <std::size_t N>
inline double dot(const VecN<N>& x, const VecN<N>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) s += x[i] * y[i];
    return s;
}

template <std::size_t N>
inline double norm2(const VecN<N>& x) {
    return std::sqrt(dot(x, x));
}

template <std::size_t N>
inline double norm_inf(const VecN<N>& x) {
    double m = 0.0;
    for (std::size_t i = 0; i < N; ++i) m = std::max(m, std::abs(x[i]));
    return m;
}

template <std::size_t N>
inline bool all_finite(const VecN<N>& x) {
    for (std::size_t i = 0; i < N; ++i)
        if (!std::isfinite(x[i])) return false;
    return true;
}

inline bool all_finite(const Mat4& m) {
    for (double v : m.a)
        if (!std::isfinite(v)) return false;
    return true;
}

inline Vec4 mat_vec(const Mat4& m, const Vec4& x) {
    Vec4 r{};
    for (std::size_t i = 0; i < 4; ++i)
        r[i] = m.a[4 * i] * x[0] + m.a[4 * i + 1] * x[1] + m.a[4 * i + 2] * x[2] +
               m.a[4 * i + 3] * x[3];
    return r;
}

// m^T x without forming the transpose.
inline Vec4 mat_tvec(const Mat4& m, const Vec4& x) {
    Vec4 r{};
    for (std::size_t j = 0; j < 4; ++j)
        r[j] = m.a[j] * x[0] + m.a[4 + j] * x[1] + m.a[8 + j] * x[2] + m.a[12 + j] * x[3];
    return r;
}

inline Mat4 mat_mul(const Mat4& l, const Mat4& r) {
    Mat4 p;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) s += l(i, k) * r(k, j);
            p(i, j) = s;
        }
    return p;
}

inline Mat4 transpose(const Mat4& m) {
    Mat4 t;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) t(i, j) = m(j, i);
    return t;
}

// ---- error taxonomy ------------------------------------------------------

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Required step fell below IntegratorConfig::min_step (stiffness/blow-up).
struct StepUnderflow : NumericalError {
    explicit StepUnderflow(const std::string& what) : NumericalError(what) {}
};

// A state component became NaN/Inf during integration.
struct NonFiniteState : NumericalError {
    explicit NonFiniteState(const std::string& what) : NumericalError(what) {}
};

// An iteration failed to meet its convergence criterion within its budget.
struct NoConvergence : NumericalError {
    explicit NoConvergence(const std::string& what) : NumericalError(what) {}
};

// No attracting periodic orbit found (trajectory settles on a fixed point).
struct NoCycle : NumericalError {
    explicit NoCycle(const std::string& what) : NumericalError(what) {}
};

// Point failed to approach the limit cycle within the iteration budget.
struct NotInBasin : NumericalError {
    explicit NotInBasin(const std::string& what) : NumericalError(what) {}
};

// Driven orbit left the physically meaningful region.
struct OrbitEscaped : NumericalError {
    explicit OrbitEscaped(const std::string& what) : NumericalError(what) {}
};

// Bracket handed to a 1-D minimization contains no interior minimum.
struct NoMinimumInBracket : NumericalError {
    explicit NoMinimumInBracket(const std::string& what) : NumericalError(what) {}
};

}  // namespace hhkick
