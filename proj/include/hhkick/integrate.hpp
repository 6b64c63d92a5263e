#pragma once

// Adaptive Runge-Kutta-Fehlberg 4(5) integration for small autonomous systems,
// plus joint state+tangent propagation via the variational equations.
//
// Step acceptance uses the embedded 4th-order error estimate in sup norm;
// the 5th-order solution is the one propagated.

#include <cstddef>
#include <limits>
#include <type_traits>
#include <utility>

#include "types.hpp"

namespace hhkick {

struct IntegratorConfig {
    double abs_tolerance = 1e-6;  // sup-norm error per step
    double initial_step = 1e-2;   // ms
    double max_step = 1.0;        // ms
    double min_step = 1e-12;      // ms

    void validate() const {
        if (!(abs_tolerance > 0.0)) throw std::invalid_argument("abs_tolerance must be > 0");
        if (!(0.0 < min_step && min_step <= initial_step && initial_step <= max_step))
            throw std::invalid_argument("need 0 < min_step <= initial_step <= max_step");
    }
};

template <std::size_t N>
struct StepInfo {
    double t0, t1;
    const VecN<N>& x0;
    const VecN<N>& x1;
    const VecN<N>& f0;  // field at (t0, x0)
    const VecN<N>& f1;  // field at (t1, x1)
};

template <std::size_t N>
struct IntegrateResult {
    VecN<N> x;
    double t = 0.0;
    bool stopped_early = false;  // a step callback returned false
};

namespace detail {

struct NullStepCallback {
    template <std::size_t N>
    bool operator()(const StepInfo<N>&) const {
        return true;
    }
};

struct SupNormError {
    template <std::size_t N>
    double operator()(const VecN<N>&, const VecN<N>& err) const {
        return norm_inf(err);
    }
};

}  // namespace detail

// Cubic Hermite interpolation over one accepted step.
template <std::size_t N>
inline VecN<N> hermite_eval(double t0, double t1, const VecN<N>& x0, const VecN<N>& x1,
                            const VecN<N>& f0, const VecN<N>& f1, double t) {
    const double h = t1 - t0;
    const double s = (t - t0) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    VecN<N> r;
    for (std::size_t i = 0; i < N; ++i)
        r[i] = h00 * x0[i] + h * h10 * f0[i] + h01 * x1[i] + h * h11 * f1[i];
    return r;
}

// Core stepper. `field(x, dx)` evaluates the vector field; `err_measure(x_new,
// err_vec)` converts the embedded error estimate into a scalar compared against
// abs_tolerance; `on_step` receives every accepted step and may return false to
// stop early. Integration runs from t_start to t_end >= t_start, landing on
// t_end exactly (final step truncated).
template <std::size_t N, class Field, class ErrMeasure = detail::SupNormError,
          class StepCallback = detail::NullStepCallback>
IntegrateResult<N> rkf45(Field&& field, VecN<N> x, double t_start, double t_end,
                         const IntegratorConfig& cfg, ErrMeasure&& err_measure = {},
                         StepCallback&& on_step = {}) {
    cfg.validate();
    if (!(t_end >= t_start)) throw std::invalid_argument("t_end must be >= t_start");
    if (!all_finite(x)) throw NonFiniteState("non-finite initial state");

    // Fehlberg tableau.
    constexpr double a21 = 1.0 / 4.0;
    constexpr double a31 = 3.0 / 32.0, a32 = 9.0 / 32.0;
    constexpr double a41 = 1932.0 / 2197.0, a42 = -7200.0 / 2197.0, a43 = 7296.0 / 2197.0;
    constexpr double a51 = 439.0 / 216.0, a52 = -8.0, a53 = 3680.0 / 513.0,
                     a54 = -845.0 / 4104.0;
    constexpr double a61 = -8.0 / 27.0, a62 = 2.0, a63 = -3544.0 / 2565.0,
                     a64 = 1859.0 / 4104.0, a65 = -11.0 / 40.0;
    constexpr double b1 = 16.0 / 135.0, b3 = 6656.0 / 12825.0, b4 = 28561.0 / 56430.0,
                     b5 = -9.0 / 50.0, b6 = 2.0 / 55.0;
    // 5th-order weights minus 4th-order weights (error estimate).
    constexpr double d1 = 1.0 / 360.0, d3 = -128.0 / 4275.0, d4 = -2197.0 / 75240.0,
                     d5 = 1.0 / 50.0, d6 = 2.0 / 55.0;

    double t = t_start;
    const double t_eps = 1e-14 * std::max(1.0, std::abs(t_end));
    double h = std::min(cfg.initial_step, cfg.max_step);

    VecN<N> k1, k2, k3, k4, k5, k6, xs, x_new, err_vec, f_new;
    field(x, k1);
    if (!all_finite(k1)) throw NonFiniteState("non-finite field at initial state");

    while (t < t_end - t_eps) {
        if (t + h >= t_end) h = t_end - t;

        for (std::size_t i = 0; i < N; ++i) xs[i] = x[i] + h * a21 * k1[i];
        field(xs, k2);
        for (std::size_t i = 0; i < N; ++i) xs[i] = x[i] + h * (a31 * k1[i] + a32 * k2[i]);
        field(xs, k3);
        for (std::size_t i = 0; i < N; ++i)
            xs[i] = x[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        field(xs, k4);
        for (std::size_t i = 0; i < N; ++i)
            xs[i] = x[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        field(xs, k5);
        for (std::size_t i = 0; i < N; ++i)
            xs[i] = x[i] +
                    h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        field(xs, k6);

        bool finite = true;
        for (std::size_t i = 0; i < N; ++i) {
            x_new[i] = x[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] +
                                   b6 * k6[i]);
            err_vec[i] =
                h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i]);
            finite = finite && std::isfinite(x_new[i]) && std::isfinite(err_vec[i]);
        }

        double err = finite ? err_measure(x_new, err_vec)
                            : std::numeric_limits<double>::infinity();

        if (finite && err <= cfg.abs_tolerance) {
            field(x_new, f_new);
            if (!all_finite(f_new)) throw NonFiniteState("non-finite field value");
            const double t1 = t + h;
            const bool keep_going = on_step(StepInfo<N>{t, t1, x, x_new, k1, f_new});
            t = t1;
            x = x_new;
            k1 = f_new;  // first stage of the next step
            if (!keep_going) return {x, t, true};
            double factor = (err > 0.0) ? 0.9 * std::pow(cfg.abs_tolerance / err, 0.2) : 5.0;
            factor = std::min(5.0, std::max(0.2, factor));
            h = std::min(cfg.max_step, std::max(cfg.min_step, h * factor));
        } else {
            if (!finite && h <= cfg.min_step * (1.0 + 1e-12))
                throw NonFiniteState("non-finite state at minimal step size");
            double factor =
                finite ? std::max(0.1, 0.9 * std::pow(cfg.abs_tolerance / err, 0.2)) : 0.1;
            h *= factor;
            if (h < cfg.min_step)
                throw StepUnderflow("required step below min_step at t=" + std::to_string(t));
        }
    }
    return {x, t_end, false};
}

// State at t_end for a 4-dimensional autonomous field.
template <class Field, class StepCallback>
Vec4 integrate(Field&& field, const Vec4& x0, double t_end, const IntegratorConfig& cfg,
               StepCallback&& on_step) {
    return rkf45<4>(std::forward<Field>(field), x0, 0.0, t_end, cfg, detail::SupNormError{},
                    std::forward<StepCallback>(on_step))
        .x;
}

template <class Field>
Vec4 integrate(Field&& field, const Vec4& x0, double t_end, const IntegratorConfig& cfg) {
    return integrate(std::forward<Field>(field), x0, t_end, cfg, detail::NullStepCallback{});
}

namespace detail {

// Error measure for (state, tangent) systems: absolute on the state block,
// relative on the tangent block once the tangent grows beyond unit size, so a
// large tangent cannot starve the step size.
template <std::size_t NS, std::size_t NT>
struct StateTangentError {
    double operator()(const VecN<NS + NT>& x_new, const VecN<NS + NT>& err) const {
        double es = 0.0;
        for (std::size_t i = 0; i < NS; ++i) es = std::max(es, std::abs(err[i]));
        double wmax = 0.0;
        for (std::size_t i = NS; i < NS + NT; ++i) wmax = std::max(wmax, std::abs(x_new[i]));
        const double scale = std::max(1.0, wmax);
        double et = 0.0;
        for (std::size_t i = NS; i < NS + NT; ++i) et = std::max(et, std::abs(err[i]));
        return std::max(es, et / scale);
    }
};

// Error measure over the leading state block only. Step selection must not
// depend on the tangent at all where exact linearity in w0 is required: the
// map w0 -> w(t) is then one fixed linear map per trajectory.
template <std::size_t NS, std::size_t NT>
struct StateBlockError {
    double operator()(const VecN<NS + NT>&, const VecN<NS + NT>& err) const {
        double es = 0.0;
        for (std::size_t i = 0; i < NS; ++i) es = std::max(es, std::abs(err[i]));
        return es;
    }
};

}  // namespace detail

struct TangentResult {
    Vec4 x;
    Vec4 w;            // renormalized tangent direction
    double log_scale;  // true tangent = exp(log_scale) * w
};

// Joint propagation of phi_t(x0) and D phi_t(x0) w0, with the tangent rescaled
// to unit size whenever its norm leaves [1e-150, 1e150]; the accumulated log
// factor is returned separately so 1000-iterate products cannot overflow.
template <class Field, class Jacobian>
TangentResult integrate_with_tangent_scaled(Field&& field, Jacobian&& jacobian,
                                            const Vec4& x0, const Vec4& w0, double t_end,
                                            const IntegratorConfig& cfg) {
    VecN<8> y{};
    for (std::size_t i = 0; i < 4; ++i) y[i] = x0[i];
    double log_scale = 0.0;
    {
        const double n0 = norm2(w0);
        if (n0 == 0.0) {
            Vec4 x = integrate(field, x0, t_end, cfg);
            return {x, {0, 0, 0, 0}, 0.0};
        }
        for (std::size_t i = 0; i < 4; ++i) y[4 + i] = w0[i] / n0;
        log_scale = std::log(n0);
    }

    auto combined = [&](const VecN<8>& s, VecN<8>& ds) {
        Vec4 x{s[0], s[1], s[2], s[3]};
        Vec4 w{s[4], s[5], s[6], s[7]};
        Vec4 dx, dw;
        field(x, dx);
        Mat4 j = jacobian(x);
        dw = mat_vec(j, w);
        for (std::size_t i = 0; i < 4; ++i) {
            ds[i] = dx[i];
            ds[4 + i] = dw[i];
        }
    };

    double t = 0.0;
    while (t < t_end) {
        auto out_of_range = [](const VecN<8>& s) {
            double n = std::sqrt(s[4] * s[4] + s[5] * s[5] + s[6] * s[6] + s[7] * s[7]);
            return n > 1e150 || (n < 1e-150 && n > 0.0);
        };
        auto res = rkf45<8>(
            combined, y, t, t_end, cfg, detail::StateBlockError<4, 4>{},
            [&](const StepInfo<8>& st) { return !out_of_range(st.x1); });
        y = res.x;
        t = res.t;
        double n = std::sqrt(y[4] * y[4] + y[5] * y[5] + y[6] * y[6] + y[7] * y[7]);
        if (n == 0.0) {  // cannot happen for w0 != 0; kept for completeness
            Vec4 x{y[0], y[1], y[2], y[3]};
            x = rkf45<4>(field, x, t, t_end, cfg).x;
            return {x, {0, 0, 0, 0}, 0.0};
        }
        if (res.stopped_early || t >= t_end) {
            log_scale += std::log(n);
            for (std::size_t i = 4; i < 8; ++i) y[i] /= n;
        }
    }
    Vec4 x{y[0], y[1], y[2], y[3]};
    Vec4 w{y[4], y[5], y[6], y[7]};
    return {x, w, log_scale};
}

// (phi_t(x0), D phi_t(x0) w0) with the tangent advanced on the same accepted
// steps as the base state.
template <class Field, class Jacobian>
std::pair<Vec4, Vec4> integrate_with_tangent(Field&& field, Jacobian&& jacobian,
                                             const Vec4& x0, const Vec4& w0, double t_end,
                                             const IntegratorConfig& cfg) {
    TangentResult r = integrate_with_tangent_scaled(field, jacobian, x0, w0, t_end, cfg);
    const double s = std::exp(r.log_scale);
    return {r.x, {s * r.w[0], s * r.w[1], s * r.w[2], s * r.w[3]}};
}

}  // namespace hhkick
