#pragma once

// Hodgkin-Huxley vector field in the original 1952 sign convention
// (v = outside - inside, action potentials are downward spikes), with analytic
// Jacobian and fixed-point solver, plus a linear shear oscillator on the
// cylinder used as an analytically transparent test fixture.

#include <cmath>
#include <functional>

#include "linalg.hpp"
#include "types.hpp"

namespace hhkick {

// State layout: x = (v, m, n, h). Voltage in mV, gates dimensionless.
struct HHParams {
    double v_na = -115.0;   // mV
    double g_na = 120.0;    // mOhm^-1 / cm^2
    double v_k = 12.0;      // mV
    double g_k = 36.0;      // mOhm^-1 / cm^2
    double v_leak = -10.613;
    double g_leak = 0.3;
    double c = 1.0;   // uF / cm^2
    double i = 14.0;  // injected current density, uA / cm^2

    void validate() const {
        if (!(g_na > 0.0 && g_k > 0.0 && g_leak > 0.0 && c > 0.0))
            throw std::invalid_argument("conductances and capacitance must be > 0");
    }
};

struct RateSet {
    double alpha_m, beta_m, alpha_n, beta_n, alpha_h, beta_h;  // ms^-1
};

namespace detail {

// psi(u) = u / (e^u - 1), extended across the removable singularity at 0.
inline double psi(double u) {
    if (std::abs(u) < 1e-4) return 1.0 - 0.5 * u + u * u / 12.0;
    return u / std::expm1(u);
}

// d psi / du, with the matching series branch near 0.
inline double dpsi(double u) {
    if (std::abs(u) < 1e-4) return -0.5 + u / 6.0;
    const double e = std::expm1(u);
    return (e - u * (e + 1.0)) / (e * e);
}

}  // namespace detail

inline RateSet hh_rates(double v) {
    RateSet r;
    r.alpha_m = detail::psi((v + 25.0) / 10.0);
    r.beta_m = 4.0 * std::exp(v / 18.0);
    r.alpha_n = 0.1 * detail::psi((v + 10.0) / 10.0);
    r.beta_n = 0.125 * std::exp(v / 80.0);
    r.alpha_h = 0.07 * std::exp(v / 20.0);
    r.beta_h = 1.0 / (1.0 + std::exp((v + 30.0) / 10.0));
    return r;
}

inline Vec4 hh_field(const Vec4& x, const HHParams& p) {
    const double v = x[0], m = x[1], n = x[2], h = x[3];
    const RateSet r = hh_rates(v);
    const double n2 = n * n, n4 = n2 * n2, m3 = m * m * m;
    Vec4 dx;
    dx[0] = (-p.i - p.g_k * n4 * (v - p.v_k) - p.g_na * m3 * h * (v - p.v_na) -
             p.g_leak * (v - p.v_leak)) /
            p.c;
    dx[1] = r.alpha_m * (1.0 - m) - r.beta_m * m;
    dx[2] = r.alpha_n * (1.0 - n) - r.beta_n * n;
    dx[3] = r.alpha_h * (1.0 - h) - r.beta_h * h;
    return dx;
}

inline Mat4 hh_jacobian(const Vec4& x, const HHParams& p) {
    const double v = x[0], m = x[1], n = x[2], h = x[3];
    const RateSet r = hh_rates(v);
    const double n2 = n * n, n3 = n2 * n, n4 = n2 * n2, m2 = m * m, m3 = m2 * m;

    // Voltage derivatives of the rates.
    const double dam = detail::dpsi((v + 25.0) / 10.0) / 10.0;
    const double dbm = r.beta_m / 18.0;
    const double dan = 0.1 * detail::dpsi((v + 10.0) / 10.0) / 10.0;
    const double dbn = r.beta_n / 80.0;
    const double dah = r.alpha_h / 20.0;
    const double ebh = std::exp((v + 30.0) / 10.0);
    const double dbh = -0.1 * ebh * r.beta_h * r.beta_h;

    Mat4 j{};
    j(0, 0) = (-p.g_k * n4 - p.g_na * m3 * h - p.g_leak) / p.c;
    j(0, 1) = -3.0 * p.g_na * m2 * h * (v - p.v_na) / p.c;
    j(0, 2) = -4.0 * p.g_k * n3 * (v - p.v_k) / p.c;
    j(0, 3) = -p.g_na * m3 * (v - p.v_na) / p.c;

    j(1, 0) = dam * (1.0 - m) - dbm * m;
    j(1, 1) = -(r.alpha_m + r.beta_m);

    j(2, 0) = dan * (1.0 - n) - dbn * n;
    j(2, 2) = -(r.alpha_n + r.beta_n);

    j(3, 0) = dah * (1.0 - h) - dbh * h;
    j(3, 3) = -(r.alpha_h + r.beta_h);
    return j;
}

// Gate steady states at a given voltage; handy initial guesses.
inline Vec4 hh_gate_steady_state(double v) {
    const RateSet r = hh_rates(v);
    return {v, r.alpha_m / (r.alpha_m + r.beta_m), r.alpha_n / (r.alpha_n + r.beta_n),
            r.alpha_h / (r.alpha_h + r.beta_h)};
}

// Damped Newton on the field. The rest state near I = 14 is a saddle-focus, so
// plain Newton from rough guesses can overshoot; steps are halved until the
// residual decreases.
inline Vec4 find_fixed_point(const HHParams& p, Vec4 guess) {
    p.validate();
    double res = norm2(hh_field(guess, p));
    for (int it = 0; it < 100; ++it) {
        if (res < 1e-12) break;
        const Mat4 j = hh_jacobian(guess, p);
        const Vec4 f = hh_field(guess, p);
        const Vec4 step = solve4(j, {-f[0], -f[1], -f[2], -f[3]});
        double alpha = 1.0;
        Vec4 next = guess;
        double next_res = res;
        for (int halving = 0; halving < 40; ++halving) {
            Vec4 cand = guess + (alpha * step);
            const double cand_res = norm2(hh_field(cand, p));
            if (cand_res < res) {
                next = cand;
                next_res = cand_res;
                break;
            }
            alpha *= 0.5;
        }
        if (next_res >= res) break;  // stalled; final residual check decides
        guess = next;
        res = next_res;
    }
    if (!(res < 1e-10)) throw NoConvergence("find_fixed_point: residual did not reach 1e-10");
    for (std::size_t g = 1; g < 4; ++g)
        if (!(guess[g] > 0.0 && guess[g] < 1.0))
            throw NoConvergence("find_fixed_point: gate left (0,1)");
    return guess;
}

inline Vec4 find_fixed_point(const HHParams& p) {
    return find_fixed_point(p, hh_gate_steady_state(0.0));
}

// ---- linear shear oscillator on the cylinder -----------------------------
//
// theta'' + lambda theta' = mu between kicks; a kick adds
// A * profile(theta) to the angular velocity (radial direction only).
// Closed forms for the unkicked flow make this a transparent fixture.

struct ShearModel {
    double lambda = 1.0;  // damping, > 0
    double mu = 1.0;      // constant torque
    double amplitude = 0.0;
    std::function<double(double)> profile = [](double theta) { return std::sin(theta); };

    void validate() const {
        if (!(lambda > 0.0)) throw std::invalid_argument("shear: lambda must be > 0");
    }
};

using Shear2 = VecN<2>;  // (theta, theta_dot)

inline Shear2 shear_field(const Shear2& s, const ShearModel& model) {
    return {s[1], model.mu - model.lambda * s[1]};
}

inline Shear2 shear_kick(const Shear2& s, const ShearModel& model) {
    return {s[0], s[1] + model.amplitude * model.profile(s[0])};
}

// Exact unkicked flow: theta_dot relaxes to mu/lambda at rate lambda.
inline Shear2 shear_flow_exact(const Shear2& s, const ShearModel& model, double t) {
    const double vinf = model.mu / model.lambda;
    const double dev = s[1] - vinf;
    const double decay = std::exp(-model.lambda * t);
    return {s[0] + vinf * t + dev * (1.0 - decay) / model.lambda, vinf + dev * decay};
}

}  // namespace hhkick
