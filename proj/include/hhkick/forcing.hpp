#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include <hhkick/integrate.hpp>
#include <hhkick/linalg.hpp>
#include <hhkick/models.hpp>

namespace hhkick {

enum class KickShape { Impulse, Box };

// A voltage kick: an instantaneous jump v -> v + A, or a box pulse of the
// same total delivered charge spread over t0 (height A / t0).
struct KickSpec {
    double amplitude = 0.0;
    KickShape shape = KickShape::Impulse;
    double t0 = 0.0;  // box duration, ms

    void validate() const {
        if (!std::isfinite(amplitude)) throw std::invalid_argument("kick amplitude");
        if (shape == KickShape::Box && !(t0 > 0.0))
            throw std::invalid_argument("box kick requires t0 > 0");
    }
};

struct DriveConfig {
    KickSpec kick;
    double T = 0.0;  // drive period, ms

    void validate() const {
        kick.validate();
        if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("drive period");
        if (kick.shape == KickShape::Box && T < kick.t0)
            throw std::invalid_argument("drive period shorter than the pulse");
    }
};

namespace detail {

// Free flow for time t.
inline Vec4 hh_flow(const Vec4& x, double t, const HHParams& p,
                    const IntegratorConfig& cfg) {
    if (t <= 0.0) return x;
    auto f = [&p](const Vec4& xx, Vec4& dx) { dx = hh_field(xx, p); };
    return rkf45<4>(f, x, 0.0, t, cfg).x;
}

// Flow under the field augmented with a constant extra current on v'.
inline Vec4 hh_flow_boxed(const Vec4& x, double t, double height, const HHParams& p,
                          const IntegratorConfig& cfg) {
    if (t <= 0.0) return x;
    const double hc = height / p.c;
    auto f = [&p, hc](const Vec4& xx, Vec4& dx) {
        dx = hh_field(xx, p);
        dx[0] += hc;
    };
    return rkf45<4>(f, x, 0.0, t, cfg).x;
}

}  // namespace detail

// Apply one kick. The box variant evolves the state during delivery, so its
// result includes t0 of (driven) dynamics.
inline Vec4 kick(const Vec4& x, const KickSpec& k, const HHParams& p,
                 const IntegratorConfig& cfg = {}) {
    k.validate();
    if (k.shape == KickShape::Impulse) {
        Vec4 y = x;
        y[0] += k.amplitude;
        return y;
    }
    return detail::hh_flow_boxed(x, k.t0, k.amplitude / k.t0, p, cfg);
}

// Stroboscopic map: kick, then free flow to the next kick time. Pre-kick
// sampling convention: the result is the state immediately before the next
// kick arrives.
inline Vec4 time_T_map(const Vec4& x, const DriveConfig& d, const HHParams& p,
                       const IntegratorConfig& cfg = {}) {
    d.validate();
    const Vec4 y = kick(x, d.kick, p, cfg);
    const double free_time =
        (d.kick.shape == KickShape::Box) ? d.T - d.kick.t0 : d.T;
    return detail::hh_flow(y, free_time, p, cfg);
}

// One stroboscopic step together with a unit tangent direction and the log
// of its growth factor under the step's derivative. The kick derivative is
// the identity for impulses (gates untouched, v shifted rigidly); box-pulse
// delivery is part of the flow and is differentiated through.
struct DrivenStep {
    Vec4 x{};
    Vec4 w{};              // unit tangent direction after the step
    double log_growth = 0.0;
};

inline DrivenStep time_T_map_tangent(const Vec4& x, const Vec4& w, const DriveConfig& d,
                                     const HHParams& p, const IntegratorConfig& cfg = {}) {
    d.validate();
    auto field = [&p](const Vec4& xx, Vec4& dx) { dx = hh_field(xx, p); };
    auto jac = [&p](const Vec4& xx) { return hh_jacobian(xx, p); };

    DrivenStep out;
    if (d.kick.shape == KickShape::Impulse) {
        Vec4 y = x;
        y[0] += d.kick.amplitude;
        const TangentResult r =
            integrate_with_tangent_scaled(field, jac, y, w, d.T, cfg);
        out.x = r.x;
        out.w = r.w;
        out.log_growth = r.log_scale;
        return out;
    }
    const double hc = d.kick.amplitude / d.kick.t0 / p.c;
    auto boxed = [&p, hc](const Vec4& xx, Vec4& dx) {
        dx = hh_field(xx, p);
        dx[0] += hc;
    };
    const TangentResult r1 =
        integrate_with_tangent_scaled(boxed, jac, x, w, d.kick.t0, cfg);
    const TangentResult r2 =
        integrate_with_tangent_scaled(field, jac, r1.x, r1.w, d.T - d.kick.t0, cfg);
    out.x = r2.x;
    out.w = r2.w;
    out.log_growth = r1.log_scale + r2.log_scale;
    return out;
}

// Pre-kick snapshots of the driven system: orbit[k] = F_T^{k+1}(x0).
inline std::vector<Vec4> driven_orbit(const Vec4& x0, const DriveConfig& d,
                                      const HHParams& p, int n,
                                      const IntegratorConfig& cfg = {}) {
    if (n < 1) throw std::invalid_argument("driven_orbit: n >= 1");
    std::vector<Vec4> orbit(static_cast<std::size_t>(n));
    Vec4 x = x0;
    for (auto& snap : orbit) {
        x = time_T_map(x, d, p, cfg);
        if (!all_finite(x)) throw NonFiniteState("driven_orbit");
        snap = x;
    }
    return orbit;
}

struct DrivenOrbitTangent {
    std::vector<Vec4> x;            // pre-kick snapshots
    std::vector<Vec4> w;            // unit tangent directions
    std::vector<double> log_growth;  // per-step log growth factors
};

inline DrivenOrbitTangent driven_orbit_tangent(const Vec4& x0, const Vec4& w0,
                                               const DriveConfig& d, const HHParams& p,
                                               int n, const IntegratorConfig& cfg = {}) {
    if (n < 1) throw std::invalid_argument("driven_orbit_tangent: n >= 1");
    DrivenOrbitTangent out;
    out.x.resize(static_cast<std::size_t>(n));
    out.w.resize(static_cast<std::size_t>(n));
    out.log_growth.resize(static_cast<std::size_t>(n));
    Vec4 x = x0;
    Vec4 w = w0;
    for (std::size_t k = 0; k < out.x.size(); ++k) {
        const DrivenStep st = time_T_map_tangent(x, w, d, p, cfg);
        if (!all_finite(st.x)) throw NonFiniteState("driven_orbit_tangent");
        x = st.x;
        w = st.w;
        out.x[k] = x;
        out.w[k] = w;
        out.log_growth[k] = st.log_growth;
    }
    return out;
}

namespace detail {

// State and full variational matrix across one stroboscopic step.
inline std::pair<Vec4, Mat4> time_T_map_jacobian(const Vec4& x, const DriveConfig& d,
                                                 const HHParams& p,
                                                 const IntegratorConfig& cfg) {
    auto make_aug = [&p](double extra) {
        return [&p, extra](const VecN<20>& y, VecN<20>& dy) {
            const Vec4 xx{y[0], y[1], y[2], y[3]};
            Vec4 dx = hh_field(xx, p);
            dx[0] += extra;
            const Mat4 j = hh_jacobian(xx, p);
            Mat4 w;
            for (std::size_t i = 0; i < 16; ++i) w.a[i] = y[4 + i];
            const Mat4 dw = mat_mul(j, w);
            for (std::size_t i = 0; i < 4; ++i) dy[i] = dx[i];
            for (std::size_t i = 0; i < 16; ++i) dy[4 + i] = dw.a[i];
        };
    };
    VecN<20> y{};
    Vec4 x1 = x;
    if (d.kick.shape == KickShape::Impulse) x1[0] += d.kick.amplitude;
    for (std::size_t i = 0; i < 4; ++i) y[i] = x1[i];
    const Mat4 eye = Mat4::identity();
    for (std::size_t i = 0; i < 16; ++i) y[4 + i] = eye.a[i];

    if (d.kick.shape == KickShape::Box) {
        auto aug = make_aug(d.kick.amplitude / d.kick.t0 / p.c);
        y = rkf45<20>(aug, y, 0.0, d.kick.t0, cfg, detail::StateTangentError<4, 16>{}).x;
    }
    const double free_time =
        (d.kick.shape == KickShape::Box) ? d.T - d.kick.t0 : d.T;
    if (free_time > 0.0) {
        auto aug = make_aug(0.0);
        y = rkf45<20>(aug, y, 0.0, free_time, cfg, detail::StateTangentError<4, 16>{}).x;
    }
    Vec4 xe{y[0], y[1], y[2], y[3]};
    Mat4 m;
    for (std::size_t i = 0; i < 16; ++i) m.a[i] = y[4 + i];
    return {xe, m};
}

}  // namespace detail

// Newton polish of a period-q point of the stroboscopic map. Starts from x
// and drives ||F_T^q(x) - x|| below tol.
inline Vec4 refine_periodic_orbit(Vec4 x, const DriveConfig& d, const HHParams& p, int q,
                                  const IntegratorConfig& cfg = {}, double tol = 1e-10,
                                  int max_iter = 30) {
    d.validate();
    if (q < 1) throw std::invalid_argument("refine_periodic_orbit: q >= 1");
    for (int it = 0; it < max_iter; ++it) {
        Vec4 z = x;
        Mat4 dfq = Mat4::identity();
        for (int k = 0; k < q; ++k) {
            auto [zn, dz] = detail::time_T_map_jacobian(z, d, p, cfg);
            z = zn;
            dfq = mat_mul(dz, dfq);
        }
        const Vec4 g = z - x;
        if (norm2(g) < tol) return x;
        Mat4 m = dfq;
        for (std::size_t i = 0; i < 4; ++i) m(i, i) -= 1.0;
        const Vec4 step = solve4(m, g);
        x = x - step;
        if (!all_finite(x)) throw NonFiniteState("refine_periodic_orbit");
    }
    throw NoConvergence("refine_periodic_orbit: Newton did not reach tolerance");
}

}  // namespace hhkick
