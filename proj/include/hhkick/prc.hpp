#pragma once

// Finite phase-resetting curves computed by projecting kicked points back to
// the limit cycle along strong-stable subspaces, plus the analyses built on
// them: lifts and winding numbers, first-return maps and plateau sinks, the
// derivative factor decomposition, the critical kick amplitude, and
// horseshoe-interval detection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <hhkick/cycle.hpp>
#include <hhkick/forcing.hpp>
#include <hhkick/optimize.hpp>

namespace hhkick {

struct PRCurve {
    double A = 0.0;
    double T0 = 0.0;
    double T = 0.0;      // shift applied to the normal form (0: the curve f_0)
    double delta = 0.1;  // refinement target for adjacent value gaps
    int winding = 0;
    std::vector<double> grid;    // ascending phases in [0, T0)
    std::vector<double> lift;    // continuous lift at the grid phases
    std::vector<double> values;  // lift wrapped into [0, T0)
    // gap_frontier[i] == 1 marks the gap grid[i] -> grid[i+1] (the last entry
    // wraps around) as unresolved at the refinement budget.
    std::vector<std::uint8_t> gap_frontier;
    std::vector<double> not_in_basin;  // phases whose kicked orbit never landed

    double wrap(double th) const {
        th = std::fmod(th, T0);
        if (th < 0.0) th += T0;
        return th;
    }

    // Piecewise-linear evaluation of the lift on the periodic extension
    // (lift(th + T0) = lift(th) + winding * T0).
    double lift_at(double theta) const {
        const double base = grid.front();
        const double k = std::floor((theta - base) / T0);
        const double u = theta - k * T0;
        const double off = k * static_cast<double>(winding) * T0;
        auto it = std::upper_bound(grid.begin(), grid.end(), u);
        const std::size_t i = static_cast<std::size_t>(it - grid.begin()) - 1;
        double tl = grid[i], vl = lift[i], tr, vr;
        if (i + 1 < grid.size()) {
            tr = grid[i + 1];
            vr = lift[i + 1];
        } else {
            tr = grid.front() + T0;
            vr = lift.front() + static_cast<double>(winding) * T0;
        }
        if (tr == tl) return vl + off;
        return vl + (vr - vl) * (u - tl) / (tr - tl) + off;
    }

    double value_at(double theta) const { return wrap(lift_at(theta)); }
};

namespace detail {

// Landing machinery for one kicked point: flow whole periods until the orbit
// is inside the acceptance neighborhood of the cycle and lies on a linear
// strong-stable subspace; the phase there, minus the elapsed time (a multiple
// of T0, hence zero mod T0), is the resetting value.
struct PrcLander {
    const LimitCycle& c;
    double dist_gate = 1e-4;
    double angle_gate = 1e-3;
    int max_periods = 150;

    std::optional<double> land(Vec4 y) const {
        const HHParams p = c.params;
        auto field = [&p](const Vec4& x, Vec4& dx) { dx = hh_field(x, p); };
        const double dtc = c.cell_width();
        for (int k = 0; k < max_periods; ++k) {
            y = rkf45<4>(field, y, 0.0, c.T0, c.cfg).x;
            if (!all_finite(y) || std::abs(y[0]) > 1e3) return std::nullopt;
            const CycleProjection proj = project_to_cycle(y, c);
            if (proj.dist > 8.0 * dist_gate) continue;

            // Interpolation-free distance minimizer.
            auto q = [&](double th) { return norm2(c.point_at_exact(c.wrap(th)) - y); };
            double a = proj.theta - 1.5 * dtc, b = proj.theta + 1.5 * dtc;
            for (int it = 0; it < 50; ++it) {
                const double m1 = a + 0.381966011250105 * (b - a);
                const double m2 = b - 0.381966011250105 * (b - a);
                if (q(m1) < q(m2))
                    b = m2;
                else
                    a = m1;
            }
            const double th_min = 0.5 * (a + b);
            if (q(th_min) > dist_gate) continue;

            // Subspace membership: the fiber base solves
            // <y - gamma(th), n(th)> = 0 with n the unit normal of E_ss.
            auto g = [&](double th) {
                const double w = c.wrap(th);
                return dot(y - c.point_at_exact(w), c.normal_at(w));
            };
            double ra = th_min - 1.5 * dtc, rb = th_min + 1.5 * dtc;
            double ga = g(ra), gb = g(rb);
            if (ga == 0.0) return c.wrap(ra);
            if (gb == 0.0) return c.wrap(rb);
            if (ga * gb > 0.0) continue;  // no fiber base nearby yet
            for (int it = 0; it < 45; ++it) {
                const double rm = 0.5 * (ra + rb);
                const double gm = g(rm);
                if (gm == 0.0) {
                    ra = rb = rm;
                    break;
                }
                (ga * gm <= 0.0 ? rb : ra) = rm;
            }
            const double th_star = c.wrap(0.5 * (ra + rb));
            const Vec4 w = y - c.point_at_exact(th_star);
            const double wn = norm2(w);
            if (wn > dist_gate) continue;
            // Below the integrator noise floor the direction of w is
            // meaningless; such points sit on the cycle for any purpose.
            if (wn > 2e-5 &&
                std::asin(std::min(1.0, std::abs(dot(w, c.normal_at(th_star))) / wn)) >
                    angle_gate)
                continue;
            return th_star;
        }
        return std::nullopt;
    }
};

inline double circle_gap(double a, double b, double period) {
    const double d = std::abs(a - b);
    return std::min(d, period - d);
}

// Signed increment of minimal magnitude taking a to b on the circle.
inline double circle_increment(double a, double b, double period) {
    double d = std::fmod(b - a, period);
    if (d > 0.5 * period) d -= period;
    if (d <= -0.5 * period) d += period;
    return d;
}

}  // namespace detail

// Phase-resetting curve of the impulse kick v -> v + A in the T-independent
// normal form f_0 (any f_T is f_0 + T mod T0). The evaluation grid is refined
// by bisection until adjacent values differ by at most delta; cells still
// unresolved after 20 levels are flagged as frontier instead of looping.
inline PRCurve compute_prc(double A, const LimitCycle& c, const HHParams& p,
                           double delta = 0.1) {
    if (!c.has_frames)
        throw std::invalid_argument("compute_prc: strong-stable frames required");
    if (!(delta > 0.0)) throw std::invalid_argument("compute_prc: delta must be > 0");
    (void)p;

    const detail::PrcLander lander{c};
    KickSpec kick_spec;
    kick_spec.amplitude = A;
    auto eval = [&](double theta) {
        return lander.land(kick(c.point_at_exact(theta), kick_spec, c.params));
    };

    std::map<double, std::optional<double>> pts;
    const int n0 = 128;
    for (int i = 0; i < n0; ++i) {
        const double th = c.T0 * static_cast<double>(i) / static_cast<double>(n0);
        pts[th] = eval(th);
    }

    struct Cell {
        double l, r;
        int depth;
    };
    std::vector<Cell> work;
    work.reserve(2 * n0);
    {
        auto it = pts.begin();
        for (int i = 0; i < n0; ++i) {
            const double l = it->first;
            ++it;
            const double r = (it == pts.end()) ? c.T0 : it->first;
            work.push_back({l, r, 0});
        }
    }
    auto value_of = [&](double th) { return pts.at(th < c.T0 ? th : 0.0); };
    while (!work.empty()) {
        const Cell cell = work.back();
        work.pop_back();
        const auto vl = value_of(cell.l);
        const auto vr = value_of(cell.r);
        if (vl && vr && detail::circle_gap(*vl, *vr, c.T0) <= delta) continue;
        if (!vl && !vr) continue;  // interior of a failed region
        if (cell.depth >= 20) continue;  // frontier; flagged below
        const double m = 0.5 * (cell.l + cell.r);
        if (m <= cell.l || m >= cell.r) continue;  // phase resolution exhausted
        pts[m] = eval(m);
        work.push_back({cell.l, m, cell.depth + 1});
        work.push_back({m, cell.r, cell.depth + 1});
    }

    PRCurve out;
    out.A = A;
    out.T0 = c.T0;
    out.delta = delta;
    for (const auto& [th, v] : pts) {
        if (!v) {
            out.not_in_basin.push_back(th);
            continue;
        }
        out.grid.push_back(th);
        out.values.push_back(*v);
    }
    if (out.grid.empty()) throw NotInBasin("compute_prc: no grid point landed");

    out.lift.resize(out.grid.size());
    out.lift[0] = out.values[0];
    for (std::size_t i = 1; i < out.grid.size(); ++i)
        out.lift[i] =
            out.lift[i - 1] + detail::circle_increment(out.values[i - 1], out.values[i], c.T0);
    const double closing =
        detail::circle_increment(out.values.back(), out.values.front(), c.T0);
    out.winding = static_cast<int>(
        std::lround((out.lift.back() + closing - out.lift.front()) / c.T0));

    out.gap_frontier.assign(out.grid.size(), 0);
    for (std::size_t i = 0; i < out.grid.size(); ++i) {
        const double vr = (i + 1 < out.grid.size()) ? out.values[i + 1] : out.values.front();
        if (detail::circle_gap(out.values[i], vr, c.T0) > delta) out.gap_frontier[i] = 1;
    }
    // Gaps that straddle a failed point are unresolved as well.
    for (double th : out.not_in_basin) {
        auto it = std::upper_bound(out.grid.begin(), out.grid.end(), th);
        const std::size_t i =
            (it == out.grid.begin()) ? out.grid.size() - 1
                                     : static_cast<std::size_t>(it - out.grid.begin()) - 1;
        out.gap_frontier[i] = 1;
    }
    return out;
}

// Vertical shift by T: values move by T mod T0, the lift by T exactly.
inline PRCurve shift_prc(const PRCurve& prc, double T) {
    PRCurve out = prc;
    out.T = prc.T + T;
    for (std::size_t i = 0; i < out.lift.size(); ++i) {
        out.lift[i] = prc.lift[i] + T;
        out.values[i] = prc.wrap(prc.values[i] + T);
    }
    return out;
}

struct ReturnPoint {
    double theta = 0.0;
    double image = 0.0;
    int iterations = 0;
    bool returned = false;
};

struct ReturnMap {
    double a = 0.0;
    double b = 0.0;
    std::vector<ReturnPoint> points;
};

// First-return map of f_T to [a, b]: from each curve grid phase inside the
// interval, iterate f_T until the image re-enters the interval. Points that
// never return within the budget are recorded with returned == false.
inline ReturnMap first_return_map(const PRCurve& prc, double T, double a, double b,
                                  int max_iter = 500) {
    if (!(0.0 <= a && a < b && b < prc.T0))
        throw std::invalid_argument("first_return_map: need 0 <= a < b < T0");
    const double shift = T - prc.T;
    auto f_T = [&](double th) { return prc.wrap(prc.lift_at(th) + shift); };
    ReturnMap rm;
    rm.a = a;
    rm.b = b;
    for (std::size_t i = 0; i < prc.grid.size(); ++i) {
        const double th = prc.grid[i];
        if (th < a || th > b) continue;
        ReturnPoint rp;
        rp.theta = th;
        double x = th;
        for (int it = 1; it <= max_iter; ++it) {
            x = f_T(x);
            if (x >= a && x <= b) {
                rp.image = x;
                rp.iterations = it;
                rp.returned = true;
                break;
            }
        }
        rm.points.push_back(rp);
    }
    return rm;
}

namespace detail {

// A stable fixed point of the return map: a diagonal crossing between
// adjacent same-branch graph points with local slope magnitude below one.
inline bool has_sink_crossing(const ReturnMap& rm) {
    for (std::size_t i = 0; i + 1 < rm.points.size(); ++i) {
        const ReturnPoint& l = rm.points[i];
        const ReturnPoint& r = rm.points[i + 1];
        if (!l.returned || !r.returned) continue;
        if (l.iterations != r.iterations) continue;  // different branches
        const double gl = l.image - l.theta;
        const double gr = r.image - r.theta;
        if (gl * gr > 0.0) continue;
        if (gl == 0.0 && gr == 0.0) continue;
        const double dth = r.theta - l.theta;
        if (dth <= 0.0) continue;
        // Margin excludes neutral crossings: a rigid rotation composed over
        // several returns has slope exactly 1, and the measured curve sits a
        // few grid-interpolation ulps on either side of it.
        if (std::abs((r.image - l.image) / dth) < 1.0 - 1e-3) return true;
    }
    return false;
}

}  // namespace detail

// Fraction of drive periods, uniform on [T0, 2T0), whose shifted curve has a
// stable fixed point of the first-return map to [a, b].
inline double plateau_sink_probability(double A, int n_T, double a, double b,
                                       const LimitCycle& c, const HHParams& p) {
    if (n_T < 10) throw std::invalid_argument("plateau_sink_probability: n_T >= 10");
    const PRCurve prc = compute_prc(A, c, p);
    int sinks = 0;
    for (int j = 0; j < n_T; ++j) {
        const double T = c.T0 * (1.0 + static_cast<double>(j) / static_cast<double>(n_T));
        if (detail::has_sink_crossing(first_return_map(prc, T, a, b))) ++sinks;
    }
    return static_cast<double>(sinks) / static_cast<double>(n_T);
}

struct FactorProfile {
    std::vector<double> phase;
    std::vector<double> fprime;      // |f'| by central difference of landed values
    std::vector<double> dtheta_mag;  // |Dtheta(K_A(gamma(t)))|
    std::vector<double> speed;       // |gamma'(t)|
    std::vector<double> sin_angle;   // |sin angle(gamma'(t), E_ss at the landing base)|
    std::vector<std::uint8_t> ok;    // 0 where a landing failed
};

// The three factors of the derivative of f alongside a directly differenced
// |f'|: |f'(t)| = |Dtheta(K_A(gamma(t)))| * |gamma'(t)| * |sin angle(t)|.
inline FactorProfile prc_factors(double A, const LimitCycle& c, const HHParams& p,
                                 const std::vector<double>& phases, double h = 5e-3) {
    if (!c.has_frames)
        throw std::invalid_argument("prc_factors: strong-stable frames required");
    const detail::PrcLander lander{c};
    KickSpec ks;
    ks.amplitude = A;
    auto land_at = [&](double theta) {
        return lander.land(kick(c.point_at_exact(c.wrap(theta)), ks, c.params));
    };

    FactorProfile out;
    for (double th : phases) {
        out.phase.push_back(th);
        const Vec4 x = c.point_at_exact(th);
        const Vec4 v = hh_field(x, p);
        const double speed = norm2(v);
        const Vec4 y = kick(x, ks, c.params);

        const auto f0 = land_at(th);
        const auto fp = land_at(th + h);
        const auto fm = land_at(th - h);
        if (!f0 || !fp || !fm) {
            out.fprime.push_back(std::numeric_limits<double>::quiet_NaN());
            out.dtheta_mag.push_back(std::numeric_limits<double>::quiet_NaN());
            out.speed.push_back(speed);
            out.sin_angle.push_back(std::numeric_limits<double>::quiet_NaN());
            out.ok.push_back(0);
            continue;
        }
        const double df = detail::circle_increment(*fm, *fp, c.T0);
        out.fprime.push_back(std::abs(df) / (2.0 * h));

        const Vec4 grad = phase_gradient(y, c);
        out.dtheta_mag.push_back(norm2(grad));
        out.speed.push_back(speed);

        const Vec4 n = c.normal_at(*f0);
        out.sin_angle.push_back(std::abs(dot(v, n)) / speed);
        out.ok.push_back(1);
    }
    return out;
}

// Critical kick amplitude: the A at which some kicked cycle point hits the
// stable manifold of the unstable fixed point, located by minimizing the
// closest approach of kicked trajectories to the fixed point over (A, theta).
inline double find_A_crit(double a_lo, double a_hi, const LimitCycle& c, const HHParams& p,
                          double tol = 1e-4) {
    if (!(a_lo < a_hi)) throw std::invalid_argument("find_A_crit: empty bracket");
    auto field = [&p](const Vec4& x, Vec4& dx) { dx = hh_field(x, p); };
    const Vec4 fp = c.fixed_point;

    // Closest approach to the fixed point along the trajectory of one kicked
    // cycle point, sampled in chunks and polished by a parabola in t.
    auto dist_min_theta = [&](double A, double theta) {
        Vec4 y = c.point_at_exact(c.wrap(theta));
        y[0] += A;
        const double dt = 0.05;
        const int n_chunks = static_cast<int>(3.0 * c.T0 / dt);
        std::vector<double> d;
        d.reserve(static_cast<std::size_t>(n_chunks) + 1);
        d.push_back(norm2(y - fp));
        for (int k = 0; k < n_chunks; ++k) {
            y = rkf45<4>(field, y, 0.0, dt, c.cfg).x;
            d.push_back(norm2(y - fp));
        }
        const std::size_t i =
            static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
        double best = d[i];
        if (i > 0 && i + 1 < d.size()) {
            // Parabolic minimum through three consecutive squared distances.
            const double p2 = d[i - 1] * d[i - 1], q2 = best * best,
                         r2 = d[i + 1] * d[i + 1];
            const double den = p2 - 2.0 * q2 + r2;
            if (den > 0.0) {
                const double s = 0.5 * (p2 - r2) / den;
                const double v2 = q2 - 0.25 * (p2 - r2) * s;
                if (s > -1.0 && s < 1.0 && v2 > 0.0 && v2 < q2) best = std::sqrt(v2);
            }
        }
        return best;
    };

    auto refine_theta = [&](double A, double th0) {
        double lo = th0 - 0.1, hi = th0 + 0.1;
        for (int it = 0; it < 25; ++it) {
            const double m1 = lo + 0.381966011250105 * (hi - lo);
            const double m2 = hi - 0.381966011250105 * (hi - lo);
            if (dist_min_theta(A, m1) < dist_min_theta(A, m2))
                hi = m2;
            else
                lo = m1;
        }
        return 0.5 * (lo + hi);
    };

    // Every evaluation rescans the whole cycle, then polishes both the scan
    // winner and the previous winner. The valley in theta narrows sharply
    // near grazing; without the carried-over candidate a fixed grid skips
    // over it, and without the rescan the carried-over candidate can track a
    // secondary valley and report a spurious interior minimum.
    double warm_theta = -1.0;
    auto objective = [&](double A) {
        double best = std::numeric_limits<double>::infinity();
        double best_th = 0.0;
        for (int i = 0; i < 96; ++i) {
            const double th = c.T0 * static_cast<double>(i) / 96.0;
            const double d = dist_min_theta(A, th);
            if (d < best) {
                best = d;
                best_th = th;
            }
        }
        double th_star = refine_theta(A, best_th);
        double val = dist_min_theta(A, th_star);
        if (warm_theta >= 0.0) {
            const double th_w = refine_theta(A, warm_theta);
            const double val_w = dist_min_theta(A, th_w);
            if (val_w < val) {
                val = val_w;
                th_star = th_w;
            }
        }
        warm_theta = c.wrap(th_star);
        return std::min(val, best);
    };

    // Out-of-bracket probes are clamped rather than rejected so that when
    // the objective keeps falling toward an edge the simplex rides onto the
    // edge itself instead of stalling a contraction-width short of it.
    auto clamped = [&](const std::vector<double>& v) {
        return objective(std::clamp(v[0], a_lo, a_hi));
    };
    const double w = a_hi - a_lo;
    const NelderMeadResult res =
        nelder_mead(clamped, {{a_lo + 0.35 * w}, {a_hi - 0.35 * w}}, tol, 120);
    const double a_crit = std::clamp(res.x[0], a_lo, a_hi);
    if (a_crit - a_lo < 10.0 * tol || a_hi - a_crit < 10.0 * tol)
        throw NoMinimumInBracket("find_A_crit: minimum sits on the bracket edge");
    return a_crit;
}

struct HorseshoeInterval {
    double a = 0.0;
    double b = 0.0;
    int branches = 0;  // monotone branches mapping across [a, b]
};

// Intervals I between critical points of the lift such that f_T(I) covers I
// with at least two monotone surjective branches.
inline std::vector<HorseshoeInterval> detect_horseshoe(const PRCurve& prc, double T) {
    std::vector<HorseshoeInterval> out;
    const std::size_t n = prc.grid.size();
    if (n < 3) return out;

    // Critical points: slope sign changes on the refined grid, polished by a
    // local parabola; the domain endpoints bound the outer monotone branches.
    std::vector<double> ct{prc.grid.front()}, cv{prc.lift.front()};
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double sl = prc.lift[i] - prc.lift[i - 1];
        const double sr = prc.lift[i + 1] - prc.lift[i];
        if (sl * sr >= 0.0) continue;
        const double t0 = prc.grid[i - 1], t1 = prc.grid[i], t2 = prc.grid[i + 1];
        const double v0 = prc.lift[i - 1], v1 = prc.lift[i], v2 = prc.lift[i + 1];
        double tc = t1, vc = v1;
        const double den = (t1 - t0) * (v2 - v1) - (t2 - t1) * (v1 - v0);
        if (den != 0.0) {
            const double num = (t1 - t0) * (t1 - t0) * (v2 - v1) -
                               (t2 - t1) * (t2 - t1) * (v0 - v1);
            const double cand = t1 - 0.5 * num / den;
            if (cand > t0 && cand < t2) {
                tc = cand;
                vc = prc.lift_at(cand);
                if ((sl > 0.0 && v1 > vc) || (sl < 0.0 && v1 < vc)) vc = v1;
            }
        }
        ct.push_back(tc);
        cv.push_back(vc);
    }
    ct.push_back(prc.grid.back());
    cv.push_back(prc.lift.back());
    if (ct.size() < 3) return out;  // no interior critical point, no folding

    const double shift = T - prc.T;
    const std::size_t m = ct.size();
    for (std::size_t i = 0; i + 2 < m; ++i) {
        for (std::size_t j = i + 2; j < m && j <= i + 8; ++j) {
            const double a = ct[i], b = ct[j];
            if (!(b - a > 0.0) || b - a >= prc.T0) continue;
            int covering = 0;
            for (std::size_t k = i; k < j; ++k) {
                const double lo = std::min(cv[k], cv[k + 1]) + shift;
                const double hi = std::max(cv[k], cv[k + 1]) + shift;
                const double m_lo = std::ceil((lo - a) / prc.T0);
                const double m_hi = std::floor((hi - b) / prc.T0);
                if (m_lo <= m_hi) ++covering;
            }
            if (covering >= 2) out.push_back({a, b, covering});
        }
    }
    return out;
}

}  // namespace hhkick
