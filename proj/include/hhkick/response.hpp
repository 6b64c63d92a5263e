#pragma once

// Largest Lyapunov exponent of the stroboscopic map, response classification,
// (A, T) sweeps, response-type probabilities over a period grid, and orbit
// autocovariance.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <hhkick/cycle.hpp>
#include <hhkick/forcing.hpp>
#include <hhkick/types.hpp>

namespace hhkick {

enum class ResponseClass { Chaos, Entrainment, Rotation, Ambiguous };

inline const char* to_string(ResponseClass c) {
    switch (c) {
        case ResponseClass::Chaos: return "chaos";
        case ResponseClass::Entrainment: return "entrainment";
        case ResponseClass::Rotation: return "rotation";
        default: return "ambiguous";
    }
}

struct LyapunovEstimate {
    double lambda_hat = 0.0;  // per unit time: per-iterate log growth / T
    double std_error = 0.0;
    int n_steps = 0;
    ResponseClass classification = ResponseClass::Ambiguous;
};

namespace detail {

inline ResponseClass classify_value(double lambda_hat, double eps) {
    if (lambda_hat > 3.0 * eps) return ResponseClass::Chaos;
    if (lambda_hat < -3.0 * eps) return ResponseClass::Entrainment;
    if (std::abs(lambda_hat) < eps / 3.0) return ResponseClass::Rotation;
    return ResponseClass::Ambiguous;
}

}  // namespace detail

inline ResponseClass classify(const LyapunovEstimate& e) {
    if (!(e.std_error > 0.0))
        throw std::invalid_argument("classify: standard error must be positive");
    return detail::classify_value(e.lambda_hat, e.std_error);
}

// Largest Lyapunov exponent by tangent-vector growth along a driven orbit,
// renormalizing every iterate. The estimate averages n_steps post-transient
// log increments; the standard error comes from 10 batch means, which damps
// the serial correlation of the increments.
inline LyapunovEstimate lambda_max(const DriveConfig& d, const HHParams& p,
                                   int n_steps = 1000, int n_transient = 100,
                                   const IntegratorConfig& cfg = {},
                                   std::optional<Vec4> start = std::nullopt) {
    d.validate();
    if (n_steps < 100) throw std::invalid_argument("lambda_max: n_steps >= 100");
    if (n_transient < 0) throw std::invalid_argument("lambda_max: n_transient >= 0");

    Vec4 x = start ? *start : find_limit_cycle(p, 256, cfg).samples[0].x;
    Vec4 w{0.5, 0.5, -0.5, 0.5};
    std::vector<double> logs(static_cast<std::size_t>(n_steps));
    try {
        for (int k = 0; k < n_transient; ++k) {
            const DrivenStep st = time_T_map_tangent(x, w, d, p, cfg);
            if (!all_finite(st.x)) throw NonFiniteState("driven state left R^4");
            x = st.x;
            w = st.w;
        }
        for (auto& lg : logs) {
            const DrivenStep st = time_T_map_tangent(x, w, d, p, cfg);
            if (!all_finite(st.x)) throw NonFiniteState("driven state left R^4");
            x = st.x;
            w = st.w;
            lg = st.log_growth;
        }
    } catch (const NumericalError& err) {
        throw OrbitEscaped(std::string("lambda_max: ") + err.what());
    }

    double total = 0.0;
    for (double lg : logs) total += lg;

    LyapunovEstimate e;
    e.n_steps = n_steps;
    e.lambda_hat = total / (static_cast<double>(n_steps) * d.T);

    const std::size_t nb = 10;
    const std::size_t m = logs.size() / nb;
    std::array<double, 10> b{};
    for (std::size_t j = 0; j < nb; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < m; ++k) s += logs[j * m + k];
        b[j] = s / (static_cast<double>(m) * d.T);
    }
    double bm = 0.0;
    for (double v : b) bm += v;
    bm /= static_cast<double>(nb);
    double var = 0.0;
    for (double v : b) var += (v - bm) * (v - bm);
    var /= static_cast<double>(nb - 1);
    e.std_error = std::sqrt(var / static_cast<double>(nb));

    e.classification = detail::classify_value(e.lambda_hat, e.std_error);
    return e;
}

struct SweepRow {
    double A = 0.0;
    double T = 0.0;
    LyapunovEstimate estimate;
    std::string error;  // empty on success; cell kept so sweeps are restartable
};

// One exponent estimate per grid period, each with its own transient. Failed
// cells record the error and the sweep continues.
inline std::vector<SweepRow> sweep(double A, const std::vector<double>& T_grid,
                                   const HHParams& p, const IntegratorConfig& cfg = {},
                                   int n_steps = 1000, int n_transient = 100) {
    if (T_grid.empty()) throw std::invalid_argument("sweep: empty period grid");
    const Vec4 x0 = find_limit_cycle(p, 256, cfg).samples[0].x;
    std::vector<SweepRow> rows(T_grid.size());
    for (std::size_t i = 0; i < T_grid.size(); ++i) {
        SweepRow& row = rows[i];
        row.A = A;
        row.T = T_grid[i];
        DriveConfig d;
        d.kick.amplitude = A;
        d.T = T_grid[i];
        try {
            row.estimate = lambda_max(d, p, n_steps, n_transient, cfg, x0);
        } catch (const std::exception& err) {
            row.error = err.what();
        }
    }
    return rows;
}

struct ResponseProbabilities {
    double A = 0.0;
    double p_chaos = 0.0;
    double p_entrain = 0.0;
    double p_rotation = 0.0;
    double p_ambiguous = 0.0;
    int n_grid = 0;
    int n_escaped = 0;  // escaped cells are counted under p_ambiguous
};

namespace detail {

inline ResponseProbabilities probabilities_impl(const KickSpec& kick, int n_grid,
                                                const HHParams& p,
                                                const IntegratorConfig& cfg, int n_steps,
                                                int n_transient) {
    if (n_grid < 50) throw std::invalid_argument("response_probabilities: n_grid >= 50");
    const LimitCycle c = find_limit_cycle(p, 256, cfg);
    if (kick.shape == KickShape::Box && !(kick.t0 < c.T0))
        throw std::invalid_argument("pulse width must be shorter than the smallest period");

    ResponseProbabilities out;
    out.A = kick.amplitude;
    out.n_grid = n_grid;
    int counts[4] = {0, 0, 0, 0};
    for (int j = 0; j < n_grid; ++j) {
        DriveConfig d;
        d.kick = kick;
        d.T = c.T0 * (1.0 + 7.0 * static_cast<double>(j) / static_cast<double>(n_grid - 1));
        ResponseClass cls;
        try {
            cls = lambda_max(d, p, n_steps, n_transient, cfg, c.samples[0].x).classification;
        } catch (const OrbitEscaped&) {
            cls = ResponseClass::Ambiguous;
            ++out.n_escaped;
        }
        ++counts[static_cast<int>(cls)];
    }
    const double n = static_cast<double>(n_grid);
    out.p_chaos = counts[static_cast<int>(ResponseClass::Chaos)] / n;
    out.p_entrain = counts[static_cast<int>(ResponseClass::Entrainment)] / n;
    out.p_rotation = counts[static_cast<int>(ResponseClass::Rotation)] / n;
    out.p_ambiguous = counts[static_cast<int>(ResponseClass::Ambiguous)] / n;
    return out;
}

}  // namespace detail

// Classification fractions over a uniform period grid on [T0, 8 T0].
inline ResponseProbabilities response_probabilities(double A, int n_grid, const HHParams& p,
                                                    const IntegratorConfig& cfg = {},
                                                    int n_steps = 1000,
                                                    int n_transient = 100) {
    KickSpec k;
    k.amplitude = A;
    return detail::probabilities_impl(k, n_grid, p, cfg, n_steps, n_transient);
}

// Empirical autocovariance C(n) = <x_{k+n} x_k> - <x>^2 for lags 0..max_lag.
inline std::vector<double> autocovariance(const std::vector<double>& series, int max_lag) {
    if (max_lag < 0) throw std::invalid_argument("autocovariance: max_lag >= 0");
    const std::size_t n = series.size();
    if (n < 1 || n < static_cast<std::size_t>(10) * static_cast<std::size_t>(max_lag))
        throw std::invalid_argument("autocovariance: series length must be >= 10*max_lag");
    double mu = 0.0;
    for (double v : series) mu += v;
    mu /= static_cast<double>(n);
    std::vector<double> c(static_cast<std::size_t>(max_lag) + 1);
    for (std::size_t lag = 0; lag < c.size(); ++lag) {
        double s = 0.0;
        const std::size_t m = n - lag;
        for (std::size_t k = 0; k < m; ++k) s += series[k + lag] * series[k];
        c[lag] = s / static_cast<double>(m) - mu * mu;
    }
    return c;
}

struct PulseStudyRow {
    double t0 = 0.0;
    ResponseProbabilities probs;
};

// Response-type probabilities under box pulses of the listed widths, with the
// height charge-matched to A/t0.
inline std::vector<PulseStudyRow> pulse_duration_study(double A,
                                                       const std::vector<double>& t0_list,
                                                       int n_grid, const HHParams& p,
                                                       const IntegratorConfig& cfg = {},
                                                       int n_steps = 1000,
                                                       int n_transient = 100) {
    std::vector<PulseStudyRow> rows(t0_list.size());
    for (std::size_t i = 0; i < t0_list.size(); ++i) {
        KickSpec k;
        k.amplitude = A;
        k.shape = KickShape::Box;
        k.t0 = t0_list[i];
        rows[i].t0 = t0_list[i];
        rows[i].probs = detail::probabilities_impl(k, n_grid, p, cfg, n_steps, n_transient);
    }
    return rows;
}

}  // namespace hhkick
